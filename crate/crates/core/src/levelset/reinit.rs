use crate::error::{Error, Result};
use crate::volume::Grid2;

/// Zero-level segments of `phi` by marching squares, in pixel coordinates.
/// Isolated exact zeros are returned as degenerate segments.
pub fn zero_crossing_segments(phi: &Grid2<f64>) -> Vec<[[f64; 2]; 2]> {
    let (nx, ny) = (phi.nx, phi.ny);
    let mut segs = Vec::new();
    let cross = |a: f64, b: f64| (a < 0.0) != (b < 0.0);
    for y in 0..ny.saturating_sub(1) {
        for x in 0..nx.saturating_sub(1) {
            let v = [
                phi.get(x, y),
                phi.get(x + 1, y),
                phi.get(x + 1, y + 1),
                phi.get(x, y + 1),
            ];
            let corners = [
                [x as f64, y as f64],
                [x as f64 + 1.0, y as f64],
                [x as f64 + 1.0, y as f64 + 1.0],
                [x as f64, y as f64 + 1.0],
            ];
            let mut pts: Vec<[f64; 2]> = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (v[e], v[(e + 1) % 4]);
                if cross(a, b) {
                    let t = a / (a - b);
                    let (p, q) = (corners[e], corners[(e + 1) % 4]);
                    pts.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                }
            }
            match pts.len() {
                2 => segs.push([pts[0], pts[1]]),
                4 => {
                    // saddle: pair by the sign of the cell centre
                    let centre = 0.25 * v.iter().sum::<f64>();
                    if (centre < 0.0) == (v[0] < 0.0) {
                        segs.push([pts[0], pts[3]]);
                        segs.push([pts[1], pts[2]]);
                    } else {
                        segs.push([pts[0], pts[1]]);
                        segs.push([pts[2], pts[3]]);
                    }
                }
                _ => {}
            }
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            if phi.get(x, y) == 0.0 {
                let p = [x as f64, y as f64];
                segs.push([p, p]);
            }
        }
    }
    segs
}

#[derive(PartialEq)]
struct Trial(f64, usize);

impl Eq for Trial {}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trial {
    // reversed for a min-heap
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Upwind eikonal update. Each axis contributes `(weight, centre)` with
/// `weight * (u - centre)^2`; second-order terms drop back to the first-order
/// solution when the quadratic has no admissible root.
fn eikonal_update(terms: &[(f64, f64); 2]) -> f64 {
    let solve = |ts: &[(f64, f64)]| -> Option<f64> {
        let (mut a, mut b, mut c) = (0.0, 0.0, -1.0);
        for &(w, m) in ts {
            a += w;
            b -= 2.0 * w * m;
            c += w * m * m;
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let u = (-b + disc.sqrt()) / (2.0 * a);
        ts.iter().all(|&(_, m)| u >= m).then_some(u)
    };
    // (first-order centre, second-order centre or inf)
    let axes: Vec<(f64, f64)> = terms.iter().filter(|t| t.0.is_finite()).map(|t| (t.0, t.1)).collect();
    if axes.is_empty() {
        return f64::INFINITY;
    }
    let second: Vec<(f64, f64)> = axes
        .iter()
        .map(|&(d1, d2)| {
            if d2.is_finite() && d2 <= d1 {
                (2.25, (4.0 * d1 - d2) / 3.0)
            } else {
                (1.0, d1)
            }
        })
        .collect();
    if let Some(u) = solve(&second) {
        return u;
    }
    let first: Vec<(f64, f64)> = axes.iter().map(|&(d1, _)| (1.0, d1)).collect();
    if let Some(u) = solve(&first) {
        return u;
    }
    first.iter().map(|t| t.1).fold(f64::INFINITY, f64::min) + 1.0
}

/// Replaces `phi` by the signed distance to its own zero level set, clamped
/// to `±band`. Cells touching the interface get the distance to the line
/// through their axis crossings so the crossings stay put; the rest is
/// fast-marched outward.
pub fn reinitialize(phi: &Grid2<f64>, band: f64) -> Result<Grid2<f64>> {
    let segs = zero_crossing_segments(phi);
    if segs.is_empty() {
        return Err(Error::Empty("level set has no zero crossing".into()));
    }
    let (nx, ny) = (phi.nx, phi.ny);
    let mut dist = vec![f64::INFINITY; nx * ny];
    let mut frozen = vec![false; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let v = phi.get(x, y);
            let (xi, yi) = (x as isize, y as isize);
            // fractional distance to the nearest sign change along each axis
            let axis = |dx: isize, dy: isize| {
                [1isize, -1]
                    .iter()
                    .filter_map(|&sgn| {
                        let (ax, ay) = (xi + sgn * dx, yi + sgn * dy);
                        if !phi.in_bounds(ax, ay) {
                            return None;
                        }
                        let w = phi.get(ax as usize, ay as usize);
                        ((w < 0.0) != (v < 0.0)).then(|| v / (v - w))
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            let (tx, ty) = if v == 0.0 { (0.0, 0.0) } else { (axis(1, 0), axis(0, 1)) };
            if !tx.is_finite() && !ty.is_finite() {
                continue;
            }
            // gradient across the crossings; central differences where larger
            let cross = |t: f64| if t.is_finite() && t > 0.0 { v.abs() / t } else { 0.0 };
            let gx = 0.5 * (phi.get_clamped(xi + 1, yi) - phi.get_clamped(xi - 1, yi));
            let gy = 0.5 * (phi.get_clamped(xi, yi + 1) - phi.get_clamped(xi, yi - 1));
            let gn = gx.hypot(gy).max(cross(tx).hypot(cross(ty)));
            let d = if v == 0.0 || gn <= 0.0 {
                0.0
            } else {
                (v.abs() / gn).min(1.0)
            };
            dist[x + nx * y] = d;
            frozen[x + nx * y] = true;
        }
    }

    let mut heap = std::collections::BinaryHeap::new();
    let neighbours = |i: usize| {
        let (x, y) = (i % nx, i / nx);
        [
            (x > 0).then(|| i - 1),
            (x + 1 < nx).then(|| i + 1),
            (y > 0).then(|| i - nx),
            (y + 1 < ny).then(|| i + nx),
        ]
    };
    let inside: Vec<bool> = phi.data.iter().map(|&v| v < 0.0).collect();
    // distances seen from cell `i`: cells across the interface count negative
    let accepted = |dist: &[f64], frozen: &[bool], i: usize, x: isize, y: isize| {
        if x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny && frozen[x as usize + nx * y as usize] {
            let j = x as usize + nx * y as usize;
            if inside[j] == inside[i] {
                dist[j]
            } else {
                -dist[j]
            }
        } else {
            f64::INFINITY
        }
    };
    let trial_value = |dist: &[f64], frozen: &[bool], i: usize| {
        let (x, y) = ((i % nx) as isize, (i / nx) as isize);
        let axis = |dx: isize, dy: isize| {
            let (p1, p2) = (
                accepted(dist, frozen, i, x + dx, y + dy),
                accepted(dist, frozen, i, x + 2 * dx, y + 2 * dy),
            );
            let (m1, m2) = (
                accepted(dist, frozen, i, x - dx, y - dy),
                accepted(dist, frozen, i, x - 2 * dx, y - 2 * dy),
            );
            if p1 <= m1 {
                (p1, p2)
            } else {
                (m1, m2)
            }
        };
        eikonal_update(&[axis(1, 0), axis(0, 1)])
    };
    for i in 0..nx * ny {
        if frozen[i] {
            for j in neighbours(i).into_iter().flatten() {
                if !frozen[j] {
                    let t = trial_value(&dist, &frozen, j);
                    if t < dist[j] {
                        dist[j] = t;
                        heap.push(Trial(t, j));
                    }
                }
            }
        }
    }
    while let Some(Trial(t, i)) = heap.pop() {
        if frozen[i] || t > dist[i] {
            continue;
        }
        frozen[i] = true;
        if t > band {
            continue;
        }
        for j in neighbours(i).into_iter().flatten() {
            if !frozen[j] {
                let u = trial_value(&dist, &frozen, j);
                if u < dist[j] {
                    dist[j] = u;
                    heap.push(Trial(u, j));
                }
            }
        }
    }

    Ok(Grid2 {
        nx,
        ny,
        data: phi
            .data
            .iter()
            .zip(dist)
            .map(|(&v, d)| {
                let d = d.min(band);
                if v < 0.0 {
                    -d
                } else {
                    d
                }
            })
            .collect(),
    })
}

/// Godunov upwind gradient magnitude at `(x, y)`, selecting one-sided
/// differences by the sign of `phi`.
pub fn godunov_grad_norm(phi: &Grid2<f64>, x: usize, y: usize) -> f64 {
    let (xi, yi) = (x as isize, y as isize);
    let c = phi.get(x, y);
    let a = c - phi.get_clamped(xi - 1, yi);
    let b = phi.get_clamped(xi + 1, yi) - c;
    let cc = c - phi.get_clamped(xi, yi - 1);
    let d = phi.get_clamped(xi, yi + 1) - c;
    if c >= 0.0 {
        (a.max(0.0).powi(2).max(b.min(0.0).powi(2)) + cc.max(0.0).powi(2).max(d.min(0.0).powi(2))).sqrt()
    } else {
        (a.min(0.0).powi(2).max(b.max(0.0).powi(2)) + cc.min(0.0).powi(2).max(d.max(0.0).powi(2))).sqrt()
    }
}
