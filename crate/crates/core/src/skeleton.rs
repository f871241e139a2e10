//! Fast marching, sub-voxel centrelines and curved planar reformation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};
use crate::volume::{
    connected_components, edt_squared_3d, trilinear_sample, BinaryMask, Connectivity, Geometry, Volume3D,
};

/// Euclidean distance (mm) from each inside voxel to the nearest outside
/// voxel, less half the smallest spacing so a lone voxel scores half a
/// voxel; 0 outside.
pub fn distance_field(mask: &BinaryMask) -> Result<Volume3D> {
    if mask.is_empty() {
        return Err(Error::Empty("distance field of an empty mask".into()));
    }
    let g = mask.geometry().clone();
    let outside: Vec<bool> = mask.data().iter().map(|&b| !b).collect();
    if !outside.iter().any(|&b| b) {
        return Err(Error::InvalidArgument("mask has no background voxels".into()));
    }
    let d2 = edt_squared_3d(&BinaryMask::from_vec(g.clone(), outside)?);
    let half = 0.5 * g.min_spacing();
    let data = d2
        .iter()
        .zip(mask.data())
        .map(|(&d, &m)| if m { d.sqrt() - half } else { 0.0 })
        .collect();
    Volume3D::from_vec(g, data)
}

/// First-arrival times of a fast march.
#[derive(Clone, Debug)]
pub struct ArrivalField {
    /// Arrival time per voxel; `+inf` where unreachable.
    pub t: Volume3D,
    /// Voxel indices in the order they were accepted.
    pub order: Vec<usize>,
    pub sources: Vec<usize>,
}

impl ArrivalField {
    pub fn at(&self, idx: usize) -> f64 {
        self.t.data()[idx]
    }
}

#[derive(PartialEq)]
struct Trial(f64, usize);

impl Eq for Trial {}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trial {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Solves `sum ((T - a_i) / h_i)^2 = 1 / F^2` over the upwind neighbours,
/// dropping the largest until the root is admissible.
fn upwind_update(mut terms: Vec<(f64, f64)>, speed: f64) -> f64 {
    terms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rhs = 1.0 / (speed * speed);
    while !terms.is_empty() {
        let (mut a, mut b, mut c) = (0.0, 0.0, -rhs);
        for &(t, h) in &terms {
            let w = 1.0 / (h * h);
            a += w;
            b -= 2.0 * w * t;
            c += w * t * t;
        }
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let u = (-b + disc.sqrt()) / (2.0 * a);
            if u >= terms.last().unwrap().0 {
                return u;
            }
        }
        terms.pop();
    }
    f64::INFINITY
}

/// Fast marching (second-order upwind) for `|grad T| = 1 / speed` from voxel sources.
pub fn fast_march(speed: &Volume3D, sources: &[[usize; 3]]) -> Result<ArrivalField> {
    let g = speed.geometry();
    if speed.data().iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("speed must be finite and >= 0".into()));
    }
    if !speed.data().iter().any(|&s| s > 0.0) {
        return Err(Error::InvalidArgument("speed is zero everywhere".into()));
    }
    if sources.is_empty() {
        return Err(Error::InvalidArgument("fast march needs at least one source".into()));
    }
    let mut src = Vec::with_capacity(sources.len());
    for s in sources {
        if s[0] >= g.dims[0] || s[1] >= g.dims[1] || s[2] >= g.dims[2] {
            return Err(Error::InvalidArgument(format!("source {s:?} outside the volume")));
        }
        let idx = g.index(s[0], s[1], s[2]);
        if speed.data()[idx] <= 0.0 {
            return Err(Error::InvalidArgument(format!("source {s:?} has zero speed")));
        }
        src.push(idx);
    }
    march_indices(speed.data(), g, &src)
}

/// Voxels within this many (smallest) spacings of a source start from the
/// straight-line travel time.
const EXACT_INIT_RADIUS: f64 = 2.0;

/// Second-order upwind update over `(t1, t2, h)` per axis, where `t2` is the
/// accepted value two steps away (or `inf`).
fn second_order_update(terms: &[(f64, f64, f64)], speed: f64) -> Option<f64> {
    let rhs = 1.0 / (speed * speed);
    let (mut a, mut b, mut c) = (0.0, 0.0, -rhs);
    let mut centres = Vec::new();
    for &(t1, t2, h) in terms {
        let (w, m) = if t2.is_finite() && t2 <= t1 {
            (2.25 / (h * h), (4.0 * t1 - t2) / 3.0)
        } else {
            (1.0 / (h * h), t1)
        };
        a += w;
        b -= 2.0 * w * m;
        c += w * m * m;
        centres.push(m);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let u = (-b + disc.sqrt()) / (2.0 * a);
    centres.iter().all(|&m| u >= m).then_some(u)
}

fn march_indices(speed: &[f64], g: &Geometry, sources: &[usize]) -> Result<ArrivalField> {
    let n = g.len();
    let [nx, ny, nz] = g.dims;
    let mut t = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        t[s] = 0.0;
        heap.push(Trial(0.0, s));
    }
    let reach = EXACT_INIT_RADIUS * g.min_spacing() + 1e-9;
    let r = [0, 1, 2].map(|a| (reach / g.spacing[a]).floor() as isize);
    for &s in sources {
        let [si, sj, sk] = g.coords(s);
        let ps = g.world(si, sj, sk);
        for dk in -r[2]..=r[2] {
            for dj in -r[1]..=r[1] {
                for di in -r[0]..=r[0] {
                    let Some(q) = g.checked_index(si as isize + di, sj as isize + dj, sk as isize + dk) else {
                        continue;
                    };
                    let [a, b, c] = g.coords(q);
                    let dd = vec3::dist(g.world(a, b, c), ps);
                    if speed[q] > 0.0 && dd <= reach {
                        let v = dd / speed[s];
                        if v < t[q] {
                            t[q] = v;
                            heap.push(Trial(v, q));
                        }
                    }
                }
            }
        }
    }
    let mut order = Vec::new();
    let mut last = 0.0;
    while let Some(Trial(v, idx)) = heap.pop() {
        if done[idx] || v > t[idx] {
            continue;
        }
        done[idx] = true;
        debug_assert!(v >= last);
        last = v;
        order.push(idx);
        let [i, j, k] = g.coords(idx);
        let mut visit = |ii: isize, jj: isize, kk: isize| {
            let Some(nb) = g.checked_index(ii, jj, kk) else {
                return;
            };
            if done[nb] || speed[nb] <= 0.0 {
                return;
            }
            let [a, b, c] = g.coords(nb);
            let mut terms = Vec::with_capacity(3);
            let mut terms2 = Vec::with_capacity(3);
            for (axis, h) in g.spacing.iter().enumerate() {
                let lim = [nx, ny, nz][axis] as isize;
                let p = [a as isize, b as isize, c as isize];
                let mut best = (f64::INFINITY, f64::INFINITY);
                for d in [-1isize, 1] {
                    let mut q = p;
                    q[axis] += d;
                    if q[axis] < 0 || q[axis] >= lim {
                        continue;
                    }
                    let qi = g.index(q[0] as usize, q[1] as usize, q[2] as usize);
                    if done[qi] && t[qi] < best.0 {
                        let mut q2 = q;
                        q2[axis] += d;
                        let t2 = if q2[axis] >= 0 && q2[axis] < lim {
                            let qi2 = g.index(q2[0] as usize, q2[1] as usize, q2[2] as usize);
                            if done[qi2] {
                                t[qi2]
                            } else {
                                f64::INFINITY
                            }
                        } else {
                            f64::INFINITY
                        };
                        best = (t[qi], t2);
                    }
                }
                if best.0.is_finite() {
                    terms.push((best.0, *h));
                    terms2.push((best.0, best.1, *h));
                }
            }
            let u = second_order_update(&terms2, speed[nb])
                .unwrap_or_else(|| upwind_update(terms, speed[nb]))
                .max(v);
            if u < t[nb] {
                t[nb] = u;
                heap.push(Trial(u, nb));
            }
        };
        let (i, j, k) = (i as isize, j as isize, k as isize);
        visit(i - 1, j, k);
        visit(i + 1, j, k);
        visit(i, j - 1, k);
        visit(i, j + 1, k);
        visit(i, j, k - 1);
        visit(i, j, k + 1);
    }
    Ok(ArrivalField {
        t: Volume3D::from_vec(g.clone(), t)?,
        order,
        sources: sources.to_vec(),
    })
}

/// Arrival times with infinities replaced by a value above every finite
/// time, so interpolation near the support boundary stays finite.
fn finite_times(field: &ArrivalField) -> Volume3D {
    let max = field
        .t
        .data()
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, &b| a.max(b));
    let cap = 2.0 * max + 1.0;
    field.t.map(|v| if v.is_finite() { v } else { cap })
}

/// The finite 26-neighbour with the smallest arrival time, if it is below
/// the time at `v`.
fn lowest_neighbour(t: &Volume3D, v: [usize; 3]) -> Option<[usize; 3]> {
    let g = t.geometry();
    let mut best = (t.get(v[0], v[1], v[2]), None);
    for dk in -1isize..=1 {
        for dj in -1isize..=1 {
            for di in -1isize..=1 {
                let Some(q) = g.checked_index(v[0] as isize + di, v[1] as isize + dj, v[2] as isize + dk) else {
                    continue;
                };
                let tq = t.data()[q];
                if tq.is_finite() && tq < best.0 {
                    best = (tq, Some(g.coords(q)));
                }
            }
        }
    }
    best.1
}

fn grad_at(t: &Volume3D, p: Vec3) -> Vec3 {
    let s = t.spacing();
    let mut gr = [0.0; 3];
    for a in 0..3 {
        let h = 0.5 * s[a];
        let mut lo = p;
        let mut hi = p;
        lo[a] -= h;
        hi[a] += h;
        gr[a] = (trilinear_sample(t, hi) - trilinear_sample(t, lo)) / (2.0 * h);
    }
    gr
}

const GRAD_EPS: f64 = 1e-9;

/// Gradient descent on the interpolated arrival time from `start` (mm) with
/// Heun steps of half the smallest spacing. Stops once the arrival time falls
/// below one step or the path comes within a voxel of a source; the path ends
/// on that source.
pub fn backtrack(field: &ArrivalField, start: Vec3) -> Result<Vec<Vec3>> {
    let g = field.t.geometry().clone();
    let h = 0.5 * g.min_spacing();
    let t = finite_times(field);
    let sv = g.nearest_voxel(start);
    let t0 = field.t.get(sv[0], sv[1], sv[2]);
    if !t0.is_finite() {
        return Err(Error::InvalidArgument(format!("start {start:?} is unreachable")));
    }
    let sources: Vec<Vec3> = field
        .sources
        .iter()
        .map(|&i| {
            let [a, b, c] = g.coords(i);
            g.world(a, b, c)
        })
        .collect();
    let near_source = |p: Vec3| -> Option<Vec3> {
        sources
            .iter()
            .copied()
            .map(|s| (vec3::dist(s, p), s))
            .filter(|(d, _)| *d <= g.max_spacing())
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, s)| s)
    };
    let mut path = vec![start];
    if let Some(s) = near_source(start) {
        if vec3::dist(s, start) > 0.0 {
            path.push(s);
        }
        return Ok(path);
    }
    let dir = |p: Vec3| -> Option<Vec3> {
        let gr = grad_at(&t, p);
        let n = vec3::norm(gr);
        (n > GRAD_EPS).then(|| vec3::scale(gr, -1.0 / n))
    };
    let max_steps = (4.0 * t0 / h).ceil() as usize + 200;
    let mut p = start;
    let mut best = trilinear_sample(&t, p);
    let mut stalled = 0;
    for _ in 0..max_steps {
        let Some(d1) = dir(p) else {
            return Err(Error::Stagnation { partial: path });
        };
        let q = vec3::add(p, vec3::scale(d1, h));
        let d2 = dir(q).unwrap_or(d1);
        let d = vec3::normalize(vec3::add(d1, d2));
        if vec3::norm(d) < GRAD_EPS {
            return Err(Error::Stagnation { partial: path });
        }
        let mut next = vec3::add(p, vec3::scale(d, h));
        let mut tv = trilinear_sample(&t, next);
        if tv >= best {
            // interpolation kinks can trap the descent; fall back to the
            // lowest 26-neighbour of the nearest voxel
            stalled += 1;
            if let Some(q) = lowest_neighbour(&field.t, g.nearest_voxel(p)) {
                next = g.world(q[0], q[1], q[2]);
                tv = trilinear_sample(&t, next);
            }
        }
        p = next;
        path.push(p);
        if let Some(s) = near_source(p) {
            path.push(s);
            return Ok(path);
        }
        if tv < h {
            let s = sources
                .iter()
                .copied()
                .min_by(|a, b| vec3::dist(*a, p).total_cmp(&vec3::dist(*b, p)))
                .unwrap();
            path.push(s);
            return Ok(path);
        }
        if tv < best {
            best = tv;
            stalled = 0;
        } else if stalled > 20 {
            return Err(Error::Stagnation { partial: path });
        }
    }
    Err(Error::Stagnation { partial: path })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonParams {
    /// Centering exponent `p` in the speed `(D / D_max)^p`.
    pub speed_exponent: f64,
    /// Smallest geodesic length (mm) for an additional branch.
    pub branch_floor: f64,
    pub n_branches: usize,
}

impl Default for SkeletonParams {
    fn default() -> Self {
        SkeletonParams {
            speed_exponent: 4.0,
            branch_floor: 5.0,
            n_branches: 4,
        }
    }
}

impl SkeletonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_exponent > 0.0) {
            return Err(Error::Config(format!(
                "speed_exponent must be > 0, got {}",
                self.speed_exponent
            )));
        }
        if !(self.branch_floor >= 0.0) {
            return Err(Error::Config(format!(
                "branch_floor must be >= 0, got {}",
                self.branch_floor
            )));
        }
        if self.n_branches == 0 {
            return Err(Error::Config("n_branches must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Sub-voxel points (mm), root first.
    pub points: Vec<Vec3>,
    /// Local radius (mm) from the distance field.
    pub radii: Vec<f64>,
    pub parent: Option<usize>,
    /// Index into the parent's points where this branch attaches.
    pub attachment: Option<usize>,
}

impl Branch {
    pub fn length(&self) -> f64 {
        vec3::polyline_length(&self.points)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Centreline {
    pub branches: Vec<Branch>,
}

impl Centreline {
    pub fn total_length(&self) -> f64 {
        self.branches.iter().map(Branch::length).sum()
    }

    pub fn all_points(&self) -> Vec<Vec3> {
        self.branches.iter().flat_map(|b| b.points.iter().copied()).collect()
    }
}

/// Ridge voxels of the distance field: inside voxels whose distance is not
/// exceeded by any 26-neighbour.
fn ridge_voxels(d: &Volume3D) -> Vec<bool> {
    let g = d.geometry();
    let data = d.data();
    (0..g.len())
        .map(|idx| {
            let v = data[idx];
            if v <= 0.0 {
                return false;
            }
            let [i, j, k] = g.coords(idx);
            for dk in -1isize..=1 {
                for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        if let Some(nb) = g.checked_index(i as isize + di, j as isize + dj, k as isize + dk) {
                            if data[nb] > v {
                                return false;
                            }
                        }
                    }
                }
            }
            true
        })
        .collect()
}

/// Ridge voxel with the largest finite arrival time; ties go to the lower
/// index.
fn farthest_ridge(field: &ArrivalField, ridge: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, &t) in field.t.data().iter().enumerate() {
        if ridge[idx] && t.is_finite() && best.is_none_or(|(_, b)| t > b) {
            best = Some((idx, t));
        }
    }
    best
}

fn path_radii(d: &Volume3D, points: &[Vec3]) -> Vec<f64> {
    let floor = 0.5 * d.geometry().min_spacing();
    points.iter().map(|&p| trilinear_sample(d, p).max(floor)).collect()
}

/// Sub-voxel centreline of a connected mask.
///
/// The main branch joins the two ends of the longest geodesic between medial
/// ridge voxels; further branches start at the ridge voxel farthest from the
/// skeleton so far and descend the medial arrival field onto it.
pub fn extract_centreline(mask: &BinaryMask, p: &SkeletonParams) -> Result<Centreline> {
    p.validate()?;
    if mask.is_empty() {
        return Err(Error::Empty("centreline of an empty mask".into()));
    }
    let comps = connected_components(mask, Connectivity::Full);
    if comps.count() != 1 {
        return Err(Error::InvalidArgument(format!(
            "mask must be one connected component, found {}",
            comps.count()
        )));
    }
    let g = mask.geometry().clone();
    let d = distance_field(mask)?;
    let dmax = d.data().iter().fold(0.0f64, |a, &b| a.max(b));
    let unit: Vec<f64> = mask.data().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let medial: Vec<f64> = d
        .data()
        .iter()
        .map(|&v| {
            if v > 0.0 {
                (v / dmax).powf(p.speed_exponent)
            } else {
                0.0
            }
        })
        .collect();
    let ridge = ridge_voxels(&d);

    // two-pass farthest point, starting from the deepest voxel
    let start = d
        .data()
        .iter()
        .enumerate()
        .fold(
            (0usize, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        )
        .0;
    let f0 = march_indices(&unit, &g, &[start])?;
    let (a, _) = farthest_ridge(&f0, &ridge).unwrap_or((start, 0.0));
    let f1 = march_indices(&unit, &g, &[a])?;
    let (b, _) = farthest_ridge(&f1, &ridge).unwrap_or((a, 0.0));

    let world = |idx: usize| {
        let [i, j, k] = g.coords(idx);
        g.world(i, j, k)
    };
    let main_field = march_indices(&medial, &g, &[a])?;
    let mut main = backtrack(&main_field, world(b))?;
    main.reverse();
    let mut branches = vec![Branch {
        radii: path_radii(&d, &main),
        points: main,
        parent: None,
        attachment: None,
    }];

    while branches.len() < p.n_branches {
        let mut skel_idx: Vec<usize> = branches
            .iter()
            .flat_map(|br| {
                br.points.iter().map(|&q| {
                    let v = g.nearest_voxel(q);
                    g.index(v[0], v[1], v[2])
                })
            })
            .filter(|&i| mask.data()[i])
            .collect();
        skel_idx.sort_unstable();
        skel_idx.dedup();
        let reach = march_indices(&unit, &g, &skel_idx)?;
        let Some((tip, tlen)) = farthest_ridge(&reach, &ridge) else {
            break;
        };
        if tlen < p.branch_floor {
            break;
        }
        let field = march_indices(&medial, &g, &skel_idx)?;
        let mut path = backtrack(&field, world(tip))?;
        path.reverse();
        let (parent, attachment) = nearest_attachment(&branches, path[0]).unwrap();
        branches.push(Branch {
            radii: path_radii(&d, &path),
            points: path,
            parent: Some(parent),
            attachment: Some(attachment),
        });
    }
    Ok(Centreline { branches })
}

/// Branch and point index closest to `root`.
fn nearest_attachment(branches: &[Branch], root: Vec3) -> Option<(usize, usize)> {
    branches
        .iter()
        .enumerate()
        .flat_map(|(bi, br)| {
            br.points
                .iter()
                .enumerate()
                .map(move |(pi, &q)| (bi, pi, vec3::dist(q, root)))
        })
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .map(|(bi, pi, _)| (bi, pi))
}

/// Point with tangent `t` and cross-section axes `u`, `v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Vec3,
    pub t: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

fn tangents(points: &[Vec3]) -> Result<Vec<Vec3>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("frames need at least 2 points".into()));
    }
    for (i, w) in points.windows(2).enumerate() {
        if vec3::dist(w[0], w[1]) == 0.0 {
            return Err(Error::InvalidArgument(format!("duplicate consecutive points at {i}")));
        }
    }
    let n = points.len();
    Ok((0..n)
        .map(|i| {
            let (a, b) = (points[i.saturating_sub(1)], points[(i + 1).min(n - 1)]);
            vec3::normalize(vec3::sub(b, a))
        })
        .collect())
}

/// Rotation-minimizing frames by double reflection, starting from the
/// deterministic frame completing the first tangent.
pub fn rm_frames(points: &[Vec3]) -> Result<Vec<Frame>> {
    let t = tangents(points)?;
    let (u0, _) = vec3::orthonormal_frame(t[0]);
    rm_frames_from(points, u0)
}

/// Rotation-minimizing frames with an explicit initial `u` (projected onto
/// the plane normal to the first tangent).
pub fn rm_frames_from(points: &[Vec3], u0: Vec3) -> Result<Vec<Frame>> {
    let t = tangents(points)?;
    let proj = vec3::sub(u0, vec3::scale(t[0], vec3::dot(u0, t[0])));
    if vec3::norm(proj) < 1e-9 {
        return Err(Error::InvalidArgument("initial u is parallel to the tangent".into()));
    }
    let mut r = vec3::normalize(proj);
    let mut frames = Vec::with_capacity(points.len());
    frames.push(Frame {
        origin: points[0],
        t: t[0],
        u: r,
        v: vec3::cross(t[0], r),
    });
    for i in 0..points.len() - 1 {
        let v1 = vec3::sub(points[i + 1], points[i]);
        let c1 = vec3::dot(v1, v1);
        let rl = vec3::sub(r, vec3::scale(v1, 2.0 / c1 * vec3::dot(v1, r)));
        let tl = vec3::sub(t[i], vec3::scale(v1, 2.0 / c1 * vec3::dot(v1, t[i])));
        let v2 = vec3::sub(t[i + 1], tl);
        let c2 = vec3::dot(v2, v2);
        r = if c2 > 1e-18 {
            vec3::sub(rl, vec3::scale(v2, 2.0 / c2 * vec3::dot(v2, rl)))
        } else {
            rl
        };
        // strip round-off drift
        let tn = t[i + 1];
        r = vec3::normalize(vec3::sub(r, vec3::scale(tn, vec3::dot(r, tn))));
        frames.push(Frame {
            origin: points[i + 1],
            t: tn,
            u: r,
            v: vec3::cross(tn, r),
        });
    }
    Ok(frames)
}

/// Polyline resampled at uniform arc-length `step` (mm), keeping both ends.
pub fn resample_polyline(points: &[Vec3], step: f64) -> Result<Vec<Vec3>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    if points.len() < 2 {
        return Ok(points.to_vec());
    }
    let total = vec3::polyline_length(points);
    let n = (total / step).floor() as usize;
    let mut out = Vec::with_capacity(n + 2);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for s in 0..=n {
        let target = s as f64 * step;
        while seg + 1 < points.len() - 1 && seg_start + vec3::dist(points[seg], points[seg + 1]) < target {
            seg_start += vec3::dist(points[seg], points[seg + 1]);
            seg += 1;
        }
        let len = vec3::dist(points[seg], points[seg + 1]);
        let f = if len > 0.0 {
            ((target - seg_start) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(vec3::add(
            points[seg],
            vec3::scale(vec3::sub(points[seg + 1], points[seg]), f),
        ));
    }
    let last = *points.last().unwrap();
    if vec3::dist(*out.last().unwrap(), last) > 1e-9 * step.max(1.0) {
        out.push(last);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CprParams {
    /// Half side of each cross-section (mm).
    pub half_extent: f64,
    /// In-plane sample spacing (mm).
    pub spacing: f64,
}

impl Default for CprParams {
    fn default() -> Self {
        CprParams {
            half_extent: 10.0,
            spacing: 0.25,
        }
    }
}

impl CprParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_extent > 0.0) || !(self.spacing > 0.0) {
            return Err(Error::Config("cpr half_extent and spacing must be > 0".into()));
        }
        Ok(())
    }

    /// Samples per side: `2 * round(half_extent / spacing) + 1`.
    pub fn grid_size(&self) -> usize {
        2 * (self.half_extent / self.spacing).round() as usize + 1
    }
}

#[derive(Clone, Debug)]
pub struct StraightenedVolume {
    /// Cross-sections stacked along the third axis.
    pub volume: Volume3D,
    pub frames: Vec<Frame>,
}

/// Position of sample `(a, b)` of the plane at `frame`.
pub fn plane_point(frame: &Frame, a: usize, b: usize, n: usize, spacing: f64) -> Vec3 {
    let c = (n - 1) as f64 / 2.0;
    let (da, db) = ((a as f64 - c) * spacing, (b as f64 - c) * spacing);
    vec3::add(
        frame.origin,
        vec3::add(vec3::scale(frame.u, da), vec3::scale(frame.v, db)),
    )
}

/// Straightened volume: one trilinearly sampled cross-section per point.
pub fn cpr_straighten(vol: &Volume3D, points: &[Vec3], p: &CprParams) -> Result<StraightenedVolume> {
    p.validate()?;
    let frames = rm_frames(points)?;
    let n = p.grid_size();
    let m = frames.len();
    let step = vec3::polyline_length(points) / (m - 1) as f64;
    let c = (n - 1) as f64 / 2.0 * p.spacing;
    let g = Geometry::new([n, n, m], [p.spacing, p.spacing, step], [-c, -c, 0.0])?;
    let mut data = Vec::with_capacity(n * n * m);
    for f in &frames {
        for b in 0..n {
            for a in 0..n {
                data.push(trilinear_sample(vol, plane_point(f, a, b, n, p.spacing)));
            }
        }
    }
    Ok(StraightenedVolume {
        volume: Volume3D::from_vec(g, data)?,
        frames,
    })
}

pub const CENTRELINE_HEADER: &str = "branch_id,point_index,x_mm,y_mm,z_mm,radius_mm";

pub fn write_centreline_csv(c: &Centreline, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{CENTRELINE_HEADER}")?;
    for (bi, br) in c.branches.iter().enumerate() {
        for (pi, (q, r)) in br.points.iter().zip(&br.radii).enumerate() {
            writeln!(out, "{bi},{pi},{},{},{},{}", q[0], q[1], q[2], r)?;
        }
    }
    Ok(())
}

pub fn save_centreline(c: &Centreline, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_centreline_csv(c, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads the CSV layout written by [`write_centreline_csv`]. Branch topology
/// is not stored; parents are left empty.
pub fn read_centreline_csv(input: impl BufRead) -> Result<Centreline> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == CENTRELINE_HEADER => {}
        _ => {
            return Err(Error::Format(format!(
                "centreline file must start with `{CENTRELINE_HEADER}`"
            )))
        }
    }
    let mut branches: Vec<Branch> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::Format(format!("line {}: expected 6 fields", ln + 2)));
        }
        let bad = |_| Error::Format(format!("line {}: bad number", ln + 2));
        let bi: usize = f[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad branch id", ln + 2)))?;
        let pi: usize = f[1]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad point index", ln + 2)))?;
        let q = [
            f[2].parse::<f64>().map_err(bad)?,
            f[3].parse::<f64>().map_err(bad)?,
            f[4].parse::<f64>().map_err(bad)?,
        ];
        let r: f64 = f[5].parse().map_err(bad)?;
        if bi > branches.len() {
            return Err(Error::Format(format!(
                "line {}: branch ids must be consecutive",
                ln + 2
            )));
        }
        if bi == branches.len() {
            branches.push(Branch {
                points: Vec::new(),
                radii: Vec::new(),
                parent: None,
                attachment: None,
            });
        }
        let br = &mut branches[bi];
        if pi != br.points.len() {
            return Err(Error::Format(format!(
                "line {}: point indices must be consecutive",
                ln + 2
            )));
        }
        br.points.push(q);
        br.radii.push(r);
    }
    // the file carries no topology; branches attach as they were extracted
    for i in 1..branches.len() {
        let (parent, attachment) = nearest_attachment(&branches[..i], branches[i].points[0]).unwrap();
        branches[i].parent = Some(parent);
        branches[i].attachment = Some(attachment);
    }
    Ok(Centreline { branches })
}

pub fn load_centreline(path: impl AsRef<Path>) -> Result<Centreline> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_centreline_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomKind, PhantomSpec};
    use proptest::prelude::*;

    fn geom(n: usize) -> Geometry {
        Geometry::isotropic([n, n, n], 1.0).unwrap()
    }

    #[test]
    fn distance_field_conventions() {
        let g = geom(5);
        let mut m = BinaryMask::empty(g.clone());
        m.set(2, 2, 2, true);
        let d = distance_field(&m).unwrap();
        assert_eq!(d.get(2, 2, 2), 0.5);
        assert_eq!(d.get(0, 0, 0), 0.0);
        assert!(distance_field(&BinaryMask::empty(g)).is_err());
    }

    #[test]
    fn tube_distance_peak() {
        let g = Geometry::isotropic([48, 48, 32], 0.5).unwrap();
        let spec = PhantomSpec::preset(PhantomKind::Tube, g.clone(), Some(2.0), None)
            .unwrap()
            .hard()
            .noiseless();
        let (_, truth) = generate(&spec).unwrap();
        let d = distance_field(&truth.mask).unwrap();
        let peak = (0..32).map(|k| d.get(24, 24, k)).fold(0.0f64, f64::max);
        assert!((peak - 2.0).abs() <= 0.25, "{peak}");
        // 1-Lipschitz between face neighbours
        for k in 0..31 {
            for j in 18..30 {
                for i in 18..30 {
                    assert!((d.get(i, j, k) - d.get(i + 1, j, k)).abs() <= 0.5 + 1e-12);
                    assert!((d.get(i, j, k) - d.get(i, j, k + 1)).abs() <= 0.5 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn march_errors() {
        let g = geom(4);
        assert!(fast_march(&Volume3D::filled(g.clone(), 0.0), &[[0, 0, 0]]).is_err());
        assert!(fast_march(&Volume3D::filled(g.clone(), 1.0), &[]).is_err());
        let mut s = Volume3D::filled(g.clone(), 1.0);
        s.set(1, 1, 1, 0.0);
        assert!(fast_march(&s, &[[1, 1, 1]]).is_err());
        let f = fast_march(&s, &[[0, 0, 0]]).unwrap();
        assert!(f.t.get(1, 1, 1).is_infinite());
        assert_eq!(f.t.get(0, 0, 0), 0.0);
    }

    #[test]
    fn march_matches_axis_distance() {
        let g = geom(24);
        let f = fast_march(&Volume3D::filled(g, 1.0), &[[2, 3, 4]]).unwrap();
        assert!((f.t.get(20, 3, 4) - 18.0).abs() < 1e-9);
        assert!((f.t.get(2, 3, 4 + 17) - 17.0).abs() < 1e-9);
        let order: Vec<f64> = f.order.iter().map(|&i| f.at(i)).collect();
        assert!(order.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn march_two_sources_is_min() {
        let g = geom(16);
        let speed = Volume3D::from_fn(g.clone(), |i, j, k| 1.0 + 0.05 * ((i * 3 + j * 5 + k * 7) % 11) as f64);
        let a = fast_march(&speed, &[[2, 2, 2]]).unwrap();
        let b = fast_march(&speed, &[[13, 11, 9]]).unwrap();
        let ab = fast_march(&speed, &[[2, 2, 2], [13, 11, 9]]).unwrap();
        for idx in 0..g.len() {
            let m = a.at(idx).min(b.at(idx));
            // second-order stencils may mix both fronts where they meet
            assert!((ab.at(idx) - m).abs() <= 0.2, "{idx} {} {m}", ab.at(idx));
            if m < 3.0 {
                assert!((ab.at(idx) - m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn upwind_update_cases() {
        assert_eq!(upwind_update(vec![(3.0, 1.0)], 1.0), 4.0);
        let u = upwind_update(vec![(0.0, 1.0), (0.0, 1.0)], 1.0);
        assert!((u - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        // a far neighbour is dropped
        assert_eq!(upwind_update(vec![(0.0, 1.0), (5.0, 1.0)], 1.0), 1.0);
        assert!(upwind_update(vec![], 1.0).is_infinite());
    }

    #[test]
    fn backtrack_straight_ray() {
        let g = geom(32);
        let f = fast_march(&Volume3D::filled(g.clone(), 1.0), &[[4, 4, 4]]).unwrap();
        let start = g.world(24, 4, 4);
        let path = backtrack(&f, start).unwrap();
        let len = vec3::polyline_length(&path);
        assert!((len - 20.0).abs() <= 0.4, "{len}");
        assert_eq!(*path.last().unwrap(), g.world(4, 4, 4));
        let single = backtrack(&f, g.world(4, 4, 4)).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn rm_frames_straight_and_arc() {
        let line: Vec<Vec3> = (0..10).map(|i| [1.0, 2.0, i as f64]).collect();
        let fr = rm_frames(&line).unwrap();
        for f in &fr {
            assert!(vec3::dist(f.u, fr[0].u) < 1e-12 && vec3::dist(f.v, fr[0].v) < 1e-12);
        }
        let arc: Vec<Vec3> = (0..=60)
            .map(|i| {
                let a = i as f64 * 0.05;
                [10.0 * a.cos(), 10.0 * a.sin(), 0.0]
            })
            .collect();
        let fr = rm_frames_from(&arc, [0.0, 0.0, 1.0]).unwrap();
        for f in &fr {
            assert!((f.u[2].abs() - 1.0).abs() < 1e-3);
        }
        assert!(rm_frames(&[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]]).is_err());
        assert!(rm_frames(&[[0.0; 3]]).is_err());
    }

    #[test]
    fn cpr_grid_default() {
        assert_eq!(CprParams::default().grid_size(), 81);
    }

    #[test]
    fn resample_keeps_ends_and_step() {
        let pts = vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 4.0, 0.0]];
        let r = resample_polyline(&pts, 0.5).unwrap();
        assert_eq!(r.len(), 15);
        assert_eq!(r[0], pts[0]);
        assert!(vec3::dist(*r.last().unwrap(), pts[2]) < 1e-12);
        for w in r.windows(2) {
            assert!(vec3::dist(w[0], w[1]) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let c = Centreline {
            branches: vec![
                Branch {
                    points: vec![[0.0, 1.0, 2.0], [0.5, 1.0, 2.0]],
                    radii: vec![1.0, 1.5],
                    parent: None,
                    attachment: None,
                },
                Branch {
                    points: vec![[0.4, 1.0, 2.0]],
                    radii: vec![0.75],
                    parent: Some(0),
                    attachment: Some(1),
                },
            ],
        };
        let mut buf = Vec::new();
        write_centreline_csv(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CENTRELINE_HEADER));
        assert_eq!(read_centreline_csv(&buf[..]).unwrap(), c);
        assert!(read_centreline_csv(&b"x,y\n"[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn frames_are_orthonormal(seed in 0u64..1000) {
            let pts: Vec<Vec3> = (0..40)
                .map(|i| {
                    let t = i as f64 * 0.2 + seed as f64 * 0.01;
                    [5.0 * t.cos(), 5.0 * (1.3 * t).sin(), 0.7 * t]
                })
                .collect();
            for f in rm_frames(&pts).unwrap() {
                prop_assert!((vec3::norm(f.t) - 1.0).abs() < 1e-9);
                prop_assert!((vec3::norm(f.u) - 1.0).abs() < 1e-9);
                prop_assert!((vec3::norm(f.v) - 1.0).abs() < 1e-9);
                prop_assert!(vec3::dot(f.t, f.u).abs() < 1e-9);
                prop_assert!(vec3::dot(f.t, f.v).abs() < 1e-9);
                prop_assert!(vec3::dot(f.u, f.v).abs() < 1e-9);
            }
        }
    }
}
