//! Contrast-blood intensity model: aorta isolation, histogram, Gaussian fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid2, Volume3D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` strictly increasing edges (HU).
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Left-closed bins of width `width` starting at the minimum value.
pub fn build_histogram(values: &[f64], width: f64) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Empty("no values to histogram".into()));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width must be > 0, got {width}")));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("histogram values must be finite".into()));
    }
    let nbins = ((hi - lo) / width).floor() as usize + 1;
    let mut counts = vec![0u64; nbins];
    for &v in values {
        let b = (((v - lo) / width).floor() as usize).min(nbins - 1);
        counts[b] += 1;
    }
    let edges = (0..=nbins).map(|i| lo + i as f64 * width).collect();
    Ok(Histogram {
        edges,
        counts,
        total: values.len() as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Sum of squared residuals divided by the sum of squared counts.
    pub residual: f64,
    pub iterations: usize,
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for c in col..4 {
                    m[row][c] -= f * m[col][c];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

const MAX_ITER: usize = 100;

/// Least-squares fit of `A exp(-(b - mu)^2 / 2 sigma^2)` to the bin counts by
/// Gauss-Newton with step halving, started from the histogram moments.
pub fn fit_gaussian_lsq(h: &Histogram) -> Result<GaussianFit> {
    if h.occupied() < 5 {
        return Err(Error::InvalidArgument(format!(
            "need at least 5 occupied bins, got {}",
            h.occupied()
        )));
    }
    let x = h.centers();
    let y: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let span = h.edges[h.edges.len() - 1] - h.edges[0];
    let total: f64 = y.iter().sum();
    let mean = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / total;
    let var = x.iter().zip(&y).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>() / total;
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    let norm: f64 = y.iter().map(|v| v * v).sum();

    let sse = |p: [f64; 3]| -> f64 {
        x.iter()
            .zip(&y)
            .map(|(&b, &c)| {
                let r = p[0] * (-(b - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp() - c;
                r * r
            })
            .sum()
    };
    let mut p = [ymax, mean, var.sqrt().max(1e-3 * span.max(1.0))];
    let mut cur = sse(p);
    for it in 1..=MAX_ITER {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&b, &c) in x.iter().zip(&y) {
            let d = b - p[1];
            let e = (-d * d / (2.0 * p[2] * p[2])).exp();
            let f = p[0] * e;
            let j = [e, f * d / (p[2] * p[2]), f * d * d / (p[2] * p[2] * p[2])];
            let r = c - f;
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for bb in 0..3 {
                    jtj[a][bb] += j[a] * j[bb];
                }
            }
        }
        let Some(step) = solve3(jtj, jtr) else {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: cur / norm,
            });
        };
        let mut t = 1.0;
        let mut next = p;
        let mut next_sse = f64::INFINITY;
        for _ in 0..30 {
            let cand = [p[0] + t * step[0], p[1] + t * step[1], (p[2] + t * step[2]).abs()];
            let s = sse(cand);
            if cand[2] > 0.0 && s <= cur {
                next = cand;
                next_sse = s;
                break;
            }
            t *= 0.5;
        }
        if !next_sse.is_finite() {
            next = p;
            next_sse = cur;
        }
        let rel = (0..3)
            .map(|i| (next[i] - p[i]).abs() / p[i].abs().max(1e-12))
            .fold(0.0, f64::max);
        p = next;
        cur = next_sse;
        if p[2] > 2.0 * span || !p[2].is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: cur / norm,
            });
        }
        if rel < 1e-10 || (cur / norm) < 1e-30 {
            return Ok(GaussianFit {
                amplitude: p[0],
                mu: p[1],
                sigma: p[2],
                residual: cur / norm,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        residual: cur / norm,
    })
}

/// `[mu - 3 sigma, mu + 3 sigma]`.
pub fn blood_range(mu: f64, sigma: f64) -> Result<[f64; 2]> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok([mu - 3.0 * sigma, mu + 3.0 * sigma])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BloodIntensityModel {
    pub mu: f64,
    pub sigma: f64,
    pub range: [f64; 2],
    pub residual: f64,
}

impl BloodIntensityModel {
    pub fn new(mu: f64, sigma: f64, residual: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(BloodIntensityModel {
            mu,
            sigma,
            range: blood_range(mu, sigma)?,
            residual,
        })
    }

    /// Lower bound of the range, used as the intensity gate.
    pub fn v_t(&self) -> f64 {
        self.range[0]
    }

    pub fn from_values(values: &[f64], bin_width: f64) -> Result<Self> {
        let h = build_histogram(values, bin_width)?;
        let f = fit_gaussian_lsq(&h)?;
        Self::new(f.mu, f.sigma, f.residual)
    }
}

/// One published row: volume id, mean, SD, min, max (HU).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub id: u32,
    pub mu: i64,
    pub sigma: i64,
    pub min: i64,
    pub max: i64,
}

/// Published blood fits and ranges for twelve clinical CTA volumes.
pub const REFERENCE_ROWS: [ReferenceRow; 12] = [
    ReferenceRow {
        id: 1,
        mu: 942,
        sigma: 62,
        min: 756,
        max: 1128,
    },
    ReferenceRow {
        id: 2,
        mu: 495,
        sigma: 42,
        min: 369,
        max: 621,
    },
    ReferenceRow {
        id: 3,
        mu: 436,
        sigma: 45,
        min: 301,
        max: 571,
    },
    ReferenceRow {
        id: 4,
        mu: 485,
        sigma: 38,
        min: 371,
        max: 599,
    },
    ReferenceRow {
        id: 5,
        mu: 542,
        sigma: 60,
        min: 362,
        max: 722,
    },
    ReferenceRow {
        id: 6,
        mu: 630,
        sigma: 50,
        min: 480,
        max: 780,
    },
    ReferenceRow {
        id: 7,
        mu: 663,
        sigma: 53,
        min: 504,
        max: 822,
    },
    ReferenceRow {
        id: 8,
        mu: 463,
        sigma: 62,
        min: 277,
        max: 650,
    },
    ReferenceRow {
        id: 9,
        mu: 517,
        sigma: 53,
        min: 358,
        max: 676,
    },
    ReferenceRow {
        id: 10,
        mu: 543,
        sigma: 55,
        min: 378,
        max: 708,
    },
    ReferenceRow {
        id: 11,
        mu: 335,
        sigma: 45,
        min: 200,
        max: 470,
    },
    ReferenceRow {
        id: 12,
        mu: 425,
        sigma: 53,
        min: 296,
        max: 554,
    },
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RowCheck {
    pub row: ReferenceRow,
    pub computed: [i64; 2],
    /// Published min/max agree with the published mean and SD.
    pub consistent: bool,
}

/// Integer recomputation of every reference row's range.
pub fn check_reference_rows() -> Vec<RowCheck> {
    REFERENCE_ROWS
        .iter()
        .map(|r| {
            let computed = [r.mu - 3 * r.sigma, r.mu + 3 * r.sigma];
            RowCheck {
                row: *r,
                computed,
                consistent: computed == [r.min, r.max],
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AortaParams {
    /// Fraction of the z extent scanned from slice 0.
    pub z_band: f64,
    pub bright_threshold: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Largest centre shift between consecutive accepted slices (mm).
    pub max_drift: f64,
    /// Minimum fraction of a circle's perimeter that must carry votes.
    pub min_support: f64,
    /// Mask radius shrink relative to the detected circle (mm).
    pub interior_margin: f64,
    pub bin_width: f64,
}

impl Default for AortaParams {
    fn default() -> Self {
        AortaParams {
            z_band: 0.25,
            bright_threshold: 150.0,
            radius_min: 10.0,
            radius_max: 20.0,
            max_drift: 5.0,
            min_support: 0.5,
            interior_margin: 1.0,
            bin_width: 8.0,
        }
    }
}

impl AortaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_band > 0.0 && self.z_band <= 1.0) {
            return Err(Error::Config("aorta z band must lie in (0, 1]".into()));
        }
        if !(self.radius_min > 0.0 && self.radius_max >= self.radius_min) {
            return Err(Error::Config("aorta radius band must be positive and ordered".into()));
        }
        if !(self.max_drift > 0.0 && self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(Error::Config("aorta drift and support must be positive".into()));
        }
        if !(self.bin_width > 0.0) || self.interior_margin < 0.0 {
            return Err(Error::Config("bin width must be > 0 and margin >= 0".into()));
        }
        Ok(())
    }
}

/// Detected circle on an axial slice; centre in mm (x, y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceCircle {
    pub k: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub support: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AortaDetection {
    pub mask: BinaryMask,
    pub circles: Vec<SliceCircle>,
}

/// Best circle on one bright slice mask by Hough voting over the radius
/// band. Support is the fraction of the circle lying within one pixel of
/// the bright region's boundary.
fn hough_slice(
    bright: &Grid2<bool>,
    spacing: [f64; 2],
    origin: [f64; 2],
    p: &AortaParams,
) -> Option<([f64; 2], f64, f64)> {
    let (nx, ny) = (bright.nx, bright.ny);
    let edge = Grid2::from_fn(nx, ny, |x, y| {
        bright.get(x, y)
            && [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
                let (a, b) = (x as isize + dx, y as isize + dy);
                !bright.in_bounds(a, b) || !bright.get(a as usize, b as usize)
            })
    });
    let edge_pts: Vec<(isize, isize)> = (0..nx * ny)
        .filter(|&i| edge.data[i])
        .map(|i| ((i % nx) as isize, (i / nx) as isize))
        .collect();
    if edge_pts.is_empty() {
        return None;
    }
    let near_edge = crate::volume::dilate_2d(&edge, 1.5);
    let step = spacing[0].min(spacing[1]);
    let nr = ((p.radius_max - p.radius_min) / step).floor() as usize + 1;
    let mut best: Option<(u32, [isize; 2], f64)> = None;
    let mut acc = vec![0u32; nx * ny];
    for ri in 0..nr {
        let r = p.radius_min + ri as f64 * step;
        let n_ang = ((std::f64::consts::TAU * r / step).ceil() as usize).max(8);
        let mut offsets: Vec<(isize, isize)> = (0..n_ang)
            .map(|a| {
                let th = std::f64::consts::TAU * a as f64 / n_ang as f64;
                (
                    (r * th.cos() / spacing[0]).round() as isize,
                    (r * th.sin() / spacing[1]).round() as isize,
                )
            })
            .collect();
        offsets.sort_unstable();
        offsets.dedup();
        acc.iter_mut().for_each(|v| *v = 0);
        for &(ex, ey) in &edge_pts {
            for &(dx, dy) in &offsets {
                let (cx, cy) = (ex - dx, ey - dy);
                if cx >= 0 && cy >= 0 && (cx as usize) < nx && (cy as usize) < ny {
                    acc[cx as usize + nx * cy as usize] += 1;
                }
            }
        }
        for cy in 0..ny as isize {
            for cx in 0..nx as isize {
                let mut v = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (x, y) = (cx + dx, cy + dy);
                        if x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny {
                            v += acc[x as usize + nx * y as usize];
                        }
                    }
                }
                if best.is_none_or(|b| v > b.0) {
                    best = Some((v, [cx, cy], r));
                }
            }
        }
    }
    let (_, [cx, cy], r) = best?;
    let n_ang = ((std::f64::consts::TAU * r / step).ceil() as usize).max(8);
    let hits = (0..n_ang)
        .filter(|&a| {
            let th = std::f64::consts::TAU * a as f64 / n_ang as f64;
            let x = cx + (r * th.cos() / spacing[0]).round() as isize;
            let y = cy + (r * th.sin() / spacing[1]).round() as isize;
            near_edge.in_bounds(x, y) && near_edge.get(x as usize, y as usize)
        })
        .count();
    Some((
        [origin[0] + cx as f64 * spacing[0], origin[1] + cy as f64 * spacing[1]],
        r,
        hits as f64 / n_ang as f64,
    ))
}

/// Finds the aorta as a stack of consistent Hough circles in the first
/// slices of the volume and returns its interior bright voxels.
pub fn detect_aorta(vol: &Volume3D, p: &AortaParams) -> Result<AortaDetection> {
    p.validate()?;
    let g = vol.geometry();
    let [nx, ny, nz] = g.dims;
    let nk = ((p.z_band * nz as f64).ceil() as usize).clamp(1, nz);
    let mut found: Vec<Option<SliceCircle>> = vec![None; nk];
    for (k, slot) in found.iter_mut().enumerate() {
        let bright = Grid2::from_fn(nx, ny, |i, j| vol.get(i, j, k) > p.bright_threshold);
        if !bright.any() {
            continue;
        }
        if let Some((c, r, support)) = hough_slice(&bright, [g.spacing[0], g.spacing[1]], [g.origin[0], g.origin[1]], p)
        {
            if support >= p.min_support {
                *slot = Some(SliceCircle {
                    k,
                    center: c,
                    radius: r,
                    support,
                });
            }
        }
    }
    let Some(start) = (0..nk).filter(|&k| found[k].is_some()).max_by(|&a, &b| {
        found[a]
            .unwrap()
            .support
            .total_cmp(&found[b].unwrap().support)
            .then(b.cmp(&a))
    }) else {
        return Err(Error::AortaNotFound);
    };
    let drift_ok = |a: &SliceCircle, b: &SliceCircle| {
        let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
        d <= p.max_drift * (a.k.abs_diff(b.k)) as f64
    };
    let mut stack = vec![found[start].unwrap()];
    let mut prev = found[start].unwrap();
    for k in (0..start).rev() {
        match found[k] {
            Some(c) if drift_ok(&prev, &c) => {
                stack.push(c);
                prev = c;
            }
            _ => break,
        }
    }
    prev = found[start].unwrap();
    for slot in found.iter().skip(start + 1) {
        match slot {
            Some(c) if drift_ok(&prev, c) => {
                stack.push(*c);
                prev = *c;
            }
            _ => break,
        }
    }
    stack.sort_by_key(|c| c.k);
    let mut mask = BinaryMask::empty(g.clone());
    for c in &stack {
        let rr = (c.radius - p.interior_margin).max(0.0);
        for j in 0..ny {
            for i in 0..nx {
                let w = g.world(i, j, c.k);
                if (w[0] - c.center[0]).hypot(w[1] - c.center[1]) <= rr && vol.get(i, j, c.k) > p.bright_threshold {
                    mask.set(i, j, c.k, true);
                }
            }
        }
    }
    if mask.is_empty() {
        return Err(Error::AortaNotFound);
    }
    Ok(AortaDetection { mask, circles: stack })
}

/// Aorta detection followed by the histogram fit of its voxels.
pub fn estimate_blood_model(vol: &Volume3D, p: &AortaParams) -> Result<(BloodIntensityModel, AortaDetection)> {
    let det = detect_aorta(vol, p)?;
    let values: Vec<f64> = det.mask.indices().map(|i| vol.data()[i]).collect();
    let model = BloodIntensityModel::from_values(&values, p.bin_width)?;
    Ok((model, det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use proptest::prelude::*;

    #[test]
    fn range_examples() {
        assert_eq!(blood_range(942.0, 62.0).unwrap(), [756.0, 1128.0]);
        assert_eq!(blood_range(495.0, 42.0).unwrap(), [369.0, 621.0]);
        assert_eq!(blood_range(300.0, 0.0).unwrap(), [300.0, 300.0]);
        assert!(blood_range(0.0, -1.0).is_err());
    }

    #[test]
    fn reference_rows() {
        let checks = check_reference_rows();
        let bad: Vec<u32> = checks.iter().filter(|c| !c.consistent).map(|c| c.row.id).collect();
        assert_eq!(bad, vec![8, 12]);
        assert_eq!(checks[7].computed, [277, 649]);
        assert_eq!(checks[11].computed, [266, 584]);
    }

    #[test]
    fn histogram_rules() {
        let h = build_histogram(&[10.0, 10.0, 10.0], 5.0).unwrap();
        assert_eq!(h.occupied(), 1);
        assert_eq!(h.total, 3);
        let h = build_histogram(&[0.0, 5.0, 7.0, 10.0], 5.0).unwrap();
        assert_eq!(h.counts, vec![1, 2, 1]);
        assert!(build_histogram(&[], 5.0).is_err());
    }

    #[test]
    fn exact_gaussian_recovered() {
        let edges: Vec<f64> = (0..=120).map(|i| 260.0 + i as f64 * 4.0).collect();
        let counts = edges
            .windows(2)
            .map(|w| {
                let b = 0.5 * (w[0] + w[1]);
                (1e6 * (-(b - 500.0f64).powi(2) / (2.0 * 1600.0)).exp()).round() as u64
            })
            .collect::<Vec<_>>();
        let total = counts.iter().sum();
        let f = fit_gaussian_lsq(&Histogram { edges, counts, total }).unwrap();
        assert!((f.mu - 500.0).abs() < 1e-3 && (f.sigma - 40.0).abs() < 1e-3, "{f:?}");
    }

    #[test]
    fn flat_histogram_fails() {
        let edges: Vec<f64> = (0..=40).map(|i| i as f64 * 8.0).collect();
        let counts = vec![100u64; 40];
        let h = Histogram {
            edges,
            counts,
            total: 4000,
        };
        assert!(fit_gaussian_lsq(&h).is_err());
    }

    #[test]
    fn few_bins_rejected() {
        let h = build_histogram(&[1.0, 9.0, 17.0, 25.0], 8.0).unwrap();
        assert!(matches!(fit_gaussian_lsq(&h), Err(Error::InvalidArgument(_))));
    }

    proptest! {
        #[test]
        fn range_affine_equivariant(mu in -500.0..1500.0f64, s in 0.0..200.0f64, a in 0.1..5.0f64, b in -500.0..500.0f64) {
            let r = blood_range(mu, s).unwrap();
            let t = blood_range(a * mu + b, a * s).unwrap();
            prop_assert!((t[0] - (a * r[0] + b)).abs() < 1e-9 * (1.0 + t[0].abs()));
            prop_assert!((t[1] - (a * r[1] + b)).abs() < 1e-9 * (1.0 + t[1].abs()));
        }

        #[test]
        fn fit_shift_equivariant(shift in -300.0..300.0f64) {
            let edges: Vec<f64> = (0..=60).map(|i| 300.0 + i as f64 * 8.0).collect();
            let counts: Vec<u64> = edges.windows(2).map(|w| {
                let b = 0.5 * (w[0] + w[1]);
                (5e4 * (-(b - 530.0f64).powi(2) / (2.0 * 45.0 * 45.0)).exp() + ((b * 0.37).sin() * 40.0).abs()).round() as u64
            }).collect();
            let total = counts.iter().sum();
            let h = Histogram { edges: edges.clone(), counts: counts.clone(), total };
            let hs = Histogram { edges: edges.iter().map(|e| e + shift).collect(), counts, total };
            let a = fit_gaussian_lsq(&h).unwrap();
            let b = fit_gaussian_lsq(&hs).unwrap();
            prop_assert!((b.mu - a.mu - shift).abs() < 1e-6);
            prop_assert!((b.sigma - a.sigma).abs() < 1e-6);
        }
    }

    fn cylinders(discs: &[([f64; 2], f64)], kmax: usize) -> Volume3D {
        let g = Geometry::isotropic([80, 80, 40], 1.0).unwrap();
        Volume3D::from_fn(g, |i, j, k| {
            let inside = k <= kmax
                && discs
                    .iter()
                    .any(|(c, r)| (i as f64 - c[0]).hypot(j as f64 - c[1]) <= *r);
            if inside {
                500.0
            } else {
                40.0
            }
        })
    }

    #[test]
    fn aorta_cylinder_found() {
        let vol = cylinders(&[([40.0, 38.0], 15.0)], 30);
        let det = detect_aorta(&vol, &AortaParams::default()).unwrap();
        assert!(!det.circles.is_empty());
        for c in &det.circles {
            assert!((c.center[0] - 40.0).abs() <= 1.0 && (c.center[1] - 38.0).abs() <= 1.0);
            assert!((c.radius - 15.0).abs() <= 1.0);
        }
        for i in det.mask.indices() {
            assert!(vol.data()[i] > 150.0);
        }
    }

    #[test]
    fn no_disc_means_no_aorta() {
        let vol = cylinders(&[], 0);
        assert!(matches!(
            detect_aorta(&vol, &AortaParams::default()),
            Err(Error::AortaNotFound)
        ));
    }

    #[test]
    fn small_disc_is_ignored() {
        let vol = cylinders(&[([25.0, 40.0], 15.0), ([62.0, 40.0], 4.0)], 39);
        let det = detect_aorta(&vol, &AortaParams::default()).unwrap();
        assert!(det.circles.iter().all(|c| (c.center[0] - 25.0).abs() <= 1.0));
        assert!(!det.mask.get(62, 40, 2));
    }
}
