//! Scale-space Hessian, eigen-analysis and the Frangi tubularity measure.

use crate::error::{Error, Result};
use crate::vec3::Vec3;
use crate::volume::{smooth_region, Geometry, Volume3D};

/// Symmetric 3x3 matrix stored as `[xx, yy, zz, xy, xz, yz]`.
pub type Sym3 = [f64; 6];

/// Frobenius norm of a symmetric matrix.
pub fn frobenius(h: &Sym3) -> f64 {
    (h[0] * h[0] + h[1] * h[1] + h[2] * h[2] + 2.0 * (h[3] * h[3] + h[4] * h[4] + h[5] * h[5])).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrangiParams {
    pub alpha: f64,
    pub beta: f64,
    /// Structureness constant; `None` uses half the largest Hessian
    /// Frobenius norm found at each scale.
    pub c: Option<f64>,
    /// Scales in mm, strictly increasing.
    pub scales: Vec<f64>,
    pub gamma: f64,
}

impl Default for FrangiParams {
    fn default() -> Self {
        FrangiParams {
            alpha: 0.5,
            beta: 0.5,
            c: None,
            scales: vec![1.0, 1.5, 2.0, 2.5],
            gamma: 1.0,
        }
    }
}

impl FrangiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidArgument("alpha and beta must be > 0".into()));
        }
        if let Some(c) = self.c {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("c must be > 0".into()));
            }
        }
        if self.scales.is_empty() {
            return Err(Error::InvalidArgument("at least one scale is required".into()));
        }
        if self.scales.iter().any(|&s| !(s > 0.0)) || self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "scales must be positive and strictly increasing, got {:?}",
                self.scales
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        Ok(())
    }
}

/// Eigenvalues ordered by magnitude and the unit eigenvector of the smallest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenTriple {
    pub lambda: [f64; 3],
    pub e1: Vec3,
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
///
/// Eigenvalues are sorted by `|λ|` (ties by signed value, ascending); `e1`
/// has its largest-magnitude component positive.
pub fn eigen_symmetric3(h: &Sym3) -> EigenTriple {
    let mut a = [[h[0], h[3], h[4]], [h[3], h[1], h[5]], [h[4], h[5], h[2]]];
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale2 = frobenius(h).powi(2);
    for _ in 0..32 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off == 0.0 || off <= 1e-36 * scale2 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = if theta.is_finite() {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            } else {
                0.0
            };
            if t == 0.0 {
                continue;
            }
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let r = 3 - p - q;
            let arp = a[r][p];
            let arq = a[r][q];
            a[p][p] -= t * apq;
            a[q][q] += t * apq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let vals = [a[0][0], a[1][1], a[2][2]];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| {
        vals[x]
            .abs()
            .total_cmp(&vals[y].abs())
            .then(vals[x].total_cmp(&vals[y]))
    });
    let col = order[0];
    let mut e1 = [v[0][col], v[1][col], v[2][col]];
    let n = crate::vec3::norm(e1);
    e1 = crate::vec3::scale(e1, 1.0 / n);
    let mut big = 0;
    for d in 1..3 {
        if e1[d].abs() > e1[big].abs() {
            big = d;
        }
    }
    if e1[big] < 0.0 {
        e1 = crate::vec3::scale(e1, -1.0);
    }
    EigenTriple {
        lambda: [vals[order[0]], vals[order[1]], vals[order[2]]],
        e1,
    }
}

/// Frangi vesselness for magnitude-ordered eigenvalues with structureness
/// constant `c`.
pub fn frangi_measure(lambda: [f64; 3], alpha: f64, beta: f64, c: f64) -> f64 {
    let [l1, l2, l3] = lambda;
    if l2 > 0.0 || l3 > 0.0 || l3 == 0.0 {
        return 0.0;
    }
    let ra = l2.abs() / l3.abs();
    let rb = if l2 == 0.0 {
        f64::INFINITY
    } else {
        l1.abs() / (l2 * l3).sqrt()
    };
    let s2 = l1 * l1 + l2 * l2 + l3 * l3;
    let a = 1.0 - (-ra * ra / (2.0 * alpha * alpha)).exp();
    let b = (-rb * rb / (2.0 * beta * beta)).exp();
    let cterm = if c > 0.0 {
        1.0 - (-s2 / (2.0 * c * c)).exp()
    } else {
        1.0
    };
    (a * b * cterm).clamp(0.0, 1.0)
}

/// Smoothed copy of a region padded by one voxel, with helpers for finite
/// differences in full-volume index space.
struct SmoothedBox {
    data: Volume3D,
    lo: [usize; 3],
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl SmoothedBox {
    fn new(vol: &Volume3D, sigma: f64, lo: [usize; 3], hi: [usize; 3]) -> Result<Self> {
        let dims = vol.dims();
        let plo = [
            lo[0].saturating_sub(1),
            lo[1].saturating_sub(1),
            lo[2].saturating_sub(1),
        ];
        let phi = [
            (hi[0] + 1).min(dims[0] - 1),
            (hi[1] + 1).min(dims[1] - 1),
            (hi[2] + 1).min(dims[2] - 1),
        ];
        Ok(SmoothedBox {
            data: smooth_region(vol, sigma, plo, phi)?,
            lo: plo,
            dims,
            spacing: vol.spacing(),
        })
    }

    #[inline]
    fn at(&self, i: isize, j: isize, k: isize) -> f64 {
        let i = i.clamp(0, self.dims[0] as isize - 1) as usize - self.lo[0];
        let j = j.clamp(0, self.dims[1] as isize - 1) as usize - self.lo[1];
        let k = k.clamp(0, self.dims[2] as isize - 1) as usize - self.lo[2];
        self.data.get(i, j, k)
    }

    fn hessian(&self, i: usize, j: usize, k: usize) -> Sym3 {
        let (i, j, k) = (i as isize, j as isize, k as isize);
        let [hx, hy, hz] = self.spacing;
        let c = self.at(i, j, k);
        let xx = (self.at(i + 1, j, k) - 2.0 * c + self.at(i - 1, j, k)) / (hx * hx);
        let yy = (self.at(i, j + 1, k) - 2.0 * c + self.at(i, j - 1, k)) / (hy * hy);
        let zz = (self.at(i, j, k + 1) - 2.0 * c + self.at(i, j, k - 1)) / (hz * hz);
        let xy = (self.at(i + 1, j + 1, k) - self.at(i + 1, j - 1, k) - self.at(i - 1, j + 1, k)
            + self.at(i - 1, j - 1, k))
            / (4.0 * hx * hy);
        let xz = (self.at(i + 1, j, k + 1) - self.at(i + 1, j, k - 1) - self.at(i - 1, j, k + 1)
            + self.at(i - 1, j, k - 1))
            / (4.0 * hx * hz);
        let yz = (self.at(i, j + 1, k + 1) - self.at(i, j + 1, k - 1) - self.at(i, j - 1, k + 1)
            + self.at(i, j - 1, k - 1))
            / (4.0 * hy * hz);
        [xx, yy, zz, xy, xz, yz]
    }

    fn gradient(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let (i, j, k) = (i as isize, j as isize, k as isize);
        let [hx, hy, hz] = self.spacing;
        [
            (self.at(i + 1, j, k) - self.at(i - 1, j, k)) / (2.0 * hx),
            (self.at(i, j + 1, k) - self.at(i, j - 1, k)) / (2.0 * hy),
            (self.at(i, j, k + 1) - self.at(i, j, k - 1)) / (2.0 * hz),
        ]
    }
}

fn check_scale(s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be > 0, got {s}")));
    }
    Ok(())
}

fn full_box(g: &Geometry) -> ([usize; 3], [usize; 3]) {
    ([0; 3], [g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1])
}

fn check_box(g: &Geometry, lo: [usize; 3], hi: [usize; 3]) -> Result<()> {
    for a in 0..3 {
        if lo[a] > hi[a] || hi[a] >= g.dims[a] {
            return Err(Error::InvalidArgument(format!("bad region {lo:?}..{hi:?}")));
        }
    }
    Ok(())
}

fn for_box(lo: [usize; 3], hi: [usize; 3], mut f: impl FnMut(usize, usize, usize)) {
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                f(i, j, k);
            }
        }
    }
}

/// Scale-normalized Hessians of a volume at one scale.
#[derive(Clone, Debug)]
pub struct HessianField {
    pub geometry: Geometry,
    pub scale: f64,
    pub data: Vec<Sym3>,
}

impl HessianField {
    pub fn get(&self, i: usize, j: usize, k: usize) -> Sym3 {
        self.data[self.geometry.index(i, j, k)]
    }
}

/// Second derivatives of the volume smoothed at `s` mm, multiplied by `s^gamma`.
pub fn hessian_at_scale(vol: &Volume3D, s: f64, gamma: f64) -> Result<HessianField> {
    check_scale(s)?;
    let g = vol.geometry();
    let (lo, hi) = full_box(g);
    let sm = SmoothedBox::new(vol, s, lo, hi)?;
    let norm = s.powf(gamma);
    let mut data = Vec::with_capacity(g.len());
    for_box(lo, hi, |i, j, k| {
        let h = sm.hessian(i, j, k);
        data.push(h.map(|x| x * norm));
    });
    Ok(HessianField {
        geometry: g.clone(),
        scale: s,
        data,
    })
}

/// Eigen analysis of the scale-normalized Hessian at a single voxel.
pub fn local_eigen(vol: &Volume3D, voxel: [usize; 3], s: f64, gamma: f64) -> Result<EigenTriple> {
    check_scale(s)?;
    let g = vol.geometry();
    check_box(g, voxel, voxel)?;
    let sm = SmoothedBox::new(vol, s, voxel, voxel)?;
    let norm = s.powf(gamma);
    let h = sm.hessian(voxel[0], voxel[1], voxel[2]).map(|x| x * norm);
    Ok(eigen_symmetric3(&h))
}

/// Multiscale vesselness score and the scale (mm) that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct VesselnessField {
    pub v: Volume3D,
    pub best_scale: Volume3D,
}

pub fn multiscale_vesselness(vol: &Volume3D, p: &FrangiParams) -> Result<VesselnessField> {
    let (lo, hi) = full_box(vol.geometry());
    multiscale_vesselness_region(vol, p, lo, hi)
}

/// Vesselness restricted to the inclusive box `[lo, hi]`; voxels outside the
/// box score 0. The automatic `c` is taken over the box only.
pub fn multiscale_vesselness_region(
    vol: &Volume3D,
    p: &FrangiParams,
    lo: [usize; 3],
    hi: [usize; 3],
) -> Result<VesselnessField> {
    p.validate()?;
    let g = vol.geometry().clone();
    check_box(&g, lo, hi)?;
    let mut v = Volume3D::filled(g.clone(), 0.0);
    let mut best = Volume3D::filled(g.clone(), p.scales[0]);
    for (si, &s) in p.scales.iter().enumerate() {
        let sm = SmoothedBox::new(vol, s, lo, hi)?;
        let norm = s.powf(p.gamma);
        let c = match p.c {
            Some(c) => c,
            None => {
                let mut max_f: f64 = 0.0;
                for_box(lo, hi, |i, j, k| {
                    max_f = max_f.max(frobenius(&sm.hessian(i, j, k)) * norm.abs());
                });
                0.5 * max_f
            }
        };
        for_box(lo, hi, |i, j, k| {
            let h = sm.hessian(i, j, k).map(|x| x * norm);
            let score = frangi_measure(eigen_symmetric3(&h).lambda, p.alpha, p.beta, c);
            let idx = g.index(i, j, k);
            if si == 0 || score > v.data()[idx] {
                v.data_mut()[idx] = score;
                best.data_mut()[idx] = s;
            }
        });
    }
    Ok(VesselnessField { v, best_scale: best })
}

/// Value marking voxels where the edge measure's denominator vanishes.
pub const EDGE_SENTINEL: f64 = 1e12;

/// Intensity-weighted edge indicator `k f |grad f| / (s |λ2 + λ3|)` at scale `s`.
///
/// `λ2, λ3` are the two largest-magnitude eigenvalues of the unnormalized
/// Hessian. Voxels with zero gradient give 0; voxels whose denominator falls
/// below `1e-6 max|H|` give [`EDGE_SENTINEL`].
pub fn edge_measure(vol: &Volume3D, s: f64, k: f64) -> Result<Volume3D> {
    let (lo, hi) = full_box(vol.geometry());
    edge_measure_region(vol, s, k, lo, hi)
}

pub fn edge_measure_region(vol: &Volume3D, s: f64, k: f64, lo: [usize; 3], hi: [usize; 3]) -> Result<Volume3D> {
    check_scale(s)?;
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("edge gain must be > 0, got {k}")));
    }
    let g = vol.geometry().clone();
    check_box(&g, lo, hi)?;
    let sm = SmoothedBox::new(vol, s, lo, hi)?;
    let mut max_h: f64 = 0.0;
    for_box(lo, hi, |i, j, kk| {
        let h = sm.hessian(i, j, kk);
        max_h = h.iter().fold(max_h, |m, x| m.max(x.abs()));
    });
    let eps = 1e-6 * max_h;
    let mut out = Volume3D::filled(g.clone(), 0.0);
    for_box(lo, hi, |i, j, kk| {
        let grad = crate::vec3::norm(sm.gradient(i, j, kk));
        let f = vol.get(i, j, kk);
        let e = if grad == 0.0 || f == 0.0 {
            0.0
        } else {
            let t = eigen_symmetric3(&sm.hessian(i, j, kk));
            let den = (t.lambda[1] + t.lambda[2]).abs();
            if den < eps || den == 0.0 {
                EDGE_SENTINEL
            } else {
                k * f * grad / (s * den)
            }
        };
        out.set(i, j, kk, e);
    });
    Ok(out)
}

/// Zeroes vesselness wherever the edge measure exceeds `t_e`.
pub fn suppress_edges(vf: &VesselnessField, e: &Volume3D, t_e: f64) -> Result<VesselnessField> {
    vf.v.geometry().ensure_same(e.geometry())?;
    let mut out = vf.clone();
    for (v, &ev) in out.v.data_mut().iter_mut().zip(e.data()) {
        if ev > t_e {
            *v = 0.0;
        }
    }
    Ok(out)
}
