//! Automatic seed detection on an axial reference slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};
use crate::vesselness::{local_eigen, VesselnessField};
use crate::volume::{
    connected_components_2d, fill_holes_2d, gaussian_smooth, gaussian_smooth_2d, trilinear_sample, Connectivity, Frame,
    Grid2, Image2D, Volume3D,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Pair the kept lengths of the three planes by sorted rank.
    Rank,
    /// Pair rays by direction index, then trim the per-direction spreads.
    Direction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedParams {
    pub cr: f64,
    /// Gap between the orthogonal planes (mm).
    pub plane_gap: f64,
    pub plane_half_extent: f64,
    pub plane_spacing: f64,
    pub n_rays: usize,
    /// Rays trimmed from each end of the sorted lengths.
    pub trim: usize,
    pub r_max: f64,
    pub k: f64,
    pub t_f: f64,
    pub t_gf: f64,
    pub v_t: f64,
    pub pairing: Pairing,
    /// Pre-smoothing of the slice before Sobel (pixels).
    pub edge_smoothing: f64,
    /// Pre-smoothing of the volume before plane sampling (mm).
    pub gf_smoothing: f64,
    /// Minimum fill ratio `area / (pi r_max^2)` for an ROI.
    pub min_fill: f64,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        SeedParams {
            cr: 0.5,
            plane_gap: 2.0,
            plane_half_extent: 6.0,
            plane_spacing: 0.5,
            n_rays: 16,
            trim: 3,
            r_max: 5.0,
            k: 1.0,
            t_f: 0.1,
            t_gf: 0.2,
            v_t: f64::NEG_INFINITY,
            pairing: Pairing::Rank,
            edge_smoothing: 1.0,
            gf_smoothing: 1.0,
            min_fill: 0.5,
            min_radius: 0.5,
            max_radius: 3.0,
        }
    }
}

impl SeedParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cr > 0.0 && self.cr < 1.0) {
            return Err(Error::Config(format!("cr must lie in (0, 1), got {}", self.cr)));
        }
        if !(self.plane_gap > 0.0 && self.plane_half_extent > 0.0 && self.plane_spacing > 0.0) {
            return Err(Error::Config("plane gap, extent and spacing must be > 0".into()));
        }
        if self.n_rays < 2 * self.trim + 1 {
            return Err(Error::Config("too few rays for the trimming rule".into()));
        }
        if !(self.r_max > 0.0 && self.k > 0.0) {
            return Err(Error::Config("r_max and k must be > 0".into()));
        }
        if !(self.min_radius > 0.0 && self.max_radius > self.min_radius) {
            return Err(Error::Config("ROI radius band must be positive and ordered".into()));
        }
        if self.edge_smoothing < 0.0 || self.gf_smoothing < 0.0 {
            return Err(Error::Config("smoothing must be >= 0".into()));
        }
        Ok(())
    }
}

/// Reference slice index `floor(cr * nz)` clamped to `[1, nz - 2]`.
pub fn select_reference_slice(nz: usize, cr: f64) -> Result<usize> {
    if !(cr > 0.0 && cr < 1.0) {
        return Err(Error::InvalidArgument(format!("cr must lie in (0, 1), got {cr}")));
    }
    if nz < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 slices, got {nz}")));
    }
    let p = (cr * nz as f64).floor() as usize;
    Ok(p.clamp(1, nz - 2))
}

/// Largest connected region above -200 HU, with holes filled.
pub fn body_region_mask(slice: &Image2D) -> Result<Grid2<bool>> {
    let [nx, ny] = slice.dims;
    let tissue = Grid2 {
        nx,
        ny,
        data: slice.data.iter().map(|&v| v > -200.0).collect(),
    };
    let comps = connected_components_2d(&tissue, Connectivity::Full);
    let Some(best) = comps.largest() else {
        return Err(Error::Empty("slice contains no tissue above -200 HU".into()));
    };
    let largest = Grid2 {
        nx,
        ny,
        data: comps.labels.iter().map(|&l| l == best).collect(),
    };
    Ok(fill_holes_2d(&largest))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi2D {
    /// Centroid in pixel coordinates `(x, y)`.
    pub centroid: [f64; 2],
    /// Ordered boundary chain of pixels `(x, y)`.
    pub boundary: Vec<[usize; 2]>,
    pub bbox: ([usize; 2], [usize; 2]),
    pub closed: bool,
    pub area: usize,
}

/// Sobel gradient components with clamped borders.
pub fn sobel(img: &Grid2<f64>) -> (Grid2<f64>, Grid2<f64>) {
    let (nx, ny) = (img.nx, img.ny);
    let mut gx = Grid2::filled(nx, ny, 0.0);
    let mut gy = Grid2::filled(nx, ny, 0.0);
    for y in 0..ny as isize {
        for x in 0..nx as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            gx.set(x as usize, y as usize, sx);
            gy.set(x as usize, y as usize, sy);
        }
    }
    (gx, gy)
}

/// Otsu threshold of `values` over a 256-bin histogram.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || !(hi > lo) {
        return None;
    }
    const BINS: usize = 256;
    let w = (hi - lo) / BINS as f64;
    let mut hist = [0usize; BINS];
    for &v in values {
        let b = (((v - lo) / w) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &c) in hist.iter().enumerate().take(BINS - 1) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t);
        }
    }
    Some(lo + (best.1 + 1) as f64 * w)
}

/// Thin edge map: Otsu-thresholded Sobel magnitude after non-maximum
/// suppression across the gradient direction.
fn edge_map(img: &Grid2<f64>, body: &Grid2<bool>) -> Grid2<bool> {
    let (gx, gy) = sobel(img);
    let (nx, ny) = (img.nx, img.ny);
    let mag = Grid2 {
        nx,
        ny,
        data: gx.data.iter().zip(&gy.data).map(|(a, b)| a.hypot(*b)).collect(),
    };
    let inside: Vec<f64> = mag
        .data
        .iter()
        .zip(&body.data)
        .filter(|(_, &b)| b)
        .map(|(&m, _)| m)
        .collect();
    let Some(t) = otsu_threshold(&inside) else {
        return Grid2::filled(nx, ny, false);
    };
    Grid2::from_fn(nx, ny, |x, y| {
        let m = mag.get(x, y);
        if !body.get(x, y) || m <= t {
            return false;
        }
        let ang = gy.get(x, y).atan2(gx.get(x, y));
        let oct = ((ang / std::f64::consts::FRAC_PI_4).round() as isize).rem_euclid(4);
        let (dx, dy) = match oct {
            0 => (1, 0),
            1 => (1, 1),
            2 => (0, 1),
            _ => (-1, 1),
        };
        let (x, y) = (x as isize, y as isize);
        m >= mag.get_clamped(x + dx, y + dy) && m >= mag.get_clamped(x - dx, y - dy)
    })
}

const MOORE: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Moore-neighbour trace of the outer boundary of a region, starting at its
/// first pixel in scan order. The chain is closed: consecutive pixels and
/// the last/first pair are 8-adjacent.
pub fn trace_boundary(region: &Grid2<bool>) -> Vec<[usize; 2]> {
    let Some(start_idx) = region.data.iter().position(|&b| b) else {
        return Vec::new();
    };
    let start = ((start_idx % region.nx) as isize, (start_idx / region.nx) as isize);
    let inside = |p: (isize, isize)| region.in_bounds(p.0, p.1) && region.get(p.0 as usize, p.1 as usize);
    let mut chain = vec![[start.0 as usize, start.1 as usize]];
    // the pixel to the west of the scan-order first pixel is background
    let mut cur = start;
    let mut back_dir = 4usize;
    let first_step: Option<(isize, isize)>;
    {
        let mut found = None;
        for t in 1..=8 {
            let d = (back_dir + t) % 8;
            let n = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
            if inside(n) {
                found = Some((n, d));
                break;
            }
        }
        let Some((n, d)) = found else {
            return chain;
        };
        first_step = Some(n);
        cur = n;
        back_dir = (d + 4) % 8;
    }
    let limit = 4 * region.nx * region.ny + 8;
    for _ in 0..limit {
        if cur == start {
            // Jacob's criterion: stop when re-entering start the same way
            let mut next = None;
            for t in 1..=8 {
                let d = (back_dir + t) % 8;
                let n = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
                if inside(n) {
                    next = Some(n);
                    break;
                }
            }
            if next == first_step {
                break;
            }
        }
        chain.push([cur.0 as usize, cur.1 as usize]);
        let mut moved = false;
        for t in 1..=8 {
            let d = (back_dir + t) % 8;
            let n = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
            if inside(n) {
                cur = n;
                back_dir = (d + 4) % 8;
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    chain
}

/// Regions enclosed by closed edge contours on `slice`, restricted to `body`.
pub fn detect_closed_rois(slice: &Image2D, body: &Grid2<bool>, p: &SeedParams) -> Result<Vec<Roi2D>> {
    let [nx, ny] = slice.dims;
    if (body.nx, body.ny) != (nx, ny) {
        return Err(Error::GeometryMismatch("body mask and slice differ in size".into()));
    }
    let img = slice.as_grid();
    let img = if p.edge_smoothing > 0.0 {
        gaussian_smooth_2d(&img, [p.edge_smoothing; 2])
    } else {
        img
    };
    let edges = edge_map(&img, body);
    let px_area = slice.spacing[0] * slice.spacing[1];
    let a_min = std::f64::consts::PI * p.min_radius * p.min_radius / px_area;
    let a_max = std::f64::consts::PI * p.max_radius * p.max_radius / px_area;

    let open = Grid2 {
        nx,
        ny,
        data: edges.data.iter().zip(&body.data).map(|(&e, &b)| !e && b).collect(),
    };
    let comps = connected_components_2d(&open, Connectivity::Face);
    let ncomp = comps.count();
    let mut touches = vec![false; ncomp + 1];
    for y in 0..ny {
        for x in 0..nx {
            let l = comps.labels[x + nx * y] as usize;
            if l == 0 {
                continue;
            }
            let border = x == 0 || y == 0 || x == nx - 1 || y == ny - 1;
            let near_outside = [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
                let (xn, yn) = (x as isize + dx, y as isize + dy);
                body.in_bounds(xn, yn) && !body.get(xn as usize, yn as usize)
            });
            if border || near_outside {
                touches[l] = true;
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncomp + 1];
    for (idx, &l) in comps.labels.iter().enumerate() {
        if l != 0 && !touches[l as usize] {
            members[l as usize].push(idx);
        }
    }
    let mut rois = Vec::new();
    for pix in members.iter().filter(|m| !m.is_empty()) {
        // hole plus the edge pixels bordering it
        let mut region = Grid2::filled(nx, ny, false);
        for &idx in pix {
            region.data[idx] = true;
        }
        for &idx in pix {
            let (x, y) = ((idx % nx) as isize, (idx / nx) as isize);
            for (dx, dy) in MOORE {
                let (xn, yn) = (x + dx, y + dy);
                if edges.in_bounds(xn, yn) && edges.get(xn as usize, yn as usize) {
                    region.set(xn as usize, yn as usize, true);
                }
            }
        }
        let area = region.count();
        if (area as f64) < a_min || (area as f64) > a_max {
            continue;
        }
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut lo = [usize::MAX; 2];
        let mut hi = [0usize; 2];
        for (idx, _) in region.data.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (idx % nx, idx / nx);
            cx += x as f64;
            cy += y as f64;
            lo = [lo[0].min(x), lo[1].min(y)];
            hi = [hi[0].max(x), hi[1].max(y)];
        }
        cx /= area as f64;
        cy /= area as f64;
        let r_max = region
            .data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(idx, _)| ((idx % nx) as f64 - cx).hypot((idx / nx) as f64 - cy))
            .fold(0.0, f64::max)
            + 0.5;
        let fill = area as f64 / (std::f64::consts::PI * r_max * r_max);
        if fill < p.min_fill {
            continue;
        }
        let boundary = trace_boundary(&region);
        let closed = boundary.len() <= 1 || {
            let a = boundary[0];
            let b = boundary[boundary.len() - 1];
            a[0].abs_diff(b[0]) <= 1 && a[1].abs_diff(b[1]) <= 1
        };
        if !closed {
            continue;
        }
        rois.push(Roi2D {
            centroid: [cx, cy],
            boundary,
            bbox: (lo, hi),
            closed,
            area,
        });
    }
    Ok(rois)
}

/// Vessel direction at a voxel: eigenvector of the smallest-magnitude
/// Hessian eigenvalue at scale `s`.
pub fn vessel_direction(vol: &Volume3D, voxel: [usize; 3], s: f64) -> Result<Vec3> {
    Ok(local_eigen(vol, voxel, s, 1.0)?.e1)
}

/// Plane through `center` orthogonal to `normal`, sampled on a square grid.
pub fn extract_orthogonal_plane(
    vol: &Volume3D,
    center: Vec3,
    normal: Vec3,
    half_extent: f64,
    spacing: f64,
) -> Result<Image2D> {
    if (vec3::norm(normal) - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument("plane normal must be a unit vector".into()));
    }
    if !(half_extent > 0.0 && spacing > 0.0) {
        return Err(Error::InvalidArgument("plane extent and spacing must be > 0".into()));
    }
    let half = (half_extent / spacing).round() as usize;
    let n = 2 * half + 1;
    let (u, v) = vec3::orthonormal_frame(normal);
    let frame = Frame { center, u, v };
    let mut data = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            let du = (a as f64 - half as f64) * spacing;
            let dv = (b as f64 - half as f64) * spacing;
            let p = vec3::add(center, vec3::add(vec3::scale(u, du), vec3::scale(v, dv)));
            data.push(trilinear_sample(vol, p));
        }
    }
    Image2D::new([n, n], [spacing, spacing], data)?.with_frame(frame)
}

/// Ray lengths (mm) from `center` (pixel coordinates) to the half-max
/// boundary between the centre value and the plane median.
pub fn cast_rays(plane: &Image2D, center: [f64; 2], n: usize, r_max: f64) -> Vec<f64> {
    let ic = plane.sample(center[0], center[1]);
    let bg = plane.median();
    let thr = 0.5 * (ic + bg);
    let bright = ic > bg;
    if ic == bg {
        return vec![r_max; n];
    }
    let step = 0.25 * plane.spacing[0].min(plane.spacing[1]);
    let past = |v: f64| if bright { v < thr } else { v > thr };
    (0..n)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / n as f64;
            let (c, s) = (th.cos(), th.sin());
            let at = |t: f64| {
                plane.sample(
                    center[0] + t * c / plane.spacing[0],
                    center[1] + t * s / plane.spacing[1],
                )
            };
            let mut prev_t = 0.0;
            let mut prev_v = ic;
            let mut t = step;
            while t <= r_max + 1e-12 {
                let v = at(t);
                if past(v) {
                    let f = if v != prev_v {
                        (thr - prev_v) / (v - prev_v)
                    } else {
                        1.0
                    };
                    return (prev_t + f.clamp(0.0, 1.0) * (t - prev_t)).min(r_max);
                }
                prev_t = t;
                prev_v = v;
                t += step;
            }
            r_max
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayProfile {
    /// Raw ray lengths per plane (offsets -D, 0, +D).
    pub lengths: [Vec<f64>; 3],
    /// Sorted lengths kept after trimming, per plane.
    pub kept: [Vec<f64>; 3],
}

/// Combines three planes' ray lengths into the geometric feature score.
pub fn gf_from_lengths(lengths: &[Vec<f64>; 3], trim: usize, k: f64, pairing: Pairing) -> (f64, RayProfile) {
    let kept: [Vec<f64>; 3] = std::array::from_fn(|i| {
        let mut v = lengths[i].clone();
        v.sort_by(|a, b| a.total_cmp(b));
        v[trim..v.len() - trim].to_vec()
    });
    let gf = match pairing {
        Pairing::Rank => (0..kept[0].len())
            .map(|j| {
                let vals = [kept[0][j], kept[1][j], kept[2][j]];
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                k / (hi - lo + 1.0)
            })
            .product(),
        Pairing::Direction => {
            let n = lengths[0].len();
            let mut spreads: Vec<f64> = (0..n)
                .map(|i| {
                    let vals = [lengths[0][i], lengths[1][i], lengths[2][i]];
                    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                })
                .collect();
            spreads.sort_by(|a, b| a.total_cmp(b));
            spreads[trim..n - trim].iter().map(|s| k / (s + 1.0)).product()
        }
    };
    (
        gf,
        RayProfile {
            lengths: lengths.clone(),
            kept,
        },
    )
}

/// Geometric feature at world point `p` with vessel direction `dir`.
/// `vol` should already carry any smoothing.
pub fn geometric_feature(vol: &Volume3D, p: Vec3, dir: Vec3, sp: &SeedParams) -> Result<(f64, RayProfile)> {
    let g = vol.geometry();
    if !g.contains_world(p) {
        return Err(Error::InvalidArgument(format!("GF centre {p:?} outside the volume")));
    }
    let dir = vec3::normalize(dir);
    let mut lengths: [Vec<f64>; 3] = Default::default();
    for (slot, off) in [-1.0, 0.0, 1.0].iter().enumerate() {
        let c = vec3::add(p, vec3::scale(dir, off * sp.plane_gap));
        let plane = extract_orthogonal_plane(vol, c, dir, sp.plane_half_extent, sp.plane_spacing)?;
        let cp = plane.center_pixel();
        lengths[slot] = cast_rays(&plane, cp, sp.n_rays, sp.r_max);
    }
    Ok(gf_from_lengths(&lengths, sp.trim, sp.k, sp.pairing))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedCandidate {
    /// Voxel index `(x, y, z)`.
    pub point: [usize; 3],
    pub world: Vec3,
    pub frangi: f64,
    pub gf: f64,
    pub intensity: f64,
    pub direction: Vec3,
    pub accepted: bool,
}

impl SeedCandidate {
    pub fn passes(&self, t_f: f64, t_gf: f64, v_t: f64) -> bool {
        self.frangi >= t_f && self.gf >= t_gf && self.intensity >= v_t
    }
}

/// Scores every ROI centroid on slice `k`; verdicts use `p.v_t`.
pub fn score_candidates(
    vol: &Volume3D,
    vf: &VesselnessField,
    rois: &[Roi2D],
    k: usize,
    p: &SeedParams,
) -> Result<Vec<SeedCandidate>> {
    p.validate()?;
    let g = vol.geometry();
    g.ensure_same(vf.v.geometry())?;
    if k >= g.dims[2] {
        return Err(Error::InvalidArgument(format!("slice {k} out of range")));
    }
    let smoothed;
    let gf_vol = if p.gf_smoothing > 0.0 && !rois.is_empty() {
        smoothed = gaussian_smooth(vol, p.gf_smoothing)?;
        &smoothed
    } else {
        vol
    };
    let mut out = Vec::with_capacity(rois.len());
    for roi in rois {
        let i = (roi.centroid[0].round() as usize).min(g.dims[0] - 1);
        let j = (roi.centroid[1].round() as usize).min(g.dims[1] - 1);
        let idx = g.index(i, j, k);
        let scale = vf.best_scale.data()[idx];
        let dir = vessel_direction(vol, [i, j, k], scale)?;
        let world = g.world(i, j, k);
        let (gf, _) = geometric_feature(gf_vol, world, dir, p)?;
        let mut c = SeedCandidate {
            point: [i, j, k],
            world,
            frangi: vf.v.data()[idx],
            gf,
            intensity: vol.data()[idx],
            direction: dir,
            accepted: false,
        };
        c.accepted = c.passes(p.t_f, p.t_gf, p.v_t);
        out.push(c);
    }
    Ok(out)
}

/// Re-applies thresholds and returns accepted candidates ranked by intensity
/// (descending), ties by `(y, x)` ascending.
pub fn select_seeds(candidates: &[SeedCandidate], t_f: f64, t_gf: f64, v_t: f64) -> Result<Vec<SeedCandidate>> {
    let mut acc: Vec<SeedCandidate> = candidates
        .iter()
        .filter(|c| c.passes(t_f, t_gf, v_t))
        .cloned()
        .map(|mut c| {
            c.accepted = true;
            c
        })
        .collect();
    if acc.is_empty() {
        return Err(Error::NoSeed {
            candidates: candidates.len(),
        });
    }
    acc.sort_by(|a, b| {
        b.intensity
            .total_cmp(&a.intensity)
            .then(a.point[1].cmp(&b.point[1]))
            .then(a.point[0].cmp(&b.point[0]))
    });
    Ok(acc)
}

/// Reference slice, body mask and ROIs for a volume.
pub fn find_rois(vol: &Volume3D, p: &SeedParams) -> Result<(usize, Vec<Roi2D>)> {
    p.validate()?;
    let k = select_reference_slice(vol.dims()[2], p.cr)?;
    let slice = vol.extract_axial_slice(k)?;
    let body = body_region_mask(&slice)?;
    Ok((k, detect_closed_rois(&slice, &body, p)?))
}
