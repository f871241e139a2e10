use serde::{Deserialize, Serialize};

use super::{evolve, init_sdf, interior, EvolutionParams};
use crate::error::{Error, Result};
use crate::volume::{
    connected_components, connected_components_2d, dilate_2d, BinaryMask, Connectivity, Grid2, Volume3D,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Increasing slice index.
    Forward,
    Backward,
}

impl Direction {
    fn next(self, k: usize, nz: usize) -> Option<usize> {
        match self {
            Direction::Forward => (k + 1 < nz).then_some(k + 1),
            Direction::Backward => k.checked_sub(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Empty,
    AortaMerge,
    VolumeEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub k: usize,
    pub direction: Direction,
    pub iterations: usize,
    pub converged: bool,
    pub area: usize,
    /// 8-connected contour components in the converged slice mask.
    pub components: usize,
    /// Pixels added by branch capture at initialization.
    pub captured: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    pub direction: Direction,
    /// Converged slice masks in visiting order.
    pub slices: Vec<(usize, Grid2<bool>)>,
    pub records: Vec<SliceRecord>,
    pub stop: StopReason,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationResult {
    pub mask: BinaryMask,
    pub records: Vec<SliceRecord>,
    pub forward_stop: StopReason,
    pub backward_stop: StopReason,
}

fn slice_grid(vol: &Volume3D, k: usize) -> Grid2<f64> {
    let [nx, ny, _] = vol.dims();
    Grid2::from_fn(nx, ny, |i, j| vol.get(i, j, k))
}

/// Maps HU to `[0, 1]`: with a gate `[lo, hi]` the window is
/// `[lo - (hi - lo), hi]`, otherwise `fallback`.
pub fn normalize_slice(slice: &Grid2<f64>, gate: Option<[f64; 2]>, fallback: [f64; 2]) -> Grid2<f64> {
    let [a, b] = match gate {
        Some([lo, hi]) => [lo - (hi - lo), hi],
        None => fallback,
    };
    let w = if b > a { b - a } else { 1.0 };
    Grid2 {
        nx: slice.nx,
        ny: slice.ny,
        data: slice.data.iter().map(|&v| ((v - a) / w).clamp(0.0, 1.0)).collect(),
    }
}

fn allowed_mask(hu: &Grid2<f64>, vess: Option<&Grid2<f64>>, gate: Option<[f64; 2]>, t_v: f64) -> Grid2<bool> {
    Grid2::from_fn(hu.nx, hu.ny, |x, y| {
        let v = hu.get(x, y);
        let in_gate = gate.is_none_or(|[lo, hi]| v >= lo && v <= hi);
        let vessel = vess.is_none_or(|g| g.get(x, y) >= t_v);
        in_gate && vessel
    })
}

/// Adds pixels within `capture_px` of `mask` that pass the HU gate and the
/// vesselness threshold. Without either criterion nothing is captured.
pub fn adjust_mask_for_branches(
    mask: &Grid2<bool>,
    hu: &Grid2<f64>,
    vesselness: Option<&Grid2<f64>>,
    gate: Option<[f64; 2]>,
    t_v: f64,
    capture_px: f64,
) -> Grid2<bool> {
    if !mask.any() || capture_px <= 0.0 || (gate.is_none() && vesselness.is_none()) {
        return mask.clone();
    }
    let reach = dilate_2d(mask, capture_px);
    let ok = allowed_mask(hu, vesselness, gate, t_v);
    Grid2 {
        nx: mask.nx,
        ny: mask.ny,
        data: mask
            .data
            .iter()
            .zip(reach.data.iter().zip(&ok.data))
            .map(|(&m, (&r, &a))| m || (r && a))
            .collect(),
    }
}

fn seed_disc(nx: usize, ny: usize, seed: [usize; 3], radius: f64, spacing: [f64; 2]) -> Grid2<bool> {
    Grid2::from_fn(nx, ny, |x, y| {
        let dx = (x as f64 - seed[0] as f64) * spacing[0];
        let dy = (y as f64 - seed[1] as f64) * spacing[1];
        dx.hypot(dy) <= radius || (x == seed[0] && y == seed[1])
    })
}

fn and(a: &Grid2<bool>, b: &Grid2<bool>) -> Grid2<bool> {
    Grid2 {
        nx: a.nx,
        ny: a.ny,
        data: a.data.iter().zip(&b.data).map(|(x, y)| *x && *y).collect(),
    }
}

/// Slice-by-slice localized evolution from the seed slice in one direction.
pub fn slice_propagate(
    vol: &Volume3D,
    seed: [usize; 3],
    direction: Direction,
    vesselness: Option<&Volume3D>,
    aorta: Option<&BinaryMask>,
    p: &EvolutionParams,
) -> Result<Propagation> {
    p.validate()?;
    let g = vol.geometry();
    let [nx, ny, nz] = g.dims;
    if seed[0] >= nx || seed[1] >= ny || seed[2] >= nz {
        return Err(Error::InvalidArgument(format!("seed {seed:?} outside the volume")));
    }
    if let Some(v) = vesselness {
        g.ensure_same(v.geometry())?;
    }
    if let Some(a) = aorta {
        g.ensure_same(a.geometry())?;
    }
    let spacing = [g.spacing[0], g.spacing[1]];
    let (vmin, vmax) = vol.min_max();
    let capture_px = p.capture_radius / spacing[0].min(spacing[1]);

    let slice_inputs = |k: usize| {
        let hu = slice_grid(vol, k);
        let vs = vesselness.map(|v| slice_grid(v, k));
        let allowed = allowed_mask(&hu, vs.as_ref(), p.hu_gate, p.t_v);
        (hu, vs, allowed)
    };

    let (hu0, _, allowed0) = slice_inputs(seed[2]);
    if !allowed0.get(seed[0], seed[1]) {
        return Err(Error::InvalidArgument(format!(
            "seed {seed:?} (HU {}) fails the intensity gate",
            hu0.get(seed[0], seed[1])
        )));
    }
    let mut init = and(&seed_disc(nx, ny, seed, p.seed_radius, spacing), &allowed0);
    let mut captured = 0;
    let mut k = seed[2];
    let mut out = Propagation {
        direction,
        slices: Vec::new(),
        records: Vec::new(),
        stop: StopReason::VolumeEnd,
    };
    let mut cur = Some((hu0, allowed0));
    loop {
        let (hu, allowed) = cur.take().unwrap();
        let img = normalize_slice(&hu, p.hu_gate, [vmin, vmax]);
        let phi0 = init_sdf(&init, Some(p.band))?;
        let ev = evolve(phi0, &img, spacing, Some(&allowed), p)?;
        let mask = and(&interior(&ev.phi), &allowed);
        let area = mask.count();
        if area == 0 {
            out.stop = StopReason::Empty;
            break;
        }
        if let (Some(a), true) = (aorta, k != seed[2]) {
            let overlap = (0..nx * ny)
                .filter(|&i| mask.data[i] && a.data()[i + nx * ny * k])
                .count();
            if overlap as f64 > p.aorta_overlap * area as f64 {
                out.stop = StopReason::AortaMerge;
                break;
            }
        }
        out.records.push(SliceRecord {
            k,
            direction,
            iterations: ev.iterations,
            converged: ev.converged,
            area,
            components: connected_components_2d(&mask, Connectivity::Full).count(),
            captured,
        });
        let Some(nk) = direction.next(k, nz) else {
            out.slices.push((k, mask));
            out.stop = StopReason::VolumeEnd;
            break;
        };
        let (hu_n, vs_n, allowed_n) = slice_inputs(nk);
        let grown = if p.init_dilation > 0.0 {
            dilate_2d(&mask, p.init_dilation)
        } else {
            mask.clone()
        };
        let with_branches = adjust_mask_for_branches(&mask, &hu_n, vs_n.as_ref(), p.hu_gate, p.t_v, capture_px);
        let base = and(&grown, &allowed_n);
        let next = and(
            &Grid2 {
                nx,
                ny,
                data: base
                    .data
                    .iter()
                    .zip(&with_branches.data)
                    .map(|(&b, &w)| b || w)
                    .collect(),
            },
            &allowed_n,
        );
        captured = next.count() - base.count();
        out.slices.push((k, mask));
        if !next.any() {
            out.stop = StopReason::Empty;
            break;
        }
        init = next;
        k = nk;
        cur = Some((hu_n, allowed_n));
    }
    Ok(out)
}

/// Forward and backward propagation from the seed, merged by union and
/// reduced to the 26-connected component holding the seed.
pub fn segment_tree(
    vol: &Volume3D,
    seed: [usize; 3],
    vesselness: Option<&Volume3D>,
    aorta: Option<&BinaryMask>,
    p: &EvolutionParams,
) -> Result<SegmentationResult> {
    let fwd = slice_propagate(vol, seed, Direction::Forward, vesselness, aorta, p)?;
    let bwd = slice_propagate(vol, seed, Direction::Backward, vesselness, aorta, p)?;
    let g = vol.geometry().clone();
    let [nx, ny, _] = g.dims;
    let mut union = BinaryMask::empty(g.clone());
    for (k, m) in fwd.slices.iter().chain(&bwd.slices) {
        for (i, &b) in m.data.iter().enumerate() {
            if b {
                union.data_mut()[i + nx * ny * k] = true;
            }
        }
    }
    let seed_idx = g.index(seed[0], seed[1], seed[2]);
    if !union.data()[seed_idx] {
        return Err(Error::Empty("segmentation lost the seed voxel".into()));
    }
    let comps = connected_components(&union, Connectivity::Full);
    let label = comps.labels[seed_idx];
    let data = comps.labels.iter().map(|&l| l == label).collect();
    let mask = BinaryMask::from_vec(g, data)?;
    let mut records = bwd.records;
    records.reverse();
    records.extend(fwd.records.into_iter().skip(1));
    Ok(SegmentationResult {
        mask,
        records,
        forward_stop: fwd.stop,
        backward_stop: bwd.stop,
    })
}
