use std::collections::VecDeque;

use super::{BinaryMask, Grid2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbours (6 in 3D, 4 in 2D).
    Face,
    /// Face, edge and corner neighbours (26 in 3D, 8 in 2D).
    Full,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 | 4 => Some(Connectivity::Face),
            26 | 8 => Some(Connectivity::Full),
            _ => None,
        }
    }

    fn offsets3(self) -> Vec<[isize; 3]> {
        let mut v = Vec::new();
        for dk in -1..=1isize {
            for dj in -1..=1isize {
                for di in -1..=1isize {
                    let m = di.abs() + dj.abs() + dk.abs();
                    if m == 0 {
                        continue;
                    }
                    if self == Connectivity::Face && m != 1 {
                        continue;
                    }
                    v.push([di, dj, dk]);
                }
            }
        }
        v
    }

    fn offsets2(self) -> Vec<[isize; 2]> {
        let mut v = Vec::new();
        for dj in -1..=1isize {
            for di in -1..=1isize {
                let m = di.abs() + dj.abs();
                if m == 0 || (self == Connectivity::Face && m != 1) {
                    continue;
                }
                v.push([di, dj]);
            }
        }
        v
    }
}

/// Labelled components: `labels[i] == 0` is background, components are
/// numbered from 1 in scan order; `sizes[l - 1]` is the size of label `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Label of the largest component (lowest label on ties).
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (i, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, i as u32 + 1));
            }
        }
        best.map(|(_, l)| l)
    }
}

pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> Components {
    let g = mask.geometry();
    let offs = conn.offsets3();
    let mut labels = vec![0u32; g.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let [i, j, k] = g.coords(idx);
            for o in &offs {
                if let Some(n) = g.checked_index(i as isize + o[0], j as isize + o[1], k as isize + o[2]) {
                    if mask.data()[n] && labels[n] == 0 {
                        labels[n] = label;
                        queue.push_back(n);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

pub fn connected_components_2d(mask: &Grid2<bool>, conn: Connectivity) -> Components {
    let offs = conn.offsets2();
    let n = mask.nx * mask.ny;
    let mut labels = vec![0u32; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (x, y) = ((idx % mask.nx) as isize, (idx / mask.nx) as isize);
            for o in &offs {
                let (xn, yn) = (x + o[0], y + o[1]);
                if mask.in_bounds(xn, yn) {
                    let ni = xn as usize + mask.nx * yn as usize;
                    if mask.data[ni] && labels[ni] == 0 {
                        labels[ni] = label;
                        queue.push_back(ni);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

/// Offsets of the spherical structuring element `|d . spacing| <= radius`.
fn ball_offsets(spacing: [f64; 3], radius: f64) -> Vec<[isize; 3]> {
    let r = [
        (radius / spacing[0]).floor() as isize,
        (radius / spacing[1]).floor() as isize,
        (radius / spacing[2]).floor() as isize,
    ];
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut v = Vec::new();
    for dk in -r[2]..=r[2] {
        for dj in -r[1]..=r[1] {
            for di in -r[0]..=r[0] {
                let d2 = (di as f64 * spacing[0]).powi(2)
                    + (dj as f64 * spacing[1]).powi(2)
                    + (dk as f64 * spacing[2]).powi(2);
                if d2 <= r2 {
                    v.push([di, dj, dk]);
                }
            }
        }
    }
    v
}

/// Dilation by a ball of `radius` mm.
pub fn dilate(mask: &BinaryMask, radius: f64) -> BinaryMask {
    let g = mask.geometry();
    let offs = ball_offsets(g.spacing, radius.max(0.0));
    let mut out = mask.clone();
    for idx in mask.indices() {
        let [i, j, k] = g.coords(idx);
        for o in &offs {
            if let Some(n) = g.checked_index(i as isize + o[0], j as isize + o[1], k as isize + o[2]) {
                out.data_mut()[n] = true;
            }
        }
    }
    out
}

/// Erosion by a ball of `radius` mm. Voxels outside the grid count as background.
pub fn erode(mask: &BinaryMask, radius: f64) -> BinaryMask {
    let g = mask.geometry();
    let offs = ball_offsets(g.spacing, radius.max(0.0));
    let mut out = BinaryMask::empty(g.clone());
    for idx in mask.indices() {
        let [i, j, k] = g.coords(idx);
        let keep = offs.iter().all(|o| {
            g.checked_index(i as isize + o[0], j as isize + o[1], k as isize + o[2])
                .is_some_and(|n| mask.data()[n])
        });
        if keep {
            out.data_mut()[idx] = true;
        }
    }
    out
}

/// Dilation of a 2D mask by a disc of `radius` pixels.
pub fn dilate_2d(mask: &Grid2<bool>, radius: f64) -> Grid2<bool> {
    let r = radius.max(0.0).floor() as isize;
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 <= r2 {
                offs.push((dx, dy));
            }
        }
    }
    let mut out = mask.clone();
    for y in 0..mask.ny {
        for x in 0..mask.nx {
            if !mask.get(x, y) {
                continue;
            }
            for &(dx, dy) in &offs {
                let (xn, yn) = (x as isize + dx, y as isize + dy);
                if mask.in_bounds(xn, yn) {
                    out.set(xn as usize, yn as usize, true);
                }
            }
        }
    }
    out
}

/// Fills background regions not 4-connected to the image border.
pub fn fill_holes_2d(mask: &Grid2<bool>) -> Grid2<bool> {
    let (nx, ny) = (mask.nx, mask.ny);
    let mut outside = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    for y in 0..ny {
        for x in 0..nx {
            if (x == 0 || y == 0 || x == nx - 1 || y == ny - 1) && !mask.get(x, y) {
                let i = mask.idx(x, y);
                if !outside[i] {
                    outside[i] = true;
                    queue.push_back(i);
                }
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % nx) as isize, (i / nx) as isize);
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (xn, yn) = (x + dx, y + dy);
            if mask.in_bounds(xn, yn) {
                let ni = xn as usize + nx * yn as usize;
                if !mask.data[ni] && !outside[ni] {
                    outside[ni] = true;
                    queue.push_back(ni);
                }
            }
        }
    }
    Grid2 {
        nx,
        ny,
        data: outside.iter().map(|&o| !o).collect(),
    }
}

/// 1D lower envelope of parabolas (Felzenszwalb & Huttenlocher) with sample
/// spacing `w`: `out[p] = min_q (w (p - q))^2 + f[q]`.
pub(crate) fn edt_1d(f: &[f64], w: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let first = f.iter().position(|x| x.is_finite());
    let Some(first) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let w2 = w * w;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + w2 * (q * q) as f64) - (f[p] + w2 * (p * p) as f64)) / (2.0 * w2 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: replace the only parabola
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut j = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while z[j + 1] < p as f64 {
            j += 1;
        }
        let d = w * (p as f64 - v[j] as f64);
        *o = d * d + f[v[j]];
    }
}

/// Squared Euclidean distance (pixels) from every pixel to the nearest
/// `true` pixel; infinite when there is none.
pub fn edt_squared_2d(features: &Grid2<bool>) -> Grid2<f64> {
    let (nx, ny) = (features.nx, features.ny);
    let mut d: Vec<f64> = features
        .data
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut col = vec![0.0; ny];
    let mut colout = vec![0.0; ny];
    for x in 0..nx {
        for y in 0..ny {
            col[y] = d[x + nx * y];
        }
        edt_1d(&col, 1.0, &mut colout);
        for y in 0..ny {
            d[x + nx * y] = colout[y];
        }
    }
    let mut row = vec![0.0; nx];
    for y in 0..ny {
        edt_1d(&d[nx * y..nx * (y + 1)], 1.0, &mut row);
        d[nx * y..nx * (y + 1)].copy_from_slice(&row);
    }
    Grid2 { nx, ny, data: d }
}

/// Squared Euclidean distance (mm^2) from every voxel to the nearest `true`
/// voxel of `features`, honouring anisotropic spacing.
pub(crate) fn edt_squared_3d(features: &BinaryMask) -> Vec<f64> {
    let g = features.geometry();
    let [nx, ny, nz] = g.dims;
    let mut d: Vec<f64> = features
        .data()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut buf = Vec::new();
    let mut out = Vec::new();
    // x
    for k in 0..nz {
        for j in 0..ny {
            let s = g.index(0, j, k);
            buf.clear();
            buf.extend_from_slice(&d[s..s + nx]);
            out.resize(nx, 0.0);
            edt_1d(&buf, g.spacing[0], &mut out);
            d[s..s + nx].copy_from_slice(&out);
        }
    }
    // y
    for k in 0..nz {
        for i in 0..nx {
            buf.clear();
            buf.extend((0..ny).map(|j| d[g.index(i, j, k)]));
            out.resize(ny, 0.0);
            edt_1d(&buf, g.spacing[1], &mut out);
            for j in 0..ny {
                d[g.index(i, j, k)] = out[j];
            }
        }
    }
    // z
    for j in 0..ny {
        for i in 0..nx {
            buf.clear();
            buf.extend((0..nz).map(|k| d[g.index(i, j, k)]));
            out.resize(nz, 0.0);
            edt_1d(&buf, g.spacing[2], &mut out);
            for k in 0..nz {
                d[g.index(i, j, k)] = out[k];
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use proptest::prelude::*;

    fn cube_mask(n: usize, cubes: &[([usize; 3], usize)]) -> BinaryMask {
        let g = Geometry::isotropic([n, n, n], 1.0).unwrap();
        BinaryMask::from_fn(g, |i, j, k| {
            cubes.iter().any(|(o, s)| {
                (o[0]..o[0] + s).contains(&i) && (o[1]..o[1] + s).contains(&j) && (o[2]..o[2] + s).contains(&k)
            })
        })
    }

    #[test]
    fn two_disjoint_cubes() {
        let m = cube_mask(12, &[([1, 1, 1], 3), ([7, 7, 7], 3)]);
        let c = connected_components(&m, Connectivity::Full);
        assert_eq!(c.sizes, vec![27, 27]);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = cube_mask(5, &[]);
        assert_eq!(connected_components(&m, Connectivity::Face).count(), 0);
    }

    #[test]
    fn corner_touching_cubes() {
        let m = cube_mask(10, &[([1, 1, 1], 3), ([4, 4, 4], 3)]);
        assert_eq!(connected_components(&m, Connectivity::Full).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Face).count(), 2);
    }

    #[test]
    fn dilate_single_voxel_is_cross() {
        let m = cube_mask(5, &[([2, 2, 2], 1)]);
        assert_eq!(dilate(&m, 0.0), m);
        let d = dilate(&m, 1.0);
        assert_eq!(d.count(), 7);
        assert!(d.get(2, 2, 3) && d.get(1, 2, 2) && !d.get(1, 1, 2));
    }

    #[test]
    fn eroded_ball_volume() {
        let n = 21;
        let g = Geometry::isotropic([n, n, n], 1.0).unwrap();
        let ball = BinaryMask::from_fn(g, |i, j, k| {
            let d2 = (i as f64 - 10.0).powi(2) + (j as f64 - 10.0).powi(2) + (k as f64 - 10.0).powi(2);
            d2 <= 16.0
        });
        let e = erode(&ball, 2.0);
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * 8.0;
        let rel = (e.count() as f64 - analytic).abs() / analytic;
        assert!(rel <= 0.15, "eroded count {} vs {analytic}", e.count());
        assert_eq!(erode(&ball, 0.0), ball);
    }

    #[test]
    fn fill_holes_ring() {
        let ring = Grid2::from_fn(9, 9, |x, y| {
            let d2 = (x as f64 - 4.0).powi(2) + (y as f64 - 4.0).powi(2);
            (4.0..=12.0).contains(&d2)
        });
        let f = fill_holes_2d(&ring);
        assert!(f.get(4, 4));
        assert!(!f.get(0, 0));
    }

    #[test]
    fn edt_2d_matches_brute_force() {
        let feats = Grid2::from_fn(13, 11, |x, y| (x * 7 + y * 3) % 17 == 0);
        let d = edt_squared_2d(&feats);
        for y in 0..11 {
            for x in 0..13 {
                let mut best = f64::INFINITY;
                for yy in 0..11 {
                    for xx in 0..13 {
                        if feats.get(xx, yy) {
                            let dd = (x as f64 - xx as f64).powi(2) + (y as f64 - yy as f64).powi(2);
                            best = best.min(dd);
                        }
                    }
                }
                assert!((d.get(x, y) - best).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn edt_3d_anisotropic_brute_force() {
        let g = Geometry::new([6, 5, 4], [0.5, 1.0, 2.0], [0.0; 3]).unwrap();
        let m = BinaryMask::from_fn(g.clone(), |i, j, k| (i + 2 * j + 3 * k) % 7 == 0);
        let d = edt_squared_3d(&m);
        for idx in 0..g.len() {
            let p = g.coords(idx);
            let mut best = f64::INFINITY;
            for q in m.indices() {
                let c = g.coords(q);
                let dd: f64 = (0..3)
                    .map(|a| ((p[a] as f64 - c[a] as f64) * g.spacing[a]).powi(2))
                    .sum();
                best = best.min(dd);
            }
            assert!((d[idx] - best).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn dilation_is_monotone(bits in proptest::collection::vec(any::<bool>(), 216), extra in proptest::collection::vec(any::<bool>(), 216), r in 0.0f64..2.5) {
            let g = Geometry::isotropic([6, 6, 6], 1.0).unwrap();
            let m1 = BinaryMask::from_vec(g.clone(), bits.clone()).unwrap();
            let m2 = BinaryMask::from_vec(g, bits.iter().zip(&extra).map(|(&a, &b)| a || b).collect()).unwrap();
            let d1 = dilate(&m1, r);
            let d2 = dilate(&m2, r);
            prop_assert!(d1.data().iter().zip(d2.data()).all(|(&a, &b)| !a || b));
            let e = erode(&m1, r);
            prop_assert!(e.data().iter().zip(m1.data()).all(|(&a, &b)| !a || b));
            prop_assert!(d1.data().iter().zip(m1.data()).all(|(&a, &b)| a || !b));
        }
    }
}
