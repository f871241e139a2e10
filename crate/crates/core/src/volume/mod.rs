//! Volume, mask and image containers shared by every stage.
//!
//! Voxel data are stored x-fastest, then y, then z. The world position of
//! voxel `(i, j, k)` is `origin + (i * sx, j * sy, k * sz)` in millimetres.

mod filter;
pub mod io;
mod morphology;

pub use filter::{gaussian_kernel, gaussian_smooth, gaussian_smooth_2d, smooth_region, trilinear_sample};
pub(crate) use morphology::edt_squared_3d;
pub use morphology::{
    connected_components, connected_components_2d, dilate, dilate_2d, edt_squared_2d, erode, fill_holes_2d, Components,
    Connectivity,
};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Grid geometry: voxel counts, spacing (mm) and origin (mm).
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Geometry { dims, spacing, origin })
    }

    /// Isotropic geometry with origin at zero.
    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Result<Self> {
        Self::new(dims, [spacing; 3], [0.0; 3])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index of `(i, j, k)` given as signed offsets, or `None` when outside.
    #[inline]
    pub fn checked_index(&self, i: isize, j: isize, k: isize) -> Option<usize> {
        if i < 0 || j < 0 || k < 0 {
            return None;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return None;
        }
        Some(self.index(i, j, k))
    }

    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// World position of a continuous voxel coordinate.
    #[inline]
    pub fn world_continuous(&self, c: Vec3) -> Vec3 {
        [
            self.origin[0] + c[0] * self.spacing[0],
            self.origin[1] + c[1] * self.spacing[1],
            self.origin[2] + c[2] * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinate of a world point.
    #[inline]
    pub fn continuous_index(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Nearest voxel to a world point, clamped into the grid.
    pub fn nearest_voxel(&self, p: Vec3) -> [usize; 3] {
        let c = self.continuous_index(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            out[a] = c[a].round().clamp(0.0, (self.dims[a] - 1) as f64) as usize;
        }
        out
    }

    /// Whether a world point lies within the voxel-centre bounding box.
    pub fn contains_world(&self, p: Vec3) -> bool {
        let c = self.continuous_index(p);
        (0..3).all(|a| c[a] >= -1e-9 && c[a] <= (self.dims[a] - 1) as f64 + 1e-9)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn ensure_same(&self, other: &Geometry) -> Result<()> {
        if self.dims != other.dims || self.spacing != other.spacing || self.origin != other.origin {
            return Err(Error::GeometryMismatch(format!(
                "{:?}/{:?} vs {:?}/{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )));
        }
        Ok(())
    }
}

/// Regular 3D scalar grid (HU or derived scalars).
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    geom: Geometry,
    data: Vec<f64>,
}

impl Volume3D {
    pub fn from_vec(geom: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geom.dims
            )));
        }
        Ok(Volume3D { geom, data })
    }

    pub fn filled(geom: Geometry, value: f64) -> Self {
        let n = geom.len();
        Volume3D {
            geom,
            data: vec![value; n],
        }
    }

    /// Builds a volume by evaluating `f(i, j, k)` in storage order.
    pub fn from_fn(geom: Geometry, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [nx, ny, nz] = geom.dims;
        let mut data = Vec::with_capacity(geom.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Volume3D { geom, data }
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.geom.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.geom.index(i, j, k);
        self.data[idx] = v;
    }

    /// Value at signed index with edge clamping.
    #[inline]
    pub fn get_clamped(&self, i: isize, j: isize, k: isize) -> f64 {
        let [nx, ny, nz] = self.geom.dims;
        let i = i.clamp(0, nx as isize - 1) as usize;
        let j = j.clamp(0, ny as isize - 1) as usize;
        let k = k.clamp(0, nz as isize - 1) as usize;
        self.get(i, j, k)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume3D {
        Volume3D {
            geom: self.geom.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy of the axial plane `z = k` with an axial embedding frame.
    pub fn extract_axial_slice(&self, k: usize) -> Result<Image2D> {
        let [nx, ny, nz] = self.geom.dims;
        if k >= nz {
            return Err(Error::InvalidArgument(format!("slice index {k} out of range 0..{nz}")));
        }
        let start = self.geom.index(0, 0, k);
        let data = self.data[start..start + nx * ny].to_vec();
        let c = self
            .geom
            .world_continuous([(nx - 1) as f64 / 2.0, (ny - 1) as f64 / 2.0, k as f64]);
        Ok(Image2D {
            dims: [nx, ny],
            spacing: [self.geom.spacing[0], self.geom.spacing[1]],
            data,
            frame: Some(Frame {
                center: c,
                u: [1.0, 0.0, 0.0],
                v: [0.0, 1.0, 0.0],
            }),
        })
    }

    /// Sub-volume covering the inclusive index box `[lo, hi]`.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<Volume3D> {
        for a in 0..3 {
            if lo[a] > hi[a] || hi[a] >= self.geom.dims[a] {
                return Err(Error::InvalidArgument(format!("bad crop box {lo:?}..{hi:?}")));
            }
        }
        let dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
        let origin = self.geom.world(lo[0], lo[1], lo[2]);
        let geom = Geometry::new(dims, self.geom.spacing, origin)?;
        Ok(Volume3D::from_fn(geom, |i, j, k| {
            self.get(lo[0] + i, lo[1] + j, lo[2] + k)
        }))
    }
}

/// Boolean volume sharing a [`Geometry`] with its source volume.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    geom: Geometry,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(geom: Geometry) -> Self {
        let n = geom.len();
        BinaryMask {
            geom,
            data: vec![false; n],
        }
    }

    pub fn from_vec(geom: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidArgument(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                geom.dims
            )));
        }
        Ok(BinaryMask { geom, data })
    }

    pub fn from_fn(geom: Geometry, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = geom.dims;
        let mut data = Vec::with_capacity(geom.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        BinaryMask { geom, data }
    }

    /// Voxels of `vol` satisfying `pred`.
    pub fn threshold(vol: &Volume3D, pred: impl Fn(f64) -> bool) -> Self {
        BinaryMask {
            geom: vol.geometry().clone(),
            data: vol.data().iter().map(|&v| pred(v)).collect(),
        }
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.geom.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.geom.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            geom: self.geom.clone(),
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geom.ensure_same(&other.geom)?;
        Ok(BinaryMask {
            geom: self.geom.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geom.ensure_same(&other.geom)?;
        Ok(BinaryMask {
            geom: self.geom.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        })
    }

    /// The axial slice `z = k` as a 2D grid.
    pub fn slice(&self, k: usize) -> Grid2<bool> {
        let [nx, ny, _] = self.geom.dims;
        let start = self.geom.index(0, 0, k);
        Grid2 {
            nx,
            ny,
            data: self.data[start..start + nx * ny].to_vec(),
        }
    }

    pub fn set_slice(&mut self, k: usize, s: &Grid2<bool>) {
        let [nx, ny, _] = self.geom.dims;
        debug_assert_eq!((s.nx, s.ny), (nx, ny));
        let start = self.geom.index(0, 0, k);
        self.data[start..start + nx * ny].copy_from_slice(&s.data);
    }

    /// Indices of set voxels in storage order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

/// Plain 2D grid, x-fastest. Used for slice-wise fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2<T> {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(nx: usize, ny: usize, v: T) -> Self {
        Grid2 {
            nx,
            ny,
            data: vec![v; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                data.push(f(x, y));
            }
        }
        Grid2 { nx, ny, data }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        x + self.nx * y
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[x + self.nx * y].clone()
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let i = x + self.nx * y;
        self.data[i] = v;
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.nx as isize - 1) as usize;
        let y = y.clamp(0, self.ny as isize - 1) as usize;
        self.get(x, y)
    }

    #[inline]
    pub fn in_bounds(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.nx && (y as usize) < self.ny
    }
}

impl Grid2<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }
}

/// Embedding of a 2D image in world space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub center: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

/// 2D scalar image with physical spacing and an optional world frame.
///
/// Pixel `(a, b)` maps to `center + (a - (nu-1)/2) su u + (b - (nv-1)/2) sv v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    pub dims: [usize; 2],
    pub spacing: [f64; 2],
    pub data: Vec<f64>,
    pub frame: Option<Frame>,
}

impl Image2D {
    pub fn new(dims: [usize; 2], spacing: [f64; 2], data: Vec<f64>) -> Result<Self> {
        if dims[0] == 0 || dims[1] == 0 || data.len() != dims[0] * dims[1] {
            return Err(Error::InvalidArgument(format!(
                "image data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) {
            return Err(Error::InvalidArgument("image spacing must be positive".into()));
        }
        Ok(Image2D {
            dims,
            spacing,
            data,
            frame: None,
        })
    }

    pub fn with_frame(mut self, frame: Frame) -> Result<Self> {
        let uu = vec3::norm(frame.u);
        let vv = vec3::norm(frame.v);
        if (uu - 1.0).abs() > 1e-9 || (vv - 1.0).abs() > 1e-9 || vec3::dot(frame.u, frame.v).abs() > 1e-9 {
            return Err(Error::InvalidArgument("frame axes must be orthonormal".into()));
        }
        self.frame = Some(frame);
        Ok(self)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a + self.dims[0] * b]
    }

    /// Pixel coordinate of the image centre.
    pub fn center_pixel(&self) -> [f64; 2] {
        [(self.dims[0] - 1) as f64 / 2.0, (self.dims[1] - 1) as f64 / 2.0]
    }

    /// World position of a (possibly fractional) pixel coordinate.
    pub fn world(&self, a: f64, b: f64) -> Option<Vec3> {
        let f = self.frame?;
        let c = self.center_pixel();
        let du = (a - c[0]) * self.spacing[0];
        let dv = (b - c[1]) * self.spacing[1];
        Some(vec3::add(
            f.center,
            vec3::add(vec3::scale(f.u, du), vec3::scale(f.v, dv)),
        ))
    }

    /// Bilinear sample at a fractional pixel coordinate, clamped to the edge.
    pub fn sample(&self, a: f64, b: f64) -> f64 {
        let [nu, nv] = self.dims;
        let a = a.clamp(0.0, (nu - 1) as f64);
        let b = b.clamp(0.0, (nv - 1) as f64);
        let a0 = (a.floor() as usize).min(nu.saturating_sub(2));
        let b0 = (b.floor() as usize).min(nv.saturating_sub(2));
        let a1 = (a0 + 1).min(nu - 1);
        let b1 = (b0 + 1).min(nv - 1);
        let fa = a - a0 as f64;
        let fb = b - b0 as f64;
        let v00 = self.get(a0, b0);
        let v10 = self.get(a1, b0);
        let v01 = self.get(a0, b1);
        let v11 = self.get(a1, b1);
        (v00 * (1.0 - fa) + v10 * fa) * (1.0 - fb) + (v01 * (1.0 - fa) + v11 * fa) * fb
    }

    pub fn median(&self) -> f64 {
        let mut v = self.data.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn as_grid(&self) -> Grid2<f64> {
        Grid2 {
            nx: self.dims[0],
            ny: self.dims[1],
            data: self.data.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_validation() {
        assert!(Geometry::new([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(Geometry::new([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        let g = Geometry::new([3, 4, 5], [0.5, 1.0, 2.0], [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.len(), 60);
        assert_eq!(g.world(2, 3, 4), [2.0, 5.0, 11.0]);
        let idx = g.index(2, 3, 4);
        assert_eq!(g.coords(idx), [2, 3, 4]);
    }

    #[test]
    fn axial_slice_is_constant_k() {
        let g = Geometry::isotropic([5, 6, 7], 0.5).unwrap();
        let vol = Volume3D::from_fn(g, |_, _, k| k as f64);
        let s = vol.extract_axial_slice(3).unwrap();
        assert_eq!(s.dims, [5, 6]);
        assert!(s.data.iter().all(|&v| v == 3.0));
        assert_eq!(s.spacing, [0.5, 0.5]);
        assert!(vol.extract_axial_slice(7).is_err());
    }

    #[test]
    fn volume_length_invariant() {
        let g = Geometry::isotropic([2, 2, 2], 1.0).unwrap();
        assert!(Volume3D::from_vec(g.clone(), vec![0.0; 7]).is_err());
        assert!(Volume3D::from_vec(g, vec![0.0; 8]).is_ok());
    }

    #[test]
    fn frame_must_be_orthonormal() {
        let img = Image2D::new([2, 2], [1.0, 1.0], vec![0.0; 4]).unwrap();
        let bad = Frame {
            center: [0.0; 3],
            u: [1.0, 0.0, 0.0],
            v: [1.0, 0.0, 0.0],
        };
        assert!(img.clone().with_frame(bad).is_err());
        let good = Frame {
            center: [0.0; 3],
            u: [1.0, 0.0, 0.0],
            v: [0.0, 1.0, 0.0],
        };
        assert!(img.with_frame(good).is_ok());
    }
}
