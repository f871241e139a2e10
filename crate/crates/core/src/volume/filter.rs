use super::{Geometry, Grid2, Volume3D};
use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Normalized Gaussian taps for a standard deviation given in samples.
///
/// Truncated at `ceil(4 sigma)` and renormalized to sum 1. `sigma == 0`
/// yields the single tap `[1.0]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable Gaussian smoothing with `sigma` in millimetres.
///
/// Each axis uses `sigma / spacing` voxels; borders replicate the edge voxel.
pub fn gaussian_smooth(vol: &Volume3D, sigma: f64) -> Result<Volume3D> {
    let [nx, ny, nz] = vol.dims();
    smooth_region(vol, sigma, [0, 0, 0], [nx - 1, ny - 1, nz - 1])
}

/// Smoothed values on the inclusive index box `[lo, hi]`, returned as a
/// sub-volume. Values equal those of [`gaussian_smooth`] over the whole
/// volume bit-for-bit: the box is padded by the kernel radius before each
/// pass and boundary handling uses the full volume's extent.
pub fn smooth_region(vol: &Volume3D, sigma: f64, lo: [usize; 3], hi: [usize; 3]) -> Result<Volume3D> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    let g = vol.geometry();
    let dims = g.dims;
    for a in 0..3 {
        if lo[a] > hi[a] || hi[a] >= dims[a] {
            return Err(Error::InvalidArgument(format!("bad region {lo:?}..{hi:?}")));
        }
    }
    let out_dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let out_geom = Geometry::new(out_dims, g.spacing, g.world(lo[0], lo[1], lo[2]))?;
    if sigma == 0.0 {
        return vol.crop(lo, hi);
    }
    let kernels: Vec<Vec<f64>> = (0..3).map(|a| gaussian_kernel(sigma / g.spacing[a])).collect();
    let radii: Vec<usize> = kernels.iter().map(|k| k.len() / 2).collect();

    let ylo = lo[1].saturating_sub(radii[1]);
    let yhi = (hi[1] + radii[1]).min(dims[1] - 1);
    let zlo = lo[2].saturating_sub(radii[2]);
    let zhi = (hi[2] + radii[2]).min(dims[2] - 1);

    // x pass over [lo.x, hi.x] x [ylo, yhi] x [zlo, zhi]
    let sx = out_dims[0];
    let sy = yhi - ylo + 1;
    let sz = zhi - zlo + 1;
    let kx = &kernels[0];
    let rx = radii[0] as isize;
    let mut xs = vec![0.0; sx * sy * sz];
    for z in 0..sz {
        for y in 0..sy {
            let row = g.index(0, ylo + y, zlo + z);
            let src = &vol.data()[row..row + dims[0]];
            for x in 0..sx {
                let xc = (lo[0] + x) as isize;
                let mut acc = 0.0;
                for (t, w) in kx.iter().enumerate() {
                    let xi = (xc + t as isize - rx).clamp(0, dims[0] as isize - 1) as usize;
                    acc += w * src[xi];
                }
                xs[x + sx * (y + sy * z)] = acc;
            }
        }
    }

    // y pass over [lo.x, hi.x] x [lo.y, hi.y] x [zlo, zhi]
    let oy = out_dims[1];
    let ky = &kernels[1];
    let ry = radii[1] as isize;
    let mut ys = vec![0.0; sx * oy * sz];
    for z in 0..sz {
        for y in 0..oy {
            let yc = (lo[1] + y) as isize;
            for x in 0..sx {
                let mut acc = 0.0;
                for (t, w) in ky.iter().enumerate() {
                    let yi = (yc + t as isize - ry).clamp(0, dims[1] as isize - 1) as usize;
                    acc += w * xs[x + sx * ((yi - ylo) + sy * z)];
                }
                ys[x + sx * (y + oy * z)] = acc;
            }
        }
    }

    // z pass into the output box
    let oz = out_dims[2];
    let kz = &kernels[2];
    let rz = radii[2] as isize;
    let mut out = vec![0.0; sx * oy * oz];
    for z in 0..oz {
        let zc = (lo[2] + z) as isize;
        for y in 0..oy {
            for x in 0..sx {
                let mut acc = 0.0;
                for (t, w) in kz.iter().enumerate() {
                    let zi = (zc + t as isize - rz).clamp(0, dims[2] as isize - 1) as usize;
                    acc += w * ys[x + sx * (y + oy * (zi - zlo))];
                }
                out[x + sx * (y + oy * z)] = acc;
            }
        }
    }
    Volume3D::from_vec(out_geom, out)
}

/// Separable Gaussian smoothing of a 2D grid; sigmas in pixels per axis.
pub fn gaussian_smooth_2d(img: &Grid2<f64>, sigma: [f64; 2]) -> Grid2<f64> {
    let (nx, ny) = (img.nx, img.ny);
    let kx = gaussian_kernel(sigma[0]);
    let ky = gaussian_kernel(sigma[1]);
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0;
            for (t, w) in kx.iter().enumerate() {
                let xi = (x as isize + t as isize - rx).clamp(0, nx as isize - 1) as usize;
                acc += w * img.data[xi + nx * y];
            }
            tmp[x + nx * y] = acc;
        }
    }
    let mut out = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0;
            for (t, w) in ky.iter().enumerate() {
                let yi = (y as isize + t as isize - ry).clamp(0, ny as isize - 1) as usize;
                acc += w * tmp[x + nx * yi];
            }
            out[x + nx * y] = acc;
        }
    }
    Grid2 { nx, ny, data: out }
}

/// Trilinear interpolation at a world point (mm).
///
/// Exact at voxel centres; points outside the grid clamp to the nearest
/// boundary voxel.
pub fn trilinear_sample(vol: &Volume3D, p: Vec3) -> f64 {
    let g = vol.geometry();
    let c = g.continuous_index(p);
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut f = [0.0f64; 3];
    for a in 0..3 {
        let n = g.dims[a];
        let x = if c[a].is_nan() {
            0.0
        } else {
            c[a].clamp(0.0, (n - 1) as f64)
        };
        if n == 1 {
            continue;
        }
        let lo = (x.floor() as usize).min(n - 2);
        i0[a] = lo;
        i1[a] = lo + 1;
        f[a] = x - lo as f64;
    }
    let v = |i: usize, j: usize, k: usize| vol.get(i, j, k);
    let c00 = v(i0[0], i0[1], i0[2]) * (1.0 - f[0]) + v(i1[0], i0[1], i0[2]) * f[0];
    let c10 = v(i0[0], i1[1], i0[2]) * (1.0 - f[0]) + v(i1[0], i1[1], i0[2]) * f[0];
    let c01 = v(i0[0], i0[1], i1[2]) * (1.0 - f[0]) + v(i1[0], i0[1], i1[2]) * f[0];
    let c11 = v(i0[0], i1[1], i1[2]) * (1.0 - f[0]) + v(i1[0], i1[1], i1[2]) * f[0];
    let c0 = c00 * (1.0 - f[1]) + c10 * f[1];
    let c1 = c01 * (1.0 - f[1]) + c11 * f[1];
    c0 * (1.0 - f[2]) + c1 * f[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(n: usize) -> Geometry {
        Geometry::isotropic([n, n, n], 1.0).unwrap()
    }

    #[test]
    fn trilinear_examples() {
        let g = geom(4);
        let mut vol = Volume3D::filled(g.clone(), 0.0);
        vol.set(1, 2, 3, 37.0);
        assert_eq!(trilinear_sample(&vol, [1.0, 2.0, 3.0]), 37.0);

        let ramp = Volume3D::from_fn(g.clone(), |i, _, _| if i == 0 { 0.0 } else { 10.0 });
        assert!((trilinear_sample(&ramp, [0.5, 1.0, 1.0]) - 5.0).abs() < 1e-12);

        let mut block = Volume3D::filled(g, 0.0);
        block.set(1, 1, 1, 8.0);
        assert!((trilinear_sample(&block, [0.5, 0.5, 0.5]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trilinear_clamps_outside() {
        let vol = Volume3D::from_fn(geom(3), |i, j, k| (i + 10 * j + 100 * k) as f64);
        assert_eq!(trilinear_sample(&vol, [-5.0, 0.0, 0.0]), 0.0);
        assert_eq!(trilinear_sample(&vol, [9.0, 2.0, 2.0]), 222.0);
    }

    #[test]
    fn smoothing_preserves_constant_and_identity() {
        let vol = Volume3D::filled(geom(8), 500.0);
        let s = gaussian_smooth(&vol, 1.7).unwrap();
        assert!(s.data().iter().all(|&v| (v - 500.0).abs() < 1e-9));

        let rnd = Volume3D::from_fn(geom(5), |i, j, k| ((i * 7 + j * 13 + k * 29) % 11) as f64);
        assert_eq!(gaussian_smooth(&rnd, 0.0).unwrap(), rnd);
        assert!(gaussian_smooth(&rnd, -1.0).is_err());
    }

    #[test]
    fn smoothing_preserves_impulse_mass() {
        let mut vol = Volume3D::filled(geom(31), 0.0);
        vol.set(15, 15, 15, 1.0);
        let s = gaussian_smooth(&vol, 2.0).unwrap();
        let mass: f64 = s.data().iter().sum();
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
    }

    #[test]
    fn anisotropic_sigma_in_voxels() {
        let g = Geometry::new([21, 21, 21], [1.0, 1.0, 2.0], [0.0; 3]).unwrap();
        let mut vol = Volume3D::filled(g, 0.0);
        vol.set(10, 10, 10, 1.0);
        let s = gaussian_smooth(&vol, 2.0).unwrap();
        // z has half as many voxels per mm, so the z profile is narrower in voxels.
        assert!(s.get(10, 10, 11) < s.get(11, 10, 10));
    }

    #[test]
    fn region_matches_full_smoothing() {
        let vol = Volume3D::from_fn(geom(12), |i, j, k| ((i * 31 + j * 17 + k * 7) % 23) as f64);
        let full = gaussian_smooth(&vol, 1.3).unwrap();
        let part = smooth_region(&vol, 1.3, [2, 0, 5], [9, 4, 11]).unwrap();
        for k in 0..7 {
            for j in 0..5 {
                for i in 0..8 {
                    assert_eq!(part.get(i, j, k), full.get(i + 2, j, k + 5));
                }
            }
        }
    }

    #[test]
    fn smoothing_commutes_with_axis_permutation() {
        let n = 9;
        let vol = Volume3D::from_fn(geom(n), |i, j, k| ((i * 5 + j * j * 3 + k * 11) % 17) as f64);
        // permute (x, y, z) -> (y, z, x)
        let perm = Volume3D::from_fn(geom(n), |i, j, k| vol.get(k, i, j));
        let a = gaussian_smooth(&perm, 1.1).unwrap();
        let b = gaussian_smooth(&vol, 1.1).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let d = (a.get(i, j, k) - b.get(k, i, j)).abs();
                    assert!(d <= 1e-12 * 17.0, "diff {d}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn trilinear_is_lipschitz(px in 0.0f64..5.0, py in 0.0f64..5.0, pz in 0.0f64..5.0,
                                  dx in -0.3f64..0.3, dy in -0.3f64..0.3, dz in -0.3f64..0.3) {
            let vol = Volume3D::from_fn(geom(6), |i, j, k| ((i * 13 + j * 7 + k * 3) % 10) as f64);
            let mut lmax: f64 = 0.0;
            for k in 0..6 { for j in 0..6 { for i in 0..5 {
                lmax = lmax.max((vol.get(i + 1, j, k) - vol.get(i, j, k)).abs());
                lmax = lmax.max((vol.get(j, i + 1, k) - vol.get(j, i, k)).abs());
                lmax = lmax.max((vol.get(j, k, i + 1) - vol.get(j, k, i)).abs());
            }}}
            let a = trilinear_sample(&vol, [px, py, pz]);
            let b = trilinear_sample(&vol, [px + dx, py + dy, pz + dz]);
            // trilinear gradient bound: sum of per-axis slopes
            let d = (dx.abs() + dy.abs() + dz.abs()) * lmax;
            prop_assert!((a - b).abs() <= d + 1e-9);
        }
    }
}
