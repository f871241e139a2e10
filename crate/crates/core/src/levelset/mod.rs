//! Slice-wise level-set evolution: Chan-Vese (global and localized) and
//! geodesic active contours on 2D signed distance fields.
//!
//! `phi` is in pixel units and negative inside.

mod propagate;
mod reinit;

pub use propagate::{
    adjust_mask_for_branches, normalize_slice, segment_tree, slice_propagate, Direction, Propagation,
    SegmentationResult, SliceRecord, StopReason,
};
pub use reinit::{godunov_grad_norm, reinitialize, zero_crossing_segments};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{edt_squared_2d, gaussian_smooth_2d, Grid2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    Geodesic,
    ChanVeseGlobal,
    ChanVeseLocalized,
}

impl std::str::FromStr for EnergyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" => Ok(EnergyKind::Geodesic),
            "chan_vese_global" | "global" => Ok(EnergyKind::ChanVeseGlobal),
            "chan_vese_localized" | "localized" => Ok(EnergyKind::ChanVeseLocalized),
            _ => Err(Error::InvalidArgument(format!("unknown energy '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub energy: EnergyKind,
    /// Curvature weight relative to the squared dynamic range of the image.
    pub lambda: f64,
    /// Ball kernel radius (mm).
    pub ball_radius: f64,
    pub dt: f64,
    /// Heaviside width (pixels).
    pub eps: f64,
    pub max_iters: usize,
    /// Fraction of band cells allowed to change sign over one window.
    pub tol: f64,
    pub window: usize,
    pub reinit_every: usize,
    /// Narrow band half-width (pixels).
    pub band: f64,
    pub hu_gate: Option<[f64; 2]>,
    pub t_v: f64,
    /// Branch capture radius (mm).
    pub capture_radius: f64,
    /// Dilation of the previous slice mask at hand-off (pixels).
    pub init_dilation: f64,
    /// Radius of the initial disc around the seed (mm).
    pub seed_radius: f64,
    pub aorta_overlap: f64,
    /// Gaussian sigma of the conformal factor (pixels).
    pub conformal_sigma: f64,
    pub balloon: f64,
    /// Largest curvature magnitude used in a step (1/pixel).
    pub curvature_clamp: f64,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            energy: EnergyKind::ChanVeseLocalized,
            lambda: 0.2,
            ball_radius: 4.0,
            dt: 0.25,
            eps: 1.5,
            max_iters: 300,
            tol: 0.001,
            window: 10,
            reinit_every: 10,
            band: 6.0,
            hu_gate: None,
            t_v: 0.0,
            capture_radius: 4.0,
            init_dilation: 1.0,
            seed_radius: 1.0,
            aorta_overlap: 0.5,
            conformal_sigma: 1.0,
            balloon: 0.5,
            curvature_clamp: 1.0,
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be > 0");
        }
        if !(self.ball_radius > 0.0) {
            return bad("ball radius must be > 0");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.band >= 2.0) {
            return bad("band half-width must be >= 2");
        }
        if self.max_iters == 0 || self.window == 0 || self.reinit_every == 0 {
            return bad("iteration counts must be > 0");
        }
        if !(self.tol >= 0.0 && self.tol < 1.0) {
            return bad("tol must lie in [0, 1)");
        }
        if let Some([lo, hi]) = self.hu_gate {
            if !(lo <= hi) {
                return bad("HU gate must satisfy lo <= hi");
            }
        }
        if !(self.capture_radius >= 0.0 && self.init_dilation >= 0.0 && self.seed_radius > 0.0) {
            return bad("capture radius, dilation and seed radius must be non-negative");
        }
        if !(self.aorta_overlap > 0.0 && self.aorta_overlap <= 1.0) {
            return bad("aorta overlap must lie in (0, 1]");
        }
        if !(self.conformal_sigma > 0.0 && self.curvature_clamp > 0.0) {
            return bad("conformal sigma and curvature clamp must be > 0");
        }
        Ok(())
    }
}

/// `0.5 (1 + (2/pi) atan(t / eps))`.
#[inline]
pub fn heaviside(t: f64, eps: f64) -> f64 {
    0.5 * (1.0 + std::f64::consts::FRAC_2_PI * (t / eps).atan())
}

/// Derivative of [`heaviside`]: `eps / (pi (eps^2 + t^2))`.
#[inline]
pub fn delta(t: f64, eps: f64) -> f64 {
    eps / (std::f64::consts::PI * (eps * eps + t * t))
}

/// Signed distance (pixels) to the mask boundary, negative inside, clamped
/// to `±band` when given.
pub fn init_sdf(mask: &Grid2<bool>, band: Option<f64>) -> Result<Grid2<f64>> {
    if !mask.any() {
        return Err(Error::Empty("cannot build a level set from an empty mask".into()));
    }
    let outside = Grid2 {
        nx: mask.nx,
        ny: mask.ny,
        data: mask.data.iter().map(|&b| !b).collect(),
    };
    let d_out = edt_squared_2d(&outside);
    let d_in = edt_squared_2d(mask);
    let cap = band.unwrap_or((mask.nx + mask.ny) as f64);
    let data = mask
        .data
        .iter()
        .zip(d_out.data.iter().zip(&d_in.data))
        .map(|(&inside, (&to_out, &to_in))| {
            let v = if inside {
                -(to_out.sqrt() - 0.5)
            } else {
                to_in.sqrt() - 0.5
            };
            v.clamp(-cap, cap)
        })
        .collect();
    Ok(Grid2 {
        nx: mask.nx,
        ny: mask.ny,
        data,
    })
}

/// Interior mask `phi < 0`.
pub fn interior(phi: &Grid2<f64>) -> Grid2<bool> {
    Grid2 {
        nx: phi.nx,
        ny: phi.ny,
        data: phi.data.iter().map(|&v| v < 0.0).collect(),
    }
}

#[derive(Clone, Copy, Debug)]
struct Derivs {
    x: f64,
    y: f64,
    xx: f64,
    yy: f64,
    xy: f64,
}

#[inline]
fn derivs(phi: &Grid2<f64>, x: usize, y: usize) -> Derivs {
    let (xi, yi) = (x as isize, y as isize);
    let p = |dx: isize, dy: isize| phi.get_clamped(xi + dx, yi + dy);
    let c = p(0, 0);
    Derivs {
        x: 0.5 * (p(1, 0) - p(-1, 0)),
        y: 0.5 * (p(0, 1) - p(0, -1)),
        xx: p(1, 0) - 2.0 * c + p(-1, 0),
        yy: p(0, 1) - 2.0 * c + p(0, -1),
        xy: 0.25 * (p(1, 1) - p(1, -1) - p(-1, 1) + p(-1, -1)),
    }
}

const GRAD_GUARD: f64 = 1e-8;

/// Curvature of the level line through `(x, y)` by central differences;
/// zero where the gradient vanishes.
pub fn curvature(phi: &Grid2<f64>, x: usize, y: usize) -> f64 {
    let d = derivs(phi, x, y);
    let g2 = d.x * d.x + d.y * d.y;
    if g2.sqrt() < GRAD_GUARD {
        return 0.0;
    }
    (d.yy * d.x * d.x + d.xx * d.y * d.y - 2.0 * d.x * d.y * d.xy) / g2.powf(1.5)
}

/// Interior (`phi < 0`) and exterior means `(c1, c2)`.
pub fn region_means(img: &Grid2<f64>, phi: &Grid2<f64>) -> Result<(f64, f64)> {
    check_same(img, phi)?;
    let (mut s1, mut m1, mut s2, mut m2) = (0.0, 0.0, 0.0, 0.0);
    for (&i, &p) in img.data.iter().zip(&phi.data) {
        let h = exterior(p);
        s1 += i * (1.0 - h);
        m1 += 1.0 - h;
        s2 += i * h;
        m2 += h;
    }
    if m1 < 1e-6 || m2 < 1e-6 {
        return Err(Error::Empty("level set has an empty interior or exterior".into()));
    }
    Ok((s1 / m1, s2 / m2))
}

// Region statistics use the sharp partition. Weighting them by the smoothed
// Heaviside lets its slow atan tails pull far background into the interior
// mean, which pushes fronts outward on small blurred vessels.
fn exterior(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        1.0
    }
}

fn check_same<A, B>(a: &Grid2<A>, b: &Grid2<B>) -> Result<()> {
    if a.nx != b.nx || a.ny != b.ny {
        return Err(Error::GeometryMismatch(format!(
            "grid sizes differ: {}x{} vs {}x{}",
            a.nx, a.ny, b.nx, b.ny
        )));
    }
    Ok(())
}

fn dynamic_range_sq(img: &Grid2<f64>) -> f64 {
    let (lo, hi) = img
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let r = hi - lo;
    if r > 0.0 {
        r * r
    } else {
        1.0
    }
}

/// Discretized Chan-Vese energy with data terms divided by the squared
/// dynamic range, so it matches the forces used by the steps.
pub fn cv_energy(phi: &Grid2<f64>, img: &Grid2<f64>, lambda: f64, eps: f64) -> Result<f64> {
    let (c1, c2) = region_means(img, phi)?;
    let norm = dynamic_range_sq(img);
    let mut e = 0.0;
    for y in 0..phi.ny {
        for x in 0..phi.nx {
            let p = phi.get(x, y);
            let d = derivs(phi, x, y);
            let h = exterior(p);
            let i = img.get(x, y);
            e += lambda * delta(p, eps) * d.x.hypot(d.y);
            e += ((i - c1).powi(2) * (1.0 - h) + (i - c2).powi(2) * h) / norm;
        }
    }
    Ok(e)
}

/// Shared explicit update on the band `|phi| <= band` from a frozen
/// snapshot. `force(x, y)` is the normalized region force; cells outside
/// `allowed` may only move outward in `phi` (shrink the interior).
fn region_update(
    phi: &Grid2<f64>,
    p: &EvolutionParams,
    allowed: Option<&Grid2<bool>>,
    mut force: impl FnMut(usize, usize) -> f64,
) -> Grid2<f64> {
    let mut out = phi.clone();
    for y in 0..phi.ny {
        for x in 0..phi.nx {
            let v = phi.get(x, y);
            if v.abs() > p.band {
                continue;
            }
            let k = curvature(phi, x, y).clamp(-p.curvature_clamp, p.curvature_clamp);
            let mut dphi = p.dt * delta(v, p.eps) * (p.lambda * k + force(x, y));
            if let Some(a) = allowed {
                if !a.get(x, y) {
                    dphi = dphi.max(0.0);
                }
            }
            out.set(x, y, (v + dphi).clamp(-p.band, p.band));
        }
    }
    out
}

/// One global Chan-Vese step:
/// `phi += dt delta(phi) [lambda kappa + (I - c1)^2 - (I - c2)^2]`.
pub fn cv_global_step(
    phi: &Grid2<f64>,
    img: &Grid2<f64>,
    p: &EvolutionParams,
    allowed: Option<&Grid2<bool>>,
) -> Result<Grid2<f64>> {
    check_same(img, phi)?;
    let (c1, c2) = region_means(img, phi)?;
    let norm = dynamic_range_sq(img);
    Ok(region_update(phi, p, allowed, |x, y| {
        let i = img.get(x, y);
        ((i - c1).powi(2) - (i - c2).powi(2)) / norm
    }))
}

/// Row prefix sums of a grid, `nx + 1` entries per row.
fn row_prefix(values: impl Iterator<Item = f64>, nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![0.0; (nx + 1) * ny];
    let mut it = values;
    for y in 0..ny {
        let row = &mut out[y * (nx + 1)..(y + 1) * (nx + 1)];
        for x in 0..nx {
            row[x + 1] = row[x] + it.next().unwrap_or(0.0);
        }
    }
    out
}

/// One localized Chan-Vese step with soft interior/exterior means taken over
/// a ball of radius `p.ball_radius` mm around each band cell.
pub fn localized_step(
    phi: &Grid2<f64>,
    img: &Grid2<f64>,
    spacing: [f64; 2],
    p: &EvolutionParams,
    allowed: Option<&Grid2<bool>>,
) -> Result<Grid2<f64>> {
    check_same(img, phi)?;
    if !(spacing[0] > 0.0 && spacing[1] > 0.0) {
        return Err(Error::InvalidArgument("pixel spacing must be > 0".into()));
    }
    let (nx, ny) = (phi.nx, phi.ny);
    let hs: Vec<f64> = phi.data.iter().map(|&v| exterior(v)).collect();
    let pin = row_prefix(img.data.iter().zip(&hs).map(|(i, h)| i * (1.0 - h)), nx, ny);
    let min = row_prefix(hs.iter().map(|h| 1.0 - h), nx, ny);
    let pout = row_prefix(img.data.iter().zip(&hs).map(|(i, h)| i * h), nx, ny);
    let mout = row_prefix(hs.iter().copied(), nx, ny);
    let norm = dynamic_range_sq(img);
    let r = p.ball_radius;
    let ry = (r / spacing[1]).floor() as isize;
    let half_widths: Vec<isize> = (-ry..=ry)
        .map(|dy| {
            let dd = r * r - (dy as f64 * spacing[1]).powi(2);
            (dd.max(0.0).sqrt() / spacing[0]).floor() as isize
        })
        .collect();
    let row_sum = |pre: &[f64], y: usize, x0: usize, x1: usize| pre[y * (nx + 1) + x1 + 1] - pre[y * (nx + 1) + x0];
    Ok(region_update(phi, p, allowed, |x, y| {
        let (mut s1, mut m1, mut s2, mut m2) = (0.0, 0.0, 0.0, 0.0);
        for (row, dy) in (-ry..=ry).enumerate() {
            let yy = y as isize + dy;
            if yy < 0 || yy >= ny as isize {
                continue;
            }
            let hw = half_widths[row];
            let x0 = (x as isize - hw).max(0) as usize;
            let x1 = (x as isize + hw).min(nx as isize - 1) as usize;
            let yy = yy as usize;
            s1 += row_sum(&pin, yy, x0, x1);
            m1 += row_sum(&min, yy, x0, x1);
            s2 += row_sum(&pout, yy, x0, x1);
            m2 += row_sum(&mout, yy, x0, x1);
        }
        if m1 < 1e-6 || m2 < 1e-6 {
            return 0.0;
        }
        let (c1, c2) = (s1 / m1, s2 / m2);
        let i = img.get(x, y);
        ((i - c1).powi(2) - (i - c2).powi(2)) / norm
    }))
}

/// `g = 1 / (1 + |grad(G_sigma * I)|^2)` with gradients in pixel units.
pub fn conformal_factor(img: &Grid2<f64>, sigma: f64) -> Result<Grid2<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
    }
    let s = gaussian_smooth_2d(img, [sigma, sigma]);
    Ok(Grid2::from_fn(img.nx, img.ny, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let gx = 0.5 * (s.get_clamped(xi + 1, yi) - s.get_clamped(xi - 1, yi));
        let gy = 0.5 * (s.get_clamped(xi, yi + 1) - s.get_clamped(xi, yi - 1));
        1.0 / (1.0 + gx * gx + gy * gy)
    }))
}

/// Central-difference gradient of `g`.
fn gradient(g: &Grid2<f64>) -> (Grid2<f64>, Grid2<f64>) {
    let gx = Grid2::from_fn(g.nx, g.ny, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        0.5 * (g.get_clamped(xi + 1, yi) - g.get_clamped(xi - 1, yi))
    });
    let gy = Grid2::from_fn(g.nx, g.ny, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        0.5 * (g.get_clamped(xi, yi + 1) - g.get_clamped(xi, yi - 1))
    });
    (gx, gy)
}

/// Largest value of `|v g| + |grad g|` over the grid.
pub fn geodesic_cfl_number(g: &Grid2<f64>, v: f64) -> f64 {
    let (gx, gy) = gradient(g);
    g.data
        .iter()
        .zip(gx.data.iter().zip(&gy.data))
        .map(|(&gv, (&a, &b))| (v * gv).abs() + a.hypot(b))
        .fold(0.0, f64::max)
}

pub const GEODESIC_CFL_LIMIT: f64 = 0.45;

/// One geodesic active contour step,
/// `phi_t = g (kappa - v) |grad phi| + grad g . grad phi`,
/// with upwind differences for the balloon and advection terms and central
/// differences for the curvature term. `v > 0` expands the interior.
pub fn geodesic_step(phi: &Grid2<f64>, g: &Grid2<f64>, v: f64, dt: f64, band: f64) -> Result<Grid2<f64>> {
    check_same(g, phi)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be > 0".into()));
    }
    let gmax = g.data.iter().cloned().fold(0.0, f64::max);
    let cfl = dt * geodesic_cfl_number(g, v);
    if cfl > GEODESIC_CFL_LIMIT {
        return Err(Error::Cfl {
            value: cfl,
            limit: GEODESIC_CFL_LIMIT,
        });
    }
    // explicit curvature diffusion is stable only for dt g <= 1/4
    if dt * gmax > 0.25 {
        return Err(Error::Cfl {
            value: dt * gmax,
            limit: 0.25,
        });
    }
    let (gx, gy) = gradient(g);
    let mut out = phi.clone();
    for y in 0..phi.ny {
        for x in 0..phi.nx {
            let c = phi.get(x, y);
            if c.abs() > band {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            let dmx = c - phi.get_clamped(xi - 1, yi);
            let dpx = phi.get_clamped(xi + 1, yi) - c;
            let dmy = c - phi.get_clamped(xi, yi - 1);
            let dpy = phi.get_clamped(xi, yi + 1) - c;
            let d = derivs(phi, x, y);
            let grad_c = d.x.hypot(d.y);
            let k = curvature(phi, x, y);
            let gv = g.get(x, y);
            // balloon: phi_t + F |grad phi| = 0 with F = g v
            let f = gv * v;
            let grad_up = if f > 0.0 {
                (dmx.max(0.0).powi(2) + dpx.min(0.0).powi(2) + dmy.max(0.0).powi(2) + dpy.min(0.0).powi(2)).sqrt()
            } else {
                (dmx.min(0.0).powi(2) + dpx.max(0.0).powi(2) + dmy.min(0.0).powi(2) + dpy.max(0.0).powi(2)).sqrt()
            };
            // advection: phi_t + U . grad phi = 0 with U = -grad g
            let (ux, uy) = (-gx.get(x, y), -gy.get(x, y));
            let adv = ux.max(0.0) * dmx + ux.min(0.0) * dpx + uy.max(0.0) * dmy + uy.min(0.0) * dpy;
            let rate = gv * k * grad_c - f * grad_up - adv;
            out.set(x, y, (c + dt * rate).clamp(-band, band));
        }
    }
    Ok(out)
}

/// Result of evolving one slice to convergence or the iteration cap.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceEvolution {
    pub phi: Grid2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct WindowChange {
    sign_changes: usize,
    band_cells: usize,
    /// Mean |delta phi| over cells within one pixel of the front.
    front_motion: f64,
}

fn window_change(a: &Grid2<f64>, b: &Grid2<f64>, band: f64) -> WindowChange {
    let mut w = WindowChange {
        sign_changes: 0,
        band_cells: 0,
        front_motion: 0.0,
    };
    let mut front = 0usize;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        if x.abs() <= band || y.abs() <= band {
            w.band_cells += 1;
            if (x < 0.0) != (y < 0.0) {
                w.sign_changes += 1;
            }
        }
        if x.abs() <= 1.0 || y.abs() <= 1.0 {
            front += 1;
            w.front_motion += (x - y).abs();
        }
    }
    if front > 0 {
        w.front_motion /= front as f64;
    }
    w
}

/// Largest mean front displacement (pixels per iteration) still counted as
/// stationary.
pub const FRONT_SPEED_TOL: f64 = 2e-3;

/// Runs the configured energy until at most `tol` of the band cells change
/// sign across one window of iterations, reinitializing periodically.
pub fn evolve(
    phi0: Grid2<f64>,
    img: &Grid2<f64>,
    spacing: [f64; 2],
    allowed: Option<&Grid2<bool>>,
    p: &EvolutionParams,
) -> Result<SliceEvolution> {
    p.validate()?;
    check_same(img, &phi0)?;
    let g = match p.energy {
        EnergyKind::Geodesic => Some(conformal_factor(img, p.conformal_sigma)?),
        _ => None,
    };
    let mut phi = phi0;
    let mut snapshot = phi.clone();
    for it in 1..=p.max_iters {
        phi = match p.energy {
            EnergyKind::ChanVeseGlobal => cv_global_step(&phi, img, p, allowed)?,
            EnergyKind::ChanVeseLocalized => localized_step(&phi, img, spacing, p, allowed)?,
            EnergyKind::Geodesic => {
                let mut next = geodesic_step(&phi, g.as_ref().unwrap(), p.balloon, p.dt, p.band)?;
                if let Some(a) = allowed {
                    for ((n, &o), &ok) in next.data.iter_mut().zip(&phi.data).zip(&a.data) {
                        if !ok {
                            *n = n.max(o);
                        }
                    }
                }
                next
            }
        };
        if !phi.data.iter().any(|&v| v < 0.0) {
            return Ok(SliceEvolution {
                phi,
                iterations: it,
                converged: true,
            });
        }
        if it % p.reinit_every == 0 {
            if let Ok(r) = reinitialize(&phi, p.band) {
                phi = r;
            }
        }
        if it % p.window == 0 {
            let w = window_change(&snapshot, &phi, p.band);
            if (w.sign_changes as f64) <= p.tol * w.band_cells as f64
                && w.front_motion <= FRONT_SPEED_TOL * p.window as f64
            {
                return Ok(SliceEvolution {
                    phi,
                    iterations: it,
                    converged: true,
                });
            }
            snapshot = phi.clone();
        }
    }
    Ok(SliceEvolution {
        phi,
        iterations: p.max_iters,
        converged: false,
    })
}
