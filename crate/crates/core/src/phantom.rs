//! Synthetic volumes with analytic ground truth.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};
use crate::volume::{BinaryMask, Geometry, Volume3D};

/// Default background HU.
pub const DEFAULT_BACKGROUND: f64 = 40.0;
/// Default vessel HU.
pub const DEFAULT_FOREGROUND: f64 = 495.0;
/// Default noise standard deviation (HU).
pub const DEFAULT_NOISE: f64 = 42.0;
/// Default Gaussian edge width (mm).
pub const DEFAULT_EDGE_SIGMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Profile {
    Hard,
    Gaussian { sigma: f64 },
}

impl Profile {
    /// Foreground fraction at distance `d` from a primitive of radius `r`.
    pub fn eval(self, d: f64, r: f64) -> f64 {
        match self {
            Profile::Hard => {
                if d <= r {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Gaussian { sigma } => {
                let t = d - r;
                if t > 6.0 * sigma {
                    0.0
                } else if t < -6.0 * sigma {
                    1.0
                } else {
                    0.5 * libm::erfc(t / (std::f64::consts::SQRT_2 * sigma))
                }
            }
        }
    }

    /// Distance beyond the radius past which the profile is exactly zero.
    fn reach(self) -> f64 {
        match self {
            Profile::Hard => 0.0,
            Profile::Gaussian { sigma } => 6.0 * sigma,
        }
    }
}

/// Geometric primitive. Each is a core set (curve, point, patch) thickened by
/// a radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Shape {
    /// Tube around a polyline.
    Tube {
        points: Vec<Vec3>,
        radius: f64,
    },
    Ball {
        center: Vec3,
        radius: f64,
    },
    /// Rectangular plate of half-thickness `radius` around a mid-plane patch
    /// spanned by `u`, `v` with half extents `half_extent`.
    Slab {
        center: Vec3,
        u: Vec3,
        v: Vec3,
        half_extent: [f64; 2],
        radius: f64,
    },
    /// Circular arc wall parallel to z: the arc of radius `arc_radius` around
    /// `(center.x, center.y)` between angles `angles` (radians), extruded
    /// over `z_range` and thickened by `radius`.
    ArcWall {
        center: Vec3,
        arc_radius: f64,
        angles: [f64; 2],
        z_range: [f64; 2],
        radius: f64,
    },
}

impl Shape {
    pub fn radius(&self) -> f64 {
        match self {
            Shape::Tube { radius, .. }
            | Shape::Ball { radius, .. }
            | Shape::Slab { radius, .. }
            | Shape::ArcWall { radius, .. } => *radius,
        }
    }

    /// Distance from `p` to the primitive's core set.
    pub fn core_distance(&self, p: Vec3) -> f64 {
        match self {
            Shape::Tube { points, .. } => vec3::point_polyline_distance(p, points),
            Shape::Ball { center, .. } => vec3::dist(p, *center),
            Shape::Slab {
                center,
                u,
                v,
                half_extent,
                ..
            } => {
                let d = vec3::sub(p, *center);
                let a = vec3::dot(d, *u).clamp(-half_extent[0], half_extent[0]);
                let b = vec3::dot(d, *v).clamp(-half_extent[1], half_extent[1]);
                let q = vec3::add(*center, vec3::add(vec3::scale(*u, a), vec3::scale(*v, b)));
                vec3::dist(p, q)
            }
            Shape::ArcWall {
                center,
                arc_radius,
                angles,
                z_range,
                ..
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let theta = dy.atan2(dx);
                let in_range = angle_in_range(theta, angles[0], angles[1]);
                let dxy = if in_range {
                    ((dx * dx + dy * dy).sqrt() - arc_radius).abs()
                } else {
                    let e0 = [arc_radius * angles[0].cos(), arc_radius * angles[0].sin()];
                    let e1 = [arc_radius * angles[1].cos(), arc_radius * angles[1].sin()];
                    let d0 = ((dx - e0[0]).powi(2) + (dy - e0[1]).powi(2)).sqrt();
                    let d1 = ((dx - e1[0]).powi(2) + (dy - e1[1]).powi(2)).sqrt();
                    d0.min(d1)
                };
                let dz = (z_range[0] - p[2]).max(p[2] - z_range[1]).max(0.0);
                (dxy * dxy + dz * dz).sqrt()
            }
        }
    }

    /// Points of the core set that must lie inside the volume.
    fn anchor_points(&self) -> Vec<Vec3> {
        match self {
            Shape::Tube { points, .. } => points.clone(),
            Shape::Ball { center, .. } => vec![*center],
            Shape::Slab {
                center,
                u,
                v,
                half_extent,
                ..
            } => {
                let mut out = vec![*center];
                for sa in [-1.0, 1.0] {
                    for sb in [-1.0, 1.0] {
                        out.push(vec3::add(
                            *center,
                            vec3::add(
                                vec3::scale(*u, sa * half_extent[0]),
                                vec3::scale(*v, sb * half_extent[1]),
                            ),
                        ));
                    }
                }
                out
            }
            Shape::ArcWall {
                center,
                arc_radius,
                angles,
                z_range,
                ..
            } => {
                let mut out = Vec::new();
                for a in angles {
                    for z in z_range {
                        out.push([center[0] + arc_radius * a.cos(), center[1] + arc_radius * a.sin(), *z]);
                    }
                }
                out
            }
        }
    }

    /// Axis-aligned bounding box of the core set (mm).
    fn core_bounds(&self) -> (Vec3, Vec3) {
        let pts = match self {
            Shape::ArcWall {
                center,
                arc_radius,
                z_range,
                ..
            } => vec![
                [center[0] - arc_radius, center[1] - arc_radius, z_range[0]],
                [center[0] + arc_radius, center[1] + arc_radius, z_range[1]],
            ],
            other => other.anchor_points(),
        };
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in pts {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius() > 0.0) {
            return Err(Error::InvalidArgument("shape radius must be > 0".into()));
        }
        match self {
            Shape::Tube { points, .. } => {
                if points.is_empty() {
                    return Err(Error::InvalidArgument("tube needs at least one point".into()));
                }
            }
            Shape::Slab { u, v, half_extent, .. } => {
                if (vec3::norm(*u) - 1.0).abs() > 1e-9
                    || (vec3::norm(*v) - 1.0).abs() > 1e-9
                    || vec3::dot(*u, *v).abs() > 1e-9
                {
                    return Err(Error::InvalidArgument("slab axes must be orthonormal".into()));
                }
                if half_extent.iter().any(|&h| h < 0.0) {
                    return Err(Error::InvalidArgument("slab extents must be >= 0".into()));
                }
            }
            Shape::ArcWall {
                arc_radius, z_range, ..
            } => {
                if !(*arc_radius > 0.0) || z_range[1] < z_range[0] {
                    return Err(Error::InvalidArgument("bad arc wall parameters".into()));
                }
            }
            Shape::Ball { .. } => {}
        }
        Ok(())
    }

    /// The analytic centreline of tubular shapes.
    pub fn centreline(&self) -> Option<Vec<Vec3>> {
        match self {
            Shape::Tube { points, .. } => Some(points.clone()),
            Shape::Ball { center, .. } => Some(vec![*center]),
            _ => None,
        }
    }
}

fn angle_in_range(theta: f64, a0: f64, a1: f64) -> bool {
    let tau = std::f64::consts::TAU;
    let span = (a1 - a0).rem_euclid(tau);
    let rel = (theta - a0).rem_euclid(tau);
    rel <= span
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub foreground: f64,
    /// Whether the shape belongs to the ground-truth structure.
    pub truth: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Tube,
    Helix,
    YBifurcation,
    Ball,
    Plate,
    AortaPlusCoronary,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "tube" => Ok(PhantomKind::Tube),
            "helix" => Ok(PhantomKind::Helix),
            "y_bifurcation" | "y" => Ok(PhantomKind::YBifurcation),
            "ball" => Ok(PhantomKind::Ball),
            "plate" => Ok(PhantomKind::Plate),
            "aorta_plus_coronary" | "aorta" => Ok(PhantomKind::AortaPlusCoronary),
            other => Err(Error::InvalidArgument(format!("unknown phantom kind `{other}`"))),
        }
    }
}

/// Radius of the aorta in the aorta-plus-coronary preset (mm).
pub const AORTA_RADIUS: f64 = 11.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub geometry: Geometry,
    pub shapes: Vec<ShapeSpec>,
    pub background: f64,
    pub profile: Profile,
    pub noise_sigma: f64,
    /// Foreground deviation is scaled linearly from 1 at the first slice to
    /// `ramp` at the last.
    pub ramp: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Empty phantom with the default palette.
    pub fn new(geometry: Geometry) -> Self {
        PhantomSpec {
            geometry,
            shapes: Vec::new(),
            background: DEFAULT_BACKGROUND,
            profile: Profile::Gaussian {
                sigma: DEFAULT_EDGE_SIGMA,
            },
            noise_sigma: DEFAULT_NOISE,
            ramp: 1.0,
            seed: 0,
        }
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shapes.push(ShapeSpec {
            shape,
            foreground: DEFAULT_FOREGROUND,
            truth: true,
        });
        self
    }

    pub fn with_distractor(mut self, shape: Shape) -> Self {
        self.shapes.push(ShapeSpec {
            shape,
            foreground: DEFAULT_FOREGROUND,
            truth: false,
        });
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sigma = 0.0;
        self
    }

    pub fn hard(mut self) -> Self {
        self.profile = Profile::Hard;
        self
    }

    /// Standard phantom of a given kind. `radius` defaults to 2 mm (4 mm for
    /// the ball); `length` to the full usable z extent.
    pub fn preset(kind: PhantomKind, geometry: Geometry, radius: Option<f64>, length: Option<f64>) -> Result<Self> {
        let g = geometry.clone();
        let ext = [
            (g.dims[0] - 1) as f64 * g.spacing[0],
            (g.dims[1] - 1) as f64 * g.spacing[1],
            (g.dims[2] - 1) as f64 * g.spacing[2],
        ];
        // centre on the voxel lattice so axis voxels exist
        let c = g.world(g.dims[0] / 2, g.dims[1] / 2, g.dims[2] / 2);
        let z0 = g.origin[2];
        let z_span = |frac: f64| -> (f64, f64) {
            let len = length.unwrap_or(frac * ext[2]).min(ext[2]);
            let zc = g.origin[2] + ext[2] / 2.0;
            (zc - len / 2.0, zc + len / 2.0)
        };
        let spec = PhantomSpec::new(geometry);
        let r = radius.unwrap_or(2.0);
        let spec = match kind {
            PhantomKind::Tube => {
                let (a, b) = z_span(1.0);
                spec.with_shape(Shape::Tube {
                    points: vec![[c[0], c[1], a], [c[0], c[1], b]],
                    radius: r,
                })
            }
            PhantomKind::Helix => {
                let (a, b) = z_span(0.8);
                let hr = 0.25 * ext[0].min(ext[1]);
                let turns = 2.0;
                let n = (turns * 720.0) as usize;
                let points = (0..=n)
                    .map(|i| {
                        let t = i as f64 / n as f64;
                        let ang = std::f64::consts::TAU * turns * t;
                        [c[0] + hr * ang.cos(), c[1] + hr * ang.sin(), a + (b - a) * t]
                    })
                    .collect();
                spec.with_shape(Shape::Tube { points, radius: r })
            }
            PhantomKind::YBifurcation => {
                let root = [c[0], c[1], z0 + 0.1 * ext[2]];
                let junction = [c[0], c[1], z0 + 0.5 * ext[2]];
                let tip_a = [c[0] - 0.25 * ext[0], c[1], z0 + 0.9 * ext[2]];
                let tip_b = [c[0] + 0.25 * ext[0], c[1], z0 + 0.9 * ext[2]];
                spec.with_shape(Shape::Tube {
                    points: vec![root, junction, tip_a],
                    radius: r,
                })
                .with_shape(Shape::Tube {
                    points: vec![junction, tip_b],
                    radius: r,
                })
            }
            PhantomKind::Ball => spec.with_shape(Shape::Ball {
                center: c,
                radius: radius.unwrap_or(4.0),
            }),
            PhantomKind::Plate => spec.with_shape(Shape::Slab {
                center: [c[0], g.origin[1] + ext[1] / 2.0, g.origin[2] + ext[2] / 2.0],
                u: [0.0, 1.0, 0.0],
                v: [0.0, 0.0, 1.0],
                half_extent: [0.5 * ext[1], 0.5 * ext[2]],
                radius: r,
            }),
            PhantomKind::AortaPlusCoronary => {
                let ax = g.origin[0] + AORTA_RADIUS + 0.1 * ext[0].max(2.0 * AORTA_RADIUS);
                let ay = c[1];
                let aorta = Shape::Tube {
                    points: vec![[ax, ay, z0], [ax, ay, z0 + ext[2]]],
                    radius: AORTA_RADIUS,
                };
                let ostium = [ax + AORTA_RADIUS - 2.0, ay, z0 + 0.9 * ext[2]];
                let mid = [
                    ax + AORTA_RADIUS + 0.15 * ext[0],
                    ay + 0.05 * ext[1],
                    z0 + 0.65 * ext[2],
                ];
                let tip = [ax + AORTA_RADIUS + 0.25 * ext[0], ay - 0.08 * ext[1], z0 + 0.1 * ext[2]];
                spec.with_distractor(aorta).with_shape(Shape::Tube {
                    points: vec![ostium, mid, tip],
                    radius: r,
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Seed-detection scene: a z-aligned tube, a plate parallel to it and an
    /// open half-circle wall, all crossing every axial slice.
    pub fn seed_scene(geometry: Geometry, radius: Option<f64>) -> Result<Self> {
        let g = geometry.clone();
        let ext = [
            (g.dims[0] - 1) as f64 * g.spacing[0],
            (g.dims[1] - 1) as f64 * g.spacing[1],
            (g.dims[2] - 1) as f64 * g.spacing[2],
        ];
        let r = radius.unwrap_or(2.0);
        let i0 = g.dims[0] / 4;
        let j0 = g.dims[1] / 4;
        let axis = g.world(i0 + g.dims[0] / 20, j0 + g.dims[1] / 20, 0);
        let (za, zb) = (g.origin[2], g.origin[2] + ext[2]);
        let tube = Shape::Tube {
            points: vec![[axis[0], axis[1], za], [axis[0], axis[1], zb]],
            radius: r,
        };
        let plate = Shape::Slab {
            center: [
                g.origin[0] + 0.75 * ext[0],
                g.origin[1] + ext[1] / 2.0,
                g.origin[2] + ext[2] / 2.0,
            ],
            u: [0.0, 1.0, 0.0],
            v: [0.0, 0.0, 1.0],
            half_extent: [0.5 * ext[1], 0.5 * ext[2]],
            radius: 1.0,
        };
        let arc = Shape::ArcWall {
            center: [axis[0], g.origin[1] + 0.72 * ext[1], 0.0],
            arc_radius: 0.15 * ext[0].min(ext[1]),
            angles: [0.0, std::f64::consts::PI],
            z_range: [za, zb],
            radius: 0.75,
        };
        let spec = PhantomSpec::new(geometry)
            .with_shape(tube)
            .with_distractor(plate)
            .with_distractor(arc);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise sigma must be >= 0".into()));
        }
        if !(self.ramp > 0.0) {
            return Err(Error::InvalidArgument("ramp factor must be > 0".into()));
        }
        if let Profile::Gaussian { sigma } = self.profile {
            if !(sigma > 0.0) {
                return Err(Error::InvalidArgument("edge sigma must be > 0".into()));
            }
        }
        for s in &self.shapes {
            s.shape.validate()?;
            if s.foreground == self.background {
                return Err(Error::InvalidArgument("foreground must differ from background".into()));
            }
            for p in s.shape.anchor_points() {
                if !self.geometry.contains_world(p) {
                    return Err(Error::InvalidArgument(format!(
                        "primitive point {p:?} lies outside the volume"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelLabel {
    Background,
    Interior,
    Edge,
    Axis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub mask: BinaryMask,
    /// One polyline per tubular truth shape (mm).
    pub centrelines: Vec<Vec<Vec3>>,
    /// Free ends of the centrelines (mm).
    pub endpoints: Vec<Vec3>,
    pub labels: Vec<VoxelLabel>,
}

/// Voxel index range (inclusive) that a shape can influence.
fn influence_box(g: &Geometry, shape: &Shape, reach: f64) -> ([usize; 3], [usize; 3]) {
    let (lo, hi) = shape.core_bounds();
    let pad = shape.radius() + reach + g.max_spacing();
    let mut a = [0usize; 3];
    let mut b = [0usize; 3];
    for ax in 0..3 {
        let l = ((lo[ax] - pad - g.origin[ax]) / g.spacing[ax]).floor();
        let h = ((hi[ax] + pad - g.origin[ax]) / g.spacing[ax]).ceil();
        a[ax] = l.clamp(0.0, (g.dims[ax] - 1) as f64) as usize;
        b[ax] = h.clamp(0.0, (g.dims[ax] - 1) as f64) as usize;
    }
    (a, b)
}

/// Polyline split into chunks with bounding spheres, for fast nearest
/// distance queries on long curves.
struct ChunkedPolyline<'a> {
    points: &'a [Vec3],
    chunks: Vec<(usize, usize, Vec3, f64)>,
}

impl<'a> ChunkedPolyline<'a> {
    const CHUNK: usize = 32;

    fn new(points: &'a [Vec3]) -> Self {
        let mut chunks = Vec::new();
        let nseg = points.len().saturating_sub(1);
        let mut start = 0;
        while start < nseg {
            let end = (start + Self::CHUNK).min(nseg);
            let pts = &points[start..=end];
            let mut c = [0.0; 3];
            for p in pts {
                c = vec3::add(c, *p);
            }
            c = vec3::scale(c, 1.0 / pts.len() as f64);
            let rad = pts.iter().map(|p| vec3::dist(*p, c)).fold(0.0, f64::max);
            chunks.push((start, end, c, rad));
            start = end;
        }
        ChunkedPolyline { points, chunks }
    }

    fn distance(&self, p: Vec3) -> f64 {
        if self.chunks.is_empty() {
            return vec3::point_polyline_distance(p, self.points);
        }
        let mut order: Vec<(f64, usize)> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, ch)| ((vec3::dist(p, ch.2) - ch.3).max(0.0), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = f64::INFINITY;
        for (lb, ci) in order {
            if lb >= best {
                break;
            }
            let (s, e, _, _) = self.chunks[ci];
            best = best.min(vec3::point_polyline_distance(p, &self.points[s..=e]));
        }
        best
    }
}

/// Per-voxel distances to one shape's core, infinite outside its influence box.
fn shape_distances(g: &Geometry, shape: &Shape, reach: f64) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; g.len()];
    let (lo, hi) = influence_box(g, shape, reach);
    let chunked = match shape {
        Shape::Tube { points, .. } if points.len() > 2 * ChunkedPolyline::CHUNK => Some(ChunkedPolyline::new(points)),
        _ => None,
    };
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let p = g.world(i, j, k);
                d[g.index(i, j, k)] = match &chunked {
                    Some(c) => c.distance(p),
                    None => shape.core_distance(p),
                };
            }
        }
    }
    d
}

/// Ramp multiplier for slice `k`.
fn ramp_at(factor: f64, k: usize, nz: usize) -> f64 {
    if nz <= 1 {
        return 1.0;
    }
    1.0 + (factor - 1.0) * k as f64 / (nz - 1) as f64
}

/// Renders the phantom and its ground truth.
pub fn generate(spec: &PhantomSpec) -> Result<(Volume3D, GroundTruth)> {
    spec.validate()?;
    let g = &spec.geometry;
    let n = g.len();
    let reach = spec.profile.reach().max(g.max_spacing());
    let mut contrib = vec![0.0f64; n];
    let mut mask = vec![false; n];
    let mut labels = vec![VoxelLabel::Background; n];
    let axis_tol = 0.5 * g.max_spacing();
    let edge_tol = g.max_spacing();
    for s in &spec.shapes {
        let r = s.shape.radius();
        let dist = shape_distances(g, &s.shape, reach);
        let amp = s.foreground - spec.background;
        for idx in 0..n {
            let d = dist[idx];
            if !d.is_finite() {
                continue;
            }
            let c = amp * spec.profile.eval(d, r);
            if c.abs() > contrib[idx].abs() {
                contrib[idx] = c;
            }
            if !s.truth {
                continue;
            }
            let inside = d <= r;
            mask[idx] |= inside;
            let is_axis = s.shape.centreline().is_some() && d <= axis_tol.min(r);
            let label = if is_axis {
                VoxelLabel::Axis
            } else if (d - r).abs() <= edge_tol {
                VoxelLabel::Edge
            } else if inside {
                VoxelLabel::Interior
            } else {
                VoxelLabel::Background
            };
            if rank(label) > rank(labels[idx]) {
                labels[idx] = label;
            }
        }
    }
    let nz = g.dims[2];
    let plane = g.dims[0] * g.dims[1];
    let mut data = Vec::with_capacity(n);
    for (idx, &c) in contrib.iter().enumerate() {
        data.push(spec.background + c * ramp_at(spec.ramp, idx / plane, nz));
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let centrelines: Vec<Vec<Vec3>> = spec
        .shapes
        .iter()
        .filter(|s| s.truth)
        .filter_map(|s| match &s.shape {
            Shape::Tube { points, .. } => Some(points.clone()),
            _ => None,
        })
        .collect();
    let endpoints = free_endpoints(&centrelines);
    let vol = Volume3D::from_vec(g.clone(), data)?;
    Ok((
        vol,
        GroundTruth {
            mask: BinaryMask::from_vec(g.clone(), mask)?,
            centrelines,
            endpoints,
            labels,
        },
    ))
}

fn rank(l: VoxelLabel) -> u8 {
    match l {
        VoxelLabel::Background => 0,
        VoxelLabel::Interior => 1,
        VoxelLabel::Edge => 2,
        VoxelLabel::Axis => 3,
    }
}

/// Polyline ends that do not lie on another polyline.
fn free_endpoints(lines: &[Vec<Vec3>]) -> Vec<Vec3> {
    let mut out = Vec::new();
    for (li, line) in lines.iter().enumerate() {
        let (Some(&first), Some(&last)) = (line.first(), line.last()) else {
            continue;
        };
        for p in [first, last] {
            let shared = lines
                .iter()
                .enumerate()
                .any(|(oi, other)| oi != li && vec3::point_polyline_distance(p, other) < 1e-9);
            if !shared && !out.iter().any(|q: &Vec3| vec3::dist(*q, p) < 1e-12) {
                out.push(p);
            }
        }
    }
    out
}

/// Scales each voxel's deviation from `background` by a factor ramping
/// linearly from 1 (first slice) to `factor` (last slice).
pub fn apply_ramp(vol: &Volume3D, factor: f64, background: f64) -> Result<Volume3D> {
    if !(factor > 0.0) {
        return Err(Error::InvalidArgument(format!("ramp factor must be > 0, got {factor}")));
    }
    let [nx, ny, nz] = vol.dims();
    let plane = nx * ny;
    let mut out = vol.clone();
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        *v = background + (*v - background) * ramp_at(factor, idx / plane, nz);
    }
    Ok(out)
}

pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.geometry().ensure_same(b.geometry())?;
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// RMS over `points` of the distance to the nearest truth polyline (mm).
pub fn centreline_rmse(points: &[Vec3], truth: &[Vec<Vec3>]) -> Result<f64> {
    if points.is_empty() || truth.is_empty() {
        return Err(Error::Empty("centreline_rmse needs points and truth".into()));
    }
    let ss: f64 = points
        .iter()
        .map(|&p| {
            truth
                .iter()
                .map(|l| vec3::point_polyline_distance(p, l))
                .fold(f64::INFINITY, f64::min)
                .powi(2)
        })
        .sum();
    Ok((ss / points.len() as f64).sqrt())
}

/// Whether every truth endpoint lies within `tol` mm of a voxel of `mask`.
pub fn endpoint_hit(mask: &BinaryMask, endpoints: &[Vec3], tol: f64) -> bool {
    let g = mask.geometry();
    endpoints.iter().all(|&e| {
        let c = g.continuous_index(e);
        let r = [
            (tol / g.spacing[0]).ceil() as isize + 1,
            (tol / g.spacing[1]).ceil() as isize + 1,
            (tol / g.spacing[2]).ceil() as isize + 1,
        ];
        let base = [c[0].round() as isize, c[1].round() as isize, c[2].round() as isize];
        for dk in -r[2]..=r[2] {
            for dj in -r[1]..=r[1] {
                for di in -r[0]..=r[0] {
                    if let Some(idx) = g.checked_index(base[0] + di, base[1] + dj, base[2] + dk) {
                        if mask.data()[idx] {
                            let [i, j, k] = g.coords(idx);
                            if vec3::dist(g.world(i, j, k), e) <= tol {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    })
}

/// Whether every truth endpoint lies within `tol` mm of one of `points`.
pub fn endpoint_hit_points(points: &[Vec3], endpoints: &[Vec3], tol: f64) -> bool {
    endpoints
        .iter()
        .all(|&e| points.iter().any(|&p| vec3::dist(p, e) <= tol))
}
