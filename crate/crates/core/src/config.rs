//! Flat `key = value` pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blood::AortaParams;
use crate::error::{Error, Result};
use crate::levelset::{EnergyKind, EvolutionParams};
use crate::seeds::{Pairing, SeedParams};
use crate::skeleton::{CprParams, SkeletonParams};
use crate::vesselness::FrangiParams;

/// Every tunable of the pipeline. Keys are flat; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,

    // seed detection
    pub cr: f64,
    pub plane_gap: f64,
    pub plane_half_extent: f64,
    pub plane_spacing: f64,
    pub n_rays: usize,
    pub ray_trim: usize,
    pub r_max: f64,
    pub gf_k: f64,
    pub t_f: f64,
    pub t_gf: f64,
    /// Seed intensity floor (HU); unset accepts any intensity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_t: Option<f64>,
    pub pairing: Pairing,
    pub edge_smoothing: f64,
    pub gf_smoothing: f64,
    pub min_fill: f64,
    pub min_roi_radius: f64,
    pub max_roi_radius: f64,

    // vesselness
    pub alpha: f64,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub scales: Vec<f64>,
    pub gamma: f64,

    // blood model
    pub aorta_z_band: f64,
    pub aorta_bright_threshold: f64,
    pub aorta_radius_min: f64,
    pub aorta_radius_max: f64,
    pub aorta_max_drift: f64,
    pub aorta_min_support: f64,
    pub aorta_interior_margin: f64,
    pub hist_bin_width: f64,
    /// HU gate overrides; both must be set to bypass the fitted model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hu_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hu_hi: Option<f64>,

    // level set
    pub energy: EnergyKind,
    pub lambda: f64,
    pub ball_radius: f64,
    pub dt: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub window: usize,
    pub reinit_every: usize,
    pub band: f64,
    pub t_v: f64,
    pub capture_radius: f64,
    pub init_dilation: f64,
    pub seed_radius: f64,
    pub aorta_overlap: f64,
    pub conformal_sigma: f64,
    pub balloon: f64,
    pub curvature_clamp: f64,

    // skeleton and reformation
    pub speed_exponent: f64,
    pub branch_floor: f64,
    pub n_branches: usize,
    pub cpr_half_extent: f64,
    pub cpr_spacing: f64,
    /// Arc-length step (mm) between straightened slices.
    pub cpr_step: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let s = SeedParams::default();
        let f = FrangiParams::default();
        let a = AortaParams::default();
        let e = EvolutionParams::default();
        let k = SkeletonParams::default();
        let p = CprParams::default();
        PipelineConfig {
            input: None,
            output_dir: None,
            cr: s.cr,
            plane_gap: s.plane_gap,
            plane_half_extent: s.plane_half_extent,
            plane_spacing: s.plane_spacing,
            n_rays: s.n_rays,
            ray_trim: s.trim,
            r_max: s.r_max,
            gf_k: s.k,
            t_f: s.t_f,
            t_gf: s.t_gf,
            v_t: None,
            pairing: s.pairing,
            edge_smoothing: s.edge_smoothing,
            gf_smoothing: s.gf_smoothing,
            min_fill: s.min_fill,
            min_roi_radius: s.min_radius,
            max_roi_radius: s.max_radius,
            alpha: f.alpha,
            beta: f.beta,
            c: f.c,
            scales: f.scales,
            gamma: f.gamma,
            aorta_z_band: a.z_band,
            aorta_bright_threshold: a.bright_threshold,
            aorta_radius_min: a.radius_min,
            aorta_radius_max: a.radius_max,
            aorta_max_drift: a.max_drift,
            aorta_min_support: a.min_support,
            aorta_interior_margin: a.interior_margin,
            hist_bin_width: a.bin_width,
            hu_lo: None,
            hu_hi: None,
            energy: e.energy,
            lambda: e.lambda,
            ball_radius: e.ball_radius,
            dt: e.dt,
            eps: e.eps,
            max_iters: e.max_iters,
            tol: e.tol,
            window: e.window,
            reinit_every: e.reinit_every,
            band: e.band,
            t_v: e.t_v,
            capture_radius: e.capture_radius,
            init_dilation: e.init_dilation,
            seed_radius: e.seed_radius,
            aorta_overlap: e.aorta_overlap,
            conformal_sigma: e.conformal_sigma,
            balloon: e.balloon,
            curvature_clamp: e.curvature_clamp,
            speed_exponent: k.speed_exponent,
            branch_floor: k.branch_floor,
            n_branches: k.n_branches,
            cpr_half_extent: p.half_extent,
            cpr_spacing: p.spacing,
            cpr_step: 0.5,
        }
    }
}

impl PipelineConfig {
    /// Parses config text; an empty text gives all defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Applies `key=value` overrides in order; values use TOML syntax and
    /// fall back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("serialized config parses");
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()));
            table.insert(k.to_string(), value);
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.seed_params().validate()?;
        self.frangi_params().validate().map_err(as_config)?;
        self.aorta_params().validate()?;
        self.evolution_params(None).validate()?;
        self.skeleton_params().validate()?;
        self.cpr_params().validate()?;
        match (self.hu_lo, self.hu_hi) {
            (Some(lo), Some(hi)) if !(lo < hi) => {
                return Err(Error::Config(format!("hu_lo ({lo}) must be below hu_hi ({hi})")));
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Config("hu_lo and hu_hi must be set together".into()));
            }
            _ => {}
        }
        if !(self.cpr_step > 0.0) {
            return Err(Error::Config("cpr_step must be > 0".into()));
        }
        Ok(())
    }

    pub fn hu_override(&self) -> Option<[f64; 2]> {
        Some([self.hu_lo?, self.hu_hi?])
    }

    pub fn seed_params(&self) -> SeedParams {
        SeedParams {
            cr: self.cr,
            plane_gap: self.plane_gap,
            plane_half_extent: self.plane_half_extent,
            plane_spacing: self.plane_spacing,
            n_rays: self.n_rays,
            trim: self.ray_trim,
            r_max: self.r_max,
            k: self.gf_k,
            t_f: self.t_f,
            t_gf: self.t_gf,
            v_t: self.v_t.unwrap_or(f64::NEG_INFINITY),
            pairing: self.pairing,
            edge_smoothing: self.edge_smoothing,
            gf_smoothing: self.gf_smoothing,
            min_fill: self.min_fill,
            min_radius: self.min_roi_radius,
            max_radius: self.max_roi_radius,
        }
    }

    pub fn frangi_params(&self) -> FrangiParams {
        FrangiParams {
            alpha: self.alpha,
            beta: self.beta,
            c: self.c,
            scales: self.scales.clone(),
            gamma: self.gamma,
        }
    }

    pub fn aorta_params(&self) -> AortaParams {
        AortaParams {
            z_band: self.aorta_z_band,
            bright_threshold: self.aorta_bright_threshold,
            radius_min: self.aorta_radius_min,
            radius_max: self.aorta_radius_max,
            max_drift: self.aorta_max_drift,
            min_support: self.aorta_min_support,
            interior_margin: self.aorta_interior_margin,
            bin_width: self.hist_bin_width,
        }
    }

    pub fn evolution_params(&self, hu_gate: Option<[f64; 2]>) -> EvolutionParams {
        EvolutionParams {
            energy: self.energy,
            lambda: self.lambda,
            ball_radius: self.ball_radius,
            dt: self.dt,
            eps: self.eps,
            max_iters: self.max_iters,
            tol: self.tol,
            window: self.window,
            reinit_every: self.reinit_every,
            band: self.band,
            hu_gate,
            t_v: self.t_v,
            capture_radius: self.capture_radius,
            init_dilation: self.init_dilation,
            seed_radius: self.seed_radius,
            aorta_overlap: self.aorta_overlap,
            conformal_sigma: self.conformal_sigma,
            balloon: self.balloon,
            curvature_clamp: self.curvature_clamp,
        }
    }

    pub fn skeleton_params(&self) -> SkeletonParams {
        SkeletonParams {
            speed_exponent: self.speed_exponent,
            branch_floor: self.branch_floor,
            n_branches: self.n_branches,
        }
    }

    pub fn cpr_params(&self) -> CprParams {
        CprParams {
            half_extent: self.cpr_half_extent,
            spacing: self.cpr_spacing,
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_defaults() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn roundtrip_is_fixed_point() {
        let mut cfg = PipelineConfig::default();
        cfg.c = Some(12.5);
        cfg.hu_lo = Some(300.0);
        cfg.hu_hi = Some(700.0);
        cfg.input = Some("in.mha".into());
        let text = cfg.to_toml();
        let back = PipelineConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(PipelineConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::parse("cr = 1.5"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::parse("cr = \"x\""), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::parse("hu_lo = 100.0"), Err(Error::Config(_))));
        assert!(matches!(
            PipelineConfig::parse("scales = [2.0, 1.0]"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn overrides_win_over_file() {
        let cfg = PipelineConfig::parse("cr = 0.46\nenergy = \"geodesic\"").unwrap();
        assert_eq!(cfg.cr, 0.46);
        let o = cfg
            .with_overrides(&["cr=0.55", "energy=chan_vese_global", "scales=[1.0, 2.0]"])
            .unwrap();
        assert_eq!(o.cr, 0.55);
        assert_eq!(o.energy, EnergyKind::ChanVeseGlobal);
        assert_eq!(o.scales, vec![1.0, 2.0]);
        assert!(cfg.with_overrides(&["nope=1"]).is_err());
        assert!(cfg.with_overrides(&["cr"]).is_err());
    }
}
