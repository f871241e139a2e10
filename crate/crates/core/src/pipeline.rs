//! End-to-end run: seeds, vesselness, blood model, segmentation, centreline
//! and straightened volume, with a JSON run report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blood::{detect_aorta, estimate_blood_model, BloodIntensityModel};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::levelset::{segment_tree, SliceRecord, StopReason};
use crate::seeds::{find_rois, score_candidates, select_seeds, Roi2D, SeedCandidate};
use crate::skeleton::{cpr_straighten, extract_centreline, resample_polyline, save_centreline, Centreline};
use crate::vesselness::{multiscale_vesselness_region, VesselnessField};
use crate::volume::io::{load_volume, save_mask, save_volume};
use crate::volume::{connected_components, BinaryMask, Connectivity, Volume3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BloodSource {
    Aorta,
    /// Aorta not found; fitted from bright voxels around the seed ROI.
    SeedRegion,
    Override,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BloodReport {
    pub source: BloodSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<BloodIntensityModel>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub voxels: usize,
    pub components: usize,
    pub volume_mm3: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Wall-clock seconds per completed stage.
    pub timings: BTreeMap<String, f64>,
    pub stages_completed: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_slice: Option<usize>,
    pub seed_candidates: Vec<SeedCandidate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blood: Option<BloodReport>,
    pub slices: Vec<SliceRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reasons: Option<[StopReason; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskStats>,
    pub branch_lengths: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpr_dims: Option<[usize; 3]>,
    pub artifacts: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    /// JSON with sorted keys.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    /// Copy with timings cleared, for run-to-run comparison.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }
}

/// In-memory products of a run. Fields are filled as stages complete.
#[derive(Debug, Default)]
pub struct PipelineRun {
    pub report: RunReport,
    pub vesselness: Option<VesselnessField>,
    pub aorta: Option<BinaryMask>,
    pub mask: Option<BinaryMask>,
    pub centreline: Option<Centreline>,
    pub cpr: Option<Volume3D>,
}

pub const STAGES: [&str; 6] = ["seeds", "vesselness", "blood_model", "segmentation", "skeleton", "cpr"];

struct Runner<'a> {
    out: Option<&'a Path>,
    run: PipelineRun,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut PipelineRun, Option<&Path>) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        match f(&mut self.run, self.out) {
            Ok(v) => {
                self.run
                    .report
                    .timings
                    .insert(name.to_string(), t.elapsed().as_secs_f64());
                self.run.report.stages_completed.push(name.to_string());
                Ok(v)
            }
            Err(e) => {
                self.run.report.failed_stage = Some(name.to_string());
                self.run.report.error = Some(e.to_string());
                Err(Error::Stage {
                    stage: name.to_string(),
                    source: Box::new(e),
                })
            }
        }
    }
}

fn persist(
    report: &mut RunReport,
    out: Option<&Path>,
    name: &str,
    save: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    if let Some(dir) = out {
        let path = dir.join(name);
        save(&path)?;
        let raw = path.with_extension("raw");
        report.artifacts.push(path);
        if raw.exists() {
            report.artifacts.push(raw);
        }
    }
    Ok(())
}

/// Slice band around `k` wide enough for the largest Hessian scale.
fn seed_band(vol: &Volume3D, k: usize, scales: &[f64]) -> ([usize; 3], [usize; 3]) {
    let [nx, ny, nz] = vol.dims();
    let smax = scales.iter().cloned().fold(0.0, f64::max);
    let m = (3.0 * smax / vol.spacing()[2]).ceil() as usize + 2;
    ([0, 0, k.saturating_sub(m)], [nx - 1, ny - 1, (k + m).min(nz - 1)])
}

/// Core voxels of the seed ROI over the neighbouring slices: within half
/// the ROI's equivalent radius of its centroid and above the midpoint between
/// the slice median and the ROI peak.
fn seed_region_values(vol: &Volume3D, roi: &Roi2D, k: usize) -> Vec<f64> {
    let [nx, ny, nz] = vol.dims();
    let r = 0.5 * (roi.area as f64 / std::f64::consts::PI).sqrt();
    let [cx, cy] = roi.centroid;
    let (z0, z1) = (k.saturating_sub(10), (k + 10).min(nz - 1));
    let mut core = Vec::new();
    for z in z0..=z1 {
        for y in 0..ny {
            for x in 0..nx {
                if (x as f64 - cx).hypot(y as f64 - cy) <= r.max(1.0) {
                    core.push(vol.get(x, y, z));
                }
            }
        }
    }
    let mut slice: Vec<f64> = (0..nx * ny).map(|i| vol.get(i % nx, i / nx, k)).collect();
    slice.sort_by(f64::total_cmp);
    let median = slice[slice.len() / 2];
    let mut sorted = core.clone();
    sorted.sort_by(f64::total_cmp);
    let peak = sorted[sorted.len() / 2];
    let cut = 0.5 * (median + peak);
    core.into_iter().filter(|&v| v >= cut).collect()
}

/// Runs every stage on an in-memory volume, persisting artifacts to `out`
/// when given. On failure the returned run holds everything completed so far
/// and the error names the stage.
pub fn run_pipeline_on(vol: &Volume3D, cfg: &PipelineConfig, out: Option<&Path>) -> (PipelineRun, Result<()>) {
    let mut r = Runner {
        out,
        run: PipelineRun::default(),
    };
    let res = run_stages(vol, cfg, &mut r);
    if let Some(dir) = out {
        let path = dir.join("report.json");
        r.run.report.artifacts.push(path.clone());
        if let Err(e) = std::fs::write(&path, r.run.report.to_json()) {
            let err = Error::io(path, e);
            return (r.run, res.and(Err(err)));
        }
    }
    (r.run, res)
}

fn run_stages(vol: &Volume3D, cfg: &PipelineConfig, r: &mut Runner) -> Result<()> {
    cfg.validate()?;
    if let Some(dir) = r.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
        r.run.report.artifacts.push(path);
    }
    let sp = cfg.seed_params();
    let fp = cfg.frangi_params();

    let (k, rois, seeds) = r.stage("seeds", |run, _| {
        let (k, rois) = find_rois(vol, &sp)?;
        run.report.reference_slice = Some(k);
        let (lo, hi) = seed_band(vol, k, &fp.scales);
        let vf = multiscale_vesselness_region(vol, &fp, lo, hi)?;
        let cands = score_candidates(vol, &vf, &rois, k, &sp)?;
        run.report.seed_candidates = cands.clone();
        run.vesselness = Some(vf);
        let seeds = select_seeds(&cands, sp.t_f, sp.t_gf, sp.v_t)?;
        Ok((k, rois, seeds))
    })?;

    r.stage("vesselness", |run, out| {
        if cfg.t_v > 0.0 {
            let g = vol.geometry();
            let hi = [g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1];
            run.vesselness = Some(multiscale_vesselness_region(vol, &fp, [0, 0, 0], hi)?);
        }
        let v = &run.vesselness.as_ref().expect("seed stage computed vesselness").v;
        persist(&mut run.report, out, "vesselness.mha", |p| save_volume(v, p))
    })?;

    let gate = r.stage("blood_model", |run, out| {
        let blood = if let Some([lo, hi]) = cfg.hu_override() {
            BloodReport {
                source: BloodSource::Override,
                model: None,
                lo,
                hi,
            }
        } else {
            match estimate_blood_model(vol, &cfg.aorta_params()) {
                Ok((model, det)) => {
                    // the fit uses the scanned band; the merge test needs the
                    // aorta along the whole volume
                    let mut ap = cfg.aorta_params();
                    ap.z_band = 1.0;
                    run.aorta = Some(detect_aorta(vol, &ap).map(|d| d.mask).unwrap_or(det.mask));
                    BloodReport {
                        source: BloodSource::Aorta,
                        model: Some(model),
                        lo: model.range[0],
                        hi: model.range[1],
                    }
                }
                Err(Error::AortaNotFound) => {
                    let top = &seeds[0];
                    let roi = rois
                        .iter()
                        .min_by(|a, b| {
                            let d = |r: &Roi2D| {
                                (r.centroid[0] - top.point[0] as f64).hypot(r.centroid[1] - top.point[1] as f64)
                            };
                            d(a).total_cmp(&d(b))
                        })
                        .expect("an accepted seed comes from an ROI");
                    let values = seed_region_values(vol, roi, k);
                    let model = BloodIntensityModel::from_values(&values, cfg.hist_bin_width)?;
                    BloodReport {
                        source: BloodSource::SeedRegion,
                        model: Some(model),
                        lo: model.range[0],
                        hi: model.range[1],
                    }
                }
                Err(e) => return Err(e),
            }
        };
        let gate = [blood.lo, blood.hi];
        run.report.blood = Some(blood);
        if let Some(a) = &run.aorta {
            persist(&mut run.report, out, "aorta_mask.mha", |p| save_mask(a, p))?;
        }
        Ok(gate)
    })?;

    r.stage("segmentation", |run, out| {
        let seed = seeds
            .iter()
            .find(|s| s.intensity >= gate[0] && s.intensity <= gate[1])
            .ok_or(Error::NoSeed {
                candidates: seeds.len(),
            })?
            .point;
        run.report.seed = Some(seed);
        let ep = cfg.evolution_params(Some(gate));
        let vess = if cfg.t_v > 0.0 {
            run.vesselness.as_ref().map(|v| &v.v)
        } else {
            None
        };
        let seg = segment_tree(vol, seed, vess, run.aorta.as_ref(), &ep)?;
        let g = seg.mask.geometry();
        run.report.slices = seg.records;
        run.report.stop_reasons = Some([seg.backward_stop, seg.forward_stop]);
        run.report.mask = Some(MaskStats {
            voxels: seg.mask.count(),
            components: connected_components(&seg.mask, Connectivity::Full).count(),
            volume_mm3: seg.mask.count() as f64 * g.voxel_volume(),
        });
        persist(&mut run.report, out, "mask.mha", |p| save_mask(&seg.mask, p))?;
        run.mask = Some(seg.mask);
        Ok(())
    })?;

    r.stage("skeleton", |run, out| {
        let c = extract_centreline(
            run.mask.as_ref().expect("segmentation stage ran"),
            &cfg.skeleton_params(),
        )?;
        run.report.branch_lengths = c.branches.iter().map(|b| b.length()).collect();
        persist(&mut run.report, out, "centreline.csv", |p| save_centreline(&c, p))?;
        run.centreline = Some(c);
        Ok(())
    })?;

    r.stage("cpr", |run, out| {
        let main = &run.centreline.as_ref().expect("skeleton stage ran").branches[0];
        if main.points.len() < 2 {
            return Err(Error::Empty(
                "main branch is a single point; nothing to straighten".into(),
            ));
        }
        let pts = resample_polyline(&main.points, cfg.cpr_step)?;
        let s = cpr_straighten(vol, &pts, &cfg.cpr_params())?;
        run.report.cpr_dims = Some(s.volume.dims());
        persist(&mut run.report, out, "cpr.mha", |p| save_volume(&s.volume, p))?;
        run.cpr = Some(s.volume);
        Ok(())
    })?;
    Ok(())
}

/// Loads `cfg.input` and runs every stage into `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("pipeline needs an input volume".into()))?;
    let out = cfg
        .output_dir
        .as_ref()
        .ok_or_else(|| Error::Config("pipeline needs an output directory".into()))?;
    let vol = load_volume(input)?;
    let (run, res) = run_pipeline_on(&vol, cfg, Some(out));
    res.map(|_| run.report)
}
