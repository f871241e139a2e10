use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use tubeseg::blood::estimate_blood_model;
use tubeseg::config::PipelineConfig;
use tubeseg::levelset::segment_tree;
use tubeseg::phantom::{generate, PhantomKind, PhantomSpec, Profile};
use tubeseg::pipeline::{run_pipeline_on, RunReport};
use tubeseg::seeds::{find_rois, score_candidates, select_seeds};
use tubeseg::skeleton::{
    cpr_straighten, extract_centreline, load_centreline, resample_polyline, save_centreline, Branch, Centreline,
};
use tubeseg::vesselness::multiscale_vesselness;
use tubeseg::volume::io::{load_mask, load_volume, save_mask, save_volume};
use tubeseg::volume::Geometry;

#[derive(Parser)]
#[command(name = "tubeseg", version, about = "Tubular structure segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. `--set lambda=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Reference slice fraction.
    #[arg(long, global = true)]
    cr: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> tubeseg::Result<PipelineConfig> {
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let mut overrides = self.overrides.clone();
        if let Some(cr) = self.cr {
            overrides.push(format!("cr={cr}"));
        }
        base.with_overrides(&overrides)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic phantom with its ground truth.
    Phantom(PhantomArgs),
    /// Multiscale vesselness of a volume.
    Vesselness {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-voxel best scale.
        #[arg(long)]
        scale_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Detect seed points on the reference slice.
    Seeds {
        #[arg(long)]
        input: PathBuf,
        /// JSON file for the scored candidates.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fit the blood intensity model from the aorta.
    BloodModel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        aorta_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Bidirectional slice-by-slice segmentation from a seed voxel.
    Segment {
        #[arg(long)]
        input: PathBuf,
        /// Seed voxel `x,y,z`.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vesselness: Option<PathBuf>,
        #[arg(long)]
        aorta: Option<PathBuf>,
        /// JSON file for per-slice records.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Centreline of a binary mask.
    Skeleton {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Straightened volume along one centreline branch.
    Cpr {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        centreline: PathBuf,
        #[arg(long, default_value_t = 0)]
        branch: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run every stage and write artifacts plus report.json.
    Pipeline {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value = "tube")]
    kind: PhantomKind,
    /// Vessel radius (mm).
    #[arg(long)]
    radius: Option<f64>,
    /// Tube length (mm).
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    fg: Option<f64>,
    #[arg(long)]
    bg: Option<f64>,
    /// Noise standard deviation (HU).
    #[arg(long)]
    noise: Option<f64>,
    /// Foreground contrast factor at the last slice.
    #[arg(long, default_value_t = 1.0)]
    ramp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `n` or `nx,ny,nz`.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    dims: Vec<usize>,
    /// `s` or `sx,sy,sz` (mm).
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    spacing: Vec<f64>,
    /// Sharp edges instead of the Gaussian partial-volume profile.
    #[arg(long)]
    hard: bool,
    /// Gaussian edge sigma (mm).
    #[arg(long)]
    edge_sigma: Option<f64>,
    /// Output directory for volume.mha, truth_mask.mha, truth_centreline.csv.
    #[arg(long)]
    out: PathBuf,
}

fn triple<T: Copy>(v: &[T], what: &str) -> anyhow::Result<[T; 3]> {
    match v {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(tubeseg::Error::InvalidArgument(format!("{what} takes one or three values")).into()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let v = serde_json::to_value(value)?;
    std::fs::write(path, serde_json::to_string_pretty(&v)?).with_context(|| format!("writing {}", path.display()))
}

fn phantom(a: &PhantomArgs) -> anyhow::Result<()> {
    let g = Geometry::new(triple(&a.dims, "--dims")?, triple(&a.spacing, "--spacing")?, [0.0; 3])?;
    let mut spec = PhantomSpec::preset(a.kind, g, a.radius, a.length)?;
    if let Some(fg) = a.fg {
        spec.shapes.iter_mut().for_each(|s| s.foreground = fg);
    }
    if let Some(bg) = a.bg {
        spec.background = bg;
    }
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    if a.hard {
        spec.profile = Profile::Hard;
    } else if let Some(sigma) = a.edge_sigma {
        spec.profile = Profile::Gaussian { sigma };
    }
    spec.ramp = a.ramp;
    spec.seed = a.seed;
    spec.validate()?;
    let (vol, truth) = generate(&spec)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_volume(&vol, a.out.join("volume.mha"))?;
    save_mask(&truth.mask, a.out.join("truth_mask.mha"))?;
    let radii: Vec<f64> = spec
        .shapes
        .iter()
        .filter(|s| s.truth)
        .map(|s| s.shape.radius())
        .collect();
    let c = Centreline {
        branches: truth
            .centrelines
            .iter()
            .zip(radii)
            .map(|(pts, r)| Branch {
                points: pts.clone(),
                radii: vec![r; pts.len()],
                parent: None,
                attachment: None,
            })
            .collect(),
    };
    save_centreline(&c, a.out.join("truth_centreline.csv"))?;
    println!(
        "wrote phantom ({} truth voxels) to {}",
        truth.mask.count(),
        a.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Phantom(a) => phantom(&a)?,
        Cmd::Vesselness {
            input,
            out,
            scale_out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let vol = load_volume(&input)?;
            let vf = multiscale_vesselness(&vol, &cfg.frangi_params())?;
            save_volume(&vf.v, &out)?;
            if let Some(p) = scale_out {
                save_volume(&vf.best_scale, p)?;
            }
        }
        Cmd::Seeds { input, out, cfg } => {
            let cfg = cfg.load()?;
            let sp = cfg.seed_params();
            let vol = load_volume(&input)?;
            let (k, rois) = find_rois(&vol, &sp)?;
            let vf = multiscale_vesselness(&vol, &cfg.frangi_params())?;
            let cands = score_candidates(&vol, &vf, &rois, k, &sp)?;
            if let Some(p) = &out {
                write_json(p, &cands)?;
            }
            let seeds = select_seeds(&cands, sp.t_f, sp.t_gf, sp.v_t)?;
            for s in &seeds {
                println!(
                    "seed {},{},{} intensity {:.1} frangi {:.3} gf {:.3}",
                    s.point[0], s.point[1], s.point[2], s.intensity, s.frangi, s.gf
                );
            }
        }
        Cmd::BloodModel {
            input,
            out,
            aorta_out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let vol = load_volume(&input)?;
            let (model, det) = estimate_blood_model(&vol, &cfg.aorta_params())?;
            println!(
                "mu {:.2} sigma {:.2} range [{:.2}, {:.2}]",
                model.mu, model.sigma, model.range[0], model.range[1]
            );
            if let Some(p) = out {
                write_json(&p, &model)?;
            }
            if let Some(p) = aorta_out {
                save_mask(&det.mask, p)?;
            }
        }
        Cmd::Segment {
            input,
            seed,
            out,
            vesselness,
            aorta,
            report,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let vol = load_volume(&input)?;
            let vess = vesselness.map(load_volume).transpose()?;
            let aorta = aorta.map(load_mask).transpose()?;
            let seed = triple(&seed, "--seed")?;
            let seg = segment_tree(
                &vol,
                seed,
                vess.as_ref(),
                aorta.as_ref(),
                &cfg.evolution_params(cfg.hu_override()),
            )?;
            save_mask(&seg.mask, &out)?;
            if let Some(p) = report {
                write_json(&p, &seg.records)?;
            }
            println!("{} voxels", seg.mask.count());
        }
        Cmd::Skeleton { mask, out, cfg } => {
            let cfg = cfg.load()?;
            let c = extract_centreline(&load_mask(&mask)?, &cfg.skeleton_params())?;
            save_centreline(&c, &out)?;
            println!("{} branch(es), {:.2} mm", c.branches.len(), c.total_length());
        }
        Cmd::Cpr {
            input,
            centreline,
            branch,
            out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let vol = load_volume(&input)?;
            let c = load_centreline(&centreline)?;
            let Some(b) = c.branches.get(branch) else {
                return Err(tubeseg::Error::InvalidArgument(format!(
                    "branch {branch} not in centreline ({} branches)",
                    c.branches.len()
                ))
                .into());
            };
            let pts = resample_polyline(&b.points, cfg.cpr_step)?;
            let s = cpr_straighten(&vol, &pts, &cfg.cpr_params())?;
            save_volume(&s.volume, &out)?;
        }
        Cmd::Pipeline { input, out_dir, cfg } => {
            let mut cfg = cfg.load()?;
            if input.is_some() {
                cfg.input = input;
            }
            if out_dir.is_some() {
                cfg.output_dir = out_dir;
            }
            let (Some(input), Some(out)) = (cfg.input.clone(), cfg.output_dir.clone()) else {
                return Err(tubeseg::Error::Config("pipeline needs `input` and `output_dir`".into()).into());
            };
            let vol = load_volume(&input)?;
            let (run, res) = run_pipeline_on(&vol, &cfg, Some(&out));
            summarize(&run.report);
            res?;
        }
    }
    Ok(())
}

fn summarize(r: &RunReport) {
    if let Some(m) = &r.mask {
        println!("mask: {} voxels, {} component(s)", m.voxels, m.components);
    }
    if !r.branch_lengths.is_empty() {
        println!("branches (mm): {:?}", r.branch_lengths);
    }
    println!("artifacts: {}", r.artifacts.len());
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<tubeseg::Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
