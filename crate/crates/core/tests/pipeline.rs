use tubeseg::config::PipelineConfig;
use tubeseg::phantom::{dice, generate, PhantomKind, PhantomSpec};
use tubeseg::pipeline::{run_pipeline, run_pipeline_on, BloodSource, STAGES};
use tubeseg::volume::io::save_volume;
use tubeseg::volume::{Geometry, Volume3D};
use tubeseg::Error;

fn hard_tube() -> (Volume3D, tubeseg::phantom::GroundTruth) {
    let g = Geometry::isotropic([64, 64, 64], 0.5).unwrap();
    generate(&PhantomSpec::preset(PhantomKind::Tube, g, None, None).unwrap().hard()).unwrap()
}

#[test]
fn tube_end_to_end() {
    let (vol, truth) = hard_tube();
    let dir = tempfile::tempdir().unwrap();
    let (run, res) = run_pipeline_on(&vol, &PipelineConfig::default(), Some(dir.path()));
    res.unwrap();
    let r = &run.report;
    assert_eq!(r.stages_completed, STAGES.to_vec());
    assert!(r.seed_candidates.iter().any(|c| c.accepted));
    assert!(dice(run.mask.as_ref().unwrap(), &truth.mask).unwrap() >= 0.9);
    assert_eq!(r.branch_lengths.len(), 1);
    assert_eq!(r.blood.as_ref().unwrap().source, BloodSource::SeedRegion);
    let m = r.mask.as_ref().unwrap();
    assert_eq!(m.components, 1);
    assert_eq!(r.cpr_dims.unwrap()[..2], [81, 81]);
    for name in [
        "config.toml",
        "vesselness.mha",
        "mask.mha",
        "mask.raw",
        "centreline.csv",
        "cpr.mha",
        "report.json",
    ] {
        let p = dir.path().join(name);
        assert!(p.exists(), "{name} missing");
        assert!(r.artifacts.contains(&p), "{name} not listed");
    }
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["mask"]["voxels"], m.voxels);
}

#[test]
fn empty_phantom_stops_at_seeds() {
    let g = Geometry::isotropic([40, 40, 40], 0.5).unwrap();
    let vol = Volume3D::filled(g, 40.0);
    let dir = tempfile::tempdir().unwrap();
    let (run, res) = run_pipeline_on(&vol, &PipelineConfig::default(), Some(dir.path()));
    let err = res.unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "seeds"));
    assert!(matches!(err.root(), Error::NoSeed { .. }));
    assert_eq!(err.exit_code(), 2);
    assert_eq!(run.report.failed_stage.as_deref(), Some("seeds"));
    assert!(run.report.error.as_ref().unwrap().contains("no seed"));
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn runs_are_deterministic() {
    let (vol, _) = hard_tube();
    let cfg = PipelineConfig::default();
    let (a, ra) = run_pipeline_on(&vol, &cfg, None);
    let (b, rb) = run_pipeline_on(&vol, &cfg, None);
    ra.unwrap();
    rb.unwrap();
    assert_eq!(a.report.without_timings(), b.report.without_timings());
    assert_eq!(
        a.report.without_timings().to_json(),
        b.report.without_timings().to_json()
    );
    assert_eq!(a.mask, b.mask);
    assert_eq!(
        a.cpr.unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.cpr.unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn aorta_supplies_blood_model() {
    let g = Geometry::isotropic([64, 64, 64], 1.0).unwrap();
    let spec = PhantomSpec::preset(PhantomKind::AortaPlusCoronary, g, None, None)
        .unwrap()
        .hard();
    let (vol, truth) = generate(&spec).unwrap();
    let (run, res) = run_pipeline_on(&vol, &PipelineConfig::default(), None);
    res.unwrap();
    let b = run.report.blood.as_ref().unwrap();
    assert_eq!(b.source, BloodSource::Aorta);
    let m = b.model.unwrap();
    assert!((m.mu - 495.0).abs() < 10.0 && (m.sigma - 42.0).abs() < 8.0, "{m:?}");
    // the coronary is cut where it merges with the aorta
    assert!(run
        .report
        .stop_reasons
        .unwrap()
        .contains(&tubeseg::levelset::StopReason::AortaMerge));
    let mask = run.mask.unwrap();
    assert!(mask.intersection(run.aorta.as_ref().unwrap()).unwrap().count() < mask.count() / 10);
    assert!(dice(&mask, &truth.mask).unwrap() >= 0.85);
}

#[test]
fn override_gate_is_reported() {
    let (vol, _) = hard_tube();
    let cfg = PipelineConfig::parse("hu_lo = 350.0\nhu_hi = 650.0").unwrap();
    let (run, res) = run_pipeline_on(&vol, &cfg, None);
    res.unwrap();
    let b = run.report.blood.unwrap();
    assert_eq!((b.source, b.lo, b.hi), (BloodSource::Override, 350.0, 650.0));
}

#[test]
fn run_from_config_paths() {
    let (vol, _) = hard_tube();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.mha");
    save_volume(&vol, &input).unwrap();
    let mut cfg = PipelineConfig::default();
    assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
    cfg.input = Some(input);
    cfg.output_dir = Some(dir.path().join("out"));
    let r = run_pipeline(&cfg).unwrap();
    assert!(r.artifacts.iter().all(|p| p.exists()));
}
