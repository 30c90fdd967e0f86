use shipexp_core::harness::pipeline;
use shipexp_core::harness::resampling::{self, ResamplingConfig};
use shipexp_core::regression::NominalModel;
use shipexp_core::{DisturbanceConfig, HarnessConfig, PrimitiveLibrary, VesselParams};

#[test]
fn reference_pipeline_fulfils_counters() {
    let a = pipeline::run_pipeline(&HarnessConfig::default()).unwrap();
    assert_eq!(a.report.counters_reached, a.report.counters_required);
    assert!(a.report.counters_required.iter().sum::<usize>() > 0);
    assert_eq!(a.report.plan_cost, a.report.basic_primitives as f64);
    assert_eq!(a.replay.len(), a.input.segment_lens.iter().sum::<usize>());
    assert!(a.report.cv.norm.is_finite());
}

#[test]
fn shipped_config_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.json");
    let cfg = HarnessConfig::load(path.as_ref()).unwrap();
    assert_eq!(cfg, HarnessConfig::default());
}

#[test]
fn different_seed_changes_replay_only_downstream() {
    let a = pipeline::run_pipeline(&HarnessConfig::default()).unwrap();
    let b = pipeline::run_pipeline(&HarnessConfig { seed: 7, ..Default::default() }).unwrap();
    assert_eq!(a.plan, b.plan);
    assert_ne!(a.replay.outputs, b.replay.outputs);
}

#[test]
fn artifact_bundle_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let a = pipeline::run_pipeline(&HarnessConfig::default()).unwrap();
    pipeline::write_artifacts(&a, dir.path()).unwrap();
    for f in [
        "library.json",
        "summaries.json",
        "allocation.json",
        "allocation.txt",
        "schedule.json",
        "map.txt",
        "plan.json",
        "replay.csv",
        "estimate.json",
        "validation.json",
        "report.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let lib = std::fs::read_to_string(dir.path().join("library.json")).unwrap();
    let back = PrimitiveLibrary::from_json(&lib, &VesselParams::reference()).unwrap();
    assert_eq!(back, a.library);
}

#[test]
fn resampling_study_prefers_optimized_picks() {
    let p = VesselParams::reference();
    let lib = PrimitiveLibrary::reference(&p, &Default::default()).unwrap();
    let (ds, classes) = resampling::synthetic_campaign(&lib, &p, &DisturbanceConfig::reference(11), 5, 75).unwrap();
    let subs = resampling::split_subexperiments(&ds, &classes).unwrap();
    let cfg = ResamplingConfig { resamples: 60, ..Default::default() };
    let rep = resampling::run_resampling(&subs, &NominalModel::reference(), &cfg).unwrap();
    assert_eq!(rep.records.len(), 120);
    assert!(rep.degenerate_fraction(true) <= rep.degenerate_fraction(false));
}
