use cojump_core::experiments::{Bands, ExperimentKind, ExperimentPlan};
use cojump_core::io::{
    canonical_hash, ingest_and_align, load_plan, parse_increments_csv, parse_plan, plan_to_toml,
    read_increments_any, read_paths_csv, write_increments_csv, write_paths_csv, PriceScale,
    RunManifest, TickSeries,
};
use cojump_core::model::JumpSizeLaw;
use cojump_core::simulate::CutoffPolicy;
use cojump_core::{
    assemble_paths, CoefficientSpec, FiniteActivityJumpSpec, IncrementPair,
    InfiniteActivityJumpSpec, ModelSpec, SimConfig, ThresholdRule,
};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    any::<u64>()
        .prop_map(f64::from_bits)
        .prop_filter("finite", |x| x.is_finite())
}

proptest! {
    #[test]
    fn increments_csv_is_bit_exact(
        h in finite().prop_filter("positive", |h| *h > 0.0),
        xs in proptest::collection::vec((finite(), finite()), 1..40),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        let inc = IncrementPair::new(h, a, b).unwrap();
        let back = parse_increments_csv(&cojump_core::io::increments_to_csv(&inc)).unwrap();
        prop_assert_eq!(back.h().to_bits(), inc.h().to_bits());
        for (x, y) in back.dx1().iter().zip(inc.dx1()).chain(back.dx2().iter().zip(inc.dx2())) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

fn jumpy_model() -> ModelSpec {
    let mut m = ModelSpec::diffusion(2.0, CoefficientSpec::constant(0.3, 0.6, 0.7));
    m.x0 = [100.0, 50.0];
    m.fa2 = Some(FiniteActivityJumpSpec {
        intensity: 3.0,
        size: JumpSizeLaw::Normal { mean: 0.0, sd: 0.5 },
    });
    m.ia1 = Some(InfiniteActivityJumpSpec::new(0.5, 0.9).unwrap());
    m
}

#[test]
fn paths_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.csv");
    let p = assemble_paths(&jumpy_model(), &SimConfig::new(300, 5)).unwrap();
    write_paths_csv(&p, &file).unwrap();
    let back = read_paths_csv(&file).unwrap();
    assert_eq!(back.grid, p.grid);
    assert_eq!(back.times, p.times);
    assert_eq!(back.x1, p.x1);
    assert_eq!(back.x2, p.x2);
    assert_eq!(back.x0, p.x0);
    assert_eq!(back.decomposition, p.decomposition);
    assert_eq!(back.truth, p.truth);
    assert_eq!(back.meta, p.meta);
    assert_eq!(back.cutoff, p.cutoff);
    let (inc, from_paths) = read_increments_any(&file).unwrap();
    assert_eq!(inc, p.increments().unwrap());
    assert!(from_paths.is_some());
    // no temporary files left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn increments_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("inc.csv");
    let p = assemble_paths(&jumpy_model(), &SimConfig::new(64, 6)).unwrap();
    let inc = p.increments().unwrap();
    write_increments_csv(&inc, &file).unwrap();
    let (back, none) = read_increments_any(&file).unwrap();
    assert_eq!(back, inc);
    assert!(none.is_none());
}

#[test]
fn reingesting_a_simulated_path_recovers_its_increments() {
    let p = assemble_paths(&jumpy_model(), &SimConfig::new(500, 8)).unwrap();
    // levels stay far from zero, so they are valid raw prices
    assert!(p.x1.iter().chain(&p.x2).all(|v| *v > 0.0));
    let a = TickSeries::new(p.times.clone(), p.x1.clone()).unwrap();
    let b = TickSeries::new(p.times.clone(), p.x2.clone()).unwrap();
    let inc = ingest_and_align(&a, &b, 500, PriceScale::Raw).unwrap();
    let orig = p.increments().unwrap();
    assert_eq!(inc.dx1(), orig.dx1());
    assert_eq!(inc.dx2(), orig.dx2());
    assert_eq!(inc.h(), orig.h());
}

#[test]
fn constant_prices_give_zero_increments() {
    let a = TickSeries::new(vec![0.0, 0.7, 1.3, 5.0], vec![3.0; 4]).unwrap();
    let b = TickSeries::new(vec![0.2, 2.0, 4.0], vec![7.0; 3]).unwrap();
    let inc = ingest_and_align(&a, &b, 10, PriceScale::Log).unwrap();
    assert!(inc.dx1().iter().chain(inc.dx2()).all(|v| *v == 0.0));
}

#[test]
fn ingestion_stays_inside_the_overlap() {
    // a price move before the overlap starts must not show up as an increment
    let a = TickSeries::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 5.0, 5.0, 5.0]).unwrap();
    let b = TickSeries::new(vec![1.5, 3.0], vec![2.0, 2.0]).unwrap();
    let inc = ingest_and_align(&a, &b, 3, PriceScale::Log).unwrap();
    assert!(inc.dx1().iter().all(|v| *v == 0.0));
    assert_eq!(inc.h(), 0.5);
}

#[test]
fn plan_config_round_trip_and_hash() {
    let mut model = ModelSpec::diffusion(1.0, CoefficientSpec::constant(1.0, 1.0, 0.5));
    model.fa1 = Some(FiniteActivityJumpSpec {
        intensity: 5.0,
        size: JumpSizeLaw::Normal { mean: 0.0, sd: 1.0 },
    });
    let plan = ExperimentPlan {
        kind: ExperimentKind::Normality,
        model,
        rule: ThresholdRule::new(9.0, 0.9).unwrap(),
        n_ladder: vec![512, 1024],
        replications: 40,
        seed: 3,
        cutoff: CutoffPolicy::Explicit { eps0: 0.01 },
        bands: Bands::default(),
    };
    let text = plan_to_toml(&plan).unwrap();
    let back = parse_plan(&text).unwrap();
    assert_eq!(back, plan);
    assert_eq!(
        canonical_hash(&back).unwrap(),
        canonical_hash(&plan).unwrap()
    );

    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("plan.toml");
    std::fs::write(&f, &text).unwrap();
    assert_eq!(load_plan(&f).unwrap(), plan);
}

#[test]
fn hand_written_plan_parses() {
    let text = r#"
kind = "normality"
n_ladder = [256, 512]
replications = 20
seed = 4

[rule]
coeff = 9.0
beta = 0.9

[model]
horizon = 1.0

[model.coefficients]
vol1 = { kind = "constant", value = 1.0 }
vol2 = { kind = "constant", value = 1.0 }
corr = { kind = "constant", value = 0.5 }

[model.fa1]
intensity = 5.0
size = { kind = "normal", mean = 0.0, sd = 1.0 }

[bands]
ks_max = 0.2
"#;
    let plan = parse_plan(text).unwrap();
    assert_eq!(plan.bands.ks_max, Some(0.2));
    assert_eq!(plan.bands.sigma_band, 3.0);
    assert!(plan.model.fa1.is_some());
    assert!(parse_plan("kind = \"normality\"\n").is_err());
}

#[test]
fn manifest_round_trip_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest::new("simulate", &jumpy_model(), Some(7), vec!["a.csv".into()]).unwrap();
    let f = dir.path().join("m.json");
    m.write(&f).unwrap();
    let back = RunManifest::read(&f).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.config_hash, canonical_hash(&jumpy_model()).unwrap());
    let model: ModelSpec = serde_json::from_value(back.config).unwrap();
    assert_eq!(model, jumpy_model());
}
