use mgcfa::invariance::{build_partial_spec, run_anchor_validation, run_invariance_ladder};
use mgcfa::estimator::{fit_with, FitOptions};
use mgcfa::simulation::{generate_replication, SimCondition};
use mgcfa::{ConstraintLevel, ModelSpec, OrdinalDataset, Row};
use rayon::prelude::*;

const ANCHORS: [&str; 4] = ["anchor_1", "anchor_2", "anchor_3", "anchor_4"];
// Two shifted items alongside two clean ones. A shift common to every
// item in the set would be absorbed by the focal mean.
const MIXED: [&str; 4] = ["auth_1", "auth_2", "anchor_1", "anchor_2"];

fn data(delta: f64, n: usize, seed: u64, rep: usize) -> OrdinalDataset {
    generate_replication(&SimCondition::new(delta, 0.9, 1.0, 4, n).with_replications(1, seed), rep).unwrap()
}

#[test]
fn identical_groups_pass_every_step() {
    let base = data(0.0, 1500, 3, 0);
    let mut d = base.clone();
    d.rows = base.rows.iter().filter(|r| r.group == 0).cloned().collect();
    let copies: Vec<Row> = d.rows.iter().map(|r| Row { group: 1, ..r.clone() }).collect();
    d.rows.extend(copies);
    let l = run_anchor_validation(&d, &ANCHORS).unwrap();
    for row in &l.rows[1..] {
        assert!(row.p_value.unwrap() > 0.99, "{:?}", row);
    }
}

#[test]
fn anchor_order_does_not_matter() {
    let d = data(0.3, 800, 4, 0);
    let a = run_anchor_validation(&d, &ANCHORS).unwrap();
    let b = run_anchor_validation(&d, &["anchor_3", "anchor_1", "anchor_4", "anchor_2"]).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.items, b.items);
}

#[test]
fn ladder_df_increases_down_the_ladder() {
    let d = data(0.3, 1000, 5, 0);
    let spec = ModelSpec::new(&d, ConstraintLevel::Configural);
    let l = run_invariance_ladder(&d, &spec).unwrap();
    assert_eq!(l.rows.len(), 4);
    assert_eq!(l.rows[0].df_model, 40);
    assert_eq!(l.rows[1].df_model, 47);
    for w in l.rows.windows(2) {
        assert!(w[1].df_model >= w[0].df_model);
        assert_eq!(w[1].delta_df.unwrap() as i64, w[1].df_model - w[0].df_model);
    }
    assert!(l.rows[0].p_value.is_none());
}

#[test]
fn anchor_validation_is_calibrated() {
    // 100 seeds each: invariant anchors should pass the metric step, and a
    // set where half the items carry a 0.5 shift should fail the scalar step.
    let seeds: Vec<u64> = (0..100).collect();
    let metric_pass = seeds
        .par_iter()
        .filter(|&&s| {
            let l = run_anchor_validation(&data(0.5, 4000, 1000 + s, 0), &ANCHORS).unwrap();
            l.row(ConstraintLevel::Metric).unwrap().p_value.unwrap() >= 0.05
        })
        .count();
    let scalar_reject = seeds
        .par_iter()
        .filter(|&&s| {
            let l = run_anchor_validation(&data(0.5, 4000, 2000 + s, 0), &MIXED).unwrap();
            l.row(ConstraintLevel::Scalar).unwrap().p_value.unwrap() < 0.05
        })
        .count();
    assert!(metric_pass >= 90, "metric passes {metric_pass}/100");
    assert!(scalar_reject >= 90, "scalar rejects {scalar_reject}/100");
}

#[test]
fn single_anchor_still_recovers_the_gap() {
    let d = data(0.3, 4000, 6, 0);
    let (spec, warnings) = build_partial_spec(&d, &["anchor_2"]).unwrap();
    assert_eq!(warnings.len(), 1);
    let f = fit_with(&d, &spec, &FitOptions::fast()).unwrap();
    assert!(f.converged);
    let mu = f.params.latent_mean[1];
    assert!((mu - 0.2).abs() <= 0.15, "μ̂ = {mu}");
}
