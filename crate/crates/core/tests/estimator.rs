use mgcfa::estimator::{fit_with, loglik_at, FitOptions};
use mgcfa::simulation::{generate_replication, SimCondition};
use mgcfa::{build_constraints, fit, lrt, ConstraintLevel, Coord, Error, ModelSpec, OrdinalDataset};

const ANCHORS: [&str; 4] = ["anchor_1", "anchor_2", "anchor_3", "anchor_4"];

fn data(delta: f64, n: usize, rep: usize) -> OrdinalDataset {
    generate_replication(&SimCondition::new(delta, 0.9, 1.0, 4, n).with_replications(1, 77), rep).unwrap()
}

fn fit_level(d: &OrdinalDataset, level: ConstraintLevel) -> mgcfa::FitResult {
    let spec = ModelSpec::new(d, level).with_anchors(&ANCHORS);
    fit_with(d, &spec, &FitOptions::fast()).unwrap()
}

#[test]
fn recovers_focal_mean_without_dif() {
    let d = data(0.0, 4000, 0);
    let f = fit_level(&d, ConstraintLevel::PartialScalarAnchor);
    assert!(f.converged);
    let mu = f.params.latent_mean[1];
    assert!((mu - 0.2).abs() <= 0.08, "μ̂ = {mu}");
}

#[test]
fn converged_fits_meet_their_tolerance_and_count_free_parameters() {
    let d = data(0.3, 1000, 1);
    for level in ConstraintLevel::LADDER.into_iter().chain([ConstraintLevel::PartialScalarAnchor]) {
        let spec = ModelSpec::new(&d, level).with_anchors(&ANCHORS);
        let f = fit_with(&d, &spec, &FitOptions::fast()).unwrap();
        assert!(f.converged, "{level}");
        assert!(f.gradient_norm <= f.gradient_tolerance, "{level}");
        assert_eq!(f.n_free, build_constraints(&spec, &d).unwrap().n_free(), "{level}");
        assert_eq!(f.n_free, f.free_coords.len());
    }
}

#[test]
fn accepted_steps_never_lower_the_likelihood() {
    let d = data(0.3, 1000, 2);
    let f = fit_level(&d, ConstraintLevel::Metric);
    assert!(f.trace.len() > 2);
    for w in f.trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{} then {}", w[0], w[1]);
    }
    assert!((f.trace.last().unwrap() - f.loglik).abs() < 1e-9);
}

#[test]
fn nested_models_have_ordered_likelihoods() {
    let d = data(0.3, 1000, 3);
    let ll = |l| fit_level(&d, l).loglik;
    let conf = ll(ConstraintLevel::Configural);
    let metric = ll(ConstraintLevel::Metric);
    let scalar = ll(ConstraintLevel::Scalar);
    let fv = ll(ConstraintLevel::ScalarFv);
    let partial = ll(ConstraintLevel::PartialScalarAnchor);
    let slack = 1e-6;
    assert!(conf >= metric - slack && metric >= scalar - slack && scalar >= fv - slack);
    assert!(conf >= partial - slack && partial >= scalar - slack);
}

#[test]
fn refit_from_the_optimum_stays_put() {
    let d = data(0.3, 1000, 4);
    let spec = ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor).with_anchors(&ANCHORS);
    let a = fit_with(&d, &spec, &FitOptions::fast()).unwrap();
    let b = fit_with(&d, &spec, &FitOptions { start: Some(a.params.clone()), ..FitOptions::fast() }).unwrap();
    assert!((a.loglik - b.loglik).abs() < 1e-6);
    for &c in &a.free_coords {
        assert!((a.params.get(c) - b.params.get(c)).abs() < 1e-3, "{}", a.label(c));
    }
}

#[test]
fn numeric_gradient_vanishes_at_the_optimum() {
    let d = data(0.3, 1000, 5);
    let spec = ModelSpec::new(&d, ConstraintLevel::Configural);
    let f = fit_with(&d, &spec, &FitOptions::fast()).unwrap();
    let h = 1e-5;
    for &c in &f.free_coords {
        let mut up = f.params.clone();
        let mut dn = f.params.clone();
        up.set(c, f.params.get(c) + h);
        dn.set(c, f.params.get(c) - h);
        let g = (loglik_at(&d, &spec, &up).unwrap() - loglik_at(&d, &spec, &dn).unwrap()) / (2.0 * h);
        assert!(g.abs() < 1e-2, "{}: {g}", f.label(c));
    }
}

#[test]
fn duplicated_rows_shrink_standard_errors_by_root_two() {
    let d = data(0.3, 1000, 6);
    let mut dd = d.clone();
    dd.rows.extend(d.rows.iter().cloned());
    let spec = ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor).with_anchors(&ANCHORS);
    let a = fit(&d, &spec).unwrap();
    let b = fit(&dd, &spec).unwrap();
    let (sa, sb) = (a.standard_errors.unwrap(), b.standard_errors.unwrap());
    let mut checked = 0;
    for &c in &a.free_coords {
        if let (Some(x), Some(y)) = (sa.get(c), sb.get(c)) {
            let ratio = y / x;
            assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() <= 0.05 * std::f64::consts::FRAC_1_SQRT_2, "{c:?}: {ratio}");
            checked += 1;
        }
    }
    assert_eq!(checked, a.free_coords.len());
    assert!(sa.get(Coord::Mean { group: 0 }).is_none());
}

#[test]
fn lrt_of_a_fit_against_itself_is_null() {
    let d = data(0.0, 600, 7);
    let f = fit_level(&d, ConstraintLevel::Metric);
    let t = lrt(&f, &f).unwrap_err();
    // Equal constraint sets give zero degrees of freedom.
    assert!(matches!(t, Error::NotNested(_) | Error::InvalidArgument(_)), "{t}");
    let conf = fit_level(&d, ConstraintLevel::Configural);
    let mut same = conf.clone();
    same.loglik = f.loglik;
    let t = lrt(&f, &same).unwrap();
    assert_eq!(t.delta_chisq, 0.0);
    assert_eq!(t.p_value, 1.0);
}

#[test]
fn lrt_rejects_non_nested_pairs() {
    let d = data(0.0, 600, 8);
    let partial = |anchors: &[&str]| {
        let spec = ModelSpec::new(&d, ConstraintLevel::PartialScalarAnchor).with_anchors(anchors);
        fit_with(&d, &spec, &FitOptions::fast()).unwrap()
    };
    let a = partial(&["anchor_1", "anchor_2"]);
    let b = partial(&["anchor_3", "anchor_4"]);
    assert!(matches!(lrt(&a, &b), Err(Error::NotNested(_))));
    assert!(matches!(lrt(&b, &a), Err(Error::NotNested(_))));
    let conf = fit_level(&d, ConstraintLevel::Configural);
    let metric = fit_level(&d, ConstraintLevel::Metric);
    assert!(matches!(lrt(&conf, &metric), Err(Error::NotNested(_))));
    assert!(lrt(&a, &metric).is_ok());
}
