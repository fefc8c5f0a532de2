use std::f64::consts::PI;

use anosov_lab::rates::{classify_flow, expansion_rates, reparametrize, Classification, RateMethod, RateOptions};
use anosov_lab::splitting::{compute_splitting, line_angle, SplittingParams};
use anosov_lab::zoo::{cat_suspension, geodesic_frame_model, perturb};
use anosov_lab::ScalarField;

fn log_lambda() -> f64 {
    ((3.0 + 5f64.sqrt()) / 2.0).ln()
}

#[test]
fn geodesic_splitting_and_rates_match_the_frame() {
    let zm = geodesic_frame_model(4).unwrap();
    let sp = compute_splitting(&zm.x, &zm.model, &SplittingParams::default()).unwrap();
    let truth = zm.truth.unwrap();
    for p in zm.model.lattice().nodes() {
        let g = zm.model.metric().gram(&p);
        assert!(line_angle(&g, &sp.e_s.eval(&p), &truth.e_s.eval(&p)) < 1e-6);
        assert!(line_angle(&g, &sp.e_u.eval(&p), &truth.e_u.eval(&p)) < 1e-6);
    }
    let opts = RateOptions::default();
    let r = expansion_rates(&zm.x, &sp, &zm.model, RateMethod::Bracket, &opts).unwrap();
    assert!(r.samples.iter().all(|s| (s.r_s + 1.0).abs() < 1e-9 && (s.r_u - 1.0).abs() < 1e-9));
    let r = expansion_rates(&zm.x, &sp, &zm.model, RateMethod::finite_time(), &opts).unwrap();
    assert!(r.samples.iter().all(|s| (s.r_s + 1.0).abs() < 1e-3 && (s.r_u - 1.0).abs() < 1e-3));
}

#[test]
fn cat_suspension_is_anosov_with_log_lambda_margin() {
    let zm = cat_suspension([[2, 1], [1, 1]], 12, 0.0).unwrap();
    let sp = compute_splitting(&zm.x, &zm.model, &SplittingParams::default()).unwrap();
    for m in [RateMethod::Bracket, RateMethod::finite_time()] {
        let r = expansion_rates(&zm.x, &sp, &zm.model, m, &RateOptions::default()).unwrap();
        let v = classify_flow(&r, zm.model.default_tol());
        assert_eq!(v.classification, Classification::Anosov);
        assert!((v.anosov_margin - log_lambda()).abs() < 1e-3, "{m:?}: {}", v.anosov_margin);
    }
}

#[test]
fn bracket_and_finite_time_rates_agree() {
    // the skewed metric makes the rates vary along the flow, so the bracket
    // method sees interpolation error in the grid splitting
    let mut gaps = vec![];
    for res in [10, 16] {
        let zm = cat_suspension([[2, 1], [1, 1]], res, 0.3).unwrap();
        let sp = compute_splitting(&zm.x, &zm.model, &SplittingParams::default()).unwrap();
        let opts = RateOptions::default();
        let a = expansion_rates(&zm.x, &sp, &zm.model, RateMethod::Bracket, &opts).unwrap();
        let b = expansion_rates(&zm.x, &sp, &zm.model, RateMethod::finite_time(), &opts).unwrap();
        let gap = a
            .samples
            .iter()
            .zip(&b.samples)
            .map(|(x, y)| (x.r_u - y.r_u).abs().max((x.r_s - y.r_s).abs()))
            .fold(0.0, f64::max);
        let h = zm.model.lattice().max_spacing();
        assert!(gap < 10.0 * h * h, "{res}: {gap}");
        let spread = a.samples.iter().map(|s| s.r_u).fold(f64::NEG_INFINITY, f64::max) - a.min_r_u();
        assert!(spread > 1.0);
        gaps.push(gap);
    }
    assert!(gaps[1] < gaps[0]);
}

#[test]
fn verdict_is_invariant_under_reparametrization() {
    let zm = cat_suspension([[2, 1], [1, 1]], 10, 0.0).unwrap();
    for f in [ScalarField::constant(0.5), ScalarField::from_fn(|p| 1.0 + 0.3 * (2.0 * PI * p[2]).sin())] {
        let x = reparametrize(&zm.x, &f).unwrap();
        let sp = compute_splitting(&x, &zm.model, &SplittingParams::default()).unwrap();
        let r = expansion_rates(&x, &sp, &zm.model, RateMethod::finite_time(), &RateOptions::default()).unwrap();
        let v = classify_flow(&r, zm.model.default_tol());
        assert_eq!(v.classification, Classification::Anosov);
        // r_u scales pointwise with f
        for s in &r.samples {
            assert!((s.r_u - f.eval(&s.point) * log_lambda()).abs() < 1e-3);
        }
    }
}

#[test]
fn small_perturbation_of_cat_flow_stays_anosov() {
    let zm = cat_suspension([[2, 1], [1, 1]], 5, 0.0).unwrap();
    let pz = perturb(&zm, 0.05, 7).unwrap();
    assert!(pz.truth.is_none());
    let sp = compute_splitting(&pz.x, &pz.model, &SplittingParams::default()).unwrap();
    let r = expansion_rates(&pz.x, &sp, &pz.model, RateMethod::finite_time(), &RateOptions::default()).unwrap();
    let v = classify_flow(&r, pz.model.default_tol());
    assert_eq!(v.classification, Classification::Anosov);
}
