use anosov_lab::contact::{
    angle_rotation_check, coframe, contact_density, dual_coframe_forms, dynamical_sign_plane, lin, negative_region,
    reeb_anosov_test, sweep_t, synthesize_bicontact, DynSign, SynthesisOptions,
};
use anosov_lab::flow::FlowOptions;
use anosov_lab::rates::{expansion_rates, RateMethod, RateOptions, Rates};
use anosov_lab::splitting::{compute_splitting, Splitting, SplittingParams};
use anosov_lab::zoo::{cat_suspension, rotating_plane_field, t3_model, ZooModel};
use anosov_lab::OneForm;

fn log_lambda() -> f64 {
    ((3.0 + 5f64.sqrt()) / 2.0).ln()
}

fn declared(zm: &ZooModel) -> (Splitting, Rates) {
    let t = zm.truth.clone().unwrap();
    let sp = Splitting::declared(&zm.model, &zm.x, t.e_s.clone(), t.e_u.clone()).unwrap();
    (sp, Rates::declared(&zm.model, t.r_s, t.r_u))
}

#[test]
fn density_sign_agrees_with_rotation_sign() {
    let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
    let (sp, _) = declared(&zm);
    let cf = coframe(&sp, &zm.model);
    let mut cases: Vec<(&str, OneForm)> = vec![
        ("plus", lin(&cf.theta_u, 0.5, &cf.theta_s, -0.5)),
        ("minus", lin(&cf.theta_u, 0.5, &cf.theta_s, 0.5)),
    ];
    for turns in [-1, 1] {
        cases.push(("rotating", rotating_plane_field(&zm, turns).unwrap()));
    }
    let opts = FlowOptions::default();
    for (name, xi) in &cases {
        let d = contact_density(xi, &zm.model).unwrap();
        let rot = angle_rotation_check(xi, &sp, &zm.model, &opts).unwrap();
        assert_ne!(d.sign, 0, "{name}");
        assert_eq!(d.sign, rot.sign(1e-6), "{name}: density {d:?}, rotation [{}, {}]", rot.min, rot.max);
    }
}

#[test]
fn span_of_flow_and_unstable_line_is_not_contact() {
    // ker θ^s = span(e_u, X): a foliation, rotation rate zero
    let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
    let (sp, _) = declared(&zm);
    let cf = coframe(&sp, &zm.model);
    let d = contact_density(&cf.theta_s, &zm.model).unwrap();
    assert_eq!(d.sign, 0);
    assert!(d.min.abs() < 1e-6 && d.max.abs() < 1e-6);
    let rot = angle_rotation_check(&cf.theta_s, &sp, &zm.model, &FlowOptions::default()).unwrap();
    assert!(rot.min.abs() < 1e-6 && rot.max.abs() < 1e-6);
}

#[test]
fn dual_pair_planes_have_opposite_dynamical_signs() {
    let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
    let (sp, _) = declared(&zm);
    let cf = coframe(&sp, &zm.model);
    let plus = dynamical_sign_plane(&lin(&cf.theta_u, 0.5, &cf.theta_s, -0.5), &sp, &zm.model, 1e-6).unwrap();
    let minus = dynamical_sign_plane(&lin(&cf.theta_u, 0.5, &cf.theta_s, 0.5), &sp, &zm.model, 1e-6).unwrap();
    assert!(plus.all(DynSign::Positive));
    assert!(minus.all(DynSign::Negative));
    assert!(plus.margins.iter().all(|m| (m - 0.5).abs() < 1e-9));
}

#[test]
fn reeb_test_accepts_cat_flow() {
    let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
    let (sp, rates) = declared(&zm);
    let v = reeb_anosov_test(&sp, &rates, &zm.model, 1e-6).unwrap();
    assert!(v.anosov);
    assert_eq!(v.failure_measure, 0.0);
    assert!(v.failure_point.is_none());
    assert!(v.plus.witness_angle < 1e-6 && v.minus.witness_angle < 1e-6);
}

#[test]
fn reeb_test_rejects_projectively_anosov_torus_flow() {
    let zm = t3_model(1, 1, 0.1, 0.2, 8).unwrap();
    let sp = compute_splitting(&zm.x, &zm.model, &SplittingParams::default()).unwrap();
    let rates = expansion_rates(&zm.x, &sp, &zm.model, RateMethod::finite_time(), &RateOptions::default()).unwrap();
    let v = reeb_anosov_test(&sp, &rates, &zm.model, zm.model.default_tol()).unwrap();
    assert!(!v.anosov);
    assert!(v.failure_measure > 0.0, "{}", v.failure_measure);
    assert!(v.failure_point.is_some());
}

#[test]
fn supporting_pair_has_no_negative_region() {
    let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
    let (sp, _) = declared(&zm);
    let cf = coframe(&sp, &zm.model);
    let xi = lin(&cf.theta_u, 0.5, &cf.theta_s, -0.5);
    let r = negative_region(&xi, &sp, &zm.model, 1e-6, &FlowOptions::default()).unwrap();
    assert!(r.components.is_empty());
    assert_eq!(r.measure, 0.0);
    assert!(r.closure_rotation_ok.is_none());
}

#[test]
fn rotating_plane_field_has_banded_negative_region() {
    let zm = cat_suspension([[2, 1], [1, 1]], 16, 0.0).unwrap();
    let (sp, _) = declared(&zm);
    let xi = rotating_plane_field(&zm, -1).unwrap();
    assert_eq!(contact_density(&xi, &zm.model).unwrap().sign, 1);
    let r = negative_region(&xi, &sp, &zm.model, 1e-6, &FlowOptions::default()).unwrap();
    assert_eq!(r.components.len(), 2);
    for c in &r.components {
        assert!(c.measure > 0.1 && c.measure < 0.3, "{c:?}");
        assert!(c.stable_boundary > 0 && c.unstable_boundary > 0, "{c:?}");
    }
    assert_eq!(r.closure_rotation_ok, Some(true));
    assert!(r.closure_max_rotation.unwrap() < 0.0);
}

#[test]
fn sweep_on_perturbed_duals_contracts() {
    let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
    let (sp, rates) = declared(&zm);
    let opts = SynthesisOptions {
        perturbation: 0.2,
        ..SynthesisOptions::default()
    };
    let ts = [0.0, 1.0, 2.0, 4.0];
    let rows = sweep_t(&sp, &rates, &zm.model, &ts, &opts).unwrap();
    assert!((rows[0].factor_ratio - 1.0).abs() < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1].angle_l1 < w[0].angle_l1, "{:?}", w);
    }
    for r in &rows {
        let expect = (-2.0 * r.t * log_lambda()).exp();
        assert!((r.factor_ratio / expect - 1.0).abs() < 1e-6, "{r:?}");
    }
    let last = rows.last().unwrap();
    assert!(last.margin_plus > 0.0 && last.margin_minus > 0.0);
}

#[test]
fn synthesis_from_computed_splitting_is_bicontact() {
    let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
    let sp = compute_splitting(&zm.x, &zm.model, &SplittingParams::default()).unwrap();
    let rates = expansion_rates(&zm.x, &sp, &zm.model, RateMethod::Bracket, &RateOptions::default()).unwrap();
    let duals = dual_coframe_forms(&sp, &rates, 1e-2, &zm.model).unwrap();
    assert!(duals.cond1_margin > 0.0 && duals.cond2_margin > 0.0);
    let (bc, approx) = synthesize_bicontact(&sp, &rates, None, &zm.model, &SynthesisOptions::default()).unwrap();
    assert!(bc.is_bicontact());
    assert!(bc.support_residual < 1e-6);
    assert!(bc.transversality_margin > 0.5);
    assert!((bc.margin_plus() - 0.5 * log_lambda()).abs() < 1e-3, "{}", bc.margin_plus());
    assert!(approx.pullback_residual.iter().all(|r| *r < 1e-9));
}
