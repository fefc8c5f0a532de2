//! Bi-contact structures built from a splitting, contact and Reeb
//! diagnostics, dynamical signs, interpolation times and plane winding.
//!
//! Plane fields containing `X` are passed as 1-forms whose kernel is the
//! plane. Every density reported "on `(e_s, e_u, X)`" is the 3-form
//! evaluated on that basis; "frame densities" are relative to `f1∧f2∧f3`.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{exterior_derivative, exterior_derivative_at, smooth_with_flow_control, wedge_density, wedge_on};
use crate::error::{LabError, Result};
use crate::field::{cross, det3, dot, GridData, OneForm, Point, ScalarField, TwoForm, VecField};
use crate::flow::{push_cover, FlowOptions};
use crate::frame::{FrameModel, Metric, IDENTITY};
use crate::lattice::Tensor;
use crate::rates::{scalar_from_nodes, Rates};
use crate::splitting::{decompose_in, field_from_nodes, Splitting};

/// Relative tolerance for `α(X) = 0` at the nodes.
pub const SUPPORT_TOL: f64 = 1e-8;

fn nodes(model: &FrameModel) -> Vec<Point> {
    model.lattice().nodes().collect()
}

/// A 1-form from node values, constant when the values are uniform and the
/// model has no monodromy.
pub(crate) fn form_from_nodes(model: &FrameModel, data: Vec<f64>) -> OneForm {
    let first = [data[0], data[1], data[2]];
    let uniform = data
        .chunks(3)
        .all(|c| (0..3).all(|i| (c[i] - first[i]).abs() <= 1e-12 * (1.0 + first[i].abs())));
    if uniform && model.lattice().monodromy().is_none() {
        return OneForm::constant(first);
    }
    OneForm::from_grid(Arc::new(GridData::from_values(
        model.lattice().clone(),
        Tensor::Covector,
        data,
    )))
}

/// `ka·a + kb·b`, staying on the grid when both inputs share one.
pub fn lin(a: &OneForm, ka: f64, b: &OneForm, kb: f64) -> OneForm {
    if a.is_constant() && b.is_constant() {
        let (u, v) = (a.eval(&[0.0; 3]), b.eval(&[0.0; 3]));
        return OneForm::constant([0, 1, 2].map(|i| ka * u[i] + kb * v[i]));
    }
    if let (Some(ga), Some(gb)) = (a.grid(), b.grid()) {
        if Arc::ptr_eq(ga.lattice(), gb.lattice()) {
            let data = ga
                .values()
                .iter()
                .zip(gb.values())
                .map(|(x, y)| ka * x + kb * y)
                .collect();
            return OneForm::from_grid(Arc::new(GridData::from_values(
                ga.lattice().clone(),
                Tensor::Covector,
                data,
            )));
        }
    }
    a.combine(ka, b, kb)
}

/// `(α ∧ dβ)` evaluated on `(e_s, e_u, X)` at `p`.
pub fn wedge_d_on_basis(model: &FrameModel, a: &OneForm, b: &OneForm, sp: &Splitting, p: &Point) -> f64 {
    let basis = sp.basis(p);
    let db = exterior_derivative_at(model, b, p);
    wedge_on(&a.eval(p), &db, [&basis[0], &basis[1], &basis[2]])
}

fn check_supporting(model: &FrameModel, a: &OneForm, x: &VecField) -> Result<()> {
    for p in model.lattice().nodes() {
        let (ap, xp) = (a.eval(&p), x.eval(&p));
        let v = dot(&ap, &xp);
        let scale = (dot(&ap, &ap) * dot(&xp, &xp)).sqrt();
        if v.abs() > SUPPORT_TOL * scale.max(1e-300) {
            return Err(LabError::NotSupporting { point: p, value: v });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// coframe and duals

/// The coframe dual to `(e_s, e_u, X)`, restricted to its first two members.
#[derive(Debug, Clone)]
pub struct Coframe {
    /// `θ^s`: 1 on `e_s`, 0 on `e_u` and `X`.
    pub theta_s: OneForm,
    /// `θ^u`: 1 on `e_u`, 0 on `e_s` and `X`.
    pub theta_u: OneForm,
}

fn coframe_at(sp: &Splitting, p: &Point) -> ([f64; 3], [f64; 3]) {
    let [es, eu, x] = sp.basis(p);
    let d = det3(&es, &eu, &x);
    let ts = cross(&eu, &x).map(|c| c / d);
    let tu = cross(&x, &es).map(|c| c / d);
    (ts, tu)
}

pub fn coframe(sp: &Splitting, model: &FrameModel) -> Coframe {
    if sp.e_s.is_constant() && sp.e_u.is_constant() && sp.x.is_constant() {
        let (ts, tu) = coframe_at(sp, &[0.0; 3]);
        return Coframe {
            theta_s: OneForm::constant(ts),
            theta_u: OneForm::constant(tu),
        };
    }
    let pts = nodes(model);
    let vals: Vec<([f64; 3], [f64; 3])> = pts.par_iter().map(|p| coframe_at(sp, p)).collect();
    let ts = vals.iter().flat_map(|v| v.0).collect();
    let tu = vals.iter().flat_map(|v| v.1).collect();
    Coframe {
        theta_s: form_from_nodes(model, ts),
        theta_u: form_from_nodes(model, tu),
    }
}

/// Initial dual forms `α^0_u = f̃_u θ^u`, `α^0_s = f̃_s θ^s` and the margins of
/// the two growth conditions they must satisfy.
#[derive(Debug, Clone)]
pub struct DualForms {
    pub alpha_u0: OneForm,
    pub alpha_s0: OneForm,
    /// `min [X·(α^0_u(e_u)) + (min r_u) α^0_u(e_u)]`.
    pub cond1_margin: f64,
    /// `min -[X·(α^0_s(e_s)) + (max r_s) α^0_s(e_s)]`.
    pub cond2_margin: f64,
    /// Achieved `(value, derivative)` bounds of the two smoothings.
    pub smoothing_u: (f64, f64),
    pub smoothing_s: (f64, f64),
}

fn reciprocal_pairing(theta: &OneForm, e: &VecField) -> ScalarField {
    if theta.is_constant() && e.is_constant() {
        return ScalarField::constant(1.0 / dot(&theta.eval(&[0.0; 3]), &e.eval(&[0.0; 3])));
    }
    theta.pair(e).map(|v| 1.0 / v)
}

/// Growth-condition margin of `α(e)` against the rate bound `k`, with the
/// sign convention that positive is good for `sign = 1`.
fn growth_margin(model: &FrameModel, x: &VecField, a: &OneForm, e: &VecField, k: f64, sign: f64) -> f64 {
    let g = a.pair(e);
    let pts = nodes(model);
    pts.par_iter()
        .map(|p| {
            let xp = x.eval(p);
            sign * (model.directional(&g, &xp, p) + k * g.eval(p))
        })
        .reduce(|| f64::INFINITY, f64::min)
}

pub fn dual_coframe_forms(sp: &Splitting, rates: &Rates, eps: f64, model: &FrameModel) -> Result<DualForms> {
    let d = dual_coframe_forms_unchecked(sp, rates, eps, model)?;
    if !(d.cond1_margin > 0.0 && d.cond2_margin > 0.0) {
        return Err(LabError::ConditionMargins {
            cond1: d.cond1_margin,
            cond2: d.cond2_margin,
        });
    }
    Ok(d)
}

/// As [`dual_coframe_forms`], reporting the margins without enforcing them.
pub fn dual_coframe_forms_unchecked(sp: &Splitting, rates: &Rates, eps: f64, model: &FrameModel) -> Result<DualForms> {
    let cf = coframe(sp, model);
    let f_u = smooth_with_flow_control(&reciprocal_pairing(&cf.theta_u, &sp.e_u), &sp.x, eps, model)?;
    let f_s = smooth_with_flow_control(&reciprocal_pairing(&cf.theta_s, &sp.e_s), &sp.x, eps, model)?;
    let scale = |t: &OneForm, f: &ScalarField| match f.as_constant() {
        Some(c) if c == 1.0 => t.clone(),
        Some(c) => t.scale_by(c),
        None => t.scale(f),
    };
    let alpha_u0 = scale(&cf.theta_u, &f_u.field);
    let alpha_s0 = scale(&cf.theta_s, &f_s.field);
    let cond1 = growth_margin(model, &sp.x, &alpha_u0, &sp.e_u, rates.min_r_u(), 1.0);
    let cond2 = growth_margin(model, &sp.x, &alpha_s0, &sp.e_s, rates.max_r_s(), -1.0);
    Ok(DualForms {
        alpha_u0,
        alpha_s0,
        cond1_margin: cond1,
        cond2_margin: cond2,
        smoothing_u: (f_u.value_bound, f_u.derivative_bound),
        smoothing_s: (f_s.value_bound, f_s.derivative_bound),
    })
}

impl DualForms {
    /// Mix a spurious component of the other dual into each form:
    /// `α_u ↦ α_u + k α_s`, `α_s ↦ α_s + k α_u`. The values on `e_u`, `e_s`
    /// and hence the condition margins are unchanged.
    pub fn perturbed(&self, k: f64) -> DualForms {
        DualForms {
            alpha_u0: lin(&self.alpha_u0, 1.0, &self.alpha_s0, k),
            alpha_s0: lin(&self.alpha_s0, 1.0, &self.alpha_u0, k),
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// normalized pullback

/// `α^t = I^t φ^{t*} α^0` with `I^t = exp(-∫_0^t r(φ^τ)dτ)`.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub alpha: OneForm,
    pub factor: ScalarField,
    pub t: f64,
    /// `φ^t(p)` on the cover for every node.
    pub ends: Vec<Point>,
    /// `|X·I - [r(0) - r(t)] I| / I`, largest over the nodes.
    pub factor_ode_residual: f64,
}

pub fn pullback_normalized(
    alpha0: &OneForm,
    x: &VecField,
    t: f64,
    rate: &ScalarField,
    model: &FrameModel,
    opts: &FlowOptions,
) -> Result<Pullback> {
    model.check_form(alpha0)?;
    let pts = nodes(model);
    if t == 0.0 {
        return Ok(Pullback {
            alpha: alpha0.clone(),
            factor: ScalarField::constant(1.0),
            t,
            ends: pts,
            factor_ode_residual: 0.0,
        });
    }
    let per_node = pts
        .par_iter()
        .map(|p| {
            let (q, w, ints) = push_cover(model, x, p, &IDENTITY, &[rate], t, opts)?;
            let i = (-ints[0]).exp();
            let a = alpha0.eval(&q);
            Ok((q, i, [0, 1, 2].map(|k| i * dot(&a, &w[k]))))
        })
        .collect::<Result<Vec<_>>>()?;
    let alpha = form_from_nodes(model, per_node.iter().flat_map(|v| v.2).collect());
    let factor = scalar_from_nodes(model, per_node.iter().map(|v| v.1).collect());
    let factor_ode_residual = pts
        .par_iter()
        .zip(&per_node)
        .map(|(p, (q, i, _))| {
            let xi = model.directional(&factor, &x.eval(p), p);
            (xi - (rate.eval(p) - rate.eval(q)) * i).abs() / i
        })
        .reduce(|| 0.0, f64::max);
    Ok(Pullback {
        alpha,
        factor,
        t,
        ends: per_node.iter().map(|v| v.0).collect(),
        factor_ode_residual,
    })
}

impl Pullback {
    /// `max |α^t(e(p)) - α^0(e(φ^t p))|` over the nodes.
    pub fn pullback_residual(&self, alpha0: &OneForm, e: &VecField, model: &FrameModel) -> f64 {
        nodes(model)
            .iter()
            .zip(&self.ends)
            .map(|(p, q)| (dot(&self.alpha.eval(p), &e.eval(p)) - dot(&alpha0.eval(q), &e.eval(q))).abs())
            .fold(0.0, f64::max)
    }
}

/// `I^t_u / I^t_s = exp(∫_0^t (r_s - r_u))` along forward orbits of `pts`.
pub fn factor_ratio(
    x: &VecField,
    rates: &Rates,
    t: f64,
    model: &FrameModel,
    pts: &[Point],
    opts: &FlowOptions,
) -> Result<Vec<f64>> {
    pts.par_iter()
        .map(|p| {
            let (_, _, ints) = push_cover(model, x, p, &[], &[&rates.r_s, &rates.r_u], t, opts)?;
            Ok((ints[0] - ints[1]).exp())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// bi-contact pairs

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Synthesized { t: f64 },
    Supplied,
}

/// Contact density of a 1-form with a summary of its sign.
#[derive(Debug, Clone)]
pub struct ContactDensity {
    /// `(α ∧ dα)(f1, f2, f3)`.
    pub field: ScalarField,
    pub min: f64,
    pub max: f64,
    /// `1` for a positive contact form, `-1` negative, `0` otherwise.
    pub sign: i8,
    /// `min |density|` when the sign is definite, else 0.
    pub margin: f64,
    pub argmin: Point,
}

pub fn contact_density(alpha: &OneForm, model: &FrameModel) -> Result<ContactDensity> {
    let da = exterior_derivative(alpha, model)?;
    let field = wedge_density(alpha, &da, model)?;
    let pts = nodes(model);
    let vals: Vec<f64> = pts.par_iter().map(|p| field.eval(p)).collect();
    let (mut min, mut max, mut argmin) = (f64::INFINITY, f64::NEG_INFINITY, pts[0]);
    for (v, p) in vals.iter().zip(&pts) {
        if *v < min {
            min = *v;
            argmin = *p;
        }
        max = max.max(*v);
    }
    let sign = if min > 0.0 {
        1
    } else if max < 0.0 {
        -1
    } else {
        0
    };
    let margin = match sign {
        1 => min,
        -1 => -max,
        _ => 0.0,
    };
    Ok(ContactDensity {
        field,
        min,
        max,
        sign,
        margin,
        argmin,
    })
}

/// A pair of 1-forms whose kernels are meant to be negative and positive
/// contact structures both containing `X`.
#[derive(Debug, Clone)]
pub struct BiContact {
    pub alpha_minus: OneForm,
    pub alpha_plus: OneForm,
    pub density_minus: ContactDensity,
    pub density_plus: ContactDensity,
    pub provenance: Provenance,
    /// Smallest sine of the angle between the kernels over the nodes.
    pub transversality_margin: f64,
    /// Largest `|α_±(X)| / (|α_±||X|)` over the nodes.
    pub support_residual: f64,
}

fn kernel_sine(g: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let gi = nalgebra::Matrix3::from_fn(|i, j| g[i][j]).try_inverse().unwrap_or_else(nalgebra::Matrix3::identity);
    let ip = |u: &[f64; 3], v: &[f64; 3]| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += u[i] * gi[(i, j)] * v[j];
            }
        }
        s
    };
    let c = ip(a, b) / (ip(a, a) * ip(b, b)).sqrt();
    (1.0 - c * c).max(0.0).sqrt()
}

impl BiContact {
    pub fn from_forms(
        alpha_minus: OneForm,
        alpha_plus: OneForm,
        x: &VecField,
        model: &FrameModel,
        provenance: Provenance,
    ) -> Result<BiContact> {
        let density_minus = contact_density(&alpha_minus, model)?;
        let density_plus = contact_density(&alpha_plus, model)?;
        let mut trans = f64::INFINITY;
        let mut support = 0.0f64;
        for p in model.lattice().nodes() {
            let (am, ap, xp) = (alpha_minus.eval(&p), alpha_plus.eval(&p), x.eval(&p));
            trans = trans.min(kernel_sine(&model.metric().gram(&p), &am, &ap));
            let xn = dot(&xp, &xp).sqrt();
            for a in [&am, &ap] {
                support = support.max(dot(a, &xp).abs() / (dot(a, a).sqrt() * xn));
            }
        }
        Ok(BiContact {
            alpha_minus,
            alpha_plus,
            density_minus,
            density_plus,
            provenance,
            transversality_margin: trans,
            support_residual: support,
        })
    }

    /// Both forms contact with the right signs.
    pub fn is_bicontact(&self) -> bool {
        self.density_plus.sign == 1 && self.density_minus.sign == -1
    }

    pub fn margin_plus(&self) -> f64 {
        self.density_plus.min
    }

    pub fn margin_minus(&self) -> f64 {
        -self.density_minus.max
    }
}

/// One row of the approximation diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub t: f64,
    /// Largest angle between `ker α^T_u ∩ η` and `e_s`, or `ker α^T_s ∩ η`
    /// and `e_u`.
    pub angle_l1: f64,
    pub max_abs_l2_u: f64,
    pub max_abs_l2_s: f64,
    pub max_l3_us: f64,
    pub max_l3_su: f64,
    pub margin_plus: f64,
    pub margin_minus: f64,
    /// Mean of `I^T_u / I^T_s` over the probe nodes.
    pub factor_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ApproxForms {
    pub alpha_u0: OneForm,
    pub alpha_s0: OneForm,
    pub alpha_u_t: OneForm,
    pub alpha_s_t: OneForm,
    pub i_u_t: ScalarField,
    pub i_s_t: ScalarField,
    pub t: f64,
    pub cond1_margin: f64,
    pub cond2_margin: f64,
    pub diagnostics: SweepRow,
    /// `α^T(e) - α^0(e∘φ^T)` residuals for the unstable and stable forms.
    pub pullback_residual: [f64; 2],
    /// Transport-equation residuals for the unstable and stable factors.
    pub factor_ode_residual: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub eps: f64,
    /// Spurious component mixed into the initial duals.
    pub perturbation: f64,
    /// Largest `T` tried by the automatic search.
    pub max_t: f64,
    pub tol: f64,
    /// Run the sweep even when the growth conditions fail (non-Anosov flows).
    pub force: bool,
    pub flow: FlowOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            eps: 1e-2,
            perturbation: 0.0,
            max_t: 16.0,
            tol: 1e-6,
            force: false,
            flow: FlowOptions::default(),
        }
    }
}

fn line_angle_in_eta(model: &FrameModel, p: &Point, a: f64, b: f64, e: &[f64; 3], f: &[f64; 3]) -> f64 {
    // angle between the line a·e + b·f and e
    let g = model.metric().gram(p);
    let v = [0, 1, 2].map(|i| a * e[i] + b * f[i]);
    let c = Metric::inner_with(&g, &v, e) / (Metric::inner_with(&g, &v, &v) * Metric::inner_with(&g, e, e)).sqrt();
    c.abs().min(1.0).acos()
}

fn probe_points(model: &FrameModel) -> Vec<Point> {
    let l = model.lattice();
    let n = l.len();
    (0..8.min(n)).map(|k| l.node(l.unflat(k * n / 8.min(n)))).collect()
}

/// The forms of the forward construction at a fixed `T`.
pub fn approximate_forms(
    sp: &Splitting,
    rates: &Rates,
    duals: &DualForms,
    t: f64,
    model: &FrameModel,
    opts: &SynthesisOptions,
) -> Result<ApproxForms> {
    let pu = pullback_normalized(&duals.alpha_u0, &sp.x, t, &rates.r_u, model, &opts.flow)?;
    let ps = pullback_normalized(&duals.alpha_s0, &sp.x, -t, &rates.r_s, model, &opts.flow)?;
    let (au, as_) = (&pu.alpha, &ps.alpha);
    let plus = lin(au, 0.5, as_, -0.5);
    let minus = lin(au, 0.5, as_, 0.5);
    let pts = nodes(model);
    let rows: Vec<[f64; 7]> = pts
        .par_iter()
        .map(|p| {
            let [es, eu, _] = sp.basis(p);
            let (u, s) = (au.eval(p), as_.eval(p));
            let ang_u = line_angle_in_eta(model, p, dot(&u, &eu), -dot(&u, &es), &es, &eu);
            let ang_s = line_angle_in_eta(model, p, -dot(&s, &es), dot(&s, &eu), &eu, &es);
            let dp = exterior_derivative_at(model, &plus, p);
            let dm = exterior_derivative_at(model, &minus, p);
            let frame = |a: &[f64; 3], d: &[f64; 3]| crate::calculus::wedge_density_values(a, d);
            [
                ang_u.max(ang_s),
                wedge_d_on_basis(model, au, au, sp, p).abs(),
                wedge_d_on_basis(model, as_, as_, sp, p).abs(),
                wedge_d_on_basis(model, au, as_, sp, p),
                wedge_d_on_basis(model, as_, au, sp, p),
                frame(&plus.eval(p), &dp),
                -frame(&minus.eval(p), &dm),
            ]
        })
        .collect();
    let max = |k: usize| rows.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
    let min = |k: usize| rows.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
    let ratios = factor_ratio(&sp.x, rates, t, model, &probe_points(model), &opts.flow)?;
    let diagnostics = SweepRow {
        t,
        angle_l1: max(0),
        max_abs_l2_u: max(1),
        max_abs_l2_s: max(2),
        max_l3_us: max(3),
        max_l3_su: max(4),
        margin_plus: min(5),
        margin_minus: min(6),
        factor_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
    };
    Ok(ApproxForms {
        pullback_residual: [
            pu.pullback_residual(&duals.alpha_u0, &sp.e_u, model),
            ps.pullback_residual(&duals.alpha_s0, &sp.e_s, model),
        ],
        factor_ode_residual: [pu.factor_ode_residual, ps.factor_ode_residual],
        alpha_u0: duals.alpha_u0.clone(),
        alpha_s0: duals.alpha_s0.clone(),
        alpha_u_t: pu.alpha,
        alpha_s_t: ps.alpha,
        i_u_t: pu.factor,
        i_s_t: ps.factor,
        t,
        cond1_margin: duals.cond1_margin,
        cond2_margin: duals.cond2_margin,
        diagnostics,
    })
}

/// Diagnostics of the forward construction for each `T` in `ts`.
pub fn sweep_t(
    sp: &Splitting,
    rates: &Rates,
    model: &FrameModel,
    ts: &[f64],
    opts: &SynthesisOptions,
) -> Result<Vec<SweepRow>> {
    let duals = if opts.force {
        dual_coframe_forms_unchecked(sp, rates, opts.eps, model)?
    } else {
        dual_coframe_forms(sp, rates, opts.eps, model)?
    }
    .perturbed(opts.perturbation);
    ts.iter()
        .map(|&t| Ok(approximate_forms(sp, rates, &duals, t, model, opts)?.diagnostics))
        .collect()
}

/// `α^T_± = ½(α^T_u ∓ α^T_s)`. Without `t`, doubles `T` from 1 until the
/// cross terms `α_u∧dα_s`, `α_s∧dα_u` are below `-tol`.
pub fn synthesize_bicontact(
    sp: &Splitting,
    rates: &Rates,
    t: Option<f64>,
    model: &FrameModel,
    opts: &SynthesisOptions,
) -> Result<(BiContact, ApproxForms)> {
    let duals = dual_coframe_forms(sp, rates, opts.eps, model)?.perturbed(opts.perturbation);
    let approx = match t {
        Some(t) => approximate_forms(sp, rates, &duals, t, model, opts)?,
        None => {
            let mut t = 0.0;
            loop {
                let a = approximate_forms(sp, rates, &duals, t, model, opts)?;
                let d = a.diagnostics;
                if d.max_l3_us < -opts.tol && d.max_l3_su < -opts.tol {
                    break a;
                }
                t = if t == 0.0 { 1.0 } else { 2.0 * t };
                if t > opts.max_t {
                    break a;
                }
            }
        }
    };
    let plus = lin(&approx.alpha_u_t, 0.5, &approx.alpha_s_t, -0.5);
    let minus = lin(&approx.alpha_u_t, 0.5, &approx.alpha_s_t, 0.5);
    let bc = BiContact::from_forms(minus, plus, &sp.x, model, Provenance::Synthesized { t: approx.t })?;
    Ok((bc, approx))
}

/// Largest `|4(α_+∧dα_+)(e_s,e_u,X) - (r_u - r_s)|` over the nodes for
/// `α_+ = ½(θ^u - θ^s)` built from the exact coframe.
pub fn density_identity_residual(sp: &Splitting, rates: &Rates, model: &FrameModel) -> f64 {
    let cf = coframe(sp, model);
    let plus = lin(&cf.theta_u, 0.5, &cf.theta_s, -0.5);
    let pts = nodes(model);
    pts.par_iter()
        .zip(&rates.samples)
        .map(|(p, s)| (4.0 * wedge_d_on_basis(model, &plus, &plus, sp, p) - (s.r_u - s.r_s)).abs())
        .reduce(|| 0.0, f64::max)
}

// ---------------------------------------------------------------------------
// dynamical signs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynSign {
    Positive,
    Negative,
    Tangent,
}

/// Dynamical sign at every node with its margin `ab / (a² + b²)`, where
/// `a e_s + b e_u` is the `η`-part of the vector or line.
#[derive(Debug, Clone)]
pub struct SignField {
    pub points: Vec<Point>,
    pub signs: Vec<DynSign>,
    pub margins: Vec<f64>,
    pub tol: f64,
}

fn classify_sign(a: f64, b: f64, tol: f64) -> (DynSign, f64) {
    let n = a * a + b * b;
    if !(n > 0.0) {
        return (DynSign::Tangent, 0.0);
    }
    let m = a * b / n;
    let s = if m > tol {
        DynSign::Positive
    } else if m < -tol {
        DynSign::Negative
    } else {
        DynSign::Tangent
    };
    (s, m)
}

impl SignField {
    pub fn all(&self, s: DynSign) -> bool {
        self.signs.iter().all(|&t| t == s)
    }

    pub fn count(&self, s: DynSign) -> usize {
        self.signs.iter().filter(|&&t| t == s).count()
    }

    /// Fraction of the nodes, each standing for an equal share of volume.
    pub fn fraction(&self, s: DynSign) -> f64 {
        self.count(s) as f64 / self.signs.len() as f64
    }

    pub fn first(&self, s: DynSign) -> Option<Point> {
        self.signs.iter().position(|&t| t == s).map(|i| self.points[i])
    }
}

/// Sign of a vector field: the sign of `ab` for its `η`-part `a e_s + b e_u`.
pub fn dynamical_sign_vector(v: &VecField, sp: &Splitting, model: &FrameModel, tol: f64) -> SignField {
    let points = nodes(model);
    let (signs, margins) = points
        .iter()
        .map(|p| {
            let c = sp.decompose(p, &v.eval(p));
            classify_sign(c[0], c[1], tol)
        })
        .unzip();
    SignField {
        points,
        signs,
        margins,
        tol,
    }
}

/// `η`-coefficients `(a, b)` of the line `ker α ∩ η`.
fn kernel_line(a: &[f64; 3], es: &[f64; 3], eu: &[f64; 3]) -> (f64, f64) {
    (dot(a, eu), -dot(a, es))
}

/// Sign of the plane field `ker ξ` through the line `ker ξ ∩ η`.
pub fn dynamical_sign_plane(xi: &OneForm, sp: &Splitting, model: &FrameModel, tol: f64) -> Result<SignField> {
    check_supporting(model, xi, &sp.x)?;
    let points = nodes(model);
    let (signs, margins) = points
        .iter()
        .map(|p| {
            let [es, eu, _] = sp.basis(p);
            let (a, b) = kernel_line(&xi.eval(p), &es, &eu);
            classify_sign(a, b, tol)
        })
        .unzip();
    Ok(SignField {
        points,
        signs,
        margins,
        tol,
    })
}

// ---------------------------------------------------------------------------
// rotation of a plane field under the flow

/// Signed metric angle from the `η`-line `(a0, b0)` to `(a, b)` (coefficients
/// on `e_s`, `e_u`), reduced to `(-π/2, π/2]`.
fn eta_angle(g: &[[f64; 3]; 3], es: &[f64; 3], eu: &[f64; 3], from: (f64, f64), to: (f64, f64)) -> f64 {
    let gss = Metric::inner_with(g, es, es);
    let gsu = Metric::inner_with(g, es, eu);
    let guu = Metric::inner_with(g, eu, eu);
    let ip = from.0 * to.0 * gss + (from.0 * to.1 + from.1 * to.0) * gsu + from.1 * to.1 * guu;
    let area = (gss * guu - gsu * gsu).max(0.0).sqrt();
    let cr = area * (from.0 * to.1 - from.1 * to.0);
    wrap_line(cr.atan2(ip))
}

fn wrap_line(mut a: f64) -> f64 {
    use std::f64::consts::PI;
    while a > 0.5 * PI {
        a -= PI;
    }
    while a <= -0.5 * PI {
        a += PI;
    }
    a
}

#[derive(Debug, Clone)]
pub struct RotationCheck {
    /// `X·θ` at the nodes.
    pub field: ScalarField,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl RotationCheck {
    /// `1` when `X·θ < -tol` everywhere, `-1` when `> tol` everywhere.
    pub fn sign(&self, tol: f64) -> i8 {
        if self.max < -tol {
            1
        } else if self.min > tol {
            -1
        } else {
            0
        }
    }
}

const ROTATION_STEP: f64 = 1e-3;

/// `X·θ` at one point: the rate at which `φ^{-t}_*(ξ ∩ η)(φ^t p)` turns
/// inside `η(p)`.
pub fn rotation_rate_at(xi: &OneForm, sp: &Splitting, model: &FrameModel, p: &Point, opts: &FlowOptions) -> Result<f64> {
    let [es, eu, _] = sp.basis(p);
    let g = model.metric().gram(p);
    let l0 = kernel_line(&xi.eval(p), &es, &eu);
    let pulled = |h: f64| -> Result<f64> {
        let (q, _, _) = push_cover(model, &sp.x, p, &[], &[], h, opts)?;
        let [fs, fu, _] = sp.basis(&q);
        let (a, b) = kernel_line(&xi.eval(&q), &fs, &fu);
        let v = [0, 1, 2].map(|i| a * fs[i] + b * fu[i]);
        let (_, w, _) = push_cover(model, &sp.x, &q, &[v], &[], -h, opts)?;
        let c = decompose_in(&[es, eu, sp.x.eval(p)], &w[0]);
        Ok(eta_angle(&g, &es, &eu, l0, (c[0], c[1])))
    };
    let h = ROTATION_STEP;
    let d1 = (pulled(h)? - pulled(-h)?) / (2.0 * h);
    let d2 = (pulled(0.5 * h)? - pulled(-0.5 * h)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// `X·θ_ξ` over the model grid; negative everywhere for a positive contact
/// structure and positive everywhere for a negative one.
pub fn angle_rotation_check(xi: &OneForm, sp: &Splitting, model: &FrameModel, opts: &FlowOptions) -> Result<RotationCheck> {
    check_supporting(model, xi, &sp.x)?;
    let pts = nodes(model);
    let values = pts
        .par_iter()
        .map(|p| rotation_rate_at(xi, sp, model, p, opts))
        .collect::<Result<Vec<f64>>>()?;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(RotationCheck {
        field: scalar_from_nodes(model, values.clone()),
        values,
        min,
        max,
    })
}

// ---------------------------------------------------------------------------
// Reeb fields

#[derive(Debug, Clone)]
pub struct ReebField {
    pub field: VecField,
    /// Largest `|α(R) - 1|` at the cell centres.
    pub normalization_residual: f64,
    /// Largest `|dα(R, ·)| / |dα|` at the cell centres.
    pub kernel_residual: f64,
}

fn reeb_at(model: &FrameModel, alpha: &OneForm, p: &Point) -> Result<[f64; 3]> {
    let a = alpha.eval(p);
    let d = exterior_derivative_at(model, alpha, p);
    let w = [d[2], -d[1], d[0]];
    let dens = dot(&a, &w);
    let scale = dot(&a, &a).sqrt() * dot(&w, &w).sqrt();
    if !(dens.abs() > 1e-10 * scale) || scale == 0.0 {
        return Err(LabError::NotContact {
            point: *p,
            density: dens,
        });
    }
    Ok(w.map(|c| c / dens))
}

fn cell_centres(model: &FrameModel) -> Vec<Point> {
    let l = model.lattice();
    let h = l.spacing();
    l.nodes()
        .filter_map(|p| {
            let q = [0, 1, 2].map(|a| p[a] + 0.5 * h[a]);
            (0..3).all(|a| q[a] < l.hi[a]).then_some(q)
        })
        .collect()
}

/// The Reeb field of a contact form: `α(R) = 1`, `dα(R, ·) = 0`.
pub fn reeb_field(alpha: &OneForm, model: &FrameModel) -> Result<ReebField> {
    model.check_form(alpha)?;
    let pts = nodes(model);
    let vals = pts
        .par_iter()
        .map(|p| reeb_at(model, alpha, p))
        .collect::<Result<Vec<_>>>()?;
    let field = field_from_nodes(model, vals.into_iter().flatten().collect());
    let centres = cell_centres(model);
    let (n, k) = reeb_residuals(model, alpha, &field, &centres);
    Ok(ReebField {
        field,
        normalization_residual: n,
        kernel_residual: k,
    })
}

fn reeb_residuals(model: &FrameModel, alpha: &OneForm, r: &VecField, pts: &[Point]) -> (f64, f64) {
    pts.par_iter()
        .map(|p| {
            let rp = r.eval(p);
            let m = TwoForm::matrix(&exterior_derivative_at(model, alpha, p));
            let norm_m = m.iter().flatten().map(|c| c * c).sum::<f64>().sqrt();
            let k = (0..3)
                .map(|j| (0..3).map(|i| rp[i] * m[i][j]).sum::<f64>().abs())
                .fold(0.0, f64::max);
            ((dot(&alpha.eval(p), &rp) - 1.0).abs(), k / norm_m.max(1e-300))
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

#[derive(Debug, Clone)]
pub struct ReebSide {
    pub reeb: ReebField,
    pub signs: SignField,
    /// Largest angle between the `η`-part of the Reeb field and the line of
    /// `-r_s e_u - r_u e_s` (for `α_+`) or `r_s e_u - r_u e_s` (for `α_-`).
    pub witness_angle: f64,
}

#[derive(Debug, Clone)]
pub struct ReebVerdict {
    pub plus: ReebSide,
    pub minus: ReebSide,
    /// Reeb field of `α_+` negative everywhere and of `α_-` positive
    /// everywhere.
    pub anosov: bool,
    /// Volume fraction where the `α_+` Reeb field fails to be negative.
    pub failure_measure: f64,
    pub failure_point: Option<Point>,
}

/// Build `α_± = ½(θ^u ∓ θ^s)`, compute their Reeb fields and read off their
/// dynamical signs.
pub fn reeb_anosov_test(sp: &Splitting, rates: &Rates, model: &FrameModel, tol: f64) -> Result<ReebVerdict> {
    let cf = coframe(sp, model);
    let side = |alpha: OneForm, plus: bool| -> Result<ReebSide> {
        let reeb = reeb_field(&alpha, model)?;
        let signs = dynamical_sign_vector(&reeb.field, sp, model, tol);
        let witness_angle = nodes(model)
            .iter()
            .zip(&rates.samples)
            .map(|(p, s)| {
                let c = sp.decompose(p, &reeb.field.eval(p));
                let (ws, wu) = if plus { (-s.r_u, -s.r_s) } else { (-s.r_u, s.r_s) };
                let [es, eu, _] = sp.basis(p);
                eta_angle(&model.metric().gram(p), &es, &eu, (ws, wu), (c[0], c[1])).abs()
            })
            .fold(0.0, f64::max);
        Ok(ReebSide {
            reeb,
            signs,
            witness_angle,
        })
    };
    let plus = side(lin(&cf.theta_u, 0.5, &cf.theta_s, -0.5), true)?;
    let minus = side(lin(&cf.theta_u, 0.5, &cf.theta_s, 0.5), false)?;
    let anosov = plus.signs.all(DynSign::Negative) && minus.signs.all(DynSign::Positive);
    let failure_measure = 1.0 - plus.signs.fraction(DynSign::Negative);
    let failure_point = plus
        .signs
        .signs
        .iter()
        .position(|&s| s != DynSign::Negative)
        .map(|i| plus.signs.points[i]);
    Ok(ReebVerdict {
        plus,
        minus,
        anosov,
        failure_measure,
        failure_point,
    })
}

// ---------------------------------------------------------------------------
// interpolation times

/// Orientation-normalized bi-contact data with the interpolation times
/// `τ_u` (the combination `(1-τ)α_- + (1+τ)α_+` kills `e_s`) and `τ_s`
/// (`-(1-τ)α_- + (1+τ)α_+` kills `e_u`).
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub alpha_minus: OneForm,
    pub alpha_plus: OneForm,
    /// Whether `α_-`, `α_+` were negated to reach `α_±(e_u) > 0`.
    pub flipped: [bool; 2],
    pub tau_u: ScalarField,
    pub tau_s: ScalarField,
    /// `(α_- - α_+) / 2`, positive on `e_s`.
    pub beta_s: OneForm,
    /// `(α_- + α_+) / 2`, positive on `e_u`.
    pub beta_u: OneForm,
    pub tau_u_range: (f64, f64),
    pub tau_s_range: (f64, f64),
}

fn orient(alpha: &OneForm, sp: &Splitting, pts: &[Point], name: &str) -> Result<(OneForm, bool)> {
    let vals: Vec<f64> = pts.iter().map(|p| dot(&alpha.eval(p), &sp.e_u.eval(p))).collect();
    if vals.iter().all(|v| *v > 0.0) {
        Ok((alpha.clone(), false))
    } else if vals.iter().all(|v| *v < 0.0) {
        Ok((alpha.scale_by(-1.0), true))
    } else {
        Err(LabError::Orientation(format!("{name} changes sign on e_u")))
    }
}

pub fn interpolation_time(bc: &BiContact, sp: &Splitting, model: &FrameModel) -> Result<Interpolation> {
    let pts = nodes(model);
    let (am, fm) = orient(&bc.alpha_minus, sp, &pts, "alpha_minus")?;
    let (ap, fp) = orient(&bc.alpha_plus, sp, &pts, "alpha_plus")?;
    let mut tu = Vec::with_capacity(pts.len());
    let mut ts = Vec::with_capacity(pts.len());
    for p in &pts {
        let (es, eu) = (sp.e_s.eval(p), sp.e_u.eval(p));
        let (mv, pv) = (am.eval(p), ap.eval(p));
        let (a_m, a_p) = (dot(&mv, &es), dot(&pv, &es));
        if !(a_p < 0.0 && 0.0 < a_m) {
            return Err(LabError::Orientation(format!(
                "need alpha_plus(e_s) < 0 < alpha_minus(e_s), got {a_p:.3e} and {a_m:.3e} at {p:?}"
            )));
        }
        let (b_m, b_p) = (dot(&mv, &eu), dot(&pv, &eu));
        tu.push((a_m + a_p) / (a_m - a_p));
        ts.push((b_m - b_p) / (b_m + b_p));
    }
    let range = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
    };
    let (tau_u_range, tau_s_range) = (range(&tu), range(&ts));
    Ok(Interpolation {
        beta_s: lin(&am, 0.5, &ap, -0.5),
        beta_u: lin(&am, 0.5, &ap, 0.5),
        alpha_minus: am,
        alpha_plus: ap,
        flipped: [fm, fp],
        tau_u: scalar_from_nodes(model, tu),
        tau_s: scalar_from_nodes(model, ts),
        tau_u_range,
        tau_s_range,
    })
}

// ---------------------------------------------------------------------------
// interpolation between two positive forms

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub t_grid: Vec<f64>,
    /// Minimum over nodes of `(α_t∧dα_t)(e_s, e_u, X)` at each `t`.
    pub min_direct: Vec<f64>,
    /// Same from the closed form, when `α_+` is `½(θ^u - θ^s)` and
    /// `α_+' = ½(fθ^u - θ^s)`.
    pub min_closed: Option<Vec<f64>>,
    /// Largest pointwise gap between the two.
    pub agreement: Option<f64>,
    pub min_density: f64,
}

impl FamilyReport {
    pub fn positive(&self) -> bool {
        self.min_density > 0.0
    }
}

/// Density of `(1-t)α_+ + tα_+'` along `t ∈ [0, 1]` on `n_t` evenly spaced
/// values, directly and from `t²A + (1-t)²B + t(1-t)(A+B)` with
/// `A = f(r_u - r_s) + X·f`, `B = r_u - r_s`.
pub fn interpolation_contact_family(
    alpha_plus: &OneForm,
    alpha_plus_prime: &OneForm,
    sp: &Splitting,
    rates: &Rates,
    model: &FrameModel,
    n_t: usize,
) -> Result<FamilyReport> {
    let n_t = n_t.max(2);
    for a in [alpha_plus, alpha_plus_prime] {
        let s = dynamical_sign_plane(a, sp, model, 0.0)?;
        if let Some(p) = s.signs.iter().position(|&x| x != DynSign::Positive) {
            return Err(LabError::DynamicalSign { point: s.points[p] });
        }
    }
    let pts = nodes(model);
    let t_grid: Vec<f64> = (0..n_t).map(|i| i as f64 / (n_t - 1) as f64).collect();
    let min_direct: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let a = lin(alpha_plus, 1.0 - t, alpha_plus_prime, t);
            pts.par_iter()
                .map(|p| wedge_d_on_basis(model, &a, &a, sp, p))
                .reduce(|| f64::INFINITY, f64::min)
        })
        .collect();

    let structured = pts.iter().all(|p| {
        let (es, eu) = (sp.e_s.eval(p), sp.e_u.eval(p));
        let (a, b) = (alpha_plus.eval(p), alpha_plus_prime.eval(p));
        (dot(&a, &eu) - 0.5).abs() < 1e-8 && (dot(&a, &es) + 0.5).abs() < 1e-8 && (dot(&b, &es) + 0.5).abs() < 1e-8
    });
    let (min_closed, agreement) = if structured {
        let f = alpha_plus_prime.pair(&sp.e_u).map(|v| 2.0 * v);
        let coeffs: Vec<(f64, f64)> = pts
            .par_iter()
            .zip(&rates.samples)
            .map(|(p, s)| {
                let fv = f.eval(p);
                let xf = model.directional(&f, &sp.x.eval(p), p);
                (fv * (s.r_u - s.r_s) + xf, s.r_u - s.r_s)
            })
            .collect();
        let mut mins = Vec::with_capacity(n_t);
        let mut gap = 0.0f64;
        for &t in &t_grid {
            let a = lin(alpha_plus, 1.0 - t, alpha_plus_prime, t);
            let (m, g) = pts
                .par_iter()
                .zip(&coeffs)
                .map(|(p, (ca, cb))| {
                    let c = 0.25 * (t * t * ca + (1.0 - t) * (1.0 - t) * cb + t * (1.0 - t) * (ca + cb));
                    (c, (c - wedge_d_on_basis(model, &a, &a, sp, p)).abs())
                })
                .reduce(|| (f64::INFINITY, 0.0), |x, y| (x.0.min(y.0), x.1.max(y.1)));
            mins.push(m);
            gap = gap.max(g);
        }
        (Some(mins), Some(gap))
    } else {
        (None, None)
    };
    let min_density = min_direct.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(FamilyReport {
        t_grid,
        min_direct,
        min_closed,
        agreement,
        min_density,
    })
}

// ---------------------------------------------------------------------------
// winding of a plane field along a loop

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Torsion {
    None,
    /// One full turn: two π-torsion layers glued, the threshold case.
    Threshold,
    /// Two or more full turns.
    Giroux,
}

#[derive(Debug, Clone, Serialize)]
pub struct Winding {
    /// Total signed rotation in radians.
    pub angle: f64,
    /// `angle / π`.
    pub half_turns: f64,
    /// Distance of `half_turns` from the nearest integer.
    pub integer_residual: f64,
    pub full_turns: i64,
    pub torsion: Torsion,
}

/// Largest rotation accepted between consecutive samples.
const MAX_WINDING_STEP: f64 = 0.25 * std::f64::consts::PI;

/// Rotation of the line `ker ξ ∩ span(e1, e2)` relative to the frame
/// `(e1, e2)` along the closed curve `curve` (first and last samples are the
/// same point of the manifold). The line is `ξ(e2)e1 - ξ(e1)e2`.
pub fn plane_winding(xi: &OneForm, curve: &[Point], e1: &VecField, e2: &VecField) -> Result<Winding> {
    if curve.len() < 3 {
        return Err(LabError::InvalidArgument("winding needs at least 3 curve samples".into()));
    }
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for p in curve {
        let a = xi.eval(p);
        let (u, v) = (dot(&a, &e2.eval(p)), -dot(&a, &e1.eval(p)));
        let scale = dot(&a, &a).sqrt() * (dot(&e1.eval(p), &e1.eval(p)) + dot(&e2.eval(p), &e2.eval(p))).sqrt();
        if (u * u + v * v).sqrt() <= 1e-12 * scale.max(1e-300) {
            return Err(LabError::Degenerate {
                point: *p,
                msg: "plane field contains both frame vectors".into(),
            });
        }
        let ang = v.atan2(u);
        if let Some(q) = prev {
            let d = wrap_line(ang - q);
            if d.abs() > MAX_WINDING_STEP {
                return Err(LabError::Degenerate {
                    point: *p,
                    msg: format!("curve undersampled: line turned {d:.3} rad between samples"),
                });
            }
            total += d;
        }
        prev = Some(ang);
    }
    let half_turns = total / std::f64::consts::PI;
    let full_turns = (half_turns / 2.0).round() as i64;
    let torsion = match full_turns.abs() {
        0 => Torsion::None,
        1 => Torsion::Threshold,
        _ => Torsion::Giroux,
    };
    Ok(Winding {
        angle: total,
        half_turns,
        integer_residual: (half_turns - half_turns.round()).abs(),
        full_turns,
        torsion,
    })
}

/// Winding relative to the splitting frame `(e_s, e_u)`.
pub fn plane_winding_eta(xi: &OneForm, curve: &[Point], sp: &Splitting) -> Result<Winding> {
    plane_winding(xi, curve, &sp.e_s, &sp.e_u)
}

// ---------------------------------------------------------------------------
// negative regions

#[derive(Debug, Clone, Serialize)]
pub struct RegionComponent {
    pub nodes: usize,
    /// Volume fraction.
    pub measure: f64,
    /// Boundary edges where `ξ` crosses `π⁻¹(E^s)`.
    pub stable_boundary: usize,
    /// Boundary edges where `ξ` crosses `π⁻¹(E^u)`.
    pub unstable_boundary: usize,
    /// Coordinate ranges of the component's nodes.
    pub bounds: [(f64, f64); 3],
    pub sample: Point,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionReport {
    pub components: Vec<RegionComponent>,
    pub measure: f64,
    /// Fraction of nodes where `ξ ∩ η` is tangent to `E^s` or `E^u`.
    pub tangent_fraction: f64,
    /// Largest `X·θ_ξ` on the negative nodes and their neighbours, when
    /// the region is nonempty.
    pub closure_max_rotation: Option<f64>,
    pub closure_rotation_ok: Option<bool>,
}

/// Components of `{ξ dynamically negative}` with their boundary types and the
/// rotation check on their closure.
pub fn negative_region(
    xi: &OneForm,
    sp: &Splitting,
    model: &FrameModel,
    tol: f64,
    opts: &FlowOptions,
) -> Result<RegionReport> {
    let signs = dynamical_sign_plane(xi, sp, model, tol)?;
    let lat = model.lattice();
    let n = signs.signs.len();
    let line: Vec<(f64, f64)> = signs
        .points
        .iter()
        .map(|p| {
            let [es, eu, _] = sp.basis(p);
            kernel_line(&xi.eval(p), &es, &eu)
        })
        .collect();
    let neg: Vec<bool> = signs.signs.iter().map(|&s| s == DynSign::Negative).collect();
    let neighbours = |f: usize| -> Vec<usize> {
        let [i, j, k] = lat.unflat(f);
        let mut out = Vec::with_capacity(6);
        for (ax, d) in [(0, -1i64), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
            let mut idx = [i as i64, j as i64, k as i64];
            idx[ax] += d;
            if let Some((r, _)) = lat.resolve(idx) {
                out.push(lat.flat(r[0], r[1], r[2]));
            }
        }
        out
    };
    let mut seen = vec![false; n];
    let mut closure = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if !neg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 0;
        let (mut sb, mut ub) = (0, 0);
        let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        while let Some(f) = queue.pop_front() {
            count += 1;
            closure[f] = true;
            let p = signs.points[f];
            for a in 0..3 {
                bounds[a] = (bounds[a].0.min(p[a]), bounds[a].1.max(p[a]));
            }
            for g in neighbours(f) {
                if neg[g] {
                    if !seen[g] {
                        seen[g] = true;
                        queue.push_back(g);
                    }
                    continue;
                }
                closure[g] = true;
                // the line (a, b) leaves the negative quadrant through a = 0
                // (along e_u) or b = 0 (along e_s)
                let ((a0, _), (a1, b1)) = (line[f], line[g]);
                let through_eu = if signs.signs[g] == DynSign::Tangent {
                    a1.abs() < b1.abs()
                } else {
                    a0 * a1 < 0.0
                };
                if through_eu {
                    ub += 1;
                } else {
                    sb += 1;
                }
            }
        }
        components.push(RegionComponent {
            nodes: count,
            measure: count as f64 / n as f64,
            stable_boundary: sb,
            unstable_boundary: ub,
            bounds,
            sample: signs.points[start],
        });
    }
    let measure = components.iter().map(|c| c.measure).sum();
    let (closure_max_rotation, closure_rotation_ok) = if components.is_empty() {
        (None, None)
    } else {
        let pts: Vec<Point> = (0..n).filter(|&f| closure[f]).map(|f| signs.points[f]).collect();
        let m = pts
            .par_iter()
            .map(|p| rotation_rate_at(xi, sp, model, p, opts))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        (Some(m), Some(m < 0.0))
    };
    Ok(RegionReport {
        components,
        measure,
        tangent_fraction: signs.fraction(DynSign::Tangent),
        closure_max_rotation,
        closure_rotation_ok,
    })
}
