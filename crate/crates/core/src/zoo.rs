//! Explicit flows with analytic ground truth.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::field::{cross, det3, dot, norm, OneForm, Point, ScalarField, VecField};
use crate::frame::{FrameModel, Mat3, Metric, ModelDocument, Structure};
use crate::lattice::{AxisRule, IntMatrix, Lattice};

/// Analytic splitting and rates.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub e_s: VecField,
    pub e_u: VecField,
    pub r_s: ScalarField,
    pub r_u: ScalarField,
    pub note: String,
}

/// A bi-contact pair supplied with the model.
#[derive(Debug, Clone)]
pub struct DeclaredForms {
    pub alpha_minus: OneForm,
    pub alpha_plus: OneForm,
    /// Smallest sine of the angle between the two kernels.
    pub transversality_margin: f64,
    /// Where the margin is attained.
    pub margin_point: Point,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Geodesic,
    Cat {
        a: IntMatrix,
        lambda: f64,
        v_u: [f64; 2],
        v_s: [f64; 2],
        /// Amplitude of the deliberate metric skew (0 for the adapted metric).
        skew: f64,
    },
    T3 {
        n: u32,
        m: u32,
        eps: f64,
        eps_prime: f64,
    },
    Document,
}

#[derive(Debug, Clone)]
pub struct ZooModel {
    pub model: FrameModel,
    pub x: VecField,
    pub family: Family,
    pub truth: Option<GroundTruth>,
    pub forms: Option<DeclaredForms>,
    /// Perturbation amplitude and seed applied, if any.
    pub perturbation: Option<(f64, u64)>,
}

/// `c^k_ij` of the frame `(e_s, e_u, X)` with `[X,e_s] = e_s`,
/// `[X,e_u] = -e_u`, `[e_s,e_u] = 2X`.
pub fn sl2_structure() -> Structure {
    let mut c: Structure = [[[0.0; 3]; 3]; 3];
    let mut set = |k: usize, i: usize, j: usize, v: f64| {
        c[k][i][j] = v;
        c[k][j][i] = -v;
    };
    set(2, 0, 1, 2.0);
    set(0, 0, 2, -1.0);
    set(1, 1, 2, 1.0);
    c
}

/// Homogeneous model of a geodesic flow: frame `(e_s, e_u, X)` realized in
/// the chart `e_s = ∂z`, `e_u = e^{2x}∂y - z∂x - z²∂z`, `X = -½∂x - z∂z`.
pub fn geodesic_frame_model(resolution: usize) -> Result<ZooModel> {
    let n = resolution.max(2);
    let lattice = Lattice::new([-0.5; 3], [0.5; 3], [n; 3], [AxisRule::Open; 3])?;
    let legs = |p: &Point| -> Mat3 {
        let (x, z) = (p[0], p[2]);
        [
            [0.0, 0.0, 1.0],
            [-z, (2.0 * x).exp(), -z * z],
            [-0.5, 0.0, -z],
        ]
    };
    let model = FrameModel::homogeneous(
        "geodesic",
        lattice,
        sl2_structure(),
        legs,
        Metric::frame_orthonormal(),
    )?;
    let alpha_u = OneForm::constant([0.0, 1.0, 0.0]);
    let alpha_s = OneForm::constant([1.0, 0.0, 0.0]);
    let forms = DeclaredForms {
        alpha_minus: alpha_u.combine(0.5, &alpha_s, 0.5),
        alpha_plus: alpha_u.combine(0.5, &alpha_s, -0.5),
        transversality_margin: 1.0,
        margin_point: [0.0; 3],
    };
    Ok(ZooModel {
        model,
        x: VecField::constant([0.0, 0.0, 1.0]),
        family: Family::Geodesic,
        truth: Some(GroundTruth {
            e_s: VecField::constant([1.0, 0.0, 0.0]),
            e_u: VecField::constant([0.0, 1.0, 0.0]),
            r_s: ScalarField::constant(-1.0),
            r_u: ScalarField::constant(1.0),
            note: "frame legs; rates from the structure constants".into(),
        }),
        forms: Some(forms),
        perturbation: None,
    })
}

fn eigenvector(a: &IntMatrix, mu: f64) -> [f64; 2] {
    let (a11, a12, a21, a22) = (a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64);
    let v = if a12.abs() >= a21.abs() && a12 != 0.0 {
        [a12, mu - a11]
    } else {
        [mu - a22, a21]
    };
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

/// `Q(t)` with `g = QᵀQ ⊕ dt²` on the torus directions; `Q(t+1) = Q(t) A`.
fn cat_q(lambda: f64, pinv: &[[f64; 2]; 2], skew: f64, t: f64) -> [[f64; 2]; 2] {
    let su = lambda.powf(t) * (skew * (2.0 * PI * t).sin()).exp();
    let ss = lambda.powf(-t);
    [
        [su * pinv[0][0], su * pinv[0][1]],
        [ss * pinv[1][0], ss * pinv[1][1]],
    ]
}

/// Mapping torus of a hyperbolic toral automorphism with its suspension
/// flow. `skew` multiplies the unstable length by `e^{skew·sin 2πt}`,
/// keeping the metric well defined on the quotient.
pub fn cat_suspension(a: IntMatrix, resolution: usize, skew: f64) -> Result<ZooModel> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let tr = a[0][0] + a[1][1];
    if det.abs() != 1 {
        return Err(LabError::InvalidModel(format!("det A = {det}; need ±1")));
    }
    if tr.abs() <= 2 {
        return Err(LabError::InvalidModel(format!(
            "trace A = {tr}; |trace| must exceed 2 for a hyperbolic map"
        )));
    }
    if det != 1 || tr < 0 {
        return Err(LabError::InvalidModel(
            "A must have positive eigenvalues so the stable and unstable line fields are orientable"
                .into(),
        ));
    }
    let trf = tr as f64;
    let lambda = 0.5 * (trf + (trf * trf - 4.0).sqrt());
    let v_u = eigenvector(&a, lambda);
    let mut v_s = eigenvector(&a, 1.0 / lambda);
    if v_s[0] * v_u[1] - v_s[1] * v_u[0] < 0.0 {
        v_s = [-v_s[0], -v_s[1]];
    }
    // P = [v_u v_s]
    let d = v_u[0] * v_s[1] - v_s[0] * v_u[1];
    let pinv = [[v_s[1] / d, -v_s[0] / d], [-v_u[1] / d, v_u[0] / d]];
    let n = resolution.max(4);
    let lattice = Lattice::new(
        [0.0; 3],
        [1.0; 3],
        [n; 3],
        [AxisRule::Periodic, AxisRule::Periodic, AxisRule::Monodromy(a)],
    )?;
    let tag = if skew == 0.0 {
        "cat-adapted".to_string()
    } else {
        format!("cat-skewed-{skew}")
    };
    let metric = Metric::from_fn(tag, move |p| {
        let q = cat_q(lambda, &pinv, skew, p[2]);
        let mut g = [[0.0; 3]; 3];
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] = q[0][i] * q[0][j] + q[1][i] * q[1][j];
            }
        }
        g[2][2] = 1.0;
        g
    });
    let model = FrameModel::coordinate(format!("cat{a:?}"), lattice, metric);
    let ln = lambda.ln();
    let e_u = VecField::from_fn(move |p| {
        let k = lambda.powf(-p[2]) * (-skew * (2.0 * PI * p[2]).sin()).exp();
        [k * v_u[0], k * v_u[1], 0.0]
    });
    let e_s = VecField::from_fn(move |p| {
        let k = lambda.powf(p[2]);
        [k * v_s[0], k * v_s[1], 0.0]
    });
    let r_u = if skew == 0.0 {
        ScalarField::constant(ln)
    } else {
        ScalarField::from_fn(move |p| ln + 2.0 * PI * skew * (2.0 * PI * p[2]).cos())
    };
    let theta = move |row: usize| {
        OneForm::from_fn(move |p| {
            let q = cat_q(lambda, &pinv, skew, p[2]);
            [q[row][0], q[row][1], 0.0]
        })
    };
    let (alpha_u, alpha_s) = (theta(0), theta(1));
    Ok(ZooModel {
        model,
        x: VecField::constant([0.0, 0.0, 1.0]),
        family: Family::Cat {
            a,
            lambda,
            v_u,
            v_s,
            skew,
        },
        truth: Some(GroundTruth {
            e_s,
            e_u,
            r_s: ScalarField::constant(-ln),
            r_u,
            note: "eigenvectors of the monodromy scaled by λ^{∓t}".into(),
        }),
        forms: Some(DeclaredForms {
            alpha_minus: alpha_u.combine(0.5, &alpha_s, 0.5),
            alpha_plus: alpha_u.combine(0.5, &alpha_s, -0.5),
            transversality_margin: 1.0,
            margin_point: [0.0; 3],
        }),
        perturbation: None,
    })
}

pub(crate) fn t3_covectors(n: u32, m: u32, eps: f64, eps_prime: f64, z: f64) -> ([f64; 3], [f64; 3]) {
    let (an, am) = (2.0 * PI * n as f64 * z, 2.0 * PI * m as f64 * z);
    (
        [eps * an.cos(), -eps * an.sin(), 1.0],
        [eps_prime * am.cos(), eps_prime * am.sin(), 1.0],
    )
}

/// Sine of the angle between the kernels of the two T³ forms at height `z`.
pub fn t3_transversality(n: u32, m: u32, eps: f64, eps_prime: f64, z: f64) -> f64 {
    let (a, b) = t3_covectors(n, m, eps, eps_prime, z);
    norm(&cross(&a, &b)) / (norm(&a) * norm(&b))
}

/// The bi-contact family on T³: `α_+ = dz + ε(cos 2πnz dx - sin 2πnz dy)`,
/// `α_- = dz + ε'(cos 2πmz dx + sin 2πmz dy)`, with `X` the unit section of
/// the intersection of their kernels.
pub fn t3_model(n: u32, m: u32, eps: f64, eps_prime: f64, resolution: usize) -> Result<ZooModel> {
    if n == 0 || m == 0 {
        return Err(LabError::InvalidModel("n and m must be positive".into()));
    }
    if !(eps > 0.0 && eps < 0.5 && eps_prime > 0.0 && eps_prime < 0.5) {
        return Err(LabError::InvalidModel("need 0 < ε, ε' < 0.5".into()));
    }
    let lattice = Lattice::new([0.0; 3], [1.0; 3], [resolution.max(4); 3], [AxisRule::Periodic; 3])?;
    let model = FrameModel::coordinate(format!("t3({n},{m},{eps},{eps_prime})"), lattice, Metric::frame_orthonormal());
    let x = VecField::from_fn(move |p| {
        let (a, b) = t3_covectors(n, m, eps, eps_prime, p[2]);
        let w = cross(&a, &b);
        let k = norm(&w);
        if k < 1e-300 {
            [0.0; 3]
        } else {
            [w[0] / k, w[1] / k, w[2] / k]
        }
    });
    let samples = 8192;
    let mut margin = (f64::INFINITY, 0.0);
    for k in 0..samples {
        let z = k as f64 / samples as f64;
        let v = t3_transversality(n, m, eps, eps_prime, z);
        if v < margin.0 {
            margin = (v, z);
        }
    }
    let plus = OneForm::from_fn(move |p| t3_covectors(n, m, eps, eps_prime, p[2]).0);
    let minus = OneForm::from_fn(move |p| t3_covectors(n, m, eps, eps_prime, p[2]).1);
    Ok(ZooModel {
        model,
        x,
        family: Family::T3 {
            n,
            m,
            eps,
            eps_prime,
        },
        truth: None,
        forms: Some(DeclaredForms {
            alpha_minus: minus,
            alpha_plus: plus,
            transversality_margin: margin.0,
            margin_point: [0.0, 0.0, margin.1],
        }),
        perturbation: None,
    })
}

/// The plane field spanned by `X` and `cos ψ e_s + sin ψ e_u` with
/// `ψ = 2π·turns·t/L` along the suspension coordinate, as the 1-form
/// `sin ψ θ^s - cos ψ θ^u`. Needs ground truth; for `turns < 0` the plane
/// turns against the flow and is a positive contact structure once
/// `2π|turns|/L > ln λ`.
pub fn rotating_plane_field(zm: &ZooModel, turns: i32) -> Result<OneForm> {
    let truth = zm
        .truth
        .clone()
        .ok_or_else(|| LabError::ModelMismatch("rotating plane field needs ground truth".into()))?;
    let l = zm.model.lattice();
    let (t0, len) = (l.lo[2], l.hi[2] - l.lo[2]);
    let x = zm.x.clone();
    Ok(OneForm::from_fn(move |p| {
        let (es, eu, xp) = (truth.e_s.eval(p), truth.e_u.eval(p), x.eval(p));
        let d = det3(&es, &eu, &xp);
        let ts = cross(&eu, &xp);
        let tu = cross(&xp, &es);
        let psi = 2.0 * PI * turns as f64 * (p[2] - t0) / len;
        let (s, c) = psi.sin_cos();
        [0, 1, 2].map(|i| (s * ts[i] - c * tu[i]) / d)
    }))
}

/// `C^∞` bump on `(0, 1)`, flat to all orders at the ends.
fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (4.0 - 1.0 / (s * (1.0 - s))).exp()
    }
}

#[derive(Debug, Clone)]
struct Mode {
    k: [f64; 3],
    amp: f64,
    phase: f64,
}

fn random_modes(rng: &mut ChaCha8Rng, with_t: bool) -> Vec<Mode> {
    (0..4)
        .map(|_| Mode {
            k: [
                rng.gen_range(-2i32..=2) as f64,
                rng.gen_range(-2i32..=2) as f64,
                if with_t { rng.gen_range(-2i32..=2) as f64 } else { 0.0 },
            ],
            amp: rng.gen_range(-1.0..1.0),
            phase: rng.gen_range(0.0..2.0 * PI),
        })
        .collect()
}

fn trig(modes: &[Mode], p: &Point) -> f64 {
    let s: f64 = modes
        .iter()
        .map(|m| m.amp * (2.0 * PI * dot(&m.k, p) + m.phase).cos())
        .sum();
    s / modes.len() as f64
}

/// A model read from a document; it must declare its flow.
pub fn from_document(doc: &ModelDocument, resolution: Option<[usize; 3]>) -> Result<ZooModel> {
    let (model, flow) = doc.build(resolution)?;
    let x = flow.ok_or_else(|| LabError::InvalidModel(format!("model '{}' declares no flow", doc.name)))?;
    Ok(ZooModel {
        model,
        x,
        family: Family::Document,
        truth: None,
        forms: None,
        perturbation: None,
    })
}

/// Add a smooth trigonometric perturbation of size `amplitude` to the flow.
/// Ground truth is dropped; it must be recomputed.
pub fn perturb(zm: &ZooModel, amplitude: f64, seed: u64) -> Result<ZooModel> {
    if !(0.0..0.1).contains(&amplitude) {
        return Err(LabError::InvalidArgument(format!(
            "perturbation amplitude {amplitude} must lie in [0, 0.1)"
        )));
    }
    if amplitude == 0.0 {
        return Ok(zm.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta: VecField = match &zm.family {
        Family::Cat { lambda, v_u, v_s, .. } => {
            // coefficients on the invariant frame (λ^t v_s, λ^{-t} v_u, ∂t),
            // built from functions on the torus bundle
            let modes: Vec<Vec<Mode>> = (0..3).map(|_| random_modes(&mut rng, false)).collect();
            let lattice: Arc<Lattice> = zm.model.lattice().clone();
            let (lambda, v_u, v_s) = (*lambda, *v_u, *v_s);
            // one closure per coefficient so derivatives only pay for their own modes
            let c = [0usize, 1, 2].map(|i| {
                let (modes, lattice) = (modes.clone(), lattice.clone());
                ScalarField::from_fn(move |p| {
                    let (rep, _) = lattice.reduce(p);
                    let b = amplitude * bump(rep[2]);
                    if b == 0.0 {
                        return 0.0;
                    }
                    if i == 2 {
                        return b * trig(&modes[2], &rep);
                    }
                    let ks = lambda.powf(p[2]);
                    b * (trig(&modes[0], &rep) * ks * v_s[i] + trig(&modes[1], &rep) / ks * v_u[i])
                })
            });
            VecField::new(c)
        }
        _ => {
            let modes: Vec<Vec<Mode>> = (0..3).map(|_| random_modes(&mut rng, true)).collect();
            VecField::from_fn(move |p| [0, 1, 2].map(|i| amplitude * trig(&modes[i], p)))
        }
    };
    let mut out = zm.clone();
    out.x = zm.x.add(&delta);
    out.truth = None;
    out.perturbation = Some((amplitude, seed));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_rejects_bad_matrices() {
        assert!(cat_suspension([[1, 1], [0, 1]], 8, 0.0).is_err());
        assert!(cat_suspension([[2, 0], [0, 1]], 8, 0.0).is_err());
        assert!(cat_suspension([[-2, 1], [1, -1]], 8, 0.0).is_err());
        assert!(cat_suspension([[1, 1], [1, 0]], 8, 0.0).is_err());
    }

    #[test]
    fn cat_ground_truth_is_glued_consistently() {
        let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
        let t = zm.truth.as_ref().unwrap();
        assert!(zm.model.identification_residual_vector(&t.e_u) < 1e-10);
        assert!(zm.model.identification_residual_vector(&t.e_s) < 1e-10);
        let p = [0.1, 0.2, 0.3];
        let g = zm.model.metric();
        assert!((g.norm(&p, &t.e_u.eval(&p)) - 1.0).abs() < 1e-12);
        assert!((g.norm(&p, &t.e_s.eval(&p)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cat_metric_is_glued_consistently() {
        let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.3).unwrap();
        let l = zm.model.lattice();
        let p = [0.3, 0.6, 1.0];
        let (q, m) = l.reduce(&p);
        let u = [0.2, -0.7, 0.1];
        let v = [1.0, 0.4, 0.0];
        let a = zm.model.metric().inner(&p, &u, &v);
        let b = zm.model.metric().inner(&q, &l.vector_to_rep(m, u), &l.vector_to_rep(m, v));
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn t3_transversality_degenerates_for_equal_eps() {
        let zm = t3_model(1, 1, 0.1, 0.1, 8).unwrap();
        assert!(zm.forms.unwrap().transversality_margin < 1e-12);
        let zm = t3_model(1, 1, 0.1, 0.2, 8).unwrap();
        assert!(zm.forms.unwrap().transversality_margin > 0.05);
    }

    #[test]
    fn t3_flow_lies_in_both_kernels() {
        let zm = t3_model(2, 1, 0.1, 0.2, 8).unwrap();
        let f = zm.forms.unwrap();
        for z in [0.0, 0.13, 0.5, 0.77] {
            let p = [0.3, 0.1, z];
            let x = zm.x.eval(&p);
            assert!(dot(&f.alpha_plus.eval(&p), &x).abs() < 1e-14);
            assert!(dot(&f.alpha_minus.eval(&p), &x).abs() < 1e-14);
            assert!((norm(&x) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn perturbation_is_deterministic_and_glued() {
        let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
        let a = perturb(&zm, 0.02, 7).unwrap();
        let b = perturb(&zm, 0.02, 7).unwrap();
        let c = perturb(&zm, 0.02, 8).unwrap();
        let p = [0.3, 0.4, 0.45];
        assert_eq!(a.x.eval(&p), b.x.eval(&p));
        assert_ne!(a.x.eval(&p), c.x.eval(&p));
        assert!(a.model.identification_residual_vector(&a.x) < 1e-10);
        assert!(perturb(&zm, 0.1, 7).is_err());
        assert_eq!(perturb(&zm, 0.0, 7).unwrap().x.eval(&p), zm.x.eval(&p));
    }
}
