//! Liouville pairs on `M × [-1, 1]`, the weak-filling check on T³ and the
//! recovery of expansion rates from `ω ∧ ω`.
//!
//! For `α_t = (1-t)α_- + (1+t)α_+` the form `ω = d(α_t)` on `M × [-1, 1]`
//! is `dt∧B + dα_t` with `B = α_+ - α_-`, so `ω∧ω = 2 dt∧B∧dα_t` and every
//! density below is the coefficient of `dt∧f1∧f2∧f3` (or of
//! `dt∧e_s∧e_u∧X` where stated).

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{exterior_derivative_at, wedge_density_values, wedge_on};
use crate::contact::{contact_density, interpolation_time, lin, BiContact};
use crate::error::{LabError, Result};
use crate::field::{dot, OneForm, Point};
use crate::frame::FrameModel;
use crate::splitting::Splitting;
use crate::zoo::{t3_covectors, Family, ZooModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairTag {
    #[serde(rename = "(alpha_minus, alpha_plus)")]
    Standard,
    #[serde(rename = "(-alpha_minus, alpha_plus)")]
    Reversed,
}

/// `n` nodes `-cos(πk/(n-1))` on `[-1, 1]`, endpoints included.
pub fn t_nodes(n: usize) -> Vec<f64> {
    let n = n.max(3);
    (0..n)
        .map(|k| {
            let t = -(std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            if k == 0 {
                -1.0
            } else if k == n - 1 {
                1.0
            } else {
                t
            }
        })
        .collect()
}

/// `(1-t)a + (1+t)b` for the pair `tag`, as the two forms entering it.
fn pair_forms(tag: PairTag, am: &OneForm, ap: &OneForm) -> (OneForm, OneForm) {
    match tag {
        PairTag::Standard => (am.clone(), ap.clone()),
        PairTag::Reversed => (am.scale_by(-1.0), ap.clone()),
    }
}

/// Pfaffian of `ω = dt∧B + Ω` in the basis `(∂t, f1, f2, f3)`.
fn pfaffian(b: &[f64; 3], omega: &[f64; 3]) -> f64 {
    let m = [
        [0.0, b[0], b[1], b[2]],
        [-b[0], 0.0, omega[0], omega[1]],
        [-b[1], -omega[0], 0.0, omega[2]],
        [-b[2], -omega[1], -omega[2], 0.0],
    ];
    m[0][1] * m[2][3] - m[0][2] * m[1][3] + m[0][3] * m[1][2]
}

/// Per-node data shared by all `t`.
struct NodeTerms {
    /// `S∧dU` and `S∧dS` on the frame.
    wedge_u: f64,
    wedge_s: f64,
    b: [f64; 3],
    d_minus: [f64; 3],
    d_plus: [f64; 3],
}

/// `ω∧ω` at one point two ways: the closed form in `(α_u, α_s)` and the
/// Pfaffian of `ω` built from `dα_-`, `dα_+`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensitySample {
    pub closed: f64,
    pub direct: f64,
}

/// Decomposition of a pair `(a, b)` entering `(1-t)a + (1+t)b` as
/// `α_t = U - tS` with `U = a + b`, `S = a - b`.
struct Decomposition {
    u: OneForm,
    s: OneForm,
    a: OneForm,
    b: OneForm,
}

fn decompose(a: &OneForm, b: &OneForm, model: &FrameModel) -> Result<Decomposition> {
    let u = lin(a, 1.0, b, 1.0);
    let s = lin(a, 1.0, b, -1.0);
    // α_{±1} = U ∓ S must reproduce 2b and 2a
    let mut res = 0.0f64;
    for p in model.lattice().nodes() {
        let (uv, sv, av, bv) = (u.eval(&p), s.eval(&p), a.eval(&p), b.eval(&p));
        let scale = 1.0 + dot(&av, &av).sqrt() + dot(&bv, &bv).sqrt();
        for i in 0..3 {
            res = res.max((uv[i] - sv[i] - 2.0 * bv[i]).abs() / scale);
            res = res.max((uv[i] + sv[i] - 2.0 * av[i]).abs() / scale);
        }
    }
    if res > 1e-9 {
        return Err(LabError::Liouville(format!("decomposition mismatch {res:.2e}")));
    }
    Ok(Decomposition {
        u,
        s,
        a: a.clone(),
        b: b.clone(),
    })
}

fn node_terms(d: &Decomposition, model: &FrameModel, p: &Point) -> NodeTerms {
    let (du, ds) = (exterior_derivative_at(model, &d.u, p), exterior_derivative_at(model, &d.s, p));
    let sv = d.s.eval(p);
    let (av, bv) = (d.a.eval(p), d.b.eval(p));
    NodeTerms {
        wedge_u: wedge_density_values(&sv, &du),
        wedge_s: wedge_density_values(&sv, &ds),
        b: [0, 1, 2].map(|i| bv[i] - av[i]),
        d_minus: exterior_derivative_at(model, &d.a, p),
        d_plus: exterior_derivative_at(model, &d.b, p),
    }
}

fn sample(n: &NodeTerms, t: f64) -> DensitySample {
    let omega = [0, 1, 2].map(|i| (1.0 - t) * n.d_minus[i] + (1.0 + t) * n.d_plus[i]);
    DensitySample {
        closed: -2.0 * n.wedge_u + 2.0 * t * n.wedge_s,
        direct: 2.0 * pfaffian(&n.b, &omega),
    }
}

/// `ω∧ω` of the pair `(α_-, α_+)` at the nodes for one `t`.
pub fn liouville_density(
    alpha_minus: &OneForm,
    alpha_plus: &OneForm,
    t: f64,
    model: &FrameModel,
) -> Result<Vec<DensitySample>> {
    model.check_form(alpha_minus)?;
    model.check_form(alpha_plus)?;
    let d = decompose(alpha_minus, alpha_plus, model)?;
    let pts: Vec<Point> = model.lattice().nodes().collect();
    Ok(pts.par_iter().map(|p| sample(&node_terms(&d, model, p), t)).collect())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileRow {
    pub t: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleReport {
    pub pair: PairTag,
    pub min_density: f64,
    pub argmin_point: Point,
    pub argmin_t: f64,
    pub profile: Vec<ProfileRow>,
    /// Largest `|closed - direct|` over all sampled `(point, t)`.
    pub agreement_residual: f64,
    /// Largest relative gap between `α_{±1}` and twice the end forms.
    pub boundary_residual: f64,
    pub positive: bool,
}

/// Scan one pair over the nodes and `n_t` values of `t`.
pub fn liouville_report(
    tag: PairTag,
    alpha_minus: &OneForm,
    alpha_plus: &OneForm,
    model: &FrameModel,
    n_t: usize,
    tol: f64,
) -> Result<LiouvilleReport> {
    let (a, b) = pair_forms(tag, alpha_minus, alpha_plus);
    let d = decompose(&a, &b, model)?;
    let pts: Vec<Point> = model.lattice().nodes().collect();
    let terms: Vec<NodeTerms> = pts.par_iter().map(|p| node_terms(&d, model, p)).collect();
    let ts = t_nodes(n_t);
    let mut profile = Vec::with_capacity(ts.len());
    let (mut min_density, mut argmin_point, mut argmin_t) = (f64::INFINITY, pts[0], ts[0]);
    let mut agreement = 0.0f64;
    for &t in &ts {
        let (lo, hi, at, gap) = terms
            .par_iter()
            .enumerate()
            .map(|(i, n)| {
                let s = sample(n, t);
                (s.closed, s.closed, i, (s.closed - s.direct).abs())
            })
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY, 0, 0.0),
                |x, y| {
                    let (lo, at) = if y.0 < x.0 { (y.0, y.2) } else { (x.0, x.2) };
                    (lo, x.1.max(y.1), at, x.3.max(y.3))
                },
            );
        profile.push(ProfileRow { t, min: lo, max: hi });
        agreement = agreement.max(gap);
        if lo < min_density {
            min_density = lo;
            argmin_point = pts[at];
            argmin_t = t;
        }
    }
    Ok(LiouvilleReport {
        pair: tag,
        min_density,
        argmin_point,
        argmin_t,
        profile,
        agreement_residual: agreement,
        boundary_residual: 0.0,
        positive: min_density > tol,
    })
}

/// Both pairs `(α_-, α_+)` and `(-α_-, α_+)`. The inputs must be contact
/// with signs `-` and `+`.
pub fn liouville_verdict(
    alpha_minus: &OneForm,
    alpha_plus: &OneForm,
    model: &FrameModel,
    n_t: usize,
    tol: f64,
) -> Result<(LiouvilleReport, LiouvilleReport)> {
    let dm = contact_density(alpha_minus, model)?;
    if dm.sign != -1 {
        let (point, density) = if dm.max >= 0.0 { (argmax(&dm.field, model), dm.max) } else { (dm.argmin, dm.min) };
        return Err(LabError::NotContact { point, density });
    }
    let dp = contact_density(alpha_plus, model)?;
    if dp.sign != 1 {
        return Err(LabError::NotContact {
            point: dp.argmin,
            density: dp.min,
        });
    }
    let boundary = boundary_residual(alpha_minus, alpha_plus, model);
    let mut a = liouville_report(PairTag::Standard, alpha_minus, alpha_plus, model, n_t, tol)?;
    let mut b = liouville_report(PairTag::Reversed, alpha_minus, alpha_plus, model, n_t, tol)?;
    a.boundary_residual = boundary;
    b.boundary_residual = boundary;
    Ok((a, b))
}

fn argmax(f: &crate::field::ScalarField, model: &FrameModel) -> Point {
    model
        .lattice()
        .nodes()
        .map(|p| (f.eval(&p), p))
        .fold((f64::NEG_INFINITY, [0.0; 3]), |x, y| if y.0 > x.0 { y } else { x })
        .1
}

/// Relative gap between `α_t` at `t = ±1`, evaluated through the family, and
/// `2α_±`.
fn boundary_residual(am: &OneForm, ap: &OneForm, model: &FrameModel) -> f64 {
    let ends = [lin(am, 0.0, ap, 2.0), lin(am, 2.0, ap, 0.0)];
    model
        .lattice()
        .nodes()
        .map(|p| {
            let (m, q) = (am.eval(&p), ap.eval(&p));
            let (e1, e0) = (ends[0].eval(&p), ends[1].eval(&p));
            let scale = 1.0 + dot(&m, &m).sqrt() + dot(&q, &q).sqrt();
            (0..3)
                .map(|i| ((e1[i] - 2.0 * q[i]).abs()).max((e0[i] - 2.0 * m[i]).abs()) / scale)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// rate recovery

#[derive(Debug, Clone, Serialize)]
pub struct RateWitness {
    pub points: Vec<Point>,
    pub r_u: Vec<f64>,
    pub r_s: Vec<f64>,
    pub min_r_u: f64,
    pub max_r_s: f64,
    /// `min r_u > 0 > max r_s`.
    pub strict: bool,
    pub flipped: [bool; 2],
}

/// Smallest `|β_s(e_s)|`, `|β_u(e_u)|` accepted as a divisor.
pub const WITNESS_DIVISOR_TOL: f64 = 1e-9;

/// Recover `r_u` from `ω∧ω` of `(α_-, α_+)` at `t = τ_u` and `r_s` from
/// `(-α_-, α_+)` at `t = τ_s`.
///
/// With `α_τ` frozen at `τ = τ_u(x)` and `c = α_τ(e_u)`, `a = α_τ(e_s)`,
/// the density on `(e_s, e_u, X)` is
/// `4β_s(e_s)(X·c + r_u c) - 4β_s(e_u) X·a`; the reversed pair gives
/// `4β_u(e_u)(X·c̃ + r_s c̃) - 4β_u(e_s) X·b̃` at `τ_s`.
pub fn converse_rate_witness(
    bc: &BiContact,
    sp: &Splitting,
    model: &FrameModel,
    n_t: usize,
    tol: f64,
) -> Result<RateWitness> {
    let (std_pair, rev_pair) = liouville_verdict(&bc.alpha_minus, &bc.alpha_plus, model, n_t, tol)?;
    for r in [&std_pair, &rev_pair] {
        if !r.positive {
            return Err(LabError::Liouville(format!(
                "pair {:?} is not Liouville: density {:.3e} at {:?}, t = {:.3}",
                r.pair, r.min_density, r.argmin_point, r.argmin_t
            )));
        }
    }
    let it = interpolation_time(bc, sp, model)?;
    let (am, ap) = (&it.alpha_minus, &it.alpha_plus);
    let pair_fields = [am.pair(&sp.e_s), ap.pair(&sp.e_s), am.pair(&sp.e_u), ap.pair(&sp.e_u)];
    let pts: Vec<Point> = model.lattice().nodes().collect();
    let est = pts
        .par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let basis = sp.basis(p);
            let xp = basis[2];
            let [a_m, a_p, b_m, b_p] = [0, 1, 2, 3].map(|i| pair_fields[i].eval(p));
            let [xa_m, xa_p, xb_m, xb_p] = [0, 1, 2, 3].map(|i| model.directional(&pair_fields[i], &xp, p));
            let (dm, dp) = (exterior_derivative_at(model, am, p), exterior_derivative_at(model, ap, p));
            let (mv, pv) = (am.eval(p), ap.eval(p));
            let on_basis = |form: &[f64; 3], d: &[f64; 3]| wedge_on(form, d, [&basis[0], &basis[1], &basis[2]]);

            // (α_-, α_+) at τ_u
            let tau = it.tau_u.eval(p);
            let d_tau = [0, 1, 2].map(|i| (1.0 - tau) * dm[i] + (1.0 + tau) * dp[i]);
            let b = [0, 1, 2].map(|i| pv[i] - mv[i]);
            let l = 2.0 * on_basis(&b, &d_tau);
            let c = (1.0 - tau) * b_m + (1.0 + tau) * b_p;
            let xc = (1.0 - tau) * xb_m + (1.0 + tau) * xb_p;
            let xa = (1.0 - tau) * xa_m + (1.0 + tau) * xa_p;
            let (bs_s, bs_u) = (0.5 * (a_m - a_p), 0.5 * (b_m - b_p));
            if bs_s.abs() < WITNESS_DIVISOR_TOL || c.abs() < WITNESS_DIVISOR_TOL {
                return Err(LabError::Degenerate {
                    point: *p,
                    msg: format!("beta_s(e_s) = {bs_s:.3e}, alpha(e_u) = {c:.3e}"),
                });
            }
            let r_u = ((l + 4.0 * bs_u * xa) / (4.0 * bs_s) - xc) / c;

            // (-α_-, α_+) at τ_s
            let tau = it.tau_s.eval(p);
            let d_tau = [0, 1, 2].map(|i| -(1.0 - tau) * dm[i] + (1.0 + tau) * dp[i]);
            let b = [0, 1, 2].map(|i| pv[i] + mv[i]);
            let l = 2.0 * on_basis(&b, &d_tau);
            let c = -(1.0 - tau) * a_m + (1.0 + tau) * a_p;
            let xc = -(1.0 - tau) * xa_m + (1.0 + tau) * xa_p;
            let xb = -(1.0 - tau) * xb_m + (1.0 + tau) * xb_p;
            let (bu_u, bu_s) = (0.5 * (b_m + b_p), 0.5 * (a_m + a_p));
            if bu_u.abs() < WITNESS_DIVISOR_TOL || c.abs() < WITNESS_DIVISOR_TOL {
                return Err(LabError::Degenerate {
                    point: *p,
                    msg: format!("beta_u(e_u) = {bu_u:.3e}, alpha(e_s) = {c:.3e}"),
                });
            }
            let r_s = ((l + 4.0 * bu_s * xb) / (4.0 * bu_u) - xc) / c;
            Ok((r_u, r_s))
        })
        .collect::<Result<Vec<_>>>()?;
    let (r_u, r_s): (Vec<f64>, Vec<f64>) = est.into_iter().unzip();
    let min_r_u = r_u.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_r_s = r_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(RateWitness {
        points: pts,
        r_u,
        r_s,
        min_r_u,
        max_r_s,
        strict: min_r_u > 0.0 && max_r_s < 0.0,
        flipped: it.flipped,
    })
}

// ---------------------------------------------------------------------------
// weak filling of T³

#[derive(Debug, Clone, Serialize)]
pub struct WeakFilling {
    /// `min_z ω|_{ξ_+}` per unit area, with `ξ_+` oriented as a cooriented
    /// plane in `M`.
    pub margin_plus: f64,
    /// The same for `ξ_-` in `-M`.
    pub margin_minus: f64,
    pub z_plus: f64,
    pub z_minus: f64,
    pub positive: bool,
    /// Largest scale `k ≤ WEAK_FILLING_SCALE_CAP` with the check passing
    /// for `(kε, kε')`, found by bisection.
    pub sup_scale: f64,
}

pub const WEAK_FILLING_SCALE_CAP: f64 = 1e6;
const WEAK_FILLING_SAMPLES: usize = 4096;

/// `ω(v1, v2)` per unit area for the plane `ker α` oriented so that
/// `(α^♯, v1, v2)` is positive in the orientation `o`, with `ω = dx∧dy`.
fn restricted_area(a: &[f64; 3], o: f64) -> f64 {
    o * a[2] / dot(a, a).sqrt()
}

fn filling_margins(n: u32, m: u32, eps: f64, eps_prime: f64) -> (f64, f64, f64, f64) {
    let mut out = (f64::INFINITY, 0.0, f64::INFINITY, 0.0);
    for k in 0..WEAK_FILLING_SAMPLES {
        let z = k as f64 / WEAK_FILLING_SAMPLES as f64;
        let (plus, minus) = t3_covectors(n, m, eps, eps_prime, z);
        // ξ_- lives on -M: coorient it by -α_- so the unperturbed ker dz
        // keeps the orientation of the T² factor
        let vp = restricted_area(&plus, 1.0);
        let vm = restricted_area(&minus.map(|c| -c), -1.0);
        if vp < out.0 {
            out.0 = vp;
            out.1 = z;
        }
        if vm < out.2 {
            out.2 = vm;
            out.3 = z;
        }
    }
    out
}

/// Weak bi-filling of the T³ bi-contact pair by `T² × A` with
/// `ω = dx∧dy ⊕ ω_A`, whose restriction to the boundary is `dx∧dy`.
pub fn weak_filling_t3(zm: &ZooModel, eps: f64, eps_prime: f64, tol: f64) -> Result<WeakFilling> {
    let (n, m) = match zm.family {
        Family::T3 { n, m, .. } => (n, m),
        _ => return Err(LabError::ModelMismatch("weak filling check needs the T³ family".into())),
    };
    if !(eps >= 0.0 && eps_prime >= 0.0) {
        return Err(LabError::InvalidArgument("ε and ε' must be non-negative".into()));
    }
    let passes = |k: f64| {
        let (a, _, b, _) = filling_margins(n, m, k * eps, k * eps_prime);
        a > tol && b > tol
    };
    let (margin_plus, z_plus, margin_minus, z_minus) = filling_margins(n, m, eps, eps_prime);
    let sup_scale = if passes(WEAK_FILLING_SCALE_CAP) {
        WEAK_FILLING_SCALE_CAP
    } else if !passes(0.0) {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, WEAK_FILLING_SCALE_CAP);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if passes(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        lo
    };
    Ok(WeakFilling {
        margin_plus,
        margin_minus,
        z_plus,
        z_minus,
        positive: margin_plus > tol && margin_minus > tol,
        sup_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{synthesize_bicontact, SynthesisOptions};
    use crate::rates::Rates;
    use crate::zoo::{cat_suspension, geodesic_frame_model, t3_model};

    #[test]
    fn t_nodes_include_endpoints_and_cluster_there() {
        let t = t_nodes(33);
        assert_eq!((t[0], t[32], t.len()), (-1.0, 1.0, 33));
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(t[1] - t[0] < t[17] - t[16]);
    }

    #[test]
    fn pfaffian_matches_wedge() {
        let b = [0.3, -1.2, 0.7];
        let w = [1.1, 0.4, -2.0];
        assert!((pfaffian(&b, &w) - wedge_density_values(&b, &w)).abs() < 1e-15);
    }

    #[test]
    fn geodesic_pairs_have_density_two() {
        let zm = geodesic_frame_model(3).unwrap();
        let f = zm.forms.unwrap();
        let (a, b) = liouville_verdict(&f.alpha_minus, &f.alpha_plus, &zm.model, 33, 1e-9).unwrap();
        for r in [&a, &b] {
            assert!(r.positive);
            assert!(r.profile.iter().all(|p| (p.min - 2.0).abs() < 1e-12 && (p.max - 2.0).abs() < 1e-12));
            assert!(r.agreement_residual < 1e-12 && r.boundary_residual < 1e-12);
        }
    }

    #[test]
    fn density_is_affine_in_t() {
        let zm = geodesic_frame_model(3).unwrap();
        let am = OneForm::constant([0.5, 0.5, 0.0]);
        let ap = OneForm::constant([-0.3, 0.5, 0.2]);
        let at = |t| liouville_density(&am, &ap, t, &zm.model).unwrap()[0];
        let (d0, d1, dh) = (at(-1.0), at(1.0), at(0.5));
        assert!((dh.closed - (0.25 * d0.closed + 0.75 * d1.closed)).abs() < 1e-12);
        assert!((dh.closed - dh.direct).abs() < 1e-12);
    }

    #[test]
    fn minus_form_with_flipped_contact_sign_is_rejected() {
        let zm = geodesic_frame_model(3).unwrap();
        let f = zm.forms.unwrap();
        // negating α_- keeps its contact sign, so swap in a positive form
        let err = liouville_verdict(&f.alpha_plus, &f.alpha_plus, &zm.model, 33, 1e-9).unwrap_err();
        assert!(matches!(err, LabError::NotContact { .. }));
    }

    #[test]
    fn cat_witness_recovers_rates() {
        let zm = cat_suspension([[2, 1], [1, 1]], 8, 0.0).unwrap();
        let t = zm.truth.clone().unwrap();
        let sp = Splitting::declared(&zm.model, &zm.x, t.e_s, t.e_u).unwrap();
        let rates = Rates::declared(&zm.model, t.r_s, t.r_u);
        let (bc, _) = synthesize_bicontact(&sp, &rates, None, &zm.model, &SynthesisOptions::default()).unwrap();
        let w = converse_rate_witness(&bc, &sp, &zm.model, 33, 1e-9).unwrap();
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!(w.strict);
        assert!(w.r_u.iter().all(|r| (r - l).abs() < 0.05 * l));
        assert!(w.r_s.iter().all(|r| (r + l).abs() < 0.05 * l));
    }

    #[test]
    fn t3_pairs_are_not_both_liouville() {
        let zm = t3_model(1, 1, 0.1, 0.2, 8).unwrap();
        let f = zm.forms.unwrap();
        let (a, b) = liouville_verdict(&f.alpha_minus, &f.alpha_plus, &zm.model, 33, 1e-9).unwrap();
        assert!(!(a.positive && b.positive));
    }

    #[test]
    fn weak_filling_restriction_is_the_normal_height() {
        let zm = t3_model(1, 1, 0.1, 0.2, 4).unwrap();
        let w = weak_filling_t3(&zm, 0.05, 0.08, 0.0).unwrap();
        assert!(w.positive);
        assert!((w.margin_plus - 1.0 / (1.0f64 + 0.05 * 0.05).sqrt()).abs() < 1e-12);
        assert!((w.margin_minus - 1.0 / (1.0f64 + 0.08 * 0.08).sqrt()).abs() < 1e-12);
        let w = weak_filling_t3(&zm, 0.0, 0.0, 0.0).unwrap();
        assert_eq!((w.margin_plus, w.margin_minus), (1.0, 1.0));
        let geo = geodesic_frame_model(3).unwrap();
        assert!(matches!(weak_filling_t3(&geo, 0.05, 0.05, 0.0), Err(LabError::ModelMismatch(_))));
    }

    #[test]
    fn weak_filling_bisection_finds_tolerance_threshold() {
        let zm = t3_model(1, 1, 0.1, 0.2, 4).unwrap();
        // 1/√(1+k²ε²) > 0.5 ⇔ kε < √3
        let w = weak_filling_t3(&zm, 1.0, 0.5, 0.5).unwrap();
        assert!((w.sup_scale - 3f64.sqrt()).abs() < 1e-6, "{}", w.sup_scale);
    }
}
