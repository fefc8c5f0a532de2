//! Lie brackets and exterior calculus on a frame model.

use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::field::{step_of, GridData, OneForm, Point, ScalarField, TwoForm, VecField};
use crate::frame::FrameModel;
use crate::lattice::{AxisRule, Tensor};

fn require_smooth(what: &str, smooth: bool) -> Result<()> {
    if smooth {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!(
            "{what} has coefficients that are only continuous; smooth it first"
        )))
    }
}

fn steps(fields: &[&ScalarField]) -> [f64; 3] {
    step_of(fields)
}

/// Pointwise value of `[V, W]` at `p`.
pub fn bracket_at(model: &FrameModel, v: &VecField, w: &VecField, p: &Point) -> [f64; 3] {
    let (vp, wp) = (v.eval(p), w.eval(p));
    let c = model.structure();
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut s = model.directional(w.coeff(k), &vp, p) - model.directional(v.coeff(k), &wp, p);
        for i in 0..3 {
            for j in 0..3 {
                s += vp[i] * wp[j] * c[k][i][j];
            }
        }
        out[k] = s;
    }
    out
}

/// `[V, W]` on the model frame.
pub fn lie_bracket(v: &VecField, w: &VecField, model: &FrameModel) -> Result<VecField> {
    model.check_vector(v)?;
    model.check_vector(w)?;
    require_smooth("first vector field", v.is_smooth())?;
    require_smooth("second vector field", w.is_smooth())?;
    if v.is_constant() && w.is_constant() {
        let (vp, wp) = (v.eval(&[0.0; 3]), w.eval(&[0.0; 3]));
        let c = model.structure();
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    *o += vp[i] * wp[j] * c[k][i][j];
                }
            }
        }
        return Ok(VecField::constant(out));
    }
    let step = steps(&v.coeffs().iter().chain(w.coeffs()).collect::<Vec<_>>());
    let comps = [0, 1, 2].map(|k| {
        let (m, v, w) = (model.clone(), v.clone(), w.clone());
        ScalarField::from_fn_with_step(move |p| bracket_at(&m, &v, &w, p)[k], step, true)
    });
    Ok(VecField::new(comps))
}

/// `(dα)(f_i, f_j)` at `p`, ordered `(12), (13), (23)`.
pub fn exterior_derivative_at(model: &FrameModel, a: &OneForm, p: &Point) -> [f64; 3] {
    let ap = a.eval(p);
    let c = model.structure();
    let pairs = [(0, 1), (0, 2), (1, 2)];
    pairs.map(|(i, j)| {
        let mut s = model.frame_derivative(a.coeff(j), i, p) - model.frame_derivative(a.coeff(i), j, p);
        for k in 0..3 {
            s -= ap[k] * c[k][i][j];
        }
        s
    })
}

/// `dα` on the model frame.
pub fn exterior_derivative(a: &OneForm, model: &FrameModel) -> Result<TwoForm> {
    model.check_form(a)?;
    require_smooth("1-form", a.is_smooth())?;
    if a.is_constant() {
        let v = exterior_derivative_at(model, a, &[0.0; 3]);
        return Ok(TwoForm::new(v[0].into(), v[1].into(), v[2].into()));
    }
    let step = steps(&a.coeffs().iter().collect::<Vec<_>>());
    let comps = [0, 1, 2].map(|k| {
        let (m, a) = (model.clone(), a.clone());
        ScalarField::from_fn_with_step(move |p| exterior_derivative_at(&m, &a, p)[k], step, true)
    });
    let [c12, c13, c23] = comps;
    Ok(TwoForm::new(c12, c13, c23))
}

/// `df` on the model frame.
pub fn differential(f: &ScalarField, model: &FrameModel) -> Result<OneForm> {
    model.check_scalar(f)?;
    require_smooth("function", f.is_smooth())?;
    if f.as_constant().is_some() {
        return Ok(OneForm::constant([0.0; 3]));
    }
    let step = f.step();
    Ok(OneForm::new([0, 1, 2].map(|i| {
        let (m, f) = (model.clone(), f.clone());
        ScalarField::from_fn_with_step(move |p| m.frame_derivative(&f, i, p), step, true)
    })))
}

/// `α ∧ β` for two 1-forms.
pub fn wedge_forms(a: &OneForm, b: &OneForm) -> TwoForm {
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let comps = pairs.map(|(i, j)| {
        let t1 = a.coeff(i) * b.coeff(j);
        let t2 = a.coeff(j) * b.coeff(i);
        &t1 - &t2
    });
    let [c12, c13, c23] = comps;
    TwoForm::new(c12, c13, c23)
}

/// `(α ∧ β)(f1, f2, f3)` from pointwise values.
pub fn wedge_density_values(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[2] - a[1] * b[1] + a[2] * b[0]
}

/// `(α ∧ β)(f1, f2, f3)` as a density relative to the frame volume.
pub fn wedge_density(a: &OneForm, b: &TwoForm, model: &FrameModel) -> Result<ScalarField> {
    model.check_form(a)?;
    b.coeffs().iter().try_for_each(|c| model.check_scalar(c))?;
    let [b12, b13, b23] = b.coeffs().clone();
    let terms = [
        a.coeff(0) * &b23,
        a.coeff(1) * &b13,
        a.coeff(2) * &b12,
    ];
    Ok(&(&terms[0] - &terms[1]) + &terms[2])
}

/// `(α ∧ β)(V1, V2, V3)` for an arbitrary ordered triple, pointwise.
pub fn wedge_on(a: &[f64; 3], b: &[f64; 3], v: [&[f64; 3]; 3]) -> f64 {
    let ev = |u: &[f64; 3]| crate::field::dot(a, u);
    ev(v[0]) * TwoForm::apply(b, v[1], v[2]) - ev(v[1]) * TwoForm::apply(b, v[0], v[2])
        + ev(v[2]) * TwoForm::apply(b, v[0], v[1])
}

/// Result of [`smooth_with_flow_control`].
#[derive(Debug, Clone)]
pub struct Smoothed {
    pub field: ScalarField,
    /// Achieved `sup |f - f̃|`.
    pub value_bound: f64,
    /// Achieved `sup |X·f - X·f̃|`.
    pub derivative_bound: f64,
    /// Mollifier width in grid units (0 when the input was already smooth).
    pub width: f64,
}

const MOLLIFIER_WIDTHS: [f64; 7] = [3.0, 2.0, 1.5, 1.0, 0.75, 0.5, 0.35];

fn mollify(model: &FrameModel, samples: &[f64], sigma: f64) -> Vec<f64> {
    let l = model.lattice();
    let radius = (4.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut cur = samples.to_vec();
    for axis in 0..3 {
        let next: Vec<f64> = (0..l.len())
            .map(|f| {
                let idx = l.unflat(f);
                let mut s = 0.0;
                let mut out = [0.0; 3];
                for (w, k) in weights.iter().zip(-radius..=radius) {
                    let mut j = [idx[0] as i64, idx[1] as i64, idx[2] as i64];
                    j[axis] += k;
                    l.fetch(&cur, Tensor::Scalar, j, &mut out);
                    s += w * out[0];
                }
                s / total
            })
            .collect();
        cur = next;
    }
    cur
}

/// Dense sampling points: lines parallel to each axis, ten samples per cell.
fn dense_points(model: &FrameModel) -> Vec<Point> {
    let l = model.lattice();
    let mut pts = Vec::new();
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let stride = |a: usize| (l.n[a] / 6).max(1);
        let cells = match l.rules[axis] {
            AxisRule::Open => l.n[axis] - 1,
            _ => l.n[axis],
        };
        let mut jb = 0;
        while jb < l.n[b] {
            let mut jc = 0;
            while jc < l.n[c] {
                for s in 0..cells * 10 {
                    let mut idx = [0usize; 3];
                    idx[b] = jb;
                    idx[c] = jc;
                    let mut p = l.node(idx);
                    // offset off the node lines so interpolation is exercised
                    p[b] += 0.31 * l.spacing()[b];
                    p[c] += 0.57 * l.spacing()[c];
                    p[axis] = l.lo[axis] + s as f64 * 0.1 * l.spacing()[axis];
                    pts.push(p);
                }
                jc += stride(c);
            }
            jb += stride(b);
        }
    }
    pts
}

/// Directional derivative of a possibly non-smooth callable by a narrow
/// centred difference.
fn rough_directional(model: &FrameModel, f: &ScalarField, v: &[f64; 3], p: &Point) -> f64 {
    let c = model.to_chart(p, v);
    let d = 1e-7;
    let mut qp = *p;
    let mut qm = *p;
    for a in 0..3 {
        qp[a] += d * c[a];
        qm[a] -= d * c[a];
    }
    (f.eval(&qp) - f.eval(&qm)) / (2.0 * d)
}

/// Replace a continuous function by a smooth one whose values and whose
/// derivative along `X` are both within `eps` of the original.
pub fn smooth_with_flow_control(
    f: &ScalarField,
    x: &VecField,
    eps: f64,
    model: &FrameModel,
) -> Result<Smoothed> {
    if !(eps > 0.0) {
        return Err(LabError::InvalidArgument("eps must be positive".into()));
    }
    if f.is_smooth() {
        return Ok(Smoothed {
            field: f.clone(),
            value_bound: 0.0,
            derivative_bound: 0.0,
            width: 0.0,
        });
    }
    let l = model.lattice().clone();
    let raw: Vec<f64> = l.nodes().map(|p| f.eval(&p)).collect();
    let pts = dense_points(model);
    let exact: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| (f.eval(p), rough_directional(model, f, &x.eval(p), p)))
        .collect();
    let mut best = (f64::INFINITY, f64::INFINITY);
    for &sigma in &MOLLIFIER_WIDTHS {
        let data = mollify(model, &raw, sigma);
        let g = ScalarField::from_grid(
            Arc::new(GridData::from_values(l.clone(), Tensor::Scalar, data)),
            0,
        );
        let mut vb = 0.0f64;
        let mut db = 0.0f64;
        for (p, (fv, fd)) in pts.iter().zip(&exact) {
            vb = vb.max((g.eval(p) - fv).abs());
            db = db.max((model.directional(&g, &x.eval(p), p) - fd).abs());
        }
        if vb < eps && db < eps {
            return Ok(Smoothed {
                field: g,
                value_bound: vb,
                derivative_bound: db,
                width: sigma,
            });
        }
        if vb.max(db) < best.0.max(best.1) {
            best = (vb, db);
        }
    }
    Err(LabError::SmoothingBounds {
        value_bound: best.0,
        derivative_bound: best.1,
        eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Metric;
    use crate::lattice::Lattice;
    use std::f64::consts::PI;

    fn torus(n: usize) -> FrameModel {
        FrameModel::coordinate(
            "torus",
            Lattice::new([0.0; 3], [1.0; 3], [n; 3], [AxisRule::Periodic; 3]).unwrap(),
            Metric::frame_orthonormal(),
        )
    }

    #[test]
    fn bracket_of_translation_and_rotation() {
        let m = torus(8);
        let v = VecField::constant([0.0, 0.0, 1.0]);
        let w = VecField::from_fn(|p| [(2.0 * PI * p[2]).cos(), 0.0, 0.0]);
        let b = lie_bracket(&v, &w, &m).unwrap();
        let p = [0.2, 0.4, 0.1];
        let want = -2.0 * PI * (2.0 * PI * p[2]).sin();
        assert!((b.eval(&p)[0] - want).abs() < 1e-8);
        assert!(b.eval(&p)[1].abs() < 1e-12);
    }

    #[test]
    fn bracket_rejects_rough_fields() {
        let m = torus(8);
        let v = VecField::new([
            ScalarField::continuous(|p| p[0].abs()),
            0.0.into(),
            0.0.into(),
        ]);
        assert!(lie_bracket(&v, &v, &m).is_err());
    }

    #[test]
    fn exterior_derivative_of_rotating_form() {
        let m = torus(8);
        let a = OneForm::from_fn(|p| {
            let z = 2.0 * PI * p[2];
            [z.cos(), -z.sin(), 0.0]
        });
        let d = exterior_derivative(&a, &m).unwrap();
        let p = [0.0, 0.0, 0.3];
        let z = 2.0 * PI * p[2];
        let v = d.eval(&p);
        // (13) = -dα(∂z, ∂x), (23) = -dα(∂z, ∂y)
        assert!(v[0].abs() < 1e-12);
        assert!((v[1] - 2.0 * PI * z.sin()).abs() < 1e-8);
        assert!((v[2] - 2.0 * PI * z.cos()).abs() < 1e-8);
        let rho = wedge_density(&a, &d, &m).unwrap();
        assert!((rho.eval(&p) - 2.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn smooth_input_is_returned_unchanged() {
        let m = torus(8);
        let f = ScalarField::from_fn(|p| p[0].sin());
        let s = smooth_with_flow_control(&f, &VecField::constant([1.0, 0.0, 0.0]), 1e-2, &m).unwrap();
        assert_eq!(s.value_bound, 0.0);
        assert_eq!(s.derivative_bound, 0.0);
        assert_eq!(s.field.eval(&[0.3, 0.0, 0.0]), f.eval(&[0.3, 0.0, 0.0]));
    }

    #[test]
    fn kinked_function_smoothed_along_the_flow() {
        // |sin 2πz| with X = ∂x: X·f = 0, only the value bound is at stake
        let m = FrameModel::coordinate(
            "torus",
            Lattice::new([0.0; 3], [1.0; 3], [4, 4, 128], [AxisRule::Periodic; 3]).unwrap(),
            Metric::frame_orthonormal(),
        );
        let f = ScalarField::continuous(|p| (2.0 * std::f64::consts::PI * p[2]).sin().abs());
        let s = smooth_with_flow_control(&f, &VecField::constant([1.0, 0.0, 0.0]), 1e-2, &m).unwrap();
        assert!(s.value_bound < 1e-2 && s.derivative_bound < 1e-2, "{s:?}");
        for k in 0..1000 {
            let p = [0.1, 0.2, k as f64 / 1000.0];
            assert!((s.field.eval(&p) - f.eval(&p)).abs() < 1e-2, "{p:?} {} {}", s.field.eval(&p), f.eval(&p));
        }
    }

    #[test]
    fn unreachable_bounds_report_what_was_achieved() {
        let m = torus(16);
        let tent = ScalarField::continuous(|p| 1.0 - (2.0 * p[2].rem_euclid(1.0) - 1.0).abs());
        match smooth_with_flow_control(&tent, &VecField::constant([0.0, 0.0, 1.0]), 5e-2, &m) {
            Err(LabError::SmoothingBounds { derivative_bound, eps, .. }) => {
                assert_eq!(eps, 5e-2);
                assert!(derivative_bound > 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wedge_on_frame_matches_density() {
        let a = [0.3, -1.2, 2.0];
        let b = [0.5, 0.7, -0.4];
        let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let direct = wedge_on(&a, &b, [&e[0], &e[1], &e[2]]);
        assert!((direct - wedge_density_values(&a, &b)).abs() < 1e-15);
    }
}
