//! Flow and tangent-flow integration on the universal cover of a model.
//!
//! Trajectories are integrated in cover coordinates, where every field is
//! evaluated through its equivariant extension; the public maps reduce the
//! end point back to the fundamental domain and carry tangent vectors
//! through the gluing.

use crate::error::{LabError, Result};
use crate::field::{Point, ScalarField, VecField};
use crate::frame::{FrameModel, Mat3, ModelKind};
use crate::ode::{integrate, Tolerances};

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub tol: Tolerances,
    /// Largest admissible `|t|`.
    pub horizon: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: Tolerances::default(),
            horizon: 64.0,
        }
    }
}

impl FlowOptions {
    fn check(&self, t: f64) -> Result<()> {
        if t.abs() > self.horizon {
            return Err(LabError::HorizonExceeded {
                requested: t,
                limit: self.horizon,
            });
        }
        Ok(())
    }
}

/// Linearization of the flow on frame coefficients:
/// `v' = J v` with `J[k][j] = f_j·X^k - Σ_i X^i c^k_ij`.
pub fn variational_matrix(model: &FrameModel, x: &VecField, p: &Point, xp: &[f64; 3]) -> Mat3 {
    let c = model.structure();
    let mut jm = [[0.0; 3]; 3];
    let constant = x.is_constant();
    for k in 0..3 {
        for j in 0..3 {
            let mut s = if constant {
                0.0
            } else {
                model.frame_derivative(x.coeff(k), j, p)
            };
            for i in 0..3 {
                s -= xp[i] * c[k][i][j];
            }
            jm[k][j] = s;
        }
    }
    jm
}

fn needs_jacobian(model: &FrameModel, x: &VecField) -> bool {
    !(x.is_constant() && model.kind() == ModelKind::CoordinateGrid)
}

/// Integrate position, tangent vectors and scalar integrals along the
/// trajectory through `p` for time `t`, all on the cover.
pub fn push_cover(
    model: &FrameModel,
    x: &VecField,
    p: &Point,
    vs: &[[f64; 3]],
    integrands: &[&ScalarField],
    t: f64,
    opts: &FlowOptions,
) -> Result<(Point, Vec<[f64; 3]>, Vec<f64>)> {
    opts.check(t)?;
    let nv = vs.len();
    let ni = integrands.len();
    let mut y0 = Vec::with_capacity(3 + 3 * nv + ni);
    y0.extend_from_slice(p);
    for v in vs {
        y0.extend_from_slice(v);
    }
    y0.extend(std::iter::repeat(0.0).take(ni));
    let jac = nv > 0 && needs_jacobian(model, x);
    let y = integrate(
        |_, y, dy| {
            let q = [y[0], y[1], y[2]];
            let xp = x.eval(&q);
            let vel = model.to_chart(&q, &xp);
            dy[..3].copy_from_slice(&vel);
            if nv > 0 {
                if jac {
                    let jm = variational_matrix(model, x, &q, &xp);
                    for n in 0..nv {
                        let o = 3 + 3 * n;
                        for k in 0..3 {
                            dy[o + k] = jm[k][0] * y[o] + jm[k][1] * y[o + 1] + jm[k][2] * y[o + 2];
                        }
                    }
                } else {
                    dy[3..3 + 3 * nv].iter_mut().for_each(|d| *d = 0.0);
                }
            }
            for (i, f) in integrands.iter().enumerate() {
                dy[3 + 3 * nv + i] = f.eval(&q);
            }
        },
        &y0,
        t,
        &opts.tol,
    )?;
    let end = [y[0], y[1], y[2]];
    let out: Vec<[f64; 3]> = (0..nv)
        .map(|n| [y[3 + 3 * n], y[4 + 3 * n], y[5 + 3 * n]])
        .collect();
    let ints = y[3 + 3 * nv..].to_vec();
    Ok((end, out, ints))
}

/// `φ^t(p)` on the cover (no reduction).
pub fn flow_cover(model: &FrameModel, x: &VecField, p: &Point, t: f64, opts: &FlowOptions) -> Result<Point> {
    Ok(push_cover(model, x, p, &[], &[], t, opts)?.0)
}

/// `φ^t(p)`, re-entered into the fundamental domain.
pub fn flow_map(model: &FrameModel, x: &VecField, p: &Point, t: f64, opts: &FlowOptions) -> Result<Point> {
    let q = flow_cover(model, x, p, t, opts)?;
    Ok(model.lattice().reduce(&q).0)
}

/// `(φ^t(p), φ^t_* v)` with the end point re-entered into the fundamental
/// domain and the vector carried through the gluing.
pub fn tangent_push(
    model: &FrameModel,
    x: &VecField,
    p: &Point,
    v: &[f64; 3],
    t: f64,
    opts: &FlowOptions,
) -> Result<(Point, [f64; 3])> {
    let (q, vs, _) = push_cover(model, x, p, &[*v], &[], t, opts)?;
    let (rep, m) = model.lattice().reduce(&q);
    Ok((rep, model.lattice().vector_to_rep(m, vs[0])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Metric;
    use crate::lattice::{AxisRule, Lattice};
    use std::f64::consts::PI;

    fn cat() -> FrameModel {
        FrameModel::coordinate(
            "cat",
            Lattice::new(
                [0.0; 3],
                [1.0; 3],
                [8; 3],
                [AxisRule::Periodic, AxisRule::Periodic, AxisRule::Monodromy([[2, 1], [1, 1]])],
            )
            .unwrap(),
            Metric::frame_orthonormal(),
        )
    }

    #[test]
    fn suspension_flow_reenters_through_monodromy() {
        let m = cat();
        let x = VecField::constant([0.0, 0.0, 1.0]);
        let q = flow_map(&m, &x, &[0.1, 0.3, 0.0], 1.0, &FlowOptions::default()).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-10, "{q:?}");
        assert!((q[1] - 0.4).abs() < 1e-10);
        assert!(q[2].abs() < 1e-10);
    }

    #[test]
    fn zero_time_is_identity() {
        let m = cat();
        let x = VecField::constant([0.0, 0.0, 1.0]);
        let p = [0.2, 0.7, 0.4];
        assert_eq!(flow_map(&m, &x, &p, 0.0, &FlowOptions::default()).unwrap(), p);
    }

    #[test]
    fn horizon_is_enforced() {
        let m = cat();
        let x = VecField::constant([0.0, 0.0, 1.0]);
        let r = flow_map(&m, &x, &[0.0; 3], 100.0, &FlowOptions::default());
        assert!(matches!(r, Err(LabError::HorizonExceeded { .. })));
    }

    #[test]
    fn rotation_field_is_linearized_correctly() {
        // X = sin(2πz) ∂x: a vector ∂z picks up 2π cos(2πz) t ∂x
        let m = cat();
        let x = VecField::from_fn(|p| [(2.0 * PI * p[2]).sin(), 0.0, 0.0]);
        let (_, v) = tangent_push(&m, &x, &[0.1, 0.1, 0.0], &[0.0, 0.0, 1.0], 0.3, &FlowOptions::default())
            .unwrap();
        assert!((v[0] - 2.0 * PI * 0.3).abs() < 1e-7, "{v:?}");
        assert!((v[2] - 1.0).abs() < 1e-12);
    }
}
