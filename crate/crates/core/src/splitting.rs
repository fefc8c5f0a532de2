//! Stable and unstable directions by iterating the tangent flow.
//!
//! The quotient `TM/⟨X⟩` is represented by the metric-orthogonal plane
//! field `η = X^⊥`. The unstable line at `p` is the limit of generic seeds
//! pushed forward from `φ^{-T}(p)`; the stable line comes from time
//! reversal. Seeds live on the closed manifold and are lifted to the cover.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::field::{det3, norm, GridData, Point, ScalarField, VecField};
use crate::flow::{push_cover, FlowOptions};
use crate::frame::{FrameModel, Metric};
use crate::lattice::Tensor;

#[derive(Debug, Clone)]
pub struct SplittingParams {
    /// Iteration time; `None` doubles from 2 until the lines settle.
    pub horizon: Option<f64>,
    /// Line change between `T/2` and `T` accepted as converged (radians).
    pub tol: f64,
    pub max_horizon: f64,
    pub flow: FlowOptions,
}

impl Default for SplittingParams {
    fn default() -> Self {
        SplittingParams {
            horizon: None,
            tol: 1e-6,
            max_horizon: 64.0,
            flow: FlowOptions::default(),
        }
    }
}

/// Unit sections `e_s`, `e_u` of `η` spanning the stable and unstable lines,
/// with `(e_s, e_u, X)` positively oriented.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub e_s: VecField,
    pub e_u: VecField,
    pub x: VecField,
    pub horizon: f64,
    /// Largest angle between limits of different seeds.
    pub seed_disagreement: f64,
    /// Largest line change between horizons `T/2` and `T`.
    pub convergence: f64,
    /// Angle drift of the lines under the unit-time flow, per node.
    pub invariance_residual: ScalarField,
    pub max_invariance_residual: f64,
    /// Smallest `|det(e_s, e_u, X)|` relative to the metric volume and `|X|`.
    pub min_independence: f64,
    pub metric_tag: String,
}

const SEEDS: [[f64; 3]; 3] = [
    [1.0, 0.3183, 0.1411],
    [-0.2718, 1.0, 0.4142],
    [0.5772, -0.6931, 1.0],
];

/// Length of one tangent-map chunk.
const CHUNK: f64 = 1.0;

/// Metric-orthogonal projection onto `X^⊥`.
pub fn project_eta(g: &[[f64; 3]; 3], xp: &[f64; 3], v: &[f64; 3]) -> [f64; 3] {
    let k = Metric::inner_with(g, v, xp) / Metric::inner_with(g, xp, xp);
    [v[0] - k * xp[0], v[1] - k * xp[1], v[2] - k * xp[2]]
}

pub fn normalize(g: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    let n = Metric::inner_with(g, v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Angle between the lines spanned by two unit vectors.
pub fn line_angle(g: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = |s: f64| {
        let w = [a[0] - s * b[0], a[1] - s * b[1], a[2] - s * b[2]];
        Metric::inner_with(g, &w, &w).sqrt()
    };
    let chord = d(1.0).min(d(-1.0)).min(2.0);
    2.0 * (0.5 * chord).asin()
}

struct LineEstimate {
    dir: [f64; 3],
    change: f64,
    disagreement: f64,
}

fn lifted_seeds(model: &FrameModel, q: &Point) -> Vec<[f64; 3]> {
    let (_, m) = model.lattice().reduce(q);
    SEEDS
        .iter()
        .map(|s| model.lattice().vector_from_rep(m, *s))
        .collect()
}

/// Tangent maps along the trajectory through `p`, chunk by chunk, in the
/// direction of `dir`: `maps[k]` carries vectors at `points[k]` to
/// `points[k + 1]`, both taken in the fundamental domain.
fn chunk_maps(
    model: &FrameModel,
    x: &VecField,
    p: &Point,
    t: f64,
    dir: f64,
    opts: &FlowOptions,
) -> Result<(Vec<Point>, Vec<[[f64; 3]; 3]>)> {
    let e = crate::frame::IDENTITY;
    let mut points = vec![*p];
    let mut maps = Vec::new();
    let mut left = t;
    while left > 1e-12 {
        let tau = left.min(CHUNK);
        // restart each chunk from the fundamental domain so cover
        // coordinates stay bounded
        let (q, cols, _) = push_cover(model, x, points.last().unwrap(), &e, &[], dir * tau, opts)?;
        let (rep, m) = model.lattice().reduce(&q);
        points.push(rep);
        maps.push([0, 1, 2].map(|i| model.lattice().vector_to_rep(m, cols[i])));
        left -= tau;
    }
    Ok((points, maps))
}

/// Transport seeds from `points[start]` back to `points[0]` by inverting the
/// chunk maps, then project to `η` and normalize.
fn transported(
    model: &FrameModel,
    x: &VecField,
    points: &[Point],
    maps: &[[[f64; 3]; 3]],
    start: usize,
) -> Vec<Option<[f64; 3]>> {
    let seeds = lifted_seeds(model, &points[start]);
    let p = points[0];
    let g = model.metric().gram(&p);
    let xp = x.eval(&p);
    seeds
        .into_iter()
        .map(|mut v| {
            for k in (0..start).rev() {
                v = decompose_in(&maps[k], &v);
                let n = norm(&v);
                v = [v[0] / n, v[1] / n, v[2] / n];
            }
            let pv = project_eta(&g, &xp, &v);
            let scale = Metric::inner_with(&g, &v, &v).sqrt();
            let n = Metric::inner_with(&g, &pv, &pv).sqrt();
            if n > 1e-9 * scale && n.is_finite() {
                Some(normalize(&g, &pv))
            } else {
                None
            }
        })
        .collect()
}

fn estimate_line(
    model: &FrameModel,
    x: &VecField,
    p: &Point,
    t: f64,
    unstable: bool,
    opts: &FlowOptions,
) -> Result<LineEstimate> {
    let dir = if unstable { -1.0 } else { 1.0 };
    let (points, maps) = chunk_maps(model, x, p, t, dir, opts)?;
    let full = transported(model, x, &points, &maps, maps.len());
    let part = transported(model, x, &points, &maps, maps.len() / 2);
    let g = model.metric().gram(p);
    let valid: Vec<[f64; 3]> = full.iter().flatten().cloned().collect();
    let Some(first) = valid.first().cloned() else {
        return Err(LabError::Degenerate {
            point: *p,
            msg: "every seed collapsed onto the flow direction".into(),
        });
    };
    let disagreement = valid
        .iter()
        .map(|v| line_angle(&g, &first, v))
        .fold(0.0, f64::max);
    let change = part
        .iter()
        .flatten()
        .next()
        .map(|v| line_angle(&g, &first, v))
        .unwrap_or(f64::INFINITY);
    Ok(LineEstimate {
        dir: first,
        change,
        disagreement,
    })
}

fn probe_nodes(model: &FrameModel) -> Vec<Point> {
    let l = model.lattice();
    let n = l.len();
    let count = 8.min(n);
    (0..count)
        .map(|k| l.node(l.unflat((k * n) / count + (k * 7919) % (n / count).max(1))))
        .collect()
}

fn choose_horizon(model: &FrameModel, x: &VecField, params: &SplittingParams) -> Result<f64> {
    if let Some(t) = params.horizon {
        return Ok(t);
    }
    let probes = probe_nodes(model);
    let mut t = 2.0;
    let mut history = Vec::new();
    loop {
        let worst = probes
            .par_iter()
            .map(|p| {
                let u = estimate_line(model, x, p, t, true, &params.flow)?;
                let s = estimate_line(model, x, p, t, false, &params.flow)?;
                Ok(u.change.max(s.change).max(u.disagreement).max(s.disagreement))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        history.push((t, worst));
        if worst < params.tol {
            return Ok(t);
        }
        if 2.0 * t > params.max_horizon {
            let diag: Vec<String> = history
                .iter()
                .map(|(t, w)| format!("T={t}: line change {w:.3e}"))
                .collect();
            return Err(LabError::NoConvergence(format!(
                "directions did not settle (possible failure of domination): {}",
                diag.join(", ")
            )));
        }
        t *= 2.0;
    }
}

/// Flip signs of a line field so neighbouring nodes agree, starting from the
/// first node. A sign conflict across the gluing means the line field is not
/// orientable.
fn orient_continuously(model: &FrameModel, data: &mut [f64]) -> Result<()> {
    let l = model.lattice().clone();
    let n = l.len();
    let mut sign = vec![0i8; n];
    let mut queue = VecDeque::new();
    sign[0] = 1;
    queue.push_back(0usize);
    let offsets: [[i64; 3]; 6] = [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ];
    let neighbour = |f: usize, o: &[i64; 3]| -> Option<(usize, i64)> {
        let idx = l.unflat(f);
        let j = [idx[0] as i64 + o[0], idx[1] as i64 + o[1], idx[2] as i64 + o[2]];
        l.resolve(j).map(|(node, m)| (l.flat(node[0], node[1], node[2]), m))
    };
    let vec_at = |data: &[f64], f: usize| [data[3 * f], data[3 * f + 1], data[3 * f + 2]];
    while let Some(f) = queue.pop_front() {
        let v = vec_at(data, f);
        let vs = [v[0] * sign[f] as f64, v[1] * sign[f] as f64, v[2] * sign[f] as f64];
        let p = l.node(l.unflat(f));
        let g = model.metric().gram(&p);
        for o in &offsets {
            let Some((nf, m)) = neighbour(f, o) else { continue };
            if sign[nf] != 0 {
                continue;
            }
            // neighbour's vector expressed at the cover position next to f
            let w = l.vector_from_rep(m, vec_at(data, nf));
            let d = Metric::inner_with(&g, &vs, &w);
            sign[nf] = if d >= 0.0 { 1 } else { -1 };
            queue.push_back(nf);
        }
    }
    for f in 0..n {
        if sign[f] < 0 {
            for c in 0..3 {
                data[3 * f + c] = -data[3 * f + c];
            }
        }
    }
    for f in 0..n {
        let v = vec_at(data, f);
        let p = l.node(l.unflat(f));
        let g = model.metric().gram(&p);
        for o in &offsets {
            let Some((nf, m)) = neighbour(f, o) else { continue };
            let w = l.vector_from_rep(m, vec_at(data, nf));
            if Metric::inner_with(&g, &v, &w) < 0.0 {
                return Err(LabError::Orientation(format!(
                    "line field flips sign across the gluing near {p:?}; it is not orientable"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn field_from_nodes(model: &FrameModel, data: Vec<f64>) -> VecField {
    let first = [data[0], data[1], data[2]];
    let uniform = data
        .chunks(3)
        .all(|c| (0..3).all(|i| (c[i] - first[i]).abs() <= 1e-10 * (1.0 + first[i].abs())));
    if uniform && model.lattice().monodromy().is_none() {
        let n = (data.len() / 3) as f64;
        let mut mean = [0.0; 3];
        for c in data.chunks(3) {
            for i in 0..3 {
                mean[i] += c[i] / n;
            }
        }
        return VecField::constant(mean);
    }
    VecField::from_grid(Arc::new(GridData::from_values(
        model.lattice().clone(),
        Tensor::Vector,
        data,
    )))
}

/// Independence of `(e_s, e_u, X)` at a point, normalized by the metric.
fn independence(g: &[[f64; 3]; 3], es: &[f64; 3], eu: &[f64; 3], xp: &[f64; 3]) -> f64 {
    let vol = {
        let m = nalgebra::Matrix3::from_fn(|i, j| g[i][j]);
        m.determinant().sqrt()
    };
    det3(es, eu, xp) * vol / Metric::inner_with(g, xp, xp).sqrt()
}

/// Compute the splitting of the flow of `x` on the grid of `model`.
pub fn compute_splitting(x: &VecField, model: &FrameModel, params: &SplittingParams) -> Result<Splitting> {
    model.check_vector(x)?;
    let t = choose_horizon(model, x, params)?;
    let l = model.lattice().clone();
    let nodes: Vec<Point> = l.nodes().collect();
    let lines = nodes
        .par_iter()
        .map(|p| {
            let u = estimate_line(model, x, p, t, true, &params.flow)?;
            let s = estimate_line(model, x, p, t, false, &params.flow)?;
            Ok((u, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eu_data = Vec::with_capacity(3 * nodes.len());
    let mut seed_disagreement = 0.0f64;
    let mut convergence = 0.0f64;
    for (u, s) in &lines {
        eu_data.extend_from_slice(&u.dir);
        seed_disagreement = seed_disagreement.max(u.disagreement).max(s.disagreement);
        convergence = convergence.max(u.change).max(s.change);
    }
    orient_continuously(model, &mut eu_data)?;
    let mut es_data = Vec::with_capacity(3 * nodes.len());
    let mut min_independence = f64::INFINITY;
    for (f, (_, s)) in lines.iter().enumerate() {
        let p = nodes[f];
        let eu = [eu_data[3 * f], eu_data[3 * f + 1], eu_data[3 * f + 2]];
        let xp = x.eval(&p);
        let g = model.metric().gram(&p);
        let mut es = s.dir;
        let mut ind = independence(&g, &es, &eu, &xp);
        if ind < 0.0 {
            es = es.map(|c| -c);
            ind = -ind;
        }
        min_independence = min_independence.min(ind);
        es_data.extend_from_slice(&es);
    }
    if min_independence < 1e-6 {
        return Err(LabError::Degenerate {
            point: nodes[0],
            msg: format!("stable and unstable lines nearly coincide ({min_independence:.3e})"),
        });
    }
    let e_u = field_from_nodes(model, eu_data);
    let e_s = field_from_nodes(model, es_data);
    finish(model, x, e_s, e_u, t, seed_disagreement, convergence, min_independence, &params.flow)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &FrameModel,
    x: &VecField,
    e_s: VecField,
    e_u: VecField,
    horizon: f64,
    seed_disagreement: f64,
    convergence: f64,
    min_independence: f64,
    opts: &FlowOptions,
) -> Result<Splitting> {
    let l = model.lattice().clone();
    let nodes: Vec<Point> = l.nodes().collect();
    let residuals = nodes
        .par_iter()
        .map(|p| {
            let mut worst = 0.0f64;
            for (field, t) in [(&e_u, 1.0), (&e_s, -1.0)] {
                let (q, v, _) = push_cover(model, x, p, &[field.eval(p)], &[], t, opts)?;
                let g = model.metric().gram(&q);
                let xq = x.eval(&q);
                let pv = normalize(&g, &project_eta(&g, &xq, &v[0]));
                worst = worst.max(line_angle(&g, &pv, &field.eval(&q)));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_invariance_residual = residuals.iter().cloned().fold(0.0, f64::max);
    let invariance_residual = ScalarField::from_grid(
        Arc::new(GridData::from_values(l, Tensor::Scalar, residuals)),
        0,
    );
    Ok(Splitting {
        e_s,
        e_u,
        x: x.clone(),
        horizon,
        seed_disagreement,
        convergence,
        invariance_residual,
        max_invariance_residual,
        min_independence,
        metric_tag: model.metric().tag().to_string(),
    })
}

impl Splitting {
    /// A splitting from declared ground truth; residuals are still measured.
    pub fn declared(model: &FrameModel, x: &VecField, e_s: VecField, e_u: VecField) -> Result<Splitting> {
        let l = model.lattice();
        let mut min_ind = f64::INFINITY;
        for p in l.nodes() {
            let g = model.metric().gram(&p);
            min_ind = min_ind.min(independence(&g, &e_s.eval(&p), &e_u.eval(&p), &x.eval(&p)));
        }
        if min_ind <= 0.0 {
            return Err(LabError::Orientation(
                "declared (e_s, e_u, X) is not positively oriented".into(),
            ));
        }
        finish(model, x, e_s, e_u, 0.0, 0.0, 0.0, min_ind, &FlowOptions::default())
    }

    /// Frame coefficients of `(e_s, e_u, X)` at a point.
    pub fn basis(&self, p: &Point) -> [[f64; 3]; 3] {
        [self.e_s.eval(p), self.e_u.eval(p), self.x.eval(p)]
    }

    /// Coefficients of `v` on the basis `(e_s, e_u, X)` at `p`.
    pub fn decompose(&self, p: &Point, v: &[f64; 3]) -> [f64; 3] {
        decompose_in(&self.basis(p), v)
    }

    /// The same lines with the labels exchanged.
    pub fn swapped(&self) -> Splitting {
        let mut s = self.clone();
        std::mem::swap(&mut s.e_s, &mut s.e_u);
        s
    }
}

/// Solve `v = a e0 + b e1 + c e2` by Cramer's rule.
pub fn decompose_in(b: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    let d = det3(&b[0], &b[1], &b[2]);
    [
        det3(v, &b[1], &b[2]) / d,
        det3(&b[0], v, &b[2]) / d,
        det3(&b[0], &b[1], v) / d,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_round_trip() {
        let b = [[1.0, 0.2, 0.0], [0.3, 1.0, 0.1], [0.0, 0.4, 1.0]];
        let v = [0.7, -1.1, 2.0];
        let c = decompose_in(&b, &v);
        for k in 0..3 {
            let r: f64 = (0..3).map(|i| c[i] * b[i][k]).sum();
            assert!((r - v[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn line_angle_ignores_sign() {
        let g = crate::frame::IDENTITY;
        let a = [1.0, 0.0, 0.0];
        let b = [-1.0, 0.0, 0.0];
        assert!(line_angle(&g, &a, &b) < 1e-15);
        let c = [0.0, 1.0, 0.0];
        assert!((line_angle(&g, &a, &c) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn projection_removes_flow_component() {
        let g = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let x = [1.0, 1.0, 0.0];
        let v = project_eta(&g, &x, &[1.0, 0.0, 0.0]);
        assert!(Metric::inner_with(&g, &v, &x).abs() < 1e-15);
    }
}
