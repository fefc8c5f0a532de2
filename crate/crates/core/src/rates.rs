//! Expansion rates, flow classification and time-averaged metrics.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::bracket_at;
use crate::error::{LabError, Result};
use crate::field::{GridData, Point, ScalarField, VecField};
use crate::flow::{push_cover, FlowOptions};
use crate::frame::{FrameModel, Mat3, Metric};
use crate::lattice::Tensor;
use crate::splitting::{decompose_in, project_eta, Splitting};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RateMethod {
    /// From `[X, e_u]` and `[X, e_s]` decomposed on `(e_s, e_u, X)`.
    Bracket,
    /// Centred logarithmic difference of pushed lengths with step `h`.
    FiniteTime { h: f64 },
}

impl RateMethod {
    pub fn finite_time() -> Self {
        RateMethod::FiniteTime { h: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateSample {
    pub point: Point,
    pub r_s: f64,
    pub r_u: f64,
    pub q_s: f64,
    pub q_u: f64,
}

#[derive(Debug, Clone)]
pub struct Rates {
    pub r_s: ScalarField,
    pub r_u: ScalarField,
    pub q_s: ScalarField,
    pub q_u: ScalarField,
    pub method: RateMethod,
    pub metric_tag: String,
    /// Values at the lattice nodes.
    pub samples: Vec<RateSample>,
}

#[derive(Debug, Clone)]
pub struct RateOptions {
    /// Refuse bracket rates when the splitting's invariance residual exceeds
    /// this. Finite-time rates only read node values and are not gated.
    pub max_residual: f64,
    pub flow: FlowOptions,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            max_residual: 1e-2,
            flow: FlowOptions::default(),
        }
    }
}

fn bracket_sample(model: &FrameModel, x: &VecField, sp: &Splitting, p: &Point) -> RateSample {
    let basis = sp.basis(p);
    let bu = decompose_in(&basis, &bracket_at(model, x, &sp.e_u, p));
    let bs = decompose_in(&basis, &bracket_at(model, x, &sp.e_s, p));
    RateSample {
        point: *p,
        r_s: -bs[0],
        r_u: -bu[1],
        q_s: bs[2],
        q_u: bu[2],
    }
}

/// `(ln a(t), b(t))` where `φ^t_* v = a e + b X` with `e` unit in `η`.
fn pushed_parts(
    model: &FrameModel,
    x: &VecField,
    p: &Point,
    vs: &[[f64; 3]],
    t: f64,
    opts: &FlowOptions,
) -> Result<Vec<(f64, f64)>> {
    let (q, pushed, _) = push_cover(model, x, p, vs, &[], t, opts)?;
    let g = model.metric().gram(&q);
    let xq = x.eval(&q);
    let xx = Metric::inner_with(&g, &xq, &xq);
    Ok(pushed
        .iter()
        .map(|v| {
            let pv = project_eta(&g, &xq, v);
            (
                0.5 * Metric::inner_with(&g, &pv, &pv).ln(),
                Metric::inner_with(&g, v, &xq) / xx,
            )
        })
        .collect())
}

/// Finite-time rate and shear of the lines through `vs` at `p`, with one
/// Richardson step. Each entry is `(r, q)`.
pub fn finite_time_at(
    model: &FrameModel,
    x: &VecField,
    p: &Point,
    vs: &[[f64; 3]],
    h: f64,
    opts: &FlowOptions,
) -> Result<Vec<(f64, f64)>> {
    let diff = |h: f64| -> Result<Vec<(f64, f64)>> {
        let fw = pushed_parts(model, x, p, vs, h, opts)?;
        let bw = pushed_parts(model, x, p, vs, -h, opts)?;
        Ok(fw
            .iter()
            .zip(&bw)
            .map(|(f, b)| ((f.0 - b.0) / (2.0 * h), -(f.1 - b.1) / (2.0 * h)))
            .collect())
    };
    let coarse = diff(h)?;
    let fine = diff(0.5 * h)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| ((4.0 * f.0 - c.0) / 3.0, (4.0 * f.1 - c.1) / 3.0))
        .collect())
}

fn finite_sample(
    model: &FrameModel,
    x: &VecField,
    sp: &Splitting,
    p: &Point,
    h: f64,
    opts: &FlowOptions,
) -> Result<RateSample> {
    let g = model.metric().gram(p);
    let xp = x.eval(p);
    let unit = |v: [f64; 3]| crate::splitting::normalize(&g, &project_eta(&g, &xp, &v));
    let vs = [unit(sp.e_s.eval(p)), unit(sp.e_u.eval(p))];
    let r = finite_time_at(model, x, p, &vs, h, opts)?;
    Ok(RateSample {
        point: *p,
        r_s: r[0].0,
        r_u: r[1].0,
        q_s: r[0].1,
        q_u: r[1].1,
    })
}

pub(crate) fn scalar_from_nodes(model: &FrameModel, values: Vec<f64>) -> ScalarField {
    let first = values[0];
    if values.iter().all(|v| (v - first).abs() <= 1e-12 * (1.0 + first.abs())) {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        return ScalarField::constant(mean);
    }
    ScalarField::from_grid(
        Arc::new(GridData::from_values(model.lattice().clone(), Tensor::Scalar, values)),
        0,
    )
}

/// Expansion rates of the stable and unstable lines on the model grid.
pub fn expansion_rates(
    x: &VecField,
    splitting: &Splitting,
    model: &FrameModel,
    method: RateMethod,
    opts: &RateOptions,
) -> Result<Rates> {
    model.check_vector(x)?;
    if matches!(method, RateMethod::Bracket) && splitting.max_invariance_residual > opts.max_residual {
        return Err(LabError::SplittingResidual {
            residual: splitting.max_invariance_residual,
            tol: opts.max_residual,
        });
    }
    let nodes: Vec<Point> = model.lattice().nodes().collect();
    let samples: Vec<RateSample> = match method {
        RateMethod::Bracket => nodes
            .par_iter()
            .map(|p| bracket_sample(model, x, splitting, p))
            .collect(),
        RateMethod::FiniteTime { h } => nodes
            .par_iter()
            .map(|p| finite_sample(model, x, splitting, p, h, &opts.flow))
            .collect::<Result<Vec<_>>>()?,
    };
    let col = |f: fn(&RateSample) -> f64| scalar_from_nodes(model, samples.iter().map(f).collect());
    Ok(Rates {
        r_s: col(|s| s.r_s),
        r_u: col(|s| s.r_u),
        q_s: col(|s| s.q_s),
        q_u: col(|s| s.q_u),
        method,
        metric_tag: model.metric().tag().to_string(),
        samples,
    })
}

impl Rates {
    /// Rates given as fields, sampled at the model nodes.
    pub fn declared(model: &FrameModel, r_s: ScalarField, r_u: ScalarField) -> Rates {
        let samples = model
            .lattice()
            .nodes()
            .map(|p| RateSample {
                point: p,
                r_s: r_s.eval(&p),
                r_u: r_u.eval(&p),
                q_s: 0.0,
                q_u: 0.0,
            })
            .collect();
        Rates {
            r_s,
            r_u,
            q_s: ScalarField::zero(),
            q_u: ScalarField::zero(),
            method: RateMethod::Bracket,
            metric_tag: model.metric().tag().to_string(),
            samples,
        }
    }

    pub fn max_shear(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.q_s.abs().max(s.q_u.abs()))
            .fold(0.0, f64::max)
    }

    pub fn min_r_u(&self) -> f64 {
        self.samples.iter().map(|s| s.r_u).fold(f64::INFINITY, f64::min)
    }

    pub fn max_r_s(&self) -> f64 {
        self.samples.iter().map(|s| s.r_s).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Anosov,
    ProjectivelyAnosov,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    /// `inf (r_u - r_s)`.
    pub projective_margin: f64,
    /// `min(inf r_u, inf -r_s)`.
    pub anosov_margin: f64,
    pub classification: Classification,
    pub tol: f64,
    /// Node where `r_u` is smallest.
    pub weakest_unstable: Point,
}

pub fn classify_flow(rates: &Rates, tol: f64) -> Verdict {
    let mut proj = f64::INFINITY;
    let mut an = f64::INFINITY;
    let mut weakest = (f64::INFINITY, [0.0; 3]);
    for s in &rates.samples {
        proj = proj.min(s.r_u - s.r_s);
        an = an.min(s.r_u).min(-s.r_s);
        if s.r_u < weakest.0 {
            weakest = (s.r_u, s.point);
        }
    }
    let classification = if an > tol {
        Classification::Anosov
    } else if proj > tol {
        Classification::ProjectivelyAnosov
    } else {
        Classification::Inconclusive
    };
    Verdict {
        projective_margin: proj,
        anosov_margin: an,
        classification,
        tol,
        weakest_unstable: weakest.1,
    }
}

/// A time-averaged metric together with its flow-derivative check.
#[derive(Debug, Clone)]
pub struct AveragedMetric {
    pub metric: Metric,
    /// Largest disagreement, over the check points, between the finite
    /// difference of the metric along the flow and `(φ^{T*}g - g)/T`.
    pub lie_residual: f64,
}

fn sym_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

fn pullback(g: &Mat3, d: &[[f64; 3]; 3]) -> Mat3 {
    // d[n] is the push of the n-th frame vector
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = Metric::inner_with(g, &d[i], &d[j]);
        }
    }
    out
}

fn average_at(model: &FrameModel, x: &VecField, g: &Metric, p: &Point, t: f64, opts: &FlowOptions) -> Result<Mat3> {
    let e = crate::frame::IDENTITY;
    // integrate position, tangent flow and the six metric entries together
    let mut y0 = Vec::with_capacity(18);
    y0.extend_from_slice(p);
    for v in &e {
        y0.extend_from_slice(v);
    }
    y0.extend([0.0; 6]);
    let y = crate::ode::integrate(
        |_, y, dy| {
            let q = [y[0], y[1], y[2]];
            let xp = x.eval(&q);
            dy[..3].copy_from_slice(&model.to_chart(&q, &xp));
            let jm = crate::flow::variational_matrix(model, x, &q, &xp);
            let mut d = [[0.0; 3]; 3];
            for n in 0..3 {
                for k in 0..3 {
                    d[n][k] = y[3 + 3 * n + k];
                    dy[3 + 3 * n + k] = (0..3).map(|j| jm[k][j] * y[3 + 3 * n + j]).sum();
                }
            }
            let pb = pullback(&g.gram(&q), &d);
            for i in 0..3 {
                for j in i..3 {
                    dy[12 + sym_index(i, j)] = pb[i][j];
                }
            }
        },
        &y0,
        t,
        &opts.tol,
    )
    .map_err(|e| LabError::Quadrature(format!("metric average did not converge: {e}")))?;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = y[12 + sym_index(i, j)] / t;
        }
    }
    Ok(out)
}

/// `(1/T) ∫₀^T φ^{t*} g dt`, evaluated on demand. The flow derivative of the
/// result is checked at the given points against `(φ^{T*}g - g)/T`.
pub fn averaged_metric(
    g: &Metric,
    x: &VecField,
    t: f64,
    model: &FrameModel,
    check_points: &[Point],
    opts: &FlowOptions,
) -> Result<AveragedMetric> {
    if !(t >= 0.0) {
        return Err(LabError::InvalidArgument("averaging time must be non-negative".into()));
    }
    if t == 0.0 {
        return Ok(AveragedMetric {
            metric: g.clone(),
            lie_residual: 0.0,
        });
    }
    let tag = format!("{}-averaged-{t}", g.tag());
    let (m, xx, gg, o) = (model.clone(), x.clone(), g.clone(), *opts);
    let metric = Metric::from_fn(tag, move |p| {
        average_at(&m, &xx, &gg, p, t, &o).unwrap_or([[f64::NAN; 3]; 3])
    });
    let e = crate::frame::IDENTITY;
    let mut lie_residual = 0.0f64;
    for p in check_points {
        let s = 1e-3;
        let at = |tau: f64| -> Result<Mat3> {
            let (q, d, _) = push_cover(model, x, p, &e, &[], tau, opts)?;
            let avg = average_at(model, x, g, &q, t, opts)?;
            Ok(pullback(&avg, &[d[0], d[1], d[2]]))
        };
        let (fp, fm) = (at(s)?, at(-s)?);
        let (q, d, _) = push_cover(model, x, p, &e, &[], t, opts)?;
        let far = pullback(&g.gram(&q), &[d[0], d[1], d[2]]);
        let here = g.gram(p);
        for i in 0..3 {
            for j in 0..3 {
                let fd = (fp[i][j] - fm[i][j]) / (2.0 * s);
                let exact = (far[i][j] - here[i][j]) / t;
                lie_residual = lie_residual.max((fd - exact).abs() / (1.0 + exact.abs()));
            }
        }
    }
    if !lie_residual.is_finite() {
        return Err(LabError::Quadrature("averaged metric is not finite".into()));
    }
    Ok(AveragedMetric {
        metric,
        lie_residual,
    })
}

/// `f X` for a positive function `f`.
pub fn reparametrize(x: &VecField, f: &ScalarField) -> Result<VecField> {
    Ok(x.scale(f))
}
