//! Frame models: a fundamental domain with identifications, a global frame
//! `(f1, f2, f3)` with its structure constants, and a base metric.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::expr::Expr;
use crate::field::{OneForm, Point, ScalarField, VecField};
use crate::lattice::{AxisRule, Lattice};

pub type Mat3 = [[f64; 3]; 3];
/// `c[k][i][j]`: the `f_k` component of `[f_i, f_j]`.
pub type Structure = [[[f64; 3]; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Frame is the coordinate frame; structure constants vanish.
    CoordinateGrid,
    /// Frame with constant structure constants, expressed in a chart.
    HomogeneousFrame,
}

type MatFn = dyn Fn(&Point) -> Mat3 + Send + Sync;

/// A Riemannian metric by its Gram matrix on the frame.
#[derive(Clone)]
pub struct Metric {
    tag: String,
    gram: Arc<MatFn>,
    constant: Option<Mat3>,
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Metric({})", self.tag)
    }
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl Metric {
    /// The metric declaring the frame orthonormal.
    pub fn frame_orthonormal() -> Self {
        Metric {
            tag: "frame-orthonormal".into(),
            gram: Arc::new(|_| IDENTITY),
            constant: Some(IDENTITY),
        }
    }

    pub fn from_fn<F>(tag: impl Into<String>, f: F) -> Self
    where
        F: Fn(&Point) -> Mat3 + Send + Sync + 'static,
    {
        Metric {
            tag: tag.into(),
            gram: Arc::new(f),
            constant: None,
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn gram(&self, p: &Point) -> Mat3 {
        match self.constant {
            Some(g) => g,
            None => (self.gram)(p),
        }
    }

    pub fn is_frame_orthonormal(&self) -> bool {
        self.constant == Some(IDENTITY)
    }

    pub fn inner_with(g: &Mat3, u: &[f64; 3], v: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += u[i] * g[i][j] * v[j];
            }
        }
        s
    }

    pub fn inner(&self, p: &Point, u: &[f64; 3], v: &[f64; 3]) -> f64 {
        Self::inner_with(&self.gram(p), u, v)
    }

    pub fn norm(&self, p: &Point, v: &[f64; 3]) -> f64 {
        self.inner(p, v, v).sqrt()
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// The stage on which all fields live.
#[derive(Clone)]
pub struct FrameModel {
    name: String,
    kind: ModelKind,
    lattice: Arc<Lattice>,
    structure: Structure,
    legs: Option<Arc<MatFn>>,
    metric: Metric,
    id: u64,
}

impl fmt::Debug for FrameModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameModel")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("n", &self.lattice.n)
            .field("metric", &self.metric)
            .finish()
    }
}

pub fn jacobi_residual(c: &Structure) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for m in 0..3 {
                        s += c[m][i][j] * c[l][m][k]
                            + c[m][j][k] * c[l][m][i]
                            + c[m][k][i] * c[l][m][j];
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    worst
}

impl FrameModel {
    /// A model whose frame is the coordinate frame of the lattice.
    pub fn coordinate(name: impl Into<String>, lattice: Lattice, metric: Metric) -> Self {
        FrameModel {
            name: name.into(),
            kind: ModelKind::CoordinateGrid,
            lattice: Arc::new(lattice),
            structure: [[[0.0; 3]; 3]; 3],
            legs: None,
            metric,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// A model with constant structure constants. `legs(p)[i]` are the chart
    /// components of `f_i`; they are checked against the declared constants.
    pub fn homogeneous<F>(
        name: impl Into<String>,
        lattice: Lattice,
        structure: Structure,
        legs: F,
        metric: Metric,
    ) -> Result<Self>
    where
        F: Fn(&Point) -> Mat3 + Send + Sync + 'static,
    {
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    if structure[k][i][j] != -structure[k][j][i] {
                        return Err(LabError::InvalidModel(format!(
                            "structure constants not antisymmetric at ({k},{i},{j})"
                        )));
                    }
                }
            }
        }
        let jr = jacobi_residual(&structure);
        if jr > 1e-12 {
            return Err(LabError::InvalidModel(format!("Jacobi residual {jr:e}")));
        }
        let model = FrameModel {
            name: name.into(),
            kind: ModelKind::HomogeneousFrame,
            lattice: Arc::new(lattice),
            structure,
            legs: Some(Arc::new(legs)),
            metric,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        };
        let r = model.leg_bracket_residual();
        if r > 1e-6 {
            return Err(LabError::InvalidModel(format!(
                "frame legs do not satisfy the declared structure constants (residual {r:e})"
            )));
        }
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn with_metric(&self, metric: Metric) -> Self {
        let mut m = self.clone();
        m.metric = metric;
        m
    }

    /// Same model sampled at a different resolution.
    pub fn with_resolution(&self, n: [usize; 3]) -> Result<Self> {
        let l = &self.lattice;
        let mut m = self.clone();
        m.lattice = Arc::new(Lattice::new(l.lo, l.hi, n, l.rules)?);
        Ok(m)
    }

    /// Default tolerance: 1e-6 on homogeneous frames, `10 h²` on grids.
    pub fn default_tol(&self) -> f64 {
        match self.kind {
            ModelKind::HomogeneousFrame => 1e-6,
            ModelKind::CoordinateGrid => 10.0 * self.lattice.max_spacing().powi(2),
        }
    }

    /// Chart components of the frame legs at `p`.
    pub fn legs(&self, p: &Point) -> Mat3 {
        match &self.legs {
            Some(l) => l(p),
            None => crate::frame::IDENTITY,
        }
    }

    /// Conversion factor from frame-volume densities to chart-volume densities.
    pub fn volume_factor(&self, p: &Point) -> f64 {
        let l = self.legs(p);
        1.0 / crate::field::det3(&l[0], &l[1], &l[2])
    }

    /// Chart velocity of a frame-coefficient vector.
    pub fn to_chart(&self, p: &Point, v: &[f64; 3]) -> [f64; 3] {
        match &self.legs {
            None => *v,
            Some(l) => {
                let l = l(p);
                let mut out = [0.0; 3];
                for i in 0..3 {
                    for a in 0..3 {
                        out[a] += v[i] * l[i][a];
                    }
                }
                out
            }
        }
    }

    /// Derivative of `g` along the frame vector `f_i` at `p`.
    pub fn frame_derivative(&self, g: &ScalarField, i: usize, p: &Point) -> f64 {
        if g.as_constant().is_some() {
            return 0.0;
        }
        match &self.legs {
            None => g.partial(p, i),
            Some(l) => {
                let l = l(p);
                let mut s = 0.0;
                for a in 0..3 {
                    if l[i][a] != 0.0 {
                        s += l[i][a] * g.partial(p, a);
                    }
                }
                s
            }
        }
    }

    /// Derivative of `g` along the frame-coefficient vector `v` at `p`.
    pub fn directional(&self, g: &ScalarField, v: &[f64; 3], p: &Point) -> f64 {
        if g.as_constant().is_some() {
            return 0.0;
        }
        let c = self.to_chart(p, v);
        let mut s = 0.0;
        for a in 0..3 {
            if c[a] != 0.0 {
                s += c[a] * g.partial(p, a);
            }
        }
        s
    }

    /// Residual of the chart brackets of the legs against the declared
    /// constants, sampled at the lattice corners and centre.
    pub fn leg_bracket_residual(&self) -> f64 {
        let Some(legs) = &self.legs else { return 0.0 };
        let l = &self.lattice;
        let mut pts = vec![[
            0.5 * (l.lo[0] + l.hi[0]),
            0.5 * (l.lo[1] + l.hi[1]),
            0.5 * (l.lo[2] + l.hi[2]),
        ]];
        pts.push(l.node([0, 0, 0]));
        pts.push(l.node([l.n[0] - 1, l.n[1] - 1, l.n[2] - 1]));
        let d = 1e-4;
        let mut worst = 0.0f64;
        for p in pts {
            let lp = legs(&p);
            // J[i][a][b] = ∂_b (f_i)^a
            let mut jac = [[[0.0; 3]; 3]; 3];
            for b in 0..3 {
                let mut qp = p;
                let mut qm = p;
                qp[b] += d;
                qm[b] -= d;
                let (lpp, lmm) = (legs(&qp), legs(&qm));
                for i in 0..3 {
                    for a in 0..3 {
                        jac[i][a][b] = (lpp[i][a] - lmm[i][a]) / (2.0 * d);
                    }
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    for a in 0..3 {
                        let mut br = 0.0;
                        for b in 0..3 {
                            br += lp[i][b] * jac[j][a][b] - lp[j][b] * jac[i][a][b];
                        }
                        let mut decl = 0.0;
                        for k in 0..3 {
                            decl += self.structure[k][i][j] * lp[k][a];
                        }
                        worst = worst.max((br - decl).abs());
                    }
                }
            }
        }
        worst
    }

    /// Reject grid-backed fields sampled on an incompatible lattice.
    pub fn check_scalar(&self, f: &ScalarField) -> Result<()> {
        if let Some((g, _)) = f.grid() {
            let l = g.lattice();
            if !Arc::ptr_eq(l, &self.lattice)
                && (l.n != self.lattice.n
                    || l.lo != self.lattice.lo
                    || l.hi != self.lattice.hi
                    || l.rules != self.lattice.rules)
            {
                return Err(LabError::ModelMismatch(format!(
                    "field sampled on a {:?} lattice, model '{}' uses {:?}",
                    l.n, self.name, self.lattice.n
                )));
            }
        }
        Ok(())
    }

    pub fn check_vector(&self, v: &VecField) -> Result<()> {
        v.coeffs().iter().try_for_each(|c| self.check_scalar(c))
    }

    pub fn check_form(&self, a: &OneForm) -> Result<()> {
        a.coeffs().iter().try_for_each(|c| self.check_scalar(c))
    }

    /// Pairs of identified boundary points `(p, q, m)`: `p` lies on an upper
    /// face and is glued to `q` on the lower face through monodromy power `m`.
    fn boundary_pairs(&self) -> Vec<(Point, Point, i64)> {
        let l = &self.lattice;
        let mut out = Vec::new();
        let s = 7usize;
        for a in 0..3 {
            if l.rules[a] == AxisRule::Open {
                continue;
            }
            for u in 0..s {
                for v in 0..s {
                    let fu = (u as f64 + 0.37) / s as f64;
                    let fv = (v as f64 + 0.61) / s as f64;
                    let mut p = [0.0; 3];
                    let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                    p[a] = l.hi[a];
                    p[b] = l.lo[b] + fu * (l.hi[b] - l.lo[b]);
                    p[c] = l.lo[c] + fv * (l.hi[c] - l.lo[c]);
                    let (q, m) = l.reduce(&p);
                    out.push((p, q, m));
                }
            }
        }
        out
    }

    /// Largest disagreement of a scalar field across identified faces.
    pub fn identification_residual(&self, f: &ScalarField) -> f64 {
        self.boundary_pairs()
            .iter()
            .map(|(p, q, _)| (f.eval(p) - f.eval(q)).abs())
            .fold(0.0, f64::max)
    }

    /// Same for a vector field, comparing components after the gluing map.
    pub fn identification_residual_vector(&self, v: &VecField) -> f64 {
        self.boundary_pairs()
            .iter()
            .map(|(p, q, m)| {
                let a = self.lattice.vector_to_rep(*m, v.eval(p));
                let b = v.eval(q);
                (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Serialized form of a frame model plus an optional flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub name: String,
    pub kind: ModelKind,
    pub domain: DomainSpec,
    #[serde(default)]
    pub resolution: Option<Resolution>,
    /// Nonzero structure constants `c^k_ij` with 1-based indices; the
    /// antisymmetric partner is implied.
    #[serde(default)]
    pub structure_constants: Vec<StructureEntry>,
    /// Chart components of each frame leg (homogeneous kind).
    #[serde(default)]
    pub legs: Option<[[String; 3]; 3]>,
    /// Gram matrix of the metric on the frame; identity when absent.
    #[serde(default)]
    pub metric: Option<[[String; 3]; 3]>,
    /// Frame coefficients of the flow generator.
    #[serde(default)]
    pub flow: Option<[String; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub axes: [AxisRule; 3],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis([usize; 3]),
}

impl Resolution {
    pub fn per_axis(self) -> [usize; 3] {
        match self {
            Resolution::Uniform(n) => [n; 3],
            Resolution::PerAxis(n) => n,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureEntry {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

fn parse_matrix(m: &[[String; 3]; 3]) -> Result<[[Expr; 3]; 3]> {
    let row = |r: &[String; 3]| -> Result<[Expr; 3]> {
        Ok([Expr::parse(&r[0])?, Expr::parse(&r[1])?, Expr::parse(&r[2])?])
    };
    Ok([row(&m[0])?, row(&m[1])?, row(&m[2])?])
}

fn eval_matrix(m: &[[Expr; 3]; 3], p: &Point) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[i][j].eval(p);
        }
    }
    out
}

impl ModelDocument {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Build the model and its flow generator (if declared).
    pub fn build(&self, resolution: Option<[usize; 3]>) -> Result<(FrameModel, Option<VecField>)> {
        let n = resolution
            .or(self.resolution.map(Resolution::per_axis))
            .unwrap_or([16; 3]);
        let lattice = Lattice::new(self.domain.lo, self.domain.hi, n, self.domain.axes)?;
        let metric = match &self.metric {
            None => Metric::frame_orthonormal(),
            Some(m) => {
                let e = parse_matrix(m)?;
                let probe = eval_matrix(&e, &lattice.node([0, 0, 0]));
                for i in 0..3 {
                    for j in 0..3 {
                        if (probe[i][j] - probe[j][i]).abs() > 1e-12 {
                            return Err(LabError::InvalidModel("metric is not symmetric".into()));
                        }
                    }
                }
                Metric::from_fn("document", move |p| eval_matrix(&e, p))
            }
        };
        let mut c: Structure = [[[0.0; 3]; 3]; 3];
        for e in &self.structure_constants {
            if !(1..=3).contains(&e.k) || !(1..=3).contains(&e.i) || !(1..=3).contains(&e.j) {
                return Err(LabError::InvalidModel("structure index out of range".into()));
            }
            if e.i == e.j && e.value != 0.0 {
                return Err(LabError::InvalidModel("c^k_ii must vanish".into()));
            }
            c[e.k - 1][e.i - 1][e.j - 1] = e.value;
            c[e.k - 1][e.j - 1][e.i - 1] = -e.value;
        }
        let model = match self.kind {
            ModelKind::CoordinateGrid => {
                if c.iter().flatten().flatten().any(|v| *v != 0.0) {
                    return Err(LabError::InvalidModel(
                        "coordinate models have vanishing structure constants".into(),
                    ));
                }
                FrameModel::coordinate(&self.name, lattice, metric)
            }
            ModelKind::HomogeneousFrame => {
                let legs = match &self.legs {
                    Some(l) => parse_matrix(l)?,
                    None => parse_matrix(&[
                        ["1".into(), "0".into(), "0".into()],
                        ["0".into(), "1".into(), "0".into()],
                        ["0".into(), "0".into(), "1".into()],
                    ])?,
                };
                FrameModel::homogeneous(&self.name, lattice, c, move |p| eval_matrix(&legs, p), metric)?
            }
        };
        let flow = match &self.flow {
            None => None,
            Some(f) => {
                let e = [Expr::parse(&f[0])?, Expr::parse(&f[1])?, Expr::parse(&f[2])?];
                let v = VecField::new(e.map(|e| {
                    if e.is_constant() {
                        ScalarField::constant(e.eval(&[0.0; 3]))
                    } else {
                        ScalarField::from_fn(move |p| e.eval(p))
                    }
                }));
                let r = model.identification_residual_vector(&v);
                if r > 1e-10 {
                    return Err(LabError::InvalidModel(format!(
                        "flow is not compatible with the identifications (residual {r:e})"
                    )));
                }
                Some(v)
            }
        };
        Ok((model, flow))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_of_sl2_vanishes() {
        let mut c: Structure = [[[0.0; 3]; 3]; 3];
        c[2][0][1] = 2.0;
        c[2][1][0] = -2.0;
        c[0][0][2] = -1.0;
        c[0][2][0] = 1.0;
        c[1][1][2] = 1.0;
        c[1][2][1] = -1.0;
        assert_eq!(jacobi_residual(&c), 0.0);
    }

    #[test]
    fn jacobi_detects_violation() {
        let mut c: Structure = [[[0.0; 3]; 3]; 3];
        c[2][0][1] = 1.0;
        c[2][1][0] = -1.0;
        c[0][0][2] = 1.0;
        c[0][2][0] = -1.0;
        assert!(jacobi_residual(&c) > 0.5);
    }

    #[test]
    fn document_round_trip() {
        let json = r#"{
            "name": "torus",
            "kind": "coordinate-grid",
            "domain": {"lo": [0,0,0], "hi": [1,1,1], "axes": ["periodic", "periodic", "periodic"]},
            "resolution": 8,
            "flow": ["sin(2*pi*z)", "cos(2*pi*z)", "0"]
        }"#;
        let doc = ModelDocument::from_json(json).unwrap();
        let (m, x) = doc.build(None).unwrap();
        assert_eq!(m.lattice().n, [8; 3]);
        let x = x.unwrap();
        assert!((x.eval(&[0.0, 0.0, 0.25])[0] - 1.0).abs() < 1e-15);
        let again = serde_json::to_string(&doc).unwrap();
        assert!(ModelDocument::from_json(&again).is_ok());
    }

    #[test]
    fn document_rejects_incompatible_flow() {
        let json = r#"{
            "name": "bad",
            "kind": "coordinate-grid",
            "domain": {"lo": [0,0,0], "hi": [1,1,1], "axes": ["periodic", "periodic", "periodic"]},
            "flow": ["z", "0", "1"]
        }"#;
        let doc = ModelDocument::from_json(json).unwrap();
        assert!(doc.build(Some([4; 3])).is_err());
    }

    #[test]
    fn document_rejects_wrong_legs() {
        let json = r#"{
            "name": "bad",
            "kind": "homogeneous-frame",
            "domain": {"lo": [-1,-1,-1], "hi": [1,1,1], "axes": ["open", "open", "open"]},
            "structure_constants": [{"k": 3, "i": 1, "j": 2, "value": 1.0}],
            "resolution": 4
        }"#;
        let doc = ModelDocument::from_json(json).unwrap();
        assert!(doc.build(None).is_err());
    }
}
