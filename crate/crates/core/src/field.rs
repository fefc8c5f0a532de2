//! Scalar, vector and form fields with coefficients on a model frame.
//!
//! A [`ScalarField`] is either a constant, a callable on the universal
//! cover of the model, or a channel of sampled grid data interpolated with
//! Catmull-Rom tricubics. Callables must be equivariant under the model's
//! identifications; grid samples are made equivariant by the lattice.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rayon::prelude::*;

use crate::lattice::{Lattice, Tensor};

pub type Point = [f64; 3];

/// Default differencing step for callables.
pub const FN_STEP: f64 = 1e-3;

/// Sampled data on a lattice, one or three channels per node.
pub struct GridData {
    lattice: Arc<Lattice>,
    tensor: Tensor,
    data: Vec<f64>,
}

impl fmt::Debug for GridData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridData")
            .field("n", &self.lattice.n)
            .field("tensor", &self.tensor)
            .finish()
    }
}

fn catmull_rom(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        0.5 * (-s3 + 2.0 * s2 - s),
        0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
        0.5 * (-3.0 * s3 + 4.0 * s2 + s),
        0.5 * (s3 - s2),
    ]
}

impl GridData {
    /// Sample `f` at every node. `f` returns channel values in the
    /// coordinates of the node it is given.
    pub fn sample<F>(lattice: Arc<Lattice>, tensor: Tensor, f: F) -> Self
    where
        F: Fn(&Point) -> [f64; 3] + Sync,
    {
        let ch = tensor.channels();
        let data: Vec<f64> = (0..lattice.len())
            .into_par_iter()
            .flat_map_iter(|idx| {
                let v = f(&lattice.node(lattice.unflat(idx)));
                v.into_iter().take(ch)
            })
            .collect();
        GridData {
            lattice,
            tensor,
            data,
        }
    }

    pub fn from_values(lattice: Arc<Lattice>, tensor: Tensor, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), lattice.len() * tensor.channels());
        GridData {
            lattice,
            tensor,
            data,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn tensor(&self) -> Tensor {
        self.tensor
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn eval(&self, p: &Point) -> [f64; 3] {
        let l = &*self.lattice;
        let h = l.spacing();
        let mut base = [0i64; 3];
        let mut w = [[0.0; 4]; 3];
        let mut on_node = [false; 3];
        for a in 0..3 {
            let u = (p[a] - l.lo[a]) / h[a];
            let r = u.round();
            if (u - r).abs() < 1e-9 {
                base[a] = r as i64;
                on_node[a] = true;
            } else {
                let f = u.floor();
                base[a] = f as i64;
                w[a] = catmull_rom(u - f);
            }
        }
        let ch = self.tensor.channels();
        let mut out = [0.0; 3];
        let mut tmp = [0.0; 3];
        let range = |a: usize| -> std::ops::Range<i64> {
            if on_node[a] {
                0..1
            } else {
                -1..3
            }
        };
        for di in range(0) {
            let wi = if on_node[0] { 1.0 } else { w[0][(di + 1) as usize] };
            for dj in range(1) {
                let wj = if on_node[1] { 1.0 } else { w[1][(dj + 1) as usize] };
                for dk in range(2) {
                    let wk = if on_node[2] { 1.0 } else { w[2][(dk + 1) as usize] };
                    let wt = wi * wj * wk;
                    if wt == 0.0 {
                        continue;
                    }
                    l.fetch(
                        &self.data,
                        self.tensor,
                        [base[0] + di, base[1] + dj, base[2] + dk],
                        &mut tmp,
                    );
                    for c in 0..ch {
                        out[c] += wt * tmp[c];
                    }
                }
            }
        }
        out
    }
}

type Callable = dyn Fn(&Point) -> f64 + Send + Sync;

enum Repr {
    Const(f64),
    Func {
        f: Box<Callable>,
        step: [f64; 3],
        smooth: bool,
    },
    Grid {
        data: Arc<GridData>,
        channel: usize,
    },
}

/// A real function on the model.
#[derive(Clone)]
pub struct ScalarField(Arc<Repr>);

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Repr::Const(v) => write!(f, "ScalarField::Const({v})"),
            Repr::Func { smooth, .. } => write!(f, "ScalarField::Func(smooth={smooth})"),
            Repr::Grid { data, channel } => {
                write!(f, "ScalarField::Grid({:?}, channel {channel})", data.lattice.n)
            }
        }
    }
}

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        ScalarField(Arc::new(Repr::Const(v)))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// A smooth callable, differenced with the default step.
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Self::from_fn_with_step(f, [FN_STEP; 3], true)
    }

    /// A callable that is only continuous; differential operators reject it.
    pub fn continuous<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Self::from_fn_with_step(f, [FN_STEP; 3], false)
    }

    pub fn from_fn_with_step<F>(f: F, step: [f64; 3], smooth: bool) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        ScalarField(Arc::new(Repr::Func {
            f: Box::new(f),
            step,
            smooth,
        }))
    }

    pub fn from_grid(data: Arc<GridData>, channel: usize) -> Self {
        assert!(channel < data.tensor.channels());
        ScalarField(Arc::new(Repr::Grid { data, channel }))
    }

    /// Sample a scalar callable onto a lattice.
    pub fn sampled<F>(lattice: Arc<Lattice>, f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Sync,
    {
        let g = GridData::sample(lattice, Tensor::Scalar, |p| [f(p), 0.0, 0.0]);
        Self::from_grid(Arc::new(g), 0)
    }

    pub fn eval(&self, p: &Point) -> f64 {
        match &*self.0 {
            Repr::Const(v) => *v,
            Repr::Func { f, .. } => f(p),
            Repr::Grid { data, channel } => {
                if data.tensor == Tensor::Scalar {
                    data.eval(p)[0]
                } else {
                    data.eval(p)[*channel]
                }
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match &*self.0 {
            Repr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn grid(&self) -> Option<(&Arc<GridData>, usize)> {
        match &*self.0 {
            Repr::Grid { data, channel } => Some((data, *channel)),
            _ => None,
        }
    }

    pub fn is_smooth(&self) -> bool {
        match &*self.0 {
            Repr::Func { smooth, .. } => *smooth,
            _ => true,
        }
    }

    /// Differencing step per coordinate axis.
    pub fn step(&self) -> [f64; 3] {
        match &*self.0 {
            Repr::Const(_) => [0.0; 3],
            Repr::Func { step, .. } => *step,
            Repr::Grid { data, .. } => data.lattice.spacing(),
        }
    }

    /// Fourth-order centred coordinate partial derivative.
    pub fn partial(&self, p: &Point, axis: usize) -> f64 {
        if let Repr::Const(_) = &*self.0 {
            return 0.0;
        }
        let d = self.step()[axis];
        let at = |k: f64| {
            let mut q = *p;
            q[axis] += k * d;
            self.eval(&q)
        };
        (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * d)
    }

    pub fn gradient(&self, p: &Point) -> [f64; 3] {
        if let Repr::Const(_) = &*self.0 {
            return [0.0; 3];
        }
        [self.partial(p, 0), self.partial(p, 1), self.partial(p, 2)]
    }

    /// Pointwise composition with a unary function.
    pub fn map<F>(&self, g: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if let Some(v) = self.as_constant() {
            return Self::constant(g(v));
        }
        let a = self.clone();
        Self::from_fn_with_step(move |p| g(a.eval(p)), step_of(&[self]), self.is_smooth())
    }

    /// Pointwise combination of two fields.
    pub fn zip<F>(&self, other: &ScalarField, g: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            return Self::constant(g(a, b));
        }
        let (a, b) = (self.clone(), other.clone());
        Self::from_fn_with_step(
            move |p| g(a.eval(p), b.eval(p)),
            step_of(&[self, other]),
            self.is_smooth() && other.is_smooth(),
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(move |v| k * v)
    }
}

/// Combined differencing step: the coarsest step of the inputs.
pub fn step_of(fields: &[&ScalarField]) -> [f64; 3] {
    let mut s = [0.0f64; 3];
    for f in fields {
        let fs = f.step();
        for a in 0..3 {
            s[a] = s[a].max(fs[a]);
        }
    }
    for v in s.iter_mut() {
        if *v == 0.0 {
            *v = FN_STEP;
        }
    }
    s
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip(rhs, |a, b| a * b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scale(rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

impl From<f64> for ScalarField {
    fn from(v: f64) -> Self {
        ScalarField::constant(v)
    }
}

fn eval3(c: &[ScalarField; 3], grid: &Option<Arc<GridData>>, p: &Point) -> [f64; 3] {
    if let Some(g) = grid {
        return g.eval(p);
    }
    [c[0].eval(p), c[1].eval(p), c[2].eval(p)]
}

fn grid_channels(g: &Arc<GridData>) -> [ScalarField; 3] {
    [
        ScalarField::from_grid(g.clone(), 0),
        ScalarField::from_grid(g.clone(), 1),
        ScalarField::from_grid(g.clone(), 2),
    ]
}

macro_rules! triple_field {
    ($name:ident, $tensor:expr, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Debug)]
        pub struct $name {
            c: [ScalarField; 3],
            grid: Option<Arc<GridData>>,
        }

        impl $name {
            pub fn new(c: [ScalarField; 3]) -> Self {
                $name { c, grid: None }
            }

            pub fn constant(v: [f64; 3]) -> Self {
                Self::new(v.map(ScalarField::constant))
            }

            pub fn from_fn<F>(f: F) -> Self
            where
                F: Fn(&Point) -> [f64; 3] + Send + Sync + 'static,
            {
                let f = Arc::new(f);
                let c = [0, 1, 2].map(|i| {
                    let f = f.clone();
                    ScalarField::from_fn(move |p| f(p)[i])
                });
                Self::new(c)
            }

            /// Sample a callable onto a lattice, keeping a single
            /// interpolation path for all three coefficients.
            pub fn sampled<F>(lattice: Arc<Lattice>, f: F) -> Self
            where
                F: Fn(&Point) -> [f64; 3] + Sync,
            {
                Self::from_grid(Arc::new(GridData::sample(lattice, $tensor, f)))
            }

            pub fn from_grid(g: Arc<GridData>) -> Self {
                assert_eq!(g.tensor(), $tensor);
                $name {
                    c: grid_channels(&g),
                    grid: Some(g),
                }
            }

            pub fn coeffs(&self) -> &[ScalarField; 3] {
                &self.c
            }

            pub fn coeff(&self, i: usize) -> &ScalarField {
                &self.c[i]
            }

            pub fn grid(&self) -> Option<&Arc<GridData>> {
                self.grid.as_ref()
            }

            pub fn eval(&self, p: &Point) -> [f64; 3] {
                eval3(&self.c, &self.grid, p)
            }

            pub fn is_smooth(&self) -> bool {
                self.c.iter().all(|c| c.is_smooth())
            }

            pub fn scale(&self, k: &ScalarField) -> Self {
                Self::new([0, 1, 2].map(|i| &self.c[i] * k))
            }

            pub fn scale_by(&self, k: f64) -> Self {
                if let Some(g) = &self.grid {
                    let data: Vec<f64> = g.values().iter().map(|v| k * v).collect();
                    let g = GridData::from_values(g.lattice().clone(), $tensor, data);
                    return Self::from_grid(Arc::new(g));
                }
                Self::new([0, 1, 2].map(|i| self.c[i].scale(k)))
            }

            pub fn add(&self, other: &Self) -> Self {
                Self::new([0, 1, 2].map(|i| &self.c[i] + &other.c[i]))
            }

            pub fn sub(&self, other: &Self) -> Self {
                Self::new([0, 1, 2].map(|i| &self.c[i] - &other.c[i]))
            }

            /// Linear combination `a·self + b·other` with constant weights.
            pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
                Self::new([0, 1, 2].map(|i| {
                    self.c[i].zip(&other.c[i], move |x, y| a * x + b * y)
                }))
            }

            pub fn is_constant(&self) -> bool {
                self.c.iter().all(|c| c.as_constant().is_some())
            }
        }
    };
}

triple_field!(
    VecField,
    Tensor::Vector,
    "A vector field by its coefficients on the frame `(f1, f2, f3)`."
);
triple_field!(
    OneForm,
    Tensor::Covector,
    "A 1-form by its coefficients on the dual coframe."
);

impl OneForm {
    /// `α(V)` pointwise.
    pub fn pair(&self, v: &VecField) -> ScalarField {
        let (a, v) = (self.clone(), v.clone());
        let step = step_of(&[
            &self.c[0], &self.c[1], &self.c[2], &v.c[0], &v.c[1], &v.c[2],
        ]);
        let smooth = a.is_smooth() && v.is_smooth();
        ScalarField::from_fn_with_step(move |p| dot(&a.eval(p), &v.eval(p)), step, smooth)
    }
}

/// A 2-form by its values on the frame pairs `(12), (13), (23)`.
#[derive(Clone, Debug)]
pub struct TwoForm {
    c: [ScalarField; 3],
}

impl TwoForm {
    pub fn new(c12: ScalarField, c13: ScalarField, c23: ScalarField) -> Self {
        TwoForm {
            c: [c12, c13, c23],
        }
    }

    pub fn coeffs(&self) -> &[ScalarField; 3] {
        &self.c
    }

    /// `(ω12, ω13, ω23)` at a point.
    pub fn eval(&self, p: &Point) -> [f64; 3] {
        [self.c[0].eval(p), self.c[1].eval(p), self.c[2].eval(p)]
    }

    /// `ω(U, V)` for frame coefficient vectors.
    pub fn apply(w: &[f64; 3], u: &[f64; 3], v: &[f64; 3]) -> f64 {
        w[0] * (u[0] * v[1] - u[1] * v[0])
            + w[1] * (u[0] * v[2] - u[2] * v[0])
            + w[2] * (u[1] * v[2] - u[2] * v[1])
    }

    /// The 2-form as an antisymmetric matrix.
    pub fn matrix(w: &[f64; 3]) -> [[f64; 3]; 3] {
        [
            [0.0, w[0], w[1]],
            [-w[0], 0.0, w[2]],
            [-w[1], -w[2], 0.0],
        ]
    }
}

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn det3(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    dot(a, &cross(b, c))
}

pub fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::AxisRule;
    use std::f64::consts::PI;

    fn torus(n: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new([0.0; 3], [1.0; 3], [n; 3], [AxisRule::Periodic; 3]).unwrap())
    }

    #[test]
    fn grid_interpolates_nodes_exactly() {
        let l = torus(8);
        let f = ScalarField::sampled(l.clone(), |p| (2.0 * PI * p[0]).sin() + p[1] * p[2]);
        for idx in [0usize, 17, 200, 511] {
            let p = l.node(l.unflat(idx));
            let exact = (2.0 * PI * p[0]).sin() + p[1] * p[2];
            assert_eq!(f.eval(&p), exact);
        }
    }

    #[test]
    fn grid_interpolation_converges() {
        let err = |n: usize| {
            let f = ScalarField::sampled(torus(n), |p| (2.0 * PI * (p[0] + 2.0 * p[2])).sin());
            (0..50)
                .map(|k| {
                    let k = k as f64;
                    let p = [(0.137 * k).fract(), (0.291 * k).fract(), (0.377 * k + 0.01).fract()];
                    (f.eval(&p) - (2.0 * PI * (p[0] + 2.0 * p[2])).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < e1 / 5.0, "{e1} {e2}");
    }

    #[test]
    fn periodic_derivative_is_accurate() {
        let f = ScalarField::sampled(torus(32), |p| (2.0 * PI * p[2]).cos());
        let p = [0.0, 0.0, 0.25];
        let d = f.partial(&p, 2);
        assert!((d + 2.0 * PI).abs() < 1e-3, "{d}");
    }

    #[test]
    fn constants_have_zero_gradient() {
        let c = ScalarField::constant(3.0);
        assert_eq!(c.gradient(&[0.1, 0.2, 0.3]), [0.0; 3]);
        let s = &c + &ScalarField::constant(1.0);
        assert_eq!(s.as_constant(), Some(4.0));
    }

    #[test]
    fn smoothness_propagates() {
        let a = ScalarField::continuous(|p| p[0].abs());
        let b = ScalarField::from_fn(|p| p[1]);
        assert!(!(&a * &b).is_smooth());
        assert!((&b * &b).is_smooth());
    }

    #[test]
    fn pairing_is_pointwise_dot() {
        let a = OneForm::constant([1.0, 2.0, 3.0]);
        let v = VecField::from_fn(|p| [p[0], 1.0, 0.0]);
        assert_eq!(a.pair(&v).eval(&[2.0, 0.0, 0.0]), 4.0);
    }
}
