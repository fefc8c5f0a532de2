//! Sampling lattices over a fundamental domain, with the identification
//! rules that glue the domain into a closed 3-manifold.
//!
//! Node indices are arbitrary integers: indices outside the fundamental
//! range are mapped back through the identifications, so stencils near the
//! boundary read the correct glued samples. A monodromy on the third axis
//! acts on the first two (which must then be periodic): the point
//! `(q, t + L)` is identified with `(A q, t)`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Point;

pub type IntMatrix = [[i64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisRule {
    /// No identification; samples beyond the box are linearly extrapolated.
    Open,
    Periodic,
    /// Third axis only: gluing `(q, hi) ~ (A q, lo)` on the first two axes.
    Monodromy(IntMatrix),
}

/// How a sampled quantity transforms when pulled through a gluing map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    Scalar,
    /// Coordinate components of a tangent vector.
    Vector,
    /// Coordinate components of a covector.
    Covector,
}

impl Tensor {
    pub fn channels(self) -> usize {
        match self {
            Tensor::Scalar => 1,
            _ => 3,
        }
    }
}

const POWER_CACHE: i64 = 48;

#[derive(Debug, Clone)]
struct MonodromyPowers {
    /// `A^m` for `m` in `-POWER_CACHE..=POWER_CACHE`, as floats.
    real: Vec<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone)]
pub struct Lattice {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub n: [usize; 3],
    pub rules: [AxisRule; 3],
    h: [f64; 3],
    powers: Option<MonodromyPowers>,
}

pub fn mat_mul(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn int_inverse(a: &IntMatrix) -> Option<IntMatrix> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    match det {
        1 => Some([[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]),
        -1 => Some([[-a[1][1], a[0][1]], [a[1][0], -a[0][0]]]),
        _ => None,
    }
}

fn int_power(a: &IntMatrix, m: i64) -> IntMatrix {
    let base = if m < 0 {
        int_inverse(a).expect("monodromy is unimodular")
    } else {
        *a
    };
    let mut out = [[1, 0], [0, 1]];
    for _ in 0..m.unsigned_abs() {
        out = mat_mul(&base, &out);
    }
    out
}

fn real_power(a: &IntMatrix, m: i64) -> [[f64; 2]; 2] {
    let base = if m < 0 {
        int_inverse(a).expect("monodromy is unimodular")
    } else {
        *a
    };
    let b = [
        [base[0][0] as f64, base[0][1] as f64],
        [base[1][0] as f64, base[1][1] as f64],
    ];
    let mut out = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..m.unsigned_abs() {
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                next[i][j] = b[i][0] * out[0][j] + b[i][1] * out[1][j];
            }
        }
        out = next;
    }
    out
}

impl Lattice {
    pub fn new(lo: [f64; 3], hi: [f64; 3], n: [usize; 3], rules: [AxisRule; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(hi[a] > lo[a]) {
                return Err(LabError::InvalidModel(format!("axis {a}: empty extent")));
            }
            if n[a] < 2 {
                return Err(LabError::InvalidModel(format!("axis {a}: need at least 2 samples")));
            }
        }
        let mut powers = None;
        for (a, rule) in rules.iter().enumerate() {
            if let AxisRule::Monodromy(m) = rule {
                if a != 2 {
                    return Err(LabError::InvalidModel(
                        "monodromy is only supported on the third axis".into(),
                    ));
                }
                if rules[0] != AxisRule::Periodic || rules[1] != AxisRule::Periodic {
                    return Err(LabError::InvalidModel(
                        "monodromy requires periodic first and second axes".into(),
                    ));
                }
                if int_inverse(m).is_none() {
                    return Err(LabError::InvalidModel("monodromy must have det ±1".into()));
                }
                if (hi[0] - lo[0] - 1.0).abs() > 1e-12 || (hi[1] - lo[1] - 1.0).abs() > 1e-12 {
                    return Err(LabError::InvalidModel(
                        "monodromy requires unit periods on the torus axes".into(),
                    ));
                }
                if n[0] != n[1] {
                    return Err(LabError::InvalidModel(
                        "monodromy requires equal resolution on the torus axes".into(),
                    ));
                }
                let real = (-POWER_CACHE..=POWER_CACHE).map(|k| real_power(m, k)).collect();
                powers = Some(MonodromyPowers { real });
            }
        }
        let mut h = [0.0; 3];
        for a in 0..3 {
            h[a] = match rules[a] {
                AxisRule::Open => (hi[a] - lo[a]) / (n[a] - 1) as f64,
                _ => (hi[a] - lo[a]) / n[a] as f64,
            };
        }
        Ok(Lattice {
            lo,
            hi,
            n,
            rules,
            h,
            powers,
        })
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.h
    }

    pub fn max_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn monodromy(&self) -> Option<IntMatrix> {
        match self.rules[2] {
            AxisRule::Monodromy(m) => Some(m),
            _ => None,
        }
    }

    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    pub fn unflat(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        [i, j, k]
    }

    pub fn node(&self, idx: [usize; 3]) -> Point {
        [
            self.lo[0] + idx[0] as f64 * self.h[0],
            self.lo[1] + idx[1] as f64 * self.h[1],
            self.lo[2] + idx[2] as f64 * self.h[2],
        ]
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |f| self.node(self.unflat(f)))
    }

    /// Monodromy power `m` as a float matrix `A^m`.
    pub fn monodromy_power(&self, m: i64) -> [[f64; 2]; 2] {
        if m == 0 {
            return [[1.0, 0.0], [0.0, 1.0]];
        }
        match (&self.powers, self.monodromy()) {
            (Some(p), _) if m.abs() <= POWER_CACHE => p.real[(m + POWER_CACHE) as usize],
            (_, Some(a)) => real_power(&a, m),
            _ => [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// Resolve an arbitrary integer node index to a stored node plus the
    /// monodromy power crossed on the way. Open axes are reported as
    /// out-of-range via `None` so the caller can extrapolate.
    pub fn resolve(&self, idx: [i64; 3]) -> Option<([usize; 3], i64)> {
        let mut out = [0usize; 3];
        let mut ij = [idx[0], idx[1]];
        let mut m = 0i64;
        match self.rules[2] {
            AxisRule::Open => {
                if idx[2] < 0 || idx[2] >= self.n[2] as i64 {
                    return None;
                }
                out[2] = idx[2] as usize;
            }
            AxisRule::Periodic => out[2] = idx[2].rem_euclid(self.n[2] as i64) as usize,
            AxisRule::Monodromy(a) => {
                let nk = self.n[2] as i64;
                m = idx[2].div_euclid(nk);
                out[2] = idx[2].rem_euclid(nk) as usize;
                if m != 0 {
                    // (q, t0 + m L) ~ (A^m q, t0); node lattice is preserved by A
                    let p = int_power(&a, m);
                    let n = self.n[0] as i64;
                    let (i, j) = (ij[0].rem_euclid(n), ij[1].rem_euclid(n));
                    ij = [
                        (p[0][0] * i + p[0][1] * j).rem_euclid(n),
                        (p[1][0] * i + p[1][1] * j).rem_euclid(n),
                    ];
                }
            }
        }
        for a in 0..2 {
            match self.rules[a] {
                AxisRule::Open => {
                    if ij[a] < 0 || ij[a] >= self.n[a] as i64 {
                        return None;
                    }
                    out[a] = ij[a] as usize;
                }
                _ => out[a] = ij[a].rem_euclid(self.n[a] as i64) as usize,
            }
        }
        Some((out, m))
    }

    /// Reduce a point of the universal cover to the fundamental domain.
    /// Returns the representative and the monodromy power `m` such that
    /// `p = (q, t0 + m L)` and the representative is `(A^m q, t0)`.
    pub fn reduce(&self, p: &Point) -> (Point, i64) {
        let mut q = *p;
        let mut m = 0i64;
        match self.rules[2] {
            AxisRule::Open => {}
            AxisRule::Periodic => q[2] = wrap(q[2], self.lo[2], self.hi[2]),
            AxisRule::Monodromy(_) => {
                let len = self.hi[2] - self.lo[2];
                m = ((q[2] - self.lo[2]) / len).floor() as i64;
                q[2] -= m as f64 * len;
                if q[2] >= self.hi[2] - SNAP * len {
                    q[2] = self.lo[2];
                    m += 1;
                }
                if m != 0 {
                    let a = self.monodromy_power(m);
                    let (x, y) = (q[0] - self.lo[0], q[1] - self.lo[1]);
                    q[0] = self.lo[0] + a[0][0] * x + a[0][1] * y;
                    q[1] = self.lo[1] + a[1][0] * x + a[1][1] * y;
                }
            }
        }
        for a in 0..2 {
            if self.rules[a] != AxisRule::Open {
                q[a] = wrap(q[a], self.lo[a], self.hi[a]);
            }
        }
        (q, m)
    }

    /// Transform coordinate vector components at a cover point `(q, t0 + mL)`
    /// into components at its representative `(A^m q, t0)`.
    pub fn vector_to_rep(&self, m: i64, v: [f64; 3]) -> [f64; 3] {
        if m == 0 {
            return v;
        }
        let a = self.monodromy_power(m);
        [
            a[0][0] * v[0] + a[0][1] * v[1],
            a[1][0] * v[0] + a[1][1] * v[1],
            v[2],
        ]
    }

    /// Inverse of [`Lattice::vector_to_rep`].
    pub fn vector_from_rep(&self, m: i64, v: [f64; 3]) -> [f64; 3] {
        self.vector_to_rep(-m, v)
    }

    /// Read channel values at an arbitrary integer node index, expressed in
    /// the coordinates of the cover point that index denotes.
    pub fn fetch(&self, data: &[f64], tensor: Tensor, idx: [i64; 3], out: &mut [f64; 3]) {
        let ch = tensor.channels();
        match self.resolve(idx) {
            Some((node, m)) => {
                let base = self.flat(node[0], node[1], node[2]) * ch;
                out[..ch].copy_from_slice(&data[base..base + ch]);
                if m != 0 {
                    match tensor {
                        Tensor::Scalar => {}
                        Tensor::Vector => {
                            let a = self.monodromy_power(-m);
                            let (x, y) = (out[0], out[1]);
                            out[0] = a[0][0] * x + a[0][1] * y;
                            out[1] = a[1][0] * x + a[1][1] * y;
                        }
                        Tensor::Covector => {
                            let a = self.monodromy_power(m);
                            let (x, y) = (out[0], out[1]);
                            out[0] = x * a[0][0] + y * a[1][0];
                            out[1] = x * a[0][1] + y * a[1][1];
                        }
                    }
                }
            }
            None => {
                // open axis: linear extrapolation from the two nearest nodes
                let mut inner = idx;
                let mut next = idx;
                for a in 0..3 {
                    if self.rules[a] == AxisRule::Open {
                        let n = self.n[a] as i64;
                        if idx[a] < 0 {
                            inner[a] = 0;
                            next[a] = 1;
                        } else if idx[a] >= n {
                            inner[a] = n - 1;
                            next[a] = n - 2;
                        }
                    }
                }
                // distance from the boundary along the first offending axis
                let a = (0..3)
                    .find(|&a| inner[a] != idx[a])
                    .expect("out-of-range index has an open axis");
                let d = (idx[a] - inner[a]).abs() as f64;
                let mut fixed = idx;
                fixed[a] = inner[a];
                let mut nb = idx;
                nb[a] = next[a];
                let mut v0 = [0.0; 3];
                let mut v1 = [0.0; 3];
                self.fetch(data, tensor, fixed, &mut v0);
                self.fetch(data, tensor, nb, &mut v1);
                for c in 0..ch {
                    out[c] = (1.0 + d) * v0[c] - d * v1[c];
                }
            }
        }
    }
}

fn wrap(v: f64, lo: f64, hi: f64) -> f64 {
    let len = hi - lo;
    let mut w = lo + (v - lo).rem_euclid(len);
    if w >= hi - SNAP * len {
        w = lo;
    }
    w
}

/// Points this close (relative) to an upper face are re-entered.
const SNAP: f64 = 1e-12;
