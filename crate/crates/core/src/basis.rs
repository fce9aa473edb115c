//! Polynomial feature map and the leaf multicollinearity diagnostic.
//!
//! Monomials are listed once per distinct multi-index in graded
//! lexicographic order: the constant, then `x1..xd`, then
//! `x1^2, x1 x2, .., x1 xd, x2^2, ..`, and so on. Serialized coefficient
//! vectors follow this order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Number of distinct monomials of total degree at most `q` in `d` variables.
pub fn basis_dim(d: usize, q: usize) -> usize {
    // C(d + q, q), built incrementally so intermediate values stay exact.
    let mut c: usize = 1;
    for j in 1..=q {
        c = c * (d + j) / j;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BasisSchema", into = "BasisSchema")]
pub struct PolyBasis {
    d: usize,
    q: usize,
    monomials: Vec<Vec<u32>>,
}

/// Serialized form: the monomial list is implied by `(d, q)` and the order.
#[derive(Serialize, Deserialize)]
struct BasisSchema {
    d: usize,
    q: usize,
    order: String,
}

impl From<BasisSchema> for PolyBasis {
    fn from(s: BasisSchema) -> Self {
        PolyBasis::new(s.d, s.q)
    }
}

impl From<PolyBasis> for BasisSchema {
    fn from(b: PolyBasis) -> Self {
        BasisSchema {
            d: b.d,
            q: b.q,
            order: "graded-lex".into(),
        }
    }
}

impl PolyBasis {
    pub fn new(d: usize, q: usize) -> Self {
        let mut monomials = Vec::with_capacity(basis_dim(d, q));
        for degree in 0..=q {
            let mut current = vec![0u32; d];
            push_degree(&mut monomials, &mut current, 0, degree as u32);
        }
        PolyBasis { d, q, monomials }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    /// Position of a multi-index in the basis order.
    pub fn index_of(&self, gamma: &[u32]) -> Option<usize> {
        self.monomials.iter().position(|m| m == gamma)
    }

    /// Evaluates every monomial at `x`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// `<coef, G(x)>` without materializing `G(x)`.
    pub fn dot(&self, x: &[f64], coef: &[f64]) -> f64 {
        debug_assert_eq!(coef.len(), self.len());
        if self.q <= 2 {
            let mut acc = coef[0];
            if self.q >= 1 {
                for (c, v) in coef[1..=self.d].iter().zip(x) {
                    acc += c * v;
                }
            }
            if self.q == 2 {
                let mut pos = 1 + self.d;
                for a in 0..self.d {
                    for b in a..self.d {
                        acc += coef[pos] * x[a] * x[b];
                        pos += 1;
                    }
                }
            }
            return acc;
        }
        self.eval(x).iter().zip(coef).map(|(g, c)| g * c).sum()
    }

    /// Evaluates into a caller buffer of length [`PolyBasis::len`].
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(out.len(), self.len());
        if self.q <= 2 {
            // Fast path matching the graded order directly.
            out[0] = 1.0;
            if self.q >= 1 {
                out[1..=self.d].copy_from_slice(x);
            }
            if self.q == 2 {
                let mut pos = 1 + self.d;
                for a in 0..self.d {
                    for b in a..self.d {
                        out[pos] = x[a] * x[b];
                        pos += 1;
                    }
                }
            }
            return;
        }
        for (slot, gamma) in out.iter_mut().zip(&self.monomials) {
            *slot = gamma
                .iter()
                .zip(x)
                .map(|(&g, &v)| v.powi(g as i32))
                .product();
        }
    }
}

/// Bases of every order `0..=q` for one dimension, used when leaf fits fall
/// back to a lower order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisLadder {
    by_order: Vec<PolyBasis>,
}

impl BasisLadder {
    pub fn new(d: usize, q: usize) -> Self {
        BasisLadder {
            by_order: (0..=q).map(|o| PolyBasis::new(d, o)).collect(),
        }
    }

    pub fn get(&self, order: usize) -> &PolyBasis {
        &self.by_order[order]
    }

    pub fn top(&self) -> &PolyBasis {
        self.by_order.last().expect("order 0 always present")
    }

    pub fn q(&self) -> usize {
        self.by_order.len() - 1
    }
}

fn push_degree(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.to_vec());
        current[pos] = 0;
        return;
    }
    for take in (0..=remaining).rev() {
        current[pos] = take;
        push_degree(out, current, pos + 1, remaining - take);
    }
    current[pos] = 0;
}

/// Result of the multicollinearity diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    /// `[1 - d' S^{-1} d]^{-1}`, or `+inf` when singular.
    #[serde(with = "finite_or_inf")]
    pub value: f64,
    pub singular: bool,
}

impl Kappa {
    pub fn trivial() -> Self {
        Kappa {
            value: 1.0,
            singular: false,
        }
    }
}

/// Relative eigenvalue floor below which `S` counts as singular.
const SINGULAR_RCOND: f64 = 1e-12;

/// Computes `kappa = [1 - d' S^{-1} d]^{-1}` where `d = sum_i w_i r_i` and
/// `S = sum_i w_i r_i r_i'` over rows `r_i` of the non-constant basis terms
/// evaluated at centered points. `rows` is row-major with `width` columns;
/// weights are nonnegative and sum to one.
pub fn kappa_diagnostic(weights: &[f64], rows: &[f64], width: usize) -> Kappa {
    if width == 0 {
        return Kappa::trivial();
    }
    debug_assert_eq!(rows.len(), weights.len() * width);
    let mut dvec = DVector::<f64>::zeros(width);
    let mut s = DMatrix::<f64>::zeros(width, width);
    for (w, r) in weights.iter().zip(rows.chunks_exact(width)) {
        for a in 0..width {
            dvec[a] += w * r[a];
            for b in 0..width {
                s[(a, b)] += w * r[a] * r[b];
            }
        }
    }
    let singular = Kappa {
        value: f64::INFINITY,
        singular: true,
    };
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= SINGULAR_RCOND * max {
        return singular;
    }
    let Some(chol) = s.cholesky() else {
        return singular;
    };
    let quad = dvec.dot(&chol.solve(&dvec));
    let gap = 1.0 - quad;
    if gap <= SINGULAR_RCOND {
        return singular;
    }
    Kappa {
        value: 1.0 / gap,
        singular: false,
    }
}

mod finite_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
