//! Leaf models: local means and local polynomial least squares.
//!
//! Polynomial leaves are fitted in a local frame `u = (x - center) / scale`
//! spanning the members' bounding box, which keeps the design well
//! conditioned in narrow leaves. [`LeafModel::raw_beta`] converts the
//! coefficients back to the global monomial basis.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{kappa_diagnostic, BasisLadder, Kappa, PolyBasis};

/// Relative size of an `R` diagonal entry below which the design is
/// treated as rank deficient.
const RANK_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeafModel {
    Mean {
        mean: f64,
        #[serde(default)]
        singular_fallback: bool,
    },
    Poly {
        /// Order actually fitted; below the configured `q` after a fallback.
        order: usize,
        /// Coefficients in the graded-lex basis of the local frame.
        beta: Vec<f64>,
        center: Vec<f64>,
        scale: Vec<f64>,
        kappa: Kappa,
        singular_fallback: bool,
    },
}

impl LeafModel {
    pub fn predict(&self, x: &[f64], ladder: &BasisLadder) -> f64 {
        match self {
            LeafModel::Mean { mean, .. } => *mean,
            LeafModel::Poly {
                order,
                beta,
                center,
                scale,
                ..
            } => {
                let u: Vec<f64> = x
                    .iter()
                    .zip(center)
                    .zip(scale)
                    .map(|((v, c), s)| (v - c) / s)
                    .collect();
                ladder.get(*order).dot(&u, beta)
            }
        }
    }

    pub fn singular_fallback(&self) -> bool {
        match self {
            LeafModel::Mean {
                singular_fallback, ..
            }
            | LeafModel::Poly {
                singular_fallback, ..
            } => *singular_fallback,
        }
    }

    pub fn kappa(&self) -> Option<Kappa> {
        match self {
            LeafModel::Poly { kappa, .. } => Some(*kappa),
            LeafModel::Mean { .. } => None,
        }
    }

    /// Coefficients in the global basis `G(x)` of the fitted order.
    pub fn raw_beta(&self) -> Vec<f64> {
        match self {
            LeafModel::Mean { mean, .. } => vec![*mean],
            LeafModel::Poly {
                order,
                beta,
                center,
                scale,
                ..
            } => {
                let basis = PolyBasis::new(center.len(), *order);
                to_raw_coefficients(&basis, beta, center, scale)
            }
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Expands `sum_g b_g prod_j ((x_j - c_j)/s_j)^{g_j}` into global monomials.
fn to_raw_coefficients(basis: &PolyBasis, beta: &[f64], center: &[f64], scale: &[f64]) -> Vec<f64> {
    let index: HashMap<&[u32], usize> = basis
        .monomials()
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_slice(), i))
        .collect();
    let d = basis.d();
    let mut raw = vec![0.0; basis.len()];
    for (gamma, &b) in basis.monomials().iter().zip(beta) {
        if b == 0.0 {
            continue;
        }
        // Walk every delta <= gamma componentwise.
        let mut delta = vec![0u32; d];
        'walk: loop {
            let mut term = b;
            for j in 0..d {
                let (g, t) = (gamma[j], delta[j]);
                term *= binomial(g, t) * (-center[j]).powi((g - t) as i32) / scale[j].powi(g as i32);
            }
            raw[index[delta.as_slice()]] += term;
            for j in 0..d {
                if delta[j] < gamma[j] {
                    delta[j] += 1;
                    continue 'walk;
                }
                delta[j] = 0;
            }
            break;
        }
    }
    raw
}

/// Local coordinate frame over a set of points.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LocalFrame {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LocalFrame {
    /// Midpoint and half-width of the bounding box of `rows` (row-major).
    pub fn of_points(rows: &[f64], d: usize) -> Self {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for r in rows.chunks_exact(d) {
            for j in 0..d {
                lo[j] = lo[j].min(r[j]);
                hi[j] = hi[j].max(r[j]);
            }
        }
        let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let scale = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| {
                let h = 0.5 * (b - a);
                if h > 0.0 {
                    h
                } else {
                    1.0
                }
            })
            .collect();
        LocalFrame { center, scale }
    }

    pub fn map(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.center[j]) / self.scale[j];
        }
    }
}

/// Ordinary least squares through a thin Householder QR. `None` when the
/// design has fewer rows than columns or is numerically rank deficient.
pub(crate) fn least_squares(design: DMatrix<f64>, y: &[f64]) -> Option<Vec<f64>> {
    let (n, p) = design.shape();
    if n < p {
        return None;
    }
    let qr = design.qr();
    let r = qr.r();
    let max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if !(max > 0.0) || (0..p).any(|i| r[(i, i)].abs() <= RANK_RTOL * max) {
        return None;
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r.solve_upper_triangular(&qty)?;
    beta.iter().all(|v| v.is_finite()).then(|| beta.iter().copied().collect())
}

/// Polynomial fit at the highest order in `1..=max_order` whose design is
/// full rank. Returns `(order, beta)` in the frame's coordinates.
pub(crate) fn fit_with_fallback(
    rows: &[f64],
    y: &[f64],
    frame: &LocalFrame,
    ladder: &BasisLadder,
    max_order: usize,
) -> Option<(usize, Vec<f64>)> {
    let d = frame.center.len();
    let n = y.len();
    let mut u = vec![0.0; d];
    for order in (1..=max_order).rev() {
        let basis = ladder.get(order);
        let p = basis.len();
        if n < p {
            continue;
        }
        let mut design = DMatrix::<f64>::zeros(n, p);
        let mut g = vec![0.0; p];
        for (i, r) in rows.chunks_exact(d).enumerate() {
            frame.map(r, &mut u);
            basis.eval_into(&u, &mut g);
            for c in 0..p {
                design[(i, c)] = g[c];
            }
        }
        if let Some(beta) = least_squares(design, y) {
            return Some((order, beta));
        }
    }
    None
}

/// Fits the leaf model on the leaf's I-members (`rows` row-major, `y` their
/// responses). Order `q` falls back to `q-1, .., 0` while the design is
/// rank deficient.
pub fn fit_leaf_model(rows: &[f64], y: &[f64], q: usize, ladder: &BasisLadder) -> LeafModel {
    debug_assert!(!y.is_empty());
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if q == 0 {
        return LeafModel::Mean {
            mean,
            singular_fallback: false,
        };
    }
    let d = ladder.get(0).d();
    let frame = LocalFrame::of_points(rows, d);
    match fit_with_fallback(rows, y, &frame, ladder, q) {
        Some((order, beta)) => {
            let kappa = leaf_kappa(rows, &frame, ladder.get(order));
            LeafModel::Poly {
                order,
                beta,
                center: frame.center,
                scale: frame.scale,
                kappa,
                singular_fallback: order < q,
            }
        }
        None => LeafModel::Mean {
            mean,
            singular_fallback: true,
        },
    }
}

/// Kappa at the frame center with uniform weights over the members.
fn leaf_kappa(rows: &[f64], frame: &LocalFrame, basis: &PolyBasis) -> Kappa {
    let d = basis.d();
    let n = rows.len() / d;
    let width = basis.len() - 1;
    let mut u = vec![0.0; d];
    let mut g = vec![0.0; basis.len()];
    let mut centered = Vec::with_capacity(n * width);
    for r in rows.chunks_exact(d) {
        frame.map(r, &mut u);
        basis.eval_into(&u, &mut g);
        centered.extend_from_slice(&g[1..]);
    }
    kappa_diagnostic(&vec![1.0 / n as f64; n], &centered, width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn mean_leaf() {
        let ladder = BasisLadder::new(1, 0);
        let m = fit_leaf_model(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0], 0, &ladder);
        assert_eq!(m.predict(&[0.9], &ladder), 2.0);
    }

    #[test]
    fn exact_linear_recovers_raw_coefficients() {
        let ladder = BasisLadder::new(2, 1);
        let mut s = derive_stream(1, 1);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..12 {
            let (a, b) = (s.uniform(), s.uniform());
            rows.extend([a, b]);
            y.push(2.0 + 3.0 * a);
        }
        let m = fit_leaf_model(&rows, &y, 1, &ladder);
        assert!(!m.singular_fallback());
        let raw = m.raw_beta();
        let expect = [2.0, 3.0, 0.0];
        for (r, e) in raw.iter().zip(expect) {
            assert!((r - e).abs() < 1e-8, "{raw:?}");
        }
    }

    /// Normal equations solved by Gaussian elimination, independent of QR.
    fn normal_equations(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = design[0].len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &yi) in design.iter().zip(y) {
            for r in 0..p {
                for c in 0..p {
                    a[r][c] += row[r] * row[c];
                }
                a[r][p] += row[r] * yi;
            }
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&x, &z| a[x][col].abs().total_cmp(&a[z][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in col + 1..p {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
        let mut beta = vec![0.0; p];
        for r in (0..p).rev() {
            let mut acc = a[r][p];
            for c in r + 1..p {
                acc -= a[r][c] * beta[c];
            }
            beta[r] = acc / a[r][r];
        }
        beta
    }

    #[test]
    fn quadratic_matches_normal_equation_oracle() {
        let d = 2;
        let ladder = BasisLadder::new(d, 2);
        let basis = PolyBasis::new(d, 2);
        let mut s = derive_stream(3, 3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut design = Vec::new();
        for _ in 0..20 {
            let x = [s.uniform(), s.uniform()];
            rows.extend(x);
            y.push(s.uniform() * 4.0 - 1.0);
            design.push(basis.eval(&x));
        }
        let m = fit_leaf_model(&rows, &y, 2, &ladder);
        assert!(!m.singular_fallback());
        let raw = m.raw_beta();
        let oracle = normal_equations(&design, &y);
        for (a, b) in raw.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{raw:?} vs {oracle:?}");
        }
    }

    #[test]
    fn single_support_point_falls_back_to_mean() {
        let ladder = BasisLadder::new(2, 2);
        let rows = [0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3];
        let m = fit_leaf_model(&rows, &[1.0, 2.0, 3.0, 6.0], 2, &ladder);
        assert_eq!(
            m,
            LeafModel::Mean {
                mean: 3.0,
                singular_fallback: true
            }
        );
    }

    #[test]
    fn collinear_points_drop_one_order() {
        // Points on the diagonal: x1 = x2 makes the linear design singular in
        // d = 2, so both q = 2 and q = 1 fail and the mean remains.
        let ladder = BasisLadder::new(2, 2);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let t = i as f64 / 10.0;
            rows.extend([t, t]);
            y.push(t);
        }
        let m = fit_leaf_model(&rows, &y, 2, &ladder);
        assert!(m.singular_fallback());
        assert!(matches!(m, LeafModel::Mean { .. }));

        // Too few points for q = 2 but enough for q = 1.
        let rows = [0.1, 0.2, 0.5, 0.1, 0.3, 0.9, 0.8, 0.4];
        let y = [1.0, 2.0, 3.0, 4.0];
        let m = fit_leaf_model(&rows, &y, 2, &ladder);
        assert!(matches!(m, LeafModel::Poly { order: 1, singular_fallback: true, .. }));
    }

    #[test]
    fn raw_beta_reproduces_predictions() {
        let d = 3;
        let ladder = BasisLadder::new(d, 3);
        let basis = PolyBasis::new(d, 3);
        let mut s = derive_stream(8, 8);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..60 {
            let x: Vec<f64> = (0..d).map(|_| 0.4 + 0.1 * s.uniform()).collect();
            y.push(x[0] * x[1] - x[2].powi(3) + s.uniform());
            rows.extend(x);
        }
        let m = fit_leaf_model(&rows, &y, 3, &ladder);
        let raw = m.raw_beta();
        let x = [0.45, 0.43, 0.47];
        let direct: f64 = basis.eval(&x).iter().zip(&raw).map(|(g, b)| g * b).sum();
        assert!((direct - m.predict(&x, &ladder)).abs() < 1e-6);
    }
}
