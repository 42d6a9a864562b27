//! Numerical kernels shared by the recovery algorithms.
//!
//! Random Gaussian measurement matrices, weighted l1 minimization via an
//! equality-constrained linear program, least squares / QR / orthogonal
//! complements, the combinatorial l0 oracle, and orthogonal matching
//! pursuit.

use crate::{DcsError, Result};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Rank tolerance: a triangular/singular value below this multiple of the
/// largest one means rank deficiency.
const RANK_TOL: f64 = 1e-10;

/// Dense matrix of i.i.d. `N(0, sigma^2)` entries, deterministic per seed.
/// Entries fill row-major.
pub fn gaussian_matrix(m: usize, n: usize, sigma: f64, seed: u64) -> Result<DMatrix<f64>> {
    if m == 0 || n == 0 {
        return Err(DcsError::InvalidParameter(
            "matrix dimensions must be positive".into(),
        ));
    }
    if sigma <= 0.0 {
        return Err(DcsError::InvalidParameter(
            "entry standard deviation must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| DcsError::InvalidParameter(e.to_string()))?;
    let entries: Vec<f64> = (0..m * n).map(|_| normal.sample(&mut rng)).collect();
    Ok(DMatrix::from_row_slice(m, n, &entries))
}

/// Weighted l1 problem: minimize `sum_i w_i |x_i|` subject to `a x = y`.
#[derive(Debug, Clone)]
pub struct L1Problem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub weights: DVector<f64>,
}

impl L1Problem {
    pub fn unweighted(a: DMatrix<f64>, y: DVector<f64>) -> Self {
        let n = a.ncols();
        L1Problem {
            a,
            y,
            weights: DVector::from_element(n, 1.0),
        }
    }
}

/// Solve the weighted l1 problem as a linear program via the standard
/// split `x = u - v`, `u, v >= 0`. Deterministic for identical inputs.
pub fn solve_weighted_l1(p: &L1Problem) -> Result<DVector<f64>> {
    let (m, n) = p.a.shape();
    if p.y.len() != m {
        return Err(DcsError::DimensionMismatch(format!(
            "y has length {}, matrix has {m} rows",
            p.y.len()
        )));
    }
    if p.weights.len() != n {
        return Err(DcsError::DimensionMismatch(format!(
            "weights have length {}, matrix has {n} columns",
            p.weights.len()
        )));
    }
    if p.weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
        return Err(DcsError::InvalidParameter(
            "l1 weights must be positive".into(),
        ));
    }

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let u: Vec<_> = (0..n)
        .map(|i| lp.add_var(p.weights[i], (0.0, f64::INFINITY)))
        .collect();
    let v: Vec<_> = (0..n)
        .map(|i| lp.add_var(p.weights[i], (0.0, f64::INFINITY)))
        .collect();
    for r in 0..m {
        let mut terms = Vec::with_capacity(2 * n);
        for i in 0..n {
            let c = p.a[(r, i)];
            if c != 0.0 {
                terms.push((u[i], c));
                terms.push((v[i], -c));
            }
        }
        lp.add_constraint(terms, ComparisonOp::Eq, p.y[r]);
    }
    let solution = lp.solve().map_err(|e| match e {
        minilp::Error::Infeasible => DcsError::Infeasible,
        other => DcsError::LpFailure(other.to_string()),
    })?;
    Ok(DVector::from_fn(n, |i, _| {
        solution[u[i]] - solution[v[i]]
    }))
}

/// Least squares `argmin ||a x - y||` for a full-column-rank `a`, solved
/// via QR. Errors on rank deficiency.
pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != a.nrows() {
        return Err(DcsError::DimensionMismatch(format!(
            "y has length {}, matrix has {} rows",
            y.len(),
            a.nrows()
        )));
    }
    let (q, r) = qr_factorize(a)?;
    let rhs = q.transpose() * y;
    let mut x = rhs;
    // back substitution on the upper-triangular r
    for i in (0..a.ncols()).rev() {
        let mut s = x[i];
        for k in i + 1..a.ncols() {
            s -= r[(i, k)] * x[k];
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}

/// Minimum-norm least-squares solution via SVD; tolerates rank deficiency
/// and under-determined systems.
pub fn least_squares_min_norm(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != a.nrows() {
        return Err(DcsError::DimensionMismatch(format!(
            "y has length {}, matrix has {} rows",
            y.len(),
            a.nrows()
        )));
    }
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if a.nrows() == 0 {
        // no constraints: the minimum-norm solution is zero
        return Ok(DVector::zeros(a.ncols()));
    }
    let svd = a.clone().svd(true, true);
    svd.solve(y, RANK_TOL * svd.singular_values.max())
        .map_err(|e| DcsError::LpFailure(e.to_string()))
}

/// Thin QR factorization `a = q r` with orthonormal `q` (m x k) and upper
/// triangular `r` (k x k). Errors if `a` is rank deficient.
pub fn qr_factorize(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = a.ncols();
    if k == 0 || a.nrows() < k {
        return Err(DcsError::InvalidParameter(format!(
            "QR needs 1 <= cols <= rows, got {}x{k}",
            a.nrows()
        )));
    }
    let qr = a.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * diag_max) || diag_max == 0.0 {
        return Err(DcsError::RankDeficient);
    }
    Ok((q, r))
}

/// Orthonormal basis of the orthogonal complement of the column span of a
/// full-column-rank `a` (m x k, k < m): returns `q` with `q^T q = I` and
/// `q^T a = 0`.
pub fn orthogonal_complement(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, k) = a.shape();
    if k >= m {
        return Err(DcsError::InvalidParameter(format!(
            "complement needs cols < rows, got {m}x{k}"
        )));
    }
    let basis = if k == 0 {
        Vec::new()
    } else {
        let (q, _) = qr_factorize(a)?;
        (0..k).map(|i| q.column(i).into_owned()).collect::<Vec<_>>()
    };
    let mut ortho = basis;
    let mut complement = Vec::with_capacity(m - k);
    // extend the basis with coordinate vectors, modified Gram-Schmidt
    for e in 0..m {
        if complement.len() == m - k {
            break;
        }
        let mut v = DVector::zeros(m);
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &ortho {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            ortho.push(v.clone());
            complement.push(v);
        }
    }
    if complement.len() != m - k {
        return Err(DcsError::RankDeficient);
    }
    Ok(DMatrix::from_columns(&complement))
}

/// Outcome of the combinatorial l0 search.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    /// Unique sparsest fit found: support (ascending) and its coefficients.
    Sparse {
        support: Vec<usize>,
        coefficients: DVector<f64>,
    },
    /// Another support of the same size fits with a different signal.
    Ambiguous,
    /// No support of size up to `k_max` fits.
    None,
}

/// Maximum column count for the combinatorial l0 search.
pub const MAX_ORACLE_COLS: usize = 30;

fn columns_of(a: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    let cols: Vec<_> = support.iter().map(|&i| a.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

fn embed(n: usize, support: &[usize], coeffs: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    for (k, &i) in support.iter().enumerate() {
        x[i] = coeffs[k];
    }
    x
}

/// Exhaustive l0 minimization: enumerate supports by size then
/// lexicographic order, accept the first whose least-squares fit matches
/// `y` to relative tolerance 1e-8; report ambiguity when another support
/// of the same size fits a different signal.
pub fn l0_oracle(a: &DMatrix<f64>, y: &DVector<f64>, k_max: usize) -> Result<OracleOutcome> {
    let n = a.ncols();
    if n > MAX_ORACLE_COLS {
        return Err(DcsError::SizeGuard(format!(
            "l0 search limited to {MAX_ORACLE_COLS} columns, got {n}"
        )));
    }
    if y.len() != a.nrows() {
        return Err(DcsError::DimensionMismatch(
            "y length does not match matrix rows".into(),
        ));
    }
    let tol = 1e-8 * y.norm().max(1e-300);
    if y.norm() <= 1e-300 {
        return Ok(OracleOutcome::Sparse {
            support: vec![],
            coefficients: DVector::zeros(0),
        });
    }
    let fit = |support: &[usize]| -> Option<DVector<f64>> {
        let sub = columns_of(a, support);
        let coeffs = least_squares_min_norm(&sub, y).ok()?;
        ((&sub * &coeffs - y).norm() < tol).then_some(coeffs)
    };
    for size in 1..=k_max.min(n) {
        let mut found: Option<(Vec<usize>, DVector<f64>)> = None;
        for support in combinations(n, size) {
            if let Some(coeffs) = fit(&support) {
                match &found {
                    None => found = Some((support, coeffs)),
                    Some((s0, c0)) => {
                        let x0 = embed(n, s0, c0);
                        let x1 = embed(n, &support, &coeffs);
                        if (x0 - x1).norm() > 1e-6 {
                            return Ok(OracleOutcome::Ambiguous);
                        }
                    }
                }
            }
        }
        if let Some((support, coefficients)) = found {
            return Ok(OracleOutcome::Sparse {
                support,
                coefficients,
            });
        }
    }
    Ok(OracleOutcome::None)
}

/// Lexicographic k-combinations of 0..n.
fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    itertools::Itertools::combinations(0..n, k)
}

/// Orthogonal matching pursuit: `k` rounds of correlation-maximizing
/// column selection (normalized by column norm; ties break to the lowest
/// index), least-squares refit, residual update. Returns the selected
/// support in selection order with its coefficients.
pub fn omp(a: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<(Vec<usize>, DVector<f64>)> {
    let (m, n) = a.shape();
    if k > m {
        return Err(DcsError::InvalidParameter(format!(
            "cannot select {k} columns from {m} measurements"
        )));
    }
    if y.len() != m {
        return Err(DcsError::DimensionMismatch(
            "y length does not match matrix rows".into(),
        ));
    }
    let col_norms: Vec<f64> = (0..n).map(|i| a.column(i).norm()).collect();
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut selected = vec![false; n];
    let mut residual = y.clone();
    let mut coeffs = DVector::zeros(0);
    for _ in 0..k {
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..n {
            if selected[i] || col_norms[i] <= 1e-300 {
                continue;
            }
            let score = a.column(i).dot(&residual).abs() / col_norms[i];
            if score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        selected[i] = true;
        support.push(i);
        let sub = columns_of(a, &support);
        coeffs = least_squares_min_norm(&sub, y)?;
        residual = y - sub * &coeffs;
    }
    Ok((support, coeffs))
}
