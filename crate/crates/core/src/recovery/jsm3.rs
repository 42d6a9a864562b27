//! Decoders for nonsparse-common + sparse-innovation ensembles.
//!
//! TECC estimates the dense common component in one shot from the
//! transposed, variance-regularized measurement operator, then recovers
//! innovations per sensor from the adjusted measurements. ACIE alternates
//! between refining the common-component estimate on the subspace
//! orthogonal to the current innovation supports and re-estimating those
//! supports.

use super::{Diagnostics, Estimate, MeasurementEnsemble};
use crate::solvers::{l0_oracle, least_squares_min_norm, omp, orthogonal_complement, OracleOutcome};
use crate::{DcsError, Result};
use nalgebra::{DMatrix, DVector};

/// Inner single-signal solver used for innovation recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    Omp,
    /// Combinatorial search; subject to the l0 size guard.
    L0,
}

/// Transpose-based estimation of the common component. `k_j` gives the
/// innovation sparsity per sensor for the inner solver.
pub fn tecc(y: &MeasurementEnsemble, k_j: &[usize], inner: InnerSolver) -> Result<Estimate> {
    let j_count = y.sensor_count();
    let n = y.signal_len();
    if k_j.len() != j_count {
        return Err(DcsError::DimensionMismatch(
            "one innovation sparsity per sensor required".into(),
        ));
    }
    // Step 1: z_C estimate from the regularized transpose
    let z_c = tecc_common_estimate(y)?;
    // Steps 2-3: per-sensor innovation recovery on adjusted measurements
    let mut x_hat = Vec::with_capacity(j_count);
    let mut supports = Vec::with_capacity(j_count);
    let mut flags = Vec::new();
    for (j, &kj) in k_j.iter().enumerate() {
        let adjusted = y.y(j) - y.phi(j) * &z_c;
        let k = kj.min(y.m(j));
        let (support, coeffs) = match inner {
            InnerSolver::Omp => omp(y.phi(j), &adjusted, k)?,
            InnerSolver::L0 => match l0_oracle(y.phi(j), &adjusted, k)? {
                OracleOutcome::Sparse {
                    support,
                    coefficients,
                } => (support, coefficients),
                other => {
                    flags.push(format!("sensor {j}: l0 search {other:?}"));
                    (vec![], DVector::zeros(0))
                }
            },
        };
        let z_j = super::embed(n, &support, &coeffs);
        x_hat.push(&z_c + z_j);
        supports.push(support);
    }
    Ok(Estimate {
        x_hat,
        diagnostics: Diagnostics {
            supports: Some(supports),
            z_common: Some(z_c),
            flags,
            ..Diagnostics::default()
        },
    })
}

/// `z_C` estimate: `(1/J) sum_j Phi_j^T y_j / (M_j sigma_j^2)`.
pub fn tecc_common_estimate(y: &MeasurementEnsemble) -> Result<DVector<f64>> {
    let j_count = y.sensor_count();
    let n = y.signal_len();
    let mut z_c = DVector::zeros(n);
    for j in 0..j_count {
        let m = y.m(j);
        if m == 0 {
            continue;
        }
        let scale = 1.0 / (m as f64 * y.sigma(j) * y.sigma(j));
        z_c += y.phi(j).transpose() * y.y(j) * scale;
    }
    Ok(z_c / j_count as f64)
}

/// Support-estimation strategy for the alternating decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportMethod {
    /// Independent per-sensor supports via OMP.
    Omp,
    /// One shared support across sensors via joint greedy selection.
    Somp,
}

/// Alternating common and innovation estimation: `l` rounds of
/// (common-component refit on the orthogonal complement of the current
/// innovation supports, support re-estimation on the adjusted
/// measurements), then a final coefficient fit.
pub fn acie(
    y: &MeasurementEnsemble,
    k: usize,
    l: usize,
    support_method: SupportMethod,
) -> Result<Estimate> {
    let j_count = y.sensor_count();
    let n = y.signal_len();
    if l == 0 {
        return Err(DcsError::InvalidParameter(
            "at least one iteration required".into(),
        ));
    }
    let mut supports: Vec<Vec<usize>> = vec![Vec::new(); j_count];
    let mut z_c = DVector::zeros(n);
    let mut flags = Vec::new();

    for _ in 0..l {
        // Step 2: refit z_C using measurements projected away from the
        // current innovation support columns
        match refine_common(y, &supports) {
            Ok(z) => z_c = z,
            Err(e) => flags.push(format!("common refit skipped: {e}")),
        }
        // Step 3: re-estimate supports from adjusted measurements
        let adjusted: Vec<DVector<f64>> =
            (0..j_count).map(|j| y.y(j) - y.phi(j) * &z_c).collect();
        match support_method {
            SupportMethod::Omp => {
                for j in 0..j_count {
                    let kj = k.min(y.m(j));
                    let (mut s, _) = omp(y.phi(j), &adjusted[j], kj)?;
                    s.sort_unstable();
                    supports[j] = s;
                }
            }
            SupportMethod::Somp => {
                let phis: Vec<&DMatrix<f64>> = (0..j_count).map(|j| y.phi(j)).collect();
                let refs: Vec<&DVector<f64>> = adjusted.iter().collect();
                let shared = super::jsm2::somp_support(&phis, &refs, k);
                supports = vec![shared; j_count];
            }
        }
    }

    // Step 5: innovation coefficients on the final supports
    let mut x_hat = Vec::with_capacity(j_count);
    for (j, support) in supports.iter().enumerate() {
        let adjusted = y.y(j) - y.phi(j) * &z_c;
        let z_j = if support.is_empty() {
            DVector::zeros(n)
        } else {
            let cols: Vec<_> = support
                .iter()
                .map(|&i| y.phi(j).column(i).into_owned())
                .collect();
            let sub = DMatrix::from_columns(&cols);
            match least_squares_min_norm(&sub, &adjusted) {
                Ok(coeffs) => super::embed(n, support, &coeffs),
                Err(e) => {
                    flags.push(format!("sensor {j}: coefficient fit failed: {e}"));
                    DVector::zeros(n)
                }
            }
        };
        x_hat.push(&z_c + z_j);
    }
    Ok(Estimate {
        x_hat,
        diagnostics: Diagnostics {
            iterations: Some(l),
            supports: Some(supports),
            z_common: Some(z_c),
            flags,
            ..Diagnostics::default()
        },
    })
}

/// Solve for the common component on the measurement subspace orthogonal
/// to the current innovation support columns:
/// `ytilde_j = Q_j^T y_j`, `Phitilde_j = Q_j^T Phi_j`, then a stacked
/// pseudoinverse solve. An empty support makes `Q_j` the identity.
pub fn refine_common(
    y: &MeasurementEnsemble,
    supports: &[Vec<usize>],
) -> Result<DVector<f64>> {
    let j_count = y.sensor_count();
    let n = y.signal_len();
    let mut blocks_a = Vec::new();
    let mut blocks_y = Vec::new();
    for (j, support) in supports.iter().enumerate().take(j_count) {
        let m = y.m(j);
        if m == 0 {
            continue;
        }
        if support.is_empty() {
            blocks_a.push(y.phi(j).clone());
            blocks_y.push(y.y(j).clone());
        } else if support.len() < m {
            let cols: Vec<_> = support
                .iter()
                .map(|&i| y.phi(j).column(i).into_owned())
                .collect();
            let sub = DMatrix::from_columns(&cols);
            let q = orthogonal_complement(&sub)?;
            blocks_a.push(q.transpose() * y.phi(j));
            blocks_y.push(q.transpose() * y.y(j));
        }
        // supports[j].len() == m: no orthogonal directions remain
    }
    let rows: usize = blocks_a.iter().map(DMatrix::nrows).sum();
    if rows < n {
        return Err(DcsError::RankDeficient);
    }
    let mut a = DMatrix::zeros(rows, n);
    let mut rhs = DVector::zeros(rows);
    let mut row0 = 0;
    for (block, yb) in blocks_a.iter().zip(&blocks_y) {
        a.view_mut((row0, 0), (block.nrows(), n)).copy_from(block);
        rhs.rows_mut(row0, yb.len()).copy_from(yb);
        row0 += block.nrows();
    }
    least_squares_min_norm(&a, &rhs)
}
