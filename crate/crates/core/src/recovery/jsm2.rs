//! Decoders for shared-support ensembles.
//!
//! Trivial Pursuit (TP) estimates the common support in one shot from
//! averaged squared correlations; DCS-SOMP greedily selects columns by
//! total residual correlation across sensors with per-sensor
//! Gram-Schmidt residual updates and a QR de-orthogonalization step.

use super::{Diagnostics, Estimate, MeasurementEnsemble};
use crate::solvers::least_squares_min_norm;
use crate::{DcsError, Result};
use nalgebra::{DMatrix, DVector};

/// Averaged squared correlation statistics
/// `xi_n = (1/J) sum_j <y_j, phi_{j,n}>^2`. Requires an equal number of
/// measurements per sensor.
pub fn tp_statistics(y: &MeasurementEnsemble) -> Result<DVector<f64>> {
    let j_count = y.sensor_count();
    let m = y.m(0);
    if (1..j_count).any(|j| y.m(j) != m) {
        return Err(DcsError::InvalidParameter(
            "TP requires an equal number of measurements per sensor".into(),
        ));
    }
    let n = y.signal_len();
    let mut xi = DVector::zeros(n);
    for j in 0..j_count {
        let corr = y.phi(j).transpose() * y.y(j);
        for i in 0..n {
            xi[i] += corr[i] * corr[i];
        }
    }
    Ok(xi / j_count as f64)
}

/// TP outcome: the estimated shared support and, when each sensor has at
/// least `k` measurements, the per-sensor coefficient estimates.
#[derive(Debug, Clone)]
pub struct TpOutcome {
    pub support: Vec<usize>,
    pub estimate: Option<Estimate>,
}

/// One-shot support estimation: the `k` indices with the largest
/// statistics (ties break to the lowest index). Coefficients are fit by
/// least squares per sensor when `M_j >= k`; otherwise the support alone
/// is returned, since the coefficients are not identifiable.
pub fn tp_recover(y: &MeasurementEnsemble, k: usize) -> Result<TpOutcome> {
    let xi = tp_statistics(y)?;
    let n = y.signal_len();
    if k > n {
        return Err(DcsError::InvalidParameter(format!(
            "support size {k} exceeds signal length {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xi[b].partial_cmp(&xi[a]).unwrap().then(a.cmp(&b)));
    let mut support: Vec<usize> = order.into_iter().take(k).collect();
    support.sort_unstable();

    let m_min = (0..y.sensor_count()).map(|j| y.m(j)).min().unwrap_or(0);
    let estimate = if m_min >= k {
        let mut x_hat = Vec::with_capacity(y.sensor_count());
        for j in 0..y.sensor_count() {
            let cols: Vec<_> = support.iter().map(|&i| y.phi(j).column(i).into_owned()).collect();
            let sub = DMatrix::from_columns(&cols);
            let coeffs = least_squares_min_norm(&sub, y.y(j))?;
            x_hat.push(super::embed(n, &support, &coeffs));
        }
        Some(Estimate {
            x_hat,
            diagnostics: Diagnostics {
                supports: Some(vec![support.clone(); y.sensor_count()]),
                ..Diagnostics::default()
            },
        })
    } else {
        None
    };
    Ok(TpOutcome { support, estimate })
}

/// Greedy joint selection: pick the column maximizing the summed
/// normalized residual correlations, orthogonalize it per sensor against
/// the previously selected (unnormalized Gram-Schmidt), and update the
/// orthogonal expansion coefficients. Runs for at most `max_iters`
/// rounds; stops early when every residual falls to `epsilon` times its
/// measurement norm. Returns the selection order, per-sensor
/// orthogonalized columns and coefficients.
struct SompState {
    support: Vec<usize>,
    /// gamma_{j,l} per sensor, in selection order.
    ortho: Vec<Vec<DVector<f64>>>,
    /// beta_j(l) per sensor.
    beta: Vec<Vec<f64>>,
    aborted: bool,
}

fn somp_select(
    phis: &[&DMatrix<f64>],
    ys: &[&DVector<f64>],
    epsilon: f64,
    max_iters: usize,
) -> SompState {
    let j_count = phis.len();
    let n = phis[0].ncols();
    let col_norms: Vec<Vec<f64>> = phis
        .iter()
        .map(|phi| (0..n).map(|i| phi.column(i).norm()).collect())
        .collect();
    let y_norms: Vec<f64> = ys.iter().map(|y| y.norm()).collect();
    let mut residuals: Vec<DVector<f64>> = ys.iter().map(|y| (*y).clone()).collect();
    let mut selected = vec![false; n];
    let mut state = SompState {
        support: Vec::new(),
        ortho: vec![Vec::new(); j_count],
        beta: vec![Vec::new(); j_count],
        aborted: false,
    };
    for _ in 0..max_iters {
        let converged = (0..j_count)
            .all(|j| residuals[j].norm() <= epsilon * y_norms[j] || y_norms[j] == 0.0);
        if converged {
            break;
        }
        // Step 2: select by summed normalized correlation, lowest index on ties
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let mut score = 0.0;
            for j in 0..j_count {
                if col_norms[j][i] > 1e-300 {
                    score += phis[j].column(i).dot(&residuals[j]).abs() / col_norms[j][i];
                }
            }
            if score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(pick) = best else { break };
        selected[pick] = true;
        state.support.push(pick);
        // Steps 3-4: per-sensor orthogonalization and coefficient update
        for j in 0..j_count {
            let mut gamma = phis[j].column(pick).into_owned();
            for g in &state.ortho[j] {
                let c = gamma.dot(g) / g.norm_squared();
                gamma -= g * c;
            }
            if gamma.norm() < 1e-12 {
                state.aborted = true;
                state.support.pop();
                return state;
            }
            let b = residuals[j].dot(&gamma) / gamma.norm_squared();
            residuals[j] -= &gamma * b;
            state.beta[j].push(b);
            state.ortho[j].push(gamma);
        }
    }
    state
}

/// Joint greedy recovery for shared-support ensembles. `epsilon` is the
/// relative residual threshold for convergence.
pub fn dcs_somp(y: &MeasurementEnsemble, epsilon: f64) -> Result<Estimate> {
    let j_count = y.sensor_count();
    let n = y.signal_len();
    if epsilon < 0.0 {
        return Err(DcsError::InvalidParameter(
            "convergence threshold must be nonnegative".into(),
        ));
    }
    let max_iters = (0..j_count).map(|j| y.m(j)).min().unwrap_or(0);
    let phis: Vec<&DMatrix<f64>> = (0..j_count).map(|j| y.phi(j)).collect();
    let ys: Vec<&DVector<f64>> = (0..j_count).map(|j| y.y(j)).collect();
    let state = somp_select(&phis, &ys, epsilon, max_iters);

    // Step 6: de-orthogonalize. Phi_{j,support} = Gamma_j R_j with
    // Gamma_j orthogonal (not orthonormal), so
    // R_j = diag(||gamma||^2)^{-1} Gamma_j^T Phi_{j,support}, and the
    // coefficients solve the upper-triangular system R_j x = beta_j.
    let ell = state.support.len();
    let mut x_hat = Vec::with_capacity(j_count);
    for j in 0..j_count {
        if ell == 0 {
            x_hat.push(DVector::zeros(n));
            continue;
        }
        let mut r = DMatrix::zeros(ell, ell);
        for (row, g) in state.ortho[j].iter().enumerate() {
            let g2 = g.norm_squared();
            for (col, &idx) in state.support.iter().enumerate() {
                r[(row, col)] = g.dot(&y.phi(j).column(idx)) / g2;
            }
        }
        // back substitution: r is upper triangular by construction
        let mut coeffs = DVector::from_vec(state.beta[j].clone());
        for i in (0..ell).rev() {
            let mut s = coeffs[i];
            for k in i + 1..ell {
                s -= r[(i, k)] * coeffs[k];
            }
            coeffs[i] = s / r[(i, i)];
        }
        x_hat.push(super::embed(n, &state.support, &coeffs));
    }
    let mut flags = Vec::new();
    if state.aborted {
        flags.push("orthogonalized column vanished; partial result".into());
    }
    Ok(Estimate {
        x_hat,
        diagnostics: Diagnostics {
            iterations: Some(ell),
            supports: Some(vec![state.support; j_count]),
            flags,
            ..Diagnostics::default()
        },
    })
}

/// Shared-support estimation for the alternating decoder: run the joint
/// greedy selection for exactly `k` rounds and return the chosen indices
/// (ascending).
pub(crate) fn somp_support(
    phis: &[&DMatrix<f64>],
    ys: &[&DVector<f64>],
    k: usize,
) -> Vec<usize> {
    let mut support = somp_select(phis, ys, 0.0, k).support;
    support.sort_unstable();
    support
}
