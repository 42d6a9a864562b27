//! Combinatorial decoder with a reserved verification measurement.
//!
//! The last measurement of every sensor is held out and summed into a
//! single global test measurement. Candidate location matrices are
//! enumerated in ascending column count; each candidate is fit by least
//! squares on the remaining measurements and accepted only if the held-out
//! measurement agrees. Equivalent to l0 minimization over the value vector
//! with a cross-validation accept test.

use super::{Diagnostics, Estimate, MeasurementEnsemble};
use crate::ensemble::{JsmKind, LocationMatrix};
use crate::solvers::least_squares_min_norm;
use crate::{DcsError, Result};
use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

/// Size guards: exponential candidate enumeration.
pub const MAX_TOTAL_DIMENSION: usize = 20;
pub const MAX_COLUMN_BOUND: usize = 12;

/// Relative acceptance tolerance for the verification measurement and the
/// least-squares existence check.
const FIT_TOL: f64 = 1e-8;

/// Enumerate the location-matrix family of a model over `n` indices and
/// `j_count` sensors, ascending by column count (ties lexicographic).
fn candidates(
    model: JsmKind,
    n: usize,
    j_count: usize,
    bound: usize,
) -> Box<dyn Iterator<Item = LocationMatrix>> {
    match model {
        JsmKind::Jsm1 => {
            // slots are (group, column): group 0 common, group j+1 sensor j
            let slots = (j_count + 1) * n;
            Box::new((0..=bound.min(slots)).flat_map(move |d| {
                (0..slots).combinations(d).map(move |combo| {
                    let mut common = Vec::new();
                    let mut innov = vec![Vec::new(); j_count];
                    for slot in combo {
                        let (group, col) = (slot / n, slot % n);
                        if group == 0 {
                            common.push(col);
                        } else {
                            innov[group - 1].push(col);
                        }
                    }
                    LocationMatrix::new(n, common, innov).expect("slots are valid columns")
                })
            }))
        }
        JsmKind::Jsm2 => Box::new(
            (0..=n)
                .take_while(move |k| k * j_count <= bound)
                .flat_map(move |k| {
                    (0..n).combinations(k).map(move |support| {
                        LocationMatrix::new(n, vec![], vec![support; j_count])
                            .expect("support columns valid")
                    })
                }),
        ),
        JsmKind::Jsm3 => {
            let slots = j_count * n;
            Box::new(
                (0..=bound.saturating_sub(n).min(slots)).flat_map(move |extra| {
                    (0..slots).combinations(extra).map(move |combo| {
                        let mut innov = vec![Vec::new(); j_count];
                        for slot in combo {
                            innov[slot / n].push(slot % n);
                        }
                        LocationMatrix::new(n, (0..n).collect(), innov)
                            .expect("slots are valid columns")
                    })
                }),
            )
        }
        JsmKind::Jsm3CommonSupport => Box::new(
            (0..=n)
                .take_while(move |k| n + k * j_count <= bound)
                .flat_map(move |k| {
                    (0..n).combinations(k).map(move |support| {
                        LocationMatrix::new(n, (0..n).collect(), vec![support; j_count])
                            .expect("support columns valid")
                    })
                }),
        ),
    }
}

/// `A = working-measurement block-diagonal operator applied to P`:
/// row (j, m) and column c interact only when column c belongs to the
/// common block or to sensor j.
fn working_times_p(y: &MeasurementEnsemble, p: &LocationMatrix) -> DMatrix<f64> {
    let j_count = y.sensor_count();
    let rows: usize = (0..j_count).map(|j| y.m(j) - 1).sum();
    let d = p.column_count();
    let mut a = DMatrix::zeros(rows, d);
    let mut row0 = 0;
    for j in 0..j_count {
        let phi = y.phi(j);
        for m in 0..y.m(j) - 1 {
            let mut c = 0;
            for &col in p.common_cols() {
                a[(row0 + m, c)] = phi[(m, col)];
                c += 1;
            }
            for sensor in 0..j_count {
                for &col in p.innovation_cols(sensor) {
                    if sensor == j {
                        a[(row0 + m, c)] = phi[(m, col)];
                    }
                    c += 1;
                }
            }
        }
        row0 += y.m(j) - 1;
    }
    a
}

fn stack_working(y: &MeasurementEnsemble) -> DVector<f64> {
    let mut out = Vec::new();
    for j in 0..y.sensor_count() {
        out.extend(y.y(j).iter().take(y.m(j) - 1).copied());
    }
    DVector::from_vec(out)
}

/// Run the cross-validation decoder. Returns `Ok(None)` when no candidate
/// within the column bound passes verification.
pub fn crossval_recover(
    y: &MeasurementEnsemble,
    model: JsmKind,
    bound: usize,
) -> Result<Option<Estimate>> {
    let n = y.signal_len();
    let j_count = y.sensor_count();
    if n * j_count > MAX_TOTAL_DIMENSION {
        return Err(DcsError::SizeGuard(format!(
            "cross-validation search limited to J*N <= {MAX_TOTAL_DIMENSION}, got {}",
            n * j_count
        )));
    }
    if bound > MAX_COLUMN_BOUND {
        return Err(DcsError::SizeGuard(format!(
            "column bound limited to {MAX_COLUMN_BOUND}, got {bound}"
        )));
    }
    if (0..j_count).any(|j| y.m(j) < 1) {
        return Err(DcsError::InvalidParameter(
            "every sensor needs at least one measurement for verification".into(),
        ));
    }

    // global test measurement: sum of each sensor's last measurement
    let test_y: f64 = (0..j_count).map(|j| y.y(j)[y.m(j) - 1]).sum();
    let test_rows: Vec<DVector<f64>> = (0..j_count)
        .map(|j| y.phi(j).row(y.m(j) - 1).transpose())
        .collect();
    let working_y = stack_working(y);
    let accept_tol = FIT_TOL * (1.0 + test_y.abs());
    let fit_tol = FIT_TOL * (1.0 + working_y.norm());

    for p in candidates(model, n, j_count, bound) {
        let a = working_times_p(y, &p);
        let theta = if p.column_count() == 0 {
            DVector::zeros(0)
        } else {
            match least_squares_min_norm(&a, &working_y) {
                Ok(t) => t,
                Err(_) => continue,
            }
        };
        if (&a * &theta - &working_y).norm() > fit_tol {
            continue; // no solution exists for this candidate
        }
        let signals = candidate_signals(&p, &theta);
        let predicted: f64 = (0..j_count).map(|j| test_rows[j].dot(&signals[j])).sum();
        if (predicted - test_y).abs() < accept_tol {
            let supports = (0..j_count)
                .map(|j| {
                    let mut s: Vec<usize> = p
                        .common_cols()
                        .iter()
                        .chain(p.innovation_cols(j))
                        .copied()
                        .collect();
                    s.sort_unstable();
                    s.dedup();
                    s
                })
                .collect();
            return Ok(Some(Estimate {
                x_hat: signals,
                diagnostics: Diagnostics {
                    supports: Some(supports),
                    ..Diagnostics::default()
                },
            }));
        }
    }
    Ok(None)
}

/// `X_P = P Theta` split into per-sensor signals, with theta laid out as
/// `[theta_C, theta_1, ..., theta_J]`.
fn candidate_signals(p: &LocationMatrix, theta: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = p.signal_len();
    let mut z_c = DVector::zeros(n);
    let mut c = 0;
    for &col in p.common_cols() {
        z_c[col] = theta[c];
        c += 1;
    }
    let mut signals = Vec::with_capacity(p.sensor_count());
    for j in 0..p.sensor_count() {
        let mut x = z_c.clone();
        for &col in p.innovation_cols(j) {
            x[col] += theta[c];
            c += 1;
        }
        signals.push(x);
    }
    signals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{check_theorem4, MeasurementAllocation};
    use crate::ensemble::{synthesize, ValueVector};
    use crate::recovery::measure_unit;
    use crate::solvers::{gaussian_matrix, l0_oracle, OracleOutcome};
    use crate::SUCCESS_THRESHOLD;
    use nalgebra::DVector;

    #[test]
    fn candidate_order_ascending() {
        let mut last = 0;
        for p in candidates(JsmKind::Jsm1, 3, 2, 4) {
            assert!(p.column_count() >= last);
            last = p.column_count();
        }
        assert_eq!(last, 4);
    }

    #[test]
    fn guards_rejected() {
        let p = LocationMatrix::new(6, vec![], vec![vec![0], vec![1], vec![2], vec![3]]).unwrap();
        let theta = ValueVector {
            common: vec![],
            innovations: vec![vec![1.0]; 4],
        };
        let x = synthesize(&p, &theta).unwrap();
        let alloc = MeasurementAllocation::new(vec![2; 4]).unwrap();
        let y = measure_unit(&x, &alloc, 1).unwrap();
        assert!(matches!(
            crossval_recover(&y, JsmKind::Jsm1, 4),
            Err(DcsError::SizeGuard(_))
        ));

        let p2 = LocationMatrix::new(4, vec![], vec![vec![0], vec![1]]).unwrap();
        let theta2 = ValueVector {
            common: vec![],
            innovations: vec![vec![1.0], vec![1.0]],
        };
        let x2 = synthesize(&p2, &theta2).unwrap();
        let short = MeasurementAllocation::new(vec![2, 0]).unwrap();
        let y2 = measure_unit(&x2, &short, 2).unwrap();
        assert!(crossval_recover(&y2, JsmKind::Jsm1, 2).is_err());
        let ok = MeasurementAllocation::new(vec![2, 2]).unwrap();
        let y3 = measure_unit(&x2, &ok, 2).unwrap();
        assert!(crossval_recover(&y3, JsmKind::Jsm1, 13).is_err());
    }

    #[test]
    fn theorem4_instance_recovers_exactly() {
        // J=2, N=6, disjoint common/innovation columns, D=3;
        // M=(4,4) satisfies the +|Gamma| condition
        let p = LocationMatrix::new(6, vec![0], vec![vec![2], vec![4]]).unwrap();
        let theta = ValueVector {
            common: vec![1.3],
            innovations: vec![vec![-0.7], vec![2.1]],
        };
        let x = synthesize(&p, &theta).unwrap();
        let alloc = MeasurementAllocation::new(vec![4, 4]).unwrap();
        assert!(check_theorem4(&p, &theta, &alloc).unwrap());
        for seed in 0..5 {
            let y = measure_unit(&x, &alloc, 100 + seed).unwrap();
            let est = crossval_recover(&y, JsmKind::Jsm1, 5)
                .unwrap()
                .expect("decoder must accept within bound");
            let res = est.against(&x);
            assert!(res.success, "errors {:?}", res.per_signal_rel_error);
            assert!(res.per_signal_rel_error.iter().all(|&e| e < 1e-6));
        }
    }

    #[test]
    fn converse_instance_fails() {
        // too few working measurements to pin down D=4 degrees of freedom
        let p = LocationMatrix::new(5, vec![0, 1], vec![vec![2], vec![3]]).unwrap();
        let theta = ValueVector {
            common: vec![1.0, -2.0],
            innovations: vec![vec![0.9], vec![1.7]],
        };
        let x = synthesize(&p, &theta).unwrap();
        let alloc = MeasurementAllocation::new(vec![2, 1]).unwrap();
        let mut ok = 0;
        for seed in 0..10 {
            let y = measure_unit(&x, &alloc, 300 + seed).unwrap();
            if let Some(est) = crossval_recover(&y, JsmKind::Jsm1, 5).unwrap() {
                if est.against(&x).success {
                    ok += 1;
                }
            }
        }
        assert!(ok <= 1, "recovered {ok}/10 despite converse violation");
    }

    #[test]
    fn single_sensor_matches_l0_oracle() {
        // J=1 with enough measurements: the accepted candidate gives the
        // same signal as exhaustive l0 on the full measurement set
        let n = 6;
        let mut x0 = DVector::zeros(n);
        x0[1] = 1.0;
        x0[4] = -1.5;
        for seed in 0..5u64 {
            let phi = gaussian_matrix(5, n, 1.0, 700 + seed).unwrap();
            let p = LocationMatrix::new(n, vec![], vec![vec![1, 4]]).unwrap();
            let theta = ValueVector {
                common: vec![],
                innovations: vec![vec![1.0, -1.5]],
            };
            let x = synthesize(&p, &theta).unwrap();
            let y = crate::recovery::MeasurementEnsemble::from_matrices(
                &x,
                vec![phi.clone()],
                vec![1.0],
            )
            .unwrap();
            let est = crossval_recover(&y, JsmKind::Jsm1, 4)
                .unwrap()
                .expect("recovery expected");
            let via_l0 = match l0_oracle(&phi, &(&phi * &x0), 2).unwrap() {
                OracleOutcome::Sparse {
                    support,
                    coefficients,
                } => crate::recovery::embed(n, &support, &coefficients),
                other => panic!("oracle failed: {other:?}"),
            };
            assert!((&est.x_hat[0] - via_l0).norm() < SUCCESS_THRESHOLD);
        }
    }

    #[test]
    fn jsm2_family_recovers_shared_support() {
        let shared = vec![1, 3];
        let p = LocationMatrix::new(5, vec![], vec![shared.clone(), shared.clone()]).unwrap();
        let theta = ValueVector {
            common: vec![],
            innovations: vec![vec![1.0, -2.0], vec![0.5, 1.5]],
        };
        let x = synthesize(&p, &theta).unwrap();
        let alloc = MeasurementAllocation::new(vec![4, 4]).unwrap();
        let y = measure_unit(&x, &alloc, 41).unwrap();
        let est = crossval_recover(&y, JsmKind::Jsm2, 6)
            .unwrap()
            .expect("recovery expected");
        let res = est.against(&x);
        assert!(res.success);
        assert_eq!(res.diagnostics.supports.unwrap()[0], shared);
    }
}
