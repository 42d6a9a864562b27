//! Monte Carlo harness: success-probability sweeps over measurement
//! grids, minimal-measurement searches, gamma line search, and rate
//! region tables, all with derived per-trial seeds so reruns are
//! bit-identical and trials can run in parallel.

use crate::bounds::{conjecture1_region, theorem6_region, MeasurementAllocation};
use crate::ensemble::{generate, JsmKind, StochasticModel, SupportSpec};
use crate::recovery::{
    crossval::crossval_recover,
    jsm1::{jsm1_gamma_recover, jsm1_two_stage_recover, two_stage_measure, TwoStageSetup},
    jsm2::{dcs_somp, tp_recover},
    jsm3::{acie, tecc, InnerSolver, SupportMethod},
    measure_unit, separate_recover, Estimate, SeparateMethod,
};
use crate::{derive_seed, DcsError, Result};
use rayon::prelude::*;
use std::fmt::Write as _;

/// Recovery algorithm selector, named as on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Crossval,
    GammaL1,
    TwoStage,
    Tp,
    DcsSomp,
    Tecc,
    Acie,
    SeparateL1,
    SeparateOmp,
    SeparateL0,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Crossval => "crossval",
            Algorithm::GammaL1 => "gamma-l1",
            Algorithm::TwoStage => "two-stage",
            Algorithm::Tp => "tp",
            Algorithm::DcsSomp => "dcs-somp",
            Algorithm::Tecc => "tecc",
            Algorithm::Acie => "acie",
            Algorithm::SeparateL1 => "separate-l1",
            Algorithm::SeparateOmp => "separate-omp",
            Algorithm::SeparateL0 => "separate-l0",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "crossval" => Algorithm::Crossval,
            "gamma-l1" => Algorithm::GammaL1,
            "two-stage" => Algorithm::TwoStage,
            "tp" => Algorithm::Tp,
            "dcs-somp" => Algorithm::DcsSomp,
            "tecc" => Algorithm::Tecc,
            "acie" => Algorithm::Acie,
            "separate-l1" => Algorithm::SeparateL1,
            "separate-omp" => Algorithm::SeparateOmp,
            "separate-l0" => Algorithm::SeparateL0,
            other => return Err(DcsError::Parse(format!("unknown algorithm `{other}`"))),
        })
    }
}

/// How supports are drawn: exact per-component sizes or Bernoulli rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityMode {
    Exact { kc: usize, ki: usize },
    Rates { sc: f64, si: f64 },
}

impl SparsityMode {
    fn support_spec(self, j_count: usize) -> SupportSpec {
        match self {
            SparsityMode::Exact { kc, ki } => SupportSpec::fixed_symmetric(kc, ki, j_count),
            SparsityMode::Rates { sc, si } => SupportSpec::bernoulli_symmetric(sc, si, j_count),
        }
    }

    /// Nominal (expected) component sparsities, for reporting.
    fn nominal(self, n: usize) -> (usize, usize) {
        match self {
            SparsityMode::Exact { kc, ki } => (kc, ki),
            SparsityMode::Rates { sc, si } => {
                ((sc * n as f64).round() as usize, (si * n as f64).round() as usize)
            }
        }
    }
}

/// Full description of a sweep: the cell grid is the cartesian product
/// of `j_list` x `alpha_list` x `gamma_grid` x `m_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub model: JsmKind,
    pub algorithm: Algorithm,
    pub n: usize,
    pub j_list: Vec<usize>,
    pub sparsity: SparsityMode,
    pub m_grid: Vec<usize>,
    pub alpha_list: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub success_threshold: f64,
    /// Column-count budget for the cross-validation decoder.
    pub crossval_bound: usize,
    /// Shared-row count for the two-stage decoder (rows beyond it split
    /// evenly between the two sensors).
    pub m_common: usize,
    /// Iteration count for the alternating decoder.
    pub acie_iters: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DcsError::Parse("n must be positive".into()));
        }
        if self.j_list.is_empty() || self.m_grid.is_empty() {
            return Err(DcsError::Parse("j and m grids must be nonempty".into()));
        }
        if self.alpha_list.is_empty() || self.gamma_grid.is_empty() {
            return Err(DcsError::Parse("alpha and gamma grids must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(DcsError::Parse("trials must be at least 1".into()));
        }
        if self.alpha_list.iter().any(|&a| a <= 0.0) {
            return Err(DcsError::Parse("alpha values must be positive".into()));
        }
        if self.gamma_grid.iter().any(|&g| g <= 0.0) {
            return Err(DcsError::Parse("gamma values must be positive".into()));
        }
        if self.success_threshold.is_nan() || self.success_threshold <= 0.0 {
            return Err(DcsError::Parse("threshold must be positive".into()));
        }
        Ok(())
    }

    /// Parse a plain-text spec of `key = value` lines. `#` starts a
    /// comment. List values are comma-separated; integer lists also
    /// accept inclusive ranges `a..b`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = ExperimentSpec {
            model: JsmKind::Jsm1,
            algorithm: Algorithm::SeparateL1,
            n: 0,
            j_list: vec![],
            sparsity: SparsityMode::Exact { kc: 0, ki: 0 },
            m_grid: vec![],
            alpha_list: vec![1.0],
            gamma_grid: vec![1.0],
            trials: 100,
            base_seed: 0,
            success_threshold: crate::SUCCESS_THRESHOLD,
            crossval_bound: 10,
            m_common: 0,
            acie_iters: 10,
        };
        let mut kc = None;
        let mut ki = None;
        let mut sc = None;
        let mut si = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DcsError::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "model" => spec.model = JsmKind::parse(value)?,
                "algo" => spec.algorithm = Algorithm::parse(value)?,
                "n" => spec.n = parse_num(key, value)?,
                "j" => spec.j_list = parse_usize_list(key, value)?,
                "kc" => kc = Some(parse_num(key, value)?),
                "ki" => ki = Some(parse_num(key, value)?),
                "sc" => sc = Some(parse_float(key, value)?),
                "si" => si = Some(parse_float(key, value)?),
                "m" => spec.m_grid = parse_usize_list(key, value)?,
                "alpha" => spec.alpha_list = parse_float_list(key, value)?,
                "gamma" => spec.gamma_grid = parse_float_list(key, value)?,
                "trials" => spec.trials = parse_num(key, value)?,
                "seed" => spec.base_seed = parse_num(key, value)?,
                "threshold" => spec.success_threshold = parse_float(key, value)?,
                "crossval_bound" => spec.crossval_bound = parse_num(key, value)?,
                "m_common" => spec.m_common = parse_num(key, value)?,
                "acie_iters" => spec.acie_iters = parse_num(key, value)?,
                other => return Err(DcsError::Parse(format!("unknown key `{other}`"))),
            }
        }
        spec.sparsity = match (kc, ki, sc, si) {
            (Some(kc), Some(ki), None, None) => SparsityMode::Exact { kc, ki },
            (None, None, Some(sc), Some(si)) => SparsityMode::Rates { sc, si },
            (None, None, None, None) => {
                return Err(DcsError::Parse("specify kc/ki or sc/si".into()))
            }
            _ => {
                return Err(DcsError::Parse(
                    "specify either kc/ki or sc/si, not a mixture".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| DcsError::Parse(format!("invalid value for `{key}`: `{value}`")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    parse_num(key, value)
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = parse_num(key, a.trim())?;
            let b: usize = parse_num(key, b.trim())?;
            if b < a {
                return Err(DcsError::Parse(format!("empty range in `{key}`")));
            }
            out.extend(a..=b);
        } else {
            out.push(parse_num(key, part)?);
        }
    }
    Ok(out)
}

fn parse_float_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|p| parse_float(key, p.trim())).collect()
}

/// One grid cell's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub j: usize,
    pub m1: usize,
    pub m2: usize,
    pub alpha: f64,
    pub gamma_c: f64,
    pub trials: usize,
    pub successes: usize,
}

impl SweepRow {
    pub fn probability(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// A completed sweep. `wall_seconds` is informational only and is not
/// serialized, so the CSV is reproducible byte for byte.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<SweepRow>,
    pub errors: Vec<String>,
    pub wall_seconds: f64,
}

pub const SWEEP_CSV_HEADER: &str =
    "model,algo,N,J,Kc,Ki,M1,M2,alpha,gammaC,trials,successes,prob,sec";

impl SweepReport {
    /// CSV with the fixed sweep schema. The `sec` column is pinned to 0
    /// so identical spec + seed reruns emit identical bytes.
    pub fn to_csv(&self) -> String {
        let (kc, ki) = self.spec.sparsity.nominal(self.spec.n);
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},0.000",
                self.spec.model.as_str(),
                self.spec.algorithm.as_str(),
                self.spec.n,
                row.j,
                kc,
                ki,
                row.m1,
                row.m2,
                row.alpha,
                row.gamma_c,
                row.trials,
                row.successes,
                row.probability(),
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Per-sensor measurement counts for a cell: sensor 0 gets `m1`, every
/// other sensor gets `round(alpha * m1)`.
fn cell_allocation(j: usize, m1: usize, alpha: f64) -> Result<MeasurementAllocation> {
    let m2 = (alpha * m1 as f64).round() as usize;
    let mut m = vec![m2; j];
    m[0] = m1;
    MeasurementAllocation::new(m)
}

/// Run one trial; `Ok(true)` means every signal was recovered within the
/// relative error threshold.
fn run_trial(
    spec: &ExperimentSpec,
    j: usize,
    m1: usize,
    alpha: f64,
    gamma_c: f64,
    seed: u64,
) -> Result<bool> {
    let stoch = StochasticModel {
        support: spec.sparsity.support_spec(j),
        coefficient_std: 1.0,
        seed: derive_seed(seed, &[1]),
    };
    let x = generate(spec.model, &stoch, spec.n, j)?;
    let measure_seed = derive_seed(seed, &[2]);
    let (kc, ki) = spec.sparsity.nominal(spec.n);

    let estimate: Option<Estimate> = match spec.algorithm {
        Algorithm::TwoStage => {
            if j != 2 {
                return Err(DcsError::InvalidParameter(
                    "two-stage decoding needs exactly two sensors".into(),
                ));
            }
            let m2 = (alpha * m1 as f64).round() as usize;
            let shared = spec.m_common.min(m1).min(m2);
            let setup = TwoStageSetup {
                m_common: shared,
                m_unique: [m1 - shared, m2 - shared],
            };
            let y = two_stage_measure(&x, setup, measure_seed)?;
            Some(jsm1_two_stage_recover(&y, setup)?)
        }
        _ => {
            let alloc = cell_allocation(j, m1, alpha)?;
            let y = measure_unit(&x, &alloc, measure_seed)?;
            match spec.algorithm {
                Algorithm::Crossval => crossval_recover(&y, spec.model, spec.crossval_bound)?,
                Algorithm::GammaL1 => {
                    let mut gammas = vec![1.0; j + 1];
                    gammas[0] = gamma_c;
                    Some(jsm1_gamma_recover(&y, &gammas)?)
                }
                Algorithm::Tp => tp_recover(&y, kc + ki)?.estimate,
                Algorithm::DcsSomp => Some(dcs_somp(&y, 1e-6)?),
                Algorithm::Tecc => Some(tecc(&y, &vec![ki; j], InnerSolver::Omp)?),
                Algorithm::Acie => {
                    let method = if spec.model == JsmKind::Jsm3CommonSupport {
                        SupportMethod::Somp
                    } else {
                        SupportMethod::Omp
                    };
                    Some(acie(&y, ki, spec.acie_iters, method)?)
                }
                Algorithm::SeparateL1 => Some(separate_recover(&y, SeparateMethod::L1)?),
                Algorithm::SeparateOmp => {
                    Some(separate_recover(&y, SeparateMethod::Omp { k: kc + ki })?)
                }
                Algorithm::SeparateL0 => {
                    Some(separate_recover(&y, SeparateMethod::L0 { k_max: kc + ki })?)
                }
                Algorithm::TwoStage => unreachable!("handled above"),
            }
        }
    };

    let Some(est) = estimate else { return Ok(false) };
    let result = est.against(&x);
    Ok(result
        .per_signal_rel_error
        .iter()
        .all(|&e| e < spec.success_threshold))
}

/// Run one grid cell: `trials` independent draws with seeds derived from
/// the base seed and the cell index, reduced in trial order regardless
/// of scheduling. Solver errors count as failures and are reported.
fn run_cell(
    spec: &ExperimentSpec,
    cell: u64,
    j: usize,
    m1: usize,
    alpha: f64,
    gamma_c: f64,
) -> (SweepRow, Vec<String>) {
    let outcomes: Vec<(bool, Option<String>)> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(spec.base_seed, &[cell, trial as u64]);
            match run_trial(spec, j, m1, alpha, gamma_c, seed) {
                Ok(success) => (success, None),
                Err(e) => (
                    false,
                    Some(format!("cell {cell} trial {trial}: {e}")),
                ),
            }
        })
        .collect();
    let successes = outcomes.iter().filter(|(s, _)| *s).count();
    let errors = outcomes.into_iter().filter_map(|(_, e)| e).collect();
    let m2 = (alpha * m1 as f64).round() as usize;
    (
        SweepRow {
            j,
            m1,
            m2,
            alpha,
            gamma_c,
            trials: spec.trials,
            successes,
        },
        errors,
    )
}

/// Stable cell index for seed derivation, independent of which grid
/// entries are actually run.
fn cell_index(spec: &ExperimentSpec, ji: usize, ai: usize, gi: usize, mi: usize) -> u64 {
    let ng = spec.gamma_grid.len() as u64;
    let nm = spec.m_grid.len() as u64;
    ((ji as u64 * spec.alpha_list.len() as u64 + ai as u64) * ng + gi as u64) * nm + mi as u64
}

/// Evaluate every grid cell.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let start = std::time::Instant::now();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (ji, &j) in spec.j_list.iter().enumerate() {
        for (ai, &alpha) in spec.alpha_list.iter().enumerate() {
            for (gi, &gamma_c) in spec.gamma_grid.iter().enumerate() {
                for (mi, &m1) in spec.m_grid.iter().enumerate() {
                    let cell = cell_index(spec, ji, ai, gi, mi);
                    let (row, errs) = run_cell(spec, cell, j, m1, alpha, gamma_c);
                    rows.push(row);
                    errors.extend(errs);
                }
            }
        }
    }
    Ok(SweepReport {
        spec: spec.clone(),
        rows,
        errors,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Result of a minimal-measurement search for one (J, alpha, gamma)
/// combination.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMeasurement {
    pub j: usize,
    pub alpha: f64,
    pub gamma_c: f64,
    /// First grid `m1` whose empirical success probability reaches the
    /// target, or `None` if the grid is exhausted.
    pub m1: Option<usize>,
}

/// Scan `m_grid` upward per (J, alpha, gamma) combination and return the
/// first measurement count whose empirical success reaches `target`.
pub fn min_measurements(spec: &ExperimentSpec, target: f64) -> Result<Vec<MinMeasurement>> {
    spec.validate()?;
    let mut out = Vec::new();
    for (ji, &j) in spec.j_list.iter().enumerate() {
        for (ai, &alpha) in spec.alpha_list.iter().enumerate() {
            for (gi, &gamma_c) in spec.gamma_grid.iter().enumerate() {
                let mut found = None;
                for (mi, &m1) in spec.m_grid.iter().enumerate() {
                    let cell = cell_index(spec, ji, ai, gi, mi);
                    let (row, _) = run_cell(spec, cell, j, m1, alpha, gamma_c);
                    if row.probability() >= target {
                        found = Some(m1);
                        break;
                    }
                }
                out.push(MinMeasurement {
                    j,
                    alpha,
                    gamma_c,
                    m1: found,
                });
            }
        }
    }
    Ok(out)
}

/// Evaluate empirical success for each gamma in the grid (first entries
/// of the J/alpha/m grids fix the instance family) and return the argmax
/// together with the full curve. Ties break toward the smaller gamma.
pub fn gamma_line_search(spec: &ExperimentSpec) -> Result<(f64, Vec<(f64, f64)>)> {
    spec.validate()?;
    let j = spec.j_list[0];
    let alpha = spec.alpha_list[0];
    let m1 = spec.m_grid[0];
    let mut curve = Vec::new();
    for (gi, &gamma_c) in spec.gamma_grid.iter().enumerate() {
        let cell = cell_index(spec, 0, 0, gi, 0);
        let (row, _) = run_cell(spec, cell, j, m1, alpha, gamma_c);
        curve.push((gamma_c, row.probability()));
    }
    let mut best = curve[0];
    for &(g, p) in &curve[1..] {
        if p > best.1 || (p == best.1 && g < best.0) {
            best = (g, p);
        }
    }
    Ok((best.0, curve))
}

/// One rate-region table entry: the minimal (M1, M2 = alpha M1) pair for
/// an aspect ratio, with the analytic region curves evaluated at the
/// corresponding rate split for overlay plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRegionRow {
    pub alpha: f64,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    /// Empirical rates (M/N); zero when the grid was exhausted.
    pub r1: f64,
    pub r2: f64,
    /// (per-sensor minimum rate, minimum sum rate) overlays.
    pub conjecture1: (f64, f64),
    pub theorem6: (f64, f64),
}

/// For each aspect ratio, search the minimal measurement pair achieving
/// `target` success and attach the analytic region curves.
pub fn rate_region_sweep(
    spec: &ExperimentSpec,
    s_c: f64,
    s_i: f64,
    target: f64,
) -> Result<Vec<RateRegionRow>> {
    spec.validate()?;
    let minima = min_measurements(spec, target)?;
    let conjecture1 = conjecture1_region(s_c, s_i)?;
    let theorem6 = theorem6_region(s_c, s_i)?;
    let mut out = Vec::new();
    for mm in minima {
        let m2 = mm.m1.map(|m1| (mm.alpha * m1 as f64).round() as usize);
        out.push(RateRegionRow {
            alpha: mm.alpha,
            m1: mm.m1,
            m2,
            r1: mm.m1.map_or(0.0, |m| m as f64 / spec.n as f64),
            r2: m2.map_or(0.0, |m| m as f64 / spec.n as f64),
            conjecture1,
            theorem6,
        });
    }
    Ok(out)
}

/// CSV for a rate-region table; exhausted grids print `NA`.
pub fn rate_region_csv(rows: &[RateRegionRow]) -> String {
    let mut out =
        String::from("alpha,M1,M2,R1,R2,conj1_rmin,conj1_rsum,thm6_rmin,thm6_rsum\n");
    for row in rows {
        let fmt = |m: Option<usize>| m.map_or("NA".to_string(), |v| v.to_string());
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.alpha,
            fmt(row.m1),
            fmt(row.m2),
            row.r1,
            row.r2,
            row.conjecture1.0,
            row.conjecture1.1,
            row.theorem6.0,
            row.theorem6.1,
        )
        .expect("writing to a String cannot fail");
    }
    out
}
