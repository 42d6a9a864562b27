//! Joint sparsity models and signal-ensemble generation.
//!
//! An ensemble of `J` length-`N` signals is expressed as `x_j = z_C + z_j`:
//! a common component shared by every sensor plus a per-sensor innovation.
//! Support structure lives in a [`LocationMatrix`] (stacked identity
//! submatrices), coefficient values in a [`ValueVector`]; multiplying them
//! reproduces the stacked ensemble.

use crate::{DcsError, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;

/// The joint sparsity model an ensemble was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsmKind {
    /// Sparse common component plus sparse innovations.
    Jsm1,
    /// No common component; innovations share one sparse support.
    Jsm2,
    /// Dense (nonsparse) common component plus sparse innovations.
    Jsm3,
    /// JSM-3 with the innovation supports shared by all sensors.
    Jsm3CommonSupport,
}

impl JsmKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            JsmKind::Jsm1 => "jsm1",
            JsmKind::Jsm2 => "jsm2",
            JsmKind::Jsm3 => "jsm3",
            JsmKind::Jsm3CommonSupport => "jsm3-common",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "jsm1" => Ok(JsmKind::Jsm1),
            "jsm2" => Ok(JsmKind::Jsm2),
            "jsm3" => Ok(JsmKind::Jsm3),
            "jsm3-common" => Ok(JsmKind::Jsm3CommonSupport),
            other => Err(DcsError::Parse(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for JsmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Location matrix: a common identity submatrix `P_C` shared by all sensors
/// plus one innovation identity submatrix `P_j` per sensor. Column indices
/// are 0-based and strictly increasing within each submatrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationMatrix {
    n: usize,
    common_cols: Vec<usize>,
    innovation_cols: Vec<Vec<usize>>,
}

fn check_cols(n: usize, cols: &[usize], what: &str) -> Result<()> {
    for (i, &c) in cols.iter().enumerate() {
        if c >= n {
            return Err(DcsError::InvalidLocationMatrix(format!(
                "{what}: column index {c} out of range for signal length {n}"
            )));
        }
        if i > 0 && cols[i - 1] >= c {
            return Err(DcsError::InvalidLocationMatrix(format!(
                "{what}: column indices must be strictly increasing"
            )));
        }
    }
    Ok(())
}

impl LocationMatrix {
    pub fn new(
        n: usize,
        common_cols: Vec<usize>,
        innovation_cols: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if innovation_cols.is_empty() {
            return Err(DcsError::InvalidLocationMatrix(
                "at least one sensor required".into(),
            ));
        }
        check_cols(n, &common_cols, "common submatrix")?;
        for (j, cols) in innovation_cols.iter().enumerate() {
            check_cols(n, cols, &format!("innovation submatrix {j}"))?;
        }
        Ok(LocationMatrix {
            n,
            common_cols,
            innovation_cols,
        })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn sensor_count(&self) -> usize {
        self.innovation_cols.len()
    }

    pub fn common_cols(&self) -> &[usize] {
        &self.common_cols
    }

    pub fn innovation_cols(&self, j: usize) -> &[usize] {
        &self.innovation_cols[j]
    }

    /// `K_C`: number of common columns.
    pub fn k_common(&self) -> usize {
        self.common_cols.len()
    }

    /// `K_j`: number of innovation columns for sensor `j`.
    pub fn k_innovation(&self, j: usize) -> usize {
        self.innovation_cols[j].len()
    }

    /// Total column count `D = K_C + sum_j K_j`.
    pub fn column_count(&self) -> usize {
        self.k_common() + self.innovation_cols.iter().map(Vec::len).sum::<usize>()
    }

    /// Dense 0/1 realization of shape `(J*N) x D`: the common block repeats
    /// down the left, innovation blocks sit on the block diagonal.
    pub fn realize(&self) -> DMatrix<f64> {
        let j_count = self.sensor_count();
        let d = self.column_count();
        let mut m = DMatrix::zeros(j_count * self.n, d);
        for j in 0..j_count {
            let row0 = j * self.n;
            for (c, &idx) in self.common_cols.iter().enumerate() {
                m[(row0 + idx, c)] = 1.0;
            }
        }
        let mut col = self.k_common();
        for (j, cols) in self.innovation_cols.iter().enumerate() {
            let row0 = j * self.n;
            for &idx in cols {
                m[(row0 + idx, col)] = 1.0;
                col += 1;
            }
        }
        m
    }
}

/// Value vector `Theta = [theta_C, theta_1, ..., theta_J]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    pub common: Vec<f64>,
    pub innovations: Vec<Vec<f64>>,
}

impl ValueVector {
    pub fn matches(&self, p: &LocationMatrix) -> bool {
        self.common.len() == p.k_common()
            && self.innovations.len() == p.sensor_count()
            && self
                .innovations
                .iter()
                .enumerate()
                .all(|(j, v)| v.len() == p.k_innovation(j))
    }

    /// Concatenated `[theta_C, theta_1, ..., theta_J]`.
    pub fn concat(&self) -> DVector<f64> {
        let mut out = self.common.clone();
        for v in &self.innovations {
            out.extend_from_slice(v);
        }
        DVector::from_vec(out)
    }
}

/// A generated (or synthesized) signal ensemble together with its
/// generating components. `x_j = z_C + z_j` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEnsemble {
    n: usize,
    model: JsmKind,
    z_common: DVector<f64>,
    z_innovations: Vec<DVector<f64>>,
    signals: Vec<DVector<f64>>,
}

impl SignalEnsemble {
    pub fn from_components(
        model: JsmKind,
        z_common: DVector<f64>,
        z_innovations: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = z_common.len();
        if z_innovations.is_empty() {
            return Err(DcsError::DimensionMismatch("no sensors".into()));
        }
        if z_innovations.iter().any(|z| z.len() != n) {
            return Err(DcsError::DimensionMismatch(
                "component lengths disagree".into(),
            ));
        }
        let signals = z_innovations.iter().map(|z| &z_common + z).collect();
        Ok(SignalEnsemble {
            n,
            model,
            z_common,
            z_innovations,
            signals,
        })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn sensor_count(&self) -> usize {
        self.signals.len()
    }

    pub fn model(&self) -> JsmKind {
        self.model
    }

    pub fn signal(&self, j: usize) -> &DVector<f64> {
        &self.signals[j]
    }

    pub fn signals(&self) -> &[DVector<f64>] {
        &self.signals
    }

    pub fn z_common(&self) -> &DVector<f64> {
        &self.z_common
    }

    pub fn z_innovation(&self, j: usize) -> &DVector<f64> {
        &self.z_innovations[j]
    }

    /// Indices where the common component is nonzero.
    pub fn common_support(&self) -> Vec<usize> {
        support_of(&self.z_common)
    }

    /// Indices where innovation `j` is nonzero.
    pub fn innovation_support(&self, j: usize) -> Vec<usize> {
        support_of(&self.z_innovations[j])
    }

    /// The generating `(P, Theta)` read off the stored components: columns
    /// are the component supports, values the nonzero entries.
    pub fn generating_representation(&self) -> (LocationMatrix, ValueVector) {
        let common_cols = self.common_support();
        let common = common_cols.iter().map(|&i| self.z_common[i]).collect();
        let mut innovation_cols = Vec::with_capacity(self.sensor_count());
        let mut innovations = Vec::with_capacity(self.sensor_count());
        for z in &self.z_innovations {
            let cols = support_of(z);
            innovations.push(cols.iter().map(|&i| z[i]).collect());
            innovation_cols.push(cols);
        }
        let p = LocationMatrix::new(self.n, common_cols, innovation_cols)
            .expect("supports are sorted and in range");
        (p, ValueVector {
            common,
            innovations,
        })
    }

    /// Joint sparsity of the ensemble: the column count of the generating
    /// representation after sparsity reduction.
    pub fn joint_sparsity(&self) -> usize {
        let (p, theta) = self.generating_representation();
        let (reduced, _) = sparsity_reduce(&p, &theta);
        reduced.column_count()
    }
}

fn support_of(v: &DVector<f64>) -> Vec<usize> {
    (0..v.len()).filter(|&i| v[i] != 0.0).collect()
}

/// Multiply out `X = P * Theta` and split the result into per-sensor
/// signals with their components.
pub fn synthesize(p: &LocationMatrix, theta: &ValueVector) -> Result<SignalEnsemble> {
    if !theta.matches(p) {
        return Err(DcsError::DimensionMismatch(
            "value vector does not match location matrix".into(),
        ));
    }
    let n = p.signal_len();
    let mut z_common = DVector::zeros(n);
    for (k, &idx) in p.common_cols().iter().enumerate() {
        z_common[idx] += theta.common[k];
    }
    let mut z_innovations = Vec::with_capacity(p.sensor_count());
    for j in 0..p.sensor_count() {
        let mut z = DVector::zeros(n);
        for (k, &idx) in p.innovation_cols(j).iter().enumerate() {
            z[idx] += theta.innovations[j][k];
        }
        z_innovations.push(z);
    }
    SignalEnsemble::from_components(JsmKind::Jsm1, z_common, z_innovations)
}

/// Remove redundant columns from a representation without changing the
/// ensemble it generates.
///
/// Two reductions apply, repeated to a fixed point:
/// (a) a column index present in `P_C` and in every `P_j` is dropped from
///     `P_C`, folding its value into each innovation entry;
/// (b) a column whose value-vector entry is exactly zero is dropped.
pub fn sparsity_reduce(p: &LocationMatrix, theta: &ValueVector) -> (LocationMatrix, ValueVector) {
    assert!(theta.matches(p), "value vector does not match location matrix");
    let n = p.signal_len();
    let j_count = p.sensor_count();

    // Sparse scratch representation: per-index optional values.
    let mut common: Vec<Option<f64>> = vec![None; n];
    for (k, &idx) in p.common_cols().iter().enumerate() {
        common[idx] = Some(theta.common[k]);
    }
    let mut innov: Vec<Vec<Option<f64>>> = vec![vec![None; n]; j_count];
    for (j, row) in innov.iter_mut().enumerate() {
        for (k, &idx) in p.innovation_cols(j).iter().enumerate() {
            row[idx] = Some(theta.innovations[j][k]);
        }
    }

    let mut changed = true;
    while changed {
        changed = false;
        for idx in 0..n {
            // (b) zero-valued entries
            if common[idx] == Some(0.0) {
                common[idx] = None;
                changed = true;
            }
            for row in innov.iter_mut() {
                if row[idx] == Some(0.0) {
                    row[idx] = None;
                    changed = true;
                }
            }
            // (a) shared column: fold the common value into every innovation
            if let Some(c) = common[idx] {
                if innov.iter().all(|row| row[idx].is_some()) {
                    for row in innov.iter_mut() {
                        let v = row[idx].unwrap();
                        row[idx] = Some(v + c);
                    }
                    common[idx] = None;
                    changed = true;
                }
            }
        }
    }

    let common_cols: Vec<usize> = (0..n).filter(|&i| common[i].is_some()).collect();
    let common_vals = common_cols.iter().map(|&i| common[i].unwrap()).collect();
    let mut innovation_cols = Vec::with_capacity(j_count);
    let mut innovation_vals = Vec::with_capacity(j_count);
    for row in &innov {
        let cols: Vec<usize> = (0..n).filter(|&i| row[i].is_some()).collect();
        innovation_vals.push(cols.iter().map(|&i| row[i].unwrap()).collect());
        innovation_cols.push(cols);
    }
    let reduced = LocationMatrix::new(n, common_cols, innovation_cols)
        .expect("reduction preserves validity");
    (reduced, ValueVector {
        common: common_vals,
        innovations: innovation_vals,
    })
}

/// How supports are drawn during stochastic generation.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportSpec {
    /// Each index enters a support independently with the given rate.
    Bernoulli {
        common_rate: f64,
        innovation_rates: Vec<f64>,
    },
    /// Supports of exactly the given sizes, uniform among all subsets.
    FixedSize {
        common: usize,
        innovations: Vec<usize>,
    },
}

impl SupportSpec {
    pub fn bernoulli_symmetric(common_rate: f64, innovation_rate: f64, j_count: usize) -> Self {
        SupportSpec::Bernoulli {
            common_rate,
            innovation_rates: vec![innovation_rate; j_count],
        }
    }

    pub fn fixed_symmetric(common: usize, innovation: usize, j_count: usize) -> Self {
        SupportSpec::FixedSize {
            common,
            innovations: vec![innovation; j_count],
        }
    }
}

/// Stochastic generation parameters: support law, nonzero-coefficient
/// standard deviation, and the RNG seed.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticModel {
    pub support: SupportSpec,
    pub coefficient_std: f64,
    pub seed: u64,
}

fn draw_support<R: Rng>(rng: &mut R, n: usize, spec: SupportDraw) -> Result<Vec<usize>> {
    match spec {
        SupportDraw::Rate(rate) => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(DcsError::InvalidParameter(format!(
                    "sparsity rate {rate} outside [0, 1]"
                )));
            }
            Ok((0..n).filter(|_| rng.gen_bool(rate)).collect())
        }
        SupportDraw::Exact(k) => {
            if k > n {
                return Err(DcsError::InvalidParameter(format!(
                    "support size {k} exceeds signal length {n}"
                )));
            }
            let mut idx = sample(rng, n, k).into_vec();
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

#[derive(Clone, Copy)]
enum SupportDraw {
    Rate(f64),
    Exact(usize),
}

impl SupportSpec {
    fn common_draw(&self) -> SupportDraw {
        match self {
            SupportSpec::Bernoulli { common_rate, .. } => SupportDraw::Rate(*common_rate),
            SupportSpec::FixedSize { common, .. } => SupportDraw::Exact(*common),
        }
    }

    fn innovation_draw(&self, j: usize) -> SupportDraw {
        match self {
            SupportSpec::Bernoulli {
                innovation_rates, ..
            } => SupportDraw::Rate(innovation_rates[j]),
            SupportSpec::FixedSize { innovations, .. } => SupportDraw::Exact(innovations[j]),
        }
    }

    fn sensor_len(&self) -> usize {
        match self {
            SupportSpec::Bernoulli {
                innovation_rates, ..
            } => innovation_rates.len(),
            SupportSpec::FixedSize { innovations, .. } => innovations.len(),
        }
    }
}

/// Draw a signal ensemble from the given joint sparsity model.
/// Deterministic for a fixed seed.
pub fn generate(
    model: JsmKind,
    stoch: &StochasticModel,
    n: usize,
    j_count: usize,
) -> Result<SignalEnsemble> {
    if n == 0 || j_count == 0 {
        return Err(DcsError::InvalidParameter(
            "signal length and sensor count must be positive".into(),
        ));
    }
    if stoch.coefficient_std <= 0.0 {
        return Err(DcsError::InvalidParameter(
            "coefficient standard deviation must be positive".into(),
        ));
    }
    if stoch.support.sensor_len() != j_count {
        return Err(DcsError::DimensionMismatch(format!(
            "support spec covers {} sensors, ensemble has {j_count}",
            stoch.support.sensor_len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stoch.seed);
    let normal = Normal::new(0.0, stoch.coefficient_std)
        .map_err(|e| DcsError::InvalidParameter(e.to_string()))?;

    let mut z_common = DVector::zeros(n);
    match model {
        JsmKind::Jsm1 => {
            for idx in draw_support(&mut rng, n, stoch.support.common_draw())? {
                z_common[idx] = normal.sample(&mut rng);
            }
        }
        JsmKind::Jsm2 => {}
        JsmKind::Jsm3 | JsmKind::Jsm3CommonSupport => {
            for idx in 0..n {
                z_common[idx] = normal.sample(&mut rng);
            }
        }
    }

    let shared_support = match model {
        JsmKind::Jsm2 | JsmKind::Jsm3CommonSupport => {
            Some(draw_support(&mut rng, n, stoch.support.innovation_draw(0))?)
        }
        _ => None,
    };

    let mut z_innovations = Vec::with_capacity(j_count);
    for j in 0..j_count {
        let support = match &shared_support {
            Some(s) => s.clone(),
            None => draw_support(&mut rng, n, stoch.support.innovation_draw(j))?,
        };
        let mut z = DVector::zeros(n);
        for idx in support {
            z[idx] = normal.sample(&mut rng);
        }
        z_innovations.push(z);
    }

    SignalEnsemble::from_components(model, z_common, z_innovations)
}

/// Plain-text serialization: header `N J model`, then the common component
/// and each innovation as a line of space-separated decimals. Values print
/// in shortest round-trip form, so read-back is exact.
pub fn to_text(x: &SignalEnsemble) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {}\n",
        x.signal_len(),
        x.sensor_count(),
        x.model()
    ));
    let mut push_row = |v: &DVector<f64>| {
        let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    };
    push_row(x.z_common());
    for j in 0..x.sensor_count() {
        push_row(x.z_innovation(j));
    }
    out
}

pub fn from_text(text: &str) -> Result<SignalEnsemble> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| DcsError::Parse("empty ensemble file".into()))?;
    let mut parts = header.split_whitespace();
    let n: usize = parse_field(parts.next(), "N")?;
    let j_count: usize = parse_field(parts.next(), "J")?;
    let model = JsmKind::parse(
        parts
            .next()
            .ok_or_else(|| DcsError::Parse("missing model in header".into()))?,
    )?;

    let mut read_row = |what: &str| -> Result<DVector<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| DcsError::Parse(format!("missing {what} row")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| DcsError::Parse(format!("{what}: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(DcsError::Parse(format!(
                "{what}: expected {n} values, got {}",
                vals.len()
            )));
        }
        Ok(DVector::from_vec(vals))
    };

    let z_common = read_row("common component")?;
    let mut z_innovations = Vec::with_capacity(j_count);
    for j in 0..j_count {
        z_innovations.push(read_row(&format!("innovation {j}"))?);
    }
    SignalEnsemble::from_components(model, z_common, z_innovations)
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    tok.ok_or_else(|| DcsError::Parse(format!("missing {what} in header")))?
        .parse()
        .map_err(|e| DcsError::Parse(format!("{what}: {e}")))
}
