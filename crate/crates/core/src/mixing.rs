//! Stationary dependent sequences and their β-mixing coefficients.
//!
//! Two kinds of dependence model live here:
//!
//! - parametric envelopes ([`MixingProfile`]) of the form
//!   `β(k) ≤ C₀·exp(−c₀·k)` or `β(k) ≤ C₀·k^(−γ)`;
//! - finite-state stationary Markov chains ([`MarkovChain`]) whose β
//!   coefficient can be computed exactly:
//!
//! ```text
//! β(k) = ½ Σᵢ πᵢ Σⱼ |Pᵏ(i,j) − πⱼ|
//! ```
//!
//! The AR(1) generator draws from ChaCha8 (a counter-based stream cipher
//! generator), so a `(spec, seed)` pair reproduces the same sequence on
//! every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Seedable generator used everywhere randomness is needed.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingProfile {
    /// `β(k) ≤ c0_mult · exp(−rate·k)`
    Exponential { c0_mult: f64, rate: f64 },
    /// `β(k) ≤ c0_mult · k^(−gamma)`
    Polynomial { c0_mult: f64, gamma: f64 },
}

impl MixingProfile {
    pub fn exponential(c0_mult: f64, rate: f64) -> Result<Self> {
        if !(c0_mult >= 0.0 && c0_mult.is_finite()) {
            return Err(invalid(format!("C0 must be finite and >= 0, got {c0_mult}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid(format!("c0 must be finite and > 0, got {rate}")));
        }
        Ok(Self::Exponential { c0_mult, rate })
    }

    pub fn polynomial(c0_mult: f64, gamma: f64) -> Result<Self> {
        if !(c0_mult >= 0.0 && c0_mult.is_finite()) {
            return Err(invalid(format!("C0 must be finite and >= 0, got {c0_mult}")));
        }
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be > 1, got {gamma}")));
        }
        Ok(Self::Polynomial { c0_mult, gamma })
    }

    /// The multiplicative constant C₀.
    pub fn c0_mult(&self) -> f64 {
        match *self {
            Self::Exponential { c0_mult, .. } | Self::Polynomial { c0_mult, .. } => c0_mult,
        }
    }

    pub fn with_c0_mult(self, c0_mult: f64) -> Result<Self> {
        match self {
            Self::Exponential { rate, .. } => Self::exponential(c0_mult, rate),
            Self::Polynomial { gamma, .. } => Self::polynomial(c0_mult, gamma),
        }
    }
}

/// Envelope value `β(k)` of a parametric profile. `k` must be at least 1.
pub fn beta_coefficient(profile: &MixingProfile, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("beta(k) is defined for k >= 1"));
    }
    let k = k as f64;
    Ok(match *profile {
        MixingProfile::Exponential { c0_mult, rate } => c0_mult * (-rate * k).exp(),
        MixingProfile::Polynomial { c0_mult, gamma } => c0_mult * k.powf(-gamma),
    })
}

/// Exponential envelope `β(k) ≤ ρᵏ` of a stationary AR(1) process, i.e.
/// rate `−ln ρ` and `C₀ = 1`. Use [`MixingProfile::with_c0_mult`] to
/// override the constant.
pub fn ar1_mixing_profile(rho: f64) -> Result<MixingProfile> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    MixingProfile::exponential(1.0, -rho.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Spec {
    pub rho: f64,
    pub length: usize,
    pub seed: u64,
    pub target_variance: f64,
}

impl Ar1Spec {
    pub fn new(rho: f64, length: usize, seed: u64) -> Self {
        Self {
            rho,
            length,
            seed,
            target_variance: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(invalid(format!(
                "|rho| must be < 1 for a stationary AR(1), got {}",
                self.rho
            )));
        }
        if self.length == 0 {
            return Err(invalid("AR(1) length must be >= 1"));
        }
        if !(self.target_variance > 0.0 && self.target_variance.is_finite()) {
            return Err(invalid("target variance must be finite and > 0"));
        }
        Ok(())
    }
}

/// A finite real-valued sequence, optionally tagged with a sampling rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampling_rate: Option<f64>,
}

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("series must be non-empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("series value at index {i} is not finite")));
        }
        Ok(Self {
            values,
            sampling_rate: None,
        })
    }

    pub fn with_sampling_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(invalid(format!("sampling rate must be > 0, got {hz}")));
        }
        self.sampling_rate = Some(hz);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sampling_rate(&self) -> Option<f64> {
        self.sampling_rate
    }

    /// Splits into a contiguous prefix and suffix at `at`.
    pub fn split_at(&self, at: usize) -> Result<(Series, Series)> {
        if at == 0 || at >= self.len() {
            return Err(invalid(format!(
                "split point {at} must lie strictly inside 0..{}",
                self.len()
            )));
        }
        let (a, b) = self.values.split_at(at);
        let mk = |v: &[f64]| Series {
            values: v.to_vec(),
            sampling_rate: self.sampling_rate,
        };
        Ok((mk(a), mk(b)))
    }

    /// One value per line, preceded by `# fs=<Hz>` when a rate is attached.
    /// Values use Rust's shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20);
        if let Some(fs) = self.sampling_rate {
            out.push_str(&format!("# fs={fs}\n"));
        }
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    /// Parses the format written by [`Series::to_csv`]. Missing values are
    /// rejected here; see `ingest::load_signal` for gap-tolerant loading.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut fs = None;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(hz) = rest.trim().strip_prefix("fs=") {
                    fs = Some(hz.trim().parse::<f64>().map_err(|e| Error::Parse {
                        path: "<csv>".into(),
                        line: lineno + 1,
                        message: format!("bad sampling rate: {e}"),
                    })?);
                }
                continue;
            }
            let v = line.parse::<f64>().map_err(|e| Error::Parse {
                path: "<csv>".into(),
                line: lineno + 1,
                message: format!("{e}: {line:?}"),
            })?;
            values.push(v);
        }
        let s = Series::new(values)?;
        match fs {
            Some(hz) => s.with_sampling_rate(hz),
            None => Ok(s),
        }
    }
}

/// Draws `Xₜ = ρ·Xₜ₋₁ + εₜ` with `X₀ ~ N(0, σ²)` and
/// `εₜ ~ N(0, σ²·(1−ρ²))`, so every `Xₜ` has variance σ².
pub fn gen_ar1(spec: &Ar1Spec) -> Result<Series> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let sd = spec.target_variance.sqrt();
    let noise_sd = sd * (1.0 - spec.rho * spec.rho).sqrt();
    let mut values = Vec::with_capacity(spec.length);
    let z0: f64 = StandardNormal.sample(&mut rng);
    let mut x = sd * z0;
    values.push(x);
    for _ in 1..spec.length {
        let eps: f64 = StandardNormal.sample(&mut rng);
        x = spec.rho * x + noise_sd * eps;
        values.push(x);
    }
    Series::new(values)
}

/// `⌊N·((1−ρ)/(1+ρ))⌋` in double precision.
pub fn effective_sample_size(n: u64, rho: f64) -> Result<u64> {
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok((n as f64 * ((1.0 - rho) / (1.0 + rho))).floor() as u64)
}

/// Raw length needed for `n_eff` effective samples:
/// `⌊n_eff·((1+ρ)/(1−ρ))⌋` in double precision.
///
/// The ratio is evaluated before the multiplication. That grouping gives
/// e.g. 749 for `(500, 0.2)` rather than the exact-rational 750; see
/// [`required_length_exact`] for the latter.
pub fn required_length(n_eff: u64, rho: f64) -> Result<u64> {
    if n_eff == 0 {
        return Err(invalid("target effective size must be >= 1"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok((n_eff as f64 * ((1.0 + rho) / (1.0 - rho))).floor() as u64)
}

/// Exact-rational counterpart of [`required_length`], treating `rho` as
/// the decimal fraction `num/den`.
pub fn required_length_exact(n_eff: u64, rho_num: u64, rho_den: u64) -> u64 {
    assert!(rho_num < rho_den, "rho must be < 1");
    (n_eff as u128 * (rho_den + rho_num) as u128 / (rho_den - rho_num) as u128) as u64
}

/// Finite-state stationary Markov chain with a row-stochastic transition
/// matrix and its stationary law π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

impl MarkovChain {
    /// Validates `transition` and solves for its stationary distribution.
    /// Chains without a unique stationary law are rejected.
    pub fn new(transition: Vec<Vec<f64>>) -> Result<Self> {
        let s = transition.len();
        if s == 0 {
            return Err(invalid("transition matrix must be non-empty"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != s {
                return Err(invalid(format!("row {i} has {} entries, expected {s}", row.len())));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(invalid(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        let stationary = solve_stationary(&transition)?;
        let chain = Self { transition, stationary };
        chain.check_stationary()?;
        Ok(chain)
    }

    fn check_stationary(&self) -> Result<()> {
        let s = self.states();
        for j in 0..s {
            let pj: f64 = (0..s).map(|i| self.stationary[i] * self.transition[i][j]).sum();
            if (pj - self.stationary[j]).abs() > STATIONARY_TOL {
                return Err(Error::Degenerate(format!(
                    "stationary solve residual {} at state {j}",
                    (pj - self.stationary[j]).abs()
                )));
            }
        }
        Ok(())
    }

    /// Chain whose rows are all equal to `law`: an i.i.d. sequence.
    pub fn iid(law: Vec<f64>) -> Result<Self> {
        let s = law.len();
        Self::new(vec![law; s])
    }

    /// Two states that each persist with probability `stay`.
    pub fn symmetric_two_state(stay: f64) -> Result<Self> {
        Self::new(vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]])
    }

    /// Random chain whose rows are uniformly distributed on the simplex.
    /// Rows are floored at `min_prob` to keep the chain irreducible.
    pub fn random(states: usize, min_prob: f64, rng: &mut Rng) -> Result<Self> {
        use rand::Rng as _;
        let mut rows = Vec::with_capacity(states);
        for _ in 0..states {
            let raw: Vec<f64> = (0..states)
                .map(|_| -(1.0 - rng.random::<f64>()).ln() + min_prob)
                .collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|v| v / total).collect();
            // absorb rounding into the first entry
            let head: f64 = row.iter().skip(1).sum();
            row[0] = 1.0 - head;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// `Pᵏ` by repeated squaring.
    pub fn transition_power(&self, k: u64) -> Vec<Vec<f64>> {
        let s = self.states();
        let mut result = identity(s);
        let mut base = self.transition.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = mat_mul(&result, &base);
            }
            e >>= 1;
            if e > 0 {
                base = mat_mul(&base, &base);
            }
        }
        result
    }
}

fn identity(s: usize) -> Vec<Vec<f64>> {
    (0..s)
        .map(|i| (0..s).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub(crate) fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, bk) in b.iter().enumerate() {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * bk[j];
            }
        }
    }
    out
}

/// Solves `π(P − I) = 0, Σπ = 1` by Gaussian elimination with partial
/// pivoting, replacing the last balance equation with the normalization.
fn solve_stationary(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let s = p.len();
    // Row j of the system: Σᵢ πᵢ (P(i,j) − δᵢⱼ) = 0
    let mut a: Vec<Vec<f64>> = (0..s)
        .map(|j| {
            let mut row: Vec<f64> = (0..s).map(|i| p[i][j] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[s - 1] = vec![1.0; s + 1];
    for col in 0..s {
        let pivot = (col..s)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Degenerate(
                "transition matrix has no unique stationary distribution".into(),
            ));
        }
        a.swap(col, pivot);
        let piv = a[col][col];
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / piv;
                if f != 0.0 {
                    for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    let pi: Vec<f64> = (0..s).map(|i| (a[i][s] / a[i][i]).max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|v| v / total).collect())
}

/// Exact β-mixing coefficient of the stationary chain at lag `k ≥ 1`.
pub fn markov_beta_exact(chain: &MarkovChain, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("beta(k) is defined for k >= 1"));
    }
    let pk = chain.transition_power(k);
    let pi = chain.stationary();
    let beta = pi
        .iter()
        .zip(&pk)
        .map(|(&pi_i, row)| pi_i * row.iter().zip(pi).map(|(&pij, &pj)| (pij - pj).abs()).sum::<f64>())
        .sum::<f64>();
    Ok(0.5 * beta)
}

/// Sample autocorrelation at lag `k` (biased normalization).
pub fn sample_autocorrelation(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    if k >= n {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let denom: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - k).map(|t| (values[t] - mean) * (values[t + k] - mean)).sum();
    num / denom
}
