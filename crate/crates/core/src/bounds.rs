//! Closed-form capacity, regret and generalization bounds, and a
//! Monte-Carlo estimate of empirical Rademacher complexity to check them.
//!
//! ```text
//! Rademacher:      𝕽_m ≤ 4R·√(D·p·n·ln(2m)/m)
//! Regret:          R_N ≤ 2N·𝕽_N = 8R·√(D·p·n·N·ln(2N))
//! Generalization:  gap ≤ C₁R·√(D·p·n·ln N/N) + C₀ + √(ln(1/δ)/N)
//! ```
//!
//! All logarithms are natural.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::mixing::{rng_from_seed, MixingProfile, Rng};
use crate::model::{backward_last, forward_last, project_norm_21, receptive_field, TcnConfig, TcnWeights};

/// Universal constant of the complexity term for ℓ2-regularized mirror
/// descent.
pub const SYMBOLIC_C1: f64 = 8.0;
pub const DEFAULT_DELTA: f64 = 0.05;

fn check_arch(depth: usize, kernel_size: usize, in_dim: usize, radius: f64) -> Result<()> {
    if depth == 0 || kernel_size == 0 || in_dim == 0 {
        return Err(invalid("D, p and n must be >= 1"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(invalid(format!("R must be finite and >= 0, got {radius}")));
    }
    Ok(())
}

/// `4R·√(D·p·n·ln(2m)/m)`
pub fn rademacher_bound(depth: usize, kernel_size: usize, in_dim: usize, radius: f64, m: u64) -> Result<f64> {
    check_arch(depth, kernel_size, in_dim, radius)?;
    if m == 0 {
        return Err(invalid("sample size m must be >= 1"));
    }
    let dpn = (depth * kernel_size * in_dim) as f64;
    let m = m as f64;
    Ok(4.0 * radius * (dpn * (2.0 * m).ln() / m).sqrt())
}

/// `8R·√(D·p·n·N·ln(2N))`
pub fn regret_bound(depth: usize, kernel_size: usize, in_dim: usize, radius: f64, n: u64) -> Result<f64> {
    check_arch(depth, kernel_size, in_dim, radius)?;
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let dpn = (depth * kernel_size * in_dim) as f64;
    let n = n as f64;
    Ok(8.0 * radius * (dpn * n * (2.0 * n).ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub depth: usize,
    pub kernel_size: usize,
    pub in_dim: usize,
    pub radius: f64,
    pub n: u64,
    pub delta: f64,
    pub profile: MixingProfile,
    pub c1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub complexity_term: f64,
    pub mixing_const: f64,
    pub concentration_term: f64,
    pub total: f64,
    pub inputs: BoundInputs,
}

/// Three-term bound for the delayed-feedback learner run at the optimal
/// delay, where `N·β(d*)` collapses to the profile constant `C₀`.
pub fn generalization_bound(inputs: BoundInputs) -> Result<BoundReport> {
    let BoundInputs {
        depth,
        kernel_size,
        in_dim,
        radius,
        n,
        delta,
        profile,
        c1,
    } = inputs;
    check_arch(depth, kernel_size, in_dim, radius)?;
    if n < 2 {
        return Err(invalid("N must be >= 2"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(c1 >= 0.0 && c1.is_finite()) {
        return Err(invalid("C1 must be finite and >= 0"));
    }
    let nf = n as f64;
    let dpn = (depth * kernel_size * in_dim) as f64;
    let complexity_term = c1 * radius * (dpn * nf.ln() / nf).sqrt();
    let mixing_const = profile.c0_mult();
    let concentration_term = ((1.0 / delta).ln() / nf).sqrt();
    Ok(BoundReport {
        complexity_term,
        mixing_const,
        concentration_term,
        total: complexity_term + mixing_const + concentration_term,
        inputs,
    })
}

/// Delay `⌈N^{1/(γ+1)}⌉` and rate exponent `γ/(γ+1)` under polynomial
/// mixing `β(k) ≤ C₀k^{−γ}`.
pub fn polynomial_mixing_rate(gamma: f64, n: u64) -> Result<(u64, f64)> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be > 1, got {gamma}")));
    }
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let delay = (n as f64).powf(1.0 / (gamma + 1.0)).ceil() as u64;
    Ok((delay.max(1), gamma / (gamma + 1.0)))
}

/// Measured gap over the total bound.
pub fn tightness_ratio(gap: f64, report: &BoundReport) -> Result<f64> {
    if !(report.total > 0.0) {
        return Err(Error::Degenerate("bound total is zero".into()));
    }
    Ok(gap / report.total)
}

/// Stable 64-bit seed derived from a root seed and integer coordinates.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: usize,
}

pub const MIN_TRIALS: usize = 100;

fn rademacher_signs(rng: &mut Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn summarize(sups: &[f64]) -> McEstimate {
    let k = sups.len() as f64;
    let mean = sups.iter().sum::<f64>() / k;
    let var = sups.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    McEstimate {
        estimate: mean,
        std_error: (var / k).sqrt(),
        trials: sups.len(),
    }
}

/// Empirical Rademacher complexity of a finite class given by its output
/// vectors on a fixed sample (`outputs[h][i] = f_h(Xᵢ)`).
///
/// For `m ≤ 16` all `2^m` sign vectors are enumerated and the exact value
/// is returned with zero standard error; otherwise `trials` sign vectors
/// are drawn.
pub fn rademacher_finite_class(outputs: &[Vec<f64>], trials: usize, seed: u64) -> Result<McEstimate> {
    if trials < MIN_TRIALS {
        return Err(invalid(format!("at least {MIN_TRIALS} trials are required")));
    }
    let Some(first) = outputs.first() else {
        return Err(invalid("the class must contain at least one hypothesis"));
    };
    let m = first.len();
    if m == 0 || outputs.iter().any(|o| o.len() != m) {
        return Err(Error::ShapeMismatch(
            "hypothesis outputs must share a non-empty sample".into(),
        ));
    }
    let sup = |sigma: &[f64]| {
        outputs
            .iter()
            .map(|o| o.iter().zip(sigma).map(|(f, s)| f * s).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
            / m as f64
    };
    if m <= 16 {
        let total: f64 = (0u32..1 << m)
            .map(|bits| {
                let sigma: Vec<f64> = (0..m).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                sup(&sigma)
            })
            .sum();
        return Ok(McEstimate {
            estimate: total / (1u64 << m) as f64,
            std_error: 0.0,
            trials: 1 << m,
        });
    }
    let sups: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, &[t as u64]));
            sup(&rademacher_signs(&mut rng, m))
        })
        .collect();
    Ok(summarize(&sups))
}

/// Monte-Carlo oracle for the empirical Rademacher complexity of the
/// norm-constrained TCN class.
///
/// Class members have `depth` ReLU convolution layers whose last layer has
/// a single output channel, every layer inside its ℓ2,1 ball of radius
/// `radius`, and an identity readout. Each sample point is an input
/// window of one receptive field with unit Euclidean norm; `f(Xᵢ)` is the
/// network output at the window's last step.
///
/// The supremum is approximated from below: for every sign vector the best
/// of `hypotheses` random class members is refined by projected gradient
/// ascent on the signed correlation. The estimate therefore never exceeds
/// the true complexity (up to Monte-Carlo error), and a bound that it
/// crosses is certainly violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnRademacherOracle {
    pub depth: usize,
    pub kernel_size: usize,
    pub in_dim: usize,
    pub hidden_width: usize,
    pub radius: f64,
    pub m: usize,
    pub hypotheses: usize,
    pub trials: usize,
    pub refine_steps: usize,
    pub seed: u64,
}

impl TcnRademacherOracle {
    pub fn new(depth: usize, kernel_size: usize, radius: f64, m: usize) -> Self {
        Self {
            depth,
            kernel_size,
            in_dim: 1,
            hidden_width: 4,
            radius,
            m,
            hypotheses: OracleBudget::default().hypotheses,
            trials: OracleBudget::default().trials,
            refine_steps: OracleBudget::default().refine_steps,
            seed: 0,
        }
    }

    pub fn class_config(&self) -> Result<TcnConfig> {
        let mut channels = vec![self.hidden_width; self.depth];
        channels[self.depth - 1] = 1;
        let cfg = TcnConfig {
            depth: self.depth,
            kernel_size: self.kernel_size,
            in_dim: self.in_dim,
            channels,
            dilation_base: 2,
            norm_radius: self.radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The `m` unit-norm input windows.
    pub fn sample(&self, cfg: &TcnConfig) -> Vec<Vec<f64>> {
        use rand_distr::{Distribution, StandardNormal};
        let len = receptive_field(cfg) * cfg.in_dim;
        let mut rng = rng_from_seed(derive_seed(self.seed, &[u64::MAX]));
        (0..self.m)
            .map(|_| {
                let raw: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                raw.into_iter().map(|v| v / norm).collect()
            })
            .collect()
    }

    fn random_member(&self, cfg: &TcnConfig, rng: &mut Rng) -> TcnWeights {
        use rand_distr::{Distribution, StandardNormal};
        let mut w = TcnWeights::zeros(cfg);
        for layer in w.layers.iter_mut() {
            for v in layer.values.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            *layer = project_norm_21(layer, self.radius);
        }
        w.readout = vec![1.0];
        w
    }

    fn outputs(cfg: &TcnConfig, w: &TcnWeights, sample: &[Vec<f64>]) -> Vec<f64> {
        sample.iter().map(|x| forward_last(cfg, w, x).output).collect()
    }

    fn correlation(outputs: &[f64], sigma: &[f64]) -> f64 {
        outputs.iter().zip(sigma).map(|(f, s)| f * s).sum::<f64>() / outputs.len() as f64
    }

    fn refine(&self, cfg: &TcnConfig, start: &TcnWeights, sample: &[Vec<f64>], sigma: &[f64]) -> f64 {
        let m = sample.len() as f64;
        let mut w = start.clone();
        let mut best = Self::correlation(&Self::outputs(cfg, &w, sample), sigma);
        let mut eta = 0.5 * self.radius;
        for _ in 0..self.refine_steps {
            let mut grad = TcnWeights::zeros(cfg);
            for (x, s) in sample.iter().zip(sigma) {
                let trace = forward_last(cfg, &w, x);
                backward_last(cfg, &w, &trace, s / m, &mut grad);
            }
            let gnorm = grad
                .layers
                .iter()
                .flat_map(|k| k.values.iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if gnorm == 0.0 {
                break;
            }
            loop {
                let mut cand = w.clone();
                for (layer, g) in cand.layers.iter_mut().zip(&grad.layers) {
                    for (v, gv) in layer.values.iter_mut().zip(&g.values) {
                        *v += eta * gv / gnorm;
                    }
                    *layer = project_norm_21(layer, self.radius);
                }
                let val = Self::correlation(&Self::outputs(cfg, &cand, sample), sigma);
                if val > best {
                    best = val;
                    w = cand;
                    break;
                }
                eta *= 0.5;
                if eta < 1e-6 * self.radius {
                    return best;
                }
            }
        }
        best
    }

    pub fn run(&self) -> Result<McEstimate> {
        if self.trials < MIN_TRIALS {
            return Err(invalid(format!("at least {MIN_TRIALS} trials are required")));
        }
        if self.m == 0 || self.hypotheses == 0 {
            return Err(invalid("m and the hypothesis count must be >= 1"));
        }
        let cfg = self.class_config()?;
        let sample = self.sample(&cfg);
        let members: Vec<TcnWeights> = (0..self.hypotheses)
            .map(|h| self.random_member(&cfg, &mut rng_from_seed(derive_seed(self.seed, &[1, h as u64]))))
            .collect();
        let outputs: Vec<Vec<f64>> = members.par_iter().map(|w| Self::outputs(&cfg, w, &sample)).collect();
        let sups: Vec<f64> = (0..self.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(self.seed, &[2, t as u64]));
                let sigma = rademacher_signs(&mut rng, self.m);
                let (best_h, best_val) = outputs
                    .iter()
                    .enumerate()
                    .map(|(h, o)| (h, Self::correlation(o, &sigma)))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                if self.refine_steps == 0 {
                    return best_val;
                }
                self.refine(&cfg, &members[best_h], &sample, &sigma).max(best_val)
            })
            .collect();
        Ok(summarize(&sups))
    }
}

/// One cell of [`rademacher_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherCheck {
    pub depth: usize,
    pub kernel_size: usize,
    pub radius: f64,
    pub m: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `(bound − estimate) / std_error`.
    pub margin_se: f64,
    pub pass: bool,
}

pub const GRID_DEPTHS: [usize; 3] = [1, 2, 3];
pub const GRID_KERNEL_SIZES: [usize; 3] = [1, 2, 5];
pub const GRID_RADII: [f64; 2] = [0.5, 1.0];
pub const GRID_SAMPLE_SIZES: [usize; 3] = [8, 32, 128];
/// Required gap between formula and estimate, in standard errors.
pub const GRID_MARGIN_SE: f64 = 3.0;

/// Sampling effort of the Rademacher oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub hypotheses: usize,
    pub trials: usize,
    pub refine_steps: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            hypotheses: 500,
            trials: 1000,
            refine_steps: 5,
        }
    }
}

/// Runs the oracle on every `(D, p, R, m)` cell of the grid above.
pub fn rademacher_grid(seed: u64, budget: &OracleBudget) -> Result<Vec<RademacherCheck>> {
    let mut rows = Vec::new();
    for &depth in &GRID_DEPTHS {
        for &kernel_size in &GRID_KERNEL_SIZES {
            for &radius in &GRID_RADII {
                for &m in &GRID_SAMPLE_SIZES {
                    let mut oracle = TcnRademacherOracle::new(depth, kernel_size, radius, m);
                    oracle.hypotheses = budget.hypotheses;
                    oracle.trials = budget.trials;
                    oracle.refine_steps = budget.refine_steps;
                    oracle.seed = derive_seed(seed, &[depth as u64, kernel_size as u64, radius.to_bits(), m as u64]);
                    let est = oracle.run()?;
                    let bound = rademacher_bound(depth, kernel_size, oracle.in_dim, radius, m as u64)?;
                    let margin_se = if est.std_error > 0.0 {
                        (bound - est.estimate) / est.std_error
                    } else if bound > est.estimate {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    };
                    rows.push(RademacherCheck {
                        depth,
                        kernel_size,
                        radius,
                        m,
                        estimate: est.estimate,
                        std_error: est.std_error,
                        bound,
                        margin_se,
                        pass: bound - est.estimate >= GRID_MARGIN_SE * est.std_error,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_bound_examples() {
        assert_eq!(rademacher_bound(3, 5, 1, 0.0, 100).unwrap(), 0.0);
        let v = rademacher_bound(1, 1, 1, 1.0, 2).unwrap();
        assert!((v - 4.0 * (4f64.ln() / 2.0).sqrt()).abs() < 1e-15);
        assert!((v - 3.3302).abs() < 1e-4);
        let a = rademacher_bound(2, 3, 1, 1.0, 50).unwrap();
        let b = rademacher_bound(8, 3, 1, 1.0, 50).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!(rademacher_bound(1, 1, 1, 1.0, 0).is_err());
    }

    #[test]
    fn regret_bound_examples() {
        for n in [1u64, 2, 10, 100, 16384] {
            let r = regret_bound(3, 5, 2, 0.7, n).unwrap();
            let via = 2.0 * n as f64 * rademacher_bound(3, 5, 2, 0.7, n).unwrap();
            assert!((r - via).abs() <= 1e-12 * r);
        }
        assert_eq!(regret_bound(2, 2, 1, 0.0, 50).unwrap(), 0.0);
        let v = regret_bound(1, 1, 1, 1.0, 100).unwrap();
        assert!((v - 8.0 * (100.0 * 200f64.ln()).sqrt()).abs() < 1e-12);
        assert!((v - 184.1).abs() < 0.05);
    }

    fn inputs(depth: usize, n: u64) -> BoundInputs {
        BoundInputs {
            depth,
            kernel_size: 5,
            in_dim: 1,
            radius: 1.0,
            n,
            delta: DEFAULT_DELTA,
            profile: MixingProfile::exponential(1.0, 0.5).unwrap(),
            c1: SYMBOLIC_C1,
        }
    }

    #[test]
    fn report_terms_add_up() {
        let r = generalization_bound(inputs(6, 16384)).unwrap();
        assert_eq!(r.total, r.complexity_term + r.mixing_const + r.concentration_term);
        assert_eq!(r.mixing_const, 1.0);
        let want = 8.0 * (30.0 * 16384f64.ln() / 16384.0).sqrt();
        assert!((r.complexity_term - want).abs() < 1e-12);
        assert!((r.concentration_term - (20f64.ln() / 16384.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn calibrated_constants_are_accepted() {
        let mut i = inputs(4, 5000);
        i.c1 = 0.43;
        i.profile = i.profile.with_c0_mult(2.57).unwrap();
        let r = generalization_bound(i).unwrap();
        assert_eq!(r.mixing_const, 2.57);
        assert!((r.complexity_term - 0.43 * (20.0 * 5000f64.ln() / 5000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bad_delta_is_rejected() {
        for d in [0.0, 1.0, -0.5, 2.0] {
            let mut i = inputs(2, 100);
            i.delta = d;
            assert!(generalization_bound(i).is_err());
        }
        assert!(generalization_bound(inputs(2, 1)).is_err());
    }

    #[test]
    fn double_depth_quadruple_data() {
        for n in [1_000u64, 10_000, 100_000, 1_000_000] {
            let a = generalization_bound(inputs(2, n)).unwrap().complexity_term;
            let b = generalization_bound(inputs(4, 4 * n)).unwrap().complexity_term;
            let ratio = b / a;
            let want = (2.0 * (4.0 * n as f64).ln() / (4.0 * (n as f64).ln())).sqrt();
            assert!((ratio - want).abs() < 1e-12);
            assert!((ratio - 1.0 / 2f64.sqrt()).abs() < 0.1, "n={n} ratio={ratio}");
        }
        let r = generalization_bound(inputs(4, 40_000)).unwrap().complexity_term
            / generalization_bound(inputs(2, 10_000)).unwrap().complexity_term;
        assert!((r - 0.75).abs() < 0.01);
    }

    #[test]
    fn polynomial_rates() {
        let (d, e) = polynomial_mixing_rate(2.0, 1_000_000).unwrap();
        assert_eq!(d, 100);
        assert!((e - 2.0 / 3.0).abs() < 1e-15);
        let (_, e) = polynomial_mixing_rate(1.0 + 1e-9, 100).unwrap();
        assert!((e - 0.5).abs() < 1e-9);
        let mut prev = 0.0;
        for g in [1.1, 1.5, 2.0, 3.0, 10.0] {
            let (_, e) = polynomial_mixing_rate(g, 10).unwrap();
            assert!(e > prev);
            prev = e;
        }
        assert!(polynomial_mixing_rate(1.0, 10).is_err());
    }

    #[test]
    fn tightness_examples() {
        let r = generalization_bound(inputs(2, 1000)).unwrap();
        assert_eq!(tightness_ratio(r.total, &r).unwrap(), 1.0);
        assert_eq!(tightness_ratio(0.0, &r).unwrap(), 0.0);
        let mut zero = r;
        zero.total = 0.0;
        assert!(tightness_ratio(0.1, &zero).is_err());
    }

    #[test]
    fn finite_class_examples() {
        let pm = vec![vec![1.0], vec![-1.0]];
        let est = rademacher_finite_class(&pm, 100, 0).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.std_error, 0.0);

        let zero = vec![vec![0.0; 40]];
        let est = rademacher_finite_class(&zero, 200, 0).unwrap();
        assert_eq!(est.estimate, 0.0);

        assert!(rademacher_finite_class(&pm, 99, 0).is_err());
    }

    #[test]
    fn finite_class_monte_carlo_matches_enumeration() {
        // {±(1,…,1)} on m points: E|Σσ|/m; for m = 20 the binomial sum is exact
        let m = 20;
        let class = vec![vec![1.0; m], vec![-1.0; m]];
        let mut exact = 0.0;
        let mut binom = 1.0f64;
        for k in 0..=m {
            exact += binom * ((2 * k) as f64 - m as f64).abs();
            binom = binom * (m - k) as f64 / (k + 1) as f64;
        }
        exact /= 2f64.powi(m as i32) * m as f64;
        let est = rademacher_finite_class(&class, 20_000, 3).unwrap();
        assert!((est.estimate - exact).abs() < 4.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn tcn_oracle_stays_below_the_formula() {
        let mut o = TcnRademacherOracle::new(2, 2, 1.0, 32);
        o.hypotheses = 100;
        o.trials = 200;
        let est = o.run().unwrap();
        let bound = rademacher_bound(2, 2, 1, 1.0, 32).unwrap();
        assert!(est.estimate > 0.0);
        assert!(est.estimate + 3.0 * est.std_error < bound, "{est:?} vs {bound}");
    }

    #[test]
    fn tcn_oracle_refinement_only_raises_the_estimate() {
        let mut o = TcnRademacherOracle::new(2, 2, 1.0, 16);
        o.hypotheses = 50;
        o.trials = 100;
        o.refine_steps = 0;
        let plain = o.run().unwrap();
        o.refine_steps = 5;
        let refined = o.run().unwrap();
        assert!(refined.estimate >= plain.estimate);
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
    }
}
