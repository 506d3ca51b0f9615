//! Post-hoc statistics over a result store: log-log power-law fits,
//! Welch tests with Bonferroni adjustment, Cohen's d, and an OLS
//! calibration of the bound's constants.
//!
//! ```text
//! power law:    ln y = ln a + b·ln x
//! calibration:  gap = C₀ + C₁·x + ε,  x = R·√(D·p·n·ln N/N)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::experiments::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// All `y` equal: the exponent is 0 and R² is reported as 0.
    pub degenerate: bool,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(invalid("a power-law fit needs at least 3 points"));
    }
    if points
        .iter()
        .any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(invalid("power-law fits need finite positive x and y"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept) = ols_line(&logs)?;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    // relative tolerance: equal y values can leave rounding-level spread
    let degenerate = ss_tot <= 1e-24 * logs.len() as f64 * mean_y.abs().max(1.0).powi(2);
    let (exponent, r_squared) = if degenerate {
        (0.0, 0.0)
    } else {
        (slope, (1.0 - ss_res / ss_tot).clamp(0.0, 1.0))
    };
    Ok(PowerLawFit {
        exponent,
        log_intercept: if degenerate { mean_y } else { intercept },
        r_squared,
        n_points: points.len(),
        degenerate,
    })
}

/// Slope and intercept of the OLS line; rejects a constant regressor.
fn ols_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::Degenerate("regressor takes a single value".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Replaces exact zeros by the smallest positive value present. Returns
/// the number of replacements.
pub fn replace_zero_gaps(values: &mut [f64]) -> usize {
    let floor = values
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return 0;
    }
    let mut count = 0;
    for v in values.iter_mut().filter(|v| **v == 0.0) {
        *v = floor;
        count += 1;
    }
    count
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction of the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { 1.0 / TINY } else { 1.0 / d };
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        h *= d * c;
        let aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { 1.0 / TINY } else { 1.0 / d };
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    incomplete_beta_split(a, b, x, 1.0 - x)
}

/// `I_x(a, b)` with `y = 1 − x` supplied separately, so callers can keep
/// precision when `x` is close to 1.
fn incomplete_beta_split(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, y) / b
    }
}

/// Two-sided tail `P(|T| ≥ |t|)`.
fn t_two_sided(t: f64, dof: f64) -> f64 {
    let t2 = t * t;
    incomplete_beta_split(dof / 2.0, 0.5, dof / (dof + t2), t2 / (dof + t2))
}

/// CDF of Student's t with `dof` degrees of freedom.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * t_two_sided(t, dof);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of Student's t, by bisection on the CDF.
pub fn student_t_quantile(prob: f64, dof: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(invalid("quantile probability must lie in (0, 1)"));
    }
    if !(dof > 0.0) {
        return Err(invalid("degrees of freedom must be > 0"));
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while student_t_cdf(lo, dof) > prob {
        lo *= 2.0;
    }
    while student_t_cdf(hi, dof) < prob {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn check_sample(xs: &[f64], name: &str) -> Result<()> {
    if xs.len() < 2 {
        return Err(invalid(format!("sample {name} needs at least 2 values")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("sample {name} has non-finite values")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub dof: f64,
    /// Two-sided.
    pub p: f64,
    /// Both samples have zero variance.
    pub degenerate: bool,
}

/// Welch's unequal-variance t test with Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let (t, p) = if ma == mb {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(ma - mb), 0.0)
        };
        return Ok(WelchTest {
            t,
            dof: na + nb - 2.0,
            p,
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = t_two_sided(t, dof).clamp(0.0, 1.0);
    Ok(WelchTest {
        t,
        dof,
        p,
        degenerate: false,
    })
}

/// `min(1, p·m)` elementwise.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(invalid("the comparison count must be >= 1"));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("p-values must lie in [0, 1]"));
    }
    Ok(p_values.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

/// Mean difference `a − b` over the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    if pooled == 0.0 {
        return Err(Error::Degenerate("zero pooled variance".into()));
    }
    Ok((ma - mb) / pooled.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub c0_hat: f64,
    pub c1_hat: f64,
    pub ci95_c0: [f64; 2],
    pub ci95_c1: [f64; 2],
    pub n_runs: usize,
    pub residual_sd: f64,
}

/// `R·√(D·p·n·ln N/N)` at the run's training length.
pub fn calibration_regressor(record: &RunRecord) -> f64 {
    let s = &record.spec;
    let n = record.result.n_train as f64;
    s.radius * ((s.depth * s.p) as f64 * n.ln() / n).sqrt()
}

/// OLS of `gap` on `x` with intercept and 95% t intervals.
pub fn calibrate_constants(points: &[(f64, f64)]) -> Result<CalibrationResult> {
    if points.len() < 3 {
        return Err(invalid("calibration needs at least 3 runs"));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(invalid("calibration inputs must be finite"));
    }
    // sort so the sums do not depend on run order
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (c1, c0) =
        ols_line(&pts).map_err(|_| Error::Degenerate("rank-deficient design: one distinct regressor value".into()))?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - c0 - c1 * p.0).powi(2)).sum();
    let s2 = ss_res / (n - 2.0);
    let se_c1 = (s2 / sxx).sqrt();
    let se_c0 = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let q = student_t_quantile(0.975, n - 2.0)?;
    Ok(CalibrationResult {
        c0_hat: c0,
        c1_hat: c1,
        ci95_c0: [c0 - q * se_c0, c0 + q * se_c0],
        ci95_c1: [c1 - q * se_c1, c1 + q * se_c1],
        n_runs: pts.len(),
        residual_sd: s2.sqrt(),
    })
}

pub fn calibrate_records(records: &[RunRecord]) -> Result<CalibrationResult> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (calibration_regressor(r), r.result.gap))
        .collect();
    calibrate_constants(&pts)
}

/// Power-law fit of mean gap against effective sample size for one ρ,
/// either pooled over depths or for a single depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub rho: f64,
    /// `pooled` or `D=<depth>`.
    pub group: String,
    pub exponent: f64,
    pub r_squared: f64,
    pub n_levels: usize,
    pub n_runs: usize,
    pub zero_replaced: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub n_eff: u64,
    pub rho_a: f64,
    pub rho_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `1 − mean_a/mean_b`.
    pub reduction: f64,
    pub t: f64,
    pub dof: f64,
    pub p: f64,
    pub p_adj: f64,
    /// `None` when both samples have zero variance.
    pub d: Option<f64>,
}

impl ContrastRow {
    pub fn pairing(&self) -> String {
        format!("rho={} vs rho={}", self.rho_a, self.rho_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub scaling: Vec<ScalingRow>,
    pub contrasts: Vec<ContrastRow>,
    pub calibration: Option<CalibrationResult>,
}

/// Gaps grouped by `(ρ bits, n_eff)`, in ascending order of both.
fn gaps_by_level<'a>(records: impl Iterator<Item = &'a RunRecord>) -> BTreeMap<(u64, u64), Vec<f64>> {
    let mut m: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        m.entry((r.spec.rho.to_bits(), r.spec.n_eff))
            .or_default()
            .push(r.result.gap);
    }
    m
}

fn scaling_row(rho: f64, group: String, levels: &[(u64, Vec<f64>)]) -> Result<Option<ScalingRow>> {
    if levels.len() < 3 {
        return Ok(None);
    }
    let mut means: Vec<f64> = levels
        .iter()
        .map(|(_, g)| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let replaced = replace_zero_gaps(&mut means);
    if means.iter().any(|m| *m <= 0.0) {
        return Ok(None);
    }
    let pts: Vec<(f64, f64)> = levels.iter().zip(&means).map(|((n, _), m)| (*n as f64, *m)).collect();
    let fit = fit_power_law(&pts)?;
    Ok(Some(ScalingRow {
        rho,
        group,
        exponent: fit.exponent,
        r_squared: fit.r_squared,
        n_levels: levels.len(),
        n_runs: levels.iter().map(|(_, g)| g.len()).sum(),
        zero_replaced: replaced,
        degenerate: fit.degenerate,
    }))
}

/// Scaling fits, ρ contrasts at every effective size and (when the design
/// allows) a constant calibration. Rows come out in ascending ρ, depth and
/// effective size.
pub fn analyze_records(records: &[RunRecord]) -> Result<AnalysisReport> {
    let rhos: Vec<f64> = {
        let mut v: Vec<f64> = records.iter().map(|r| r.spec.rho).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let depths: Vec<usize> = {
        let mut v: Vec<usize> = records.iter().map(|r| r.spec.depth).collect();
        v.sort_unstable();
        v.dedup();
        v
    };

    let mut scaling = Vec::new();
    for &rho in &rhos {
        let levels = |depth: Option<usize>| -> Vec<(u64, Vec<f64>)> {
            gaps_by_level(
                records
                    .iter()
                    .filter(|r| r.spec.rho == rho && depth.is_none_or(|d| r.spec.depth == d)),
            )
            .into_iter()
            .map(|((_, n), g)| (n, g))
            .collect()
        };
        if let Some(row) = scaling_row(rho, "pooled".into(), &levels(None))? {
            scaling.push(row);
        }
        for &d in &depths {
            if let Some(row) = scaling_row(rho, format!("D={d}"), &levels(Some(d)))? {
                scaling.push(row);
            }
        }
    }

    let by_level = gaps_by_level(records.iter());
    let mut n_effs: Vec<u64> = by_level.keys().map(|k| k.1).collect();
    n_effs.sort_unstable();
    n_effs.dedup();
    let mut contrasts = Vec::new();
    for &n_eff in &n_effs {
        let present: Vec<f64> = rhos
            .iter()
            .copied()
            .filter(|r| by_level.get(&(r.to_bits(), n_eff)).is_some_and(|g| g.len() >= 2))
            .collect();
        for (i, &rho_b) in present.iter().enumerate() {
            for &rho_a in present.iter().skip(i + 1) {
                let a = &by_level[&(rho_a.to_bits(), n_eff)];
                let b = &by_level[&(rho_b.to_bits(), n_eff)];
                let w = welch_t(a, b)?;
                let mean_a = a.iter().sum::<f64>() / a.len() as f64;
                let mean_b = b.iter().sum::<f64>() / b.len() as f64;
                contrasts.push(ContrastRow {
                    n_eff,
                    rho_a,
                    rho_b,
                    n_a: a.len(),
                    n_b: b.len(),
                    mean_a,
                    mean_b,
                    reduction: if mean_b > 0.0 { 1.0 - mean_a / mean_b } else { f64::NAN },
                    t: w.t,
                    dof: w.dof,
                    p: w.p,
                    p_adj: w.p,
                    d: cohens_d(a, b).ok(),
                });
            }
        }
    }
    let raw: Vec<f64> = contrasts.iter().map(|c| c.p).collect();
    if !raw.is_empty() {
        for (c, p) in contrasts.iter_mut().zip(bonferroni(&raw, raw.len())?) {
            c.p_adj = p;
        }
    }

    let calibration = match calibrate_records(records) {
        Ok(c) => Some(c),
        Err(Error::Degenerate(_) | Error::InvalidParameter(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(AnalysisReport {
        scaling,
        contrasts,
        calibration,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("rho,group,exponent,r_squared,n_levels,n_runs,zero_replaced,degenerate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.rho, r.group, r.exponent, r.r_squared, r.n_levels, r.n_runs, r.zero_replaced, r.degenerate
        );
    }
    out
}

pub fn contrasts_csv(rows: &[ContrastRow]) -> String {
    let mut out = String::from("pairing,n_eff,n_a,n_b,mean_a,mean_b,reduction,t,dof,p,p_adj,d\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.pairing(),
            r.n_eff,
            r.n_a,
            r.n_b,
            r.mean_a,
            r.mean_b,
            r.reduction,
            r.t,
            r.dof,
            r.p,
            r.p_adj,
            fmt_opt(r.d)
        );
    }
    out
}
