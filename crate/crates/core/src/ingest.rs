//! Signal loading and preprocessing for recorded data: gap-tolerant CSV
//! reading, zero-phase Butterworth band-pass filtering, standardization
//! and next-value windowing.
//!
//! The band-pass is a 2nd-order high-pass section followed by a 2nd-order
//! low-pass section, run forward and backward (squared magnitude, zero
//! phase) over an odd-reflected extension of the signal with steady-state
//! initial conditions.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mixing::Series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalFormat {
    /// One value per line.
    CsvSingleColumn,
    /// `timestamp,value` per line; timestamps are ignored.
    CsvTimestamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFile {
    pub path: PathBuf,
    pub format: SignalFormat,
    /// Overrides a `# fs=` header; one of the two must be present.
    pub sampling_rate: Option<f64>,
}

/// A loaded signal whose missing samples are still marked.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal {
    pub values: Vec<Option<f64>>,
    pub sampling_rate: f64,
}

const MISSING_TOKENS: [&str; 6] = ["", "nan", "na", "null", "?", "-"];

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.contains(&cell.to_ascii_lowercase().as_str())
}

impl RawSignal {
    pub fn missing_indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Fills interior gaps linearly and edge gaps with the nearest
    /// observed value.
    pub fn interpolate(&self) -> Result<Series> {
        let known: Vec<(usize, f64)> = self
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .collect();
        let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
            return Err(Error::Degenerate("every sample is missing".into()));
        };
        let mut out = vec![0.0; self.values.len()];
        out[..=first.0].fill(first.1);
        out[last.0..].fill(last.1);
        for pair in known.windows(2) {
            let ((i0, v0), (i1, v1)) = (pair[0], pair[1]);
            for (k, slot) in out[i0..=i1].iter_mut().enumerate() {
                *slot = v0 + (v1 - v0) * k as f64 / (i1 - i0) as f64;
            }
        }
        Series::new(out)?.with_sampling_rate(self.sampling_rate)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a signal file. Lines starting with `#` are comments except a
/// `# fs=<Hz>` header; a non-numeric first data line is taken as a column
/// header. Blank cells and `NaN`/`NA`-style tokens mark missing samples.
pub fn load_signal(file: &SignalFile) -> Result<RawSignal> {
    let text = fs::read_to_string(&file.path)?;
    let path = file.path.as_path();
    let mut header_fs = None;
    let mut values: Vec<Option<f64>> = Vec::new();
    let mut seen_data = false;
    let mut trailing_blank = 0;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            if seen_data {
                values.push(None);
                trailing_blank += 1;
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(hz) = rest.trim().strip_prefix("fs=") {
                header_fs = Some(
                    hz.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(path, lineno, format!("bad sampling rate: {e}")))?,
                );
            }
            continue;
        }
        let cell = match file.format {
            SignalFormat::CsvSingleColumn => line,
            SignalFormat::CsvTimestamped => {
                let mut parts = line.split(',');
                let _timestamp = parts.next();
                let cell = parts
                    .next()
                    .ok_or_else(|| parse_err(path, lineno, "expected `timestamp,value`"))?;
                if parts.next().is_some() {
                    return Err(parse_err(path, lineno, "expected exactly two columns"));
                }
                cell.trim()
            }
        };
        trailing_blank = 0;
        if is_missing(cell) {
            values.push(None);
            seen_data = true;
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(Some(v)),
            Ok(_) => values.push(None),
            Err(_) if !seen_data => {} // column header
            Err(e) => return Err(parse_err(path, lineno, format!("{e}: {cell:?}"))),
        }
        seen_data = true;
    }
    // trailing blank lines are layout, not samples
    values.truncate(values.len() - trailing_blank);
    if values.iter().all(Option::is_none) {
        return Err(Error::Degenerate(format!("{}: no observed samples", path.display())));
    }
    let sampling_rate = file.sampling_rate.or(header_fs).ok_or_else(|| {
        invalid(format!(
            "{}: sampling rate not given and no `# fs=` header",
            path.display()
        ))
    })?;
    if !(sampling_rate > 0.0 && sampling_rate.is_finite()) {
        return Err(invalid(format!("sampling rate must be > 0, got {sampling_rate}")));
    }
    Ok(RawSignal { values, sampling_rate })
}

/// Writes `series` in single-column form with provenance comment lines.
pub fn write_signal(series: &Series, path: &Path, provenance: &[String]) -> Result<()> {
    let mut out = String::new();
    for p in provenance {
        out.push_str("# ");
        out.push_str(p);
        out.push('\n');
    }
    out.push_str(&series.to_csv());
    fs::write(path, out)?;
    Ok(())
}

/// Second-order IIR section `(b0 + b1 z⁻¹ + b2 z⁻²)/(1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Butterworth (Q = 1/√2) sections via the prewarped bilinear transform.
    fn butterworth(cutoff_hz: f64, fs: f64, high_pass: bool) -> Self {
        let k = (PI * cutoff_hz / fs).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
        let b = if high_pass {
            [norm, -2.0 * norm, norm]
        } else {
            let g = k * k * norm;
            [g, 2.0 * g, g]
        };
        Self { b, a }
    }

    pub fn low_pass(cutoff_hz: f64, fs: f64) -> Self {
        Self::butterworth(cutoff_hz, fs, false)
    }

    pub fn high_pass(cutoff_hz: f64, fs: f64) -> Self {
        Self::butterworth(cutoff_hz, fs, true)
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// `|H(e^{iω})|` at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / fs;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let nr = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let ni = -(self.b[1] * s1 + self.b[2] * s2);
        let dr = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let di = -(self.a[0] * s1 + self.a[1] * s2);
        ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
    }

    /// Transposed direct-form-II state that holds a constant unit input at
    /// steady state.
    fn steady_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * y;
        [self.b[1] - self.a[0] * y + z2, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[0] * y + z[1];
            z[1] = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// One pass of a cascade started at the steady state of its first input.
fn cascade_pass(sections: &[Biquad], x: &mut [f64]) {
    let mut level = x[0];
    for s in sections {
        let zi = s.steady_state();
        s.run(x, [zi[0] * level, zi[1] * level]);
        level *= s.dc_gain();
    }
}

/// Zero-phase band-pass between `low_hz` and `high_hz`.
pub fn bandpass(series: &Series, low_hz: f64, high_hz: f64) -> Result<Series> {
    let fs = series
        .sampling_rate()
        .ok_or_else(|| invalid("band-pass filtering needs a sampling rate"))?;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(invalid(format!(
            "band {low_hz}-{high_hz} Hz must satisfy 0 < low < high < fs/2 = {}",
            fs / 2.0
        )));
    }
    let sections = [Biquad::high_pass(low_hz, fs), Biquad::low_pass(high_hz, fs)];
    let x = series.values();
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort("filtering needs at least two samples".into()));
    }
    // odd reflection about the end samples; long enough to cover the
    // slowest section's settling
    let pad = ((3.0 * fs / low_hz).ceil() as usize).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    cascade_pass(&sections, &mut ext);
    ext.reverse();
    cascade_pass(&sections, &mut ext);
    ext.reverse();
    Series::new(ext[pad..pad + n].to_vec())?.with_sampling_rate(fs)
}

/// Shifts to mean 0 and scales to unit population variance.
pub fn normalize(series: &Series) -> Result<Series> {
    let x = series.values();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    // second pass removes the rounding residue of the first mean
    let resid = centred.iter().sum::<f64>() / n;
    let centred: Vec<f64> = centred.iter().map(|v| v - resid).collect();
    let var = centred.iter().map(|v| v * v).sum::<f64>() / n;
    if !(var > 0.0) || var.sqrt() <= 1e-12 * mean.abs() {
        return Err(Error::Degenerate("cannot standardize a constant series".into()));
    }
    let sd = var.sqrt();
    let s = Series::new(centred.into_iter().map(|v| v / sd).collect())?;
    match series.sampling_rate() {
        Some(fs) => s.with_sampling_rate(fs),
        None => Ok(s),
    }
}

/// Input windows paired with the value that follows each window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl WindowedData {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Windows start at `0, stride, 2·stride, …` and each needs a following
/// value, giving `⌊(N − length − 1)/stride⌋ + 1` pairs when `N > length`
/// and none when `N = length`.
pub fn window(series: &Series, length: usize, stride: usize) -> Result<WindowedData> {
    if length == 0 || stride == 0 {
        return Err(invalid("window length and stride must be >= 1"));
    }
    let x = series.values();
    if x.len() < length {
        return Err(Error::TooShort(format!(
            "series of {} values is shorter than the window length {length}",
            x.len()
        )));
    }
    let mut data = WindowedData {
        inputs: Vec::new(),
        targets: Vec::new(),
    };
    let mut start = 0;
    while start + length < x.len() {
        data.inputs.push(x[start..start + length].to_vec());
        data.targets.push(x[start + length]);
        start += stride;
    }
    Ok(data)
}

/// Splits off a test suffix of `⌈N·eval_fraction⌉` values first, then
/// windows each part, so no pair straddles the boundary.
pub fn split_and_window(
    series: &Series,
    eval_fraction: f64,
    length: usize,
    stride: usize,
) -> Result<(WindowedData, WindowedData)> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(invalid("eval fraction must lie in (0, 1)"));
    }
    let n_test = (series.len() as f64 * eval_fraction).ceil() as usize;
    let (train, test) = series.split_at(series.len().saturating_sub(n_test))?;
    Ok((window(&train, length, stride)?, window(&test, length, stride)?))
}
