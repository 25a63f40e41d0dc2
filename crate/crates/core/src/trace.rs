//! Trace CSV input and output, preprocessing, maximum-likelihood lengthscale fitting and
//! synthetic traces.
//!
//! CSV layout: a header row `t,<dim1>,<dim2>,...` followed by one row per sample, `t` in
//! seconds. One trace per file.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::gp::{build_covariance, sample_mvn, KernelSpec, Mvn};
use crate::linalg::{self, format_real};

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    timestamps: Vec<f64>,
    /// `values[d][i]`: dimension d at sample i
    values: Vec<Vec<f64>>,
    dim_labels: Vec<String>,
}

impl Trace {
    pub fn new(timestamps: Vec<f64>, values: Vec<Vec<f64>>, dim_labels: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("a trace needs at least one dimension"));
        }
        if values.len() != dim_labels.len() {
            return Err(Error::DimensionMismatch { expected: values.len(), found: dim_labels.len() });
        }
        for v in &values {
            if v.len() != timestamps.len() {
                return Err(Error::DimensionMismatch { expected: timestamps.len(), found: v.len() });
            }
        }
        if timestamps.iter().chain(values.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(invalid("trace contains non-finite values"));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("timestamps must be nondecreasing"));
        }
        Ok(Self { timestamps, values, dim_labels })
    }

    /// Single-dimension trace on timestamps 0, 1, 2, ...
    pub fn from_values(label: &str, values: Vec<f64>) -> Result<Self> {
        let t = (0..values.len()).map(|i| i as f64).collect();
        Self::new(t, vec![values], vec![label.to_string()])
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dimension(&self, d: usize) -> &[f64] {
        &self.values[d]
    }

    pub fn dim_labels(&self) -> &[String] {
        &self.dim_labels
    }

    /// Last minus first timestamp.
    pub fn duration(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Median gap between consecutive timestamps; `None` with fewer than two samples.
    pub fn sampling_period(&self) -> Option<f64> {
        let gaps: Vec<f64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        median(&gaps)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "t" {
            return Err(Error::Parse("header must be `t,<dim1>,...`".into()));
        }
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut t = Vec::new();
        let mut values = vec![Vec::new(); labels.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| Error::Parse(format!("row {}: column {k}: {e}", line + 1)))
            };
            t.push(parse(0)?);
            for (d, col) in values.iter_mut().enumerate() {
                col.push(parse(d + 1)?);
            }
        }
        Self::new(t, values, labels)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.dim_labels.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format_real(self.timestamps[i])];
            row.extend(self.values.iter().map(|v| format_real(v[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Length and duration windows for [`preprocess`]. Bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub min_len: usize,
    pub max_len: usize,
    /// seconds
    pub min_duration: f64,
    pub max_duration: f64,
}

impl Default for PreprocessConfig {
    /// At most 50 points spanning 4.5 to 5.5 minutes.
    fn default() -> Self {
        Self { min_len: 2, max_len: 50, min_duration: 270.0, max_duration: 330.0 }
    }
}

impl PreprocessConfig {
    /// Accepts any trace with at least two samples.
    pub fn unfiltered() -> Self {
        Self { min_len: 2, max_len: usize::MAX, min_duration: f64::NEG_INFINITY, max_duration: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    TooShort,
    TooLong,
    DurationOutOfRange,
    ZeroVariance,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::TooShort => "too_short",
            RejectReason::TooLong => "too_long",
            RejectReason::DurationOutOfRange => "duration_out_of_range",
            RejectReason::ZeroVariance => "zero_variance",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.detail)
    }
}

fn reject(reason: RejectReason, detail: String) -> std::result::Result<Trace, Rejection> {
    Err(Rejection { reason, detail })
}

/// Filters by the windows in `cfg`, then de-means each dimension and scales it to unit
/// (population) variance.
pub fn preprocess(raw: &Trace, cfg: &PreprocessConfig) -> std::result::Result<Trace, Rejection> {
    let n = raw.len();
    if n < cfg.min_len.max(2) {
        return reject(RejectReason::TooShort, format!("{n} samples"));
    }
    if n > cfg.max_len {
        return reject(RejectReason::TooLong, format!("{n} samples, limit {}", cfg.max_len));
    }
    let dur = raw.duration();
    if dur < cfg.min_duration || dur > cfg.max_duration {
        return reject(
            RejectReason::DurationOutOfRange,
            format!("{dur} s outside [{}, {}]", cfg.min_duration, cfg.max_duration),
        );
    }
    let mut values = Vec::with_capacity(raw.dims());
    for (label, v) in raw.dim_labels.iter().zip(&raw.values) {
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        if !(var > (1e-12 * scale).powi(2)) {
            return reject(RejectReason::ZeroVariance, format!("dimension `{label}` is constant"));
        }
        let sd = var.sqrt();
        values.push(v.iter().map(|x| (x - mean) / sd).collect());
    }
    Ok(Trace { timestamps: raw.timestamps.clone(), values, dim_labels: raw.dim_labels.clone() })
}

/// 40 log-spaced lengthscales over [0.5, 20].
pub fn default_grid() -> Vec<f64> {
    log_grid(0.5, 20.0, 40)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut g: Vec<f64> = (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect();
            g[0] = lo;
            g[count - 1] = hi;
            g
        }
    }
}

/// Zero-mean Gaussian log-likelihood of `values` under covariance `cov`.
pub fn gaussian_loglik(values: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let n = values.len();
    linalg::check_square(cov, n)?;
    let ch = linalg::cholesky(cov, "kernel covariance")?;
    let x = DVector::from_column_slice(values);
    let quad = x.dot(&ch.solve(&x));
    Ok(-0.5 * (quad + linalg::logdet(&ch) + n as f64 * (2.0 * std::f64::consts::PI).ln()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthscaleFit {
    pub l_eff: f64,
    pub loglik: f64,
    /// (l_eff, log-likelihood) for every grid point, ascending in l_eff; non-finite where the
    /// kernel matrix could not be factored.
    pub curve: Vec<(f64, f64)>,
}

/// Grid maximum-likelihood lengthscale for one dimension, with the family, variance and
/// jitter of `template`. Ties go to the smaller lengthscale.
pub fn fit_lengthscale(values: &[f64], template: &KernelSpec, grid: &[f64]) -> Result<LengthscaleFit> {
    if grid.is_empty() {
        return Err(invalid("lengthscale grid is empty"));
    }
    if values.is_empty() {
        return Err(invalid("cannot fit an empty trace"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let mut curve = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64)> = None;
    let mut last_err = None;
    for &l in &sorted {
        let ll = build_covariance(&template.with_lengthscale(l)?, n).and_then(|k| gaussian_loglik(values, &k));
        let ll = match ll {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::NAN,
            Err(e) => {
                last_err = Some(e);
                f64::NAN
            }
        };
        curve.push((l, ll));
        if ll.is_finite() && best.is_none_or(|(_, b)| ll > b) {
            best = Some((l, ll));
        }
    }
    match best {
        Some((l_eff, loglik)) => Ok(LengthscaleFit { l_eff, loglik, curve }),
        None => Err(match last_err {
            Some(e) => Error::Solver(format!("likelihood is non-finite on the whole grid; last failure: {e}")),
            None => Error::Solver("likelihood is non-finite on the whole grid".into()),
        }),
    }
}

/// One fit per dimension of `trace`.
pub fn fit_trace(trace: &Trace, template: &KernelSpec, grid: &[f64]) -> Result<Vec<LengthscaleFit>> {
    trace.values.iter().map(|v| fit_lengthscale(v, template, grid)).collect()
}

/// Lengthscale in samples: seconds divided by the sampling period.
pub fn effective_lengthscale(l_seconds: f64, period_seconds: f64) -> Result<f64> {
    if !(l_seconds.is_finite() && l_seconds > 0.0) {
        return Err(invalid(format!("lengthscale must be positive, got {l_seconds}")));
    }
    if !(period_seconds.is_finite() && period_seconds > 0.0) {
        return Err(invalid(format!("sampling period must be positive, got {period_seconds}")));
    }
    Ok(l_seconds / period_seconds)
}

/// Linear-interpolated quantile, `q` in [0, 1]. `None` for empty input or NaN entries.
pub fn quantile(xs: &[f64], q: f64) -> Option<f64> {
    if xs.is_empty() || xs.iter().any(|x| x.is_nan()) || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(xs: &[f64]) -> Option<f64> {
    quantile(xs, 0.5)
}

/// Pooled Pearson correlation between the first two dimensions of each trace, after removing
/// each trace's per-dimension mean.
pub fn dimension_correlation(traces: &[Trace]) -> Result<f64> {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    let mut points = 0;
    for tr in traces {
        if tr.dims() < 2 {
            return Err(invalid("dimension correlation needs 2-d traces"));
        }
        let (x, y) = (&tr.values[0], &tr.values[1]);
        if x.is_empty() {
            continue;
        }
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        for (a, b) in x.iter().zip(y) {
            let (a, b) = (a - mx, b - my);
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        points += x.len();
    }
    if points < 2 {
        return Err(invalid("dimension correlation needs at least 2 points"));
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(invalid("a dimension has zero variance"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// One draw from the zero-mean GP with kernel `spec` on timestamps 0..n.
pub fn synth_trace(spec: &KernelSpec, n: usize, seed: u64) -> Result<Trace> {
    let cov = build_covariance(spec, n)?;
    let dist = Mvn::zero_mean(cov)?;
    let draw = sample_mvn(&dist, seed, 1).remove(0);
    Trace::from_values("x", draw.iter().copied().collect())
}
