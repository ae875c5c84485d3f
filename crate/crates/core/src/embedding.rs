//! Delay-coordinate embedding and false-nearest-neighbor analysis.
//!
//! A scalar series `s(n)` becomes vectors `[s(m), s(m+T), ..., s(m+(d-1)T)]`.
//! A nearest neighbor found at dimension `d` is *false* when adding the
//! `(d+1)`-th coordinate pushes it far away, which means the curve was still
//! folded onto itself at `d`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("SeriesTooShort: need at least {required} samples, have {available}")]
    SeriesTooShort { required: usize, available: usize },
    #[error("DegenerateSeries: series has zero variance")]
    DegenerateSeries,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

/// FNN search configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// Delay in samples.
    pub delay: usize,
    pub max_dim: usize,
    /// Distance-growth threshold.
    pub r_tol: f64,
    /// Attractor-size threshold, in units of the series standard deviation.
    pub a_tol: f64,
    /// Candidate neighbors must satisfy `|m - m'| > theiler_window`.
    pub theiler_window: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { delay: 1, max_dim: 12, r_tol: 15.0, a_tol: 2.0, theiler_window: 1 }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_string()));
        if self.delay < 1 {
            return bad("delay must be at least 1");
        }
        if self.max_dim < 2 {
            return bad("max_dim must be at least 2");
        }
        if self.r_tol.is_nan() || self.r_tol <= 1.0 {
            return bad("r_tol must exceed 1");
        }
        if self.a_tol.is_nan() || self.a_tol <= 0.0 {
            return bad("a_tol must be positive");
        }
        Ok(())
    }
}

/// `M x d` delay vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayVectorSet {
    pub dim: usize,
    pub delay: usize,
    pub source_len: usize,
    data: Vec<f64>,
}

impl DelayVectorSet {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vector(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

fn required_len(dim: usize, delay: usize) -> usize {
    (dim - 1) * delay + 1
}

pub fn build_delay_vectors(series: &[f64], dim: usize, delay: usize) -> Result<DelayVectorSet, EmbeddingError> {
    if dim == 0 || delay == 0 {
        return Err(EmbeddingError::InvalidConfig("dimension and delay must be positive".into()));
    }
    let required = required_len(dim, delay);
    if series.len() < required {
        return Err(EmbeddingError::SeriesTooShort { required, available: series.len() });
    }
    let count = series.len() - (dim - 1) * delay;
    let mut data = Vec::with_capacity(count * dim);
    for m in 0..count {
        data.extend((0..dim).map(|k| series[m + k * delay]));
    }
    Ok(DelayVectorSet { dim, delay, source_len: series.len(), data })
}

/// Population standard deviation.
pub fn std_dev(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    (series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnnCount {
    pub false_count: usize,
    pub tested_count: usize,
}

impl FnnCount {
    pub fn fraction(&self) -> Option<f64> {
        (self.tested_count > 0).then(|| self.false_count as f64 / self.tested_count as f64)
    }
}

/// Counts false nearest neighbors at dimension `dim`.
///
/// Every vector that also exists at `dim + 1` is tested. Its neighbor is the
/// closest other such vector (Euclidean, lowest index on ties) outside the
/// Theiler window. The pair is false when the added coordinate's separation
/// exceeds `r_tol` times the `dim`-distance, or when the `(dim+1)`-distance
/// exceeds `a_tol` standard deviations.
pub fn fnn_fraction(series: &[f64], dim: usize, config: &EmbeddingConfig) -> Result<FnnCount, EmbeddingError> {
    if dim == 0 {
        return Err(EmbeddingError::InvalidConfig("dimension must be positive".into()));
    }
    let delay = config.delay;
    if delay == 0 {
        return Err(EmbeddingError::InvalidConfig("delay must be positive".into()));
    }
    let required = required_len(dim + 1, delay);
    if series.len() < required {
        return Err(EmbeddingError::SeriesTooShort { required, available: series.len() });
    }
    let sigma = std_dev(series);
    if sigma == 0.0 {
        return Err(EmbeddingError::DegenerateSeries);
    }
    let points = series.len() - dim * delay;
    let coord = |m: usize, k: usize| series[m + k * delay];

    let mut count = FnnCount { false_count: 0, tested_count: 0 };
    for m in 0..points {
        let mut best: Option<(usize, f64)> = None;
        for other in 0..points {
            if m.abs_diff(other) <= config.theiler_window {
                continue;
            }
            let mut d2 = 0.0;
            for k in 0..dim {
                let diff = coord(m, k) - coord(other, k);
                d2 += diff * diff;
            }
            // Strict comparison keeps the lowest index among equidistant candidates.
            if best.is_none_or(|(_, b)| d2 < b) {
                best = Some((other, d2));
            }
        }
        let Some((nn, d2)) = best else { continue };
        count.tested_count += 1;
        let extra = (coord(m, dim) - coord(nn, dim)).abs();
        let dist_d = d2.sqrt();
        let growth_false = if dist_d == 0.0 { extra > 0.0 } else { extra / dist_d > config.r_tol };
        let dist_next = (d2 + extra * extra).sqrt();
        if growth_false || dist_next / sigma > config.a_tol {
            count.false_count += 1;
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnPoint {
    pub dim: usize,
    /// `None` when too few vectors remain at this dimension.
    pub fraction: Option<f64>,
    pub false_count: usize,
    pub tested_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnCurve {
    pub points: Vec<FnnPoint>,
}

/// Fewest tested vectors for a dimension to count as estimated.
pub const MIN_VECTORS: usize = 10;

impl FnnCurve {
    pub fn fraction(&self, dim: usize) -> Option<f64> {
        self.points.iter().find(|p| p.dim == dim).and_then(|p| p.fraction)
    }

    pub fn fractions(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.fraction).collect()
    }

    /// Writes `d,fraction,false_count,tested_count`; undefined fractions are empty.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["d", "fraction", "false_count", "tested_count"])?;
        for p in &self.points {
            w.write_record([
                p.dim.to_string(),
                p.fraction.map(|f| f.to_string()).unwrap_or_default(),
                p.false_count.to_string(),
                p.tested_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// FNN fractions for `d = 1..=max_dim`. Dimensions are evaluated in parallel.
pub fn fnn_curve(series: &[f64], config: &EmbeddingConfig) -> Result<FnnCurve, EmbeddingError> {
    config.validate()?;
    let supports = |d: usize| series.len() >= d * config.delay + MIN_VECTORS;
    if !supports(1) {
        return Err(EmbeddingError::SeriesTooShort { required: config.delay + MIN_VECTORS, available: series.len() });
    }
    let points = (1..=config.max_dim)
        .into_par_iter()
        .map(|d| {
            if !supports(d) {
                return Ok(FnnPoint { dim: d, fraction: None, false_count: 0, tested_count: 0 });
            }
            let c = fnn_fraction(series, d, config)?;
            Ok(FnnPoint { dim: d, fraction: c.fraction(), false_count: c.false_count, tested_count: c.tested_count })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    Ok(FnnCurve { points })
}

/// Smallest dimension whose defined fraction is at or below `threshold`.
pub fn estimate_dimension(curve: &FnnCurve, threshold: f64) -> Option<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return None;
    }
    curve.points.iter().find(|p| p.fraction.is_some_and(|f| f <= threshold)).map(|p| p.dim)
}

/// First lag where the autocorrelation falls below `1/e`, clamped to `[1, N/10]`.
pub fn default_delay(series: &[f64]) -> usize {
    let n = series.len();
    let upper = (n / 10).max(1);
    if n < 2 {
        return 1;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let var: f64 = centered.iter().map(|x| x * x).sum();
    if var == 0.0 {
        return 1;
    }
    let threshold = (-1.0f64).exp();
    for lag in 1..=upper {
        if lag >= n {
            break;
        }
        let cov: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
        if cov / var < threshold {
            return lag;
        }
    }
    upper
}
