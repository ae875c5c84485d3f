//! The sample → embed → project → occupancy → deviation pipeline run at
//! several time scales over one packet stream.
//!
//! Each [`WindowSpec`] is analysed independently of the others; specs run
//! in parallel and results are merged in `(label, window_index)` order, so
//! output does not depend on scheduling. Signature scanning runs once at
//! packet resolution and its alerts are counted into every label's windows.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::ParsedHeaders;
use crate::embedding::{build_delay_vectors, EmbeddingError};
use crate::parameters::{extract, sample_points, tau_to_us, Aggregator, ParameterError, ParameterId, ParameterSeries};
use crate::signatures::{scan_stream, Alert, ScanConfig, SignatureError, SignatureRule};
use crate::trajectory::{deviation_score, occupancy, project, OccupancyHistogram, Projection, TrajectoryError};

/// Projection axes used for scoring.
pub const SCORE_AXES: [usize; 2] = [0, 1];

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Parameter(#[from] ParameterError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Error)]
pub enum MultiwindowError {
    #[error("EmptyPlan: no window specs given")]
    EmptyPlan,
    #[error("DuplicateLabel: {0:?} appears more than once")]
    DuplicateLabel(String),
    #[error("[{label}] {source}")]
    Spec {
        label: String,
        #[source]
        source: StageError,
    },
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

fn default_dim() -> usize {
    3
}
fn default_delay() -> usize {
    1
}
fn default_bins() -> usize {
    20
}

/// One analysis time scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub label: String,
    /// Bin width in seconds.
    pub tau: f64,
    /// Bins per analysis window.
    pub window_len: usize,
    pub parameters: Vec<ParameterId>,
    #[serde(default)]
    pub aggregator: Aggregator,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_delay")]
    pub delay: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Reference histogram per parameter; parameters without one get no score.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub baseline: BTreeMap<ParameterId, OccupancyHistogram>,
}

impl WindowSpec {
    pub fn new(label: &str, tau: f64, window_len: usize, parameters: Vec<ParameterId>) -> Self {
        Self {
            label: label.to_string(),
            tau,
            window_len,
            parameters,
            aggregator: Aggregator::Last,
            dim: default_dim(),
            delay: default_delay(),
            bins: default_bins(),
            baseline: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<u64, StageError> {
        let tau_us = tau_to_us(self.tau)?;
        let bad = |m: String| Err(StageError::InvalidSpec(m));
        if self.window_len < 2 {
            return bad(format!("window_len {} below 2", self.window_len));
        }
        if self.parameters.is_empty() {
            return bad("no parameters".into());
        }
        if self.dim < 2 {
            return bad(format!("dim {} cannot be projected onto two axes", self.dim));
        }
        if self.delay == 0 {
            return bad("delay must be at least 1".into());
        }
        if self.bins < 2 {
            return bad(format!("bins {} below 2", self.bins));
        }
        Ok(tau_us)
    }
}

/// Annotation carried by a longer-scale report: a shorter-scale window that
/// scored above its label's percentile inside this report's time range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeHint {
    pub label: String,
    pub window_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub label: String,
    pub window_index: usize,
    /// `[start, end)` in microseconds.
    pub t_range: (u64, u64),
    /// Deviation per parameter; absent without a baseline or when the window
    /// is too short to embed.
    pub scores: BTreeMap<ParameterId, Option<f64>>,
    pub alert_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hints: Vec<CascadeHint>,
}

impl WindowReport {
    /// Largest defined parameter score.
    pub fn max_score(&self) -> Option<f64> {
        self.scores.values().flatten().copied().reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RunMode {
    /// First failing spec aborts the run.
    #[default]
    Strict,
    /// Failing specs are reported and the rest still run.
    Partial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecFailure {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub reports: Vec<WindowReport>,
    pub alerts: Vec<Alert>,
    pub failures: Vec<SpecFailure>,
}

/// Sampled series of every spec parameter plus the window grid they share.
struct Sampled {
    series: Vec<(ParameterId, ParameterSeries)>,
    tau_us: u64,
    t0: u64,
    windows: usize,
}

fn sample_spec(packets: &[(u64, ParsedHeaders)], spec: &WindowSpec) -> Result<Sampled, StageError> {
    let tau_us = spec.validate()?;
    let series: Vec<_> = spec
        .parameters
        .iter()
        .map(|&p| {
            let points = packets.iter().map(|(ts, h)| (*ts, extract(h, p))).collect();
            (p, sample_points(points, Some(p), tau_us, spec.aggregator, 0.0))
        })
        .collect();
    let (t0, n) = series.first().map_or((0, 0), |(_, s)| (s.t0_us, s.len()));
    Ok(Sampled { series, tau_us, t0, windows: n.div_ceil(spec.window_len) })
}

/// Projection of window `w` of `values`, or `None` if it is too short to embed.
fn window_projection(values: &[f64], w: usize, spec: &WindowSpec) -> Result<Option<Projection>, StageError> {
    let lo = w * spec.window_len;
    let hi = ((w + 1) * spec.window_len).min(values.len());
    match build_delay_vectors(&values[lo..hi], spec.dim, spec.delay) {
        Ok(v) => Ok(Some(project(&v, &SCORE_AXES)?)),
        Err(EmbeddingError::SeriesTooShort { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn run_spec(
    packets: &[(u64, ParsedHeaders)],
    spec: &WindowSpec,
    alert_times: &[u64],
) -> Result<Vec<WindowReport>, StageError> {
    let s = sample_spec(packets, spec)?;
    let span = s.tau_us * spec.window_len as u64;
    let mut reports = Vec::with_capacity(s.windows);
    for w in 0..s.windows {
        let start = s.t0 + w as u64 * span;
        let end = start + span;
        let mut scores = BTreeMap::new();
        for (p, series) in &s.series {
            let score = match (spec.baseline.get(p), window_projection(&series.values, w, spec)?) {
                (Some(base), Some(proj)) => {
                    let observed = occupancy(&proj, spec.bins, Some(&base.bounds))?;
                    Some(deviation_score(base, &observed)?)
                }
                _ => None,
            };
            scores.insert(*p, score);
        }
        let lo = alert_times.partition_point(|&t| t < start);
        let hi = alert_times.partition_point(|&t| t < end);
        reports.push(WindowReport {
            label: spec.label.clone(),
            window_index: w,
            t_range: (start, end),
            scores,
            alert_count: hi - lo,
            hints: Vec::new(),
        });
    }
    Ok(reports)
}

/// Runs every spec over the full stream and scans it once for signatures.
pub fn run_plan(
    packets: &[(u64, ParsedHeaders)],
    specs: &[WindowSpec],
    catalog: &[SignatureRule],
    scan: &ScanConfig,
    mode: RunMode,
) -> Result<PlanOutput, MultiwindowError> {
    if specs.is_empty() {
        return Err(MultiwindowError::EmptyPlan);
    }
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert(s.label.as_str()) {
            return Err(MultiwindowError::DuplicateLabel(s.label.clone()));
        }
    }
    let alerts = scan_stream(catalog, scan, packets.iter().map(|(t, h)| (*t, h)))?;
    let mut alert_times: Vec<u64> = alerts.iter().map(|a| a.ts_us).collect();
    alert_times.sort_unstable();

    let results: Vec<_> = specs.par_iter().map(|s| run_spec(packets, s, &alert_times)).collect();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (spec, r) in specs.iter().zip(results) {
        match (r, mode) {
            (Ok(rs), _) => reports.extend(rs),
            (Err(e), RunMode::Strict) => return Err(MultiwindowError::Spec { label: spec.label.clone(), source: e }),
            (Err(e), RunMode::Partial) => {
                failures.push(SpecFailure { label: spec.label.clone(), error: e.to_string() })
            }
        }
    }
    reports.sort_by(|a, b| (&a.label, a.window_index).cmp(&(&b.label, b.window_index)));
    Ok(PlanOutput { reports, alerts, failures })
}

/// Per-parameter reference histograms pooled over every window of the given
/// streams (typically benign captures), on data-derived bounds.
pub fn build_baseline(
    streams: &[&[(u64, ParsedHeaders)]],
    spec: &WindowSpec,
) -> Result<BTreeMap<ParameterId, OccupancyHistogram>, StageError> {
    let sampled = streams.iter().map(|s| sample_spec(s, spec)).collect::<Result<Vec<_>, _>>()?;
    let mut out = BTreeMap::new();
    for (i, &p) in spec.parameters.iter().enumerate() {
        let mut parts = Vec::new();
        for s in &sampled {
            for w in 0..s.windows {
                if let Some(proj) = window_projection(&s.series[i].1.values, w, spec)? {
                    parts.push(proj);
                }
            }
        }
        if parts.is_empty() {
            return Err(StageError::InvalidSpec(format!("no window long enough to embed for {p}")));
        }
        let pooled = Projection::concat(&parts)?;
        out.insert(p, occupancy(&pooled, spec.bins, None)?);
    }
    Ok(out)
}

/// Nearest-rank percentile of a non-empty sorted slice.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Attaches cascade hints in place.
///
/// A window whose largest score is strictly above the `pct`-th percentile of
/// its own label's window scores is attached to every report of a label with
/// a longer window duration whose range overlaps it. Scores are untouched.
pub fn apply_cascade(reports: &mut [WindowReport], pct: f64) {
    let mut by_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in reports.iter() {
        if let Some(s) = r.max_score() {
            by_label.entry(r.label.as_str()).or_default().push(s);
        }
    }
    let thresholds: BTreeMap<String, f64> = by_label
        .into_iter()
        .map(|(l, mut v)| {
            v.sort_by(f64::total_cmp);
            (l.to_string(), percentile(&v, pct))
        })
        .collect();
    let hot: Vec<(CascadeHint, (u64, u64))> = reports
        .iter()
        .filter_map(|r| {
            let s = r.max_score()?;
            (s > thresholds[&r.label])
                .then(|| (CascadeHint { label: r.label.clone(), window_index: r.window_index, score: s }, r.t_range))
        })
        .collect();
    for r in reports.iter_mut() {
        let dur = r.t_range.1 - r.t_range.0;
        for (hint, (s, e)) in &hot {
            if e - s < dur && *s < r.t_range.1 && r.t_range.0 < *e {
                r.hints.push(hint.clone());
            }
        }
    }
}

pub fn write_reports_jsonl<W: Write>(mut out: W, reports: &[WindowReport]) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
