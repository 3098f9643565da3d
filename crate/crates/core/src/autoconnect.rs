//! Picking the broadcast stream that matches what the microphone hears, and
//! measuring how far the acoustic signal lags behind it.
//!
//! Each candidate stream is compared with the microphone signal by normalized
//! cross-correlation over every integer lag in `0..=L`. The candidate with the
//! highest peak wins if that peak clears the threshold; its lag becomes the
//! listener's local alignment delay.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::broadcast::{BroadcastSink, SpecMode};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::signals::{ms_to_samples, Signal};

pub const DEFAULT_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateStream {
    pub id: String,
    pub signal: Signal,
}

impl CandidateStream {
    pub fn new(id: impl Into<String>, signal: Signal) -> Result<Self> {
        let id = id.into();
        if signal.is_empty() {
            return Err(Error::invalid(format!("candidate `{id}` has an empty signal")));
        }
        Ok(Self { id, signal })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", content = "stream_id", rename_all = "snake_case")]
pub enum Outcome {
    Match(String),
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    #[serde(flatten)]
    pub outcome: Outcome,
    /// Best peak seen; on `NoMatch` this is the best candidate's score.
    pub peak_ncc: f64,
    /// Estimated lag of the selected stream; `None` on `NoMatch`.
    pub lag_ms: Option<f64>,
    /// True when the stream was chosen by the listener rather than by score.
    pub forced: bool,
}

impl SelectionResult {
    pub fn stream_id(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Match(id) => Some(id),
            Outcome::NoMatch => None,
        }
    }

    pub fn is_match(&self) -> bool {
        matches!(self.outcome, Outcome::Match(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagEstimate {
    pub lag_samples: usize,
    pub lag_ms: f64,
    pub peak_ncc: f64,
}

/// NCC of `stream[t]` against `mic[t + lag]` over their common length.
pub fn normalized_cross_correlation(mic: &Signal, stream: &Signal, lag_samples: usize) -> Result<f64> {
    check_rates(mic, stream)?;
    let n = mic.len().min(stream.len());
    if n < lag_samples + 2 {
        return Err(Error::invalid(format!("lag {lag_samples} leaves fewer than 2 overlapping samples (length {n})")));
    }
    let m = n - lag_samples;
    let s = &stream.samples()[..m];
    let x = &mic.samples()[lag_samples..lag_samples + m];
    let norm = (dot(s, s) * dot(x, x)).sqrt();
    Ok(if norm > 0.0 { dot(s, x) / norm } else { 0.0 })
}

fn check_rates(mic: &Signal, stream: &Signal) -> Result<()> {
    if mic.sample_rate_hz() != stream.sample_rate_hz() {
        return Err(Error::invalid(format!(
            "sample rate mismatch: mic {} Hz, stream {} Hz",
            mic.sample_rate_hz(),
            stream.sample_rate_hz()
        )));
    }
    Ok(())
}

/// Dot product over the common prefix of `a` and `b`.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { dot_avx2(a, b) };
        }
    }
    dot_lanes::<false>(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_avx2(a: &[f64], b: &[f64]) -> f64 {
    dot_lanes::<true>(a, b)
}

/// Sixteen independent accumulators so the loop vectorizes and pipelines.
/// `FUSED` must only be set where hardware FMA is available.
#[inline(always)]
fn dot_lanes<const FUSED: bool>(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 16;
    let mut acc = [0.0f64; LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let tail: f64 = chunks_a.remainder().iter().zip(chunks_b.remainder()).map(|(x, y)| x * y).sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..LANES {
            acc[i] = if FUSED { ca[i].mul_add(cb[i], acc[i]) } else { acc[i] + ca[i] * cb[i] };
        }
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for i in 0..width {
            acc[i] += acc[i + width];
        }
    }
    acc[0] + tail
}

/// Window energies for every lag: `stream[..n-l]` and `mic[l..n]`.
fn window_energies(mic: &[f64], stream: &[f64], n: usize, max_lag: usize) -> (Vec<f64>, Vec<f64>) {
    // prefix[k] = sum of stream[t]^2 for t < k
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &v in &stream[..n] {
        acc += v * v;
        prefix.push(acc);
    }
    // suffix[l] = sum of mic[t]^2 for l <= t < n
    let mut suffix = vec![0.0; n + 1];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        acc += mic[t] * mic[t];
        suffix[t] = acc;
    }
    let stream_e = (0..=max_lag).map(|l| prefix[n - l]).collect();
    let mic_e = (0..=max_lag).map(|l| suffix[l]).collect();
    (stream_e, mic_e)
}

fn normalize(num: f64, e1: f64, e2: f64) -> f64 {
    let norm = (e1 * e2).sqrt();
    if norm > 0.0 {
        num / norm
    } else {
        0.0
    }
}

/// A way of computing the NCC of a stream against the mic at lags `0..=max_lag`.
pub trait DelayEstimator: Named + Send + Sync {
    /// `out[l]` is the NCC at lag `l`. Callers guarantee `max_lag + 2 <= n`
    /// where `n` is the shorter length.
    fn correlogram(&self, mic: &[f64], stream: &[f64], max_lag: usize) -> Vec<f64>;
}

/// Direct evaluation at every lag.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveNcc;

impl Named for ExhaustiveNcc {
    fn name(&self) -> &'static str {
        "exhaustive"
    }
}

impl DelayEstimator for ExhaustiveNcc {
    fn correlogram(&self, mic: &[f64], stream: &[f64], max_lag: usize) -> Vec<f64> {
        let n = mic.len().min(stream.len());
        let (stream_e, mic_e) = window_energies(mic, stream, n, max_lag);
        (0..=max_lag).map(|l| normalize(dot(&stream[..n - l], &mic[l..n]), stream_e[l], mic_e[l])).collect()
    }
}

/// Cross-correlation numerators by FFT; same window normalization.
#[derive(Debug, Clone, Copy, Default)]
pub struct FftNcc;

impl Named for FftNcc {
    fn name(&self) -> &'static str {
        "fft"
    }
}

impl DelayEstimator for FftNcc {
    fn correlogram(&self, mic: &[f64], stream: &[f64], max_lag: usize) -> Vec<f64> {
        let n = mic.len().min(stream.len());
        let size = (n + max_lag).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);

        let padded = |xs: &[f64]| {
            let mut buf: Vec<Complex<f64>> = xs[..n].iter().map(|&v| Complex::new(v, 0.0)).collect();
            buf.resize(size, Complex::new(0.0, 0.0));
            buf
        };
        let mut s = padded(stream);
        let mut m = padded(mic);
        forward.process(&mut s);
        forward.process(&mut m);
        // r[l] = sum_t s[t] m[t + l]  <=>  R = conj(S) * M
        let mut r: Vec<Complex<f64>> = s.iter().zip(&m).map(|(a, b)| a.conj() * b).collect();
        inverse.process(&mut r);
        let scale = 1.0 / size as f64;

        let (stream_e, mic_e) = window_energies(mic, stream, n, max_lag);
        (0..=max_lag).map(|l| normalize(r[l].re * scale, stream_e[l], mic_e[l])).collect()
    }
}

/// All built-in estimators by name.
pub fn estimator_registry() -> Registry<dyn DelayEstimator> {
    Registry::<dyn DelayEstimator>::new("estimator").with(Box::new(ExhaustiveNcc)).with(Box::new(FftNcc))
}

/// Index of the largest value, first one on ties.
fn argmax(values: &[f64]) -> (usize, f64) {
    values.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
}

/// Correlation-based stream selection with a chosen estimator.
#[derive(Clone, Copy)]
pub struct Selector<'a> {
    pub estimator: &'a dyn DelayEstimator,
    pub max_lag_ms: f64,
    pub threshold: f64,
}

impl<'a> Selector<'a> {
    pub fn new(estimator: &'a dyn DelayEstimator, max_lag_ms: f64, threshold: f64) -> Self {
        Self { estimator, max_lag_ms, threshold }
    }

    pub fn estimate(&self, mic: &Signal, stream: &Signal) -> Result<LagEstimate> {
        check_rates(mic, stream)?;
        if !(self.max_lag_ms >= 0.0 && self.max_lag_ms.is_finite()) {
            return Err(Error::invalid(format!("max lag must be non-negative, got {} ms", self.max_lag_ms)));
        }
        let sr = mic.sample_rate_hz();
        let max_lag = ms_to_samples(self.max_lag_ms, sr);
        let n = mic.len().min(stream.len());
        if max_lag + 2 > n {
            return Err(Error::invalid(format!(
                "lag search up to {max_lag} samples leaves no valid overlap for signals of {n} samples"
            )));
        }
        let curve = self.estimator.correlogram(mic.samples(), stream.samples(), max_lag);
        let (lag, peak) = argmax(&curve);
        Ok(LagEstimate { lag_samples: lag, lag_ms: 1000.0 * lag as f64 / sr as f64, peak_ncc: peak })
    }

    fn check_threshold(&self) -> Result<()> {
        if self.threshold > 0.0 && self.threshold < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("threshold must lie in (0, 1), got {}", self.threshold)))
        }
    }

    /// Scores every candidate and keeps the best; ties go to the smaller id.
    pub fn select(&self, mic: &Signal, candidates: &[CandidateStream]) -> Result<SelectionResult> {
        if candidates.is_empty() {
            return Err(Error::invalid("no candidate streams"));
        }
        self.check_threshold()?;
        let mut ordered: Vec<&CandidateStream> = candidates.iter().collect();
        ordered.sort_by(|a, b| a.id.cmp(&b.id));
        let scores = ordered.par_iter().map(|c| self.estimate(mic, &c.signal)).collect::<Result<Vec<_>>>()?;
        let (best, est) = scores
            .iter()
            .enumerate()
            .fold(None::<(usize, &LagEstimate)>, |acc, (i, e)| match acc {
                Some((_, b)) if b.peak_ncc >= e.peak_ncc => acc,
                _ => Some((i, e)),
            })
            .expect("at least one candidate");
        Ok(if est.peak_ncc >= self.threshold {
            SelectionResult {
                outcome: Outcome::Match(ordered[best].id.clone()),
                peak_ncc: est.peak_ncc,
                lag_ms: Some(est.lag_ms),
                forced: false,
            }
        } else {
            SelectionResult { outcome: Outcome::NoMatch, peak_ncc: est.peak_ncc, lag_ms: None, forced: false }
        })
    }

    /// Scan, compare, connect. A forced stream bypasses scoring and the
    /// threshold. On a match the sink takes the estimated lag as its local
    /// alignment delay and the mode's rules decide whether it can render it.
    pub fn pipeline(
        &self,
        mic: &Signal,
        candidates: &[CandidateStream],
        sink: &BroadcastSink,
        mode: SpecMode,
        forced_stream: Option<&str>,
    ) -> Result<PipelineResult> {
        let selection = match forced_stream {
            Some(id) => {
                if candidates.is_empty() {
                    return Err(Error::invalid("no candidate streams"));
                }
                let chosen = candidates
                    .iter()
                    .find(|c| c.id == id)
                    .ok_or_else(|| Error::NotFound(format!("forced stream `{id}` is not among the candidates")))?;
                let est = self.estimate(mic, &chosen.signal)?;
                SelectionResult {
                    outcome: Outcome::Match(chosen.id.clone()),
                    peak_ncc: est.peak_ncc,
                    lag_ms: Some(est.lag_ms),
                    forced: true,
                }
            }
            None => self.select(mic, candidates)?,
        };
        let sink = match selection.lag_ms {
            Some(lag_ms) => {
                let updated = BroadcastSink { local_alignment_delay_ms: lag_ms, ..*sink };
                mode.rules()
                    .apply_sink_delays(&updated, 0.0)
                    .map(|applied_ms| SinkUpdate { sink: updated, applied_delay_ms: Some(applied_ms) })
            }
            None => Ok(SinkUpdate { sink: *sink, applied_delay_ms: None }),
        };
        Ok(PipelineResult { selection, sink })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkUpdate {
    pub sink: BroadcastSink,
    /// Total delay the sink renders; `None` when nothing was connected.
    pub applied_delay_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub selection: SelectionResult,
    pub sink: Result<SinkUpdate>,
}

pub fn estimate_alignment_delay(mic: &Signal, stream: &Signal, max_lag_ms: f64) -> Result<(f64, f64)> {
    let est = Selector::new(&ExhaustiveNcc, max_lag_ms, DEFAULT_THRESHOLD).estimate(mic, stream)?;
    Ok((est.lag_ms, est.peak_ncc))
}

pub fn select_stream(
    mic: &Signal,
    candidates: &[CandidateStream],
    max_lag_ms: f64,
    threshold: f64,
) -> Result<SelectionResult> {
    Selector::new(&ExhaustiveNcc, max_lag_ms, threshold).select(mic, candidates)
}

pub fn autoconnect_pipeline(
    mic: &Signal,
    candidates: &[CandidateStream],
    sink: &BroadcastSink,
    mode: SpecMode,
    max_lag_ms: f64,
    threshold: f64,
    forced_stream: Option<&str>,
) -> Result<PipelineResult> {
    Selector::new(&ExhaustiveNcc, max_lag_ms, threshold).pipeline(mic, candidates, sink, mode, forced_stream)
}
