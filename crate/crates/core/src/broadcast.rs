//! Broadcast control plane: sources with audio streams and advertising
//! trains, sinks with a presentation buffer and a local alignment delay, and
//! the two rule sets that govern them.
//!
//! Under the strict rules each audio stream may be described by a single
//! advertising train, sinks need only buffer 40 ms of presentation delay and
//! there is no local alignment delay parameter. The amended rules allow many
//! trains (each with its own presentation delay) to point at one stream,
//! require a 500 ms buffer and add the local alignment delay.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::DelayPlan;
use crate::registry::{Named, Registry};

pub const STRICT_MAX_PRESENTATION_DELAY_MS: f64 = 40.0;
pub const AMENDED_MIN_SINK_BUFFER_MS: f64 = 500.0;
pub const DEFAULT_STREAM_AIRTIME: f64 = 0.30;
pub const DEFAULT_TRAIN_AIRTIME: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecMode {
    Strict,
    Amended,
}

impl SpecMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpecMode::Strict => "strict",
            SpecMode::Amended => "amended",
        }
    }

    pub fn rules(&self) -> &'static dyn ControlPlaneRules {
        match self {
            SpecMode::Strict => &StrictRules,
            SpecMode::Amended => &AmendedRules,
        }
    }
}

impl fmt::Display for SpecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(SpecMode::Strict),
            "amended" => Ok(SpecMode::Amended),
            other => Err(Error::invalid(format!("unknown mode `{other}` (expected strict or amended)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Electromagnetic,
    Ultrasound,
}

impl TransportKind {
    /// Radio is treated as instantaneous at venue scale; an ultrasound carrier
    /// travels with the acoustic signal.
    pub fn propagation_delay_ms(&self, distance_m: f64, speed_of_sound_m_per_s: f64) -> f64 {
        match self {
            TransportKind::Electromagnetic => 0.0,
            TransportKind::Ultrasound => 1000.0 * distance_m / speed_of_sound_m_per_s,
        }
    }
}

pub fn transport_propagation_delay_ms(kind: TransportKind, distance_m: f64, speed_of_sound_m_per_s: f64) -> f64 {
    kind.propagation_delay_ms(distance_m, speed_of_sound_m_per_s)
}

/// Acoustic arrival minus everything the broadcast path adds.
pub fn end_to_end_residual_ms(
    acoustic_delay_ms: f64,
    transport_delay_ms: f64,
    presentation_delay_ms: f64,
    local_alignment_delay_ms: f64,
) -> f64 {
    acoustic_delay_ms - (transport_delay_ms + presentation_delay_ms + local_alignment_delay_ms)
}

fn default_stream_airtime() -> f64 {
    DEFAULT_STREAM_AIRTIME
}

fn default_train_airtime() -> f64 {
    DEFAULT_TRAIN_AIRTIME
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioStreamDescriptor {
    pub id: String,
    pub sample_rate_hz: u32,
    pub channels: u8,
    #[serde(default = "default_stream_airtime")]
    pub airtime_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvertisingTrain {
    pub id: String,
    pub target_stream_id: String,
    pub presentation_delay_ms: f64,
    #[serde(default)]
    pub codec: String,
    #[serde(default)]
    pub channels: String,
    #[serde(default = "default_train_airtime")]
    pub airtime_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadcastSource {
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default)]
    pub streams: Vec<AudioStreamDescriptor>,
    #[serde(default)]
    pub trains: Vec<AdvertisingTrain>,
}

impl BroadcastSource {
    /// Structural invariants: unique ids, every train targets an existing
    /// stream, fractions in [0, 1], non-negative presentation delays.
    pub fn check(&self) -> Result<()> {
        let mut stream_ids = HashSet::new();
        for s in &self.streams {
            if !stream_ids.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate stream id `{}`", s.id)));
            }
            if s.sample_rate_hz == 0 || !(1..=2).contains(&s.channels) {
                return Err(Error::Config(format!(
                    "stream `{}`: sample rate must be positive and channels 1 or 2",
                    s.id
                )));
            }
            check_fraction(&s.id, s.airtime_fraction)?;
        }
        let mut train_ids = HashSet::new();
        for t in &self.trains {
            if !train_ids.insert(t.id.as_str()) {
                return Err(Error::Config(format!("duplicate train id `{}`", t.id)));
            }
            if !stream_ids.contains(t.target_stream_id.as_str()) {
                return Err(Error::Config(format!("train `{}` targets unknown stream `{}`", t.id, t.target_stream_id)));
            }
            if !(t.presentation_delay_ms >= 0.0 && t.presentation_delay_ms.is_finite()) {
                return Err(Error::Config(format!("train `{}`: presentation delay must be non-negative", t.id)));
            }
            check_fraction(&t.id, t.airtime_fraction)?;
        }
        Ok(())
    }

    /// Broadcast layout serving every zone of `plan`: under strict rules one
    /// stream per zone, otherwise one shared stream with a train per zone.
    pub fn for_plan(plan: &DelayPlan, mode: SpecMode, transport: TransportKind) -> Self {
        let n = plan.zones.len();
        let stream = |id: String| AudioStreamDescriptor {
            id,
            sample_rate_hz: 48_000,
            channels: 2,
            airtime_fraction: DEFAULT_STREAM_AIRTIME,
        };
        let streams: Vec<_> = match mode {
            SpecMode::Strict => (0..n).map(|i| stream(format!("stream-{i}"))).collect(),
            SpecMode::Amended => vec![stream("stream-0".into())],
        };
        let trains = plan
            .zones
            .iter()
            .map(|z| AdvertisingTrain {
                id: format!("train-{}", z.index),
                target_stream_id: match mode {
                    SpecMode::Strict => format!("stream-{}", z.index),
                    SpecMode::Amended => "stream-0".into(),
                },
                presentation_delay_ms: z.presentation_delay_ms,
                codec: "lc3-48-2".into(),
                channels: "stereo".into(),
                airtime_fraction: DEFAULT_TRAIN_AIRTIME,
            })
            .collect();
        Self { transport, streams, trains }
    }
}

fn check_fraction(id: &str, f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(Error::Config(format!("`{id}`: airtime_fraction {f} outside [0, 1]")))
    }
}

/// Broadcast config file: a source plus an optional default mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BroadcastConfig {
    #[serde(default)]
    pub mode: Option<SpecMode>,
    #[serde(flatten)]
    pub source: BroadcastSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BroadcastConfigRecord {
    #[serde(default)]
    mode: Option<SpecMode>,
    #[serde(default)]
    transport: TransportKind,
    #[serde(default)]
    streams: Vec<AudioStreamDescriptor>,
    #[serde(default)]
    trains: Vec<AdvertisingTrain>,
}

impl BroadcastConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let r: BroadcastConfigRecord =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("broadcast config: {e}")))?;
        let source = BroadcastSource { transport: r.transport, streams: r.streams, trains: r.trains };
        source.check()?;
        Ok(Self { mode: r.mode, source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub stream_id: String,
    pub train_ids: Vec<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: stream `{}` is referenced by {} advertising trains ({})",
            self.rule,
            self.stream_id,
            self.train_ids.len(),
            self.train_ids.join(", ")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastSink {
    /// Buffer capacity for presentation (and local) delay.
    pub max_presentation_delay_ms: f64,
    pub local_alignment_delay_ms: f64,
}

impl BroadcastSink {
    pub fn new(max_presentation_delay_ms: f64, local_alignment_delay_ms: f64) -> Result<Self> {
        if !(max_presentation_delay_ms > 0.0) {
            return Err(Error::invalid("sink buffer must be positive"));
        }
        if !(local_alignment_delay_ms >= 0.0 && local_alignment_delay_ms.is_finite()) {
            return Err(Error::invalid("local alignment delay must be non-negative"));
        }
        Ok(Self { max_presentation_delay_ms, local_alignment_delay_ms })
    }

    /// Sink with the minimum buffer the rule set requires and no local delay.
    pub fn for_mode(mode: SpecMode) -> Self {
        Self { max_presentation_delay_ms: mode.rules().default_sink_buffer_ms(), local_alignment_delay_ms: 0.0 }
    }
}

/// One rule set for the broadcast control plane.
pub trait ControlPlaneRules: Named + Send + Sync {
    fn mode(&self) -> SpecMode;

    /// Buffer a conforming sink is required to provide.
    fn default_sink_buffer_ms(&self) -> f64;

    /// Rule violations in an otherwise well-formed source.
    fn validate(&self, source: &BroadcastSource) -> Vec<Violation>;

    /// Total delay the sink renders for a presentation delay, or why it cannot.
    fn apply_sink_delays(&self, sink: &BroadcastSink, presentation_delay_ms: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StrictRules;

#[derive(Debug, Clone, Copy, Default)]
pub struct AmendedRules;

impl Named for StrictRules {
    fn name(&self) -> &'static str {
        "strict"
    }
}

impl Named for AmendedRules {
    fn name(&self) -> &'static str {
        "amended"
    }
}

impl ControlPlaneRules for StrictRules {
    fn mode(&self) -> SpecMode {
        SpecMode::Strict
    }

    fn default_sink_buffer_ms(&self) -> f64 {
        STRICT_MAX_PRESENTATION_DELAY_MS
    }

    fn validate(&self, source: &BroadcastSource) -> Vec<Violation> {
        let mut by_stream: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for t in &source.trains {
            by_stream.entry(t.target_stream_id.as_str()).or_default().push(t.id.clone());
        }
        by_stream
            .into_iter()
            .filter(|(_, trains)| trains.len() > 1)
            .map(|(stream, train_ids)| Violation {
                rule: "multiple-trains-per-stream",
                stream_id: stream.to_owned(),
                train_ids,
            })
            .collect()
    }

    fn apply_sink_delays(&self, sink: &BroadcastSink, presentation_delay_ms: f64) -> Result<f64> {
        check_presentation(presentation_delay_ms)?;
        if sink.local_alignment_delay_ms > 0.0 {
            return Err(Error::ParameterUnsupported(format!(
                "local alignment delay ({} ms) is not a strict-mode parameter",
                sink.local_alignment_delay_ms
            )));
        }
        let capacity = sink.max_presentation_delay_ms.min(STRICT_MAX_PRESENTATION_DELAY_MS);
        if presentation_delay_ms > capacity {
            return Err(Error::BufferExceeded { requested_ms: presentation_delay_ms, capacity_ms: capacity });
        }
        Ok(presentation_delay_ms)
    }
}

impl ControlPlaneRules for AmendedRules {
    fn mode(&self) -> SpecMode {
        SpecMode::Amended
    }

    fn default_sink_buffer_ms(&self) -> f64 {
        AMENDED_MIN_SINK_BUFFER_MS
    }

    fn validate(&self, _source: &BroadcastSource) -> Vec<Violation> {
        Vec::new()
    }

    fn apply_sink_delays(&self, sink: &BroadcastSink, presentation_delay_ms: f64) -> Result<f64> {
        check_presentation(presentation_delay_ms)?;
        let total = presentation_delay_ms + sink.local_alignment_delay_ms;
        if total > sink.max_presentation_delay_ms {
            return Err(Error::BufferExceeded { requested_ms: total, capacity_ms: sink.max_presentation_delay_ms });
        }
        Ok(total)
    }
}

fn check_presentation(p: f64) -> Result<()> {
    if p >= 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("presentation delay must be non-negative, got {p} ms")))
    }
}

/// Both rule sets, keyed by mode name.
pub fn rule_registry() -> Registry<dyn ControlPlaneRules> {
    Registry::<dyn ControlPlaneRules>::new("rule set").with(Box::new(StrictRules)).with(Box::new(AmendedRules))
}

pub fn validate_config(source: &BroadcastSource, mode: SpecMode) -> Vec<Violation> {
    mode.rules().validate(source)
}

pub fn sink_apply_delays(sink: &BroadcastSink, presentation_delay_ms: f64, mode: SpecMode) -> Result<f64> {
    mode.rules().apply_sink_delays(sink, presentation_delay_ms)
}

/// Summed airtime of all streams and trains. Over 1 means over-subscribed.
pub fn airtime_occupancy(source: &BroadcastSource) -> f64 {
    source.streams.iter().map(|s| s.airtime_fraction).sum::<f64>()
        + source.trains.iter().map(|t| t.airtime_fraction).sum::<f64>()
}
