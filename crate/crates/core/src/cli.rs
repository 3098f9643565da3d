//! `alsalign` command line.
//!
//! Exit codes: 0 success or match, 1 clean negative result (no match, failed
//! validation), 2 usage or input error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::acoustics::{propagation_delay_ms, Venue};
use crate::autoconnect::{estimator_registry, CandidateStream, Selector, DEFAULT_THRESHOLD};
use crate::broadcast::{airtime_occupancy, BroadcastConfig, BroadcastSink, SpecMode};
use crate::error::{Error, Result};
use crate::format::{fmt6, round_json};
use crate::perception::{classify_residual, ear_signal, notch_frequencies, DistortionClass, MixSpec};
use crate::planner::{plan_zones, residual_delay_ms, verify_plan, zone_for_delay, DelayPlan};
use crate::signals::{add_noise_snr, delay_signal, gen_sine, gen_white_noise, Seed, Signal};
use crate::wav::read_wav;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "alsalign",
    version,
    about = "Alignment-delay planning and stream auto-selection for assistive listening"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan delay zones for a venue and write the plan as JSON.
    Plan(PlanArgs),
    /// Write the per-seat delay map for a venue under a plan as CSV.
    Map(MapArgs),
    /// Simulate the ear signal at one seat and report its distortion.
    Simulate(SimulateArgs),
    /// Pick the stream matching a microphone signal and set the sink delay.
    Autoconnect(AutoconnectArgs),
    /// Check a broadcast config against a rule set.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub venue: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    pub tolerance_ms: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub venue: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub venue: PathBuf,
    /// Without a plan the broadcast is uncompensated.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub seat_id: String,
    #[arg(long, default_value_t = 16000)]
    pub sample_rate_hz: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000.0)]
    pub duration_ms: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AutoconnectArgs {
    /// Microphone signal: a WAV path, `noise:<seed>:<ms>:<sr>` or `sine:<hz>:<ms>:<sr>`.
    #[arg(long)]
    pub mic: String,
    /// Extra acoustic delay applied to the microphone signal before matching.
    #[arg(long, default_value_t = 0.0)]
    pub mic_delay_ms: f64,
    /// Add white noise to the microphone signal at this SNR.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Seed for the microphone noise.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Candidate stream as `ID=SOURCE`; repeat for each stream.
    #[arg(long = "stream", required = true)]
    pub streams: Vec<String>,
    #[arg(long, default_value_t = 500.0)]
    pub max_lag_ms: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "amended")]
    pub mode: String,
    /// Sink buffer; defaults to the minimum the mode requires.
    #[arg(long)]
    pub sink_buffer_ms: Option<f64>,
    /// Connect to this stream regardless of scores.
    #[arg(long)]
    pub force_stream: Option<String>,
    #[arg(long, default_value = "exhaustive")]
    pub estimator: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the mode in the config file; strict when neither is given.
    #[arg(long)]
    pub mode: Option<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                EXIT_ERROR
            } else {
                let _ = write!(stdout, "{rendered}");
                EXIT_OK
            };
        }
    };
    let result = match &cli.command {
        Command::Plan(a) => run_plan(a, stdout),
        Command::Map(a) => run_map(a, stdout),
        Command::Simulate(a) => run_simulate(a, stdout),
        Command::Autoconnect(a) => run_autoconnect(a, stdout),
        Command::Validate(a) => run_validate(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {} ({})", e, e.kind());
            EXIT_ERROR
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_report_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_json(&mut v);
    let mut text = serde_json::to_string_pretty(&v).expect("report serializes");
    text.push('\n');
    text
}

pub fn run_plan(args: &PlanArgs, stdout: &mut dyn Write) -> Result<i32> {
    let venue = Venue::load(&args.venue)?;
    let plan = plan_zones(venue.max_seat_distance_m(), args.tolerance_ms, venue.speed_of_sound_m_per_s)?;
    write_file(&args.out, &plan.to_json())?;
    writeln!(stdout, "zones: {}", plan.zones.len())?;
    writeln!(stdout, "max_residual_bound_ms: {}", fmt6(plan.max_residual_bound_ms()))?;
    Ok(EXIT_OK)
}

pub const MAP_HEADER: [&str; 7] =
    ["seat_id", "distance_m", "acoustic_delay_ms", "zone", "presentation_delay_ms", "residual_ms", "class"];

pub fn run_map(args: &MapArgs, stdout: &mut dyn Write) -> Result<i32> {
    let venue = Venue::load(&args.venue)?;
    let plan = DelayPlan::load(&args.plan)?;
    let verification = verify_plan(&venue, &plan)?;

    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    writer.write_record(MAP_HEADER).map_err(csv_err)?;
    for seat in &verification.seats {
        let (zone, presentation, residual, class) = match (&seat.zone, &seat.presentation_delay_ms, &seat.report) {
            (Some(z), Some(p), Some(r)) => (z.to_string(), fmt6(*p), fmt6(r.residual_ms), r.class.as_str()),
            _ => (String::new(), String::new(), String::new(), "uncovered"),
        };
        writer
            .write_record([
                seat.seat_id.as_str(),
                &fmt6(seat.distance_m),
                &fmt6(seat.acoustic_delay_ms),
                &zone,
                &presentation,
                &residual,
                class,
            ])
            .map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&args.out, bytes).map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    writeln!(
        stdout,
        "seats: {} uncovered: {} max_abs_residual_ms: {}",
        verification.seats.len(),
        verification.uncovered,
        fmt6(verification.max_abs_residual_ms)
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    seat_id: String,
    distance_m: f64,
    acoustic_delay_ms: f64,
    zone: Option<usize>,
    presentation_delay_ms: f64,
    residual_ms: f64,
    class: DistortionClass,
    sample_rate_hz: u32,
    seed: u64,
    program_rms: f64,
    ear_rms: f64,
    notch_frequencies_hz: Vec<f64>,
}

pub fn run_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let venue = Venue::load(&args.venue)?;
    let seat = venue.seat(&args.seat_id)?;
    let distance_m = venue.nearest_loudspeaker_distance_m(&seat.position);
    let acoustic = propagation_delay_ms(distance_m, venue.speed_of_sound_m_per_s)?;
    let (zone, presentation) = match &args.plan {
        Some(path) => {
            let plan = DelayPlan::load(path)?;
            if plan.speed_of_sound_m_per_s != venue.speed_of_sound_m_per_s {
                return Err(Error::invalid("plan and venue speed of sound differ"));
            }
            let zone = zone_for_delay(&plan, acoustic)?;
            (Some(zone.index), zone.presentation_delay_ms)
        }
        None => (None, 0.0),
    };
    let residual = residual_delay_ms(acoustic, presentation);

    let program = gen_white_noise(Seed(args.seed), args.duration_ms, args.sample_rate_hz)?;
    let ear = ear_signal(&program, &program, residual, MixSpec::default())?;
    let report = SimulationReport {
        seat_id: seat.id.clone(),
        distance_m,
        acoustic_delay_ms: acoustic,
        zone,
        presentation_delay_ms: presentation,
        residual_ms: residual,
        class: classify_residual(residual),
        sample_rate_hz: args.sample_rate_hz,
        seed: args.seed,
        program_rms: program.rms(),
        ear_rms: ear.rms(),
        notch_frequencies_hz: notch_frequencies(residual.abs(), args.sample_rate_hz as f64 / 2.0),
    };
    write_file(&args.out, &to_report_json(&report))?;
    writeln!(stdout, "seat {}: residual {} ms, {}", report.seat_id, fmt6(residual), report.class)?;
    Ok(EXIT_OK)
}

/// Builds a signal from a WAV path or a synthetic spec
/// (`noise:<seed>:<ms>:<sr>`, `sine:<hz>:<ms>:<sr>`).
pub fn load_signal(source: &str) -> Result<Signal> {
    let parts: Vec<&str> = source.split(':').collect();
    let bad = || Error::invalid(format!("malformed signal spec `{source}`"));
    match parts.as_slice() {
        ["noise", seed, ms, sr] => gen_white_noise(
            Seed(seed.parse().map_err(|_| bad())?),
            ms.parse().map_err(|_| bad())?,
            sr.parse().map_err(|_| bad())?,
        ),
        ["sine", hz, ms, sr] => gen_sine(
            hz.parse().map_err(|_| bad())?,
            ms.parse().map_err(|_| bad())?,
            sr.parse().map_err(|_| bad())?,
            1.0,
        ),
        ["noise" | "sine", ..] => Err(bad()),
        _ => read_wav(source),
    }
}

fn parse_stream_arg(arg: &str) -> Result<CandidateStream> {
    let (id, source) = match arg.split_once('=') {
        Some((id, source)) if !id.is_empty() => (id, source),
        Some(_) => return Err(Error::invalid(format!("stream `{arg}` has an empty id"))),
        None => (arg, arg),
    };
    CandidateStream::new(id, load_signal(source)?)
}

#[derive(Debug, Serialize)]
struct SinkReport {
    max_presentation_delay_ms: f64,
    local_alignment_delay_ms: f64,
    applied_delay_ms: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ErrorReport {
    kind: &'static str,
    message: String,
}

#[derive(Debug, Serialize)]
struct AutoconnectReport {
    outcome: &'static str,
    stream_id: Option<String>,
    peak_ncc: f64,
    lag_ms: Option<f64>,
    forced: bool,
    mode: SpecMode,
    estimator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    sink: Option<SinkReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorReport>,
}

pub fn run_autoconnect(args: &AutoconnectArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mode: SpecMode = args.mode.parse()?;
    let registry = estimator_registry();
    let estimator = registry.get(&args.estimator)?;

    let mut mic = load_signal(&args.mic)?;
    if args.mic_delay_ms != 0.0 {
        mic = delay_signal(&mic, args.mic_delay_ms)?;
    }
    if let Some(snr_db) = args.snr_db {
        mic = add_noise_snr(&mic, snr_db, Seed(args.seed))?;
    }
    let candidates = args.streams.iter().map(|s| parse_stream_arg(s)).collect::<Result<Vec<_>>>()?;
    let mut sink = BroadcastSink::for_mode(mode);
    if let Some(buffer) = args.sink_buffer_ms {
        sink = BroadcastSink::new(buffer, 0.0)?;
    }

    let selector = Selector::new(estimator, args.max_lag_ms, args.threshold);
    let result = selector.pipeline(&mic, &candidates, &sink, mode, args.force_stream.as_deref())?;
    let selection = &result.selection;
    let (sink_report, error, code) = match &result.sink {
        Ok(update) => (
            Some(SinkReport {
                max_presentation_delay_ms: update.sink.max_presentation_delay_ms,
                local_alignment_delay_ms: update.sink.local_alignment_delay_ms,
                applied_delay_ms: update.applied_delay_ms,
            }),
            None,
            if selection.is_match() { EXIT_OK } else { EXIT_NEGATIVE },
        ),
        Err(e) => (None, Some(ErrorReport { kind: e.kind(), message: e.to_string() }), EXIT_ERROR),
    };
    let report = AutoconnectReport {
        outcome: if selection.is_match() { "match" } else { "no_match" },
        stream_id: selection.stream_id().map(str::to_owned),
        peak_ncc: selection.peak_ncc,
        lag_ms: selection.lag_ms,
        forced: selection.forced,
        mode,
        estimator: estimator.name().to_owned(),
        sink: sink_report,
        error,
    };
    write_file(&args.out, &to_report_json(&report))?;
    match (&report.stream_id, &report.error) {
        (_, Some(err)) => writeln!(stdout, "sink rejected connection: {}", err.kind)?,
        (Some(id), None) => writeln!(
            stdout,
            "match {id}: peak {} lag {} ms",
            fmt6(report.peak_ncc),
            fmt6(report.lag_ms.unwrap_or(0.0))
        )?,
        (None, None) => writeln!(stdout, "no match (best peak {})", fmt6(report.peak_ncc))?,
    }
    Ok(code)
}

pub fn run_validate(args: &ValidateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let config = BroadcastConfig::load(&args.config)?;
    let mode = match &args.mode {
        Some(m) => m.parse()?,
        None => config.mode.unwrap_or(SpecMode::Strict),
    };
    let violations = mode.rules().validate(&config.source);
    writeln!(stdout, "mode: {mode}")?;
    if violations.is_empty() {
        writeln!(stdout, "ok")?;
    } else {
        for v in &violations {
            writeln!(stdout, "violation: {v}")?;
        }
    }
    writeln!(stdout, "airtime_occupancy: {}", fmt6(airtime_occupancy(&config.source)))?;
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_NEGATIVE })
}
