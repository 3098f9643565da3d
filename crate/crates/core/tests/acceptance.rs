//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use alsalign::acoustics::propagation_delay_ms;
use alsalign::autoconnect::{estimate_alignment_delay, select_stream, CandidateStream};
use alsalign::broadcast::{
    end_to_end_residual_ms, sink_apply_delays, transport_propagation_delay_ms, validate_config, AdvertisingTrain,
    AudioStreamDescriptor, BroadcastSink, BroadcastSource, SpecMode, TransportKind,
};
use alsalign::perception::{classify_residual, comb_filter_magnitude, notch_frequencies, DistortionClass};
use alsalign::planner::{plan_zones, residual_delay_ms, zone_for_delay};
use alsalign::signals::{add_noise_snr, delay_signal, gen_white_noise, Seed, Signal, SplitMix64};
use alsalign::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

/// 1. 200 ft at 30 ms tolerance needs three transmitters.
fn transmitter_count() -> Outcome {
    let start = Instant::now();
    let plan = plan_zones(60.96, 30.0, 343.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(plan.zones.len() == 3, || format!("{} zones", plan.zones.len()))?;
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("3 zones in {elapsed:?}"))
}

/// 2. Delay to a seat 200 ft from the stage.
fn delay_magnitude() -> Outcome {
    let d = propagation_delay_ms(60.96, 343.0).map_err(|e| e.to_string())?;
    check((d - 180.0).abs() <= 6.0, || format!("{d} ms is not about 180 ms"))?;
    check((d - 1000.0 * 60.96 / 343.0).abs() <= 1e-6, || format!("{d} != d/v"))?;
    check((d - 177.73).abs() <= 0.005, || format!("{d} does not round to 177.73"))?;
    Ok(format!("{d:.4} ms"))
}

/// 3. Every sampled delay of 10 000 random plans stays within tolerance.
fn residual_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(Seed(0xAC03));
    let mut samples = 0usize;
    for _ in 0..10_000 {
        let max_distance = rng.next_range(0.0, 500.0);
        let tolerance = rng.next_range(5.0, 50.0);
        let plan = plan_zones(max_distance, tolerance, 343.0).map_err(|e| e.to_string())?;
        let span = plan.span_ms();
        let mut delays: Vec<f64> = (0..20).map(|_| rng.next_unit() * span).collect();
        delays.push(0.0);
        delays.push(span);
        delays.extend(plan.zones.iter().map(|z| z.delay_lo_ms));
        for d in delays {
            let zone = zone_for_delay(&plan, d).map_err(|e| e.to_string())?;
            let r = residual_delay_ms(d, zone.presentation_delay_ms);
            check(r.abs() <= tolerance, || format!("residual {r} > {tolerance} at delay {d} (span {span})"))?;
            samples += 1;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("{samples} delays checked in {elapsed:?}"))
}

/// 4. Perceptual thresholds and sign symmetry.
fn perceptual_thresholds() -> Outcome {
    let expected = [
        (3.0, DistortionClass::Coloration),
        (20.0, DistortionClass::Reverberation),
        (50.0, DistortionClass::Echo),
        (0.0, DistortionClass::Aligned),
    ];
    for (x, class) in expected {
        check(classify_residual(x) == class, || format!("{x} ms -> {:?}", classify_residual(x)))?;
    }
    let mut rng = SplitMix64::new(Seed(0xAC04));
    for _ in 0..1000 {
        let x = rng.next_range(-100.0, 100.0);
        check(classify_residual(x) == classify_residual(-x), || format!("asymmetric at {x}"))?;
    }
    Ok("examples exact, 1000 values symmetric".into())
}

/// 5. Comb magnitude at every notch equals |1 - gain|.
fn comb_notches() -> Outcome {
    let mut rng = SplitMix64::new(Seed(0xAC05));
    let mut notches = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let delay = rng.next_range(0.05, 50.0);
        let gain = rng.next_range(0.0, 2.0);
        let list = notch_frequencies(delay, 20_000.0);
        check(!list.is_empty(), || format!("no notches for delay {delay}"))?;
        for f in list {
            let err = (comb_filter_magnitude(delay, gain, f) - (1.0 - gain).abs()).abs();
            worst = worst.max(err);
            check(err <= 1e-9, || format!("delay {delay} gain {gain} f {f}: error {err}"))?;
            notches += 1;
        }
    }
    Ok(format!("{notches} notches, max error {worst:.2e}"))
}

/// 6. Auto-connect picks the right stream and lag at 0 dB SNR.
fn autoconnect_accuracy() -> Outcome {
    const TRIALS: usize = 500;
    const SR: u32 = 16_000;
    let start = Instant::now();
    let mut rng = SplitMix64::new(Seed(0xAC06));
    let mut correct = 0usize;
    let mut lag_ok = 0usize;
    for _ in 0..TRIALS {
        let ids = ["A", "B", "C"];
        let streams: Vec<Signal> = (0..3)
            .map(|_| gen_white_noise(Seed(rng.next_u64()), 1000.0, SR))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let truth = (rng.next_u64() % 3) as usize;
        let delay_ms = rng.next_range(0.0, 400.0);
        let mic = delay_signal(&streams[truth], delay_ms).map_err(|e| e.to_string())?;
        let mic = add_noise_snr(&mic, 0.0, Seed(rng.next_u64())).map_err(|e| e.to_string())?;
        let candidates: Vec<_> = ids
            .iter()
            .zip(streams)
            .map(|(id, s)| CandidateStream::new(*id, s))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let result = select_stream(&mic, &candidates, 400.0, 0.3).map_err(|e| e.to_string())?;
        if result.stream_id() == Some(ids[truth]) {
            correct += 1;
            let err_samples = (result.lag_ms.unwrap() - delay_ms).abs() * SR as f64 / 1000.0;
            if err_samples <= 1.0 {
                lag_ok += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let selection_rate = correct as f64 / TRIALS as f64;
    let lag_rate = if correct == 0 { 0.0 } else { lag_ok as f64 / correct as f64 };
    let summary = format!(
        "selection {correct}/{TRIALS} ({:.1}%), lag within 1 sample {lag_ok}/{correct} ({:.1}%), {elapsed:?}",
        100.0 * selection_rate,
        100.0 * lag_rate
    );
    check(selection_rate >= 0.99, || summary.clone())?;
    check(lag_rate >= 0.95, || summary.clone())?;
    within(elapsed, Duration::from_secs(60)).map_err(|e| format!("{summary}; {e}"))?;
    Ok(summary)
}

/// Independent exhaustive search straight from the NCC definition.
fn brute_force_delay(mic: &[f64], stream: &[f64], max_lag: usize) -> (usize, f64) {
    let n = mic.len().min(stream.len());
    let mut best = (0usize, f64::NEG_INFINITY);
    for lag in 0..=max_lag {
        let (mut num, mut es, mut em) = (0.0, 0.0, 0.0);
        for t in 0..n - lag {
            num += stream[t] * mic[t + lag];
            es += stream[t] * stream[t];
            em += mic[t + lag] * mic[t + lag];
        }
        let v = if es > 0.0 && em > 0.0 { num / (es.sqrt() * em.sqrt()) } else { 0.0 };
        if v > best.1 {
            best = (lag, v);
        }
    }
    best
}

/// 7. The estimator agrees with the brute force on small instances.
fn oracle_equivalence() -> Outcome {
    const SR: u32 = 1000; // one sample per millisecond
    let mut rng = SplitMix64::new(Seed(0xAC07));
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let len_stream = 16 + (rng.next_u64() % 497) as usize;
        let len_mic = 16 + (rng.next_u64() % 497) as usize;
        let n = len_stream.min(len_mic);
        let max_lag = (rng.next_u64() % (n as u64 - 1)) as usize;
        let stream: Vec<f64> = (0..len_stream).map(|_| rng.next_symmetric()).collect();
        let mic: Vec<f64> = if i % 2 == 0 {
            let shift = (rng.next_u64() % (max_lag as u64 + 1)) as usize;
            (0..len_mic)
                .map(|t| {
                    let echo = if t >= shift && t - shift < len_stream { stream[t - shift] } else { 0.0 };
                    echo + 0.5 * rng.next_symmetric()
                })
                .collect()
        } else {
            (0..len_mic).map(|_| rng.next_symmetric()).collect()
        };
        let (lag_ms, peak) = estimate_alignment_delay(
            &Signal::new(mic.clone(), SR).unwrap(),
            &Signal::new(stream.clone(), SR).unwrap(),
            max_lag as f64,
        )
        .map_err(|e| e.to_string())?;
        let (oracle_lag, oracle_peak) = brute_force_delay(&mic, &stream, max_lag);
        check(lag_ms == oracle_lag as f64, || format!("instance {i}: lag {lag_ms} vs oracle {oracle_lag}"))?;
        let err = (peak - oracle_peak).abs();
        worst = worst.max(err);
        check(err <= 1e-12, || format!("instance {i}: peak {peak} vs oracle {oracle_peak}"))?;
    }
    Ok(format!("50 instances, max peak difference {worst:.2e}"))
}

/// 8. Strict and amended rule boundaries.
fn spec_mode_behavior() -> Outcome {
    const EPS: f64 = 1e-9;
    let stream = AudioStreamDescriptor { id: "s".into(), sample_rate_hz: 48_000, channels: 2, airtime_fraction: 0.3 };
    let train = |id: &str, p: f64| AdvertisingTrain {
        id: id.into(),
        target_stream_id: "s".into(),
        presentation_delay_ms: p,
        codec: "lc3".into(),
        channels: "stereo".into(),
        airtime_fraction: 0.01,
    };
    let shared = BroadcastSource {
        transport: TransportKind::Electromagnetic,
        streams: vec![stream],
        trains: vec![train("z0", 30.0), train("z1", 90.0), train("z2", 150.0)],
    };
    check(!validate_config(&shared, SpecMode::Strict).is_empty(), || "strict accepted shared stream".into())?;
    check(validate_config(&shared, SpecMode::Amended).is_empty(), || "amended rejected shared stream".into())?;

    let sink = |max: f64, local: f64| BroadcastSink::new(max, local).unwrap();
    let strict = |s: BroadcastSink, p: f64| sink_apply_delays(&s, p, SpecMode::Strict);
    let amended = |s: BroadcastSink, p: f64| sink_apply_delays(&s, p, SpecMode::Amended);

    check(strict(sink(40.0, 0.0), 40.0) == Ok(40.0), || "strict 40 ms rejected".into())?;
    check(matches!(strict(sink(40.0, 0.0), 40.0 + EPS), Err(Error::BufferExceeded { .. })), || {
        "strict accepted 40+eps".into()
    })?;
    check(matches!(strict(sink(500.0, 0.0), 40.0 + EPS), Err(Error::BufferExceeded { .. })), || {
        "strict with large buffer accepted 40+eps".into()
    })?;
    check(matches!(strict(sink(500.0, EPS), 0.0), Err(Error::ParameterUnsupported(_))), || {
        "strict accepted a local alignment delay".into()
    })?;

    check(amended(sink(500.0, 0.0), 40.0 + EPS) == Ok(40.0 + EPS), || "amended rejected 40+eps".into())?;
    check(amended(sink(500.0, 0.0), 500.0) == Ok(500.0), || "amended rejected 500 ms".into())?;
    check(matches!(amended(sink(500.0, 0.0), 500.0 + EPS), Err(Error::BufferExceeded { .. })), || {
        "amended accepted 500+eps".into()
    })?;
    check(amended(sink(500.0, 100.0), 400.0) == Ok(500.0), || "amended rejected 400+100".into())?;
    check(matches!(amended(sink(500.0, 100.0 + EPS), 400.0), Err(Error::BufferExceeded { .. })), || {
        "amended accepted 400+100+eps".into()
    })?;
    check(amended(BroadcastSink::for_mode(SpecMode::Amended), 500.0) == Ok(500.0), || {
        "default amended sink below 500 ms".into()
    })?;
    Ok("strict rejects all three, amended accepts up to 500 ms".into())
}

/// 9. Ultrasound transport arrives with the acoustic signal.
fn ultrasound_invariant() -> Outcome {
    let mut rng = SplitMix64::new(Seed(0xAC09));
    for _ in 0..100 {
        let d = rng.next_range(0.0, 500.0);
        let acoustic = propagation_delay_ms(d, 343.0).map_err(|e| e.to_string())?;
        let transport = transport_propagation_delay_ms(TransportKind::Ultrasound, d, 343.0);
        let r = end_to_end_residual_ms(acoustic, transport, 0.0, 0.0);
        check(r == 0.0, || format!("residual {r} at {d} m"))?;
    }
    Ok("100 distances, residual exactly 0".into())
}

fn demo_venue() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/demo_venue.json")
}

fn cli_run(args: &[&str]) -> Result<i32, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["alsalign"];
    argv.extend_from_slice(args);
    let code = alsalign::cli::run(argv, &mut out, &mut err);
    if code == 2 {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&err)));
    }
    Ok(code)
}

fn demo_outputs(dir: &std::path::Path) -> Result<Vec<Vec<u8>>, String> {
    let venue = demo_venue();
    let venue = venue.to_str().unwrap();
    let path = |name: &str| dir.join(name).to_str().unwrap().to_owned();
    let (plan, map, sel) = (path("plan.json"), path("map.csv"), path("autoconnect.json"));
    cli_run(&["plan", "--venue", venue, "--tolerance-ms", "30", "--out", &plan])?;
    cli_run(&["map", "--venue", venue, "--plan", &plan, "--out", &map])?;
    let code = cli_run(&[
        "autoconnect",
        "--mic",
        "noise:11:1000:16000",
        "--mic-delay-ms",
        "149.4",
        "--snr-db",
        "0",
        "--seed",
        "5",
        "--stream",
        "main=noise:11:1000:16000",
        "--stream",
        "other=noise:12:1000:16000",
        "--max-lag-ms",
        "400",
        "--out",
        &sel,
    ])?;
    check(code == 0, || format!("autoconnect exit {code}"))?;
    [plan, map, sel].iter().map(|p| std::fs::read(p).map_err(|e| e.to_string())).collect()
}

/// 10. Two CLI runs on the demo venue produce identical bytes.
fn determinism() -> Outcome {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = demo_outputs(first.path())?;
    let b = demo_outputs(second.path())?;
    for (name, (x, y)) in ["plan JSON", "delay-map CSV", "autoconnect JSON"].iter().zip(a.iter().zip(&b)) {
        check(x == y, || format!("{name} differs between runs"))?;
        check(!x.is_empty(), || format!("{name} is empty"))?;
    }
    Ok(format!("{} + {} + {} bytes identical", a[0].len(), a[1].len(), a[2].len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC-01 transmitter count", transmitter_count),
        ("AC-02 delay magnitude", delay_magnitude),
        ("AC-03 residual bound", residual_bound),
        ("AC-04 perceptual thresholds", perceptual_thresholds),
        ("AC-05 comb filter notches", comb_notches),
        ("AC-06 auto-connect accuracy", autoconnect_accuracy),
        ("AC-07 oracle equivalence", oracle_equivalence),
        ("AC-08 spec-mode behavior", spec_mode_behavior),
        ("AC-09 ultrasound invariant", ultrasound_invariant),
        ("AC-10 CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
