//! Sampled mono audio and the deterministic generators the simulations run on.

use crate::error::{Error, Result};

/// 64-bit seed for every random generator in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: Seed) -> Self {
        Self { state: seed.0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on [0, 1) from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [-1, 1).
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }

    /// Uniform on [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }
}

/// Uniformly sampled mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        1000.0 * self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Mean square amplitude; zero for an empty signal.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Signal {
        Signal { samples: self.samples.iter().map(|s| s * gain).collect(), sample_rate_hz: self.sample_rate_hz }
    }

    /// Converts a duration to a whole number of samples at this rate.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        ms_to_samples(ms, self.sample_rate_hz)
    }
}

pub(crate) fn mean_square(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}

/// `round(ms * sr / 1000)` with ties to even. `ms` must be finite and non-negative.
pub fn ms_to_samples(ms: f64, sample_rate_hz: u32) -> usize {
    (ms * sample_rate_hz as f64 / 1000.0).round_ties_even() as usize
}

fn check_duration(duration_ms: f64, sample_rate_hz: u32) -> Result<()> {
    if !(duration_ms.is_finite() && duration_ms >= 0.0) {
        return Err(Error::invalid(format!("duration must be non-negative, got {duration_ms} ms")));
    }
    if sample_rate_hz == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    Ok(())
}

/// White noise, i.i.d. uniform on [-1, 1).
pub fn gen_white_noise(seed: Seed, duration_ms: f64, sample_rate_hz: u32) -> Result<Signal> {
    check_duration(duration_ms, sample_rate_hz)?;
    let len = ms_to_samples(duration_ms, sample_rate_hz);
    let mut rng = SplitMix64::new(seed);
    let samples = (0..len).map(|_| rng.next_symmetric()).collect();
    Signal::new(samples, sample_rate_hz)
}

pub fn gen_sine(freq_hz: f64, duration_ms: f64, sample_rate_hz: u32, amplitude: f64) -> Result<Signal> {
    check_duration(duration_ms, sample_rate_hz)?;
    let nyquist = sample_rate_hz as f64 / 2.0;
    if !(freq_hz >= 0.0 && freq_hz < nyquist) {
        return Err(Error::invalid(format!(
            "frequency {freq_hz} Hz outside [0, {nyquist}) for sample rate {sample_rate_hz} Hz"
        )));
    }
    let len = ms_to_samples(duration_ms, sample_rate_hz);
    let step = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz as f64;
    let samples = (0..len).map(|k| amplitude * (step * k as f64).sin()).collect();
    Signal::new(samples, sample_rate_hz)
}

/// Shifts `sig` later by a whole number of samples, zero-filling the head and
/// truncating the tail so the length is unchanged.
pub fn delay_signal(sig: &Signal, delay_ms: f64) -> Result<Signal> {
    if !(delay_ms.is_finite() && delay_ms >= 0.0) {
        return Err(Error::invalid(format!("delay must be non-negative, got {delay_ms} ms")));
    }
    let shift = sig.ms_to_samples(delay_ms).min(sig.len());
    Ok(delay_samples(sig, shift))
}

pub(crate) fn delay_samples(sig: &Signal, shift: usize) -> Signal {
    let n = sig.len();
    let shift = shift.min(n);
    let mut samples = vec![0.0; n];
    samples[shift..].copy_from_slice(&sig.samples[..n - shift]);
    Signal { samples, sample_rate_hz: sig.sample_rate_hz }
}

/// Weighted sample-wise sum. Shorter parts are zero-extended to the longest.
pub fn mix(parts: &[(&Signal, f64)]) -> Result<Signal> {
    let (first, _) = parts.first().ok_or_else(|| Error::invalid("mix needs at least one part"))?;
    let sample_rate_hz = first.sample_rate_hz;
    if let Some((odd, _)) = parts.iter().find(|(s, _)| s.sample_rate_hz != sample_rate_hz) {
        return Err(Error::invalid(format!(
            "sample rate mismatch in mix: {} Hz vs {} Hz",
            sample_rate_hz, odd.sample_rate_hz
        )));
    }
    let len = parts.iter().map(|(s, _)| s.len()).max().unwrap_or(0);
    let mut samples = vec![0.0; len];
    for (sig, gain) in parts {
        for (acc, x) in samples.iter_mut().zip(&sig.samples) {
            *acc += gain * x;
        }
    }
    Signal::new(samples, sample_rate_hz)
}

/// Adds seeded white noise scaled so that `power(sig) / power(noise)` equals
/// `10^(snr_db / 10)`.
pub fn add_noise_snr(sig: &Signal, snr_db: f64, seed: Seed) -> Result<Signal> {
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("snr must be finite, got {snr_db} dB")));
    }
    let signal_power = sig.power();
    if signal_power <= 0.0 {
        return Err(Error::invalid("cannot set an SNR against a zero-power signal"));
    }
    let mut rng = SplitMix64::new(seed);
    let noise: Vec<f64> = (0..sig.len()).map(|_| rng.next_symmetric()).collect();
    let noise_power = mean_square(&noise);
    if noise_power <= 0.0 {
        return Err(Error::invalid("generated noise has zero power"));
    }
    let target_noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let scale = (target_noise_power / noise_power).sqrt();
    let samples = sig.samples.iter().zip(&noise).map(|(s, n)| s + scale * n).collect();
    Signal::new(samples, sig.sample_rate_hz)
}
