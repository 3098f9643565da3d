//! Perceptual classification of residual alignment delay and the comb filter
//! formed by mixing the broadcast with the acoustic signal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{delay_signal, mix, Signal};

/// Upper edge (inclusive) of each class, in milliseconds of |residual|.
pub const ALIGNED_MAX_MS: f64 = 0.1;
pub const COLORATION_MAX_MS: f64 = 5.0;
pub const REVERBERATION_MAX_MS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionClass {
    Aligned,
    Coloration,
    Reverberation,
    Echo,
}

impl DistortionClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistortionClass::Aligned => "aligned",
            DistortionClass::Coloration => "coloration",
            DistortionClass::Reverberation => "reverberation",
            DistortionClass::Echo => "echo",
        }
    }
}

impl fmt::Display for DistortionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gains applied to the two branches of the ear signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub broadcast_gain: f64,
    pub acoustic_gain: f64,
}

impl MixSpec {
    pub fn new(broadcast_gain: f64, acoustic_gain: f64) -> Result<Self> {
        if !(broadcast_gain >= 0.0 && acoustic_gain >= 0.0) {
            return Err(Error::invalid("mix gains must be non-negative"));
        }
        Ok(Self { broadcast_gain, acoustic_gain })
    }
}

impl Default for MixSpec {
    fn default() -> Self {
        Self { broadcast_gain: 1.0, acoustic_gain: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub seat_id: String,
    /// Positive when the acoustic signal arrives after the broadcast.
    pub residual_ms: f64,
    pub class: DistortionClass,
    pub notch_frequencies_hz: Vec<f64>,
}

impl DistortionReport {
    pub fn new(seat_id: impl Into<String>, residual_ms: f64, max_freq_hz: f64) -> Self {
        Self {
            seat_id: seat_id.into(),
            residual_ms,
            class: classify_residual(residual_ms),
            notch_frequencies_hz: notch_frequencies(residual_ms.abs(), max_freq_hz),
        }
    }
}

/// Buckets |residual|: aligned up to 0.1 ms, coloration up to 5 ms,
/// reverberation up to 30 ms, echo beyond. Upper edges are inclusive.
pub fn classify_residual(residual_ms: f64) -> DistortionClass {
    let a = residual_ms.abs();
    if a <= ALIGNED_MAX_MS {
        DistortionClass::Aligned
    } else if a <= COLORATION_MAX_MS {
        DistortionClass::Coloration
    } else if a <= REVERBERATION_MAX_MS {
        DistortionClass::Reverberation
    } else {
        DistortionClass::Echo
    }
}

/// |1 + g·e^{-jωτ}|: magnitude response of a signal summed with a delayed,
/// scaled copy of itself, i.e. `sqrt(1 + g² + 2g·cos ωτ)`.
///
/// Evaluated as `sqrt((1 - g)² + 4g·cos²(ωτ/2))`, which is the same quantity
/// but does not cancel catastrophically at the notches when g is close to 1.
pub fn comb_filter_magnitude(delay_ms: f64, gain: f64, freq_hz: f64) -> f64 {
    let half_phase = std::f64::consts::PI * freq_hz * delay_ms / 1000.0;
    let c = half_phase.cos();
    ((1.0 - gain) * (1.0 - gain) + 4.0 * gain * c * c).sqrt()
}

/// Notches sit at odd multiples of `1 / (2·delay)`, ascending, up to `max_freq_hz`.
pub fn notch_frequencies(delay_ms: f64, max_freq_hz: f64) -> Vec<f64> {
    if !(delay_ms > 0.0) || !delay_ms.is_finite() {
        return Vec::new();
    }
    let spacing = 1000.0 / delay_ms;
    (0u64..).map(|k| (2 * k + 1) as f64 * spacing / 2.0).take_while(|&f| f <= max_freq_hz).collect()
}

/// What reaches the ear: the broadcast and the acoustic signal, the later one
/// delayed by |residual|, summed with the given gains.
pub fn ear_signal(broadcast: &Signal, acoustic: &Signal, residual_ms: f64, spec: MixSpec) -> Result<Signal> {
    if !residual_ms.is_finite() {
        return Err(Error::invalid("residual must be finite"));
    }
    if broadcast.sample_rate_hz() != acoustic.sample_rate_hz() {
        return Err(Error::invalid(format!(
            "sample rate mismatch: broadcast {} Hz, acoustic {} Hz",
            broadcast.sample_rate_hz(),
            acoustic.sample_rate_hz()
        )));
    }
    if residual_ms >= 0.0 {
        let late = delay_signal(acoustic, residual_ms)?;
        mix(&[(broadcast, spec.broadcast_gain), (&late, spec.acoustic_gain)])
    } else {
        let late = delay_signal(broadcast, -residual_ms)?;
        mix(&[(&late, spec.broadcast_gain), (acoustic, spec.acoustic_gain)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{gen_sine, gen_white_noise, mean_square, Seed};
    use proptest::prelude::*;

    #[test]
    fn classification_examples() {
        assert_eq!(classify_residual(0.0), DistortionClass::Aligned);
        assert_eq!(classify_residual(3.0), DistortionClass::Coloration);
        assert_eq!(classify_residual(20.0), DistortionClass::Reverberation);
        assert_eq!(classify_residual(-50.0), DistortionClass::Echo);
    }

    #[test]
    fn classification_boundaries_are_closed_above() {
        assert_eq!(classify_residual(0.1), DistortionClass::Aligned);
        assert_eq!(classify_residual(0.100_001), DistortionClass::Coloration);
        assert_eq!(classify_residual(5.0), DistortionClass::Coloration);
        assert_eq!(classify_residual(5.000_001), DistortionClass::Reverberation);
        assert_eq!(classify_residual(30.0), DistortionClass::Reverberation);
        assert_eq!(classify_residual(-30.000_001), DistortionClass::Echo);
    }

    #[test]
    fn comb_examples() {
        for delay in [0.0, 0.3, 1.0, 17.0] {
            assert_eq!(comb_filter_magnitude(delay, 1.0, 0.0), 2.0);
        }
        assert!(comb_filter_magnitude(1.0, 1.0, 500.0).abs() < 1e-12);
        assert!((comb_filter_magnitude(1.0, 1.0, 1000.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn notch_examples() {
        assert_eq!(notch_frequencies(1.0, 4000.0), vec![500.0, 1500.0, 2500.0, 3500.0]);
        assert!(notch_frequencies(0.0, 4000.0).is_empty());
        assert_eq!(notch_frequencies(10.0, 200.0), vec![50.0, 150.0]);
    }

    #[test]
    fn ear_signal_identity_paths() {
        let b = gen_white_noise(Seed(1), 50.0, 8000).unwrap();
        let a = gen_white_noise(Seed(2), 50.0, 8000).unwrap();
        assert_eq!(ear_signal(&b, &a, 0.0, MixSpec::new(1.0, 0.0).unwrap()).unwrap(), b);
        assert_eq!(ear_signal(&b, &a, 0.0, MixSpec::new(0.0, 1.0).unwrap()).unwrap(), a);
        assert_eq!(ear_signal(&b, &a, 5.0, MixSpec::new(0.0, 1.0).unwrap()).unwrap(), delay_signal(&a, 5.0).unwrap());
        assert_eq!(ear_signal(&b, &a, -5.0, MixSpec::new(1.0, 0.0).unwrap()).unwrap(), delay_signal(&b, 5.0).unwrap());
    }

    #[test]
    fn ear_signal_notch_cancels_sine() {
        let s = gen_sine(500.0, 200.0, 16000, 1.0).unwrap();
        let out = ear_signal(&s, &s, 1.0, MixSpec::default()).unwrap();
        assert!(mean_square(&out.samples()[16..]).sqrt() <= 1e-6);
    }

    #[test]
    fn ear_signal_rate_mismatch() {
        let a = Signal::silence(10, 8000).unwrap();
        let b = Signal::silence(10, 16000).unwrap();
        assert!(matches!(ear_signal(&a, &b, 0.0, MixSpec::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn negative_gains_rejected() {
        assert!(MixSpec::new(-1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn classification_is_sign_symmetric(x in -1e4f64..1e4) {
            prop_assert_eq!(classify_residual(x), classify_residual(-x));
        }

        #[test]
        fn comb_extremes(delay in 0.05f64..50.0, gain in 0.0f64..3.0, k in 0u32..20) {
            let notch = (2 * k + 1) as f64 * 1000.0 / (2.0 * delay);
            prop_assert!((comb_filter_magnitude(delay, gain, notch) - (1.0 - gain).abs()).abs() < 1e-9);
            let peak = k as f64 * 1000.0 / delay;
            prop_assert!((comb_filter_magnitude(delay, gain, peak) - (1.0 + gain)).abs() < 1e-9);
        }

        #[test]
        fn matches_textbook_form(delay in 0.0f64..50.0, gain in 0.0f64..3.0, f in 0.0f64..20000.0) {
            let phase = 2.0 * std::f64::consts::PI * f * delay / 1000.0;
            let direct = (1.0 + gain * gain + 2.0 * gain * phase.cos()).max(0.0).sqrt();
            prop_assert!((comb_filter_magnitude(delay, gain, f) - direct).abs() < 1e-6);
        }

        #[test]
        fn zero_gain_is_flat(delay in 0.0f64..50.0, f in 0.0f64..20000.0) {
            prop_assert_eq!(comb_filter_magnitude(delay, 0.0, f), 1.0);
        }
    }
}
