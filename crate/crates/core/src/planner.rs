//! Segmenting an audience by acoustic delay into zones, one broadcast per zone.
//!
//! A plan covers the delay span `[0, span)` of a venue with `N` equal-width
//! zones. Each zone's broadcast carries the zone midpoint as its presentation
//! delay, so the worst residual in a zone is half its width. `N` is the
//! smallest count whose zone width does not exceed twice the tolerance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustics::{propagation_delay_ms, Venue};
use crate::error::{Error, Result};
use crate::perception::{DistortionClass, DistortionReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub index: usize,
    pub delay_lo_ms: f64,
    pub delay_hi_ms: f64,
    pub presentation_delay_ms: f64,
    pub distance_lo_m: f64,
    pub distance_hi_m: f64,
}

impl Zone {
    pub fn width_ms(&self) -> f64 {
        self.delay_hi_ms - self.delay_lo_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayPlan {
    pub tolerance_ms: f64,
    pub speed_of_sound_m_per_s: f64,
    pub zones: Vec<Zone>,
}

impl DelayPlan {
    /// Upper edge of the last zone.
    pub fn span_ms(&self) -> f64 {
        self.zones.last().map_or(0.0, |z| z.delay_hi_ms)
    }

    /// Largest residual any covered delay can see: half the widest zone.
    pub fn max_residual_bound_ms(&self) -> f64 {
        self.zones.iter().map(|z| z.width_ms() / 2.0).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("plan serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: DelayPlan = serde_json::from_str(text).map_err(|e| Error::Config(format!("plan: {e}")))?;
        plan.check()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Structural checks for plans read from disk: at least one zone,
    /// contiguous from 0, indices in order.
    fn check(&self) -> Result<()> {
        if self.zones.is_empty() {
            return Err(Error::Config("plan has no zones".into()));
        }
        if !(self.tolerance_ms > 0.0) || !(self.speed_of_sound_m_per_s > 0.0) {
            return Err(Error::Config("plan tolerance and speed of sound must be positive".into()));
        }
        let mut expected_lo = 0.0;
        for (i, zone) in self.zones.iter().enumerate() {
            if zone.index != i {
                return Err(Error::Config(format!("zone at position {i} has index {}", zone.index)));
            }
            if zone.delay_lo_ms != expected_lo || zone.delay_hi_ms < zone.delay_lo_ms {
                return Err(Error::Config(format!("zone {i} does not continue the previous zone")));
            }
            expected_lo = zone.delay_hi_ms;
        }
        Ok(())
    }
}

/// Plans zones for listeners up to `max_distance_m` from the loudspeakers.
pub fn plan_zones(max_distance_m: f64, tolerance_ms: f64, speed_m_per_s: f64) -> Result<DelayPlan> {
    if !(tolerance_ms > 0.0) || !tolerance_ms.is_finite() {
        return Err(Error::invalid(format!("tolerance must be positive, got {tolerance_ms} ms")));
    }
    let span = propagation_delay_ms(max_distance_m, speed_m_per_s)?;
    if !span.is_finite() {
        return Err(Error::invalid("delay span is not finite"));
    }
    let max_width = 2.0 * tolerance_ms;
    let mut count = ((span / max_width).ceil() as usize).max(1);
    // The ceil can land one short when span / max_width rounds down across an integer.
    while span / count as f64 > max_width {
        count += 1;
    }

    let edge = |k: usize| if k == count { span } else { span * k as f64 / count as f64 };
    let to_m = |ms: f64| ms * speed_m_per_s / 1000.0;
    let zones = (0..count)
        .map(|k| {
            let (lo, hi) = (edge(k), edge(k + 1));
            Zone {
                index: k,
                delay_lo_ms: lo,
                delay_hi_ms: hi,
                presentation_delay_ms: (lo + hi) / 2.0,
                distance_lo_m: to_m(lo),
                distance_hi_m: to_m(hi),
            }
        })
        .collect();
    Ok(DelayPlan { tolerance_ms, speed_of_sound_m_per_s: speed_m_per_s, zones })
}

/// Zone whose `[lo, hi)` interval contains the delay; the last zone also
/// takes its upper edge.
pub fn zone_for_delay(plan: &DelayPlan, acoustic_delay_ms: f64) -> Result<&Zone> {
    let span = plan.span_ms();
    if !(acoustic_delay_ms >= 0.0 && acoustic_delay_ms <= span) {
        return Err(Error::OutOfRange(format!(
            "acoustic delay {acoustic_delay_ms} ms outside plan span [0, {span}] ms"
        )));
    }
    let idx = plan.zones.partition_point(|z| z.delay_hi_ms <= acoustic_delay_ms);
    Ok(&plan.zones[idx.min(plan.zones.len() - 1)])
}

/// Signed residual; positive when the acoustic signal arrives after the broadcast.
pub fn residual_delay_ms(acoustic_delay_ms: f64, presentation_delay_ms: f64) -> f64 {
    acoustic_delay_ms - presentation_delay_ms
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeatVerification {
    pub seat_id: String,
    pub distance_m: f64,
    pub acoustic_delay_ms: f64,
    /// `None` when the seat lies beyond the plan span.
    pub zone: Option<usize>,
    pub presentation_delay_ms: Option<f64>,
    pub report: Option<DistortionReport>,
}

impl SeatVerification {
    pub fn is_covered(&self) -> bool {
        self.zone.is_some()
    }

    pub fn class(&self) -> Option<DistortionClass> {
        self.report.as_ref().map(|r| r.class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanVerification {
    /// Over covered seats only; 0 when none are covered.
    pub max_abs_residual_ms: f64,
    pub uncovered: usize,
    pub seats: Vec<SeatVerification>,
}

/// Highest notch frequency listed in verification reports.
pub const REPORT_NOTCH_MAX_HZ: f64 = 8000.0;

/// Assigns every seat to a zone and reports its residual. Seats sorted by id.
pub fn verify_plan(venue: &Venue, plan: &DelayPlan) -> Result<PlanVerification> {
    if venue.speed_of_sound_m_per_s != plan.speed_of_sound_m_per_s {
        return Err(Error::invalid(format!(
            "plan speed of sound {} m/s differs from venue {} m/s",
            plan.speed_of_sound_m_per_s, venue.speed_of_sound_m_per_s
        )));
    }
    let mut max_abs_residual_ms: f64 = 0.0;
    let mut uncovered = 0;
    let seats = crate::acoustics::delay_map(venue)
        .into_iter()
        .map(|row| match zone_for_delay(plan, row.acoustic_delay_ms) {
            Ok(zone) => {
                let residual = residual_delay_ms(row.acoustic_delay_ms, zone.presentation_delay_ms);
                max_abs_residual_ms = max_abs_residual_ms.max(residual.abs());
                SeatVerification {
                    zone: Some(zone.index),
                    presentation_delay_ms: Some(zone.presentation_delay_ms),
                    report: Some(DistortionReport::new(&row.seat_id, residual, REPORT_NOTCH_MAX_HZ)),
                    seat_id: row.seat_id,
                    distance_m: row.distance_m,
                    acoustic_delay_ms: row.acoustic_delay_ms,
                }
            }
            Err(_) => {
                uncovered += 1;
                SeatVerification {
                    seat_id: row.seat_id,
                    distance_m: row.distance_m,
                    acoustic_delay_ms: row.acoustic_delay_ms,
                    zone: None,
                    presentation_delay_ms: None,
                    report: None,
                }
            }
        })
        .collect();
    Ok(PlanVerification { max_abs_residual_ms, uncovered, seats })
}
