//! Venue geometry and loudspeaker-to-seat propagation delay.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND_M_PER_S: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x_m: f64,
    pub y_m: f64,
}

impl Position {
    pub fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }

    fn is_finite(&self) -> bool {
        self.x_m.is_finite() && self.y_m.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seat {
    pub id: String,
    #[serde(flatten)]
    pub position: Position,
}

impl Seat {
    pub fn new(id: impl Into<String>, x_m: f64, y_m: f64) -> Self {
        Self { id: id.into(), position: Position::new(x_m, y_m) }
    }
}

fn default_speed() -> f64 {
    DEFAULT_SPEED_OF_SOUND_M_PER_S
}

/// Loudspeaker and seat layout. Construct with [`Venue::new`] or
/// [`Venue::from_json`], which both enforce the invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Venue {
    pub speed_of_sound_m_per_s: f64,
    pub loudspeakers: Vec<Position>,
    pub seats: Vec<Seat>,
}

// `flatten` and `deny_unknown_fields` do not combine in serde, so seats are
// read through this mirror type.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeatRecord {
    id: String,
    x_m: f64,
    y_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VenueRecord {
    #[serde(default = "default_speed")]
    speed_of_sound_m_per_s: f64,
    loudspeakers: Vec<Position>,
    #[serde(default)]
    seats: Vec<SeatRecord>,
}

impl Venue {
    pub fn new(loudspeakers: Vec<Position>, seats: Vec<Seat>, speed_of_sound_m_per_s: f64) -> Result<Self> {
        let venue = Self { speed_of_sound_m_per_s, loudspeakers, seats };
        venue.check()?;
        Ok(venue)
    }

    fn check(&self) -> Result<()> {
        if self.loudspeakers.is_empty() {
            return Err(Error::Config("venue needs at least one entry in `loudspeakers`".into()));
        }
        if !(self.speed_of_sound_m_per_s.is_finite() && self.speed_of_sound_m_per_s > 0.0) {
            return Err(Error::Config(format!(
                "`speed_of_sound_m_per_s` must be positive, got {}",
                self.speed_of_sound_m_per_s
            )));
        }
        if let Some(p) = self.loudspeakers.iter().find(|p| !p.is_finite()) {
            return Err(Error::Config(format!("non-finite loudspeaker position {p:?}")));
        }
        let mut ids = HashSet::new();
        for seat in &self.seats {
            if !seat.position.is_finite() {
                return Err(Error::Config(format!("seat `{}` has a non-finite position", seat.id)));
            }
            if !ids.insert(seat.id.as_str()) {
                return Err(Error::Config(format!("duplicate seat id `{}`", seat.id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: VenueRecord = serde_json::from_str(text).map_err(|e| Error::Config(format!("venue: {e}")))?;
        let seats = record.seats.into_iter().map(|s| Seat::new(s.id, s.x_m, s.y_m)).collect();
        Venue::new(record.loudspeakers, seats, record.speed_of_sound_m_per_s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Venue::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn seat(&self, id: &str) -> Result<&Seat> {
        self.seats.iter().find(|s| s.id == id).ok_or_else(|| Error::NotFound(format!("seat `{id}`")))
    }

    /// Distance from `position` to the nearest loudspeaker.
    pub fn nearest_loudspeaker_distance_m(&self, position: &Position) -> f64 {
        self.loudspeakers.iter().map(|l| l.distance_to(position)).fold(f64::INFINITY, f64::min)
    }

    /// Largest first-arrival distance over all seats; 0 with no seats.
    pub fn max_seat_distance_m(&self) -> f64 {
        self.seats.iter().map(|s| self.nearest_loudspeaker_distance_m(&s.position)).fold(0.0, f64::max)
    }
}

/// `1000 * distance / speed`, in milliseconds.
pub fn propagation_delay_ms(distance_m: f64, speed_m_per_s: f64) -> Result<f64> {
    if !(distance_m >= 0.0) {
        return Err(Error::invalid(format!("distance must be non-negative, got {distance_m} m")));
    }
    if !(speed_m_per_s > 0.0) {
        return Err(Error::invalid(format!("speed must be positive, got {speed_m_per_s} m/s")));
    }
    Ok(1000.0 * distance_m / speed_m_per_s)
}

/// First-arrival delay: the nearest loudspeaker wins.
pub fn seat_acoustic_delay_ms(venue: &Venue, seat_id: &str) -> Result<f64> {
    let seat = venue.seat(seat_id)?;
    propagation_delay_ms(venue.nearest_loudspeaker_distance_m(&seat.position), venue.speed_of_sound_m_per_s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayRow {
    pub seat_id: String,
    pub distance_m: f64,
    pub acoustic_delay_ms: f64,
}

/// One row per seat, sorted by seat id.
pub fn delay_map(venue: &Venue) -> Vec<DelayRow> {
    let mut rows: Vec<DelayRow> = venue
        .seats
        .iter()
        .map(|seat| {
            let distance_m = venue.nearest_loudspeaker_distance_m(&seat.position);
            DelayRow {
                seat_id: seat.id.clone(),
                distance_m,
                acoustic_delay_ms: 1000.0 * distance_m / venue.speed_of_sound_m_per_s,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.seat_id.cmp(&b.seat_id));
    rows
}
