//! Alignment-delay tooling for assistive listening systems.
//!
//! The crate computes how late a venue's loudspeaker sound reaches each seat
//! compared with a wireless broadcast of the same program, plans delay zones
//! served by several broadcasts, models broadcast control-plane rules, and
//! picks the broadcast that best matches a microphone signal.
//!
//! Interchangeable strategies (control-plane rule sets, delay estimators) are
//! registered by name in a [`registry::Registry`] and selected at runtime.

// `!(x > 0.0)` is used on purpose so NaN fails argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod autoconnect;
pub mod broadcast;
pub mod cli;
pub mod error;
pub mod format;
pub mod perception;
pub mod planner;
pub mod registry;
pub mod signals;
pub mod wav;

pub use error::{Error, Result};
