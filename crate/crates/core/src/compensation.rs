//! Direction-dependent constant-offset backlash compensation.
//!
//! The commanded bending angle leads the desired one by `+c` while the desired
//! angle rises and by `-c` while it falls. A reversal is only recognized once
//! the desired angle has moved more than the deadband away from the last
//! extreme, so a signal at rest keeps its previous offset.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompensatorSettings {
    pub offset_deg: f64,
    pub direction_deadband_deg: f64,
    pub enabled: bool,
}

impl Default for CompensatorSettings {
    fn default() -> Self {
        Self {
            offset_deg: 10.0,
            direction_deadband_deg: 0.1,
            enabled: true,
        }
    }
}

impl CompensatorSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.offset_deg >= 0.0 && self.offset_deg.is_finite()) {
            return Err(format!(
                "offset_deg must be nonnegative, got {}",
                self.offset_deg
            ));
        }
        if !(self.direction_deadband_deg >= 0.0 && self.direction_deadband_deg.is_finite()) {
            return Err(format!(
                "direction_deadband_deg must be nonnegative, got {}",
                self.direction_deadband_deg
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Unset,
    Increasing,
    Decreasing,
}

/// Per-axis compensator memory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatorState {
    pub last_direction: Direction,
    /// Extreme desired angle reached in the held direction (or the first
    /// sample while the direction is unset).
    pub last_input_deg: Option<f64>,
}

impl CompensatorState {
    pub fn offset(&self, settings: &CompensatorSettings) -> f64 {
        match self.last_direction {
            Direction::Unset => 0.0,
            Direction::Increasing => settings.offset_deg,
            Direction::Decreasing => -settings.offset_deg,
        }
    }
}

/// Advance the compensator by one desired sample; returns the new state and the
/// commanded angle.
pub fn compensate(
    state: &CompensatorState,
    settings: &CompensatorSettings,
    desired_deg: f64,
) -> (CompensatorState, f64) {
    if !settings.enabled {
        return (*state, desired_deg);
    }
    let eps = settings.direction_deadband_deg;
    let mut next = *state;
    match (state.last_direction, state.last_input_deg) {
        (_, None) => next.last_input_deg = Some(desired_deg),
        (Direction::Unset, Some(anchor)) => {
            if desired_deg > anchor + eps {
                next = CompensatorState {
                    last_direction: Direction::Increasing,
                    last_input_deg: Some(desired_deg),
                };
            } else if desired_deg < anchor - eps {
                next = CompensatorState {
                    last_direction: Direction::Decreasing,
                    last_input_deg: Some(desired_deg),
                };
            }
        }
        (Direction::Increasing, Some(peak)) => {
            if desired_deg >= peak {
                next.last_input_deg = Some(desired_deg);
            } else if desired_deg < peak - eps {
                next = CompensatorState {
                    last_direction: Direction::Decreasing,
                    last_input_deg: Some(desired_deg),
                };
            }
        }
        (Direction::Decreasing, Some(trough)) => {
            if desired_deg <= trough {
                next.last_input_deg = Some(desired_deg);
            } else if desired_deg > trough + eps {
                next = CompensatorState {
                    last_direction: Direction::Increasing,
                    last_input_deg: Some(desired_deg),
                };
            }
        }
    }
    let commanded = desired_deg + next.offset(settings);
    (next, commanded)
}
