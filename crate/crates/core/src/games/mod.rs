//! Shipped benchmark games and named presets.

pub mod aggregative;
pub mod oscillator;

use serde::{Deserialize, Serialize};

pub use aggregative::{build_aggregative, AggregativeGame, AggregativeGameSpec};
pub use oscillator::{build_oscillator, OscillatorGame, OscillatorGameSpec};

use crate::error::{Error, Result};
use crate::game::GameModel;
use crate::linalg::Vector;

pub const PRESET_AGGREGATIVE: &str = "aggregative-5";
pub const PRESET_OSCILLATOR: &str = "oscillator-2";
pub const PRESETS: [&str; 2] = [PRESET_AGGREGATIVE, PRESET_OSCILLATOR];

/// Default social optimum of the `aggregative-5` preset (distance 1 to the box).
pub const AGGREGATIVE_X_DAGGER: [f64; 5] = [0.5, -0.5, 1.0, -1.0, 0.0];

/// Default social optimum of the `oscillator-2` preset. With it the incentive
/// `(−3, −3)` sits on the sublevel set `c₀ ≈ 0.62 c*`.
pub const OSCILLATOR_X_DAGGER: [f64; 2] = [0.8, 0.7];

/// Game description as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GameSpec {
    Preset { name: String },
    Aggregative(AggregativeGameSpec),
    Oscillator(OscillatorGameSpec),
}

impl GameSpec {
    pub fn build(&self) -> Result<GameModel> {
        match self {
            GameSpec::Preset { name } => Ok(preset(name)?.game),
            GameSpec::Aggregative(s) => build_aggregative(s),
            GameSpec::Oscillator(s) => build_oscillator(s),
        }
    }

    /// Default social optimum for this game family.
    pub fn default_x_dagger(&self) -> Result<Vector> {
        match self {
            GameSpec::Preset { name } => Ok(preset(name)?.x_dagger),
            GameSpec::Aggregative(s) if s.n() == AGGREGATIVE_X_DAGGER.len() => {
                Ok(Vector::from_column_slice(&AGGREGATIVE_X_DAGGER))
            }
            GameSpec::Aggregative(s) => Ok(Vector::zeros(s.n())),
            GameSpec::Oscillator(_) => Ok(Vector::from_column_slice(&OSCILLATOR_X_DAGGER)),
        }
    }
}

/// A named game together with its default social optimum.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub game: GameModel,
    pub x_dagger: Vector,
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        PRESET_AGGREGATIVE => Ok(Preset {
            name: PRESET_AGGREGATIVE,
            game: build_aggregative(&AggregativeGameSpec::default())?,
            x_dagger: Vector::from_column_slice(&AGGREGATIVE_X_DAGGER),
        }),
        PRESET_OSCILLATOR => Ok(Preset {
            name: PRESET_OSCILLATOR,
            game: build_oscillator(&OscillatorGameSpec::default())?,
            x_dagger: Vector::from_column_slice(&OSCILLATOR_X_DAGGER),
        }),
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (available: {})",
            PRESETS.join(", ")
        ))),
    }
}
