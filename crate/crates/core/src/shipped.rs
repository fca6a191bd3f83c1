//! Example models bundled with the crate.

use crate::error::Result;
use crate::model::ValidatedModel;
use crate::schema::parse_model;

/// `d = 1`, `c(x) = 2 + sin 2πx`, no drift, no jumps.
pub const HARMONIC_1D: &str = include_str!("../models/harmonic_1d.json");
/// `d = 1`, `c = 1`, jumps of intensity `1 + ½ sin 2πx` with sizes uniform on `[−2.5, 2.5]`.
pub const JUMP_PERIODIC_1D: &str = include_str!("../models/jump_periodic_1d.json");
/// `d = 2`, `c = diag(2 + sin 2πx₁, 1.5 + ½ cos 2πx₂)`, no drift, no jumps.
pub const DIAGONAL_2D: &str = include_str!("../models/diagonal_2d.json");

pub const ALL: [(&str, &str); 3] =
    [("harmonic_1d", HARMONIC_1D), ("jump_periodic_1d", JUMP_PERIODIC_1D), ("diagonal_2d", DIAGONAL_2D)];

pub fn load(json: &str) -> Result<ValidatedModel> {
    ValidatedModel::new(parse_model(json)?)
}

pub fn harmonic_1d() -> ValidatedModel {
    load(HARMONIC_1D).expect("bundled model is valid")
}

pub fn jump_periodic_1d() -> ValidatedModel {
    load(JUMP_PERIODIC_1D).expect("bundled model is valid")
}

pub fn diagonal_2d() -> ValidatedModel {
    load(DIAGONAL_2D).expect("bundled model is valid")
}
