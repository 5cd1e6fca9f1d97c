//! Repetitive Delone sets in `ℝ^d` whose point density follows a prescribed
//! function `ρ`, built from a hierarchy of lattice colourings.
//!
//! The pipeline runs schedule → palettes → colouring `Ψ` → point set `X`,
//! with exact verification of the structural claims at every stage.

pub mod arith;
pub mod delone;
pub mod density;
pub mod error;
pub mod export;
pub mod geometry;
pub mod palette;
pub mod par;
pub mod psi;
pub mod schedule;
pub mod verify;

pub use arith::{Rational, Surd};
pub use density::{DensitySpec, DensityFn};
pub use error::{Error, Result};
pub use geometry::{CubicSet, DyadicBox, LatticePoint};
pub use palette::{ColourRef, Engine, EngineOptions};
pub use par::Exec;
pub use psi::PsiField;
pub use schedule::{LevelSchedule, PaletteMode};
