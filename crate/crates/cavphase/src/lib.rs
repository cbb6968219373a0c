//! File formats, presets, experiment pipeline and acceptance checks around
//! `cavphase-core`.

pub mod config;
pub mod experiment;
pub mod expr;
pub mod io;
pub mod pipeline;
pub mod presets;
pub mod verify;
