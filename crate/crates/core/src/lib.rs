//! Power-quality stream engine.

pub mod analyzer;
pub mod events;
pub mod monitor;
pub mod query;
pub mod siggen;
pub mod store;
pub mod time;
