//! Core of the regional growth barometer.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): data
//! cubes and JSON-stat parsing, snapshot versioning and scheduling logic,
//! the variable catalog, recipes and growth indicators, survey disclosure
//! control, chart specifications and their CSV/SVG renderings. IO lives in
//! the `barometer` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod catalog;
pub mod chart;
pub mod cube;
pub mod derive;
pub mod export;
pub mod ingest;
pub mod jsonstat;
pub mod privacy;

pub use catalog::{Catalog, CatalogDocument, GroupId, VariableEntry};
pub use chart::{ChartKind, ChartSpec};
pub use cube::{ArithOp, CellAddress, DataCube, Dimension};
pub use derive::{evaluate, Recipe, Step};
pub use jsonstat::parse_jsonstat;
