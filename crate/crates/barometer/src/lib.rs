//! Service side of the growth barometer: configuration, transports, the
//! on-disk snapshot store, survey intake and the HTTP API.

pub mod api;
pub mod config;
pub mod platform;
pub mod store;
pub mod survey;
pub mod transport;
pub mod ui;

pub use config::Config;
pub use platform::{Platform, SchedulerHandle};
