//! Command-line pipeline and HTTP API for hierarchical emotion control.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod session;
pub mod workspace;

pub use config::JobConfig;
pub use error::ServiceError;
pub use workspace::Workspace;
