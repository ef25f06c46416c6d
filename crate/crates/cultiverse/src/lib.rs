//! Runtime side of cultiverse: dataset files, the model gateway, the
//! event store, the HTTP service and the admin CLI.

pub mod api;
pub mod cli;
pub mod files;
pub mod gateway;
pub mod store;

pub use cultiverse_core as core;
