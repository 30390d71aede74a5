//! HTTP API, persistence and command-line front end for the qrisk engine.

pub mod api;
pub mod cli;
pub mod engine;
pub mod error;
pub mod jobs;
pub mod store;
