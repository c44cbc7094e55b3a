//! Command-line pipeline and HTTP service around `ecm-core`.

pub mod api;
pub mod commands;
pub mod config;
pub mod service;
