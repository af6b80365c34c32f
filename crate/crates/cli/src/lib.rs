//! Command-line front end: layered settings, manifests, the feature cache
//! and the subcommands.

pub mod cache;
pub mod commands;
pub mod manifest;
pub mod settings;
