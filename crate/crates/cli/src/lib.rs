//! Pipeline orchestration for trajekt: configuration, seeds, stage runner,
//! artifact manifest and report emission.

pub mod app;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod seed;
pub mod stages;
