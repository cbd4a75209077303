//! Experiment harness behind the command-line tool.

pub mod calibrate;
pub mod commands;
pub mod compare;
pub mod config;
pub mod generate;
pub mod ingest;
pub mod report;
pub mod verify;
