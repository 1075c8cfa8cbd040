//! Command line and HTTP front ends for the recognizer.

pub mod commands;
pub mod service;
