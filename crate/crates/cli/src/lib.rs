//! Library side of the `aeros` command: method parsing, dataset loading,
//! single solves and Monte-Carlo sweeps.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod method;
pub mod solve;
