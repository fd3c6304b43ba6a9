//! Distribution-path reconstruction, higher-order upstream-preference models
//! and supply-shock stress tests for multi-tier distribution systems.
//!
//! The pipeline runs `ingest` → `pathrec` → `tensors` → (`estimate`,
//! `spectral`, `simulate`), with `cli` orchestrating it from config files.

pub mod cli;
pub mod estimate;
pub mod ingest;
pub mod pathrec;
pub mod simulate;
pub mod spectral;
pub mod tensors;
