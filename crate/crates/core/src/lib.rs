//! Power-flow-informed neural surrogates of AC optimal power flow, with
//! exact MILP worst-case verification and worst-case-driven dataset
//! enrichment during training.
//!
//! The crate is organized along the pipeline:
//!
//! * [`grid`] — MATPOWER-style case parsing and the cartesian quadratic-form
//!   model of the AC-OPF constraints.
//! * [`opf`] — labeled-data production: a cartesian Newton power flow and a
//!   penalty-method OPF solver.
//! * [`dataset`] — Latin-hypercube sampling, labeling, splits, CSV
//!   persistence.
//! * [`nn`] — ReLU MLPs with manual backpropagation, Adam, and the
//!   label/physics loss terms.
//! * [`verifier`] — interval bound propagation, big-M MILP encoding, a
//!   bounded-variable simplex and branch-and-bound solver, worst-case
//!   violation search and hypercube fitting.
//! * [`enrich`] — the enrichment training loop and the fixed-dataset
//!   baseline.
//! * [`report`] — run logs and method comparison reports.

pub mod config;
pub mod dataset;
pub mod enrich;
pub mod grid;
pub mod nn;
pub mod opf;
pub mod report;
pub mod verifier;
