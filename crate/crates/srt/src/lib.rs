//! Stochastic ratio tracking (SRT): adaptive step-length selection for
//! mini-batch SGD.
//!
//! Instead of tuning a learning rate by hand, the controller tracks two
//! dimensionless per-iteration ratios — a progress ratio that measures how
//! linear the stochastic objective still looks at the current trial step, and
//! a variance ratio that measures gradient noise — and adjusts the step
//! geometrically whenever a ring buffer of recent progress ratios drifts out
//! of band. The applied step is additionally discounted by the averaged
//! variance ratio, matching the classical `1/(L(M_V+1))` prescription.
//!
//! The crate is organized as a library plus one thin `srt` binary:
//!
//! * [`numerics`] — dense vectors, seeded RNG, running statistics
//! * [`datasets`] — LIBSVM/IDX loaders (gzip-aware), synthetic problems,
//!   mini-batch index generation
//! * [`models`] — logistic regression and MLP with exact per-sample
//!   gradient-norm means, plus the [`models::Objective`] trait
//! * [`controller`] — the ratio-tracking step-length controller
//! * [`trainer`] — training loops (adaptive, fixed-step, theoretical-step)
//!   streaming CSV telemetry
//! * [`theory`] — convergence-envelope and step-settling verification
//! * [`config`]/[`cli`] — the TOML experiment format and the `run`,
//!   `ratios`, `verify`, `fetch` subcommands
//!
//! Every run is reproducible: one `u64` seed determines initialization and
//! batch order through a counter-based generator, and all reductions use a
//! fixed summation order, so repeated runs emit byte-identical telemetry.
//! See the `examples/` directory for one runnable walkthrough per major
//! capability.

pub mod cli;
pub mod config;
pub mod controller;
pub mod datasets;
pub mod models;
pub mod numerics;
pub mod theory;
pub mod trainer;
