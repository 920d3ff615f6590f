//! Type-I risk safe decisions under post-hoc loss selection: e-variables,
//! decision rules compatible with them, e-confidence intervals, Monte Carlo
//! risk audits and exact admissibility checks on finite problems.

pub mod adversary;
pub mod confidence;
pub mod error;
pub mod evariables;
pub mod gnp;
pub mod montecarlo;
pub mod normal;
pub mod problem_file;
pub mod rng;
pub mod rules;
pub mod verify;
