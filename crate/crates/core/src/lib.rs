//! Simulation of the N-model queue with a waiting-time threshold on the
//! diagonal, its coupled upper-bound system, and the X-model.
//!
//! * [`events`]: coupled Poisson streams and the event list.
//! * [`dynamics`]: the OR, UB and FCFS state machines.
//! * [`coupling`]: coupled runs and pathwise dominance checks.
//! * [`stability`]: drift classification, region sweeps and distributional checks.
//! * [`xmodel`]: the X-model, scripted replays and violation search.
//! * [`cli`]: argument parsing and artifact-producing commands.

pub mod artifacts;
pub mod cli;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod events;
pub mod stability;
pub mod xmodel;

pub use error::{Error, Result};
