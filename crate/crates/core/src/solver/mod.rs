//! The four decentralized methods as explicit step functions, their step
//! size derivation, and the iteration driver.

mod params;
mod run;
mod steps;

pub use params::{check_params, derive_params, Algorithm, LooplessParams, PrimalDualParams, SolverParams};
pub use run::{lyapunov_value, run, RunOptions, RunOutput};
pub use steps::{apapc_step, loopless_step, opapc_step, papc_step, step, SolverState};
