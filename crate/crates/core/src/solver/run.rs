use crate::diagnostics::{lyapunov_apapc, lyapunov_loopless, ReferencePoint, StopReason, Trace, TraceRecord};
use crate::error::{Error, Result};
use crate::gossip::{chebyshev_polynomial, CommCounter};
use crate::oracle::Oracle;
use crate::spectral::Spectrum;
use crate::state::StackedState;
use crate::topology::SymmetricMatrix;

use super::params::SolverParams;
use super::steps::{step, SolverState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Stop once `‖x^k − x*‖² ≤ eps`.
    pub eps: f64,
    pub record_every: usize,
    /// Evaluate the Lyapunov function at each record (not defined for PAPC).
    pub lyapunov: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_iters: 10_000, eps: 1e-10, record_every: 1, lyapunov: false }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    /// Last finite iterate.
    pub state: SolverState,
}

/// Lyapunov value of `st` for the algorithm behind `params`, if it has one.
///
/// `spectrum` is the spectrum of `W`; OPAPC is measured on the spectrum of
/// `P(W)`, which is derived here.
pub fn lyapunov_value(
    params: &SolverParams,
    st: &SolverState,
    reference: &ReferencePoint,
    spectrum: &Spectrum,
    oracle: &Oracle,
) -> Result<Option<f64>> {
    match params {
        SolverParams::Papc(_) => Ok(None),
        SolverParams::Apapc(p) => lyapunov_apapc(st, reference, p, spectrum, oracle).map(Some),
        SolverParams::Opapc { base, chebyshev } => {
            let eff = spectrum.mapped(|l| chebyshev_polynomial(chebyshev, l));
            lyapunov_apapc(st, reference, base, &eff, oracle).map(Some)
        }
        SolverParams::Loopless(p) => lyapunov_loopless(st, reference, p, spectrum, oracle).map(Some),
    }
}

/// Iterates one algorithm from `x0` (duals start at zero), recording
/// counters and the squared distance to `reference.x_star`.
///
/// Records are taken at iteration 0, every `record_every` iterations, and at
/// the final iteration. A non-finite iterate ends the run with
/// [`StopReason::Diverged`], keeping the last finite state.
pub fn run(
    params: &SolverParams,
    oracle: &mut Oracle,
    w: &SymmetricMatrix,
    spectrum: &Spectrum,
    x0: StackedState,
    reference: &ReferencePoint,
    opts: &RunOptions,
) -> Result<RunOutput> {
    x0.check_shape(oracle.n(), oracle.d())?;
    if w.n() != oracle.n() || spectrum.n() != w.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} nodes", oracle.n()),
            got: format!("gossip {} / spectrum {}", w.n(), spectrum.n()),
        });
    }
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParams(format!("eps must be positive, got {}", opts.eps)));
    }
    let every = opts.record_every.max(1);
    let lyap_spectrum = match params {
        SolverParams::Opapc { chebyshev, .. } => spectrum.mapped(|l| chebyshev_polynomial(chebyshev, l)),
        _ => spectrum.clone(),
    };
    let lyap = |st: &SolverState, oracle: &Oracle| -> Result<Option<f64>> {
        if !opts.lyapunov {
            return Ok(None);
        }
        match params {
            SolverParams::Papc(_) => Ok(None),
            SolverParams::Apapc(p) | SolverParams::Opapc { base: p, .. } => {
                lyapunov_apapc(st, reference, p, &lyap_spectrum, oracle).map(Some)
            }
            SolverParams::Loopless(p) => lyapunov_loopless(st, reference, p, &lyap_spectrum, oracle).map(Some),
        }
    };

    let mut comm = CommCounter::new();
    let mut st = SolverState::initial(x0);
    let mut trace = Trace { algorithm: params.algorithm().name().to_string(), ..Trace::default() };
    let mut sq_dist = st.x.dist_sq(&reference.x_star);
    let record = |st: &SolverState, sq: f64, oracle: &Oracle, comm: &CommCounter| -> Result<TraceRecord> {
        Ok(TraceRecord {
            iter: st.k as u64,
            grad_evals: oracle.grad_evals(),
            comm_rounds: comm.rounds(),
            sq_dist: sq,
            lyapunov: lyap(st, oracle)?,
        })
    };
    trace.records.push(record(&st, sq_dist, oracle, &comm)?);

    let mut stop = StopReason::MaxIters;
    if sq_dist <= opts.eps {
        stop = StopReason::Converged;
    }
    while stop == StopReason::MaxIters && st.k < opts.max_iters {
        let next = step(&st, params, oracle, w, &mut comm)?;
        if !next.is_finite() {
            stop = StopReason::Diverged { iter: next.k };
            if trace.records.last().is_some_and(|r| r.iter != st.k as u64) {
                trace.records.push(record(&st, sq_dist, oracle, &comm)?);
            }
            break;
        }
        st = next;
        sq_dist = st.x.dist_sq(&reference.x_star);
        let done = sq_dist <= opts.eps;
        if done || st.k.is_multiple_of(every) || st.k == opts.max_iters {
            trace.records.push(record(&st, sq_dist, oracle, &comm)?);
        }
        if done {
            stop = StopReason::Converged;
        }
    }
    trace.stop = Some(stop);
    Ok(RunOutput { trace, state: st })
}
