//! One iteration of each algorithm. A step reads an immutable
//! [`SolverState`] and returns the next one; only the oracle's gradient
//! counter and the communication counter are mutated.

use crate::error::{Error, Result};
use crate::gossip::{accelerated_gossip, gossip_multiply, ChebyshevParams, CommCounter};
use crate::oracle::Oracle;
use crate::state::StackedState;
use crate::topology::SymmetricMatrix;

use super::params::{LooplessParams, PrimalDualParams, SolverParams};

/// Iterate of any of the four methods.
///
/// `y_f`, `z` and `z_f` are only advanced by the loopless method; the
/// primal-dual methods carry them unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub x: StackedState,
    pub x_f: StackedState,
    pub y: StackedState,
    pub y_f: StackedState,
    pub z: StackedState,
    pub z_f: StackedState,
    /// Residual of the coupled `(x, y)` solve in the last loopless step.
    pub implicit_residual: Option<f64>,
}

impl SolverState {
    /// `x⁰ = x0`, all duals zero, companions equal to their base variables.
    pub fn initial(x0: StackedState) -> Self {
        let zeros = StackedState::zeros(x0.n(), x0.d());
        Self::with_duals(x0, zeros.clone(), zeros)
    }

    pub fn with_duals(x0: StackedState, y0: StackedState, z0: StackedState) -> Self {
        Self {
            k: 0,
            x_f: x0.clone(),
            x: x0,
            y_f: y0.clone(),
            y: y0,
            z_f: z0.clone(),
            z: z0,
            implicit_residual: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.x_f, &self.y, &self.y_f, &self.z, &self.z_f].iter().all(|s| s.is_finite())
    }

    /// Euclidean norm of all variables stacked together.
    pub fn norm(&self) -> f64 {
        [&self.x, &self.x_f, &self.y, &self.y_f, &self.z, &self.z_f]
            .iter()
            .map(|s| s.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entrywise change of any variable between two states.
    pub fn max_change(&self, other: &Self) -> f64 {
        [
            self.x.max_abs_diff(&other.x),
            self.x_f.max_abs_diff(&other.x_f),
            self.y.max_abs_diff(&other.y),
            self.y_f.max_abs_diff(&other.y_f),
            self.z.max_abs_diff(&other.z),
            self.z_f.max_abs_diff(&other.z_f),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// `y⁺ = y + θW(x − η∇F(x) − ηy)`, `x⁺ = x − η∇F(x) − ηy⁺`.
pub fn papc_step(
    st: &SolverState,
    p: &PrimalDualParams,
    oracle: &mut Oracle,
    w: &SymmetricMatrix,
    comm: &mut CommCounter,
) -> Result<SolverState> {
    let g = oracle.gradient(&st.x)?;
    // x − ηg
    let forward = st.x.lincomb(1.0, &g, -p.eta);
    let mixed = gossip_multiply(w, &forward.lincomb(1.0, &st.y, -p.eta), comm)?;
    let y = st.y.lincomb(1.0, &mixed, p.theta);
    let x = forward.lincomb(1.0, &y, -p.eta);
    Ok(SolverState { k: st.k + 1, x_f: x.clone(), x, y, ..st.clone() })
}

fn accelerated_step(
    st: &SolverState,
    p: &PrimalDualParams,
    oracle: &mut Oracle,
    mut mix: impl FnMut(&StackedState) -> Result<StackedState>,
) -> Result<SolverState> {
    let x_g = st.x.lincomb(p.tau, &st.x_f, 1.0 - p.tau);
    let g = oracle.gradient(&x_g)?;
    let shrink = 1.0 / (1.0 + p.eta * p.alpha);
    // ∇F(x_g) − αx_g, shared by both half steps
    let drift = g.lincomb(1.0, &x_g, -p.alpha);
    let x_half = st.x.lincomb(1.0, &(&drift + &st.y), -p.eta).scaled(shrink);
    let y = st.y.lincomb(1.0, &mix(&x_half)?, p.theta);
    let x = st.x.lincomb(1.0, &(&drift + &y), -p.eta).scaled(shrink);
    let x_f = x_g.lincomb(1.0, &(&x - &st.x), 2.0 * p.tau / (2.0 - p.tau));
    Ok(SolverState { k: st.k + 1, x, x_f, y, ..st.clone() })
}

/// Accelerated PAPC: one gradient at `x_g` and one gossip round.
pub fn apapc_step(
    st: &SolverState,
    p: &PrimalDualParams,
    oracle: &mut Oracle,
    w: &SymmetricMatrix,
    comm: &mut CommCounter,
) -> Result<SolverState> {
    accelerated_step(st, p, oracle, |v| gossip_multiply(w, v, comm))
}

/// Accelerated PAPC on the Chebyshev polynomial `P(W)`: `T` rounds per step.
pub fn opapc_step(
    st: &SolverState,
    p: &PrimalDualParams,
    cheb: &ChebyshevParams,
    oracle: &mut Oracle,
    w: &SymmetricMatrix,
    comm: &mut CommCounter,
) -> Result<SolverState> {
    accelerated_step(st, p, oracle, |v| accelerated_gossip(w, cheb, v, comm))
}

/// Loopless method: one gradient of `r` and one gossip round.
///
/// The `x` and `y` updates each reference the other's new value; the pair is
/// solved exactly by eliminating `x⁺`.
pub fn loopless_step(
    st: &SolverState,
    p: &LooplessParams,
    oracle: &mut Oracle,
    w: &SymmetricMatrix,
    comm: &mut CommCounter,
) -> Result<SolverState> {
    let den = p.joint_denominator();
    if !(den > 0.0) {
        return Err(Error::InvalidParams(format!(
            "joint-solve denominator (1+ηα)(1+θβ−θν)+ηθ = {den} is not positive"
        )));
    }
    let mu = oracle.mu();
    let x_g = st.x.lincomb(p.tau, &st.x_f, 1.0 - p.tau);
    let y_g = st.y.lincomb(p.sigma, &st.y_f, 1.0 - p.sigma);
    let z_g = st.z.lincomb(p.sigma, &st.z_f, 1.0 - p.sigma);

    let gr = oracle.shifted_gradient_r(&x_g)?;
    let hz = (&y_g + &z_g).scaled(2.0 / mu);
    let hy = hz.lincomb(1.0, &y_g, p.nu);

    let a = 1.0 + p.eta * p.alpha;
    let b = 1.0 + p.theta * p.beta - p.theta * p.nu;
    // a·x⁺ = u + η·y⁺ and b·y⁺ = v − θ·x⁺
    let u = st.x.lincomb(1.0, &x_g, p.eta * p.alpha).lincomb(1.0, &gr, -p.eta);
    let v = st.y.lincomb(1.0, &y_g, p.theta * p.beta).lincomb(1.0, &hy, -p.theta);
    let y = v.lincomb(a, &u, -p.theta).scaled(1.0 / (a * b + p.theta * p.eta));
    let x = u.lincomb(1.0, &y, p.eta).scaled(1.0 / a);

    let whz = gossip_multiply(w, &hz, comm)?;
    let z = st
        .z
        .lincomb(1.0, &z_g, p.lambda * p.gamma)
        .lincomb(1.0, &whz, -p.lambda)
        .scaled(1.0 / (1.0 + p.lambda * p.gamma));

    // residual of the two implicit lines exactly as written
    let rx = x.lincomb(-1.0, &st.x, 1.0)
        .lincomb(1.0, &(&x_g - &x), p.eta * p.alpha)
        .lincomb(1.0, &gr, -p.eta)
        .lincomb(1.0, &y, p.eta);
    let ry = y.lincomb(-1.0, &st.y, 1.0)
        .lincomb(1.0, &(&y_g - &y), p.theta * p.beta)
        .lincomb(1.0, &hy, -p.theta)
        .lincomb(1.0, &y, p.theta * p.nu)
        .lincomb(1.0, &x, -p.theta);
    let residual = (rx.norm_sq() + ry.norm_sq()).sqrt();

    let x_f = x_g.lincomb(1.0, &(&x - &st.x), 2.0 * p.tau / (2.0 - p.tau));
    let y_f = y_g.lincomb(1.0, &(&y - &st.y), p.sigma);
    let z_f = z_g.lincomb(1.0, &(&z - &st.z), p.sigma);
    Ok(SolverState { k: st.k + 1, x, x_f, y, y_f, z, z_f, implicit_residual: Some(residual) })
}

/// Dispatches to the step matching `params`.
pub fn step(
    st: &SolverState,
    params: &SolverParams,
    oracle: &mut Oracle,
    w: &SymmetricMatrix,
    comm: &mut CommCounter,
) -> Result<SolverState> {
    match params {
        SolverParams::Papc(p) => papc_step(st, p, oracle, w, comm),
        SolverParams::Apapc(p) => apapc_step(st, p, oracle, w, comm),
        SolverParams::Opapc { base, chebyshev } => opapc_step(st, base, chebyshev, oracle, w, comm),
        SolverParams::Loopless(p) => loopless_step(st, p, oracle, w, comm),
    }
}
