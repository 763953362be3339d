//! Reference solutions, Lyapunov functions and empirical rate fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::solver::{LooplessParams, PrimalDualParams, SolverState};
use crate::spectral::Spectrum;
use crate::state::StackedState;
use crate::topology::DEFAULT_ZERO_TOL;

/// Default gradient-norm target of the reference solve.
pub const DEFAULT_REFERENCE_TOL: f64 = 1e-12;

const REFERENCE_MAX_ITERS: usize = 1_000_000;

/// Iterations without improvement that end the polishing phase.
const POLISH_PATIENCE: usize = 50;

/// Dual iterates may carry a kernel component of at most this size relative
/// to `1 + ‖y‖`.
pub const RANGE_TOL: f64 = 1e-6;

/// Saddle point of the decentralized problem, in both formulations.
#[derive(Debug, Clone)]
pub struct ReferencePoint {
    /// Minimizer of `Σ_i f_i` over `R^d`.
    pub x_bar: Vec<f64>,
    /// `x_bar` at every node.
    pub x_star: StackedState,
    /// `−∇F(x*)`.
    pub y_star: StackedState,
    /// `∇F(x*) − (μ/2)x*`.
    pub y_star_loopless: StackedState,
    /// `−∇F(x*)`.
    pub z_star: StackedState,
    /// `‖Σ_i ∇f_i(x_bar)‖` actually achieved.
    pub grad_norm: f64,
}

/// Minimizes `φ(v) = Σ_i f_i(v)` with Nesterov's constant-momentum method
/// (smoothness `nL`, strong convexity `nμ`) until `‖∇φ‖ ≤ tol`, then keeps
/// iterating while the gradient norm still improves and returns the best
/// point seen.
pub fn reference_solution(oracle: &Oracle, tol: f64) -> Result<ReferencePoint> {
    let n = oracle.n() as f64;
    let (l, mu) = (n * oracle.l(), n * oracle.mu());
    let momentum = {
        let q = (l / mu).sqrt();
        (q - 1.0) / (q + 1.0)
    };
    let d = oracle.d();
    let mut v = vec![0.0; d];
    let mut u = v.clone();
    let mut best = (f64::INFINITY, u.clone());
    let mut reached_at: Option<usize> = None;
    let mut since_improvement = 0;

    for k in 0..REFERENCE_MAX_ITERS {
        let g = oracle.consensus_gradient(&u);
        let gnorm = norm(&g);
        if gnorm < best.0 {
            best = (gnorm, u.clone());
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if reached_at.is_none() && gnorm <= tol {
            reached_at = Some(k);
        }
        if reached_at.is_some() && (since_improvement >= POLISH_PATIENCE || gnorm == 0.0) {
            break;
        }
        let v_next: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - b / l).collect();
        u = v_next.iter().zip(&v).map(|(a, b)| a + momentum * (a - b)).collect();
        v = v_next;
    }
    if reached_at.is_none() {
        return Err(Error::ReferenceFailed { tol, iters: REFERENCE_MAX_ITERS, best: best.0 });
    }
    Ok(reference_from(oracle, best.1, best.0))
}

fn reference_from(oracle: &Oracle, x_bar: Vec<f64>, grad_norm: f64) -> ReferencePoint {
    let x_star = StackedState::consensus(oracle.n(), &x_bar);
    let grad = oracle.gradient_uncounted(&x_star).expect("shape matches oracle");
    let y_star = -&grad;
    let y_star_loopless = grad.lincomb(1.0, &x_star, -0.5 * oracle.mu());
    ReferencePoint { x_bar, z_star: y_star.clone(), x_star, y_star, y_star_loopless, grad_norm }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Errors if `y` has drifted out of `range(W)`.
pub fn check_range(spectrum: &Spectrum, y: &StackedState) -> Result<()> {
    let kc = spectrum.kernel_component_norm(y, DEFAULT_ZERO_TOL)?;
    let scale = 1.0 + y.norm();
    if kc > RANGE_TOL * scale {
        return Err(Error::KernelComponent { relative: kc / scale, limit: RANGE_TOL });
    }
    Ok(())
}

/// Lyapunov function of the accelerated primal-dual method:
///
/// `(1/η)‖x−x*‖² + (1/θ)‖y−y*‖²_{W†} − η/(1+ηα)‖y−y*‖² + 2(1−τ)/τ·D_F(x_f, x*)`.
///
/// For the Chebyshev variant pass the spectrum of `P(W)`. The dual difference
/// is projected onto `range(W)` after checking that `y` itself lies there.
pub fn lyapunov_apapc(
    st: &SolverState,
    reference: &ReferencePoint,
    p: &PrimalDualParams,
    spectrum: &Spectrum,
    oracle: &Oracle,
) -> Result<f64> {
    check_range(spectrum, &st.y)?;
    let dy = spectrum.project_range(&(&st.y - &reference.y_star), DEFAULT_ZERO_TOL)?;
    let x_term = st.x.dist_sq(&reference.x_star) / p.eta;
    let y_term = spectrum.pinv_form_unchecked(&dy, DEFAULT_ZERO_TOL)? / p.theta
        - p.eta / (1.0 + p.eta * p.alpha) * dy.norm_sq();
    let bregman = oracle.bregman(&st.x_f, &reference.x_star)?;
    Ok(x_term + y_term + 2.0 * (1.0 - p.tau) / p.tau * bregman)
}

/// `D_h((y, z), (y', z')) = (1/μ)‖y+z−y'−z'‖² + (ν/2)‖y−y'‖²`.
pub fn bregman_h(
    mu: f64,
    nu: f64,
    y: &StackedState,
    z: &StackedState,
    y_ref: &StackedState,
    z_ref: &StackedState,
) -> f64 {
    let dy = y - y_ref;
    let dz = z - z_ref;
    (&dy + &dz).norm_sq() / mu + 0.5 * nu * dy.norm_sq()
}

/// Lyapunov function of the loopless method:
///
/// `(1+ρ)[(1/η)‖Δx‖² + (1/θ)‖Δy‖² + (1/λ)‖Δz‖²_{W†}] + (2−τ)/τ·D_r(x_f, x*) + (2/σ)·D_h((y_f, z_f), (y*, z*))`.
pub fn lyapunov_loopless(
    st: &SolverState,
    reference: &ReferencePoint,
    p: &LooplessParams,
    spectrum: &Spectrum,
    oracle: &Oracle,
) -> Result<f64> {
    check_range(spectrum, &st.z)?;
    let dz = spectrum.project_range(&(&st.z - &reference.z_star), DEFAULT_ZERO_TOL)?;
    let quad = st.x.dist_sq(&reference.x_star) / p.eta
        + st.y.dist_sq(&reference.y_star_loopless) / p.theta
        + spectrum.pinv_form_unchecked(&dz, DEFAULT_ZERO_TOL)? / p.lambda;
    let d_r = oracle.bregman_r(&st.x_f, &reference.x_star)?;
    let d_h = bregman_h(oracle.mu(), p.nu, &st.y_f, &st.z_f, &reference.y_star_loopless, &reference.z_star);
    Ok((1.0 + p.rho) * quad + (2.0 - p.tau) / p.tau * d_r + 2.0 / p.sigma * d_h)
}

/// Per-iteration contraction factor of the accelerated primal-dual Lyapunov
/// function: `(1 + ¼·min{1/√(κχ), 1/χ})⁻¹`.
pub fn apapc_rate(kappa: f64, chi: f64) -> f64 {
    1.0 / (1.0 + 0.25 * f64::min(1.0 / (kappa * chi).sqrt(), 1.0 / chi))
}

/// Per-iteration contraction factor of the loopless Lyapunov function:
/// `1 − 1/(1 + ρ⁻¹)`.
pub fn loopless_rate(rho: f64) -> f64 {
    1.0 - 1.0 / (1.0 + 1.0 / rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    Diverged { iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub grad_evals: u64,
    pub comm_rounds: u64,
    pub sq_dist: f64,
    pub lyapunov: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trace {
    pub algorithm: String,
    pub records: Vec<TraceRecord>,
    pub stop: Option<StopReason>,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAxis {
    Iter,
    GradEvals,
    CommRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Geometric decrease of `sq_dist` per unit of the chosen axis.
    pub rate: f64,
    pub r_squared: f64,
    /// The window contained an exact zero; `rate` is reported as 0.
    pub converged: bool,
}

/// Least-squares fit of `log(sq_dist)` against `axis` over the last
/// `tail_fraction` of the records.
pub fn empirical_rate(t: &Trace, tail_fraction: f64, axis: RateAxis) -> Result<RateFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InsufficientRecords(format!("tail fraction {tail_fraction} outside (0, 1]")));
    }
    let len = t.records.len();
    let take = ((len as f64 * tail_fraction).ceil() as usize).min(len);
    let window = &t.records[len - take..];
    if window.len() < 3 {
        return Err(Error::InsufficientRecords(format!("{} records in window, need 3", window.len())));
    }
    if window.iter().any(|r| r.sq_dist == 0.0) {
        return Ok(RateFit { rate: 0.0, r_squared: 1.0, converged: true });
    }
    let pts: Vec<(f64, f64)> = window
        .iter()
        .map(|r| {
            let x = match axis {
                RateAxis::Iter => r.iter,
                RateAxis::GradEvals => r.grad_evals,
                RateAxis::CommRounds => r.comm_rounds,
            } as f64;
            (x, r.sq_dist.ln())
        })
        .collect();
    let (slope, r_squared) = linear_fit(&pts)?;
    Ok(RateFit { rate: slope.exp(), r_squared, converged: false })
}

/// Ordinary least squares `y ≈ a + b·x`; returns `(b, r²)`. A constant `y`
/// has `r² = 1`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientRecords("all records share the same abscissa".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r_squared))
}
