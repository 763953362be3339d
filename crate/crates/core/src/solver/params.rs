use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gossip::{chebyshev_params, ChebyshevParams};
use crate::spectral::SpectralSummary;

/// Slack on the `ηθλ_max ≤ 1` coupling.
const COUPLING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Non-accelerated primal-dual baseline.
    Papc,
    /// Accelerated PAPC.
    Apapc,
    /// Accelerated PAPC with Chebyshev gossip.
    Opapc,
    /// Loopless method: one gradient per communication round.
    Loopless,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Papc, Algorithm::Apapc, Algorithm::Opapc, Algorithm::Loopless];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Papc => "papc",
            Algorithm::Apapc => "apapc",
            Algorithm::Opapc => "opapc",
            Algorithm::Loopless => "loopless",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Step sizes shared by PAPC, APAPC and OPAPC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimalDualParams {
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LooplessParams {
    pub eta: f64,
    pub theta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub nu: f64,
    pub tau: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl LooplessParams {
    /// Determinant of the coupled `(x, y)` update: `(1+ηα)(1+θβ−θν) + ηθ`.
    pub fn joint_denominator(&self) -> f64 {
        (1.0 + self.eta * self.alpha) * (1.0 + self.theta * self.beta - self.theta * self.nu) + self.eta * self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum SolverParams {
    Papc(PrimalDualParams),
    Apapc(PrimalDualParams),
    Opapc { base: PrimalDualParams, chebyshev: ChebyshevParams },
    Loopless(LooplessParams),
}

impl SolverParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            SolverParams::Papc(_) => Algorithm::Papc,
            SolverParams::Apapc(_) => Algorithm::Apapc,
            SolverParams::Opapc { .. } => Algorithm::Opapc,
            SolverParams::Loopless(_) => Algorithm::Loopless,
        }
    }

    /// Communication rounds consumed by one iteration.
    pub fn rounds_per_iter(&self) -> u64 {
        match self {
            SolverParams::Opapc { chebyshev, .. } => chebyshev.t as u64,
            _ => 1,
        }
    }
}

/// Step sizes for `algorithm` from the objective constants and the spectrum
/// of the gossip matrix.
pub fn derive_params(algorithm: Algorithm, l: f64, mu: f64, s: &SpectralSummary) -> Result<SolverParams> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParams(format!("strong convexity μ must be positive, got {mu}")));
    }
    if mu > l {
        return Err(Error::InvalidParams(format!("μ = {mu} exceeds L = {l}")));
    }
    if !(s.lambda_max > 0.0 && s.lambda_min_plus > 0.0) {
        return Err(Error::InvalidParams("spectrum must have positive λ_max and λ_min⁺".into()));
    }
    let kappa = l / mu;
    let params = match algorithm {
        Algorithm::Papc => {
            let eta = 1.0 / l;
            SolverParams::Papc(PrimalDualParams { eta, theta: 1.0 / (eta * s.lambda_max), alpha: 0.0, tau: 1.0 })
        }
        Algorithm::Apapc => {
            let tau = f64::min(1.0, 0.5 * (s.chi / kappa).sqrt());
            let eta = 1.0 / (4.0 * tau * l);
            SolverParams::Apapc(PrimalDualParams { eta, theta: 1.0 / (eta * s.lambda_max), alpha: mu, tau })
        }
        Algorithm::Opapc => {
            let chebyshev = chebyshev_params(s);
            let ct = chebyshev.c1.powi(chebyshev.t as i32);
            let tau = f64::min(1.0, (1.0 + ct) / (2.0 * kappa.sqrt() * (1.0 - ct)));
            let eta = 1.0 / (4.0 * tau * l);
            let theta = (1.0 + ct * ct) / (eta * (1.0 + ct) * (1.0 + ct));
            SolverParams::Opapc { base: PrimalDualParams { eta, theta, alpha: mu, tau }, chebyshev }
        }
        Algorithm::Loopless => {
            let (lmax, lmin) = (s.lambda_max, s.lambda_min_plus);
            let sqrt_mul = (mu * l).sqrt();
            let gap = (mu * lmin / (l * lmax)).sqrt();
            SolverParams::Loopless(LooplessParams {
                eta: 1.0 / (2.0 * sqrt_mul),
                alpha: mu / 2.0,
                tau: 0.5 * (mu / l).sqrt(),
                sigma: gap / 18.0,
                nu: 3.0 / (80.0 * l),
                beta: 1.0 / (80.0 * l),
                theta: 18.0 * (mu * l * lmax).sqrt() / (5.0 * lmin.sqrt()),
                gamma: lmin / (80.0 * l),
                lambda: 9.0 * sqrt_mul / (2.0 * (lmin * lmax).sqrt()),
                rho: gap / 18.0,
            })
        }
    };
    check_params(&params, s)?;
    Ok(params)
}

/// Verifies the structural invariants of a parameter set.
pub fn check_params(p: &SolverParams, s: &SpectralSummary) -> Result<()> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{name} = {v} must be positive and finite")))
        }
    };
    let unit = |name: &str, v: f64| {
        if v > 0.0 && v <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{name} = {v} must lie in (0, 1]")))
        }
    };
    match p {
        SolverParams::Papc(b) | SolverParams::Apapc(b) => {
            positive("eta", b.eta)?;
            positive("theta", b.theta)?;
            unit("tau", b.tau)?;
            if b.alpha < 0.0 {
                return Err(Error::InvalidParams("alpha must be non-negative".into()));
            }
            let coupling = b.eta * b.theta * s.lambda_max;
            if coupling > 1.0 + COUPLING_SLACK {
                return Err(Error::InvalidParams(format!("ηθλ_max = {coupling} exceeds 1")));
            }
        }
        SolverParams::Opapc { base, chebyshev } => {
            positive("eta", base.eta)?;
            positive("theta", base.theta)?;
            positive("alpha", base.alpha)?;
            unit("tau", base.tau)?;
            let coupling = base.eta * base.theta * chebyshev.lambda1;
            if coupling > 1.0 + COUPLING_SLACK {
                return Err(Error::InvalidParams(format!("ηθλ1 = {coupling} exceeds 1")));
            }
        }
        SolverParams::Loopless(q) => {
            for (name, v) in [
                ("eta", q.eta),
                ("theta", q.theta),
                ("lambda", q.lambda),
                ("alpha", q.alpha),
                ("beta", q.beta),
                ("gamma", q.gamma),
                ("nu", q.nu),
                ("rho", q.rho),
            ] {
                positive(name, v)?;
            }
            unit("tau", q.tau)?;
            unit("sigma", q.sigma)?;
            let den = q.joint_denominator();
            if !(den > 0.0) {
                return Err(Error::InvalidParams(format!("joint-solve denominator {den} is not positive")));
            }
        }
    }
    Ok(())
}
