//! Per-node objectives `f_i` with stacked gradients, smoothness and strong
//! convexity constants, and Bregman divergences.
//!
//! One "gradient computation" is a simultaneous evaluation of `∇f_i(x_i)` at
//! every node. The oracle owns the counter for these, so every consumption
//! is counted at the source. Diagnostic evaluations go through the
//! `*_uncounted` and value/Bregman paths, which never touch it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::NodeShard;
use crate::error::{Error, Result};
use crate::state::StackedState;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;
const POWER_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Quadratic,
    Logistic,
}

#[derive(Debug, Clone)]
enum Objective {
    /// `f_i(x) = ½ Σ_j s_ij (x_j − b_ij)²`.
    Quadratic { targets: StackedState, scales: StackedState },
    /// `f_i(x) = (1/m_i) Σ_j log(1 + exp(−b_ij a_ijᵀx)) + (r/2)‖x‖²`.
    Logistic { shards: Vec<NodeShard>, reg: f64 },
}

#[derive(Debug, Clone)]
pub struct Oracle {
    objective: Objective,
    n: usize,
    d: usize,
    l: f64,
    mu: f64,
    grad_evals: u64,
}

impl Oracle {
    /// Identical curvature `scale` at every node.
    pub fn quadratic(targets: StackedState, scale: f64) -> Result<Self> {
        let scales = StackedState::from_fn(targets.n(), targets.d(), |_, _| scale);
        Self::quadratic_diag(targets, scales)
    }

    /// Separable quadratics with per-node, per-coordinate curvatures.
    /// `L` and `μ` are the largest and smallest curvature overall.
    pub fn quadratic_diag(targets: StackedState, scales: StackedState) -> Result<Self> {
        targets.same_shape(&scales)?;
        if targets.as_slice().is_empty() {
            return Err(Error::InvalidOracle("empty quadratic data".into()));
        }
        if !targets.is_finite() {
            return Err(Error::InvalidOracle("non-finite quadratic targets".into()));
        }
        if scales.as_slice().iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidOracle("quadratic scales must be positive and finite".into()));
        }
        let l = scales.as_slice().iter().copied().fold(f64::MIN, f64::max);
        let mu = scales.as_slice().iter().copied().fold(f64::MAX, f64::min);
        let (n, d) = targets.shape();
        Ok(Self { objective: Objective::Quadratic { targets, scales }, n, d, l, mu, grad_evals: 0 })
    }

    /// ℓ2-regularized logistic regression, one shard per node.
    pub fn logistic(shards: Vec<NodeShard>, reg: f64) -> Result<Self> {
        if !(reg > 0.0 && reg.is_finite()) {
            return Err(Error::InvalidOracle(format!(
                "logistic regularizer must be positive (got {reg}); it is the strong convexity constant"
            )));
        }
        if shards.is_empty() {
            return Err(Error::InvalidOracle("no shards".into()));
        }
        let d = shards[0].d();
        let mut l = 0.0f64;
        for (i, s) in shards.iter().enumerate() {
            if s.m() == 0 {
                return Err(Error::InvalidOracle(format!("shard {i} is empty")));
            }
            if s.d() != d {
                return Err(Error::InvalidOracle(format!("shard {i} has dimension {} (expected {d})", s.d())));
            }
            let gram_max = gram_lambda_max(s);
            l = l.max(gram_max / (4.0 * s.m() as f64) + reg);
        }
        let n = shards.len();
        Ok(Self { objective: Objective::Logistic { shards, reg }, n, d, l, mu: reg, grad_evals: 0 })
    }

    pub fn kind(&self) -> OracleKind {
        match self.objective {
            Objective::Quadratic { .. } => OracleKind::Quadratic,
            Objective::Logistic { .. } => OracleKind::Logistic,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    /// Number of stacked gradient computations so far.
    pub fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    /// Copy with the counter reset to zero.
    pub fn fresh(&self) -> Self {
        Self { grad_evals: 0, ..self.clone() }
    }

    fn check(&self, x: &StackedState) -> Result<()> {
        x.check_shape(self.n, self.d)
    }

    /// `∇F(x)`; counts one gradient computation.
    pub fn gradient(&mut self, x: &StackedState) -> Result<StackedState> {
        let g = self.gradient_uncounted(x)?;
        self.grad_evals += 1;
        Ok(g)
    }

    /// `∇r(x) = ∇F(x) − (μ/2)x`; counts one gradient computation.
    pub fn shifted_gradient_r(&mut self, x: &StackedState) -> Result<StackedState> {
        let g = self.gradient(x)?;
        Ok(g.lincomb(1.0, x, -0.5 * self.mu))
    }

    /// `∇F(x)` for diagnostics; the counter is untouched.
    pub fn gradient_uncounted(&self, x: &StackedState) -> Result<StackedState> {
        self.check(x)?;
        let mut out = StackedState::zeros(self.n, self.d);
        for i in 0..self.n {
            self.node_gradient_into(i, x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// `F(x) = Σ_i f_i(x_i)`.
    pub fn value(&self, x: &StackedState) -> Result<f64> {
        self.check(x)?;
        Ok((0..self.n).map(|i| self.node_value(i, x.row(i))).sum())
    }

    /// `D_F(x, reference) = F(x) − F(ref) − ⟨∇F(ref), x − ref⟩`, uncounted.
    pub fn bregman(&self, x: &StackedState, reference: &StackedState) -> Result<f64> {
        self.check(x)?;
        self.check(reference)?;
        let mut total = 0.0;
        match &self.objective {
            Objective::Quadratic { scales, .. } => {
                // exact closed form, no cancellation
                for ((a, b), s) in x.as_slice().iter().zip(reference.as_slice()).zip(scales.as_slice()) {
                    total += 0.5 * s * (a - b) * (a - b);
                }
            }
            Objective::Logistic { shards, reg } => {
                for (i, shard) in shards.iter().enumerate() {
                    let (xi, ri) = (x.row(i), reference.row(i));
                    let mut acc = 0.0;
                    let diff: Vec<f64> = xi.iter().zip(ri).map(|(p, q)| p - q).collect();
                    for j in 0..shard.m() {
                        let (a, b) = (shard.row(j), shard.label(j));
                        acc += logistic_bregman(b * dot(a, ri), b * dot(a, &diff));
                    }
                    total += acc / shard.m() as f64;
                    total += 0.5 * reg * xi.iter().zip(ri).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
                }
            }
        }
        Ok(total)
    }

    /// Bregman divergence of `r(x) = F(x) − (μ/4)‖x‖²`.
    pub fn bregman_r(&self, x: &StackedState, reference: &StackedState) -> Result<f64> {
        Ok(self.bregman(x, reference)? - 0.25 * self.mu * x.dist_sq(reference))
    }

    pub fn node_value(&self, i: usize, v: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { targets, scales } => v
                .iter()
                .zip(targets.row(i))
                .zip(scales.row(i))
                .map(|((x, b), s)| 0.5 * s * (x - b) * (x - b))
                .sum(),
            Objective::Logistic { shards, reg } => {
                let shard = &shards[i];
                let loss: f64 = (0..shard.m()).map(|j| log1p_exp_neg(shard.label(j) * dot(shard.row(j), v))).sum();
                loss / shard.m() as f64 + 0.5 * reg * dot(v, v)
            }
        }
    }

    pub fn node_gradient_into(&self, i: usize, v: &[f64], out: &mut [f64]) {
        match &self.objective {
            Objective::Quadratic { targets, scales } => {
                for (((o, x), b), s) in out.iter_mut().zip(v).zip(targets.row(i)).zip(scales.row(i)) {
                    *o = s * (x - b);
                }
            }
            Objective::Logistic { shards, reg } => {
                let shard = &shards[i];
                out.iter_mut().zip(v).for_each(|(o, x)| *o = reg * x);
                let inv_m = 1.0 / shard.m() as f64;
                for j in 0..shard.m() {
                    let (a, b) = (shard.row(j), shard.label(j));
                    let w = -b * sigmoid_neg(b * dot(a, v)) * inv_m;
                    out.iter_mut().zip(a).for_each(|(o, aj)| *o += w * aj);
                }
            }
        }
    }

    /// `φ(v) = Σ_i f_i(v)`, the objective restricted to consensus.
    pub fn consensus_value(&self, v: &[f64]) -> f64 {
        (0..self.n).map(|i| self.node_value(i, v)).sum()
    }

    /// `∇φ(v) = Σ_i ∇f_i(v)`.
    pub fn consensus_gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.d];
        let mut buf = vec![0.0; self.d];
        for i in 0..self.n {
            self.node_gradient_into(i, v, &mut buf);
            total.iter_mut().zip(&buf).for_each(|(t, g)| *t += g);
        }
        total
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + e^{−t})` without overflow.
pub(crate) fn log1p_exp_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// `ℓ(t0+δ) − ℓ(t0) − ℓ'(t0)δ` for `ℓ(t) = log(1 + e^{−t})`. The small-`δ`
/// branch uses `ℓ(t0+δ) − ℓ(t0) = log1p(σ(−t0)·expm1(−δ))`, whose error is
/// relative to `δ` rather than to `ℓ(t0)`.
fn logistic_bregman(t0: f64, delta: f64) -> f64 {
    let s = sigmoid_neg(t0);
    let v = if delta.abs() <= 1.0 {
        (s * (-delta).exp_m1()).ln_1p() + s * delta
    } else {
        log1p_exp_neg(t0 + delta) - log1p_exp_neg(t0) + s * delta
    };
    v.max(0.0)
}

/// `1 / (1 + e^{t})`.
pub(crate) fn sigmoid_neg(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// Largest eigenvalue of `AᵀA` by power iteration from a seeded start.
fn gram_lambda_max(shard: &NodeShard) -> f64 {
    let d = shard.d();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.5).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let mut w = vec![0.0; d];
        for j in 0..shard.m() {
            let a = shard.row(j);
            let s = dot(a, &v);
            w.iter_mut().zip(a).for_each(|(wi, ai)| *wi += s * ai);
        }
        let next = dot(&w, &v);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        v = w;
        let done = (next - lambda).abs() <= POWER_TOL * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient at the final iterate
    let mut w = vec![0.0; d];
    for j in 0..shard.m() {
        let a = shard.row(j);
        let s = dot(a, &v);
        w.iter_mut().zip(a).for_each(|(wi, ai)| *wi += s * ai);
    }
    dot(&w, &v).max(lambda)
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shard(rows: &[Vec<f64>], labels: &[f64]) -> NodeShard {
        NodeShard::new(rows.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_constants_and_gradient() {
        let b = StackedState::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let mut o = Oracle::quadratic(b.clone(), 1.0).unwrap();
        assert_eq!((o.l(), o.mu(), o.kappa()), (1.0, 1.0, 1.0));
        let g = o.gradient(&b).unwrap();
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
        let x = StackedState::zeros(2, 2);
        let g = o.gradient(&x).unwrap();
        assert_eq!(g.as_slice(), (-&b).as_slice());
        assert_eq!(o.grad_evals(), 2);
    }

    #[test]
    fn quadratic_rejects_bad_scale() {
        let b = StackedState::zeros(2, 1);
        assert!(Oracle::quadratic(b.clone(), 0.0).is_err());
        assert!(Oracle::quadratic(b, -1.0).is_err());
    }

    #[test]
    fn logistic_constants() {
        let o = Oracle::logistic(vec![shard(&[vec![2.0, 0.0]], &[1.0])], 0.1).unwrap();
        assert!((o.mu() - 0.1).abs() < 1e-15);
        assert!((o.l() - 1.1).abs() < 1e-9);
        assert!(Oracle::logistic(vec![shard(&[vec![2.0, 0.0]], &[1.0])], 0.0).is_err());
        assert!(Oracle::logistic(vec![], 0.1).is_err());
    }

    #[test]
    fn logistic_gradient_at_origin() {
        // sigmoid(0) = 1/2, so ∇f_i(0) = −(1/(2m)) Σ b_j a_j
        let s = shard(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 1.0]], &[1.0, -1.0, 1.0]);
        let mut o = Oracle::logistic(vec![s], 0.3).unwrap();
        let g = o.gradient(&StackedState::zeros(1, 2)).unwrap();
        let expected = [-(1.0 + 3.0 + 0.0) / 6.0, -(2.0 - 0.5 + 1.0) / 6.0];
        assert!((g.get(0, 0) - expected[0]).abs() < 1e-15);
        assert!((g.get(0, 1) - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn logistic_stable_at_large_margins() {
        let s = shard(&[vec![1.0]], &[1.0]);
        let mut o = Oracle::logistic(vec![s], 0.1).unwrap();
        for t in [-1e3, 1e3] {
            let x = StackedState::from_rows(&[vec![t]]).unwrap();
            assert!(o.gradient(&x).unwrap().is_finite());
            assert!(o.value(&x).unwrap().is_finite());
        }
    }

    #[test]
    fn bregman_cases() {
        let b = StackedState::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let o = Oracle::quadratic(b, 1.0).unwrap();
        let x = StackedState::from_rows(&[vec![0.0], vec![5.0]]).unwrap();
        let y = StackedState::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!((o.bregman(&x, &y).unwrap() - 0.5 * x.dist_sq(&y)).abs() < 1e-15);
        assert_eq!(o.bregman(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn logistic_bregman_matches_direct_and_finite_difference() {
        let s = shard(&[vec![0.7, -1.2]], &[-1.0]);
        let o = Oracle::logistic(vec![s], 0.2).unwrap();
        let x = StackedState::from_rows(&[vec![0.3, 0.9]]).unwrap();
        let r = StackedState::from_rows(&[vec![-0.4, 0.1]]).unwrap();
        let direct = o.value(&x).unwrap()
            - o.value(&r).unwrap()
            - o.gradient_uncounted(&r).unwrap().dot(&(&x - &r));
        let got = o.bregman(&x, &r).unwrap();
        assert!((got - direct).abs() < 1e-12);

        // linear term from a central difference along x − r
        let h = 1e-6;
        let dir = &x - &r;
        let fp = o.value(&r.lincomb(1.0, &dir, h)).unwrap();
        let fm = o.value(&r.lincomb(1.0, &dir, -h)).unwrap();
        let fd_linear = (fp - fm) / (2.0 * h);
        let fd = o.value(&x).unwrap() - o.value(&r).unwrap() - fd_linear;
        assert!((got - fd).abs() < 1e-6);
        assert_eq!(o.grad_evals(), 0);
    }

    #[test]
    fn shifted_gradient() {
        let b = StackedState::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.0]]).unwrap();
        let mut o = Oracle::quadratic(b.clone(), 1.0).unwrap();
        let x = StackedState::from_rows(&[vec![0.5, 0.5], vec![-1.0, 4.0]]).unwrap();
        let r = o.shifted_gradient_r(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = (x.get(i, j) - b.get(i, j)) - 0.5 * x.get(i, j);
                assert!((r.get(i, j) - want).abs() < 1e-15);
            }
        }
        assert_eq!(o.grad_evals(), 1);
        let at_zero = o.shifted_gradient_r(&StackedState::zeros(2, 2)).unwrap();
        assert_eq!(at_zero.as_slice(), (-&b).as_slice());

        let g = o.gradient_uncounted(&x).unwrap();
        let back = r.lincomb(1.0, &x, 0.5 * o.mu());
        assert!(back.max_abs_diff(&g) <= 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut o = Oracle::quadratic(StackedState::zeros(2, 2), 1.0).unwrap();
        assert!(o.gradient(&StackedState::zeros(3, 2)).is_err());
        assert_eq!(o.grad_evals(), 0);
    }

    #[test]
    fn logistic_bregman_small_steps() {
        for t0 in [-30.0, -2.0, 0.0, 0.7, 25.0] {
            let s = sigmoid_neg(t0);
            for delta in [1e-9, -3e-7, 2e-8] {
                let taylor = 0.5 * s * (1.0 - s) * delta * delta;
                let got = logistic_bregman(t0, delta);
                assert!((got - taylor).abs() <= 1e-6 * taylor + 1e-15 * s * delta.abs(), "t0={t0} δ={delta}: {got} vs {taylor}");
            }
            let direct = log1p_exp_neg(t0 + 3.0) - log1p_exp_neg(t0) + s * 3.0;
            assert_eq!(logistic_bregman(t0, 3.0), direct.max(0.0));
        }
    }
}
