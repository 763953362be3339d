//! Blockwise gossip products with communication-round accounting, and the
//! Chebyshev-accelerated gossip polynomial.
//!
//! One multiplication of a stacked state by the gossip matrix is one
//! communication round. [`accelerated_gossip`] applies a degree-`T`
//! polynomial `P(W)` with `P(0) = 0` using exactly `T` such products; on the
//! positive spectrum of `W` the polynomial maps into `[λ2, λ1]` with
//! `λ1/λ2 ≤ 4`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::SpectralSummary;
use crate::state::StackedState;
use crate::topology::{Graph, SymmetricMatrix};

/// Condition numbers at or below `1 + CHI_DEGENERATE_TOL` use the single-round fallback.
pub const CHI_DEGENERATE_TOL: f64 = 1e-9;

/// Counts communication rounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommCounter {
    rounds: u64,
}

impl CommCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }
}

/// Row `i` of the result is `Σ_j W_ij x_j`. Counts one round.
pub fn gossip_multiply(w: &SymmetricMatrix, x: &StackedState, counter: &mut CommCounter) -> Result<StackedState> {
    let out = multiply(w, x)?;
    counter.rounds += 1;
    Ok(out)
}

fn multiply(w: &SymmetricMatrix, x: &StackedState) -> Result<StackedState> {
    if w.n() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} node rows", w.n()),
            got: format!("{}", x.n()),
        });
    }
    let mut out = StackedState::zeros(x.n(), x.d());
    for i in 0..w.n() {
        let wrow = w.row(i);
        let orow = out.row_mut(i);
        for (j, &wij) in wrow.iter().enumerate() {
            if wij == 0.0 {
                continue;
            }
            for (o, v) in orow.iter_mut().zip(x.row(j)) {
                *o += wij * v;
            }
        }
    }
    Ok(out)
}

/// Parameters of the Chebyshev gossip polynomial and the spectral interval
/// `[lambda2, lambda1]` it maps the positive spectrum into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevParams {
    #[serde(rename = "T")]
    pub t: usize,
    pub c1: f64,
    /// Infinite in the degenerate case, where it is not used.
    pub c2: f64,
    pub c3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub chi_eff: f64,
    /// `χ ≈ 1`: the polynomial is `W/λ_max`, applied with one round.
    pub degenerate: bool,
}

/// Polynomial parameters from the spectrum of `W`.
pub fn chebyshev_params(s: &SpectralSummary) -> ChebyshevParams {
    let chi = s.chi;
    if chi <= 1.0 + CHI_DEGENERATE_TOL {
        return ChebyshevParams {
            t: 1,
            c1: 0.0,
            c2: f64::INFINITY,
            c3: 1.0 / s.lambda_max,
            lambda1: 1.0,
            lambda2: 1.0,
            chi_eff: 1.0,
            degenerate: true,
        };
    }
    let root = chi.sqrt();
    let t = (root.floor() as usize).max(1);
    let c1 = (root - 1.0) / (root + 1.0);
    let c2 = (chi + 1.0) / (chi - 1.0);
    let c3 = 2.0 * chi / ((1.0 + chi) * s.lambda_max);
    let c1t = c1.powi(t as i32);
    let band = 2.0 * c1t / (1.0 + c1t * c1t);
    let (lambda1, lambda2) = (1.0 + band, 1.0 - band);
    ChebyshevParams { t, c1, c2, c3, lambda1, lambda2, chi_eff: lambda1 / lambda2, degenerate: false }
}

/// Applies `P(W)` to `x` with the three-term Chebyshev recursion. Counts
/// `T` rounds (one in the degenerate case).
pub fn accelerated_gossip(
    w: &SymmetricMatrix,
    p: &ChebyshevParams,
    x: &StackedState,
    counter: &mut CommCounter,
) -> Result<StackedState> {
    if p.degenerate {
        let wx = gossip_multiply(w, x, counter)?;
        return Ok(wx.scaled(p.c3));
    }
    // (I − c3 W) v
    let shifted = |v: &StackedState, counter: &mut CommCounter| -> Result<StackedState> {
        let wv = gossip_multiply(w, v, counter)?;
        Ok(v.lincomb(1.0, &wv, -p.c3))
    };
    let (mut a_prev, mut a_cur) = (1.0, p.c2);
    let mut x_prev = x.clone();
    let mut x_cur = p.c2 * shifted(x, counter)?;
    for _ in 1..p.t {
        let a_next = 2.0 * p.c2 * a_cur - a_prev;
        let x_next = shifted(&x_cur, counter)?.lincomb(2.0 * p.c2, &x_prev, -1.0);
        a_prev = a_cur;
        a_cur = a_next;
        x_prev = x_cur;
        x_cur = x_next;
    }
    Ok(x.lincomb(1.0, &x_cur, -1.0 / a_cur))
}

/// `P(λ)` for a scalar eigenvalue, by the same recursion as [`accelerated_gossip`].
pub fn chebyshev_polynomial(p: &ChebyshevParams, lambda: f64) -> f64 {
    if p.degenerate {
        return p.c3 * lambda;
    }
    let s = 1.0 - p.c3 * lambda;
    let (mut a_prev, mut a_cur) = (1.0, p.c2);
    let (mut x_prev, mut x_cur) = (1.0, p.c2 * s);
    for _ in 1..p.t {
        let a_next = 2.0 * p.c2 * a_cur - a_prev;
        let x_next = 2.0 * p.c2 * s * x_cur - x_prev;
        (a_prev, a_cur, x_prev, x_cur) = (a_cur, a_next, x_cur, x_next);
    }
    1.0 - x_cur / a_cur
}

/// `P(W)` as a dense matrix, probed column by column and symmetrized.
/// Test and reporting use only.
pub fn materialize_effective(w: &SymmetricMatrix, p: &ChebyshevParams) -> Result<SymmetricMatrix> {
    let n = w.n();
    let mut cols = Vec::with_capacity(n);
    let mut scratch = CommCounter::new();
    for j in 0..n {
        let e = StackedState::from_fn(n, 1, |i, _| if i == j { 1.0 } else { 0.0 });
        cols.push(accelerated_gossip(w, p, &e, &mut scratch)?);
    }
    let mut m = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            m.set_sym(i, j, 0.5 * (cols[j].get(i, 0) + cols[i].get(j, 0)));
        }
    }
    Ok(m)
}

/// Graph connecting nodes within `hops` steps: the support of a degree-`hops`
/// polynomial in the Laplacian.
pub fn reach_graph(g: &Graph, hops: usize) -> Result<Graph> {
    let adj = g.adjacency_lists();
    let mut edges = Vec::new();
    for s in 0..g.n() {
        let mut dist = vec![usize::MAX; g.n()];
        dist[s] = 0;
        let mut frontier = vec![s];
        for h in 1..=hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = h;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        edges.extend((s + 1..g.n()).filter(|&t| dist[t] != usize::MAX).map(|t| (s, t)));
    }
    Graph::new(g.n(), edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{eigendecompose, spectral_summary};
    use crate::topology::{build_graph, laplacian, TopologySpec, DEFAULT_ZERO_TOL};

    fn summary(chi: f64, lambda_max: f64) -> SpectralSummary {
        SpectralSummary { lambda_max, lambda_min_plus: lambda_max / chi, chi, kernel_dim: 1 }
    }

    #[test]
    fn multiply_examples() {
        let w = SymmetricMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let mut c = CommCounter::new();
        let x = StackedState::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let y = gossip_multiply(&w, &x, &mut c).unwrap();
        assert_eq!(y.as_slice(), &[1.0, -1.0]);
        let cons = StackedState::consensus(2, &[4.0, -2.0]);
        assert!(gossip_multiply(&w, &cons, &mut c).unwrap().as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(c.rounds(), 2);
        assert!(gossip_multiply(&w, &StackedState::zeros(3, 1), &mut c).is_err());
        assert_eq!(c.rounds(), 2);
    }

    #[test]
    fn columnwise_decomposition() {
        let w = laplacian(&build_graph(&TopologySpec::Ring { n: 5 }).unwrap());
        let x = StackedState::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let mut c = CommCounter::new();
        let full = gossip_multiply(&w, &x, &mut c).unwrap();
        for j in 0..3 {
            let col = StackedState::from_fn(5, 1, |i, _| x.get(i, j));
            let out = gossip_multiply(&w, &col, &mut c).unwrap();
            for i in 0..5 {
                assert_eq!(out.get(i, 0), full.get(i, j));
            }
        }
    }

    #[test]
    fn params_chi_four() {
        let p = chebyshev_params(&summary(4.0, 4.0));
        assert_eq!(p.t, 2);
        assert!((p.c1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.c2 - 5.0 / 3.0).abs() < 1e-15);
        assert!((p.c3 - 0.4).abs() < 1e-15);
        // band 2c1²/(1+c1⁴) = 9/41
        assert!((p.lambda1 - (1.0 + 9.0 / 41.0)).abs() < 1e-15);
        assert!((p.lambda2 - (1.0 - 9.0 / 41.0)).abs() < 1e-15);
        assert!((p.chi_eff - 1.5625).abs() < 1e-14);
        assert!(!p.degenerate);
    }

    #[test]
    fn params_chi_nine() {
        let p = chebyshev_params(&summary(9.0, 1.0));
        assert_eq!(p.t, 3);
        assert!((p.c1 - 0.5).abs() < 1e-15);
        assert!((p.c2 - 1.25).abs() < 1e-15);
        assert!(p.chi_eff <= 4.0);
    }

    #[test]
    fn degenerate_fallback() {
        let w = laplacian(&build_graph(&TopologySpec::Complete { n: 4 }).unwrap());
        let s = spectral_summary(&eigendecompose(&w).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        let p = chebyshev_params(&s);
        assert!(p.degenerate);
        assert_eq!((p.t, p.lambda1, p.lambda2), (1, 1.0, 1.0));
        let x = StackedState::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let mut c = CommCounter::new();
        let out = accelerated_gossip(&w, &p, &x, &mut c).unwrap();
        let wx = gossip_multiply(&w, &x, &mut CommCounter::new()).unwrap();
        assert!(out.max_abs_diff(&wx.scaled(1.0 / 4.0)) < 1e-15);
        assert_eq!(c.rounds(), 1);
    }

    #[test]
    fn consensus_is_annihilated() {
        let w = laplacian(&build_graph(&TopologySpec::Ring { n: 12 }).unwrap());
        let s = spectral_summary(&eigendecompose(&w).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        let p = chebyshev_params(&s);
        assert!(p.t >= 2);
        let x = StackedState::consensus(12, &[1.5, -3.0]);
        let mut c = CommCounter::new();
        let out = accelerated_gossip(&w, &p, &x, &mut c).unwrap();
        assert!(out.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(c.rounds(), p.t as u64);
    }

    #[test]
    fn single_step_unroll() {
        // 2 < χ < 4 gives T = 1 and P(W) = c3 W
        let w = laplacian(&build_graph(&TopologySpec::Path { n: 3 }).unwrap());
        let s = spectral_summary(&eigendecompose(&w).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        let p = chebyshev_params(&s);
        assert_eq!(p.t, 1);
        let x = StackedState::from_rows(&[vec![1.0], vec![-2.0], vec![0.25]]).unwrap();
        let out = accelerated_gossip(&w, &p, &x, &mut CommCounter::new()).unwrap();
        let want = gossip_multiply(&w, &x, &mut CommCounter::new()).unwrap().scaled(p.c3);
        assert!(out.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn reach_graph_of_path() {
        let g = build_graph(&TopologySpec::Path { n: 4 }).unwrap();
        let g2 = reach_graph(&g, 2).unwrap();
        assert_eq!(g2.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(reach_graph(&g, 1).unwrap(), g);
    }
}
