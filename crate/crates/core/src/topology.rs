//! Network graphs, Laplacian gossip matrices and gossip-axiom validation.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Spectrum};

/// Default relative threshold for classifying an eigenvalue as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Resampling budget for connected Erdős–Rényi draws.
pub const DEFAULT_ER_RETRIES: usize = 100;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are stored as `(min, max)`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
        }
        Ok(Self { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Number of connected components (breadth-first search).
    pub fn component_count(&self) -> usize {
        let adj = self.adjacency_lists();
        let mut seen = vec![false; self.n];
        let mut components = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }
}

/// Declarative graph description, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Ring { n: usize },
    Path { n: usize },
    Grid { rows: usize, cols: usize },
    Complete { n: usize },
    ErdosRenyi {
        n: usize,
        avg_degree: f64,
        seed: u64,
        #[serde(default = "default_retries")]
        max_retries: usize,
    },
}

fn default_retries() -> usize {
    DEFAULT_ER_RETRIES
}

/// Builds the graph described by `spec`.
pub fn build_graph(spec: &TopologySpec) -> Result<Graph> {
    match *spec {
        TopologySpec::Ring { n } => {
            check_n(n)?;
            if n == 2 {
                return Graph::new(2, [(0, 1)]);
            }
            Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
        }
        TopologySpec::Path { n } => {
            check_n(n)?;
            Graph::new(n, (0..n - 1).map(|i| (i, i + 1)))
        }
        TopologySpec::Grid { rows, cols } => {
            check_n(rows * cols)?;
            let id = |r: usize, c: usize| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        edges.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            Graph::new(rows * cols, edges)
        }
        TopologySpec::Complete { n } => {
            check_n(n)?;
            Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
        }
        TopologySpec::ErdosRenyi { n, avg_degree, seed, max_retries } => {
            check_n(n)?;
            if !(avg_degree > 0.0) || avg_degree >= n as f64 {
                return Err(Error::InvalidGraph(format!(
                    "average degree {avg_degree} must lie in (0, n={n})"
                )));
            }
            let p = avg_degree / (n - 1) as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..max_retries.max(1) {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            edges.push((i, j));
                        }
                    }
                }
                let g = Graph::new(n, edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::Disconnected { n, p, seed, retries: max_retries.max(1) })
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
    }
    Ok(())
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n] }
    }

    /// Wraps raw row-major entries. Symmetry is *not* enforced here so that
    /// [`validate_gossip`] can report on arbitrary candidates.
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", n * n),
                got: format!("{}", entries.len()),
            });
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: format!("row length {n}"),
                    got: format!("{}", r.len()),
                });
            }
            entries.extend_from_slice(r);
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Sets both `(i,j)` and `(j,i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, entries: self.entries.iter().map(|v| c * v).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Unnormalized graph Laplacian `D - A`.
pub fn laplacian(g: &Graph) -> SymmetricMatrix {
    let mut w = SymmetricMatrix::zeros(g.n());
    for (i, deg) in g.degrees().into_iter().enumerate() {
        w.set_sym(i, i, deg as f64);
    }
    for (i, j) in g.edges() {
        w.set_sym(i, j, -1.0);
    }
    w
}

/// Outcome of checking the gossip-matrix axioms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub symmetric: bool,
    pub psd: bool,
    pub sparsity_ok: bool,
    pub kernel_is_consensus: bool,
    pub passed: bool,
}

/// Checks symmetry, positive semi-definiteness, graph sparsity and that the
/// kernel is exactly the consensus line.
pub fn validate_gossip(w: &SymmetricMatrix, g: &Graph, zero_tol: f64) -> Result<ValidationReport> {
    if w.n() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} gossip matrix", g.n(), g.n()),
            got: format!("{}x{}", w.n(), w.n()),
        });
    }
    let n = w.n();
    let symmetric = w.is_symmetric();

    let sparsity_ok = (0..n)
        .all(|i| (0..n).all(|j| i == j || w.get(i, j) == 0.0 || g.has_edge(i, j)));

    // Spectral checks run on the symmetric part; an asymmetric input already fails.
    let sym = if symmetric {
        w.clone()
    } else {
        let mut s = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                s.set_sym(i, j, 0.5 * (w.get(i, j) + w.get(j, i)));
            }
        }
        s
    };
    let spec = spectral::eigendecompose(&sym)?;
    let (psd, kernel_is_consensus) = spectral_checks(&spec, zero_tol);

    Ok(ValidationReport {
        symmetric,
        psd,
        sparsity_ok,
        kernel_is_consensus,
        passed: symmetric && psd && sparsity_ok && kernel_is_consensus,
    })
}

fn spectral_checks(spec: &Spectrum, zero_tol: f64) -> (bool, bool) {
    let lmax = spec.eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let thresh = zero_tol * lmax;
    let psd = spec.eigenvalues().iter().all(|&l| l >= -thresh);
    let kernel: Vec<usize> = (0..spec.n()).filter(|&k| spec.eigenvalues()[k].abs() <= thresh).collect();
    if kernel.len() != 1 {
        return (psd, false);
    }
    // the single kernel vector must be parallel to the all-ones vector
    let v = spec.eigenvector(kernel[0]);
    let n = spec.n() as f64;
    let along_ones: f64 = v.iter().sum::<f64>() / n.sqrt();
    (psd, (along_ones.abs() - 1.0).abs() <= 1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().collect()
    }

    #[test]
    fn ring_four() {
        let g = build_graph(&TopologySpec::Ring { n: 4 }).unwrap();
        assert_eq!(edges(&g), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn grid_two_by_two() {
        let g = build_graph(&TopologySpec::Grid { rows: 2, cols: 2 }).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(edges(&g), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn rejects_single_node() {
        assert!(build_graph(&TopologySpec::Path { n: 1 }).is_err());
        assert!(Graph::new(1, []).is_err());
    }

    #[test]
    fn rejects_loops_and_duplicates() {
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn erdos_renyi_pinned() {
        let spec = TopologySpec::ErdosRenyi { n: 100, avg_degree: 6.0, seed: 42, max_retries: 100 };
        let g = build_graph(&spec).unwrap();
        assert!(g.is_connected());
        let again = build_graph(&spec).unwrap();
        assert_eq!(g, again);
        // pinned for ChaCha8 seed 42
        assert_eq!(g.edge_count(), ER_100_6_SEED42_EDGES);
    }

    const ER_100_6_SEED42_EDGES: usize = 304;

    #[test]
    fn erdos_renyi_retry_budget_exhausted() {
        // p = 0.1/9 on 10 nodes is essentially never connected
        let spec = TopologySpec::ErdosRenyi { n: 10, avg_degree: 0.1, seed: 3, max_retries: 5 };
        match build_graph(&spec) {
            Err(Error::Disconnected { seed, retries, .. }) => {
                assert_eq!(seed, 3);
                assert_eq!(retries, 5);
            }
            other => panic!("expected disconnection error, got {other:?}"),
        }
    }

    #[test]
    fn laplacian_examples() {
        let p2 = laplacian(&build_graph(&TopologySpec::Path { n: 2 }).unwrap());
        assert_eq!(p2.as_slice(), &[1.0, -1.0, -1.0, 1.0]);

        let k3 = laplacian(&build_graph(&TopologySpec::Complete { n: 3 }).unwrap());
        assert_eq!(k3.as_slice(), &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);

        let r4 = laplacian(&build_graph(&TopologySpec::Ring { n: 4 }).unwrap());
        for i in 0..4 {
            assert_eq!(r4.get(i, i), 2.0);
            assert_eq!(r4.get(i, (i + 1) % 4), -1.0);
            assert_eq!(r4.get(i, (i + 2) % 4), 0.0);
        }
    }

    #[test]
    fn validation_cases() {
        let g = build_graph(&TopologySpec::Ring { n: 4 }).unwrap();
        let w = laplacian(&g);
        assert!(validate_gossip(&w, &g, DEFAULT_ZERO_TOL).unwrap().passed);

        let mut raw = w.as_slice().to_vec();
        raw[1] = -0.5;
        let asym = SymmetricMatrix::from_row_major(4, raw).unwrap();
        let rep = validate_gossip(&asym, &g, DEFAULT_ZERO_TOL).unwrap();
        assert!(!rep.symmetric);
        assert!(!rep.passed);

        let split = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let rep = validate_gossip(&laplacian(&split), &split, DEFAULT_ZERO_TOL).unwrap();
        assert!(rep.symmetric && rep.psd && rep.sparsity_ok);
        assert!(!rep.kernel_is_consensus);
        assert!(!rep.passed);

        let path = build_graph(&TopologySpec::Path { n: 4 }).unwrap();
        let rep = validate_gossip(&w, &path, DEFAULT_ZERO_TOL).unwrap();
        assert!(!rep.sparsity_ok);

        let small = build_graph(&TopologySpec::Path { n: 3 }).unwrap();
        assert!(validate_gossip(&w, &small, DEFAULT_ZERO_TOL).is_err());
    }

    #[test]
    fn negative_definite_direction_fails_psd() {
        let g = build_graph(&TopologySpec::Path { n: 2 }).unwrap();
        let w = SymmetricMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let rep = validate_gossip(&w, &g, DEFAULT_ZERO_TOL).unwrap();
        assert!(!rep.psd);
    }
}
