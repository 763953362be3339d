//! Dense symmetric eigendecomposition and the spectral quantities derived
//! from it: `λ_max`, `λ_min⁺`, the condition number `χ`, and quadratic forms
//! of the pseudo-inverse evaluated through the eigenbasis.
//!
//! Every operation on a [`StackedState`] acts blockwise: the `n×n` matrix is
//! applied to each of the `d` coordinate columns independently, which is the
//! action of `W ⊗ I` without forming it.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StackedState;
use crate::topology::SymmetricMatrix;

/// Largest matrix the eigensolver accepts.
pub const MAX_EIGEN_DIM: usize = 2000;

/// Relative size of a kernel component tolerated by [`pinv_quadratic_form`].
pub const KERNEL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Spectrum {
    n: usize,
    /// Ascending.
    eigenvalues: Vec<f64>,
    /// `eigenvectors[k]` pairs with `eigenvalues[k]`.
    eigenvectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
    pub chi: f64,
    pub kernel_dim: usize,
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvectors are sign-normalized (first entry of largest magnitude is
/// positive) so repeated calls on identical input agree bitwise.
pub fn eigendecompose(w: &SymmetricMatrix) -> Result<Spectrum> {
    let n = w.n();
    if n > MAX_EIGEN_DIM {
        return Err(Error::TooLarge { n, bound: MAX_EIGEN_DIM });
    }
    if w.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let m = DMatrix::from_row_slice(n, n, w.as_slice());
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for k in order {
        eigenvalues.push(eig.eigenvalues[k]);
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvectors.push(v);
    }
    Ok(Spectrum { n, eigenvalues, eigenvectors })
}

impl Spectrum {
    /// Builds a spectrum from explicit eigenpairs (orthonormality is the
    /// caller's responsibility).
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: Vec<Vec<f64>>) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.len() != n || eigenvectors.iter().any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} eigenvectors of length {n}"),
                got: format!("{} eigenvectors", eigenvectors.len()),
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        Ok(Self {
            n,
            eigenvalues: order.iter().map(|&k| eigenvalues[k]).collect(),
            eigenvectors: order.iter().map(|&k| eigenvectors[k].clone()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.eigenvectors[k]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    fn zero_threshold(&self, zero_tol: f64) -> f64 {
        zero_tol * self.lambda_max().max(0.0)
    }

    fn is_zero(&self, k: usize, zero_tol: f64) -> bool {
        self.eigenvalues[k] <= self.zero_threshold(zero_tol)
    }

    /// Spectrum of `f(W)`: same eigenvectors, eigenvalues `f(λ_k)`, re-sorted.
    pub fn mapped(&self, f: impl Fn(f64) -> f64) -> Spectrum {
        let values = self.eigenvalues.iter().map(|&l| f(l)).collect();
        Spectrum::from_parts(values, self.eigenvectors.clone()).expect("shape preserved")
    }

    /// `max |V Λ Vᵀ − W|`.
    pub fn reconstruction_error(&self, w: &SymmetricMatrix) -> f64 {
        let n = self.n;
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| self.eigenvalues[k] * self.eigenvectors[k][i] * self.eigenvectors[k][j]).sum();
                err = err.max((r - w.get(i, j)).abs());
            }
        }
        err
    }

    /// `max |VᵀV − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut err = 0.0f64;
        for a in 0..self.n {
            for b in 0..self.n {
                let dot: f64 = self.eigenvectors[a].iter().zip(&self.eigenvectors[b]).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                err = err.max((dot - target).abs());
            }
        }
        err
    }

    /// Blockwise coefficients `v_kᵀ Y`, one `d`-vector per eigenpair.
    fn coefficients(&self, y: &StackedState) -> Vec<Vec<f64>> {
        self.eigenvectors
            .iter()
            .map(|v| {
                let mut c = vec![0.0; y.d()];
                for (i, row) in y.rows().enumerate() {
                    for (acc, val) in c.iter_mut().zip(row) {
                        *acc += v[i] * val;
                    }
                }
                c
            })
            .collect()
    }

    /// Applies `Σ_k f(λ_k) v_k v_kᵀ` blockwise.
    pub fn apply_fn(&self, y: &StackedState, f: impl Fn(f64) -> f64) -> Result<StackedState> {
        y.check_shape(self.n, y.d())?;
        let coeffs = self.coefficients(y);
        let mut out = StackedState::zeros(self.n, y.d());
        for (k, c) in coeffs.iter().enumerate() {
            let s = f(self.eigenvalues[k]);
            if s == 0.0 {
                continue;
            }
            let v = &self.eigenvectors[k];
            for (i, vi) in v.iter().enumerate() {
                for (o, cj) in out.row_mut(i).iter_mut().zip(c) {
                    *o += s * vi * cj;
                }
            }
        }
        Ok(out)
    }

    /// Norm of the projection of `y` onto the zero-classified eigenspace.
    pub fn kernel_component_norm(&self, y: &StackedState, zero_tol: f64) -> Result<f64> {
        y.check_shape(self.n, y.d())?;
        let coeffs = self.coefficients(y);
        Ok((0..self.n)
            .filter(|&k| self.is_zero(k, zero_tol))
            .map(|k| coeffs[k].iter().map(|c| c * c).sum::<f64>())
            .sum::<f64>()
            .sqrt())
    }

    /// Orthogonal projection of `y` onto `range(W)`.
    pub fn project_range(&self, y: &StackedState, zero_tol: f64) -> Result<StackedState> {
        let thresh = self.zero_threshold(zero_tol);
        self.apply_fn(y, |l| if l <= thresh { 0.0 } else { 1.0 })
    }

    /// `W† y`, blockwise.
    pub fn pinv_apply(&self, y: &StackedState, zero_tol: f64) -> Result<StackedState> {
        let thresh = self.zero_threshold(zero_tol);
        self.apply_fn(y, |l| if l <= thresh { 0.0 } else { 1.0 / l })
    }

    /// `⟨W† y, y⟩` with no kernel check.
    pub fn pinv_form_unchecked(&self, y: &StackedState, zero_tol: f64) -> Result<f64> {
        y.check_shape(self.n, y.d())?;
        let coeffs = self.coefficients(y);
        Ok((0..self.n)
            .filter(|&k| !self.is_zero(k, zero_tol))
            .map(|k| coeffs[k].iter().map(|c| c * c).sum::<f64>() / self.eigenvalues[k])
            .sum())
    }
}

/// Summarizes a spectrum; eigenvalues `≤ zero_tol·λ_max` count as zero.
pub fn spectral_summary(s: &Spectrum, zero_tol: f64) -> Result<SpectralSummary> {
    let lambda_max = s.lambda_max();
    if !(lambda_max > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let kernel_dim = (0..s.n()).filter(|&k| s.is_zero(k, zero_tol)).count();
    let lambda_min_plus = s.eigenvalues()[kernel_dim..]
        .first()
        .copied()
        .ok_or(Error::ZeroMatrix)?;
    Ok(SpectralSummary { lambda_max, lambda_min_plus, chi: lambda_max / lambda_min_plus, kernel_dim })
}

/// `⟨W† y, y⟩` for `y` in `range(W)`.
///
/// Fails if the kernel component of `y` exceeds [`KERNEL_TOL`]`·‖y‖`: dual
/// iterates are supposed to stay in the range, so drift is reported rather
/// than projected away.
pub fn pinv_quadratic_form(s: &Spectrum, y: &StackedState, zero_tol: f64) -> Result<f64> {
    let norm = y.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let kc = s.kernel_component_norm(y, zero_tol)?;
    if kc > KERNEL_TOL * norm {
        return Err(Error::KernelComponent { relative: kc / norm, limit: KERNEL_TOL });
    }
    s.pinv_form_unchecked(y, zero_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_graph, laplacian, TopologySpec, DEFAULT_ZERO_TOL};

    fn lap(spec: TopologySpec) -> SymmetricMatrix {
        laplacian(&build_graph(&spec).unwrap())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn small_spectra() {
        let s = eigendecompose(&lap(TopologySpec::Path { n: 2 })).unwrap();
        assert!(close(s.eigenvalues(), &[0.0, 2.0], 1e-14));

        let s = eigendecompose(&lap(TopologySpec::Ring { n: 4 })).unwrap();
        assert!(close(s.eigenvalues(), &[0.0, 2.0, 2.0, 4.0], 1e-13));

        let id = SymmetricMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let s = eigendecompose(&id).unwrap();
        assert!(close(s.eigenvalues(), &[1.0, 1.0, 1.0], 1e-15));
    }

    #[test]
    fn ring_closed_form() {
        // cycle Laplacian eigenvalues are 2 - 2 cos(2πk/n)
        let n = 9;
        let s = eigendecompose(&lap(TopologySpec::Ring { n })).unwrap();
        let mut expected: Vec<f64> = (0..n)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        expected.sort_by(f64::total_cmp);
        assert!(close(s.eigenvalues(), &expected, 1e-12));
    }

    #[test]
    fn decomposition_invariants() {
        let w = lap(TopologySpec::Grid { rows: 4, cols: 5 });
        let s = eigendecompose(&w).unwrap();
        assert!(s.reconstruction_error(&w) <= 1e-8 * s.lambda_max().max(1.0));
        assert!(s.orthogonality_error() <= 1e-8);
        let again = eigendecompose(&w).unwrap();
        assert_eq!(s.eigenvalues(), again.eigenvalues());
        assert_eq!(s.eigenvectors, again.eigenvectors);
    }

    #[test]
    fn rejects_non_finite_and_oversize() {
        let bad = SymmetricMatrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(eigendecompose(&bad), Err(Error::NonFinite)));
        let big = SymmetricMatrix::zeros(MAX_EIGEN_DIM + 1);
        assert!(matches!(eigendecompose(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn summaries() {
        let s = spectral_summary(&eigendecompose(&lap(TopologySpec::Ring { n: 4 })).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        assert!((s.lambda_max - 4.0).abs() < 1e-12);
        assert!((s.lambda_min_plus - 2.0).abs() < 1e-12);
        assert!((s.chi - 2.0).abs() < 1e-12);
        assert_eq!(s.kernel_dim, 1);

        let s = spectral_summary(&eigendecompose(&lap(TopologySpec::Complete { n: 3 })).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        assert!((s.lambda_max - 3.0).abs() < 1e-12);
        assert!((s.lambda_min_plus - 3.0).abs() < 1e-12);
        assert!((s.chi - 1.0).abs() < 1e-12);

        let e = |k: usize| (0..3).map(|i| if i == k { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let tiny = Spectrum::from_parts(vec![0.0, 1e-14, 4.0], vec![e(0), e(1), e(2)]).unwrap();
        let s = spectral_summary(&tiny, 1e-9).unwrap();
        assert_eq!(s.kernel_dim, 2);
        assert_eq!(s.lambda_min_plus, 4.0);

        let zero = eigendecompose(&SymmetricMatrix::zeros(3)).unwrap();
        assert!(matches!(spectral_summary(&zero, 1e-9), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn pinv_form_examples() {
        let s = eigendecompose(&lap(TopologySpec::Path { n: 2 })).unwrap();
        let y = StackedState::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert!((pinv_quadratic_form(&s, &y, 1e-9).unwrap() - 1.0).abs() < 1e-14);

        assert_eq!(pinv_quadratic_form(&s, &StackedState::zeros(2, 1), 1e-9).unwrap(), 0.0);

        let c = StackedState::consensus(2, &[3.0]);
        assert!(matches!(pinv_quadratic_form(&s, &c, 1e-9), Err(Error::KernelComponent { .. })));
    }
}
