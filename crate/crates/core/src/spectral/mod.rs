//! Second-largest eigenvalue modulus of row-stochastic matrices and the
//! slow-down factor of the second-order shipment chain.
//!
//! The spectrum of a reducible matrix is the union of the spectra of its
//! strongly connected blocks, so the matrix is split with Tarjan's algorithm
//! first. Blocks up to [`DENSE_LIMIT`] states are solved densely; larger ones
//! fall back to power iteration.

pub mod dense;
mod slowdown;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

pub use dense::{eigenvalues, Complex, DenseMatrix};
pub use slowdown::{
    bootstrap_slowdown, slowdown_factor, write_slowdown_csv, ChainBuilder, SlowdownResult, SlowdownRow,
};

pub const DENSE_LIMIT: usize = 500;
const DEGENERACY_GAP: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum SpectralError {
    #[error("row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("eigenvalue iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("second eigenvalue modulus {0} is not below 1; convergence time undefined")]
    Degenerate(f64),
    #[error(transparent)]
    Tensor(#[from] crate::tensors::TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate coordinates are summed; explicit zeros are dropped.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        t.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            assert!(i < n && j < n, "index out of range");
            if last == Some((i, j)) {
                *values.last_mut().expect("present") += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let mut m = SparseMatrix {
            n,
            indptr,
            indices,
            values,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let mut indptr = vec![0; self.n + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                if self.values[p] != 0.0 {
                    indices.push(self.indices[p]);
                    values.push(self.values[p]);
                }
            }
            indptr[i + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let n = m.n;
        SparseMatrix::from_triplets(
            n,
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, m.get(i, j))),
        )
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |p| (self.indices[p], self.values[p]))
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|e| e.1).sum()).collect()
    }

    pub fn max_row_error(&self) -> f64 {
        self.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// `y = x^T M`.
    pub fn left_mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += xi * v;
                }
            }
        }
    }

    /// Applies `self` to the powers of a probability row vector.
    pub fn step_distribution(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.left_mul(p, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Every block was solved densely or is a single state.
    Dense,
    /// At least one block needed power iteration.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEstimate {
    pub modulus: f64,
    /// `|λ2|` is within `1e-9` of `|λ1| = 1`.
    pub degenerate: bool,
    pub method: EigenMethod,
}

/// Modulus of the second-largest-magnitude eigenvalue of a row-stochastic
/// matrix. The leading eigenvalue is 1; one copy of it is removed and the
/// largest remaining modulus is returned.
pub fn second_eigenvalue(m: &SparseMatrix, tol: f64) -> Result<EigenEstimate, SpectralError> {
    for (row, sum) in m.row_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > 1e-10 {
            return Err(SpectralError::NotStochastic { row, sum });
        }
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(m.n, m.nnz());
    let ids: Vec<_> = (0..m.n).map(|_| graph.add_node(())).collect();
    for i in 0..m.n {
        for (j, _) in m.row(i) {
            graph.add_edge(ids[i], ids[j], ());
        }
    }
    let mut moduli: Vec<f64> = Vec::new();
    let mut method = EigenMethod::Dense;
    let mut position = vec![usize::MAX; m.n];
    for comp in tarjan_scc(&graph) {
        let states: Vec<usize> = comp.iter().map(|n| n.index()).collect();
        if states.len() == 1 {
            let s = states[0];
            moduli.push(m.row(s).find(|e| e.0 == s).map_or(0.0, |e| e.1.abs()));
            continue;
        }
        for (p, &s) in states.iter().enumerate() {
            position[s] = p;
        }
        let mut closed = true;
        let mut triplets = Vec::new();
        for (p, &s) in states.iter().enumerate() {
            let mut inside = 0.0;
            for (j, v) in m.row(s) {
                if position[j] != usize::MAX {
                    triplets.push((p, position[j], v));
                    inside += v;
                }
            }
            if (inside - 1.0).abs() > 1e-12 {
                closed = false;
            }
        }
        let block = SparseMatrix::from_triplets(states.len(), triplets);
        for &s in &states {
            position[s] = usize::MAX;
        }
        if states.len() <= DENSE_LIMIT {
            let ev = dense::eigenvalues(&block.to_dense()).ok_or(SpectralError::NoConvergence(300))?;
            moduli.extend(ev.into_iter().map(Complex::modulus));
        } else if closed {
            method = EigenMethod::Iterative;
            moduli.push(1.0);
            moduli.push(deflated_power(&block, tol)?);
        } else {
            method = EigenMethod::Iterative;
            moduli.push(perron_root(&block, tol)?);
        }
    }
    moduli.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let modulus = moduli.get(1).copied().unwrap_or(0.0).min(1.0);
    Ok(EigenEstimate {
        modulus,
        degenerate: modulus > 1.0 - DEGENERACY_GAP,
        method,
    })
}

const MAX_ITER: usize = 200_000;

/// Spectral radius of an irreducible non-negative block, by power iteration
/// on `Q + I` with Collatz–Wielandt bounds.
fn perron_root(q: &SparseMatrix, tol: f64) -> Result<f64, SpectralError> {
    let n = q.n;
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    for _ in 0..MAX_ITER {
        q.left_mul(&x, &mut y);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let ratio = y[i] / x[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let mut norm = 0.0;
        for i in 0..n {
            y[i] += x[i];
            norm += y[i];
        }
        for i in 0..n {
            x[i] = y[i] / norm;
        }
    }
    Err(SpectralError::NoConvergence(MAX_ITER))
}

/// Second eigenvalue modulus of an irreducible stochastic block. Row vectors
/// whose entries sum to zero stay orthogonal to the all-ones right
/// eigenvector, which removes the leading eigenvalue from the iteration.
fn deflated_power(p: &SparseMatrix, tol: f64) -> Result<f64, SpectralError> {
    let n = p.n;
    let mut x: Vec<f64> = (0..n).map(|i| ((i * 7919 % 104729) as f64).sin()).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut prev = f64::NAN;
    for it in 0..MAX_ITER {
        p.left_mul(&x, &mut y);
        p.left_mul(&y, &mut z);
        // re-project against rounding drift
        let mean = z.iter().sum::<f64>() / n as f64;
        z.iter_mut().for_each(|v| *v -= mean);
        let nz = norm(&z);
        if nz == 0.0 {
            return Ok(0.0);
        }
        let estimate = nz.sqrt();
        if it > 10 && (estimate - prev).abs() <= tol * 0.01 {
            return Ok(estimate);
        }
        prev = estimate;
        for i in 0..n {
            x[i] = z[i] / nz;
        }
    }
    Err(SpectralError::NoConvergence(MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_triangular_two_state() {
        let m = SparseMatrix::from_dense(&DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]));
        let e = second_eigenvalue(&m, 1e-12).unwrap();
        assert_eq!(e.modulus, 0.5);
        assert!(!e.degenerate);
    }

    #[test]
    fn identity_is_degenerate() {
        let m = SparseMatrix::from_triplets(3, (0..3).map(|i| (i, i, 1.0)));
        let e = second_eigenvalue(&m, 1e-12).unwrap();
        assert_eq!(e.modulus, 1.0);
        assert!(e.degenerate);
    }

    #[test]
    fn rejects_non_stochastic() {
        let m = SparseMatrix::from_triplets(2, [(0, 0, 0.5), (1, 1, 1.0)]);
        assert!(matches!(
            second_eigenvalue(&m, 1e-12),
            Err(SpectralError::NotStochastic { row: 0, .. })
        ));
    }

    #[test]
    fn iterative_paths_agree_with_dense() {
        // two-state cycle with laziness inside a transient block, plus absorption
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, (i + 1) % (n - 1), 0.6));
            t.push((i, i, 0.3));
            t.push((i, n - 1, 0.1));
        }
        t.push((n - 1, n - 1, 1.0));
        let m = SparseMatrix::from_triplets(n, t);
        let dense = second_eigenvalue(&m, 1e-13).unwrap().modulus;
        let block = SparseMatrix::from_triplets(
            n - 1,
            (0..n - 1).flat_map(|i| [(i, (i + 1) % (n - 1), 0.6), (i, i, 0.3)]),
        );
        let rho = perron_root(&block, 1e-13).unwrap();
        assert!((rho - 0.9).abs() < 1e-12);
        assert!((dense - 0.9).abs() < 1e-12);

        let ring = SparseMatrix::from_triplets(
            5,
            (0..5).flat_map(|i| [(i, (i + 1) % 5, 0.5), (i, (i + 4) % 5, 0.5)]),
        );
        let want = (2.0 * std::f64::consts::PI / 5.0).cos().abs().max((4.0 * std::f64::consts::PI / 5.0).cos().abs());
        let got = deflated_power(&ring, 1e-12).unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}
