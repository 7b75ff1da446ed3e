use crate::error::{Error, Result};
use crate::sparse::operator::{check_dims, LinearOperator};
use crate::sparse::ordering::reverse_cuthill_mckee;
use crate::sparse::SparseMatrix;

/// Pivots smaller than this times the column's max magnitude are treated as zero.
pub const SINGULAR_TOL: f64 = 1e-13;

/// Relative threshold below which the diagonal entry loses its pivot preference.
const DIAG_PREFERENCE: f64 = 0.1;

/// Column-compressed triangular factor.
#[derive(Clone, Debug)]
struct Csc {
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

/// Sparse LU factorization `P A Q = L U` computed column by column
/// (left-looking, sparse triangular solves driven by a depth-first reach).
///
/// `L` is unit lower triangular with its unit diagonal stored first in each
/// column; `U` stores its diagonal last in each column.
#[derive(Clone, Debug)]
pub struct SparseLu {
    n: usize,
    l: Csc,
    u: Csc,
    /// `pinv[i]` is the pivot position of original row `i`.
    pinv: Vec<usize>,
    /// `q[k]` is the original column eliminated at step `k`.
    q: Vec<usize>,
    /// Every pivot was taken on the diagonal.
    symmetric: bool,
}

impl SparseLu {
    /// Factorizes with a reverse Cuthill-McKee column ordering.
    pub fn factorize(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
        }
        let q = reverse_cuthill_mckee(a);
        Self::factorize_with_ordering(a, q)
    }

    /// Factorizes with a caller-supplied column ordering.
    pub fn factorize_with_ordering(a: &SparseMatrix, q: Vec<usize>) -> Result<Self> {
        Self::factorize_impl(a, q, false)
    }

    /// Factorizes a symmetric matrix with diagonal pivots only, so that the
    /// factorization is `P A P^T = L D L^T` and [`SparseLu::inertia`] applies.
    pub fn factorize_symmetric(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare { nrows: a.nrows(), ncols: a.ncols() });
        }
        let q = reverse_cuthill_mckee(a);
        Self::factorize_impl(a, q, true)
    }

    fn factorize_impl(a: &SparseMatrix, q: Vec<usize>, diagonal_only: bool) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::NotSquare { nrows: n, ncols: a.ncols() });
        }
        if q.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: q.len() });
        }
        // CSC of A is the CSR of A^T
        let at = a.transpose();
        let (ap, ai, ax) = (at.row_ptr(), at.col_idx(), at.values());

        let guess = 4 * a.nnz() + n;
        let mut l = Csc { colptr: Vec::with_capacity(n + 1), rowind: Vec::with_capacity(guess), values: Vec::with_capacity(guess) };
        let mut u = Csc { colptr: Vec::with_capacity(n + 1), rowind: Vec::with_capacity(guess), values: Vec::with_capacity(guess) };
        const UNSET: usize = usize::MAX;
        let mut pinv = vec![UNSET; n];
        let mut x = vec![0.0; n];
        let mut mark = vec![UNSET; n];
        let mut topo: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            l.colptr.push(l.rowind.len());
            u.colptr.push(u.rowind.len());
            let col = q[k];
            let range = ap[col]..ap[col + 1];

            // reach of the column pattern in the graph of L, in topological order
            topo.clear();
            for &start in &ai[range.clone()] {
                if mark[start] == k {
                    continue;
                }
                mark[start] = k;
                stack.push((start, 0));
                while let Some(top) = stack.len().checked_sub(1) {
                    let (node, child) = stack[top];
                    let j = pinv[node];
                    let mut next_node = None;
                    if j != UNSET {
                        let lo = l.colptr[j] + 1;
                        let hi = l.colptr[j + 1];
                        let mut c = child;
                        while lo + c < hi {
                            let next = l.rowind[lo + c];
                            c += 1;
                            if mark[next] != k {
                                next_node = Some(next);
                                break;
                            }
                        }
                        stack[top].1 = c;
                    }
                    match next_node {
                        Some(next) => {
                            mark[next] = k;
                            stack.push((next, 0));
                        }
                        None => {
                            stack.pop();
                            topo.push(node);
                        }
                    }
                }
            }

            let mut colmax = 0.0f64;
            for (&i, &v) in ai[range.clone()].iter().zip(&ax[range]) {
                x[i] = v;
                colmax = colmax.max(v.abs());
            }

            // x = L \ A(:, col) restricted to the reach
            for &node in topo.iter().rev() {
                let j = pinv[node];
                if j == UNSET {
                    continue;
                }
                let xj = x[node];
                let lo = l.colptr[j] + 1;
                let hi = l.colptr[j + 1];
                for p in lo..hi {
                    x[l.rowind[p]] -= l.values[p] * xj;
                }
            }

            // split into U entries and pivot candidates
            let mut best = UNSET;
            let mut best_abs = -1.0f64;
            for &node in topo.iter() {
                if pinv[node] == UNSET {
                    let v = x[node].abs();
                    if v > best_abs {
                        best_abs = v;
                        best = node;
                    }
                } else {
                    u.rowind.push(pinv[node]);
                    u.values.push(x[node]);
                }
            }
            if best == UNSET || best_abs <= SINGULAR_TOL * colmax || colmax == 0.0 {
                return Err(Error::SingularMatrix { column: col, pivot: best_abs.max(0.0) });
            }
            if diagonal_only {
                if pinv[col] != UNSET || mark[col] != k || x[col].abs() <= SINGULAR_TOL * colmax {
                    return Err(Error::SingularMatrix { column: col, pivot: if mark[col] == k { x[col].abs() } else { 0.0 } });
                }
                best = col;
            } else if pinv[col] == UNSET && mark[col] == k && x[col].abs() >= DIAG_PREFERENCE * best_abs {
                best = col;
            }
            let pivot = x[best];
            pinv[best] = k;
            u.rowind.push(k);
            u.values.push(pivot);
            l.rowind.push(best);
            l.values.push(1.0);
            for &node in topo.iter() {
                if pinv[node] == UNSET {
                    l.rowind.push(node);
                    l.values.push(x[node] / pivot);
                }
                x[node] = 0.0;
            }
        }
        l.colptr.push(l.rowind.len());
        u.colptr.push(u.rowind.len());
        for r in &mut l.rowind {
            *r = pinv[*r];
        }
        let symmetric = (0..n).all(|k| pinv[q[k]] == k);
        Ok(Self { n, l, u, pinv, q, symmetric })
    }

    /// `(positive, negative)` pivot counts when every pivot was diagonal; for
    /// a symmetric matrix this is its inertia.
    pub fn inertia(&self) -> Option<(usize, usize)> {
        if !self.symmetric {
            return None;
        }
        let mut pos = 0;
        for k in 0..self.n {
            if self.u.values[self.u.colptr[k + 1] - 1] > 0.0 {
                pos += 1;
            }
        }
        Some((pos, self.n - pos))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in `L` and `U` together.
    pub fn fill(&self) -> usize {
        self.l.values.len() + self.u.values.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x)?;
        Ok(x)
    }

    pub fn solve_into(&self, b: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(b, out)?;
        let mut w = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            w[self.pinv[i]] = bi;
        }
        let (l, u) = (&self.l, &self.u);
        for j in 0..self.n {
            let wj = w[j];
            if wj != 0.0 {
                for p in l.colptr[j] + 1..l.colptr[j + 1] {
                    w[l.rowind[p]] -= l.values[p] * wj;
                }
            }
        }
        for j in (0..self.n).rev() {
            let last = u.colptr[j + 1] - 1;
            w[j] /= u.values[last];
            let wj = w[j];
            if wj != 0.0 {
                for p in u.colptr[j]..last {
                    w[u.rowind[p]] -= u.values[p] * wj;
                }
            }
        }
        for (k, &c) in self.q.iter().enumerate() {
            out[c] = w[k];
        }
        Ok(())
    }

    /// Solves `A^T x = b` with the same factors.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.n];
        self.solve_transpose_into(b, &mut x)?;
        Ok(x)
    }

    pub fn solve_transpose_into(&self, b: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(b, out)?;
        let mut w: Vec<f64> = self.q.iter().map(|&c| b[c]).collect();
        let (l, u) = (&self.l, &self.u);
        for j in 0..self.n {
            let last = u.colptr[j + 1] - 1;
            let mut s = w[j];
            for p in u.colptr[j]..last {
                s -= u.values[p] * w[u.rowind[p]];
            }
            w[j] = s / u.values[last];
        }
        for j in (0..self.n).rev() {
            let mut s = w[j];
            for p in l.colptr[j] + 1..l.colptr[j + 1] {
                s -= l.values[p] * w[l.rowind[p]];
            }
            w[j] = s;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = w[self.pinv[i]];
        }
        Ok(())
    }

    fn check(&self, b: &[f64], out: &[f64]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.len() });
        }
        if out.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: out.len() });
        }
        Ok(())
    }
}

/// `A^{-1}` as an operator.
pub struct LuInverse<'a>(pub &'a SparseLu);

impl LinearOperator for LuInverse<'_> {
    fn nrows(&self) -> usize {
        self.0.dim()
    }

    fn ncols(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_dims(self, x, y)?;
        self.0.solve_into(x, y)
    }
}
