//! Geometric multigrid V-cycle for operators on the interior nodes of a
//! uniform cube grid with `2^{p+1} - 1` points per axis.

use crate::error::{Error, Result};
use crate::sparse::{SparseLu, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultigridOptions {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// Damping factor of the Jacobi smoother.
    pub omega: f64,
    /// V-cycles per application.
    pub cycles: usize,
}

impl Default for MultigridOptions {
    fn default() -> Self {
        Self { pre_smooth: 5, post_smooth: 5, omega: 0.7, cycles: 1 }
    }
}

struct Level {
    a: SparseMatrix,
    at: SparseMatrix,
    diag_inv: Vec<f64>,
    /// Prolongation from the next coarser level; absent on the coarsest.
    prolong: Option<SparseMatrix>,
    restrict: Option<SparseMatrix>,
}

/// Galerkin hierarchy with trilinear transfer and a direct coarsest solve.
///
/// `solve_transpose` runs the same cycle on the transposed hierarchy, which is
/// the exact adjoint of `solve` when `pre_smooth == post_smooth`.
pub struct Multigrid {
    levels: Vec<Level>,
    coarse: SparseLu,
    opts: MultigridOptions,
}

fn prolongation_1d(nc: usize) -> Vec<Vec<(usize, f64)>> {
    let nf = 2 * nc + 1;
    (0..nf)
        .map(|i| {
            if i % 2 == 1 {
                vec![(i / 2, 1.0)]
            } else {
                let mut w = Vec::new();
                if i / 2 >= 1 {
                    w.push((i / 2 - 1, 0.5));
                }
                if i / 2 < nc {
                    w.push((i / 2, 0.5));
                }
                w
            }
        })
        .collect()
}

/// Trilinear prolongation from `nc^3` to `(2 nc + 1)^3` interior nodes.
pub fn prolongation(nc: usize) -> SparseMatrix {
    let nf = 2 * nc + 1;
    let p1 = prolongation_1d(nc);
    let mut t = Vec::new();
    for k in 0..nf {
        for j in 0..nf {
            for i in 0..nf {
                let row = i + nf * (j + nf * k);
                for &(ci, wi) in &p1[i] {
                    for &(cj, wj) in &p1[j] {
                        for &(ck, wk) in &p1[k] {
                            t.push((row, ci + nc * (cj + nc * ck), wi * wj * wk));
                        }
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(nf * nf * nf, nc * nc * nc, &t).expect("indices in range")
}

impl Multigrid {
    pub fn new(a: &SparseMatrix, n1d: usize, opts: MultigridOptions) -> Result<Self> {
        if a.nrows() != n1d.pow(3) || a.ncols() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: n1d.pow(3), found: a.nrows() });
        }
        if n1d < 3 || !(n1d + 1).is_power_of_two() {
            return Err(Error::InvalidGrid(format!("multigrid needs 2^k - 1 points per axis, got {n1d}")));
        }
        let mut levels = Vec::new();
        let mut current = a.clone();
        let mut n = n1d;
        while n > 3 {
            let nc = (n - 1) / 2;
            let p = prolongation(nc);
            let r = p.transpose().scale(0.125);
            let coarse = r.matmul(&current)?.matmul(&p)?;
            levels.push(Self::level(current, Some(p), Some(r))?);
            current = coarse;
            n = nc;
        }
        let coarse = SparseLu::factorize(&current)?;
        levels.push(Self::level(current, None, None)?);
        Ok(Self { levels, coarse, opts })
    }

    fn level(a: SparseMatrix, prolong: Option<SparseMatrix>, restrict: Option<SparseMatrix>) -> Result<Level> {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::SingularMatrix { column: i, pivot: 0.0 });
        }
        let at = a.transpose();
        Ok(Level { diag_inv: diag.iter().map(|d| 1.0 / d).collect(), a, at, prolong, restrict })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].a.nrows()
    }

    /// Approximates `A^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.run(b, false)
    }

    /// Approximates `A^{-T} b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.run(b, true)
    }

    fn run(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        let mut x = vec![0.0; b.len()];
        for _ in 0..self.opts.cycles.max(1) {
            self.vcycle(0, b, &mut x, transpose)?;
        }
        Ok(x)
    }

    fn smooth(&self, lev: &Level, b: &[f64], x: &mut [f64], steps: usize, transpose: bool) {
        let a = if transpose { &lev.at } else { &lev.a };
        let mut ax = vec![0.0; x.len()];
        for _ in 0..steps {
            a.spmv_into(x, &mut ax);
            for i in 0..x.len() {
                x[i] += self.opts.omega * lev.diag_inv[i] * (b[i] - ax[i]);
            }
        }
    }

    fn vcycle(&self, depth: usize, b: &[f64], x: &mut [f64], transpose: bool) -> Result<()> {
        let lev = &self.levels[depth];
        let (Some(p), Some(r)) = (&lev.prolong, &lev.restrict) else {
            let sol = if transpose { self.coarse.solve_transpose(b)? } else { self.coarse.solve(b)? };
            x.copy_from_slice(&sol);
            return Ok(());
        };
        let a = if transpose { &lev.at } else { &lev.a };
        self.smooth(lev, b, x, self.opts.pre_smooth, transpose);
        let mut res = a.spmv(x)?;
        for (ri, bi) in res.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let rc = r.spmv(&res)?;
        let mut ec = vec![0.0; rc.len()];
        self.vcycle(depth + 1, &rc, &mut ec, transpose)?;
        p.spmv_add(1.0, &ec, x);
        self.smooth(lev, b, x, self.opts.post_smooth, transpose);
        Ok(())
    }
}
