//! Factorized active-set Schur complement approximation and the
//! preconditioners built on it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::DiscreteProblem;
use crate::kkt::ActiveSet;
use crate::sparse::operator::check_dims;
use crate::sparse::{LinearOperator, Multigrid, MultigridOptions, SparseLu, SparseMatrix};

/// `(gamma1, gamma2) = (ay^2 nu, au^2) / (ay^2 nu + au^2)`.
pub fn gammas(nu: f64, alpha_u: f64, alpha_y: f64) -> Result<(f64, f64)> {
    if !(nu > 0.0) {
        return Err(Error::InvalidProblem(format!("nu must be positive, got {nu}")));
    }
    let s = alpha_y * alpha_y * nu + alpha_u * alpha_u;
    if !(s > 0.0) {
        return Err(Error::InvalidProblem("alpha_u and alpha_y are both zero".into()));
    }
    let g1 = alpha_y * alpha_y * nu / s;
    Ok((g1, 1.0 - g1))
}

/// How systems with `L1` and `L1^T` are solved.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum InnerSolverPolicy {
    #[default]
    Direct,
    Multigrid(MultigridOptions),
}

pub enum InnerSolver {
    Direct(SparseLu),
    Multigrid(Multigrid),
}

impl InnerSolver {
    pub fn new(a: &SparseMatrix, n1d: usize, policy: InnerSolverPolicy) -> Result<Self> {
        Ok(match policy {
            InnerSolverPolicy::Direct => InnerSolver::Direct(SparseLu::factorize(a)?),
            InnerSolverPolicy::Multigrid(opts) => InnerSolver::Multigrid(Multigrid::new(a, n1d, opts)?),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            InnerSolver::Direct(lu) => lu.solve(b),
            InnerSolver::Multigrid(mg) => mg.solve(b),
        }
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            InnerSolver::Direct(lu) => lu.solve_transpose(b),
            InnerSolver::Multigrid(mg) => mg.solve_transpose(b),
        }
    }
}

/// `L1 = sqrt(nu) L (I - g1 Pi)^{1/2} + (I - g2 Pi)^{1/2} M`.
pub fn build_l1(problem: &DiscreteProblem, active: &ActiveSet, gamma1: f64, gamma2: f64) -> SparseMatrix {
    let pi = active.pi();
    let s1: Vec<f64> = pi.iter().map(|p| (1.0 - gamma1 * p).max(0.0).sqrt()).collect();
    let s2m: Vec<f64> = pi.iter().zip(&problem.m).map(|(p, m)| (1.0 - gamma2 * p).max(0.0).sqrt() * m).collect();
    problem.l.scale_columns(&s1).scale(problem.nu().sqrt()).add_diagonal(&s2m)
}

/// Factorized approximation of the active-set Schur complement
///
/// `S_hat = (1/nu) R blkdiag(L1 M^{-1} L1^T, s P M^{-1} P^T) R^T`,
/// `R = [I E; 0 I]`, `s = ay^2 nu + au^2`.
pub struct SchurFactor {
    pub gamma1: f64,
    pub gamma2: f64,
    pub l1: SparseMatrix,
    pub solver: InnerSolver,
    /// `E = (ay nu L P^T - au M P^T) / s`, size `n x n_A`.
    pub coupling: SparseMatrix,
    pub coupling_t: SparseMatrix,
    /// Diagonal of `s P M^{-1} P^T`.
    pub trailing_diag: Vec<f64>,
    pub nu: f64,
    pub m: Vec<f64>,
    pub active: ActiveSet,
}

impl SchurFactor {
    pub fn build(problem: &DiscreteProblem, active: &ActiveSet, policy: InnerSolverPolicy) -> Result<Self> {
        let n = problem.n();
        if active.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: active.n() });
        }
        let (nu, au, ay) = (problem.nu(), problem.alpha_u(), problem.alpha_y());
        let (gamma1, gamma2) = gammas(nu, au, ay)?;
        let s = ay * ay * nu + au * au;
        let l1 = build_l1(problem, active, gamma1, gamma2);
        let solver = InnerSolver::new(&l1, problem.grid.n1d, policy)?;

        let lp = problem.l.select_columns(&active.active).scale(ay * nu / s);
        let mut t: Vec<(usize, usize, f64)> = if ay != 0.0 { lp.triplets().collect() } else { Vec::new() };
        for (k, &i) in active.active.iter().enumerate() {
            t.push((i, k, -au * problem.m[i] / s));
        }
        let coupling = SparseMatrix::from_triplets(n, active.n_active(), &t)?;
        let trailing_diag = active.active.iter().map(|&i| s / problem.m[i]).collect();
        Ok(Self {
            gamma1,
            gamma2,
            coupling_t: coupling.transpose(),
            coupling,
            l1,
            solver,
            trailing_diag,
            nu,
            m: problem.m.clone(),
            active: active.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn dim(&self) -> usize {
        self.n() + self.active.n_active()
    }

    /// `(L1 M^{-1} L1^T)^{-1} r = L1^{-T} M L1^{-1} r`.
    pub fn apply_small_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut w = self.solver.solve(r)?;
        for (wi, mi) in w.iter_mut().zip(&self.m) {
            *wi *= mi;
        }
        self.solver.solve_transpose(&w)
    }

    /// `L1 M^{-1} L1^T x`.
    pub fn apply_small(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut w = self.l1.spmv_transpose(x)?;
        for (wi, mi) in w.iter_mut().zip(&self.m) {
            *wi /= mi;
        }
        self.l1.spmv(&w)
    }

    /// `S_hat^{-1} r` for `r` of length `n + n_A`.
    pub fn apply_shat_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if r.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: r.len() });
        }
        let (r1, r2) = r.split_at(n);
        let mut t1 = r1.to_vec();
        self.coupling.spmv_add(-1.0, r2, &mut t1);
        let w1 = self.apply_small_inverse(&t1)?;
        let mut z = Vec::with_capacity(self.dim());
        z.extend(w1.iter().map(|v| v * self.nu));
        let etw = self.coupling_t.spmv(&w1)?;
        for k in 0..r2.len() {
            z.push(self.nu * (r2[k] / self.trailing_diag[k] - etw[k]));
        }
        Ok(z)
    }

    /// `S_hat x`.
    pub fn apply_shat(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let (x1, x2) = x.split_at(n);
        // R^T x
        let mut t2 = x2.to_vec();
        self.coupling_t.spmv_add(1.0, x1, &mut t2);
        let w1 = self.apply_small(x1)?;
        let w2: Vec<f64> = t2.iter().zip(&self.trailing_diag).map(|(a, d)| a * d).collect();
        let mut z1 = w1;
        self.coupling.spmv_add(1.0, &w2, &mut z1);
        let inv_nu = 1.0 / self.nu;
        Ok(z1.iter().chain(&w2).map(|v| v * inv_nu).collect())
    }

    /// Dense `L1 M^{-1} L1^T`.
    pub fn small_dense(&self) -> DMatrix<f64> {
        let l1 = self.l1.to_dense();
        let minv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(self.n(), self.m.iter().map(|m| 1.0 / m)));
        &l1 * minv * l1.transpose()
    }

    /// Dense full `S_hat` of size `n + n_A`.
    pub fn shat_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let na = self.active.n_active();
        let mut r = DMatrix::identity(n + na, n + na);
        r.view_mut((0, n), (n, na)).copy_from(&self.coupling.to_dense());
        let mut mid = DMatrix::zeros(n + na, n + na);
        mid.view_mut((0, 0), (n, n)).copy_from(&self.small_dense());
        for k in 0..na {
            mid[(n + k, n + k)] = self.trailing_diag[k];
        }
        (&r * mid * r.transpose()) / self.nu
    }
}

/// Applies `y <- B t` with `B = [L -M; ay P au P]`, `t = (ty, tu)`.
fn apply_b(problem: &DiscreteProblem, active: &ActiveSet, t: &[f64]) -> Result<Vec<f64>> {
    let n = problem.n();
    let (ty, tu) = t.split_at(n);
    let mut out = problem.l.spmv(ty)?;
    for i in 0..n {
        out[i] -= problem.m[i] * tu[i];
    }
    let (au, ay) = (problem.alpha_u(), problem.alpha_y());
    out.extend(active.active.iter().map(|&i| ay * ty[i] + au * tu[i]));
    Ok(out)
}

/// Applies `B^T z` with `z = (zp, zmu)`.
fn apply_bt(problem: &DiscreteProblem, active: &ActiveSet, z: &[f64]) -> Result<Vec<f64>> {
    let n = problem.n();
    let (zp, zmu) = z.split_at(n);
    let mut top = problem.lt.spmv(zp)?;
    let mut bottom: Vec<f64> = zp.iter().zip(&problem.m).map(|(v, m)| -m * v).collect();
    let (au, ay) = (problem.alpha_u(), problem.alpha_y());
    for (k, &i) in active.active.iter().enumerate() {
        top[i] += ay * zmu[k];
        bottom[i] += au * zmu[k];
    }
    top.extend(bottom);
    Ok(top)
}

/// `A^{-1}` with `A = blkdiag(M, nu M)`.
fn apply_a_inverse(problem: &DiscreteProblem, r: &[f64]) -> Vec<f64> {
    let n = problem.n();
    let nu = problem.nu();
    r.iter()
        .enumerate()
        .map(|(i, v)| if i < n { v / problem.m[i] } else { v / (nu * problem.m[i - n]) })
        .collect()
}

/// Inverse of the indefinite preconditioner
/// `[I 0; B A^{-1} I] blkdiag(A, -S_hat) [I A^{-1} B^T; 0 I]`.
pub struct IpfPreconditioner<'a> {
    pub problem: &'a DiscreteProblem,
    pub factor: &'a SchurFactor,
}

impl<'a> IpfPreconditioner<'a> {
    pub fn new(problem: &'a DiscreteProblem, factor: &'a SchurFactor) -> Self {
        Self { problem, factor }
    }
}

impl LinearOperator for IpfPreconditioner<'_> {
    fn nrows(&self) -> usize {
        2 * self.problem.n() + self.factor.dim()
    }

    fn ncols(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        check_dims(self, r, z)?;
        let n2 = 2 * self.problem.n();
        let active = &self.factor.active;
        let t1 = apply_a_inverse(self.problem, &r[..n2]);
        let bt1 = apply_b(self.problem, active, &t1)?;
        let t2: Vec<f64> = r[n2..].iter().zip(&bt1).map(|(a, b)| a - b).collect();
        let z2: Vec<f64> = self.factor.apply_shat_inverse(&t2)?.into_iter().map(|v| -v).collect();
        let corr = apply_a_inverse(self.problem, &apply_bt(self.problem, active, &z2)?);
        for i in 0..n2 {
            z[i] = t1[i] - corr[i];
        }
        z[n2..].copy_from_slice(&z2);
        Ok(())
    }
}

/// Inverse of the block-diagonal preconditioner `blkdiag(A, S_hat)`.
pub struct BdfPreconditioner<'a> {
    pub problem: &'a DiscreteProblem,
    pub factor: &'a SchurFactor,
}

impl<'a> BdfPreconditioner<'a> {
    pub fn new(problem: &'a DiscreteProblem, factor: &'a SchurFactor) -> Self {
        Self { problem, factor }
    }
}

impl LinearOperator for BdfPreconditioner<'_> {
    fn nrows(&self) -> usize {
        2 * self.problem.n() + self.factor.dim()
    }

    fn ncols(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        check_dims(self, r, z)?;
        let n2 = 2 * self.problem.n();
        z[..n2].copy_from_slice(&apply_a_inverse(self.problem, &r[..n2]));
        z[n2..].copy_from_slice(&self.factor.apply_shat_inverse(&r[n2..])?);
        Ok(())
    }
}

/// Dense `J`, `P^IPF` and `P^BDF` for small problems.
pub fn dense_preconditioners(
    problem: &DiscreteProblem,
    factor: &SchurFactor,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = problem.n();
    let dim = 2 * n + factor.dim();
    let n2 = 2 * n;
    let mut a = DMatrix::zeros(n2, n2);
    for i in 0..n {
        a[(i, i)] = problem.m[i];
        a[(n + i, n + i)] = problem.nu() * problem.m[i];
    }
    let mut b = DMatrix::zeros(factor.dim(), n2);
    for j in 0..n2 {
        let mut e = vec![0.0; n2];
        e[j] = 1.0;
        let col = apply_b(problem, &factor.active, &e)?;
        for (i, v) in col.into_iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    let shat = factor.shat_dense();
    let ainv = DMatrix::from_diagonal(&a.diagonal().map(|v| 1.0 / v));
    let mut ipf = DMatrix::zeros(dim, dim);
    ipf.view_mut((0, 0), (n2, n2)).copy_from(&a);
    ipf.view_mut((0, n2), (n2, factor.dim())).copy_from(&b.transpose());
    ipf.view_mut((n2, 0), (factor.dim(), n2)).copy_from(&b);
    ipf.view_mut((n2, n2), (factor.dim(), factor.dim())).copy_from(&(&b * ainv * b.transpose() - &shat));
    let mut bdf = DMatrix::zeros(dim, dim);
    bdf.view_mut((0, 0), (n2, n2)).copy_from(&a);
    bdf.view_mut((n2, n2), (factor.dim(), factor.dim())).copy_from(&shat);
    Ok((ipf, bdf))
}

/// Dense matrices of the Schur analysis.
pub struct DenseSchur {
    /// `B A^{-1} B^T`, size `n + n_A`.
    pub s: DMatrix<f64>,
    /// Leading block after the `R` congruence (nu-scaled).
    pub s_bb: DMatrix<f64>,
    /// `L1 M^{-1} L1^T`.
    pub s_hat: DMatrix<f64>,
    /// `F(I - Pi) + (I - Pi) F^T`.
    pub g: DMatrix<f64>,
    /// `F(I - g1 Pi)F^T + (I - g2 Pi) + sqrt(g1 g2)(F Pi + Pi F^T)`.
    pub h: DMatrix<f64>,
    /// `M^{-1/2} S_hat M^{-1/2}`.
    pub h_hat: DMatrix<f64>,
    /// `sqrt(nu) M^{-1/2} L M^{-1/2}`.
    pub f: DMatrix<f64>,
}

pub const DENSE_LIMIT: usize = 4000;

pub fn build_true_schur_dense(problem: &DiscreteProblem, active: &ActiveSet) -> Result<DenseSchur> {
    let n = problem.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge("dense Schur build", n, DENSE_LIMIT));
    }
    let (nu, au, ay) = (problem.nu(), problem.alpha_u(), problem.alpha_y());
    let (g1, g2) = gammas(nu, au, ay)?;
    let s_coef = ay * ay * nu + au * au;
    let l = problem.l.to_dense();
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&problem.m));
    let minv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, problem.m.iter().map(|v| 1.0 / v)));
    let mhalf_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, problem.m.iter().map(|v| 1.0 / v.sqrt())));
    let pi = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(active.pi()));
    let eye = DMatrix::<f64>::identity(n, n);
    let na = active.n_active();
    let mut p = DMatrix::zeros(na, n);
    for (k, &i) in active.active.iter().enumerate() {
        p[(k, i)] = 1.0;
    }

    // B A^{-1} B^T directly
    let mut bmat = DMatrix::zeros(n + na, 2 * n);
    bmat.view_mut((0, 0), (n, n)).copy_from(&l);
    bmat.view_mut((0, n), (n, n)).copy_from(&(-&m));
    bmat.view_mut((n, 0), (na, n)).copy_from(&(&p * ay));
    bmat.view_mut((n, n), (na, n)).copy_from(&(&p * au));
    let mut ainv = DMatrix::zeros(2 * n, 2 * n);
    ainv.view_mut((0, 0), (n, n)).copy_from(&minv);
    ainv.view_mut((n, n), (n, n)).copy_from(&(&minv / nu));
    let s = &bmat * ainv * bmat.transpose();

    let k = (&l * &minv) * (ay * nu) - &eye * au;
    let s_bb = &l * &minv * l.transpose() * nu + &m - (&k * &pi * &m * &pi * k.transpose()) / s_coef;

    let sq1 = DMatrix::from_diagonal(&(&eye - &pi * g1).diagonal().map(|v| v.max(0.0).sqrt()));
    let sq2 = DMatrix::from_diagonal(&(&eye - &pi * g2).diagonal().map(|v| v.max(0.0).sqrt()));
    let l1 = &l * sq1 * nu.sqrt() + sq2 * &m;
    let s_hat = &l1 * &minv * l1.transpose();

    let f = &mhalf_inv * &l * &mhalf_inv * nu.sqrt();
    let g = &f * (&eye - &pi) + (&eye - &pi) * f.transpose();
    let h = &f * (&eye - &pi * g1) * f.transpose() + (&eye - &pi * g2) + (&f * &pi + &pi * f.transpose()) * (g1 * g2).sqrt();
    let h_hat = &mhalf_inv * &s_hat * &mhalf_inv;
    Ok(DenseSchur { s, s_bb, s_hat, g, h, h_hat, f })
}

/// Reduced control-constrained system on `(y, u_I, -p)` with `u_A` fixed at its bound:
///
/// ```text
/// [ M    0          -L^T    ]
/// [ 0    nu M_II    M_{I,:} ]
/// [ -L   M_{:,I}    0       ]
/// ```
pub struct ReducedSystem<'a> {
    pub problem: &'a DiscreteProblem,
    pub active: ActiveSet,
    /// Bound values on the active nodes, in `active.active` order.
    pub fixed: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(problem: &'a DiscreteProblem, active: &ActiveSet) -> Result<Self> {
        if problem.alpha_u() != 1.0 || problem.alpha_y() != 0.0 {
            return Err(Error::Unsupported("the reduced block-triangular path handles control constraints only".into()));
        }
        let n = problem.n();
        let pos = active.positions();
        let mut fixed = vec![0.0; active.n_active()];
        for &i in &active.upper {
            fixed[pos[i].unwrap()] = problem.b[i].ok_or_else(|| Error::InvalidProblem(format!("no upper bound at {i}")))?;
        }
        for &i in &active.lower {
            fixed[pos[i].unwrap()] = problem.a[i].ok_or_else(|| Error::InvalidProblem(format!("no lower bound at {i}")))?;
        }
        let ni = active.inactive.len();
        let mut rhs = vec![0.0; 2 * n + ni];
        for i in 0..n {
            rhs[i] = problem.m[i] * problem.y_d[i];
            rhs[n + ni + i] = problem.d[i];
        }
        for (k, &i) in active.active.iter().enumerate() {
            rhs[n + ni + i] -= problem.m[i] * fixed[k];
        }
        Ok(Self { problem, active: active.clone(), fixed, rhs })
    }

    pub fn dim(&self) -> usize {
        2 * self.problem.n() + self.active.inactive.len()
    }

    /// Reduced unknowns from a full Newton vector `(y, u, p, mu_A)`.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let n = self.problem.n();
        let mut x = full[..n].to_vec();
        x.extend(self.active.inactive.iter().map(|&i| full[n + i]));
        x.extend(full[2 * n..3 * n].iter().map(|v| -v));
        x
    }

    /// Full Newton vector `(y, u, p, mu_A)` from reduced unknowns.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let n = self.problem.n();
        let ni = self.active.inactive.len();
        let mut u = vec![0.0; n];
        for (k, &i) in self.active.inactive.iter().enumerate() {
            u[i] = x[n + k];
        }
        for (k, &i) in self.active.active.iter().enumerate() {
            u[i] = self.fixed[k];
        }
        let p: Vec<f64> = x[n + ni..].iter().map(|v| -v).collect();
        let nu = self.problem.nu();
        let mu: Vec<f64> = self
            .active
            .active
            .iter()
            .zip(&self.fixed)
            .map(|(&i, g)| self.problem.m[i] * (p[i] - nu * g))
            .collect();
        let mut full = x[..n].to_vec();
        full.extend(u);
        full.extend(p);
        full.extend(mu);
        full
    }

    fn split<'b>(&self, x: &'b [f64]) -> (&'b [f64], &'b [f64], &'b [f64]) {
        let n = self.problem.n();
        let ni = self.active.inactive.len();
        (&x[..n], &x[n..n + ni], &x[n + ni..])
    }

    /// `B [y; u_I] = -L y + M_{:,I} u_I`.
    fn apply_b(&self, y: &[f64], ui: &[f64]) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = self.problem.l.spmv(y)?.into_iter().map(|v| -v).collect();
        for (k, &i) in self.active.inactive.iter().enumerate() {
            out[i] += self.problem.m[i] * ui[k];
        }
        Ok(out)
    }
}

impl LinearOperator for ReducedSystem<'_> {
    fn nrows(&self) -> usize {
        self.dim()
    }

    fn ncols(&self) -> usize {
        self.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dims(self, x, out)?;
        let pr = self.problem;
        let n = pr.n();
        let ni = self.active.inactive.len();
        let (y, ui, q) = self.split(x);
        let ltq = pr.lt.spmv(q)?;
        for i in 0..n {
            out[i] = pr.m[i] * y[i] - ltq[i];
        }
        for (k, &i) in self.active.inactive.iter().enumerate() {
            out[n + k] = pr.nu() * pr.m[i] * ui[k] + pr.m[i] * q[i];
        }
        let b = self.apply_b(y, ui)?;
        out[n + ni..].copy_from_slice(&b);
        Ok(())
    }
}

/// Block lower-triangular preconditioner `[A0 0; B -S0]` with `A0 = theta A`
/// and `S0 = L M^{-1} L^T`, together with the metric `blkdiag(A - A0, S0)`.
pub struct BtPreconditioner<'a> {
    pub system: &'a ReducedSystem<'a>,
    pub theta: f64,
    l_solver: InnerSolver,
}

pub const BT_THETA: f64 = 0.9;

impl<'a> BtPreconditioner<'a> {
    pub fn new(system: &'a ReducedSystem<'a>, policy: InnerSolverPolicy) -> Result<Self> {
        let pr = system.problem;
        Ok(Self { system, theta: BT_THETA, l_solver: InnerSolver::new(&pr.l, pr.grid.n1d, policy)? })
    }

    /// `S0^{-1} r = L^{-T} M L^{-1} r`.
    pub fn apply_s0_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut w = self.l_solver.solve(r)?;
        for (wi, mi) in w.iter_mut().zip(&self.system.problem.m) {
            *wi *= mi;
        }
        self.l_solver.solve_transpose(&w)
    }

    pub fn metric(&self) -> BtMetric<'_> {
        BtMetric { system: self.system, theta: self.theta }
    }
}

impl LinearOperator for BtPreconditioner<'_> {
    fn nrows(&self) -> usize {
        self.system.dim()
    }

    fn ncols(&self) -> usize {
        self.system.dim()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        check_dims(self, r, z)?;
        let sys = self.system;
        let pr = sys.problem;
        let n = pr.n();
        let ni = sys.active.inactive.len();
        let (r1, r2, r3) = sys.split(r);
        for i in 0..n {
            z[i] = r1[i] / (self.theta * pr.m[i]);
        }
        for (k, &i) in sys.active.inactive.iter().enumerate() {
            z[n + k] = r2[k] / (self.theta * pr.nu() * pr.m[i]);
        }
        let mut t = sys.apply_b(&z[..n], &z[n..n + ni])?;
        for (ti, ri) in t.iter_mut().zip(r3) {
            *ti -= ri;
        }
        let z3 = self.apply_s0_inverse(&t)?;
        z[n + ni..].copy_from_slice(&z3);
        Ok(())
    }
}

/// `H = blkdiag((1 - theta) M, (1 - theta) nu M_II, L M^{-1} L^T)`.
pub struct BtMetric<'a> {
    system: &'a ReducedSystem<'a>,
    theta: f64,
}

impl LinearOperator for BtMetric<'_> {
    fn nrows(&self) -> usize {
        self.system.dim()
    }

    fn ncols(&self) -> usize {
        self.system.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dims(self, x, out)?;
        let sys = self.system;
        let pr = sys.problem;
        let n = pr.n();
        let ni = sys.active.inactive.len();
        let (y, ui, q) = sys.split(x);
        let w = 1.0 - self.theta;
        for i in 0..n {
            out[i] = w * pr.m[i] * y[i];
        }
        for (k, &i) in sys.active.inactive.iter().enumerate() {
            out[n + k] = w * pr.nu() * pr.m[i] * ui[k];
        }
        let mut t = pr.lt.spmv(q)?;
        for (ti, mi) in t.iter_mut().zip(&pr.m) {
            *ti /= mi;
        }
        let s0q = pr.l.spmv(&t)?;
        out[n + ni..].copy_from_slice(&s0q);
        Ok(())
    }
}
