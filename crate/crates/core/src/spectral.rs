//! Eigenvalue checks for the Schur approximation and the preconditioned systems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{preset_problem, DiscreteProblem, Preset, Velocity};
use crate::kkt::{ActiveSet, NewtonSystem};
use crate::newton::{newton_solve_observed, NewtonOptions, Outcome};
use crate::schur::{dense_preconditioners, gammas, build_true_schur_dense, InnerSolverPolicy, SchurFactor};
use crate::sparse::{dot, SparseLu, SparseMatrix};

/// Above this size pencils are handled by Lanczos instead of dense solvers.
pub const DENSE_EIG_LIMIT: usize = 1000;

const LANCZOS_TOL: f64 = 1e-11;

/// Eigenvalues of the symmetric-definite pencil `(a, b)`, ascending.
pub fn pencil_eigs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = b.nrows();
    if !b.is_square() || a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: n, found: a.nrows() });
    }
    let chol = b.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let x = l.solve_lower_triangular(a).ok_or(Error::NotPositiveDefinite)?;
    let c = l.solve_lower_triangular(&x.transpose()).ok_or(Error::NotPositiveDefinite)?;
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenpairs of `(a, b)` with `X^T b X = I`, ascending.
pub fn pencil_eigen_decomposition(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let x = l.solve_lower_triangular(a).ok_or(Error::NotPositiveDefinite)?;
    let c = l.solve_lower_triangular(&x.transpose()).ok_or(Error::NotPositiveDefinite)?;
    let eig = SymmetricEigen::new((&c + c.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let v = DMatrix::from_fn(c.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    let xs = l.transpose().solve_upper_triangular(&v).ok_or(Error::NotPositiveDefinite)?;
    Ok((order.iter().map(|&i| eig.eigenvalues[i]).collect(), xs))
}

/// `min z^T G z / z^T H z`.
pub fn alpha_min(g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    Ok(pencil_eigs(g, h)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BdfIntervals {
    pub lower: (f64, f64),
    pub upper: (f64, f64),
    pub discrete: [f64; 3],
}

impl BdfIntervals {
    pub fn contains(&self, lambda: f64, tol: f64) -> bool {
        self.discrete.iter().any(|d| (lambda - d).abs() <= tol)
            || (self.lower.0 - tol..=self.lower.1 + tol).contains(&lambda)
            || (self.upper.0 - tol..=self.upper.1 + tol).contains(&lambda)
    }
}

/// Inclusion set for the block-diagonal preconditioned spectrum; `None`
/// when `alpha_min <= -1` leaves it unbounded.
///
/// The outer ends come from `sigma^2 <= 1 / (1 + alpha_min)`, the largest
/// eigenvalue of `S_hat^{-1} S`.
pub fn bdf_intervals(alpha_min: f64) -> Option<BdfIntervals> {
    if !(alpha_min > -1.0) {
        return None;
    }
    let r = (1.0 + 4.0 / (1.0 + alpha_min)).sqrt();
    let s2 = 2f64.sqrt();
    let s5 = 5f64.sqrt();
    Some(BdfIntervals {
        lower: (0.5 * (1.0 - r), 0.5 * (1.0 - s2)),
        upper: (0.5 * (1.0 + s2), 0.5 * (1.0 + r)),
        discrete: [1.0, 0.5 * (1.0 - s5), 0.5 * (1.0 + s5)],
    })
}

fn inv_mass(problem: &DiscreteProblem) -> Vec<f64> {
    problem.m.iter().map(|m| 1.0 / m).collect()
}

/// Sparse `(S, S_hat)` of the reduced Schur pencil.
pub fn schur_pencil(problem: &DiscreteProblem, active: &ActiveSet) -> Result<(SparseMatrix, SparseMatrix)> {
    let (nu, au, ay) = (problem.nu(), problem.alpha_u(), problem.alpha_y());
    let (g1, g2) = gammas(nu, au, ay)?;
    let s = ay * ay * nu + au * au;
    let minv = inv_mass(problem);
    let lm = problem.l.scale_columns(&minv);
    let lml = lm.matmul(&problem.lt)?;
    let k = lm.scale(ay * nu).add_diagonal(&vec![-au; problem.n()]);
    let pmp: Vec<f64> = active.pi().iter().zip(&problem.m).map(|(p, m)| p * m).collect();
    let kk = k.scale_columns(&pmp).matmul(&k.transpose())?;
    let s_bb = lml.scale(nu).add_diagonal(&problem.m).linear_combination(1.0, &kk, -1.0 / s)?;
    let l1 = crate::schur::build_l1(problem, active, g1, g2);
    let s_hat = l1.scale_columns(&minv).matmul(&l1.transpose())?;
    Ok((s_bb, s_hat))
}

/// Sparse `(G, H)` in the mass-normalized frame.
pub fn normalized_pair(problem: &DiscreteProblem, active: &ActiveSet) -> Result<(SparseMatrix, SparseMatrix)> {
    let (nu, au, ay) = (problem.nu(), problem.alpha_u(), problem.alpha_y());
    let (g1, g2) = gammas(nu, au, ay)?;
    let mh: Vec<f64> = problem.m.iter().map(|m| 1.0 / m.sqrt()).collect();
    let f = problem.l.scale_rows(&mh).scale_columns(&mh).scale(nu.sqrt());
    let ft = f.transpose();
    let pi = active.pi();
    let ip: Vec<f64> = pi.iter().map(|p| 1.0 - p).collect();
    let g = f.scale_columns(&ip).linear_combination(1.0, &ft.scale_rows(&ip), 1.0)?;
    let d1: Vec<f64> = pi.iter().map(|p| 1.0 - g1 * p).collect();
    let d2: Vec<f64> = pi.iter().map(|p| 1.0 - g2 * p).collect();
    let cross = f.scale_columns(&pi).linear_combination(1.0, &ft.scale_rows(&pi), 1.0)?;
    let h = f
        .scale_columns(&d1)
        .matmul(&ft)?
        .add_diagonal(&d2)
        .linear_combination(1.0, &cross, (g1 * g2).sqrt())?;
    Ok((g, h))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtremeEigs {
    pub min: f64,
    pub max: f64,
    /// Residual bounds on the two values; zero for dense solves.
    pub err_min: f64,
    pub err_max: f64,
    pub steps: usize,
}

/// Extreme eigenvalues of `(a, b)`, `b` SPD, by Lanczos in the `b` inner
/// product with full reorthogonalization.
pub fn lanczos_extremes(a: &SparseMatrix, b: &SparseMatrix, b_lu: &SparseLu, max_steps: usize) -> Result<ExtremeEigs> {
    lanczos_extremes_with(a.nrows(), &|x| a.spmv(x), &|x| b.spmv(x), &|x| b_lu.solve(x), max_steps)
}

type VecMap<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>>;

/// Relative convergence tolerances for the two ends of a Lanczos run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosTol {
    pub min: f64,
    pub max: f64,
}

impl LanczosTol {
    pub const BOTH: Self = Self { min: LANCZOS_TOL, max: LANCZOS_TOL };
}

/// Operator form of [`lanczos_extremes`].
pub fn lanczos_extremes_with(
    n: usize,
    apply_a: VecMap<'_>,
    apply_b: VecMap<'_>,
    solve_b: VecMap<'_>,
    max_steps: usize,
) -> Result<ExtremeEigs> {
    lanczos_extremes_tol(n, apply_a, apply_b, solve_b, max_steps, LanczosTol::BOTH)
}

/// [`lanczos_extremes_with`] stopping once each end meets its own tolerance.
pub fn lanczos_extremes_tol(
    n: usize,
    apply_a: VecMap<'_>,
    apply_b: VecMap<'_>,
    solve_b: VecMap<'_>,
    max_steps: usize,
    tol: LanczosTol,
) -> Result<ExtremeEigs> {
    let max_steps = max_steps.min(n).max(1);
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.7 * i as f64 + 0.3).sin()).collect();
    let mut bq = apply_b(&q)?;
    let nrm = dot(&q, &bq);
    if !(nrm > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let nrm = nrm.sqrt();
    q.iter_mut().for_each(|v| *v /= nrm);
    bq.iter_mut().for_each(|v| *v /= nrm);
    let mut qs = vec![q];
    let mut bqs = vec![bq];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut result = None;
    let mut next_check = 5;
    for j in 0..max_steps {
        let aq = apply_a(&qs[j])?;
        let mut w = solve_b(&aq)?;
        alphas.push(dot(&qs[j], &aq));
        for _ in 0..2 {
            for (qi, bqi) in qs.iter().zip(&bqs) {
                let c = dot(bqi, &w);
                w.iter_mut().zip(qi).for_each(|(wv, qv)| *wv -= c * qv);
            }
        }
        let bw = apply_b(&w)?;
        let beta2 = dot(&w, &bw);
        let beta = if beta2 > 0.0 { beta2.sqrt() } else { 0.0 };
        let m = alphas.len();
        let done = beta <= 1e-14 * alphas.iter().fold(0.0f64, |a, v| a.max(v.abs())) || m == max_steps;
        if done || m >= next_check {
            next_check = (m + 5).max(m + m / 8);
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alphas[r]
                } else if r + 1 == c {
                    betas[r]
                } else if c + 1 == r {
                    betas[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let (imin, imax) = (order[0], order[m - 1]);
            // residual bound, sharpened by the gap to the neighbouring Ritz value
            let bound = |i: usize, next: Option<usize>| {
                let r = beta * eig.eigenvectors[(m - 1, i)].abs();
                match next {
                    Some(j) => {
                        let gap = (eig.eigenvalues[i] - eig.eigenvalues[j]).abs();
                        if gap > 0.0 { r.min(r * r / gap) } else { r }
                    }
                    None => r,
                }
            };
            let err_min = bound(imin, order.get(1).copied());
            let err_max = bound(imax, if m > 1 { Some(order[m - 2]) } else { None });
            let (lo, hi) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
            let scale = lo.abs().max(hi.abs()).max(1e-300);
            let ext = ExtremeEigs { min: lo, max: hi, err_min, err_max, steps: m };
            if done || (err_min <= tol.min * scale && err_max <= tol.max * scale) {
                result = Some(ext);
                break;
            }
        }
        betas.push(beta);
        let inv = 1.0 / beta;
        qs.push(w.iter().map(|v| v * inv).collect());
        bqs.push(bw.iter().map(|v| v * inv).collect());
    }
    result.ok_or_else(|| Error::Breakdown("lanczos produced no estimate".into()))
}

/// Extreme eigenvalues of `(S, S_hat)` and of `(G, H)` for one active set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PencilSummary {
    pub pencil: ExtremeEigs,
    pub alpha_min: f64,
    pub alpha_err: f64,
}

pub fn schur_pencil_extremes(problem: &DiscreteProblem, active: &ActiveSet) -> Result<ExtremeEigs> {
    if problem.n() <= DENSE_EIG_LIMIT {
        let (s, s_hat) = schur_pencil(problem, active)?;
        let ev = pencil_eigs(&s.to_dense(), &s_hat.to_dense())?;
        return Ok(dense_extremes(&ev));
    }
    let factor = SchurFactor::build(problem, active, InnerSolverPolicy::Direct)?;
    schur_pencil_lanczos(problem, active, &factor)
}

/// Lanczos estimate of the `(S, S_hat)` extremes, with `S_hat^{-1}` from `factor`.
pub fn schur_pencil_lanczos(problem: &DiscreteProblem, active: &ActiveSet, factor: &SchurFactor) -> Result<ExtremeEigs> {
    let (s, s_hat) = schur_pencil(problem, active)?;
    let tol = LanczosTol { min: PENCIL_MIN_TOL, max: EDGE_TOL };
    lanczos_extremes_tol(problem.n(), &|x| s.spmv(x), &|x| s_hat.spmv(x), &|x| factor.apply_small_inverse(x), 600, tol)
}

/// The smallest pencil eigenvalue sits at the edge of a cluster near 1/2, where
/// Lanczos converges slowly; the bound itself is checked by inertia.
const PENCIL_MIN_TOL: f64 = 1e-5;

/// Tolerance for the ends that enter the upper bound check.
const EDGE_TOL: f64 = 1e-10;

/// Slack of the eigenvalue bound checks.
pub const BOUND_TOL: f64 = 1e-8;

/// The upper bound is attained, so its check compares two roundings of the
/// same number; the slack grows with the bound.
pub fn upper_slack(bound: f64) -> f64 {
    BOUND_TOL * bound.max(1.0)
}

/// Whether `a - sigma b` is positive definite, from the inertia of a
/// diagonal-pivot factorization. `None` when that factorization breaks down.
pub fn shifted_definite(a: &SparseMatrix, b: &SparseMatrix, sigma: f64) -> Result<Option<bool>> {
    let shifted = a.linear_combination(1.0, b, -sigma)?;
    match SparseLu::factorize_symmetric(&shifted) {
        Ok(lu) => Ok(lu.inertia().map(|(_, neg)| neg == 0)),
        Err(Error::SingularMatrix { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Checks `lambda_min(S, S_hat) >= 1/2 - tol` given an estimate `e` of the
/// extremes. Lanczos estimates are confirmed by inertia of `S - (1/2 - tol) S_hat`.
pub fn lower_bound_holds(problem: &DiscreteProblem, active: &ActiveSet, e: &ExtremeEigs, tol: f64) -> Result<bool> {
    if e.err_min == 0.0 || e.min - e.err_min >= 0.5 - tol {
        return Ok(e.min - e.err_min >= 0.5 - tol);
    }
    let (s, s_hat) = schur_pencil(problem, active)?;
    Ok(match shifted_definite(&s, &s_hat, 0.5 - tol)? {
        Some(definite) => definite,
        None => false,
    })
}

pub fn alpha_min_of(problem: &DiscreteProblem, active: &ActiveSet) -> Result<(f64, f64)> {
    if problem.n() <= DENSE_EIG_LIMIT {
        let (g, h) = normalized_pair(problem, active)?;
        return Ok((alpha_min(&g.to_dense(), &h.to_dense())?, 0.0));
    }
    let factor = SchurFactor::build(problem, active, InnerSolverPolicy::Direct)?;
    alpha_min_lanczos(problem, active, &factor)
}

/// `alpha_min` and its error bound from the pencil `(G, H + G)`.
///
/// `H + G = M^{-1/2} S_hat M^{-1/2}`, so the solves reuse `factor`. An
/// eigenvalue `mu` of `(G, H + G)` maps to `alpha = mu / (1 - mu)`.
pub fn alpha_min_lanczos(problem: &DiscreteProblem, active: &ActiveSet, factor: &SchurFactor) -> Result<(f64, f64)> {
    let (g, _) = normalized_pair(problem, active)?;
    let sq: Vec<f64> = problem.m.iter().map(|m| m.sqrt()).collect();
    let scaled = |x: &[f64], f: fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(&sq).map(|(v, s)| f(*v, *s)).collect() };
    let apply_h = |x: &[f64]| -> Result<Vec<f64>> {
        let y = factor.apply_small(&scaled(x, |v, s| v / s))?;
        Ok(scaled(&y, |v, s| v / s))
    };
    let solve_h = |x: &[f64]| -> Result<Vec<f64>> {
        let y = factor.apply_small_inverse(&scaled(x, |v, s| v * s))?;
        Ok(scaled(&y, |v, s| v * s))
    };
    let tol = LanczosTol { min: EDGE_TOL, max: f64::INFINITY };
    let e = lanczos_extremes_tol(problem.n(), &|x| g.spmv(x), &apply_h, &solve_h, 600, tol)?;
    let mu = e.min;
    if mu >= 1.0 {
        return Err(Error::NotPositiveDefinite);
    }
    let gap = 1.0 - mu;
    Ok((mu / gap, e.err_min / (gap * gap)))
}

fn dense_extremes(ev: &[f64]) -> ExtremeEigs {
    ExtremeEigs { min: ev[0], max: ev[ev.len() - 1], err_min: 0.0, err_max: 0.0, steps: ev.len() }
}

pub fn pencil_summary(problem: &DiscreteProblem, active: &ActiveSet) -> Result<PencilSummary> {
    if problem.n() <= DENSE_EIG_LIMIT {
        let pencil = schur_pencil_extremes(problem, active)?;
        let (alpha_min, alpha_err) = alpha_min_of(problem, active)?;
        return Ok(PencilSummary { pencil, alpha_min, alpha_err });
    }
    let factor = SchurFactor::build(problem, active, InnerSolverPolicy::Direct)?;
    let pencil = schur_pencil_lanczos(problem, active, &factor)?;
    let (alpha_min, alpha_err) = alpha_min_lanczos(problem, active, &factor)?;
    Ok(PencilSummary { pencil, alpha_min, alpha_err })
}

/// Dense spectral check of `(P^IPF)^{-1} J` and `(J, P^BDF)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreconditionedSpectrum {
    pub alpha_min: f64,
    pub ipf_eigs: Vec<f64>,
    pub ipf_max_imag: f64,
    /// Largest distance of an IPF eigenvalue from `{1} ∪ [1/2, 1/(1+alpha_min)]`.
    pub ipf_violation: f64,
    pub bdf_eigs: Vec<f64>,
    pub bdf_violation: f64,
    /// `||P^{-1}J - Q Lambda Q^{-1}|| / ||P^{-1}J||`.
    pub decomposition_error: f64,
    /// `max |X^T S_hat X - I|`.
    pub orthonormality_error: f64,
}

impl PreconditionedSpectrum {
    pub fn pass(&self, tol: f64) -> bool {
        let scale = self.ipf_eigs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        self.ipf_max_imag <= tol * scale
            && self.ipf_violation <= tol
            && self.bdf_violation <= tol
            && self.decomposition_error <= tol
            && self.orthonormality_error <= tol
    }
}

/// Eigenvalues of a general real matrix as `(re, im)` pairs.
pub fn general_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let ev = m.eigenvalues().map_err(|e| Error::Breakdown(format!("eigenvalue solver failed: {e:?}")))?;
    Ok(ev.iter().map(|z| (z.re, z.im)).collect())
}

fn distance_to_interval(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    }
}

fn bdf_distance(iv: &BdfIntervals, x: f64) -> f64 {
    let d = iv.discrete.iter().map(|d| (x - d).abs()).fold(f64::INFINITY, f64::min);
    d.min(distance_to_interval(x, iv.lower.0, iv.lower.1)).min(distance_to_interval(x, iv.upper.0, iv.upper.1))
}

/// Dense eigen checks of both preconditioners, for small problems.
pub fn preconditioned_spectrum_check(problem: &DiscreteProblem, active: &ActiveSet) -> Result<PreconditionedSpectrum> {
    let n = problem.n();
    if n > DENSE_EIG_LIMIT / 4 {
        return Err(Error::TooLarge("dense preconditioned spectrum", n, DENSE_EIG_LIMIT / 4));
    }
    let factor = SchurFactor::build(problem, active, InnerSolverPolicy::Direct)?;
    let (ipf, bdf) = dense_preconditioners(problem, &factor)?;
    let j = NewtonSystem::new(problem, active.clone())?.to_sparse().to_dense();
    let (a_min, _) = alpha_min_of(problem, active)?;
    let hi = 1.0 / (1.0 + a_min);

    let pj = ipf.clone().lu().solve(&j).ok_or(Error::SingularMatrix { column: 0, pivot: 0.0 })?;
    let ev = general_eigenvalues(&pj)?;
    let ipf_max_imag = ev.iter().fold(0.0f64, |a, z| a.max(z.1.abs()));
    let mut ipf_eigs: Vec<f64> = ev.iter().map(|z| z.0).collect();
    ipf_eigs.sort_by(f64::total_cmp);
    let ipf_violation = ipf_eigs
        .iter()
        .map(|&x| (x - 1.0).abs().min(distance_to_interval(x, 0.5, hi)))
        .fold(0.0, f64::max);

    let bdf_eigs = pencil_eigs(&j, &bdf)?;
    let iv = bdf_intervals(a_min).ok_or_else(|| Error::Breakdown(format!("alpha_min = {a_min} <= -1")))?;
    let bdf_violation = bdf_eigs.iter().map(|&x| bdf_distance(&iv, x)).fold(0.0, f64::max);

    let (decomposition_error, orthonormality_error) = eigen_decomposition_error(problem, active, &factor, &ipf, &pj)?;
    Ok(PreconditionedSpectrum {
        alpha_min: a_min,
        ipf_eigs,
        ipf_max_imag,
        ipf_violation,
        bdf_eigs,
        bdf_violation,
        decomposition_error,
        orthonormality_error,
    })
}

/// Rebuilds `(P^IPF)^{-1} J` from the eigenvectors of `S_hat^{-1} S`.
fn eigen_decomposition_error(
    problem: &DiscreteProblem,
    active: &ActiveSet,
    factor: &SchurFactor,
    ipf: &DMatrix<f64>,
    pj: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let n2 = 2 * problem.n();
    let m = factor.dim();
    let s = build_true_schur_dense(problem, active)?.s;
    let s_hat = factor.shat_dense();
    let (lam, x) = pencil_eigen_decomposition(&s, &s_hat)?;
    let orth = (x.transpose() * &s_hat * &x - DMatrix::identity(m, m)).amax();

    let a = ipf.view((0, 0), (n2, n2)).into_owned();
    let b = ipf.view((n2, 0), (m, n2)).into_owned();
    let ainv = DMatrix::from_diagonal(&a.diagonal().map(|v| 1.0 / v));
    let unit: Vec<usize> = (0..m).filter(|&k| (lam[k] - 1.0).abs() <= 1e-9).collect();
    let rest: Vec<usize> = (0..m).filter(|&k| (lam[k] - 1.0).abs() > 1e-9).collect();
    let x1 = x.select_columns(&unit);
    let x2 = x.select_columns(&rest);
    let abx2 = &ainv * b.transpose() * &x2;

    let dim = n2 + m;
    let (k1, k2) = (unit.len(), rest.len());
    let mut q = DMatrix::zeros(dim, dim);
    let mut qinv = DMatrix::zeros(dim, dim);
    q.view_mut((0, 0), (n2, n2)).fill_with_identity();
    q.view_mut((n2, n2), (m, k1)).copy_from(&x1);
    q.view_mut((0, n2 + k1), (n2, k2)).copy_from(&(-&abx2));
    q.view_mut((n2, n2 + k1), (m, k2)).copy_from(&x2);
    qinv.view_mut((0, 0), (n2, n2)).fill_with_identity();
    qinv.view_mut((0, n2), (n2, m)).copy_from(&(&abx2 * x2.transpose() * &s_hat));
    qinv.view_mut((n2, n2), (k1, m)).copy_from(&(x1.transpose() * &s_hat));
    qinv.view_mut((n2 + k1, n2), (k2, m)).copy_from(&(x2.transpose() * &s_hat));
    let mut diag = DVector::from_element(dim, 1.0);
    for (i, &k) in rest.iter().enumerate() {
        diag[n2 + k1 + i] = lam[k];
    }
    let rebuilt = &q * DMatrix::from_diagonal(&diag) * &qinv;
    Ok(((pj - rebuilt).norm() / pj.norm(), orth))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaReport {
    pub zeta: f64,
    pub bound: f64,
    pub lam_max: f64,
}

impl ZetaReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.lam_max <= self.bound + tol
    }
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().max()
}

/// Upper estimate `zeta^2 + (1 + zeta)^2` for control or state constraints.
pub fn zeta_bounds(problem: &DiscreteProblem, active: &ActiveSet) -> Result<ZetaReport> {
    let n = problem.n();
    if n > DENSE_EIG_LIMIT {
        return Err(Error::TooLarge("dense zeta bound", n, DENSE_EIG_LIMIT));
    }
    let (au, ay, nu) = (problem.alpha_u(), problem.alpha_y(), problem.nu());
    let sq = nu.sqrt();
    let l = problem.l.to_dense();
    let mh = DVector::from_iterator(n, problem.m.iter().map(|m| m.sqrt()));
    let mhi = mh.map(|v| 1.0 / v);
    let ip = DVector::from_iterator(n, active.pi().iter().map(|p| 1.0 - p));
    let zeta = if ay == 0.0 && au > 0.0 {
        // ||M^{1/2} (sqrt(nu) L + M (I - Pi))^{-1} sqrt(nu) L M^{-1/2}||
        let mut k = &l * sq;
        for i in 0..n {
            k[(i, i)] += problem.m[i] * ip[i];
        }
        let rhs = (&l * sq) * DMatrix::from_diagonal(&mhi);
        let sol = k.lu().solve(&rhs).ok_or(Error::SingularMatrix { column: 0, pivot: 0.0 })?;
        spectral_norm(&(DMatrix::from_diagonal(&mh) * sol))
    } else if au == 0.0 && ay > 0.0 {
        // ||(I + sqrt(nu) M^{-1/2} L M^{-1/2} (I - Pi))^{-1}||
        let f = DMatrix::from_diagonal(&mhi) * &l * DMatrix::from_diagonal(&mhi) * sq;
        let k = DMatrix::identity(n, n) + f * DMatrix::from_diagonal(&ip);
        let sv = k.singular_values();
        1.0 / sv.min()
    } else {
        return Err(Error::Unsupported("zeta bound needs pure control or pure state constraints".into()));
    };
    let lam_max = schur_pencil_extremes(problem, active)?.max;
    Ok(ZetaReport { zeta, bound: zeta * zeta + (1.0 + zeta) * (1.0 + zeta), lam_max })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CayleyReport {
    pub norm1: f64,
    pub norm2: f64,
}

impl CayleyReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.norm1 <= 1.0 + tol && self.norm2 <= 0.5 + tol
    }
}

/// `||(F+I)^{-1}(F-I)||` and `||(F+I)^{-1}(F+F^T)(F+I)^{-T}||` for `F + F^T ⪰ 0`.
pub fn cayley_norms(f: &DMatrix<f64>) -> Result<CayleyReport> {
    let n = f.nrows();
    if !f.is_square() {
        return Err(Error::NotSquare { nrows: f.nrows(), ncols: f.ncols() });
    }
    let sym = f + f.transpose();
    let min_eig = sym.clone().symmetric_eigenvalues().min();
    if min_eig < -1e-10 * sym.norm().max(1.0) {
        return Err(Error::InvalidMatrix(format!("F + F^T has eigenvalue {min_eig}")));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let fp = (f + &eye).lu();
    let t1 = fp.solve(&(f - &eye)).ok_or(Error::SingularMatrix { column: 0, pivot: 0.0 })?;
    let w = fp.solve(&sym).ok_or(Error::SingularMatrix { column: 0, pivot: 0.0 })?;
    let t2 = (f + &eye).lu().solve(&w.transpose()).ok_or(Error::SingularMatrix { column: 0, pivot: 0.0 })?;
    Ok(CayleyReport { norm1: spectral_norm(&t1), norm2: spectral_norm(&t2) })
}

/// One row of the spectral tables.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCase {
    pub preset: Preset,
    pub level: usize,
    pub nu: f64,
    pub eps: f64,
    pub beta1: f64,
}

impl SpectralCase {
    pub fn problem(&self) -> Result<DiscreteProblem> {
        preset_problem(self.preset.name(), self.level, self.nu, Velocity::Constant([self.beta1, 0.0, 0.0]), self.eps)
    }
}

/// Parameter grid of the control, mixed and state spectral tables.
pub fn table_grid(levels: &[usize]) -> Vec<SpectralCase> {
    let mut out = Vec::new();
    for &beta1 in &[0.0, 10.0, 100.0, 1000.0] {
        for &level in levels {
            for &nu in &[1e-2, 1e-6] {
                out.push(SpectralCase { preset: Preset::CcPb1, level, nu, eps: 0.0, beta1 });
                for &eps in &[1e-1, 1e-2, 1e-3] {
                    out.push(SpectralCase { preset: Preset::McPb1, level, nu, eps, beta1 });
                }
                out.push(SpectralCase { preset: Preset::ScPb1, level, nu, eps: 0.0, beta1 });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub problem: String,
    pub level: usize,
    pub nu: f64,
    pub eps: f64,
    pub beta1: f64,
    /// Newton iteration with the largest `lambda_max`.
    pub k: usize,
    pub inactive: usize,
    pub lam_min: f64,
    pub lam_max: f64,
    pub alpha_min: f64,
    /// `1 / (1 + alpha_min)`.
    pub bound_hi: f64,
    /// Smallest `lambda_min` over all iterations.
    pub lam_min_all: f64,
    /// Largest Lanczos residual bound seen; zero for dense runs.
    pub max_err: f64,
    pub zeta: Option<(f64, f64)>,
    pub newton_outcome: Outcome,
    pub iterations: usize,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl SpectralReport {
    pub fn pass(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

/// Runs Newton and records the pencil at each iteration, reporting the
/// iteration with the largest `lambda_max`.
pub fn eig_table_run(case: &SpectralCase, opts: &NewtonOptions) -> Result<SpectralReport> {
    let problem = case.problem()?;
    if problem.n() > crate::schur::DENSE_LIMIT {
        return Err(Error::TooLarge("spectral table run", problem.n(), crate::schur::DENSE_LIMIT));
    }
    let mut best: Option<(usize, ActiveSet, ExtremeEigs)> = None;
    let mut lam_min_all = f64::INFINITY;
    let mut max_err = 0.0f64;
    let mut count = 0;
    let mut lower_ok = true;
    let (_, trace) = newton_solve_observed(&problem, opts, &mut |k, _, active| {
        let e = schur_pencil_extremes(&problem, active)?;
        count += 1;
        lower_ok &= lower_bound_holds(&problem, active, &e, BOUND_TOL)?;
        lam_min_all = lam_min_all.min(e.min);
        max_err = max_err.max(e.err_min).max(e.err_max);
        if best.as_ref().map_or(true, |b| e.max > b.2.max) {
            best = Some((k, active.clone(), e));
        }
        Ok(())
    })?;
    let (k, active, e) = best.ok_or_else(|| Error::Breakdown("Newton produced no iterations".into()))?;
    let (alpha, alpha_err) = alpha_min_of(&problem, &active)?;
    max_err = max_err.max(alpha_err);
    let bound_hi = 1.0 / (1.0 + alpha);
    let pure = problem.alpha_u() == 0.0 || problem.alpha_y() == 0.0;
    let zeta = if pure && problem.n() <= DENSE_EIG_LIMIT {
        let z = zeta_bounds(&problem, &active)?;
        Some((z.zeta, z.bound))
    } else {
        None
    };
    Ok(SpectralReport {
        problem: case.preset.name().to_string(),
        level: case.level,
        nu: case.nu,
        eps: case.eps,
        beta1: case.beta1,
        k,
        inactive: active.inactive.len(),
        lam_min: e.min,
        lam_max: e.max,
        alpha_min: alpha,
        bound_hi,
        lam_min_all,
        max_err,
        zeta,
        newton_outcome: trace.outcome,
        iterations: count,
        lower_ok,
        // Ritz values underestimate lambda_max and overestimate alpha_min
        upper_ok: alpha > -1.0 && e.max + e.err_max <= bound_hi + upper_slack(bound_hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::preset_problem;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let a = DMatrix::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        &a * a.transpose() + DMatrix::identity(n, n)
    }

    #[test]
    fn pencil_identity() {
        let b = spd(6, 1);
        let ev = pencil_eigs(&b, &b).unwrap();
        assert!(ev.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pencil_matches_inverse_product() {
        let a = spd(5, 2);
        let b = spd(5, 3);
        let ev = pencil_eigs(&a, &b).unwrap();
        let prod = b.clone().try_inverse().unwrap() * &a;
        let mut want: Vec<f64> = prod.complex_eigenvalues().iter().map(|z| z.re).collect();
        want.sort_by(f64::total_cmp);
        for (x, y) in ev.iter().zip(&want) {
            assert!((x - y).abs() < 1e-10);
        }
        let (lam, x) = pencil_eigen_decomposition(&a, &b).unwrap();
        assert!((x.transpose() * &b * &x - DMatrix::identity(5, 5)).amax() < 1e-10);
        assert!((&a * &x - &b * &x * DMatrix::from_diagonal(&DVector::from_vec(lam))).amax() < 1e-9);
    }

    #[test]
    fn pencil_rejects_indefinite() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(pencil_eigs(&b, &b).is_err());
    }

    #[test]
    fn two_by_two_hand_case() {
        // M = L = I, nu = 1, Pi = diag(1, 0), control constraints:
        // S = L L^T + M - Pi M Pi = diag(1, 2); L1 = L + (I - Pi) = diag(1, 2);
        // S_hat = diag(1, 4), eigenvalues (1, 1/2).
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let sh = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        assert_eq!(pencil_eigs(&s, &sh).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn bdf_interval_values() {
        let iv = bdf_intervals(0.0).unwrap();
        let s5 = 5f64.sqrt();
        assert!((iv.lower.0 - (1.0 - s5) / 2.0).abs() < 1e-15);
        assert!((iv.upper.1 - (1.0 + s5) / 2.0).abs() < 1e-15);
        assert!((iv.lower.1 - (1.0 - 2f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!(bdf_intervals(-1.0).is_none());
        assert!(bdf_intervals(-1.5).is_none());
        assert!(iv.contains(1.0, 0.0) && iv.contains(1.3, 0.0) && !iv.contains(0.5, 1e-8));
        let iv = bdf_intervals(0.25).unwrap();
        assert!((iv.upper.1 - 0.5 * (1.0 + 4.2f64.sqrt())).abs() < 1e-15);
        let iv = bdf_intervals(-0.5).unwrap();
        assert!((iv.lower.0 + 1.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_min_full_active_is_zero() {
        let pr = preset_problem("CC-Pb1", 1, 1e-2, Velocity::Constant([10.0, 0.0, 0.0]), 0.0).unwrap();
        let (a, _) = alpha_min_of(&pr, &ActiveSet::full(pr.n())).unwrap();
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn alpha_min_empty_symmetric_nonnegative() {
        let pr = preset_problem("CC-Pb1", 1, 1e-2, Velocity::zero(), 0.0).unwrap();
        let (a, _) = alpha_min_of(&pr, &ActiveSet::empty(pr.n())).unwrap();
        assert!(a >= -1e-12);
    }

    #[test]
    fn sparse_pencil_matches_dense_schur() {
        let pr = preset_problem("MC-Pb1", 1, 1e-2, Velocity::Constant([10.0, 0.0, 0.0]), 1e-1).unwrap();
        let act = ActiveSet::from_parts(pr.n(), (0..27).step_by(3).collect(), vec![]).unwrap();
        let (s, sh) = schur_pencil(&pr, &act).unwrap();
        let d = build_true_schur_dense(&pr, &act).unwrap();
        assert!((s.to_dense() - &d.s_bb).norm() <= 1e-12 * d.s_bb.norm());
        assert!((sh.to_dense() - &d.s_hat).norm() <= 1e-12 * d.s_hat.norm());
        let (g, h) = normalized_pair(&pr, &act).unwrap();
        assert!((g.to_dense() - &d.g).norm() <= 1e-12 * d.g.norm());
        assert!((h.to_dense() - &d.h).norm() <= 1e-12 * d.h.norm());
    }

    #[test]
    fn lanczos_matches_dense() {
        let pr = preset_problem("CC-Pb1", 2, 1e-2, Velocity::Constant([10.0, 0.0, 0.0]), 0.0).unwrap();
        let act = ActiveSet::from_parts(pr.n(), (0..pr.n()).step_by(4).collect(), (1..pr.n()).step_by(6).collect()).unwrap();
        let (s, sh) = schur_pencil(&pr, &act).unwrap();
        let ev = pencil_eigs(&s.to_dense(), &sh.to_dense()).unwrap();
        let lu = SparseLu::factorize(&sh).unwrap();
        let e = lanczos_extremes(&s, &sh, &lu, 400).unwrap();
        assert!((e.min - ev[0]).abs() < 1e-9, "{} {}", e.min, ev[0]);
        assert!((e.max - ev[ev.len() - 1]).abs() < 1e-9);
        assert!(e.steps < pr.n());
    }

    #[test]
    fn factored_lanczos_matches_dense() {
        for name in ["CC-Pb1", "MC-Pb1", "SC-Pb1"] {
            let pr = preset_problem(name, 2, 1e-2, Velocity::Constant([100.0, 0.0, 0.0]), 1e-1).unwrap();
            let n = pr.n();
            let act = ActiveSet::from_parts(n, (0..n).step_by(3).filter(|&i| pr.b[i].is_some()).collect(), vec![]).unwrap();
            let factor = SchurFactor::build(&pr, &act, InnerSolverPolicy::Direct).unwrap();
            let (a_dense, _) = alpha_min_of(&pr, &act).unwrap();
            let (a_lz, a_err) = alpha_min_lanczos(&pr, &act, &factor).unwrap();
            assert!((a_dense - a_lz).abs() < 1e-8, "{name}: {a_dense} {a_lz}");
            assert!(a_err < 1e-8);
            let d = schur_pencil_extremes(&pr, &act).unwrap();
            let l = schur_pencil_lanczos(&pr, &act, &factor).unwrap();
            assert!(l.min >= d.min - 1e-9 && l.min - d.min <= l.err_min + 1e-9, "{name}: {} {}", d.min, l.min);
            assert!(l.err_min <= PENCIL_MIN_TOL * l.min.abs().max(1.0));
            assert!((d.max - l.max).abs() < 1e-8, "{name}");
        }
    }

    #[test]
    fn cayley_norms_special_cases() {
        let z = cayley_norms(&DMatrix::zeros(4, 4)).unwrap();
        assert!((z.norm1 - 1.0).abs() < 1e-14 && z.norm2.abs() < 1e-14);
        let i = cayley_norms(&DMatrix::identity(4, 4)).unwrap();
        assert!(i.norm1.abs() < 1e-14 && (i.norm2 - 0.5).abs() < 1e-14);
        assert!(cayley_norms(&(-DMatrix::<f64>::identity(3, 3))).is_err());
    }

    #[test]
    fn zeta_full_active_control() {
        let pr = preset_problem("CC-Pb1", 1, 1e-2, Velocity::zero(), 0.0).unwrap();
        let z = zeta_bounds(&pr, &ActiveSet::full(pr.n())).unwrap();
        assert!((z.zeta - 1.0).abs() < 1e-10);
        assert!((z.bound - 5.0).abs() < 1e-9);
        assert!((z.lam_max - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zeta_rejects_mixed() {
        let pr = preset_problem("MC-Pb1", 1, 1e-2, Velocity::zero(), 1e-1).unwrap();
        assert!(matches!(zeta_bounds(&pr, &ActiveSet::empty(pr.n())), Err(Error::Unsupported(_))));
    }

    #[test]
    fn preconditioned_full_active_is_unit() {
        let pr = preset_problem("CC-Pb1", 1, 1e-2, Velocity::zero(), 0.0).unwrap();
        let r = preconditioned_spectrum_check(&pr, &ActiveSet::full(pr.n())).unwrap();
        assert!(r.ipf_eigs.iter().all(|v| (v - 1.0).abs() < 1e-8));
        assert!(r.pass(1e-8), "{r:?}");
    }
}
