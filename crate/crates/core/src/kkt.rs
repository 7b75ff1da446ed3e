//! KKT residual, active sets and the reduced Newton system.

use crate::error::{Error, Result};
use crate::grid::DiscreteProblem;
use crate::sparse::operator::check_dims;
use crate::sparse::{norm2, LinearOperator, SparseMatrix};

/// State, control, adjoint and multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct KktPoint {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
}

impl KktPoint {
    pub fn zeros(n: usize) -> Self {
        Self { y: vec![0.0; n], u: vec![0.0; n], p: vec![0.0; n], mu: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        for v in [&self.y, &self.u, &self.p, &self.mu] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        Ok(())
    }
}

/// Partition of the nodes into upper-active, lower-active and inactive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    pub upper: Vec<usize>,
    pub lower: Vec<usize>,
    pub inactive: Vec<usize>,
    /// Sorted union of `upper` and `lower`; fixes the ordering of the multiplier block.
    pub active: Vec<usize>,
    n: usize,
}

impl ActiveSet {
    pub fn from_parts(n: usize, mut upper: Vec<usize>, mut lower: Vec<usize>) -> Result<Self> {
        upper.sort_unstable();
        lower.sort_unstable();
        let mut flag = vec![0u8; n];
        for &i in upper.iter().chain(&lower) {
            if i >= n {
                return Err(Error::DimensionMismatch { expected: n, found: i });
            }
            if flag[i] != 0 {
                return Err(Error::InvalidProblem(format!("index {i} appears twice in the active set")));
            }
            flag[i] = 1;
        }
        let inactive = (0..n).filter(|&i| flag[i] == 0).collect();
        let active = (0..n).filter(|&i| flag[i] == 1).collect();
        Ok(Self { upper, lower, inactive, active, n })
    }

    pub fn empty(n: usize) -> Self {
        Self::from_parts(n, Vec::new(), Vec::new()).expect("empty set is valid")
    }

    /// Every node upper-active.
    pub fn full(n: usize) -> Self {
        Self::from_parts(n, (0..n).collect(), Vec::new()).expect("full set is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Diagonal of the projector `Pi = P^T P`.
    pub fn pi(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &i in &self.active {
            d[i] = 1.0;
        }
        d
    }

    /// `pos[i]` is the slot of node `i` in the multiplier block, if active.
    pub fn positions(&self) -> Vec<Option<usize>> {
        let mut pos = vec![None; self.n];
        for (k, &i) in self.active.iter().enumerate() {
            pos[i] = Some(k);
        }
        pos
    }

    /// `P x`.
    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&i| x[i]).collect()
    }

    /// `P^T z`.
    pub fn scatter(&self, z: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&i, &v) in self.active.iter().zip(z) {
            x[i] = v;
        }
        x
    }

    /// Sizes `(|A^b|, |A^a|, |I|)`.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.upper.len(), self.lower.len(), self.inactive.len())
    }
}

fn constraint_value(problem: &DiscreteProblem, u: f64, y: f64) -> f64 {
    problem.alpha_u() * u + problem.alpha_y() * y
}

/// `C_i = mu_i - max(0, mu_i + c(v - b)_i) - min(0, mu_i + c(v - a)_i)` with
/// `v = alpha_u u + alpha_y y`; infinite bounds drop their term.
pub fn complementarity(
    u: &[f64],
    y: &[f64],
    mu: &[f64],
    a: &[Option<f64>],
    b: &[Option<f64>],
    alpha_u: f64,
    alpha_y: f64,
    c: f64,
) -> Vec<f64> {
    (0..mu.len())
        .map(|i| {
            let v = alpha_u * u[i] + alpha_y * y[i];
            let mut ci = mu[i];
            if let Some(bi) = b[i] {
                ci -= (mu[i] + c * (v - bi)).max(0.0);
            }
            if let Some(ai) = a[i] {
                ci -= (mu[i] + c * (v - ai)).min(0.0);
            }
            ci
        })
        .collect()
}

/// Active sets for the scaling constant stored in the problem.
pub fn active_sets(point: &KktPoint, problem: &DiscreteProblem) -> Result<ActiveSet> {
    active_sets_with(point, problem, problem.spec.c)
}

/// Strict inequalities: ties stay inactive.
pub fn active_sets_with(point: &KktPoint, problem: &DiscreteProblem, c: f64) -> Result<ActiveSet> {
    let n = problem.n();
    point.check(n)?;
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for i in 0..n {
        let v = constraint_value(problem, point.u[i], point.y[i]);
        if let Some(bi) = problem.b[i] {
            if point.mu[i] + c * (v - bi) > 0.0 {
                upper.push(i);
                continue;
            }
        }
        if let Some(ai) = problem.a[i] {
            if point.mu[i] + c * (v - ai) < 0.0 {
                lower.push(i);
            }
        }
    }
    ActiveSet::from_parts(n, upper, lower)
}

/// `F = [M(y - y_d) + L^T p + alpha_y mu; nu M u - M p + alpha_u mu; L y - M u + d; C]`.
pub fn kkt_residual(point: &KktPoint, problem: &DiscreteProblem) -> Result<Vec<f64>> {
    kkt_residual_with(point, problem, problem.spec.c)
}

pub fn kkt_residual_with(point: &KktPoint, problem: &DiscreteProblem, c: f64) -> Result<Vec<f64>> {
    let n = problem.n();
    point.check(n)?;
    let (m, nu, au, ay) = (&problem.m, problem.nu(), problem.alpha_u(), problem.alpha_y());
    let mut f = vec![0.0; 4 * n];
    let ltp = problem.lt.spmv(&point.p)?;
    let ly = problem.l.spmv(&point.y)?;
    for i in 0..n {
        f[i] = m[i] * (point.y[i] - problem.y_d[i]) + ltp[i] + ay * point.mu[i];
        f[n + i] = nu * m[i] * point.u[i] - m[i] * point.p[i] + au * point.mu[i];
        f[2 * n + i] = ly[i] - m[i] * point.u[i] + problem.d[i];
    }
    let comp = complementarity(&point.u, &point.y, &point.mu, &problem.a, &problem.b, au, ay, c);
    f[3 * n..].copy_from_slice(&comp);
    Ok(f)
}

pub fn kkt_residual_norm(point: &KktPoint, problem: &DiscreteProblem, c: f64) -> Result<f64> {
    Ok(norm2(&kkt_residual_with(point, problem, c)?))
}

/// Reduced Newton system on unknowns `(y, u, p, mu_A)`:
///
/// ```text
/// [ M      0      L^T  ay P^T ]
/// [ 0      nu M   -M   au P^T ]
/// [ L      -M     0    0      ]
/// [ ay P   au P   0    0      ]
/// ```
pub struct NewtonSystem<'a> {
    pub problem: &'a DiscreteProblem,
    pub active: ActiveSet,
    pub rhs: Vec<f64>,
}

pub fn assemble_newton_system<'a>(active: &ActiveSet, problem: &'a DiscreteProblem) -> Result<NewtonSystem<'a>> {
    NewtonSystem::new(problem, active.clone())
}

impl<'a> NewtonSystem<'a> {
    pub fn new(problem: &'a DiscreteProblem, active: ActiveSet) -> Result<Self> {
        let n = problem.n();
        if active.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: active.n() });
        }
        let mut rhs = vec![0.0; 3 * n + active.n_active()];
        for i in 0..n {
            rhs[i] = problem.m[i] * problem.y_d[i];
            rhs[2 * n + i] = -problem.d[i];
        }
        let pos = active.positions();
        for &i in &active.upper {
            rhs[3 * n + pos[i].unwrap()] = problem.b[i].ok_or_else(|| {
                Error::InvalidProblem(format!("node {i} is upper-active without an upper bound"))
            })?;
        }
        for &i in &active.lower {
            rhs[3 * n + pos[i].unwrap()] = problem.a[i].ok_or_else(|| {
                Error::InvalidProblem(format!("node {i} is lower-active without a lower bound"))
            })?;
        }
        Ok(Self { problem, active, rhs })
    }

    pub fn dim(&self) -> usize {
        3 * self.problem.n() + self.active.n_active()
    }

    /// Assembled sparse `J_k`.
    pub fn to_sparse(&self) -> SparseMatrix {
        let pr = self.problem;
        let n = pr.n();
        let (nu, au, ay) = (pr.nu(), pr.alpha_u(), pr.alpha_y());
        let mut t = Vec::with_capacity(3 * pr.l.nnz() + 6 * n);
        for i in 0..n {
            t.push((i, i, pr.m[i]));
            t.push((n + i, n + i, nu * pr.m[i]));
            t.push((n + i, 2 * n + i, -pr.m[i]));
            t.push((2 * n + i, n + i, -pr.m[i]));
        }
        for (i, j, v) in pr.l.triplets() {
            t.push((2 * n + i, j, v));
            t.push((j, 2 * n + i, v));
        }
        for (k, &i) in self.active.active.iter().enumerate() {
            let r = 3 * n + k;
            if ay != 0.0 {
                t.push((r, i, ay));
                t.push((i, r, ay));
            }
            if au != 0.0 {
                t.push((r, n + i, au));
                t.push((n + i, r, au));
            }
        }
        SparseMatrix::from_triplets(self.dim(), self.dim(), &t).expect("indices in range")
    }

    /// Residual norm `||f - J x||`.
    pub fn residual_norm(&self, x: &[f64]) -> Result<f64> {
        let jx = self.apply_vec(x)?;
        Ok(jx.iter().zip(&self.rhs).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt())
    }
}

impl LinearOperator for NewtonSystem<'_> {
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
        let (nu, au, ay) = (pr.nu(), pr.alpha_u(), pr.alpha_y());
        let (y, rest) = x.split_at(n);
        let (u, rest) = rest.split_at(n);
        let (p, mu_a) = rest.split_at(n);
        let (o1, rest) = out.split_at_mut(n);
        let (o2, rest) = rest.split_at_mut(n);
        let (o3, o4) = rest.split_at_mut(n);
        pr.lt.spmv_into(p, o1);
        pr.l.spmv_into(y, o3);
        for i in 0..n {
            let m = pr.m[i];
            o1[i] += m * y[i];
            o2[i] = nu * m * u[i] - m * p[i];
            o3[i] -= m * u[i];
        }
        for (k, &i) in self.active.active.iter().enumerate() {
            o1[i] += ay * mu_a[k];
            o2[i] += au * mu_a[k];
            o4[k] = ay * y[i] + au * u[i];
        }
        Ok(())
    }
}

/// Lifts a reduced solution to a full point, with zero multipliers on the inactive set.
pub fn expand_solution(x: &[f64], active: &ActiveSet) -> Result<KktPoint> {
    let n = active.n();
    let expected = 3 * n + active.n_active();
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: x.len() });
    }
    Ok(KktPoint {
        y: x[..n].to_vec(),
        u: x[n..2 * n].to_vec(),
        p: x[2 * n..3 * n].to_vec(),
        mu: active.scatter(&x[3 * n..]),
    })
}

/// Restricts a full point to the reduced unknowns of `active`.
pub fn warm_start_map(prev: &KktPoint, active: &ActiveSet) -> Vec<f64> {
    let mut x = Vec::with_capacity(3 * prev.n() + active.n_active());
    x.extend_from_slice(&prev.y);
    x.extend_from_slice(&prev.u);
    x.extend_from_slice(&prev.p);
    x.extend(active.gather(&prev.mu));
    x
}
