//! Uniform 3D grids, upwind convection-diffusion operators and problem data.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxDomain {
    pub fn cube(lo: f64, hi: f64) -> Self {
        Self { lo: [lo; 3], hi: [hi; 3] }
    }
}

/// Interior nodes of a uniform grid with `n1d = 2^{p+1} - 1` points per axis,
/// numbered lexicographically with the first coordinate fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub level: usize,
    pub n1d: usize,
    pub spacing: [f64; 3],
    pub domain: BoxDomain,
}

pub fn build_grid(level: usize, domain: BoxDomain) -> Result<Grid> {
    if level == 0 {
        return Err(Error::InvalidGrid("level must be at least 1".into()));
    }
    if level > 8 {
        return Err(Error::InvalidGrid(format!("level {level} is too large")));
    }
    for a in 0..3 {
        let extent = domain.hi[a] - domain.lo[a];
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidGrid(format!("nonpositive extent {extent} on axis {a}")));
        }
    }
    let cells = 1usize << (level + 1);
    let spacing = std::array::from_fn(|a| (domain.hi[a] - domain.lo[a]) / cells as f64);
    Ok(Grid { level, n1d: cells - 1, spacing, domain })
}

impl Grid {
    pub fn n_h(&self) -> usize {
        self.n1d.pow(3)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n1d * (j + self.n1d * k)
    }

    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n1d;
        (idx % n, (idx / n) % n, idx / (n * n))
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.ijk(idx);
        let c = [i, j, k];
        std::array::from_fn(|a| self.domain.lo[a] + (c[a] + 1) as f64 * self.spacing[a])
    }

    /// Volume weight carried by both the mass matrix and the operator.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// Convection field `beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Velocity {
    Constant([f64; 3]),
    /// Divergence-free field `(-2x(1-x)(2y-1)z, (2x-1)y(1-y), (2x-1)(2y-1)z(1-z))`.
    Rotational,
}

impl Velocity {
    pub fn zero() -> Self {
        Velocity::Constant([0.0; 3])
    }

    pub fn at(&self, x: [f64; 3]) -> [f64; 3] {
        match *self {
            Velocity::Constant(b) => b,
            Velocity::Rotational => {
                let [x, y, z] = x;
                [
                    -2.0 * x * (1.0 - x) * (2.0 * y - 1.0) * z,
                    (2.0 * x - 1.0) * y * (1.0 - y),
                    (2.0 * x - 1.0) * (2.0 * y - 1.0) * z * (1.0 - z),
                ]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Velocity::Constant(b) if b.iter().all(|&v| v == 0.0))
    }
}

/// Pointwise scalar data on the domain.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Function(Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn function(f: impl Fn([f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Function(Arc::new(f))
    }

    pub fn at(&self, x: [f64; 3]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Continuous problem data. `None` bounds are infinite.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub domain: BoxDomain,
    pub nu: f64,
    pub alpha_u: f64,
    pub alpha_y: f64,
    pub beta: Velocity,
    pub bound_lo: Option<ScalarField>,
    pub bound_hi: Option<ScalarField>,
    pub target: ScalarField,
    /// Active-set scaling constant.
    pub c: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::InvalidProblem(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidProblem(format!("c must be positive, got {}", self.c)));
        }
        if self.alpha_u < 0.0 || self.alpha_y < 0.0 || self.alpha_u.max(self.alpha_y) <= 0.0 {
            return Err(Error::InvalidProblem(format!(
                "constraint weights must be nonnegative and not both zero, got ({}, {})",
                self.alpha_u, self.alpha_y
            )));
        }
        Ok(())
    }
}

/// Assembled discrete problem: `L` and diagonal `M`, both volume scaled.
#[derive(Clone, Debug)]
pub struct DiscreteProblem {
    pub grid: Grid,
    pub l: SparseMatrix,
    pub lt: SparseMatrix,
    pub m: Vec<f64>,
    pub y_d: Vec<f64>,
    pub a: Vec<Option<f64>>,
    pub b: Vec<Option<f64>>,
    pub d: Vec<f64>,
    pub spec: ProblemSpec,
}

impl DiscreteProblem {
    pub fn from_spec(level: usize, spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let grid = build_grid(level, spec.domain)?;
        let l = assemble_operator(&grid, &spec.beta);
        let m = assemble_mass(&grid);
        let (y_d, a, b) = sample_fields(&grid, &spec)?;
        let n = grid.n_h();
        Ok(Self { lt: l.transpose(), l, m, y_d, a, b, d: vec![0.0; n], grid, spec })
    }

    pub fn n(&self) -> usize {
        self.grid.n_h()
    }

    pub fn nu(&self) -> f64 {
        self.spec.nu
    }

    pub fn alpha_u(&self) -> f64 {
        self.spec.alpha_u
    }

    pub fn alpha_y(&self) -> f64 {
        self.spec.alpha_y
    }

    /// Copy with the bounds replaced by `+-inf`.
    pub fn unconstrained(&self) -> Self {
        let mut out = self.clone();
        out.a = vec![None; self.n()];
        out.b = vec![None; self.n()];
        out.spec.bound_lo = None;
        out.spec.bound_hi = None;
        out
    }
}

/// `V (A_lap + A_conv)` on interior nodes with zero Dirichlet data eliminated.
pub fn assemble_operator(grid: &Grid, beta: &Velocity) -> SparseMatrix {
    let n = grid.n1d;
    let vol = grid.cell_volume();
    let h = grid.spacing;
    let mut t = Vec::with_capacity(7 * grid.n_h());
    for idx in 0..grid.n_h() {
        let (i, j, k) = grid.ijk(idx);
        let pos = [i, j, k];
        let b = beta.at(grid.coords(idx));
        let mut diag = 0.0;
        for a in 0..3 {
            let lap = 1.0 / (h[a] * h[a]);
            let conv = b[a].abs() / h[a];
            diag += 2.0 * lap + conv;
            let mut minus = -lap;
            let mut plus = -lap;
            if b[a] > 0.0 {
                minus -= conv;
            } else if b[a] < 0.0 {
                plus -= conv;
            }
            let stride = [1, n, n * n][a];
            if pos[a] > 0 {
                t.push((idx, idx - stride, vol * minus));
            }
            if pos[a] + 1 < n {
                t.push((idx, idx + stride, vol * plus));
            }
        }
        t.push((idx, idx, vol * diag));
    }
    SparseMatrix::from_triplets(grid.n_h(), grid.n_h(), &t).expect("stencil indices in range")
}

/// Lumped mass: the cell volume on every interior node.
pub fn assemble_mass(grid: &Grid) -> Vec<f64> {
    vec![grid.cell_volume(); grid.n_h()]
}

/// Target and bounds sampled at the interior nodes.
pub fn sample_fields(grid: &Grid, spec: &ProblemSpec) -> Result<(Vec<f64>, Vec<Option<f64>>, Vec<Option<f64>>)> {
    if grid.domain != spec.domain {
        return Err(Error::InvalidProblem("grid and problem domains differ".into()));
    }
    let n = grid.n_h();
    let mut y_d = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for idx in 0..n {
        let x = grid.coords(idx);
        y_d.push(spec.target.at(x));
        let lo = spec.bound_lo.as_ref().map(|f| f.at(x)).filter(|v| v.is_finite());
        let hi = spec.bound_hi.as_ref().map(|f| f.at(x)).filter(|v| v.is_finite());
        if let (Some(l), Some(h)) = (lo, hi) {
            if l >= h {
                return Err(Error::InvalidProblem(format!("lower bound {l} not below upper bound {h} at node {idx}")));
            }
        }
        a.push(lo);
        b.push(hi);
    }
    Ok((y_d, a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    CcPb1,
    CcPb2,
    McPb1,
    ScPb1,
}

/// Constraint type selected by `(alpha_u, alpha_y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Control,
    Mixed,
    State,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::CcPb1, Preset::CcPb2, Preset::McPb1, Preset::ScPb1];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::CcPb1 => "CC-Pb1",
            Preset::CcPb2 => "CC-Pb2",
            Preset::McPb1 => "MC-Pb1",
            Preset::ScPb1 => "SC-Pb1",
        }
    }

    pub fn kind(&self) -> ConstraintKind {
        match self {
            Preset::CcPb1 | Preset::CcPb2 => ConstraintKind::Control,
            Preset::McPb1 => ConstraintKind::Mixed,
            Preset::ScPb1 => ConstraintKind::State,
        }
    }

    /// Continuous data; `epsilon` is the control weight of the mixed problem.
    pub fn spec(&self, nu: f64, beta: Velocity, epsilon: f64) -> Result<ProblemSpec> {
        let step_target = ScalarField::function(|x| if x[0].abs() <= 0.5 + 1e-12 { 1.0 } else { -2.0 });
        let spec = match self {
            Preset::CcPb1 => ProblemSpec {
                domain: BoxDomain::cube(-1.0, 1.0),
                nu,
                alpha_u: 1.0,
                alpha_y: 0.0,
                beta,
                bound_lo: Some(ScalarField::Constant(0.0)),
                bound_hi: Some(ScalarField::Constant(2.5)),
                target: step_target,
                c: 1.0,
            },
            Preset::CcPb2 => ProblemSpec {
                domain: BoxDomain::cube(0.0, 1.0),
                nu,
                alpha_u: 1.0,
                alpha_y: 0.0,
                beta,
                bound_lo: Some(ScalarField::function(|x| 0.1 * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())),
                bound_hi: Some(ScalarField::Constant(0.5)),
                target: ScalarField::function(|x| {
                    let r2: f64 = x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
                    (-64.0 * r2).exp()
                }),
                c: 1.0,
            },
            Preset::McPb1 | Preset::ScPb1 => {
                let alpha_u = if *self == Preset::ScPb1 { 0.0 } else { epsilon };
                if *self == Preset::McPb1 && !(epsilon >= 0.0) {
                    return Err(Error::InvalidProblem(format!("epsilon must be nonnegative, got {epsilon}")));
                }
                ProblemSpec {
                    domain: BoxDomain::cube(-1.0, 1.0),
                    nu,
                    alpha_u,
                    alpha_y: 1.0,
                    beta,
                    bound_lo: None,
                    bound_hi: Some(ScalarField::Constant(0.0)),
                    target: step_target,
                    c: 1.0,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        match key.as_str() {
            "cc-pb1" => Ok(Preset::CcPb1),
            "cc-pb2" => Ok(Preset::CcPb2),
            "mc-pb1" => Ok(Preset::McPb1),
            "sc-pb1" => Ok(Preset::ScPb1),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

pub fn preset_problem(name: &str, level: usize, nu: f64, beta: Velocity, epsilon: f64) -> Result<DiscreteProblem> {
    let preset: Preset = name.parse()?;
    DiscreteProblem::from_spec(level, preset.spec(nu, beta, epsilon)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    #[test]
    fn grid_sizes() {
        let g = build_grid(2, BoxDomain::cube(-1.0, 1.0)).unwrap();
        assert_eq!((g.n1d, g.n_h()), (7, 343));
        assert_eq!(g.spacing, [0.25; 3]);
        let g = build_grid(3, BoxDomain::cube(0.0, 1.0)).unwrap();
        assert_eq!((g.n1d, g.n_h()), (15, 3375));
        assert_eq!(g.spacing[0], 1.0 / 16.0);
        assert_eq!(build_grid(1, BoxDomain::cube(0.0, 1.0)).unwrap().n_h(), 27);
        assert_eq!(build_grid(4, BoxDomain::cube(0.0, 1.0)).unwrap().n_h(), 29791);
    }

    #[test]
    fn grid_errors() {
        assert!(build_grid(0, BoxDomain::cube(0.0, 1.0)).is_err());
        assert!(build_grid(2, BoxDomain::cube(1.0, 1.0)).is_err());
    }

    #[test]
    fn index_bijection() {
        let g = build_grid(2, BoxDomain::cube(0.0, 1.0)).unwrap();
        for idx in 0..g.n_h() {
            let (i, j, k) = g.ijk(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }

    #[test]
    fn laplacian_entries() {
        let g = build_grid(2, BoxDomain::cube(-1.0, 1.0)).unwrap();
        let l = assemble_operator(&g, &Velocity::zero());
        let vol = g.cell_volume();
        let c = g.index(3, 3, 3);
        assert!((l.get(c, c) - vol * 6.0 / 0.0625).abs() < 1e-12);
        assert_eq!(l.to_dense(), l.transpose().to_dense());
        // row sums vanish away from the boundary
        let ones = vec![1.0; g.n_h()];
        let s = l.spmv(&ones).unwrap();
        assert!(s[c].abs() < 1e-12);
        assert!(s[g.index(0, 3, 3)] > 0.0);
    }

    #[test]
    fn upwind_backward_difference() {
        let g = build_grid(2, BoxDomain::cube(-1.0, 1.0)).unwrap();
        let l0 = assemble_operator(&g, &Velocity::zero());
        let l = assemble_operator(&g, &Velocity::Constant([10.0, 0.0, 0.0]));
        let vol = g.cell_volume();
        let c = g.index(3, 3, 3);
        assert!((l.get(c, c) - l0.get(c, c) - vol * 10.0 / 0.25).abs() < 1e-12);
        assert!((l.get(c, c - 1) - l0.get(c, c - 1) + vol * 10.0 / 0.25).abs() < 1e-12);
        assert_eq!(l.get(c, c + 1), l0.get(c, c + 1));
    }

    #[test]
    fn linear_function_consistency() {
        let g = build_grid(2, BoxDomain::cube(0.0, 1.0)).unwrap();
        let beta = [3.0, -2.0, 0.5];
        let l = assemble_operator(&g, &Velocity::Constant(beta));
        let f = |x: [f64; 3]| 1.0 + 2.0 * x[0] - x[1] + 4.0 * x[2];
        let v: Vec<f64> = (0..g.n_h()).map(|i| f(g.coords(i))).collect();
        let lv = l.spmv(&v).unwrap();
        let expect = g.cell_volume() * (beta[0] * 2.0 - beta[1] + beta[2] * 4.0);
        for idx in 0..g.n_h() {
            let (i, j, k) = g.ijk(idx);
            if [i, j, k].iter().all(|&c| c >= 1 && c + 1 < g.n1d) {
                assert!((lv[idx] - expect).abs() < 1e-10, "{} vs {expect}", lv[idx]);
            }
        }
    }

    #[test]
    fn symmetric_part_psd_strong_convection() {
        let g = build_grid(2, BoxDomain::cube(-1.0, 1.0)).unwrap();
        let l = assemble_operator(&g, &Velocity::Constant([1000.0, 0.0, 0.0])).to_dense();
        let sym = (&l + l.transpose()) * 0.5;
        let ev = SymmetricEigen::new(sym).eigenvalues;
        assert!(ev.min() >= -1e-10);
    }

    #[test]
    fn rotational_field_is_divergence_free_and_psd() {
        let g = build_grid(2, BoxDomain::cube(0.0, 1.0)).unwrap();
        let l = assemble_operator(&g, &Velocity::Rotational).to_dense();
        let sym = (&l + l.transpose()) * 0.5;
        assert!(SymmetricEigen::new(sym).eigenvalues.min() >= -1e-10);
        let b = Velocity::Rotational.at([0.25, 0.5, 0.75]);
        assert_eq!(b[0], 0.0);
        assert_eq!(b[2], 0.0);
    }

    #[test]
    fn mass_entries() {
        let g = build_grid(2, BoxDomain::cube(-1.0, 1.0)).unwrap();
        assert!(assemble_mass(&g).iter().all(|&m| m == 0.015625));
        let g = build_grid(3, BoxDomain::cube(0.0, 1.0)).unwrap();
        assert!(assemble_mass(&g).iter().all(|&m| m == (1.0f64 / 16.0).powi(3)));
    }

    #[test]
    fn preset_samples() {
        let p = preset_problem("CC-Pb1", 2, 1e-2, Velocity::zero(), 0.0).unwrap();
        let g = &p.grid;
        let origin = g.index(3, 3, 3);
        assert_eq!(g.coords(origin), [0.0; 3]);
        assert_eq!((p.y_d[origin], p.a[origin], p.b[origin]), (1.0, Some(0.0), Some(2.5)));
        assert_eq!((p.alpha_u(), p.alpha_y(), p.n()), (1.0, 0.0, 343));

        let p = preset_problem("CC-Pb2", 2, 1e-2, Velocity::zero(), 0.0).unwrap();
        let mid = p.grid.index(3, 3, 3);
        assert_eq!(p.grid.coords(mid), [0.5; 3]);
        assert_eq!(p.y_d[mid], 1.0);
        assert!((p.a[mid].unwrap() - 0.1 * (-0.75f64).exp()).abs() < 1e-15);
        assert_eq!(p.b[mid], Some(0.5));

        let p = preset_problem("MC-Pb1", 2, 1e-4, Velocity::zero(), 1e-2).unwrap();
        let node = p.grid.index(6, 3, 3);
        assert_eq!(p.grid.coords(node), [0.75, 0.0, 0.0]);
        assert_eq!((p.y_d[node], p.a[node], p.b[node]), (-2.0, None, Some(0.0)));
        assert_eq!((p.alpha_u(), p.alpha_y()), (1e-2, 1.0));

        let p = preset_problem("SC-Pb1", 2, 1e-2, Velocity::zero(), 0.0).unwrap();
        assert_eq!((p.alpha_u(), p.alpha_y()), (0.0, 1.0));
        // |x1| = 1/2 falls on the inner plateau
        assert_eq!(p.y_d[p.grid.index(1, 3, 3)], 1.0);
    }

    #[test]
    fn preset_errors() {
        assert!(matches!(preset_problem("XX", 2, 1.0, Velocity::zero(), 0.0), Err(Error::UnknownPreset(_))));
        assert!(preset_problem("CC-Pb1", 2, 0.0, Velocity::zero(), 0.0).is_err());
        assert!(preset_problem("MC-Pb1", 2, 1.0, Velocity::zero(), -1.0).is_err());
        assert_eq!("cc_pb2".parse::<Preset>().unwrap(), Preset::CcPb2);
    }
}
