use crate::error::{Error, Result};
use crate::krylov::{check_system, residual, SolveStats};
use crate::sparse::{dot, norm2, LinearOperator};

/// Preconditioned MINRES for symmetric `A` and symmetric positive definite
/// preconditioner `P` (applied as `P^{-1}`).
///
/// The unpreconditioned residual is recomputed explicitly every iteration and
/// drives the stopping test.
pub fn minres(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    target: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = check_system(op, prec, b, x0)?;
    let mut stats = SolveStats::default();
    let mut x = x0.to_vec();
    let mut r1 = residual(op, b, &x)?;
    let rnorm0 = norm2(&r1);
    stats.residual_history.push(rnorm0);
    if rnorm0 <= target {
        stats.converged = true;
        return Ok((x, stats));
    }
    let mut y = prec.apply_vec(&r1)?;
    let beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        stats.breakdown_reason = Some("indefinite preconditioner".into());
        return Err(Error::IndefinitePreconditioner(beta1));
    }
    let beta1 = beta1.sqrt();

    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln) = (0.0, 0.0);
    let mut phibar = beta1;
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];

    for itn in 1..=maxit {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        op.apply(&v, &mut av)?;
        if itn >= 2 {
            let f = beta / oldb;
            for (a, r) in av.iter_mut().zip(&r1) {
                *a -= f * r;
            }
        }
        let alfa = dot(&v, &av);
        let f = alfa / beta;
        for (a, r) in av.iter_mut().zip(&r2) {
            *a -= f * r;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&av);
        y = prec.apply_vec(&r2)?;
        oldb = beta;
        let bsq = dot(&r2, &y);
        if bsq < 0.0 {
            stats.breakdown_reason = Some("indefinite preconditioner".into());
            return Err(Error::IndefinitePreconditioner(bsq));
        }
        beta = bsq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }

        let rnorm = norm2(&residual(op, b, &x)?);
        stats.residual_history.push(rnorm);
        stats.iterations = itn;
        if rnorm <= target {
            stats.converged = true;
            return Ok((x, stats));
        }
        if beta <= 1e-14 * beta1 {
            // the Krylov space is exhausted; no further progress is possible
            stats.breakdown_reason = Some(format!("Lanczos breakdown with residual {rnorm:e}"));
            return Ok((x, stats));
        }
    }
    Ok((x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testing::*;
    use crate::krylov::gmres;
    use crate::sparse::{FnOperator, Identity, SparseMatrix};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn diagonal_system() {
        let a = SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let (x, st) = minres(&a, &Identity(3), &[1.0, 2.0, 3.0], &[0.0; 3], 1e-12, 1000).unwrap();
        assert!(st.converged);
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_indefinite_with_spd_prec() {
        let n = 40;
        let r = random_matrix(n, 11);
        let mut a = &r + r.transpose();
        for i in 0..n {
            a[(i, i)] += if i % 2 == 0 { 3.0 } else { -3.0 };
        }
        let q = random_matrix(n, 12);
        let p = &q * q.transpose() + DMatrix::identity(n, n) * n as f64;
        let pinv = p.try_inverse().unwrap();
        let b = random_vector(n, 13);
        let target = 1e-11 * norm2(&b);
        let (x, st) = minres(&dense_op(&a), &dense_op(&pinv), &b, &vec![0.0; n], target, 1000).unwrap();
        assert!(st.converged);
        let exact = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = (DVector::from_column_slice(&x) - &exact).norm() / exact.norm();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn agrees_with_gmres_early_iterations() {
        let n = 30;
        let r = random_matrix(n, 14);
        let a = &r + r.transpose();
        let b = random_vector(n, 15);
        let (_, sm) = minres(&dense_op(&a), &Identity(n), &b, &vec![0.0; n], 0.0, 5).unwrap();
        let (_, sg) = gmres(&dense_op(&a), &Identity(n), &b, &vec![0.0; n], 0.0, 5).unwrap();
        for k in 0..5 {
            let (m, g) = (sm.residual_history[k], sg.residual_history[k]);
            assert!((m - g).abs() <= 1e-6 * g, "k={k}: {m} vs {g}");
        }
    }

    #[test]
    fn negative_preconditioner_is_rejected() {
        let neg = FnOperator::new(2, |x: &[f64], y: &mut [f64]| {
            y[0] = -x[0];
            y[1] = -x[1];
            Ok(())
        });
        let r = minres(&Identity(2), &neg, &[1.0, 1.0], &[0.0; 2], 1e-12, 10);
        assert!(matches!(r, Err(Error::IndefinitePreconditioner(_))));
    }
}
