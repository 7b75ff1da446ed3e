use crate::error::{Error, Result};
use crate::krylov::{check_system, residual, SolveStats};
use crate::sparse::{dot, norm2, LinearOperator};

/// Conjugate gradients on `P^{-1} A x = P^{-1} b` in the inner product
/// `<u, v>_H = u^T H v`, where `prec` applies `P^{-1}` (block triangular) and
/// `metric` applies `H`. Both inner products must stay positive.
pub fn bpcg(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    metric: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    target: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = check_system(op, prec, b, x0)?;
    if metric.nrows() != n || metric.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: metric.nrows() });
    }
    let mut stats = SolveStats::default();
    let mut x = x0.to_vec();
    let r = residual(op, b, &x)?;
    stats.residual_history.push(norm2(&r));
    if norm2(&r) <= target {
        stats.converged = true;
        return Ok((x, stats));
    }
    let h_dot = |u: &[f64], v: &[f64]| -> Result<f64> { Ok(dot(&metric.apply_vec(v)?, u)) };

    let mut z = prec.apply_vec(&r)?;
    let mut p = z.clone();
    let mut zz = h_dot(&z, &z)?;
    if zz <= 0.0 {
        stats.breakdown_reason = Some("indefinite metric".into());
        return Err(Error::IndefiniteMetric(zz));
    }
    let mut q = vec![0.0; n];
    for itn in 1..=maxit {
        op.apply(&p, &mut q)?;
        let w = prec.apply_vec(&q)?;
        let wp = h_dot(&w, &p)?;
        if wp <= 0.0 {
            stats.breakdown_reason = Some("indefinite metric".into());
            return Err(Error::IndefiniteMetric(wp));
        }
        let alpha = zz / wp;
        for i in 0..n {
            x[i] += alpha * p[i];
            z[i] -= alpha * w[i];
        }
        let rnorm = norm2(&residual(op, b, &x)?);
        stats.residual_history.push(rnorm);
        stats.iterations = itn;
        if rnorm <= target {
            stats.converged = true;
            return Ok((x, stats));
        }
        let zz_new = h_dot(&z, &z)?;
        if zz_new <= 0.0 {
            if zz_new == 0.0 {
                stats.breakdown_reason = Some(format!("zero search direction with residual {rnorm:e}"));
                return Ok((x, stats));
            }
            stats.breakdown_reason = Some("indefinite metric".into());
            return Err(Error::IndefiniteMetric(zz_new));
        }
        let beta = zz_new / zz;
        zz = zz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, stats))
}
