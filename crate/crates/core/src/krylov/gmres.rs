use crate::error::{Error, Result};
use crate::krylov::{check_system, residual, SolveStats};
use crate::sparse::{dot, norm2, LinearOperator};

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

/// Full (unrestarted) right-preconditioned GMRES with modified Gram-Schmidt.
///
/// Stops once `||b - A x|| <= target`, checked on the explicit residual
/// whenever the Arnoldi estimate drops below the target. After `maxit`
/// iterations the last iterate is returned with `converged = false`.
pub fn gmres(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    target: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = check_system(op, prec, b, x0)?;
    let mut stats = SolveStats::default();
    let r0 = residual(op, b, x0)?;
    let beta = norm2(&r0);
    stats.residual_history.push(beta);
    if beta <= target {
        stats.converged = true;
        return Ok((x0.to_vec(), stats));
    }

    let mut v: Vec<Vec<f64>> = vec![r0.iter().map(|r| r / beta).collect()];
    let mut z: Vec<Vec<f64>> = Vec::new();
    // columns of the Hessenberg matrix after rotation, i.e. R
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut w = vec![0.0; n];

    let assemble = |z: &[Vec<f64>], h: &[Vec<f64>], g: &[f64]| -> Vec<f64> {
        let m = h.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                s -= h[k][i] * yk;
            }
            y[i] = s / h[i][i];
        }
        let mut x = x0.to_vec();
        for (zk, yk) in z.iter().zip(&y) {
            for (xi, zi) in x.iter_mut().zip(zk) {
                *xi += yk * zi;
            }
        }
        x
    };

    for j in 0..maxit {
        let zj = prec.apply_vec(&v[j])?;
        op.apply(&zj, &mut w)?;
        z.push(zj);
        let wnorm0 = norm2(&w);
        let mut col = vec![0.0; j + 2];
        for (i, vi) in v.iter().enumerate() {
            let hij = dot(&w, vi);
            col[i] = hij;
            for (wk, vk) in w.iter_mut().zip(vi) {
                *wk -= hij * vk;
            }
        }
        let hnext = norm2(&w);
        col[j + 1] = hnext;
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (a, bb) = (col[i], col[i + 1]);
            col[i] = c * a + s * bb;
            col[i + 1] = -s * a + c * bb;
        }
        let (c, s) = givens(col[j], col[j + 1]);
        col[j] = c * col[j] + s * col[j + 1];
        col[j + 1] = 0.0;
        rot.push((c, s));
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        col.truncate(j + 1);
        h.push(col);
        stats.iterations = j + 1;
        let estimate = g[j + 1].abs();
        stats.residual_history.push(estimate);

        let lucky = hnext <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE);
        if h[j][j] == 0.0 {
            stats.breakdown_reason = Some("singular Hessenberg".into());
            return Err(Error::Breakdown(format!("GMRES: singular Hessenberg at iteration {}", j + 1)));
        }
        if estimate <= target || lucky {
            let x = assemble(&z, &h, &g);
            let true_res = norm2(&residual(op, b, &x)?);
            *stats.residual_history.last_mut().unwrap() = true_res;
            if true_res <= target {
                stats.converged = true;
                return Ok((x, stats));
            }
            if lucky {
                stats.breakdown_reason = Some(format!("Arnoldi breakdown with residual {true_res:e}"));
                return Err(Error::Breakdown(format!(
                    "GMRES: Arnoldi breakdown at iteration {} with residual {true_res:e}",
                    j + 1
                )));
            }
        }
        v.push(w.iter().map(|x| x / hnext).collect());
    }
    let x = assemble(&z, &h, &g);
    let true_res = norm2(&residual(op, b, &x)?);
    *stats.residual_history.last_mut().unwrap() = true_res;
    stats.converged = true_res <= target;
    Ok((x, stats))
}
