use std::time::Instant;

use super::{Preconditioner, SolveReport};
use crate::error::{Error, Result};
use crate::operator::{dot, norm2, LinearOperator};

/// Explicit residual check interval.
const CHECK_EVERY: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    pub atol: f64,
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            atol: 0.0,
            rtol: 1e-8,
            max_iter: 10_000,
        }
    }
}

fn residual<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64], out: &mut [f64]) {
    a.apply(x, out);
    for (o, &bi) in out.iter_mut().zip(b) {
        *o = bi - *o;
    }
}

/// Preconditioned conjugate gradients.
///
/// Convergence is only declared on the explicitly recomputed residual
/// `‖b − A x‖₂`, checked whenever the recurrence residual drops below the
/// tolerance and every few iterations; each check also replaces the
/// recurrence residual. Hitting `max_iter` is not an error: the report comes
/// back with `converged == false`.
pub fn cg_solve<A, M>(
    a: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &M,
    config: &CgConfig,
) -> Result<SolveReport>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "operator is {n}x{n}, right-hand side has {}",
            b.len()
        )));
    }
    if !(config.atol >= 0.0 && config.rtol >= 0.0) {
        return Err(Error::InvalidParameter("tolerances must be >= 0".into()));
    }
    let start = Instant::now();
    let tolerance = config.atol.max(config.rtol * norm2(b));
    let peak_bytes = a.heap_bytes() + precond.heap_bytes() + 6 * n * std::mem::size_of::<f64>();

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    residual(a, b, &x, &mut r);
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut res = norm2(&r);

    let finish = |solution: Vec<f64>, iterations, residual_norm, converged| SolveReport {
        solution,
        iterations,
        residual_norm,
        tolerance,
        atol: config.atol,
        rtol: config.rtol,
        converged,
        wall_time_s: start.elapsed().as_secs_f64(),
        peak_bytes,
    };
    if res <= tolerance {
        return Ok(finish(x, 0, res, true));
    }

    precond.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::Breakdown { iteration: 0, curvature: rz });
    }
    let mut p = z.clone();

    for iteration in 1..=config.max_iter {
        a.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::Breakdown { iteration, curvature });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let recurrence = norm2(&r);
        if recurrence <= tolerance || iteration % CHECK_EVERY == 0 {
            residual(a, b, &x, &mut r);
            res = norm2(&r);
            if res <= tolerance {
                return Ok(finish(x, iteration, res, true));
            }
        }

        precond.apply(&r, &mut z);
        let rz_next = dot(&r, &z);
        if !(rz_next > 0.0) {
            return Err(Error::Breakdown { iteration, curvature: rz_next });
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    residual(a, b, &x, &mut r);
    res = norm2(&r);
    let converged = res <= tolerance;
    Ok(finish(x, config.max_iter, res, converged))
}
