use super::SolverError;

/// Jacobi preconditioner from an inverse diagonal.
pub fn jacobi(inv_diag: &[f64]) -> impl FnMut(&[f64], &mut [f64]) + '_ {
    move |r, z| {
        for i in 0..r.len() {
            z[i] = r[i] * inv_diag[i];
        }
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `||A x - b|| / ||b||` (recursively updated).
    pub residual: f64,
    pub converged: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four fixed-order partial sums: deterministic and a little faster than a
    // single accumulator.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Preconditioned conjugate gradients for a symmetric positive definite `A`.
///
/// `apply(v, out)` writes `A v` into `out`. `precondition(r, z)`, when given,
/// writes an approximation of `A^{-1} r` into `z`; plain CG otherwise. `x0` is
/// an optional warm start. Hitting `max_iters` is reported through
/// `converged`, not as an error.
pub fn cg_solve<F>(
    mut apply: F,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
    mut precondition: Option<&mut dyn FnMut(&[f64], &mut [f64])>,
) -> Result<CgResult, SolverError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if !b_norm.is_finite() {
        return Err(SolverError::NonFiniteEncountered);
    }
    if b_norm == 0.0 {
        return Ok(CgResult {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut ap = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        apply(&x, &mut ap);
        for i in 0..n {
            r[i] -= ap[i];
        }
    }
    let mut precondition = |r: &[f64], z: &mut [f64]| match precondition.as_mut() {
        Some(m) => m(r, z),
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    let mut iterations = 0;
    while residual > tol && iterations < max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(SolverError::NonFiniteEncountered);
        }
        if pap <= 0.0 {
            // Direction of zero or negative curvature: A is not positive definite here.
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_next;
        residual = dot(&r, &r).sqrt() / b_norm;
        iterations += 1;
        if !residual.is_finite() {
            return Err(SolverError::NonFiniteEncountered);
        }
    }
    Ok(CgResult {
        x,
        iterations,
        converged: residual <= tol,
        residual,
    })
}
