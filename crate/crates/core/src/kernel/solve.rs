use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which the normal equations count as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Ridge sub-problem of one party: `argmin_w |phi w + s|^2 + lambda |w|^2`, that is
/// `w = (phi^T phi + lambda I)^-1 phi^T (-s)`, solved by Cholesky.
pub fn local_solve(phi: &DMatrix<f64>, s: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if phi.nrows() != s.len() {
        return Err(Error::Protocol(format!(
            "design has {} rows, residual has {}",
            phi.nrows(),
            s.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    if phi.iter().chain(s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Protocol("non-finite value in local solve".into()));
    }
    let d = phi.ncols();
    if d == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut gram = phi.tr_mul(phi);
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = -phi.tr_mul(s);
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let chol = gram.cholesky().ok_or_else(|| {
        Error::SingularSystem(format!("{d}x{d} normal equations are not positive definite"))
    })?;
    let smallest = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if smallest < PIVOT_TOLERANCE * scale {
        return Err(Error::SingularSystem(format!(
            "pivot {smallest:e} is negligible next to {scale:e}; use lambda > 0"
        )));
    }
    Ok(chol.solve(&rhs))
}

/// `v = sum_p u_p`, summed in party order.
pub fn master_aggregate(contributions: &[DVector<f64>]) -> Result<DVector<f64>> {
    let Some(first) = contributions.first() else {
        return Err(Error::Protocol("no contributions to aggregate".into()));
    };
    let mut v = DVector::zeros(first.len());
    for (p, u) in contributions.iter().enumerate() {
        if u.len() != first.len() {
            return Err(Error::Protocol(format!(
                "contribution {p} has length {}, expected {}",
                u.len(),
                first.len()
            )));
        }
        v += u;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &DVector<f64>, b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12) && a.len() == b.len()
    }

    #[test]
    fn identity_design() {
        let phi = DMatrix::identity(2, 2);
        let w = local_solve(&phi, &DVector::from_vec(vec![1.0, -2.0]), 0.0).unwrap();
        assert!(close(&w, &[-1.0, 2.0]));
        let w = local_solve(&phi, &DVector::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        assert!(close(&w, &[-0.5, 0.0]));
        let w = local_solve(&phi, &DVector::zeros(2), 0.3).unwrap();
        assert!(close(&w, &[0.0, 0.0]));
    }

    #[test]
    fn rank_deficient_without_ridge_is_singular() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let s = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(local_solve(&phi, &s, 0.0), Err(Error::SingularSystem(_))));
        assert!(local_solve(&phi, &s, 1e-3).is_ok());
    }

    #[test]
    fn normal_equations_hold() {
        let phi = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin());
        let s = DVector::from_fn(6, |i, _| (i as f64).cos());
        let w = local_solve(&phi, &s, 0.1).unwrap();
        let grad = phi.transpose() * (&phi * &w + &s) + &w * 0.1;
        assert!(grad.amax() < 1e-12);
    }

    #[test]
    fn aggregate_sums() {
        let parts = [0.5, 0.5, -1.0].map(|x| DVector::from_vec(vec![x]));
        assert!(close(&master_aggregate(&parts).unwrap(), &[0.0]));
        let bad = [DVector::zeros(1), DVector::zeros(2)];
        assert!(master_aggregate(&bad).is_err());
    }
}
