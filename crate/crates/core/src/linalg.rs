use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::config(
            "matrix rows must be non-empty and of equal length",
        ));
    }
    Ok(DMatrix::from_row_iterator(
        r,
        c,
        rows.iter().flatten().copied(),
    ))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    is_symmetric(m) && m.iter().all(|v| v.is_finite()) && m.clone().cholesky().is_some()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Largest `λ` with `A v = λ B v`, for symmetric `A` and positive definite
/// `B`: with `B = L Lᵀ` it is the top eigenvalue of `L⁻¹ A L⁻ᵀ`.
pub fn max_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let chol = b.clone().cholesky().ok_or_else(|| {
        Error::config("generalized eigenvalue: right-hand matrix is not positive definite")
    })?;
    let l = chol.l();
    let linv = l
        .try_inverse()
        .ok_or_else(|| Error::numerical("generalized eigenvalue: singular Cholesky factor"))?;
    let c = &linv * a * linv.transpose();
    Ok(max_eigenvalue(&c))
}

/// `‖x‖_P = sqrt(xᵀ P x)`.
pub fn weighted_norm(x: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
    (x.dot(&(p * x))).max(0.0).sqrt()
}

/// Serde adapter storing a matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eigenvalue_of_scaled_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        let v = max_generalized_eigenvalue(&(&i * 4.0), &i).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_eigenvalue_matches_rayleigh_quotient_bound() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lam = max_generalized_eigenvalue(&a, &b).unwrap();
        let mut best = f64::NEG_INFINITY;
        for k in 0..20000 {
            let th = k as f64 * std::f64::consts::PI / 20000.0;
            let x = DVector::from_vec(vec![th.cos(), th.sin()]);
            best = best.max(x.dot(&(&a * &x)) / x.dot(&(&b * &x)));
        }
        assert!((lam - best).abs() < 1e-6);
    }

    #[test]
    fn rows_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_rows(&to_rows(&m)).unwrap(), m);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
