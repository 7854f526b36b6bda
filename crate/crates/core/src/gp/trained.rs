use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{factorize, gram_matrix, se_ard};
use super::{Dataset, Hyperparameters};
use crate::error::{ensure_dim, Error, Result};

/// Values in `[VAR_CLAMP, 0)` are round-off and clamp to zero; anything lower
/// is reported as a numerical error.
const VAR_CLAMP: f64 = -1e-10;

/// A GP conditioned on a dataset. Immutable after [`fit`]; all queries take
/// `&self` and are safe to share across threads.
///
/// Serializes as its dataset and hyperparameters only; deserializing refits,
/// which is deterministic, so a round trip reproduces the factor bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GpRecord", try_from = "GpRecord")]
pub struct TrainedGp {
    dataset: Dataset,
    hyper: Hyperparameters,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    jitter: f64,
    sigma_f2: f64,
    inv_ls2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GpRecord {
    hyperparameters: Hyperparameters,
    dataset: Dataset,
}

impl From<TrainedGp> for GpRecord {
    fn from(gp: TrainedGp) -> Self {
        GpRecord {
            hyperparameters: gp.hyper,
            dataset: gp.dataset,
        }
    }
}

impl TryFrom<GpRecord> for TrainedGp {
    type Error = Error;
    fn try_from(r: GpRecord) -> Result<Self> {
        fit(&r.dataset, &r.hyperparameters)
    }
}

/// Conditions a GP on `ds`: factors `K + σ_ε² I` (with jitter if needed) and
/// precomputes `α = (K + σ_ε² I)⁻¹ y`.
pub fn fit(ds: &Dataset, hyper: &Hyperparameters) -> Result<TrainedGp> {
    hyper.validate()?;
    let k = gram_matrix(ds, hyper)?;
    let sigma_f2 = hyper.sigma_f * hyper.sigma_f;
    let (chol, jitter) = factorize(&k, sigma_f2)?;
    let y = DVector::from_column_slice(ds.outputs());
    let weights = chol.solve(&y);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::numerical("GP weight vector is not finite"));
    }
    Ok(TrainedGp {
        dataset: ds.clone(),
        hyper: hyper.clone(),
        chol,
        weights,
        jitter,
        sigma_f2,
        inv_ls2: hyper.inverse_squared_lengthscales(),
    })
}

impl TrainedGp {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K + σ_ε² I + jitter·I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Diagonal jitter that the factorization needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn check_input(&self, d: &[f64]) -> Result<()> {
        ensure_dim("GP test input", self.dim(), d.len())?;
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("GP test input must be finite"));
        }
        Ok(())
    }

    /// `k(d*, D)` as a column vector.
    fn cross_covariance(&self, d: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dataset.len(),
            self.dataset
                .inputs()
                .iter()
                .map(|di| se_ard(d, di, self.sigma_f2, &self.inv_ls2)),
        )
    }

    pub fn posterior_mean(&self, d: &[f64]) -> Result<f64> {
        self.check_input(d)?;
        Ok(self.cross_covariance(d).dot(&self.weights))
    }

    pub fn posterior_var(&self, d: &[f64]) -> Result<f64> {
        self.check_input(d)?;
        let ks = self.cross_covariance(d);
        self.var_from_cross(&ks)
    }

    /// Mean and variance sharing one cross-covariance evaluation.
    pub fn predict(&self, d: &[f64]) -> Result<(f64, f64)> {
        self.check_input(d)?;
        let ks = self.cross_covariance(d);
        let mean = ks.dot(&self.weights);
        Ok((mean, self.var_from_cross(&ks)?))
    }

    fn var_from_cross(&self, ks: &DVector<f64>) -> Result<f64> {
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(ks)
            .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
        let var = self.hyper.max_variance() - v.norm_squared();
        if var >= 0.0 {
            Ok(var)
        } else if var >= VAR_CLAMP {
            Ok(0.0)
        } else {
            Err(Error::numerical(format!(
                "posterior variance {var:e} below clamp threshold {VAR_CLAMP:e}"
            )))
        }
    }

    /// Analytic gradient of the posterior mean w.r.t. the test input:
    /// `Σ_i α_i k(d*, d_i) Λ⁻¹ (d_i − d*)`.
    pub fn posterior_mean_grad(&self, d: &[f64]) -> Result<DVector<f64>> {
        self.check_input(d)?;
        Ok(self.mean_and_grad_unchecked(d).1)
    }

    pub(crate) fn mean_and_grad_unchecked(&self, d: &[f64]) -> (f64, DVector<f64>) {
        let ks = self.cross_covariance(d);
        (ks.dot(&self.weights), self.grad_from_cross(d, &ks))
    }

    /// Mean, mean gradient and variance from one cross-covariance evaluation.
    pub(crate) fn mean_grad_var_unchecked(&self, d: &[f64]) -> Result<(f64, DVector<f64>, f64)> {
        let ks = self.cross_covariance(d);
        let mean = ks.dot(&self.weights);
        let grad = self.grad_from_cross(d, &ks);
        Ok((mean, grad, self.var_from_cross(&ks)?))
    }

    fn grad_from_cross(&self, d: &[f64], ks: &DVector<f64>) -> DVector<f64> {
        let nd = self.dim();
        let mut grad = DVector::zeros(nd);
        for ((di, a), k) in self
            .dataset
            .inputs()
            .iter()
            .zip(self.weights.iter())
            .zip(ks.iter())
        {
            let kv = k * a;
            for j in 0..nd {
                grad[j] += kv * self.inv_ls2[j] * (di[j] - d[j]);
            }
        }
        grad
    }

    pub(crate) fn var_unchecked(&self, d: &[f64]) -> Result<f64> {
        let ks = self.cross_covariance(d);
        self.var_from_cross(&ks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_point(sigma_eps: f64) -> TrainedGp {
        let ds = Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap();
        fit(
            &ds,
            &Hyperparameters::new(1.0, vec![1.0], sigma_eps).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn fit_single_point_weights() {
        assert_relative_eq!(one_point(0.0).weights()[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(one_point(1.0).weights()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mean_and_variance_examples() {
        let gp = one_point(0.0);
        assert_relative_eq!(gp.posterior_mean(&[0.0]).unwrap(), 1.0, epsilon = 1e-8);
        assert_relative_eq!(gp.posterior_mean(&[1.0]).unwrap(), 0.606531, epsilon = 1e-6);
        assert_eq!(gp.posterior_mean(&[1e3]).unwrap(), 0.0);
        assert!(gp.posterior_var(&[0.0]).unwrap().abs() < 1e-12);
        assert_relative_eq!(
            gp.posterior_var(&[1.0]).unwrap(),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-12
        );
        assert_relative_eq!(gp.posterior_var(&[1.0]).unwrap(), 0.632121, epsilon = 1e-6);

        let noisy = fit(
            &Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap(),
            &Hyperparameters::new(1.3, vec![1.0], 0.2).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(
            noisy.posterior_var(&[1e4]).unwrap(),
            1.3 * 1.3 + 0.2 * 0.2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn three_point_reconstruction() {
        let ds = Dataset::new(
            vec![vec![0.1, -0.4], vec![0.7, 0.2], vec![-0.3, 0.9]],
            vec![0.5, -1.0, 2.0],
        )
        .unwrap();
        let hp = Hyperparameters::new(1.4, vec![0.8, 1.3], 0.05).unwrap();
        let gp = fit(&ds, &hp).unwrap();
        let l = gp.cholesky_factor();
        let k = gram_matrix(&ds, &hp).unwrap();
        let diff = (&l * l.transpose() - &k).norm();
        assert!(diff <= 1e-8 * k.norm());
        let y = DVector::from_column_slice(ds.outputs());
        assert!((&k * gp.weights() - &y).norm() <= 1e-8 * y.norm());
    }

    #[test]
    fn symmetric_midpoint_gradient_vanishes() {
        let ds = Dataset::new(vec![vec![-1.0, 0.3], vec![1.0, 0.3]], vec![2.0, 2.0]).unwrap();
        let gp = fit(
            &ds,
            &Hyperparameters::new(1.0, vec![0.9, 0.6], 0.0).unwrap(),
        )
        .unwrap();
        let g = gp.posterior_mean_grad(&[0.0, 0.1]).unwrap();
        assert!(g[0].abs() < 1e-14);
    }

    #[test]
    fn zero_signal_gp_is_flat() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![3.0, -2.0]).unwrap();
        let gp = fit(&ds, &Hyperparameters::new(0.0, vec![1.0], 0.1).unwrap()).unwrap();
        assert_eq!(gp.posterior_mean(&[0.4]).unwrap(), 0.0);
        assert_eq!(gp.posterior_mean_grad(&[0.4]).unwrap()[0], 0.0);
        assert_relative_eq!(gp.posterior_var(&[0.4]).unwrap(), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn wrong_input_dimension() {
        let gp = one_point(0.0);
        assert!(matches!(
            gp.posterior_mean(&[0.0, 1.0]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(gp.posterior_var(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let ds = Dataset::new(
            vec![vec![0.123456789], vec![0.7], vec![-1.3]],
            vec![0.1 + 0.2, -1.0 / 3.0, 2.0],
        )
        .unwrap();
        let gp = fit(&ds, &Hyperparameters::new(1.1, vec![0.77], 0.013).unwrap()).unwrap();
        let s = serde_json::to_string(&gp).unwrap();
        let back: TrainedGp = serde_json::from_str(&s).unwrap();
        assert_eq!(back.cholesky_factor(), gp.cholesky_factor());
        assert_eq!(back.weights(), gp.weights());
    }
}
