use gpmhe::gp::{fit, gram_matrix, kernel_eval, log_marginal_likelihood, Dataset, Hyperparameters};
use gpmhe::linalg::min_eigenvalue;
use proptest::prelude::*;

fn hyper(dim: usize) -> impl Strategy<Value = Hyperparameters> {
    (
        0.3..3.0f64,
        prop::collection::vec(0.3..3.0f64, dim),
        0.01..0.5f64,
    )
        .prop_map(|(sf, ls, se)| Hyperparameters::new(sf, ls, se).unwrap())
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, dim)
}

fn dataset(dim: usize, max_n: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec((point(dim), -2.0..2.0f64), 1..=max_n).prop_map(|rows| {
        let (x, y): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Dataset::new(x, y).unwrap()
    })
}

/// Dimension first, then a dataset, hyperparameters and a test point in it.
fn problem(max_n: usize) -> impl Strategy<Value = (Dataset, Hyperparameters, Vec<f64>)> {
    (1usize..=3).prop_flat_map(move |dim| (dataset(dim, max_n), hyper(dim), point(dim)))
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_and_bounded((d, h, x) in problem(4)) {
        let y = &d.inputs()[0];
        let kxy = kernel_eval(&x, y, &h).unwrap();
        prop_assert_eq!(kxy, kernel_eval(y, &x, &h).unwrap());
        prop_assert!(kxy >= 0.0 && kxy <= h.sigma_f * h.sigma_f);
        prop_assert_eq!(kernel_eval(&x, &x, &h).unwrap(), h.sigma_f * h.sigma_f);
    }

    #[test]
    fn gram_is_symmetric_positive_definite((d, h, _x) in problem(8)) {
        let k = gram_matrix(&d, &h).unwrap();
        prop_assert_eq!(&k, &k.transpose());
        let floor = h.sigma_eps * h.sigma_eps;
        prop_assert!(min_eigenvalue(&k) >= floor * (1.0 - 1e-6) - 1e-12);
    }

    #[test]
    fn posterior_variance_is_bounded((d, h, x) in problem(8)) {
        let gp = fit(&d, &h).unwrap();
        let v = gp.posterior_var(&x).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(v <= h.sigma_f * h.sigma_f + h.sigma_eps * h.sigma_eps + 1e-9);
        let (m, v2) = gp.predict(&x).unwrap();
        prop_assert_eq!(m, gp.posterior_mean(&x).unwrap());
        prop_assert_eq!(v, v2);
    }

    #[test]
    fn conditioning_never_increases_variance(
        (d, h, x, extra, ye) in (1usize..=3).prop_flat_map(|dim| {
            (dataset(dim, 6), hyper(dim), point(dim), point(dim), -2.0..2.0f64)
        })
    ) {
        let before = fit(&d, &h).unwrap().posterior_var(&x).unwrap();
        let mut bigger = d.clone();
        bigger.push(extra, ye).unwrap();
        let after = fit(&bigger, &h).unwrap().posterior_var(&x).unwrap();
        prop_assert!(after <= before + 1e-10, "{after} > {before}");
    }

    #[test]
    fn nearly_noise_free_gp_interpolates(
        ys in prop::collection::vec(-2.0..2.0f64, 2..8),
        ls in 0.2..0.6f64,
    ) {
        let xs: Vec<Vec<f64>> = (0..ys.len()).map(|i| vec![i as f64]).collect();
        let d = Dataset::new(xs.clone(), ys.clone()).unwrap();
        let gp = fit(&d, &Hyperparameters::new(1.0, vec![ls], 1e-5).unwrap()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!((gp.posterior_mean(x).unwrap() - y).abs() < 1e-6);
            prop_assert!(gp.posterior_var(x).unwrap() < 1e-8);
        }
    }

    #[test]
    fn mean_gradient_matches_central_differences((d, h, x) in problem(8)) {
        let gp = fit(&d, &h).unwrap();
        let g = gp.posterior_mean_grad(&x).unwrap();
        let step = 1e-5;
        for j in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += step;
            xm[j] -= step;
            let fd = (gp.posterior_mean(&xp).unwrap() - gp.posterior_mean(&xm).unwrap()) / (2.0 * step);
            prop_assert!(close(g[j], fd, 1e-4), "component {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn lml_gradient_matches_central_differences((d, h, _x) in problem(8)) {
        let (_, grad) = log_marginal_likelihood(&d, &h).unwrap();
        let p = h.to_log_params();
        let step = 1e-5;
        for j in 0..p.len() {
            let eval = |delta: f64| {
                let mut q = p.clone();
                q[j] += delta;
                log_marginal_likelihood(&d, &Hyperparameters::from_log_params(&q).unwrap()).unwrap().0
            };
            let fd = (eval(step) - eval(-step)) / (2.0 * step);
            prop_assert!(close(grad[j], fd, 1e-4), "parameter {j}: {} vs {fd}", grad[j]);
        }
    }
}

#[test]
fn far_field_reverts_to_prior() {
    let d = Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 0.5]], vec![1.0, -1.0]).unwrap();
    let h = Hyperparameters::new(1.5, vec![0.5, 0.5], 0.1).unwrap();
    let gp = fit(&d, &h).unwrap();
    let (m, v) = gp.predict(&[50.0, -50.0]).unwrap();
    assert_eq!(m, 0.0);
    assert_eq!(v, h.max_variance());
}
