use std::ffi::{c_char, CString};
use std::ptr;

use gpmhe::gp::Dataset;
use gpmhe::gp::{fit, Hyperparameters};
use gpmhe::model::GpStateSpaceModel;
use gpmhe_ffi::*;
use nalgebra::DMatrix;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let len = unsafe { gpmhe_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf
        .iter()
        .take_while(|&&c| c != 0)
        .map(|&c| c as u8)
        .collect();
    assert!(len >= bytes.len());
    String::from_utf8(bytes).unwrap()
}

fn sine_gp() -> *mut GpmheGp {
    let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let mut gp = ptr::null_mut();
    let ell = [1.0];
    let st = unsafe {
        gpmhe_gp_fit(
            xs.as_ptr(),
            ys.as_ptr(),
            xs.len(),
            1,
            1.0,
            ell.as_ptr(),
            1e-3,
            &mut gp,
        )
    };
    assert_eq!(st, GpmheStatus::Ok);
    gp
}

#[test]
fn gp_fit_predict_and_grad() {
    let gp = sine_gp();
    unsafe {
        assert_eq!(gpmhe_gp_dim(gp), 1);
        let (mut m, mut v) = (0.0, 0.0);
        assert_eq!(
            gpmhe_gp_predict(gp, [1.0].as_ptr(), 1, &mut m, &mut v),
            GpmheStatus::Ok
        );
        assert!((m - 1f64.sin()).abs() < 1e-2);
        assert!((0.0..1e-3).contains(&v));
        let mut g = [0.0];
        assert_eq!(
            gpmhe_gp_mean_grad(gp, [1.0].as_ptr(), 1, g.as_mut_ptr()),
            GpmheStatus::Ok
        );
        assert!((g[0] - 1f64.cos()).abs() < 5e-2);
        let (mut sf, mut se, mut ell) = (0.0, 0.0, [0.0]);
        assert_eq!(
            gpmhe_gp_hyperparameters(gp, &mut sf, ell.as_mut_ptr(), 1, &mut se),
            GpmheStatus::Ok
        );
        assert_eq!((sf, ell[0], se), (1.0, 1.0, 1e-3));
        gpmhe_gp_free(gp);
    }
}

#[test]
fn errors_set_status_and_message() {
    let gp = sine_gp();
    unsafe {
        let mut m = 0.0;
        let st = gpmhe_gp_predict(gp, [1.0, 2.0].as_ptr(), 2, &mut m, ptr::null_mut());
        assert_eq!(st, GpmheStatus::InvalidArgument);
        assert!(last_error().contains("dimension"), "{}", last_error());
        let st = gpmhe_gp_predict(gp, [1.0].as_ptr(), 1, &mut m, ptr::null_mut());
        assert_eq!(st, GpmheStatus::NullPointer);
        assert_eq!(last_error(), "var is null");
        let mut v = 0.0;
        assert_eq!(
            gpmhe_gp_predict(gp, [1.0].as_ptr(), 1, &mut m, &mut v),
            GpmheStatus::Ok
        );
        assert_eq!(gpmhe_last_error_message(ptr::null_mut(), 0), 0);
        gpmhe_gp_free(gp);
        gpmhe_gp_free(ptr::null_mut());
    }
}

#[test]
fn trained_gp_is_seed_deterministic() {
    let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).cos()).collect();
    let hyper = |seed| unsafe {
        let mut gp = ptr::null_mut();
        assert_eq!(
            gpmhe_gp_train(xs.as_ptr(), ys.as_ptr(), xs.len(), 1, 3, seed, &mut gp),
            GpmheStatus::Ok
        );
        let (mut sf, mut se, mut ell) = (0.0, 0.0, [0.0]);
        gpmhe_gp_hyperparameters(gp, &mut sf, ell.as_mut_ptr(), 1, &mut se);
        gpmhe_gp_free(gp);
        (sf, ell[0], se)
    };
    assert_eq!(hyper(7), hyper(7));
}

fn write_linear_model(dir: &std::path::Path) -> CString {
    // x+ = 0.9 x, y = x on a 1-state, 0-input system.
    let xs: Vec<Vec<f64>> = (0..21).map(|i| vec![0.2 * i as f64]).collect();
    let h = Hyperparameters::new(2.0, vec![2.0], 1e-4).unwrap();
    let f = Dataset::new(xs.clone(), xs.iter().map(|x| 0.9 * x[0]).collect()).unwrap();
    let g = Dataset::new(xs.clone(), xs.iter().map(|x| x[0]).collect()).unwrap();
    let model = GpStateSpaceModel::from_parts(
        vec![fit(&f, &h).unwrap()],
        vec![fit(&g, &h).unwrap()],
        0,
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn model_and_estimator_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_linear_model(dir.path());
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(gpmhe_model_load(path.as_ptr(), &mut model), GpmheStatus::Ok);
        let (mut n, mut m, mut p) = (0, 0, 0);
        gpmhe_model_dims(model, &mut n, &mut m, &mut p);
        assert_eq!((n, m, p), (1, 0, 1));

        let (mut mean, mut var) = ([0.0], [0.0]);
        let d = [2.0];
        assert_eq!(
            gpmhe_model_predict_state(model, d.as_ptr(), 1, mean.as_mut_ptr(), var.as_mut_ptr()),
            GpmheStatus::Ok
        );
        assert!((mean[0] - 1.8).abs() < 1e-3);
        let mut w = [0.0];
        gpmhe_model_weight_q(model, d.as_ptr(), 1, w.as_mut_ptr());
        assert!(w[0] >= 1.0 && w[0] < 1.01);

        let mut est = ptr::null_mut();
        let st = gpmhe_estimator_new(
            model,
            5,
            0.9,
            [1.0].as_ptr(),
            [0.0].as_ptr(),
            [4.0].as_ptr(),
            [3.0].as_ptr(),
            1,
            &mut est,
        );
        assert_eq!(st, GpmheStatus::Ok, "{}", last_error());
        // Freeing the model does not invalidate the estimator.
        gpmhe_model_free(model);

        let mut x = 2.0;
        let mut xhat = [0.0];
        let mut converged = false;
        for _ in 0..15 {
            let st = gpmhe_estimator_step(
                est,
                ptr::null(),
                0,
                [x].as_ptr(),
                1,
                xhat.as_mut_ptr(),
                1,
                &mut converged,
            );
            assert_eq!(st, GpmheStatus::Ok, "{}", last_error());
            x *= 0.9;
        }
        assert_eq!(gpmhe_estimator_time(est), 15);
        assert!((xhat[0] - x).abs() < 1e-2, "{} vs {x}", xhat[0]);

        let st = gpmhe_estimator_step(
            est,
            ptr::null(),
            0,
            [1.0, 2.0].as_ptr(),
            2,
            xhat.as_mut_ptr(),
            1,
            ptr::null_mut(),
        );
        assert_eq!(st, GpmheStatus::InvalidArgument);
        assert_eq!(gpmhe_estimator_time(est), 15);
        gpmhe_estimator_free(est);
    }
}

#[test]
fn missing_model_file_is_io_error() {
    let path = CString::new("/nonexistent/model.json").unwrap();
    let mut model = ptr::null_mut();
    let st = unsafe { gpmhe_model_load(path.as_ptr(), &mut model) };
    assert_eq!(st, GpmheStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("/nonexistent/model.json"));
}

#[test]
fn bound_helpers() {
    unsafe {
        let eye = [1.0, 0.0, 0.0, 1.0];
        let (mut mu, mut m_bar) = (0.0, 0);
        assert_eq!(
            gpmhe_minimal_horizon(eye.as_ptr(), eye.as_ptr(), 2, 0.91, &mut mu, &mut m_bar),
            GpmheStatus::Ok
        );
        assert_eq!(m_bar, 15);
        assert!(mu > 0.0 && mu < 1.0);

        let mut b = 0;
        gpmhe_covering_number([0.1, 0.1].as_ptr(), [4.5, 4.5].as_ptr(), 2, 0.1, &mut b);
        assert_eq!(b, 1024);
        let mut beta = 0.0;
        gpmhe_beta(10, 0.05, &mut beta);
        assert!((beta - 2.0 * 200f64.ln()).abs() < 1e-12);
        let mut prob = 0.0;
        gpmhe_probability(2, 1, 0.05, &mut prob);
        assert!((prob - 0.857375).abs() < 1e-12);
        assert_eq!(gpmhe_beta(10, 1.5, &mut beta), GpmheStatus::InvalidArgument);
    }
}
