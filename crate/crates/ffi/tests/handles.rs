use std::ffi::{CStr, CString};
use std::ptr;

use opinf_core::experiment::error_l2;
use opinf_core::linalg::Tolerance;
use opinf_core::model::random_demo;
use opinf_core::opinf::{infer_velocity_model, RegressorFlags};
use opinf_core::simulate::{imex_euler_dae, Inputs, Signal, TimeGrid};
use opinf_core::transform::LerayProjector;
use opinf_core::{DenseMatrix, Vector};
use opinf_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(opinf_last_error_message()).to_string_lossy().into_owned() }
}

fn demo() -> *mut OpinfModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { opinf_model_random(0, 4, 1, 1, 0, &mut m) }, OpinfStatus::Ok);
    m
}

#[test]
fn model_dims_and_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    unsafe {
        let m = demo();
        let (mut nv, mut np, mut mi) = (0, 0, 0);
        assert_eq!(opinf_model_dims(m, &mut nv, &mut np, &mut mi), OpinfStatus::Ok);
        assert_eq!((nv, np, mi), (4, 1, 1));
        assert_eq!(opinf_model_save(m, path.as_ptr()), OpinfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(opinf_model_load(path.as_ptr(), &mut back), OpinfStatus::Ok);

        let x: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let (mut y1, mut y2) = (vec![0.0; 8], vec![0.0; 8]);
        assert_eq!(opinf_leray_apply(m, x.as_ptr(), 2, y1.as_mut_ptr()), OpinfStatus::Ok);
        assert_eq!(opinf_leray_apply(back, x.as_ptr(), 2, y2.as_mut_ptr()), OpinfStatus::Ok);
        assert_eq!(y1, y2);
        let model = random_demo(0, 4, 1, 1).unwrap();
        let expect = LerayProjector::new(&model)
            .unwrap()
            .apply_mat(&DenseMatrix::from_column_slice(4, 2, &x))
            .unwrap();
        assert_eq!(y1.as_slice(), expect.as_slice());

        opinf_model_free(m);
        opinf_model_free(back);
        opinf_model_free(ptr::null_mut());
    }
}

#[test]
fn simulate_matches_core() {
    let steps = 100;
    let inputs = CString::new("sin-decay").unwrap();
    unsafe {
        let m = demo();
        let mut v = vec![0.0; 4 * (steps + 1)];
        let mut p = vec![0.0; steps + 1];
        let st = opinf_model_simulate(
            m,
            1.0,
            steps,
            inputs.as_ptr(),
            ptr::null(),
            v.as_mut_ptr(),
            v.len(),
            p.as_mut_ptr(),
            p.len(),
        );
        assert_eq!(st, OpinfStatus::Ok, "{}", last_error());
        let model = random_demo(0, 4, 1, 1).unwrap();
        let sim = imex_euler_dae(
            &model,
            &Vector::zeros(4),
            &Inputs::new(vec![Signal::sin_decay()]),
            &TimeGrid::new(0.0, 1.0, steps).unwrap(),
        )
        .unwrap();
        assert_eq!(v.as_slice(), sim.snapshots.v.as_slice());
        assert_eq!(p.as_slice(), sim.snapshots.p.unwrap().as_slice());

        // A wrongly sized output buffer is rejected without writing.
        let mut short = vec![7.0; 10];
        let st = opinf_model_simulate(
            m,
            1.0,
            steps,
            inputs.as_ptr(),
            ptr::null(),
            short.as_mut_ptr(),
            short.len(),
            ptr::null_mut(),
            0,
        );
        assert_eq!(st, OpinfStatus::Dimension);
        assert!(short.iter().all(|&x| x == 7.0));
        opinf_model_free(m);
    }
}

#[test]
fn infer_and_roll_out() {
    // Data from a known linear-quadratic system x' = A x + H q(x) + B u.
    let (r, k) = (2, 40);
    let a = DenseMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -0.5]);
    let h = DenseMatrix::from_row_slice(2, 3, &[0.1, 0.0, -0.2, 0.05, 0.3, 0.0]);
    let b = DenseMatrix::from_row_slice(2, 1, &[1.0, -0.5]);
    let x = DenseMatrix::from_fn(r, k, |i, j| ((i + 1) as f64 * 0.37 * j as f64).sin());
    let u = DenseMatrix::from_fn(1, k, |_, j| (0.11 * j as f64).cos());
    let q = opinf_core::linalg::quadratic_features(&x);
    let xdot = &a * &x + &h * &q + &b * &u;
    unsafe {
        let mut rom = ptr::null_mut();
        let st = opinf_infer(x.as_ptr(), xdot.as_ptr(), r, k, u.as_ptr(), 1, 1, 1e-12, &mut rom);
        assert_eq!(st, OpinfStatus::Ok, "{}", last_error());
        let (mut rr, mut mm) = (0, 0);
        opinf_rom_dims(rom, &mut rr, &mut mm);
        assert_eq!((rr, mm), (2, 1));

        for (which, want) in [(OpinfOperator::A, &a), (OpinfOperator::H, &h), (OpinfOperator::B, &b)] {
            let (mut rows, mut cols) = (0, 0);
            assert_eq!(
                opinf_rom_operator(rom, which, ptr::null_mut(), 0, &mut rows, &mut cols),
                OpinfStatus::Ok
            );
            assert_eq!((rows, cols), want.shape());
            let mut buf = vec![0.0; rows * cols];
            assert_eq!(
                opinf_rom_operator(rom, which, buf.as_mut_ptr(), buf.len(), &mut rows, &mut cols),
                OpinfStatus::Ok
            );
            let got = DenseMatrix::from_column_slice(rows, cols, &buf);
            assert!((got - want).norm() < 1e-9, "{which:?}");
        }
        let (mut rows, mut cols) = (9, 9);
        opinf_rom_operator(rom, OpinfOperator::C, ptr::null_mut(), 0, &mut rows, &mut cols);
        assert_eq!((rows, cols), (0, 0));

        // Same operators as the core routine.
        let (core, _) = infer_velocity_model(&x, &xdot, Some(&u), None, RegressorFlags::quadratic(), Tolerance::Absolute(1e-12)).unwrap();
        let mut abuf = vec![0.0; 4];
        opinf_rom_operator(rom, OpinfOperator::A, abuf.as_mut_ptr(), 4, ptr::null_mut(), ptr::null_mut());
        assert_eq!(abuf.as_slice(), core.a.as_slice());

        let steps = 50;
        let mut traj = vec![0.0; r * (steps + 1)];
        let x0 = [0.2, -0.1];
        let inputs = CString::new("cos-decay").unwrap();
        let st = opinf_rom_simulate(rom, x0.as_ptr(), 1.0, steps, inputs.as_ptr(), traj.as_mut_ptr(), traj.len());
        assert_eq!(st, OpinfStatus::Ok, "{}", last_error());
        assert_eq!(&traj[..2], &x0);
        assert!(traj.iter().all(|v| v.is_finite()));

        // Input count mismatch.
        let st = opinf_rom_simulate(rom, x0.as_ptr(), 1.0, steps, ptr::null(), traj.as_mut_ptr(), traj.len());
        assert_eq!(st, OpinfStatus::Dimension);

        // Save and load keep the operators.
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("rom.json").to_str().unwrap()).unwrap();
        assert_eq!(opinf_rom_save(rom, path.as_ptr()), OpinfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(opinf_rom_load(path.as_ptr(), &mut back), OpinfStatus::Ok);
        let mut bbuf = vec![0.0; 4];
        opinf_rom_operator(back, OpinfOperator::A, bbuf.as_mut_ptr(), 4, ptr::null_mut(), ptr::null_mut());
        assert_eq!(abuf, bbuf);
        opinf_rom_free(back);

        // Threshold above every singular value.
        let mut bad = ptr::null_mut();
        let st = opinf_infer(x.as_ptr(), xdot.as_ptr(), r, k, u.as_ptr(), 1, 1, 1e30, &mut bad);
        assert_eq!(st, OpinfStatus::Numerical);
        assert!(bad.is_null());
        assert!(last_error().contains("tolerance"), "{}", last_error());
        opinf_rom_free(rom);
    }
}

#[test]
fn error_paths() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(opinf_model_random(0, 4, 1, 1, 0, ptr::null_mut()), OpinfStatus::NullPointer);
        assert_eq!(opinf_model_random(0, 1, 1, 1, 0, &mut m), OpinfStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(!last_error().is_empty());
        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(opinf_model_load(missing.as_ptr(), &mut m), OpinfStatus::Io);
        assert_eq!(
            opinf_model_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            OpinfStatus::NullPointer
        );
        let bad = CString::new("square-wave").unwrap();
        let model = demo();
        let mut v = vec![0.0; 4 * 11];
        let st = opinf_model_simulate(
            model,
            1.0,
            10,
            bad.as_ptr(),
            ptr::null(),
            v.as_mut_ptr(),
            v.len(),
            ptr::null_mut(),
            0,
        );
        assert_eq!(st, OpinfStatus::InvalidArgument);
        opinf_model_free(model);
    }
}

#[test]
fn utilities() {
    let reference = [1.0, 1.0];
    let candidate = [1.0, 0.0];
    let mut e = 0.0;
    unsafe {
        assert_eq!(
            opinf_error_l2(reference.as_ptr(), candidate.as_ptr(), 1, 2, 1.0, &mut e),
            OpinfStatus::Ok
        );
    }
    assert!((e - 0.5f64.sqrt()).abs() < 1e-15);
    let want = error_l2(
        &DenseMatrix::from_row_slice(1, 2, &reference),
        &DenseMatrix::from_row_slice(1, 2, &candidate),
        1.0,
    )
    .unwrap();
    assert_eq!(e, want);

    let x = [2.0, 3.0];
    let mut q = [0.0; 3];
    unsafe {
        assert_eq!(opinf_quadratic_features(x.as_ptr(), 2, q.as_mut_ptr(), 3), OpinfStatus::Ok);
        assert!(CStr::from_ptr(opinf_version()).to_str().unwrap().starts_with("0."));
    }
    assert_eq!(q, [4.0, 6.0, 9.0]);
}
