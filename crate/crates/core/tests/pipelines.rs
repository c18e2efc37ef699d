//! End-to-end behaviour of the three reconstruction pipelines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2star_core::image::{image_linf_diff, masked_relative_error, RealImage};
use t2star_core::phantom::{truncate_echoes, PhantomPreset};
use t2star_core::recon::{
    check_convergence_preconditions, model_data_gradient, model_data_term, recon_decoupled, recon_joint_admm,
    tune_parameters, TrainingSlice, TuneGrids,
};
use t2star_core::scenario::{build_scenario, Scenario, ScenarioSpec};
use t2star_core::subproblems::DataTerm;
use t2star_core::{ReconMethod, ReconParams};

fn small(rate: f64, noise_sigma: f64) -> Scenario {
    build_scenario(&ScenarioSpec {
        rows: 32,
        cols: 32,
        rate,
        noise_sigma,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn one_joint_iteration_equals_decoupled() {
    let s = small(0.3, 0.005);
    let params = ReconParams {
        warm_start_iters: 0,
        outer_iters: 1,
        rho: 0.0,
        ..Default::default()
    };
    let d = recon_decoupled(&s.data, &s.coils, &params).unwrap();
    let j = recon_joint_admm(&s.data, &s.coils, &params).unwrap();
    assert!(image_linf_diff(&d.r2star, &j.r2star).unwrap() <= 1e-9);
    assert!(image_linf_diff(&d.x0, &j.x0).unwrap() <= 1e-9);
    for (a, b) in d.xi.echoes().iter().zip(j.xi.echoes()) {
        assert!(image_linf_diff(a, b).unwrap() <= 1e-9);
    }
}

#[test]
fn every_method_recovers_noiseless_fully_sampled_maps() {
    let s = small(1.0, 0.0);
    let params = ReconParams::unregularized();
    for m in ReconMethod::ALL {
        let r = m.run(&s.data, &s.coils, &params).unwrap();
        let err = masked_relative_error(&s.phantom.r2star, &r.r2star, &s.mask).unwrap();
        assert!(err <= 1e-3, "{m}: r2* error {err}");
        let err_x0 = masked_relative_error(&s.phantom.x0, &r.x0, &s.mask).unwrap();
        assert!(err_x0 <= 1e-3, "{m}: x0 error {err_x0}");
    }
}

#[test]
fn echo_count_preconditions() {
    let s = small(0.5, 0.005);
    let two = truncate_echoes(&s.data, 2).unwrap();
    assert!(check_convergence_preconditions(&two).passed());
    let params = ReconParams { outer_iters: 2, ..Default::default() };
    for m in ReconMethod::ALL {
        assert!(m.run(&two, &s.coils, &params).is_ok(), "{m} rejected two echoes");
    }
    assert!(truncate_echoes(&s.data, 1).is_err());

    let one = build_scenario(&ScenarioSpec {
        rows: 16,
        cols: 16,
        echoes: 1,
        ..Default::default()
    })
    .unwrap();
    assert!(!check_convergence_preconditions(&one.data).passed());
    for m in ReconMethod::ALL {
        assert!(m.run(&one.data, &one.coils, &params).is_err(), "{m} accepted one echo");
    }
}

#[test]
fn model_gradient_matches_central_differences() {
    let s = build_scenario(&ScenarioSpec {
        rows: 16,
        cols: 16,
        rate: 0.4,
        ..Default::default()
    })
    .unwrap();
    let dt = DataTerm::new(&s.data, &s.coils, 30).unwrap();
    let theta = s.phantom.theta(s.data.times());
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let random = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| RealImage::from_fn(16, 16, |_, _| rng.gen_range(lo..hi));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x0 = random(&mut rng, 0.2, 1.0);
        let r2 = random(&mut rng, 0.01, 0.15);
        let (gx, gr) = model_data_gradient(&dt, &x0, &r2, &theta).unwrap();
        let dx = random(&mut rng, -1.0, 1.0);
        let dr = random(&mut rng, -0.01, 0.01);
        let h = 1e-5;
        let shifted = |s: f64| {
            let x = x0.zip_map(&dx, |a, b| a + s * b);
            let r = r2.zip_map(&dr, |a, b| a + s * b);
            model_data_term(&dt, &x, &r, &theta).unwrap()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let analytic: f64 = gx.as_slice().iter().zip(dx.as_slice()).map(|(a, b)| a * b).sum::<f64>()
            + gr.as_slice().iter().zip(dr.as_slice()).map(|(a, b)| a * b).sum::<f64>();
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-12));
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

fn scaled_params(p: &ReconParams, c: f64, method: ReconMethod) -> ReconParams {
    match method {
        // l1 on magnitudes scales like c; the fit terms like c^2 (H0 only shifts)
        ReconMethod::Decoupled | ReconMethod::JointAdmm => ReconParams {
            lambda1: p.lambda1 * c,
            lambda3: p.lambda3 * c * c,
            e_min: p.e_min * c,
            ..p.clone()
        },
        // l1 on X0 scales like c; the R2* term like c^2
        ReconMethod::ModelBased => ReconParams {
            lambda1: p.lambda1 * c,
            lambda2: p.lambda2 * c * c,
            e_min: p.e_min * c,
            ..p.clone()
        },
    }
}

#[test]
fn scaling_measurements_scales_density_only() {
    let s = small(0.4, 0.005);
    let c = 3.0;
    let scaled = s.data.scaled(c);
    let base = ReconParams {
        lambda1: 1e-3,
        lambda2: 0.0,
        lambda3: 1e-5,
        outer_iters: 3,
        e_min: 1e-6,
        ..Default::default()
    };
    for m in ReconMethod::ALL {
        let base = if m == ReconMethod::ModelBased { ReconParams { lambda2: 1e-5, lambda3: 0.0, ..base.clone() } } else { base.clone() };
        let a = m.run(&s.data, &s.coils, &base).unwrap();
        let b = m.run(&scaled, &s.coils, &scaled_params(&base, c, m)).unwrap();
        assert!(image_linf_diff(&a.r2star, &b.r2star).unwrap() <= 1e-6, "{m}: R2* moved");
        let x0_scaled = a.x0.map(|v| v * c);
        let rel = image_linf_diff(&x0_scaled, &b.x0).unwrap() / x0_scaled.max_abs();
        assert!(rel <= 1e-6, "{m}: X0 not scaled, relative deviation {rel}");
    }
}

#[test]
fn tuner_single_point_grids_and_supersets() {
    let s = build_scenario(&ScenarioSpec {
        rows: 16,
        cols: 16,
        preset: PhantomPreset::Blocks,
        rate: 0.5,
        ..Default::default()
    })
    .unwrap();
    let slice = TrainingSlice {
        data: &s.data,
        coils: &s.coils,
        truth_xi: &s.truth_xi,
        truth_x0: &s.phantom.x0,
        truth_r2star: &s.phantom.r2star,
        mask: &s.mask,
    };
    let base = ReconParams { outer_iters: 2, ..Default::default() };
    let single = TuneGrids {
        lambda1: vec![2e-3],
        lambda23: vec![(1e-3, 1e-5)],
        lambda_rho: vec![(0.5, 2.0)],
    };
    let out = tune_parameters(&slice, &single, &base).unwrap();
    assert_eq!(
        (out.params.lambda1, out.params.lambda2, out.params.lambda3, out.params.lambda, out.params.rho),
        (2e-3, 1e-3, 1e-5, 0.5, 2.0)
    );
    assert_eq!(out.table.len(), 3);

    let wider = TuneGrids {
        lambda1: vec![2e-3, 1e-4],
        lambda23: vec![(1e-3, 1e-5), (0.0, 0.0)],
        lambda_rho: vec![(0.5, 2.0), (1.0, 1.0)],
    };
    let out2 = tune_parameters(&slice, &wider, &base).unwrap();
    // the first stage searches a superset from the same base
    assert!(out2.best[0] <= out.best[0]);
    assert!(tune_parameters(&slice, &TuneGrids::default(), &base).is_err());
}

#[test]
fn reconstructions_are_deterministic() {
    let s = small(0.3, 0.005);
    let params = ReconParams { outer_iters: 3, ..Default::default() };
    for m in ReconMethod::ALL {
        let a = m.run(&s.data, &s.coils, &params).unwrap();
        let b = m.run(&s.data, &s.coils, &params).unwrap();
        assert_eq!(a.r2star, b.r2star);
        assert_eq!(a.x0, b.x0);
    }
}
