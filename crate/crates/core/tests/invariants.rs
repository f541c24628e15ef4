//! Property tests for the conserved quantities and exact identities of the
//! flow, the analytic references and the integrator.

use faer::Mat;
use floquet_flow::analytics::{
    flow_kernel_f, instanton_closed_form, instanton_constants, instanton_reduced_step, InstantonState,
};
use floquet_flow::flow::{norm_balance_residual, richardson_check, run_flow, FlowConfig};
use floquet_flow::hilbert::{build_drive, build_static, Boundary, SpinChainParams};
use floquet_flow::opkernel::{frobenius_norm, hermiticity_defect, to_complex, trace};
use floquet_flow::oscillator::{
    extract_coefficients, fock_embedding, run_oscillator, OscillatorParams, OscillatorState,
};
use floquet_flow::c64;
use proptest::prelude::*;

fn chain_strategy() -> impl Strategy<Value = SpinChainParams> {
    (3usize..=5, -1.5..1.5f64, -1.0..1.0f64, -0.5..0.5f64, 0.1..2.5f64, 4.0..12.0f64).prop_map(
        |(length, j, j2, bx, ratio, omega)| SpinChainParams {
            length,
            j,
            j2,
            bx,
            a: ratio * omega,
            omega,
            boundary: if length >= 5 { Boundary::Periodic } else { Boundary::Open },
        },
    )
}

fn stored_flow(p: &SpinChainParams, h1_phase: f64, lambda_max: f64) -> Vec<Mat<c64>> {
    let h0 = to_complex(build_static(p).unwrap().as_ref());
    let phase = c64::new(h1_phase.cos(), h1_phase.sin());
    let h1 = to_complex(build_drive(p).unwrap().as_ref());
    let h1 = Mat::from_fn(h1.nrows(), h1.ncols(), |i, j| h1[(i, j)] * phase);
    let cfg = FlowConfig {
        step: 0.02 / p.omega,
        lambda_max,
        record_stride: 5,
        store_matrices: true,
        ..FlowConfig::default()
    };
    run_flow(h0, h1, p.omega, &cfg).unwrap().stored.into_iter().map(|s| s.h0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn trace_and_hermiticity_are_conserved(p in chain_strategy()) {
        let states = stored_flow(&p, 0.0, 0.5);
        let scale = frobenius_norm(states[0].as_ref());
        let tr0 = trace(states[0].as_ref());
        for h0 in &states {
            prop_assert!((trace(h0.as_ref()) - tr0).norm() <= 1e-8 * scale);
            prop_assert!(hermiticity_defect(h0.as_ref()) <= 1e-8);
        }
    }

    #[test]
    fn static_flow_is_gauge_invariant(p in chain_strategy(), k in 0usize..2) {
        let theta = [std::f64::consts::PI / 7.0, std::f64::consts::FRAC_PI_2][k];
        let plain = stored_flow(&p, 0.0, 0.3);
        let rotated = stored_flow(&p, theta, 0.3);
        prop_assert_eq!(plain.len(), rotated.len());
        for (a, b) in plain.iter().zip(&rotated) {
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    prop_assert!((a[(i, j)] - b[(i, j)]).norm() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn norm_balance_holds_along_the_flow(j2 in -1.0..1.0f64, ratio in 0.1..2.5f64, omega in 2.0..12.0f64) {
        let p = SpinChainParams {
            length: 4, j: 1.0, j2, bx: 0.0, a: ratio * omega, omega, boundary: Boundary::Open,
        };
        let cfg = FlowConfig { step: 1e-3, lambda_max: 1.0, record_stride: 1, ..FlowConfig::default() };
        let run = run_flow(build_static(&p).unwrap(), build_drive(&p).unwrap(), omega, &cfg).unwrap();
        prop_assert!(norm_balance_residual(&run.trajectory).unwrap() <= 1e-5);
    }

    #[test]
    fn kernel_is_one_at_zero_flow_time(z in -60.0..60.0f64, omega in 0.1..50.0f64) {
        prop_assert!((flow_kernel_f(z, 0.0, omega) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn reduced_flow_follows_the_closed_form(
        em in -2.0..2.0f64,
        en in -2.0..2.0f64,
        t_re in -0.5..0.5f64,
        t_im in -0.5..0.5f64,
        omega in 0.5..3.0f64,
    ) {
        prop_assume!(t_re.hypot(t_im) > 1e-3);
        let mut s = InstantonState { em, en, t: c64::new(t_re, t_im) };
        let (ot, lt) = instanton_constants(&s, omega, 0.0).unwrap();
        let step = 1e-3;
        for k in 1..=4000 {
            s = instanton_reduced_step(s, omega, step).unwrap();
            if k % 500 == 0 {
                let (gap, amp) = instanton_closed_form(omega, ot, lt, k as f64 * step);
                prop_assert!(((s.en - s.em) - gap).abs() <= 1e-6 * ot.max(1.0));
                prop_assert!((s.t.norm() - amp).abs() <= 1e-6 * ot.max(1.0));
            }
        }
    }

    #[test]
    fn rk4_converges_at_fourth_order(p in chain_strategy()) {
        // Without a coupling and a field every term commutes and the error is exactly zero.
        prop_assume!(p.j.abs() > 0.2 && p.bx.abs() > 0.05);
        let h0 = build_static(&p).unwrap();
        let h1 = build_drive(&p).unwrap();
        let r = richardson_check(&h0, &h1, p.omega, 2.0 / p.omega, 0.01 / p.omega).unwrap();
        prop_assert!((3.5..=4.5).contains(&r.observed_order), "{r:?}");
    }

    #[test]
    fn oscillator_matches_fock_embedding(
        omega0_frac in 0.0..0.5f64,
        omega1 in 0.01..0.1f64,
        ratio in 0.1..3.0f64,
        omega in 1.0..4.0f64,
    ) {
        // omega0 near Omega stops C1 from decaying and amplifies the truncation edge.
        let omega0 = omega0_frac * omega;
        let p = OscillatorParams { omega0, omega1, a: ratio * omega, omega };
        let cfg = FlowConfig { step: 0.01 / omega, lambda_max: 5.0 / omega, record_stride: 50, ..FlowConfig::default() };
        let reduced = run_oscillator(&p, &cfg).unwrap();
        // Small B coefficients keep the occupation far below the 40-level cap.
        let (h0, h1) = fock_embedding(&OscillatorState::initial(&p), 40).unwrap();
        let full = run_flow(h0, h1, omega, &cfg).unwrap().final_state;
        let got = extract_coefficients(full.h0.as_ref(), full.h1.as_ref(), full.lambda);
        let want = reduced.last();
        let scale = 1.0 + p.a.abs() + omega0 + omega1;
        prop_assert!((got.a0 - want.a0).abs() <= 1e-6 * scale);
        prop_assert!((got.a1 - want.a1).abs() <= 1e-6 * scale);
        prop_assert!((got.b0 - want.b0).norm() <= 1e-6 * scale);
        prop_assert!((got.b1 - want.b1).norm() <= 1e-6 * scale);
        prop_assert!((got.c1 - want.c1).norm() <= 1e-6 * scale);
    }
}
