use num_complex::Complex64;
use proptest::prelude::*;

use cotdr::archive::TraceArchive;
use cotdr::correlator::{diff_phase, wrap_phase, xcorr, CorrTrace};
use cotdr::fibermodel::{
    apply_perturbations, build_static_response, FiberSpec, Perturbation, PerturbationKind, Reflector,
};
use cotdr::frontend::{detect_direct, propagate, DetectionConfig, DetectionMode};
use cotdr::probegen::{extend_prbs, gen_prbs, longest_zero_run};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn trace(values: Vec<Complex64>) -> CorrTrace {
    CorrTrace {
        values,
        sample_period: 1e-9,
        epoch: 0.0,
        num_averaged: 1,
    }
}

fn complex_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_correlation_matches_direct_sum(
        x in complex_vec(1..200),
        r in prop::collection::vec(-1.0f64..1.0, 1..64),
    ) {
        let fast = xcorr(&x, &r);
        for (k, v) in fast.iter().enumerate() {
            let direct: Complex64 = r
                .iter()
                .enumerate()
                .filter_map(|(j, &rj)| x.get(j + k).map(|xv| xv * rj))
                .sum();
            prop_assert!((v - direct).norm() < 1e-9, "lag {k}: {v} vs {direct}");
        }
    }

    #[test]
    fn diff_phase_ignores_common_rotation(
        a in (0.1f64..2.0, -3.0f64..3.0),
        b in (0.1f64..2.0, -3.0f64..3.0),
        rot in -10.0f64..10.0,
        scale in 0.01f64..100.0,
    ) {
        let va = Complex64::from_polar(a.0, a.1);
        let vb = Complex64::from_polar(b.0, b.1);
        let base = diff_phase(&trace(vec![va, vb]), 0, 1).unwrap();
        let r = Complex64::from_polar(scale, rot);
        let moved = diff_phase(&trace(vec![va * r, vb * r]), 0, 1).unwrap();
        prop_assert!(wrap_phase(base - moved).abs() < 1e-9);
        prop_assert!(wrap_phase(base - (b.1 - a.1)).abs() < 1e-9);
    }

    #[test]
    fn wrap_phase_lands_in_half_open_interval(x in -1e3f64..1e3) {
        let w = wrap_phase(x);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        let turns = (x - w) / (2.0 * std::f64::consts::PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn propagation_is_linear_in_the_response(
        probe in prop::collection::vec(-1.0f64..1.0, 1..40),
        h1 in complex_vec(8..9),
        h2 in complex_vec(8..9),
        k in -3.0f64..3.0,
    ) {
        let spec = FiberSpec { backscatter_coeff: -300.0, ..FiberSpec::new(1.0, 1.5) };
        let mut resp = build_static_response(&spec, 1e9, 1.55e-6).unwrap();
        let frame = probe.len() + 8;
        let mut run = |taps: Vec<Complex64>| {
            resp.taps = taps;
            propagate(&probe, &resp, frame).unwrap()
        };
        let y1 = run(h1.clone());
        let y2 = run(h2.clone());
        let sum: Vec<Complex64> = h1.iter().zip(&h2).map(|(a, b)| a * k + b).collect();
        let y = run(sum);
        for i in 0..frame {
            prop_assert!((y[i] - (y1[i] * k + y2[i])).norm() < 1e-9);
        }
    }

    #[test]
    fn noiseless_direct_detection_is_square_law(field in complex_vec(1..100), g in 0.1f64..10.0) {
        let cfg = DetectionConfig::new(DetectionMode::Direct);
        let p = detect_direct(&field, &cfg, 1);
        let scaled: Vec<Complex64> = field.iter().map(|v| v * g).collect();
        let q = detect_direct(&scaled, &cfg, 1);
        for ((f, a), b) in field.iter().zip(&p).zip(&q) {
            prop_assert!((a - f.norm_sqr()).abs() < 1e-12);
            prop_assert!((b - g * g * a).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn perturbation_leaves_echoes_in_front_untouched(
        center in 20.0f64..80.0,
        extent in 0.5f64..10.0,
        delta_t in -5.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let spec = FiberSpec {
            backscatter_coeff: -60.0,
            rng_seed: seed,
            reflectors: vec![Reflector::new(95.0, 30.0)],
            ..FiberSpec::new(100.0, 1.5)
        };
        let base = build_static_response(&spec, 1e9, 1.55e-6).unwrap();
        let pert = Perturbation {
            center,
            extent,
            kind: PerturbationKind::TemperatureStep { delta_t, start_time: 0.0 },
        };
        let start = pert.start();
        let after = apply_perturbations(&base, &spec, &[pert], 1.0, 1.55e-6).unwrap();
        for (e0, e1) in base.echoes().iter().zip(after.echoes()) {
            if e0.position <= start {
                prop_assert_eq!(e0, e1);
            } else {
                prop_assert!((e0.amplitude.norm() - e1.amplitude.norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_loss_decreases_with_distance(
        alpha in 0.01f64..2.0,
        z1 in 0.0f64..5000.0,
        dz in 1.0f64..5000.0,
    ) {
        let spec = FiberSpec { attenuation: alpha, ..FiberSpec::new(20_000.0, 1.5) };
        prop_assert!(spec.round_trip_power_loss(z1 + dz) < spec.round_trip_power_loss(z1));
        prop_assert!(spec.round_trip_power_loss(z1) <= 1.0);
    }

    #[test]
    fn archive_round_trip_is_exact_for_f32_values(
        frames in prop::collection::vec(prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), 5..6), 1..8),
        complex in any::<bool>(),
    ) {
        let traces: Vec<CorrTrace> = frames
            .iter()
            .map(|f| trace(f.iter().map(|&(a, b)| c(a as f64, if complex { b as f64 } else { 0.0 })).collect()))
            .collect();
        let arc = TraceArchive::from_traces(&traces).unwrap();
        let mut buf = Vec::new();
        arc.write(&mut buf).unwrap();
        let back = TraceArchive::read(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &arc);
        let restored = back.to_traces(1e-3);
        for (a, b) in restored.iter().zip(&traces) {
            prop_assert_eq!(&a.values, &b.values);
        }
    }
}

#[test]
fn maximal_length_sequences_are_balanced() {
    for order in 2..=16u32 {
        let seq = gen_prbs(order, &vec![true; order as usize]).unwrap();
        let ones = seq.iter().filter(|&&b| b).count();
        assert_eq!(seq.len(), (1 << order) - 1);
        assert_eq!(ones, 1 << (order - 1), "order {order}");
    }
}

#[test]
fn extension_lengthens_the_longest_zero_run() {
    for order in 3..=12u32 {
        let seq = gen_prbs(order, &vec![true; order as usize]).unwrap();
        let ext = extend_prbs(&seq).unwrap();
        assert_eq!(ext.len(), 1 << order);
        assert_eq!(longest_zero_run(&seq).1, order as usize - 1);
        assert_eq!(longest_zero_run(&ext).1, order as usize);
        assert_eq!(ext.iter().filter(|&&b| b).count(), seq.iter().filter(|&&b| b).count());
    }
}
