use proptest::prelude::*;
use qtrsp_core::precision::{
    dequantize, grid_points, quantize, uniform_ensemble, GridMode, PrecisionSpec,
};
use qtrsp_core::protocol::{bell_branches, qt_correct, BellOutcome, ClassicalMessage};
use qtrsp_core::qmath::{
    apply, fidelity, fs_angle, infidelity, partial_trace_a, rotation_y, von_neumann_entropy,
    ComplexAmp, Operator2, PureQubit, TwoQubitState,
};
use qtrsp_core::stats::estimate;
use qtrsp_core::verify::VerificationOp;
use rand::Rng;

fn qubit() -> impl Strategy<Value = PureQubit> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-zero", |(a, b, c, d)| {
            a * a + b * b + c * c + d * d > 1e-3
        })
        .prop_map(|(a, b, c, d)| {
            PureQubit::normalized(ComplexAmp::new(a, b), ComplexAmp::new(c, d)).unwrap()
        })
}

fn phase(t: f64) -> Operator2 {
    let one = ComplexAmp::new(1.0, 0.0);
    let zero = ComplexAmp::new(0.0, 0.0);
    Operator2::unitary([[one, zero], [zero, ComplexAmp::from_polar(1.0, t)]]).unwrap()
}

/// Any single-qubit unitary up to global phase is `P(a)·R_y(b)·P(c)`.
fn unitary() -> impl Strategy<Value = Operator2> {
    (0.0f64..6.3, 0.0f64..6.3, 0.0f64..6.3)
        .prop_map(|(a, b, c)| phase(a) * rotation_y(b) * phase(c))
}

fn two_qubit() -> impl Strategy<Value = TwoQubitState> {
    prop::array::uniform8(-1.0f64..1.0)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            TwoQubitState::new(
                [0, 1, 2, 3].map(|k| ComplexAmp::new(v[2 * k] / norm, v[2 * k + 1] / norm)),
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn unitaries_preserve_norm(s in qubit(), u in unitary()) {
        let t = apply(&u, &s).unwrap();
        prop_assert!((t.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitaries_preserve_fidelity(s in qubit(), t in qubit(), u in unitary()) {
        let (us, ut) = (apply(&u, &s).unwrap(), apply(&u, &t).unwrap());
        prop_assert!((fidelity(&us, &ut) - fidelity(&s, &t)).abs() < 1e-12);
    }

    #[test]
    fn fidelity_is_cos_squared_of_angle(s in qubit(), t in qubit()) {
        let a = fs_angle(&s, &t);
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-15).contains(&a));
        prop_assert!((fidelity(&s, &t) - a.cos().powi(2)).abs() < 1e-12);
        prop_assert!((infidelity(&s, &t) - a.sin().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn angle_ignores_global_phase(s in qubit(), g in 0.0f64..6.3) {
        prop_assert!(fs_angle(&s, &s.with_global_phase(g)) < 1e-7);
    }

    #[test]
    fn angle_triangle_inequality(a in qubit(), b in qubit(), c in qubit()) {
        prop_assert!(fs_angle(&a, &c) <= fs_angle(&a, &b) + fs_angle(&b, &c) + 1e-12);
    }

    #[test]
    fn reduced_state_is_a_density_operator(s in two_qubit()) {
        let rho = partial_trace_a(&s);
        let [l0, l1] = rho.eigenvalues();
        prop_assert!(l0 >= -1e-12 && l1 >= -1e-12);
        prop_assert!((l0 + l1 - 1.0).abs() < 1e-12);
        let h = von_neumann_entropy(&rho).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&h));
    }

    #[test]
    fn product_states_have_pure_marginals(a in qubit(), b in qubit()) {
        let rho = partial_trace_a(&TwoQubitState::product(&a, &b));
        prop_assert!(von_neumann_entropy(&rho).unwrap() < 1e-9);
        prop_assert!(rho.max_abs_diff(&qtrsp_core::qmath::DensityOp::from_pure(&b)) < 1e-12);
    }

    #[test]
    fn verification_operator_is_an_involution(theta in -7.0f64..7.0) {
        let m = *VerificationOp::from_theta(theta).matrix();
        prop_assert!((m * m).max_abs_diff(&Operator2::identity()) < 1e-12);
        prop_assert!(m.is_hermitian(1e-15));
        prop_assert!(m.trace().norm() < 1e-15);
    }

    #[test]
    fn teleportation_is_exact_for_any_input(s in qubit()) {
        for (b, outcome) in bell_branches(&s, &TwoQubitState::singlet()).iter().zip(BellOutcome::ALL) {
            prop_assert!((b.probability - 0.25).abs() < 1e-12);
            let out = qt_correct(&b.bob.unwrap(), &ClassicalMessage::teleportation(outcome)).unwrap();
            prop_assert!(fidelity(&s, &out) >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn estimate_ignores_order(mut xs in prop::collection::vec(0usize..5, 1..200), seed in any::<u64>()) {
        let a = estimate(&xs, 5).unwrap();
        let k = (seed as usize) % xs.len();
        xs.rotate_left(k);
        xs.reverse();
        prop_assert_eq!(a, estimate(&xs, 5).unwrap());
    }

    #[test]
    fn rotation_grid_round_trip(m in 2u32..40, t in 0.0f64..std::f64::consts::PI) {
        let spec = PrecisionSpec::real_rotation(m).unwrap();
        let g = quantize(&PureQubit::real(t), &spec).unwrap();
        prop_assert_eq!(quantize(&dequantize(&g), &spec).unwrap(), g);
        // Half a step away at most, in the wrap-aware sense.
        prop_assert!(fs_angle(&dequantize(&g), &PureQubit::real(t)) <= 0.5 * spec.phi_min() + 1e-12);
    }

    #[test]
    fn general_grid_round_trip(m in (1u32..20).prop_map(|k| 2 * k), s in qubit()) {
        let spec = PrecisionSpec::general(m).unwrap();
        let g = quantize(&s, &spec).unwrap();
        prop_assert_eq!(quantize(&dequantize(&g), &spec).unwrap(), g);
    }

    #[test]
    fn general_grid_displacement_away_from_the_pole(m in (2u32..20).prop_map(|k| 2 * k), s in qubit()) {
        let s = s.phase_aligned();
        prop_assume!(s.a1().norm_sqr() <= 0.5);
        let spec = PrecisionSpec::general(m).unwrap();
        let g = quantize(&s, &spec).unwrap();
        prop_assert!(fs_angle(&dequantize(&g), &s) <= 2.0001 * spec.phi_min());
    }
}

#[test]
fn general_quantize_is_the_nearest_grid_point() {
    let mut rng = qtrsp_core::rng::SeedStream::new(21).substream(0);
    for m in [2, 4, 6, 8, 10, 12] {
        let spec = PrecisionSpec::general(m).unwrap();
        let grid: Vec<_> = grid_points(spec).map(|g| (g, dequantize(&g))).collect();
        for _ in 0..300 {
            let mut c =
                || ComplexAmp::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let s = PureQubit::normalized(c(), c()).unwrap();
            let got = quantize(&s, &spec).unwrap();
            let best = grid
                .iter()
                .map(|(_, d)| fs_angle(d, &s))
                .fold(f64::INFINITY, f64::min);
            let d = fs_angle(&dequantize(&got), &s);
            assert!(d <= best + 1e-12, "m={m}: {d} > {best}");
        }
    }
}

#[test]
fn uniform_ensemble_hits_every_point_evenly() {
    for mode in [GridMode::RealRotation, GridMode::General] {
        let spec = PrecisionSpec::new(4, mode).unwrap();
        let card = spec.cardinality() as usize;
        let index: std::collections::BTreeMap<_, _> = grid_points(spec)
            .enumerate()
            .map(|(i, g)| (g.linear_index(), i))
            .collect();
        let draws = 100_000;
        let picks: Vec<usize> = uniform_ensemble(&spec, draws, 3)
            .iter()
            .map(|g| index[&g.linear_index()])
            .collect();
        let est = estimate(&picks, card).unwrap();
        let p = 1.0 / card as f64;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for f in est.f {
            assert!((f - p).abs() < 5.0 * sigma, "{mode}: {f} vs {p}");
        }
    }
}
