use std::f64::consts::PI;

use noon_core::hilbert::{BasisState, CVector, HilbertSpace, Mode, QuantumState, Qubit, StateVector, C64};
use noon_core::measure::{parity_expect, parity_expect_direct};
use noon_core::metrology::{fidelity, noon_overlap, qfi_closed, NoonDecomposition, NoonDensityModel};
use noon_core::pulses::{composite, parse_sequence, PulseOp, PulseSequence};
use proptest::prelude::*;

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::X), Just(Mode::Y)]
}

fn op() -> impl Strategy<Value = PulseOp> {
    prop_oneof![
        (0.0..4.0 * PI, -PI..PI).prop_map(|(theta, phase)| PulseOp::Carrier { theta, phase }),
        (mode(), 0.0..4.0 * PI, -PI..PI, 0usize..4)
            .prop_map(|(mode, theta, phase, ref_n)| PulseOp::Sideband { mode, theta, phase, ref_n }),
        (mode(), 0usize..4, 0usize..4)
            .prop_filter("distinct pairs", |(_, a, b)| a != b)
            .prop_map(|(mode, a, b)| PulseOp::Composite { mode, a, b }),
    ]
}

/// Random state with no population on the top level of either mode.
fn interior_state(space: HilbertSpace) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), space.dim()).prop_map(move |parts| {
        let amps = CVector::from_iterator(
            space.dim(),
            parts.iter().enumerate().map(|(i, (re, im))| {
                let b = space.basis(i);
                if b.nx + 1 >= space.dx() || b.ny + 1 >= space.dy() {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(*re, *im)
                }
            }),
        );
        StateVector::from_amplitudes(space, amps).unwrap().normalized()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pulses_preserve_norm(
        ops in prop::collection::vec(op(), 1..6),
        psi in interior_state(HilbertSpace::new(6, 6).unwrap()),
    ) {
        let mut cur = psi;
        for o in &ops {
            // only the first op is guaranteed to stay inside the space
            match o.apply(&cur) {
                Ok(next) => cur = next,
                Err(_) => break,
            }
            prop_assert!((cur.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn op_unitaries_are_unitary(o in op()) {
        let u = o.unitary(HilbertSpace::new(6, 6).unwrap()).unwrap();
        let dev = (u.adjoint() * &u - noon_core::hilbert::CMatrix::identity(u.nrows(), u.ncols())).camax();
        prop_assert!(dev < 1e-12, "deviation {dev:e}");
    }

    #[test]
    fn composite_is_exact(a in 0usize..=10, b in 0usize..=10, m in mode(), pick in any::<bool>()) {
        prop_assume!(a != b);
        let space = HilbertSpace::new(12, 12).unwrap();
        let n = if pick { a } else { b };
        let start = BasisState::new(Qubit::Down, 0, 0).with_occupation(m, n);
        let psi = StateVector::basis_state(space, Qubit::Down, start.nx, start.ny).unwrap();
        let out = composite(&psi, m, a, b).unwrap();
        let target = BasisState::new(Qubit::Up, 0, 0).with_occupation(m, n + 1);
        prop_assert!((out.population(target) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn printed_sequences_are_fixed_points(ops in prop::collection::vec(op(), 0..8)) {
        let text = PulseSequence::new(ops).to_text();
        let once = parse_sequence(&text).unwrap();
        prop_assert_eq!(parse_sequence(&once.to_text()).unwrap(), once.clone());
        prop_assert_eq!(once.to_text(), text);
    }

    #[test]
    fn noon_parity_law(n in 1usize..6, phase_s in 0.0..2.0 * PI, phi in -PI..PI) {
        let space = HilbertSpace::for_noon(n);
        let psi = StateVector::noon(space, n, phase_s).unwrap();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let expect = sign * (n as f64 * (phi - phase_s)).cos();
        let fast = parity_expect(&psi, phi).unwrap();
        prop_assert!((fast - expect).abs() < 1e-9, "{fast} vs {expect}");
        prop_assert!((parity_expect_direct(&psi, phi).unwrap() - fast).abs() < 1e-9);
    }

    #[test]
    fn model_bounds(n in 1usize..8, l1 in 0.0..1.0f64, frac in 0.0..1.0f64, theta in 0.0..PI, phase in 0.0..2.0 * PI) {
        let d = NoonDecomposition { lambda1: l1, lambda2: frac * (1.0 - l1), theta, phase };
        let m = NoonDensityModel::from_decomposition(n, d, &[(n + 1, 0)]).unwrap();
        let q = qfi_closed(n, m.contrast(), m.population_sum()).unwrap();
        prop_assert!(q.qfi <= (n * n) as f64 * (1.0 + 1e-12));
        let f = fidelity(m.contrast(), m.p_n0, m.p_0n).unwrap().value;
        let direct = noon_overlap(&m.to_density(HilbertSpace::for_noon(n)).unwrap(), n, phase).unwrap();
        prop_assert!((f - direct).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
    }
}
