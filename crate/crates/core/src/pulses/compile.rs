use std::f64::consts::{FRAC_PI_2, PI};

use super::{PulseOp, PulseSequence};
use crate::error::{Error, Result};
use crate::hilbert::Mode;

fn bsb(mode: Mode, theta: f64, ref_n: usize) -> PulseOp {
    PulseOp::Sideband { mode, theta, phase: 0.0, ref_n }
}

const CARRIER_PI: PulseOp = PulseOp::Carrier { theta: PI, phase: 0.0 };

/// Pulse schedule taking `|↓,0,0⟩` to `(|↓,N,0⟩ + e^{iNφ_S}|↓,0,N⟩)/√2`.
///
/// Ladder up to `|↓,k_X,k_Y⟩` with `k_X = ⌊(N−1)/2⌋`, `k_Y = ⌊N/2⌋`, X
/// first, then split and swap populations between the two modes with
/// composite pulses.
pub fn noon_sequence(n: usize) -> Result<PulseSequence> {
    if n == 0 {
        return Err(Error::invalid("NOON number must be at least 1"));
    }
    let kx = (n - 1) / 2;
    let ky = n / 2;
    let mut ops = Vec::with_capacity(5 * n);

    for (mode, k) in [(Mode::X, kx), (Mode::Y, ky)] {
        for i in 0..k {
            ops.push(bsb(mode, PI, i));
            ops.push(CARRIER_PI);
        }
    }

    ops.push(bsb(Mode::X, FRAC_PI_2, kx));
    for m in 1..=kx {
        ops.push(PulseOp::Composite { mode: Mode::Y, a: ky - m, b: ky + m - 1 });
        ops.push(PulseOp::Composite { mode: Mode::X, a: kx + m, b: kx - m });
    }
    if n % 2 == 1 {
        ops.push(bsb(Mode::Y, PI, n - 1));
    } else {
        ops.push(PulseOp::Composite { mode: Mode::Y, a: 0, b: n - 1 });
        ops.push(bsb(Mode::X, PI, n - 1));
    }
    ops.push(CARRIER_PI);

    Ok(PulseSequence::new(ops).with_target(n))
}
