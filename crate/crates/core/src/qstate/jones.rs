//! Jones matrices for ideal waveplates and a numerical waveplate-angle solver.
//!
//! Angles are fast-axis orientations measured from horizontal. With the
//! convention `W(θ) = R(−θ)·W₀·R(θ)`, `R(θ) = [[cos θ, sin θ], [−sin θ, cos θ]]`:
//!
//! * `jones_hwp(π/8)·|H⟩ = |+⟩`
//! * `jones_qwp(π/4)·|H⟩ = |L⟩` and `jones_qwp(−π/4)·|H⟩ = |R⟩` (up to phase),
//!   where `|R⟩ = (|H⟩ + i|V⟩)/√2`.

use super::{Operator, PureState, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Passive rotation `R(θ)` of the H/V axes.
pub fn rotation(theta: f64) -> Operator {
    let (s, c) = theta.sin_cos();
    Operator::from_row_slice(
        2,
        2,
        &[
            C64::new(c, 0.0),
            C64::new(s, 0.0),
            C64::new(-s, 0.0),
            C64::new(c, 0.0),
        ],
    )
}

fn retarder(theta: f64, slow: C64) -> Operator {
    let w0 = Operator::from_row_slice(
        2,
        2,
        &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), slow],
    );
    rotation(-theta) * w0 * rotation(theta)
}

/// Half-wave plate, `diag(1, −1)` at `theta = 0`.
pub fn jones_hwp(theta: f64) -> Operator {
    retarder(theta, C64::new(-1.0, 0.0))
}

/// Quarter-wave plate, `diag(1, i)` at `theta = 0`.
pub fn jones_qwp(theta: f64) -> Operator {
    retarder(theta, C64::new(0.0, 1.0))
}

/// Waveplate orientation pair. Light passes the QWP first, then the HWP:
/// the combined operator is `jones_hwp(hwp)·jones_qwp(qwp)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    /// QWP fast axis, radians in `[0, π)`.
    pub qwp: f64,
    /// HWP fast axis, radians in `[0, π/2)`.
    pub hwp: f64,
}

impl WaveplateSetting {
    pub fn operator(&self) -> Operator {
        jones_hwp(self.hwp) * jones_qwp(self.qwp)
    }

    pub fn qwp_deg(&self) -> f64 {
        self.qwp.to_degrees()
    }

    pub fn hwp_deg(&self) -> f64 {
        self.hwp.to_degrees()
    }
}

fn transfer(input: &PureState, target: &PureState, qwp: f64, hwp: f64) -> f64 {
    // closed forms of jones_qwp / jones_hwp, kept allocation-free for the grid scan
    let (s, c) = qwp.sin_cos();
    let i = C64::new(0.0, 1.0);
    let q00 = c * c + i * (s * s);
    let q01 = c * s - i * (c * s);
    let q11 = s * s + i * (c * c);
    let (s2, c2) = (2.0 * hwp).sin_cos();
    let (a, b) = (input.amplitude(0), input.amplitude(1));
    let (x, y) = (q00 * a + q01 * b, q01 * a + q11 * b);
    let out0 = c2 * x + s2 * y;
    let out1 = s2 * x - c2 * y;
    (target.amplitude(0).conj() * out0 + target.amplitude(1).conj() * out1).norm_sqr()
}

/// Finds QWP/HWP angles mapping `input` onto `target` (single-qubit states),
/// maximizing `|⟨target|HWP·QWP|input⟩|²`.
///
/// A 0.5° grid scan is followed by a shrinking pattern search. Ties on the
/// grid keep the first point in scan order (QWP outer, HWP inner, ascending),
/// so `|H⟩ → |+⟩` resolves to QWP 0°, HWP 22.5°.
pub fn waveplate_angles(input: &PureState, target: &PureState) -> WaveplateSetting {
    assert!(
        input.qubits() == 1 && target.qubits() == 1,
        "waveplate_angles works on single qubits"
    );
    const STEPS: usize = 360;
    let dq = PI / STEPS as f64;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..STEPS {
        let q = i as f64 * dq;
        for j in 0..STEPS / 2 {
            let h = j as f64 * dq;
            let f = transfer(input, target, q, h);
            if f > best.2 + 1e-12 {
                best = (q, h, f);
            }
        }
    }
    let (mut q, mut h, mut f) = best;
    let mut step = dq / 2.0;
    while step > 1e-11 && f < 1.0 - 1e-15 {
        let mut moved = false;
        for (dqs, dhs) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let cand = transfer(input, target, q + dqs, h + dhs);
            if cand > f {
                q += dqs;
                h += dhs;
                f = cand;
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    WaveplateSetting {
        qwp: q.rem_euclid(PI),
        hwp: h.rem_euclid(FRAC_PI_2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{check_unitary, MubState};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8};

    fn phase_free_eq(a: &Operator, b: &Operator) -> bool {
        // compare after removing the phase of the largest entry of `a`
        let (idx, _) = a
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .unwrap();
        let ph = b.as_slice()[idx] / a.as_slice()[idx];
        a.iter().zip(b.iter()).all(|(x, y)| (x * ph - y).norm() < 1e-12)
    }

    #[test]
    fn plates_are_unitary() {
        for k in 0..50 {
            let t = k as f64 * 0.137 - 3.0;
            check_unitary(&jones_hwp(t)).unwrap();
            check_unitary(&jones_qwp(t)).unwrap();
        }
    }

    #[test]
    fn zero_angle_forms() {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        assert!(phase_free_eq(
            &jones_hwp(0.0),
            &Operator::from_row_slice(2, 2, &[l, o, o, -l])
        ));
        assert!(phase_free_eq(
            &jones_qwp(0.0),
            &Operator::from_row_slice(2, 2, &[l, o, o, i])
        ));
    }

    #[test]
    fn hwp_on_h() {
        let h = MubState::H.state();
        let same = h.apply_unitary(&jones_hwp(0.0), &[0]).unwrap();
        assert!(same.overlap(&h) > 1.0 - 1e-15);
        let plus = h.apply_unitary(&jones_hwp(FRAC_PI_8), &[0]).unwrap();
        // R(−θ)·diag(1,−1)·R(θ) at θ = 22.5° is [[cos 45°, sin 45°], [sin 45°, −cos 45°]]
        assert!((plus.amplitude(0) - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((plus.amplitude(1) - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn qwp_circular_convention() {
        let h = MubState::H.state();
        let l = h.apply_unitary(&jones_qwp(FRAC_PI_4), &[0]).unwrap();
        assert!(l.overlap(&MubState::L.state()) > 1.0 - 1e-14);
        let r = h.apply_unitary(&jones_qwp(-FRAC_PI_4), &[0]).unwrap();
        assert!(r.overlap(&MubState::R.state()) > 1.0 - 1e-14);
    }

    #[test]
    fn solver_plus_grid_solution() {
        let s = waveplate_angles(&MubState::H.state(), &MubState::Plus.state());
        assert!(s.qwp_deg().abs() < 1e-9);
        assert!((s.hwp_deg() - 22.5).abs() < 1e-9);
    }

    #[test]
    fn solver_reaches_all_mub_states() {
        for m in MubState::ALL {
            let s = waveplate_angles(&MubState::H.state(), &m.state());
            let out = MubState::H.state().apply_unitary(&s.operator(), &[0]).unwrap();
            assert!(out.overlap(&m.state()) > 1.0 - 1e-12, "{m}: {s:?}");
            let back = waveplate_angles(&m.state(), &MubState::H.state());
            let out = m.state().apply_unitary(&back.operator(), &[0]).unwrap();
            assert!(out.overlap(&MubState::H.state()) > 1.0 - 1e-12, "{m}");
        }
    }
}
