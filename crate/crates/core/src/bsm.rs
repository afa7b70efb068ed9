//! Bell-state measurement on a polarizing beam splitter.
//!
//! Photons 1 and 2 (qubits 0 and 1) meet on a PBS that transmits H and
//! reflects V. A coincidence with one photon per output port happens only for
//! `|HH⟩` or `|VV⟩`; analyzing both outputs in the ±45° basis then separates
//! `|φ⁺⟩` from `|φ⁻⟩`. Events in the `|HV⟩, |VH⟩` subspace are discarded.
//!
//! Partial distinguishability between the two photons is a single mode
//! overlap `M` that scales the `|HH⟩ ↔ |VV⟩` coherence of the two accepted
//! effects:
//!
//! ```text
//! Π± = ½(|HH⟩⟨HH| + |VV⟩⟨VV|) ± (M/2)(|HH⟩⟨VV| + |VV⟩⟨HH|)
//! Π_fail = |HV⟩⟨HV| + |VH⟩⟨VH|
//! ```

use crate::error::{invalid, Result};
use crate::photonsrc::werner_pair;
use crate::qstate::{fidelity, pauli_z, DensityMatrix, Operator, PureState, StateError, C64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsmModel {
    /// Two-photon mode overlap (interference visibility) in `[0, 1]`.
    pub mode_overlap: f64,
}

impl BsmModel {
    pub fn new(mode_overlap: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mode_overlap) {
            return Err(invalid("mode_overlap", format!("{mode_overlap} outside [0, 1]")));
        }
        Ok(Self { mode_overlap })
    }

    pub fn ideal() -> Self {
        Self { mode_overlap: 1.0 }
    }
}

impl Default for BsmModel {
    fn default() -> Self {
        Self::ideal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BsmOutcome {
    PhiPlus,
    PhiMinus,
    Fail,
}

impl BsmOutcome {
    pub const ACCEPTED: [BsmOutcome; 2] = [BsmOutcome::PhiPlus, BsmOutcome::PhiMinus];
}

/// The three effects of the analyzer on qubits (1, 2).
#[derive(Debug, Clone)]
pub struct BsmEffects {
    pub phi_plus: Operator,
    pub phi_minus: Operator,
    pub fail: Operator,
}

impl BsmEffects {
    pub fn get(&self, outcome: BsmOutcome) -> &Operator {
        match outcome {
            BsmOutcome::PhiPlus => &self.phi_plus,
            BsmOutcome::PhiMinus => &self.phi_minus,
            BsmOutcome::Fail => &self.fail,
        }
    }
}

pub fn bsm_effects(model: &BsmModel) -> Result<BsmEffects> {
    let m = BsmModel::new(model.mode_overlap)?.mode_overlap;
    let accepted = |sign: f64| {
        let mut op = Operator::zeros(4, 4);
        op[(0, 0)] = C64::new(0.5, 0.0);
        op[(3, 3)] = C64::new(0.5, 0.0);
        op[(0, 3)] = C64::new(sign * m / 2.0, 0.0);
        op[(3, 0)] = C64::new(sign * m / 2.0, 0.0);
        op
    };
    let mut fail = Operator::zeros(4, 4);
    fail[(1, 1)] = C64::new(1.0, 0.0);
    fail[(2, 2)] = C64::new(1.0, 0.0);
    Ok(BsmEffects {
        phi_plus: accepted(1.0),
        phi_minus: accepted(-1.0),
        fail,
    })
}

/// One measurement branch: outcome, probability and the state of photon 3.
#[derive(Debug, Clone)]
pub struct BsmBranch {
    pub outcome: BsmOutcome,
    pub probability: f64,
    /// `None` when the outcome is impossible for this input.
    pub state: Option<DensityMatrix>,
}

/// Measures qubits 0 and 1 of a three-qubit state.
pub fn bsm_apply(joint: &DensityMatrix, model: &BsmModel) -> Result<Vec<BsmBranch>> {
    if joint.qubits() != 3 {
        return Err(invalid(
            "joint",
            format!("expected a 3-qubit state, got {} qubit(s)", joint.qubits()),
        ));
    }
    let effects = bsm_effects(model)?;
    [BsmOutcome::PhiPlus, BsmOutcome::PhiMinus, BsmOutcome::Fail]
        .into_iter()
        .map(|outcome| match joint.condition(effects.get(outcome), &[0, 1]) {
            Ok(c) => Ok(BsmBranch {
                outcome,
                probability: c.probability,
                state: c.state,
            }),
            Err(StateError::ImpossibleOutcome(p)) => Ok(BsmBranch {
                outcome,
                probability: p,
                state: None,
            }),
            Err(e) => Err(e.into()),
        })
        .collect()
}

/// Post-processing correction: identity after `φ⁺`, a π phase (Pauli Z)
/// after `φ⁻`. Failed events carry no correctable state.
pub fn feed_forward(outcome: BsmOutcome, rho: &DensityMatrix) -> Result<DensityMatrix> {
    match outcome {
        BsmOutcome::PhiPlus => Ok(rho.clone()),
        BsmOutcome::PhiMinus => Ok(rho.apply_unitary(&pauli_z(), &[0])?),
        BsmOutcome::Fail => Err(invalid("outcome", "failed BSM events cannot be corrected")),
    }
}

#[derive(Debug, Clone)]
pub struct CorrectedBranch {
    pub outcome: BsmOutcome,
    pub probability: f64,
    pub state: DensityMatrix,
    pub fidelity: f64,
}

/// Expected result of one teleportation attempt.
#[derive(Debug, Clone)]
pub struct Teleported {
    /// Accepted (`φ±`) branches after feed-forward.
    pub branches: Vec<CorrectedBranch>,
    /// Total probability of an accepted outcome.
    pub success_probability: f64,
    /// Outcome-averaged fidelity over accepted events.
    pub fidelity: f64,
}

impl Teleported {
    /// Success-weighted mixture of the corrected states.
    pub fn averaged_state(&self) -> Result<DensityMatrix> {
        let parts: Vec<(f64, &DensityMatrix)> = self
            .branches
            .iter()
            .map(|b| (b.probability / self.success_probability, &b.state))
            .collect();
        Ok(DensityMatrix::mixture(&parts)?)
    }
}

/// Teleports `input` through an arbitrary two-qubit resource on (2, 3).
pub fn teleport_with_resource(
    input: &PureState,
    resource: &DensityMatrix,
    model: &BsmModel,
) -> Result<Teleported> {
    if input.qubits() != 1 || resource.qubits() != 2 {
        return Err(invalid("input", "expected a 1-qubit input and a 2-qubit resource"));
    }
    let joint = input.to_density().tensor(resource)?;
    let mut branches = Vec::with_capacity(2);
    for b in bsm_apply(&joint, model)? {
        if b.outcome == BsmOutcome::Fail {
            continue;
        }
        if let Some(rho) = b.state {
            let state = feed_forward(b.outcome, &rho)?;
            branches.push(CorrectedBranch {
                outcome: b.outcome,
                probability: b.probability,
                fidelity: fidelity(input, &state),
                state,
            });
        }
    }
    let success_probability: f64 = branches.iter().map(|b| b.probability).sum();
    if success_probability <= 0.0 {
        return Err(StateError::ImpossibleOutcome(success_probability).into());
    }
    let fidelity = branches
        .iter()
        .map(|b| b.probability * b.fidelity)
        .sum::<f64>()
        / success_probability;
    Ok(Teleported {
        branches,
        success_probability,
        fidelity,
    })
}

/// Teleports `input` through a Werner resource of fidelity `entangled_fidelity`.
pub fn teleport_expected(
    input: &PureState,
    entangled_fidelity: f64,
    model: &BsmModel,
) -> Result<Teleported> {
    teleport_with_resource(input, &werner_pair(entangled_fidelity)?, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonsrc::werner_weight;
    use crate::qstate::{BellState, MubState};

    fn max_dev(a: &Operator, b: &Operator) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn effects_limits() {
        let ideal = bsm_effects(&BsmModel::ideal()).unwrap();
        assert!(max_dev(&ideal.phi_plus, &BellState::PhiPlus.projector()) < 1e-15);
        assert!(max_dev(&ideal.phi_minus, &BellState::PhiMinus.projector()) < 1e-15);

        let blind = bsm_effects(&BsmModel::new(0.0).unwrap()).unwrap();
        assert!(max_dev(&blind.phi_plus, &blind.phi_minus) == 0.0);
        assert_eq!(blind.phi_plus[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(blind.phi_plus[(0, 3)], C64::new(0.0, 0.0));
        assert!(BsmModel::new(1.1).is_err());
        assert!(bsm_effects(&BsmModel { mode_overlap: -0.1 }).is_err());
    }

    #[test]
    fn effects_psd_and_complete_on_grid() {
        for k in 0..=100 {
            let m = k as f64 / 100.0;
            let e = bsm_effects(&BsmModel::new(m).unwrap()).unwrap();
            let sum = &e.phi_plus + &e.phi_minus + &e.fail;
            assert!(max_dev(&sum, &Operator::identity(4, 4)) < 1e-14);
            for op in [&e.phi_plus, &e.phi_minus, &e.fail] {
                let ev = op.clone().symmetric_eigenvalues();
                assert!(ev.min() > -1e-14, "M={m}");
            }
        }
    }

    fn joint(input: MubState) -> DensityMatrix {
        input
            .state()
            .tensor(&BellState::PhiPlus.state())
            .unwrap()
            .to_density()
    }

    #[test]
    fn ideal_plus_branches() {
        let branches = bsm_apply(&joint(MubState::Plus), &BsmModel::ideal()).unwrap();
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for b in &branches {
            match b.outcome {
                BsmOutcome::PhiPlus => {
                    assert!((b.probability - 0.25).abs() < 1e-14);
                    let f = fidelity(&MubState::Plus.state(), b.state.as_ref().unwrap());
                    assert!((f - 1.0).abs() < 1e-12);
                }
                BsmOutcome::PhiMinus => {
                    assert!((b.probability - 0.25).abs() < 1e-14);
                    let f = fidelity(&MubState::Minus.state(), b.state.as_ref().unwrap());
                    assert!((f - 1.0).abs() < 1e-12);
                }
                BsmOutcome::Fail => assert!((b.probability - 0.5).abs() < 1e-14),
            }
        }
    }

    #[test]
    fn h_input_immune_to_distinguishability() {
        for m in [0.0, 0.3, 1.0] {
            let branches = bsm_apply(&joint(MubState::H), &BsmModel::new(m).unwrap()).unwrap();
            for b in branches.iter().filter(|b| b.outcome != BsmOutcome::Fail) {
                let f = fidelity(&MubState::H.state(), b.state.as_ref().unwrap());
                assert!((f - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fully_distinguishable_plus_is_mixed() {
        let branches = bsm_apply(&joint(MubState::Plus), &BsmModel::new(0.0).unwrap()).unwrap();
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        for b in branches.iter().filter(|b| b.outcome != BsmOutcome::Fail) {
            let rho = b.state.as_ref().unwrap();
            assert!(rho.distance(&mixed) < 1e-12);
            assert!((fidelity(&MubState::Plus.state(), rho) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn feed_forward_examples() {
        let rho = MubState::R.state().to_density();
        assert_eq!(feed_forward(BsmOutcome::PhiPlus, &rho).unwrap(), rho);
        let minus = MubState::Minus.state().to_density();
        let plus = feed_forward(BsmOutcome::PhiMinus, &minus).unwrap();
        assert!(plus.distance(&MubState::Plus.state().to_density()) < 1e-15);
        let h = MubState::H.state().to_density();
        assert!(feed_forward(BsmOutcome::PhiMinus, &h).unwrap().distance(&h) < 1e-15);
        assert!(feed_forward(BsmOutcome::Fail, &h).is_err());
    }

    #[test]
    fn teleport_examples() {
        for m in MubState::ALL {
            let t = teleport_expected(&m.state(), 1.0, &BsmModel::ideal()).unwrap();
            assert!((t.fidelity - 1.0).abs() < 1e-12);
            assert!((t.success_probability - 0.5).abs() < 1e-12);
            let t = teleport_expected(&m.state(), 0.933, &BsmModel::ideal()).unwrap();
            let expected = (1.0 + werner_weight(0.933)) / 2.0;
            assert!((t.fidelity - expected).abs() < 1e-9);
            assert!((t.fidelity - 0.955_333_333_333).abs() < 1e-9);
        }
        let blind = BsmModel::new(0.0).unwrap();
        let plus = teleport_expected(&MubState::Plus.state(), 1.0, &blind).unwrap();
        assert!((plus.fidelity - 0.5).abs() < 1e-12);
        let h = teleport_expected(&MubState::H.state(), 1.0, &blind).unwrap();
        assert!((h.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distinguishability_asymmetry() {
        for k in 0..10 {
            let m = k as f64 / 10.0;
            let model = BsmModel::new(m).unwrap();
            let f = |s: MubState| teleport_expected(&s.state(), 0.9, &model).unwrap().fidelity;
            assert!(f(MubState::H) > f(MubState::Plus) + 1e-6);
            assert!(f(MubState::H) > f(MubState::R) + 1e-6);
        }
        let model = BsmModel::ideal();
        let f = |s: MubState| teleport_expected(&s.state(), 0.9, &model).unwrap().fidelity;
        assert!((f(MubState::H) - f(MubState::Plus)).abs() < 1e-10);
    }

    #[test]
    fn rejects_wrong_register() {
        let two = BellState::PhiPlus.state().to_density();
        assert!(bsm_apply(&two, &BsmModel::ideal()).is_err());
    }
}
