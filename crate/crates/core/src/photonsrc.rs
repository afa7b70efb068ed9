//! Photon sources: the heralded input qubit, the entangled resource pair and
//! event-level emission statistics.

use crate::error::{invalid, Result};
use crate::qstate::{waveplate_angles, BellState, DensityMatrix, MubState, PureState, WaveplateSetting, C64};
use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Rates and quality figures of the ground four-photon set-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    /// Pump repetition rate, pulses/s.
    pub rep_rate: f64,
    /// Heralding (trigger) count rate of the collinear pair source, counts/s.
    pub trigger_rate: f64,
    /// Entangled-pair count rate of the non-collinear source, counts/s.
    pub pair_rate: f64,
    /// Fidelity of the entangled resource to `|φ⁺⟩`, in `[1/4, 1]`.
    pub entangled_fidelity: f64,
    /// Fraction of heralded events caused by same-crystal double pairs.
    pub double_pair_fraction: f64,
    /// Ground fourfold rate of each multiplexed module, counts/s.
    pub module_fourfold_rates: Vec<f64>,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            rep_rate: 80e6,
            trigger_rate: 5.7e5,
            pair_rate: 1e6,
            entangled_fidelity: 0.933,
            double_pair_fraction: 0.0,
            // The second module's rate is the multiplexed total minus the first.
            module_fourfold_rates: vec![4080.0, 4130.0],
        }
    }
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rep_rate", self.rep_rate),
            ("trigger_rate", self.trigger_rate),
            ("pair_rate", self.pair_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be a finite non-negative rate")));
            }
        }
        check_entangled_fidelity(self.entangled_fidelity)?;
        if !(0.0..1.0).contains(&self.double_pair_fraction) {
            return Err(invalid(
                "double_pair_fraction",
                format!("{} outside [0, 1)", self.double_pair_fraction),
            ));
        }
        if self.module_fourfold_rates.is_empty() {
            return Err(invalid("module_fourfold_rates", "at least one module required"));
        }
        if self.module_fourfold_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(invalid("module_fourfold_rates", "rates must be non-negative"));
        }
        Ok(())
    }

    pub fn num_modules(&self) -> usize {
        self.module_fourfold_rates.len()
    }

    /// Multiplexed ground fourfold rate.
    pub fn fourfold_ground_rate(&self) -> f64 {
        multiplex_rate(&self.module_fourfold_rates)
    }

    /// Probability that a pump pulse yields a heralded pair.
    pub fn emission_probability(&self) -> f64 {
        if self.rep_rate > 0.0 {
            (self.trigger_rate / self.rep_rate).min(1.0)
        } else {
            0.0
        }
    }
}

fn check_entangled_fidelity(f: f64) -> Result<()> {
    if !(0.25..=1.0).contains(&f) {
        return Err(invalid("entangled_fidelity", format!("{f} outside [1/4, 1]")));
    }
    Ok(())
}

/// A prepared input qubit together with the waveplate setting that produces
/// it from the heralded `|H⟩` photon.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub state: PureState,
    pub waveplates: WaveplateSetting,
}

/// Prepares `alpha|H⟩ + beta|V⟩`.
///
/// Unnormalized amplitudes are normalized with a warning; `alpha = beta = 0`
/// is rejected.
pub fn prepare_input(alpha: C64, beta: C64) -> Result<PreparedInput> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if norm == 0.0 || !norm.is_finite() {
        return Err(invalid("alpha, beta", "amplitudes must not both vanish"));
    }
    if (norm - 1.0).abs() > 1e-10 {
        warn!("input amplitudes have squared norm {norm}; normalizing");
    }
    let state = PureState::qubit(alpha, beta)?;
    let waveplates = waveplate_angles(&MubState::H.state(), &state);
    Ok(PreparedInput { state, waveplates })
}

/// Singlet weight `p = (4F − 1)/3` of a Werner state with fidelity `F`.
pub fn werner_weight(entangled_fidelity: f64) -> f64 {
    (4.0 * entangled_fidelity - 1.0) / 3.0
}

/// `p|φ⁺⟩⟨φ⁺| + (1 − p)·I/4` with `p = (4F − 1)/3`.
pub fn werner_pair(entangled_fidelity: f64) -> Result<DensityMatrix> {
    check_entangled_fidelity(entangled_fidelity)?;
    let p = werner_weight(entangled_fidelity);
    let phi = BellState::PhiPlus.state().to_density();
    let white = DensityMatrix::maximally_mixed(2)?;
    Ok(DensityMatrix::mixture(&[(p, &phi), (1.0 - p, &white)])?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Emission {
    None,
    SinglePair,
    DoublePair,
}

/// Samples one pump pulse: emission with the heralding probability, then the
/// double-pair branch with `double_pair_fraction`.
pub fn sample_emission<R: Rng + ?Sized>(source: &SourceModel, rng: &mut R) -> Emission {
    if rng.random::<f64>() >= source.emission_probability() {
        return Emission::None;
    }
    sample_heralded_branch(source, rng)
}

/// Branch of an event already known to be heralded.
pub fn sample_heralded_branch<R: Rng + ?Sized>(source: &SourceModel, rng: &mut R) -> Emission {
    if rng.random::<f64>() < source.double_pair_fraction {
        Emission::DoublePair
    } else {
        Emission::SinglePair
    }
}

/// Combined rate of independently running modules.
pub fn multiplex_rate(rates: &[f64]) -> f64 {
    rates.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::fidelity;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn prepare_examples() {
        let h = prepare_input(C64::new(1.0, 0.0), C64::new(0.0, 0.0)).unwrap();
        assert!(h.state.overlap(&MubState::H.state()) > 1.0 - 1e-15);
        let r = prepare_input(C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, FRAC_1_SQRT_2)).unwrap();
        assert!((r.state.inner(&MubState::R.state()) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let plus = prepare_input(C64::new(1.0, 0.0), C64::new(1.0, 0.0)).unwrap();
        assert!((plus.waveplates.hwp_deg() - 22.5).abs() < 1e-9);
        assert!(plus.waveplates.qwp_deg().abs() < 1e-9);
        assert!(prepare_input(C64::new(0.0, 0.0), C64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn werner_examples() {
        let ideal = werner_pair(1.0).unwrap();
        assert!(ideal.distance(&BellState::PhiPlus.state().to_density()) < 1e-15);
        let white = werner_pair(0.25).unwrap();
        assert!(white.distance(&DensityMatrix::maximally_mixed(2).unwrap()) < 1e-15);
        assert!((werner_weight(0.933) - 0.910_666_666_666_666_7).abs() < 1e-12);
        assert!(werner_pair(0.2).is_err());
        assert!(werner_pair(1.01).is_err());
    }

    #[test]
    fn werner_is_valid_on_grid() {
        for k in 0..100 {
            let f = 0.25 + 0.75 * k as f64 / 99.0;
            let rho = werner_pair(f).unwrap();
            DensityMatrix::new(rho.matrix().clone()).unwrap();
            assert!((fidelity(&BellState::PhiPlus.state(), &rho) - f).abs() < 1e-12);
        }
    }

    #[test]
    fn emission_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut src = SourceModel {
            double_pair_fraction: 0.0,
            ..SourceModel::default()
        };
        assert!((0..10_000).all(|_| sample_heralded_branch(&src, &mut rng) != Emission::DoublePair));

        src.double_pair_fraction = 0.5;
        let n = 1_000_000;
        let doubles = (0..n)
            .filter(|_| sample_heralded_branch(&src, &mut rng) == Emission::DoublePair)
            .count();
        // σ = √(n·0.25)/n = 5e-4 → 3σ = 1.5e-3
        assert!((doubles as f64 / n as f64 - 0.5).abs() < 0.0015);
    }

    #[test]
    fn per_pulse_emission_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = SourceModel::default();
        let n = 2_000_000;
        let hits = (0..n)
            .filter(|_| sample_emission(&src, &mut rng) != Emission::None)
            .count() as f64;
        let p = src.emission_probability();
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - n as f64 * p).abs() < 4.0 * sigma);
    }

    #[test]
    fn multiplexing() {
        assert_eq!(multiplex_rate(&[4080.0]), 4080.0);
        assert_eq!(multiplex_rate(&[4080.0, 4130.0]), 8210.0);
        assert_eq!(multiplex_rate(&[]), 0.0);
        assert_eq!(SourceModel::default().fourfold_ground_rate(), 8210.0);
        assert_eq!(SourceModel::default().num_modules(), 2);
    }

    #[test]
    fn validation() {
        SourceModel::default().validate().unwrap();
        let mut bad = SourceModel {
            double_pair_fraction: 1.0,
            ..SourceModel::default()
        };
        assert!(bad.validate().is_err());
        bad = SourceModel::default();
        bad.trigger_rate = -1.0;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn prepared_state_matches_amplitudes(theta in 0.0f64..std::f64::consts::PI, phi in 0.0f64..6.3) {
            let alpha = C64::new((theta / 2.0).cos(), 0.0);
            let beta = C64::from_polar((theta / 2.0).sin(), phi);
            let prep = prepare_input(alpha, beta).unwrap();
            let reference = PureState::qubit(alpha, beta).unwrap();
            prop_assert!((fidelity(&reference, &prep.state.to_density()) - 1.0).abs() < 1e-10);
        }
    }
}
