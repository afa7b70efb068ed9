//! Campaign orchestration: analytic expectations, event-level Monte Carlo,
//! error budget, calibration and the comparison baselines.

pub mod analytic;
pub mod calibrate;
pub mod campaign;
pub mod config;

pub use analytic::{analytic_campaign, error_budget, signal_fidelity, AnalyticCampaign, ErrorBudget, NoiseSource};
pub use calibrate::{calibrate, CalibratedParameters, Calibration, CalibrationTargets};
pub use campaign::{run_campaign, run_orbit, CampaignResult, OrbitRecord, StateFidelity};
pub use config::{CampaignConfig, EffectiveParams, NoiseToggles, OrbitSpec, SimulationMode};

use crate::error::{invalid, Result};
use crate::qstate::{PureState, C64};
use rand::Rng;
use serde::Serialize;
use std::f64::consts::PI;

/// Fidelity as the correct fraction of two-port counts, with the
/// independent-Poisson standard error `√(N_c·N_w/(N_c + N_w)³)`.
pub fn estimate_fidelity(correct: u64, wrong: u64) -> Result<(f64, f64)> {
    let n = correct + wrong;
    if n == 0 {
        return Err(invalid("counts", "no events to estimate a fidelity from"));
    }
    let (c, w, n) = (correct as f64, wrong as f64, n as f64);
    Ok((c / n, (c * w / (n * n * n)).sqrt()))
}

/// Haar-random single-qubit pure state.
pub fn haar_qubit<R: Rng + ?Sized>(rng: &mut R) -> PureState {
    let cos_theta: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let half = cos_theta.acos() / 2.0;
    PureState::qubit(C64::new(half.cos(), 0.0), C64::from_polar(half.sin(), phi)).expect("unit vector")
}

/// Measures `input` in the basis `{basis, basis⊥}` and resends the outcome;
/// returns the fidelity of the resent state with the input.
pub fn measure_and_resend<R: Rng + ?Sized>(input: &PureState, basis: &PureState, rng: &mut R) -> f64 {
    let p = input.overlap(basis);
    if rng.random::<f64>() < p {
        p
    } else {
        1.0 - p
    }
}

/// Mean fidelity of measure-and-resend in a random basis over Haar-random
/// inputs.
pub fn classical_baseline<R: Rng + ?Sized>(n_samples: usize, rng: &mut R) -> Result<f64> {
    if n_samples == 0 {
        return Err(invalid("n_samples", "must be positive"));
    }
    let mut sum = 0.0;
    for _ in 0..n_samples {
        let input = haar_qubit(rng);
        let basis = haar_qubit(rng);
        sum += measure_and_resend(&input, &basis, rng);
    }
    Ok(sum / n_samples as f64)
}

pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FibreComparison {
    pub loss_db: f64,
    pub transmittance: f64,
    pub waiting_time_s: f64,
    pub waiting_time_years: f64,
}

/// Expected wait for one event when the source feeds a lossy fibre.
pub fn fibre_comparison(fourfold_rate: f64, distance_km: f64, loss_db_per_km: f64) -> Result<FibreComparison> {
    if !(fourfold_rate > 0.0) {
        return Err(invalid("fourfold_rate", "must be positive"));
    }
    if !(distance_km >= 0.0 && loss_db_per_km >= 0.0) {
        return Err(invalid("distance_km", "distance and attenuation must be non-negative"));
    }
    let loss_db = distance_km * loss_db_per_km;
    let transmittance = 10f64.powf(-loss_db / 10.0);
    let waiting_time_s = 1.0 / (fourfold_rate * transmittance);
    Ok(FibreComparison {
        loss_db,
        transmittance,
        waiting_time_s,
        waiting_time_years: waiting_time_s / SECONDS_PER_YEAR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::MubState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fidelity_estimates() {
        assert_eq!(estimate_fidelity(10, 0).unwrap(), (1.0, 0.0));
        let (f, s) = estimate_fidelity(8, 2).unwrap();
        assert_eq!(f, 0.8);
        assert!((s - (16.0f64 / 1000.0).sqrt()).abs() < 1e-15);
        assert!((s - 0.1265).abs() < 5e-5);
        let (f, s) = estimate_fidelity(121, 31).unwrap();
        assert!((f - 0.796).abs() < 5e-4);
        assert!((s - 0.0327).abs() < 5e-5);
        assert!(estimate_fidelity(0, 0).is_err());
    }

    #[test]
    fn aligned_measure_and_resend_is_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = MubState::H.state();
        for _ in 0..100 {
            assert_eq!(measure_and_resend(&h, &h, &mut rng), 1.0);
        }
    }

    #[test]
    fn classical_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = classical_baseline(200_000, &mut rng).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 0.003, "{f}");
        assert!(classical_baseline(0, &mut rng).is_err());
    }

    #[test]
    fn fibre_numbers() {
        let c = fibre_comparison(8210.0, 1200.0, 0.2).unwrap();
        assert!((c.loss_db - 240.0).abs() < 1e-9);
        assert!((c.transmittance / 1e-24 - 1.0).abs() < 1e-9);
        assert!((c.waiting_time_years - 3.86e12).abs() < 0.01e12, "{}", c.waiting_time_years);
        let z = fibre_comparison(100.0, 0.0, 0.2).unwrap();
        assert!((z.waiting_time_s - 0.01).abs() < 1e-15);
        assert!(fibre_comparison(0.0, 1.0, 0.2).is_err());
    }
}
