//! Expected fidelities and count rates without sampling noise.

use super::config::{CampaignConfig, EffectiveParams, NoiseToggles, OrbitSpec};
use crate::bsm::{teleport_with_resource, BsmModel, BsmOutcome};
use crate::error::Result;
use crate::linkgeom::{db_to_transmittance, elevation_profile, polarization_kraus, LinkModel, LinkSample};
use crate::photonsrc::werner_pair;
use crate::qstate::{fidelity, pauli_z, BellState, DensityMatrix, MubState, PureState};
use crate::timesync::accidental_rate;
use serde::Serialize;

/// Photon-3 state for one accepted BSM outcome, before feed-forward and
/// before the uplink.
#[derive(Debug, Clone)]
pub struct RawBranch {
    pub outcome: BsmOutcome,
    /// Probability conditional on an accepted outcome.
    pub probability: f64,
    pub state: DensityMatrix,
}

pub fn resource_state(entangled_fidelity: f64) -> Result<DensityMatrix> {
    if entangled_fidelity == 1.0 {
        Ok(BellState::PhiPlus.state().to_density())
    } else {
        werner_pair(entangled_fidelity)
    }
}

pub fn raw_branches(input: &PureState, entangled_fidelity: f64, mode_overlap: f64) -> Result<Vec<RawBranch>> {
    let tel = teleport_with_resource(input, &resource_state(entangled_fidelity)?, &BsmModel::new(mode_overlap)?)?;
    tel.branches
        .iter()
        .map(|b| {
            // undo the correction to recover the state that actually flies
            let state = match b.outcome {
                BsmOutcome::PhiMinus => b.state.apply_unitary(&pauli_z(), &[0])?,
                _ => b.state.clone(),
            };
            Ok(RawBranch {
                outcome: b.outcome,
                probability: b.probability / tel.success_probability,
                state,
            })
        })
        .collect()
}

/// Fidelity of the delivered photon for signal events only.
///
/// Each branch is mixed with the double-pair branch (`I/2`), sent through the
/// jitter-averaged polarization channel and then corrected with `Z` after
/// `φ⁻` when feed-forward is on.
pub fn signal_fidelity(input: &PureState, p: &EffectiveParams) -> Result<f64> {
    let white = DensityMatrix::maximally_mixed(1)?;
    let kraus = polarization_kraus(p.polarization_delta, p.polarization_jitter);
    let mut total = 0.0;
    for b in raw_branches(input, p.entangled_fidelity, p.mode_overlap)? {
        let mixed = DensityMatrix::mixture(&[
            (1.0 - p.double_pair_fraction, &b.state),
            (p.double_pair_fraction, &white),
        ])?;
        let mut out = mixed.apply_kraus(&kraus, &[0])?;
        if p.feed_forward && b.outcome == BsmOutcome::PhiMinus {
            out = out.apply_unitary(&pauli_z(), &[0])?;
        }
        total += b.probability * fidelity(input, &out);
    }
    Ok(total)
}

/// Accidentals land in either port with equal probability.
pub fn with_accidentals(signal_fidelity: f64, accidental_fraction: f64) -> f64 {
    (1.0 - accidental_fraction) * signal_fidelity + accidental_fraction / 2.0
}

/// One data-taking time slice of an orbit.
#[derive(Debug, Clone, Copy)]
pub struct Slice {
    /// Centre of the slice relative to culmination, s.
    pub t: f64,
    pub sample: LinkSample,
}

/// Slices covering `±orbit_duration/2`, keeping those above the minimum
/// tracking elevation.
pub fn orbit_slices(cfg: &CampaignConfig, orbit: &OrbitSpec) -> Result<Vec<Slice>> {
    let geometry = cfg.orbit_geometry(orbit);
    let n = (cfg.orbit_duration / cfg.time_slice).round() as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = -cfg.orbit_duration / 2.0 + (i as f64 + 0.5) * cfg.time_slice;
        let elevation = elevation_profile(&geometry, t)?;
        if elevation < geometry.min_elevation {
            continue;
        }
        out.push(Slice {
            t,
            sample: LinkSample::new(elevation, t, &geometry, &cfg.link)?,
        });
    }
    Ok(out)
}

/// Ground-to-detector efficiency of one slice.
pub fn slice_efficiency(link: &LinkModel, receiver_efficiency: f64, sample: &LinkSample) -> f64 {
    receiver_efficiency * db_to_transmittance(link.loss_for(sample).total_db())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ExpectedCounts {
    pub signal: f64,
    pub accidental: f64,
    pub active_time_s: f64,
}

impl ExpectedCounts {
    pub fn total(&self) -> f64 {
        self.signal + self.accidental
    }

    pub fn accidental_fraction(&self) -> f64 {
        let t = self.total();
        if t > 0.0 {
            self.accidental / t
        } else {
            0.0
        }
    }

    fn add(&mut self, other: &ExpectedCounts) {
        self.signal += other.signal;
        self.accidental += other.accidental;
        self.active_time_s += other.active_time_s;
    }
}

/// Rates that set the expected counts of a slice list.
#[derive(Debug, Clone, Copy)]
pub struct CountModel<'a> {
    pub link: &'a LinkModel,
    pub receiver_efficiency: f64,
    pub herald_rate: f64,
    pub background_rate: f64,
    pub window_s: f64,
    pub time_slice: f64,
}

impl CountModel<'_> {
    pub fn from_config(cfg: &CampaignConfig) -> CountModel<'_> {
        CountModel {
            link: &cfg.link,
            receiver_efficiency: cfg.channel.receiver_efficiency,
            herald_rate: cfg.source.fourfold_ground_rate(),
            background_rate: cfg.effective().background_rate,
            window_s: cfg.detection.window_s(),
            time_slice: cfg.time_slice,
        }
    }

    pub fn signal_rate(&self, sample: &LinkSample) -> f64 {
        self.herald_rate * slice_efficiency(self.link, self.receiver_efficiency, sample)
    }

    pub fn accidental_rate(&self) -> f64 {
        accidental_rate(self.herald_rate, self.background_rate, self.window_s)
    }

    pub fn expected<'s>(&self, samples: impl Iterator<Item = &'s LinkSample>) -> ExpectedCounts {
        let mut n = 0usize;
        let mut signal = 0.0;
        for s in samples {
            n += 1;
            signal += self.signal_rate(s);
        }
        let active = n as f64 * self.time_slice;
        ExpectedCounts {
            signal: signal * self.time_slice,
            accidental: self.accidental_rate() * active,
            active_time_s: active,
        }
    }
}

pub fn expected_orbit_counts(cfg: &CampaignConfig, orbit: &OrbitSpec) -> Result<ExpectedCounts> {
    let slices = orbit_slices(cfg, orbit)?;
    Ok(CountModel::from_config(cfg).expected(slices.iter().map(|s| &s.sample)))
}

#[derive(Debug, Clone, Serialize)]
pub struct StateExpectation {
    pub state: MubState,
    pub signal_fidelity: f64,
    pub counts: ExpectedCounts,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticCampaign {
    pub states: Vec<StateExpectation>,
    pub mean_fidelity: f64,
    pub counts: ExpectedCounts,
}

impl AnalyticCampaign {
    pub fn state(&self, m: MubState) -> &StateExpectation {
        self.states.iter().find(|s| s.state == m).expect("all six states present")
    }
}

/// Per-state counts summed over the orbits scheduled for each state.
pub fn expected_state_counts(cfg: &CampaignConfig) -> Result<Vec<ExpectedCounts>> {
    let schedule = cfg.schedule();
    let mut per_state = vec![ExpectedCounts::default(); MubState::ALL.len()];
    for (orbit, state) in cfg.orbits.iter().zip(schedule) {
        let idx = MubState::ALL.iter().position(|m| *m == state).expect("MUB state");
        per_state[idx].add(&expected_orbit_counts(cfg, orbit)?);
    }
    Ok(per_state)
}

/// Assembles per-state expectations from signal fidelities and counts.
pub fn combine(signal: &[f64], counts: &[ExpectedCounts]) -> AnalyticCampaign {
    let mut total = ExpectedCounts::default();
    let states: Vec<StateExpectation> = MubState::ALL
        .iter()
        .zip(signal.iter().zip(counts))
        .map(|(&state, (&f, c))| {
            total.add(c);
            StateExpectation {
                state,
                signal_fidelity: f,
                counts: *c,
                fidelity: with_accidentals(f, c.accidental_fraction()),
            }
        })
        .collect();
    let mean_fidelity = states.iter().map(|s| s.fidelity).sum::<f64>() / states.len() as f64;
    AnalyticCampaign {
        states,
        mean_fidelity,
        counts: total,
    }
}

pub fn signal_fidelities(p: &EffectiveParams) -> Result<Vec<f64>> {
    MubState::ALL.iter().map(|m| signal_fidelity(&m.state(), p)).collect()
}

/// Expected fidelities of every input state over the configured campaign.
pub fn analytic_campaign(cfg: &CampaignConfig) -> Result<AnalyticCampaign> {
    cfg.validate()?;
    Ok(combine(&signal_fidelities(&cfg.effective())?, &expected_state_counts(cfg)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    DoublePair,
    Distinguishability,
    PolarizationDistortion,
    Background,
    All,
}

impl NoiseSource {
    pub const SINGLE: [NoiseSource; 4] = [
        NoiseSource::DoublePair,
        NoiseSource::Distinguishability,
        NoiseSource::PolarizationDistortion,
        NoiseSource::Background,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NoiseSource::DoublePair => "double_pair",
            NoiseSource::Distinguishability => "distinguishability",
            NoiseSource::PolarizationDistortion => "polarization_distortion",
            NoiseSource::Background => "background",
            NoiseSource::All => "all",
        }
    }

    /// Toggles with only this source enabled (feed-forward kept on).
    pub fn toggles(self) -> NoiseToggles {
        let mut t = NoiseToggles::all_off();
        match self {
            NoiseSource::DoublePair => t.double_pair = true,
            NoiseSource::Distinguishability => t.distinguishability = true,
            NoiseSource::PolarizationDistortion => t.polarization_distortion = true,
            NoiseSource::Background => t.background = true,
            NoiseSource::All => t = NoiseToggles::all_on(),
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetRow {
    pub source: NoiseSource,
    /// `1 − F̄` with only this source enabled.
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub rows: Vec<BudgetRow>,
}

impl ErrorBudget {
    pub fn deficit(&self, source: NoiseSource) -> f64 {
        self.rows
            .iter()
            .find(|r| r.source == source)
            .map(|r| r.deficit)
            .expect("budget row present")
    }

    /// Writes `source,deficit`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "deficit"])?;
        for r in &self.rows {
            w.write_record([r.source.label().to_string(), format!("{:.6}", r.deficit)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One-source-at-a-time fidelity deficits against the otherwise ideal
/// pipeline, followed by the all-on deficit.
pub fn error_budget(cfg: &CampaignConfig) -> Result<ErrorBudget> {
    cfg.validate()?;
    let counts_on = expected_state_counts(&cfg.with_noise(NoiseToggles::all_on()))?;
    let counts_off: Vec<ExpectedCounts> = counts_on
        .iter()
        .map(|c| ExpectedCounts {
            accidental: 0.0,
            ..*c
        })
        .collect();
    let rows = NoiseSource::SINGLE
        .into_iter()
        .chain([NoiseSource::All])
        .map(|source| {
            let toggles = NoiseToggles {
                feed_forward: cfg.noise.feed_forward,
                ..source.toggles()
            };
            let variant = cfg.with_noise(toggles);
            let counts = if toggles.background { &counts_on } else { &counts_off };
            let run = combine(&signal_fidelities(&variant.effective())?, counts);
            Ok(BudgetRow {
                source,
                deficit: 1.0 - run.mean_fidelity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorBudget { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonsrc::werner_weight;

    fn cfg() -> CampaignConfig {
        CampaignConfig::default()
    }

    #[test]
    fn ideal_pipeline_is_exact() {
        let p = EffectiveParams::ideal();
        for m in MubState::ALL {
            assert!((signal_fidelity(&m.state(), &p).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn werner_closed_form() {
        let p = EffectiveParams {
            entangled_fidelity: 0.933,
            ..EffectiveParams::ideal()
        };
        let want = (1.0 + werner_weight(0.933)) / 2.0;
        assert!((want - 0.955_333_333).abs() < 1e-9);
        for m in MubState::ALL {
            assert!((signal_fidelity(&m.state(), &p).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn feed_forward_off_halves_superpositions() {
        let p = EffectiveParams {
            feed_forward: false,
            ..EffectiveParams::ideal()
        };
        for m in MubState::ALL {
            let f = signal_fidelity(&m.state(), &p).unwrap();
            let want = if matches!(m, MubState::H | MubState::V) { 1.0 } else { 0.5 };
            assert!((f - want).abs() < 1e-12, "{m}: {f}");
        }
    }

    #[test]
    fn polarization_rotation_spares_circular_states() {
        let delta = 0.3;
        let p = EffectiveParams {
            polarization_delta: delta,
            ..EffectiveParams::ideal()
        };
        for m in MubState::ALL {
            let f = signal_fidelity(&m.state(), &p).unwrap();
            let want = if matches!(m, MubState::R | MubState::L) {
                1.0
            } else {
                1.0 - delta.sin().powi(2)
            };
            assert!((f - want).abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn double_pair_branch_whitens() {
        let p = EffectiveParams {
            double_pair_fraction: 0.2,
            ..EffectiveParams::ideal()
        };
        for m in MubState::ALL {
            assert!((signal_fidelity(&m.state(), &p).unwrap() - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn all_off_budget_is_zero() {
        let mut c = cfg();
        c.source.double_pair_fraction = 0.0;
        c.source.entangled_fidelity = 1.0;
        c.bsm.mode_overlap = 1.0;
        c.channel.polarization_delta = 0.0;
        c.detection.background_rate = 0.0;
        for row in error_budget(&c).unwrap().rows {
            assert!(row.deficit.abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn accidentals_mix_toward_half() {
        assert_eq!(with_accidentals(1.0, 0.0), 1.0);
        assert!((with_accidentals(1.0, 0.08) - 0.96).abs() < 1e-15);
        assert_eq!(with_accidentals(0.5, 0.3), 0.5);
    }

    #[test]
    fn slices_stay_above_tracking_limit() {
        let c = cfg();
        let high = c.orbits.last().unwrap();
        let s = orbit_slices(&c, high).unwrap();
        assert_eq!(s.len(), 350);
        let low = &c.orbits[0];
        let s_low = orbit_slices(&c, low).unwrap();
        assert!(!s_low.is_empty() && s_low.len() < 350);
        assert!(s_low.iter().all(|x| x.sample.elevation_deg >= c.geometry.min_elevation));
    }
}
