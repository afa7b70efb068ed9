//! Event-level Monte Carlo of the orbit campaign.

use super::analytic::{orbit_slices, raw_branches, CountModel, RawBranch, Slice};
use super::config::{CampaignConfig, SimulationMode};
use super::estimate_fidelity;
use crate::bsm::BsmOutcome;
use crate::error::{Error, Result};
use crate::linkgeom::{polarization_distortion, polarization_rotation};
use crate::qstate::{waveplate_angles, DensityMatrix, MubState, Operator, PureState};
use crate::timesync::{
    fit_clock_streams, generate_streams, match_coincidences, StreamParams, TrueEvent, HERALD_PHI_MINUS,
    HERALD_PHI_PLUS, PORT_IDEAL, PORT_ORTHOGONAL,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    /// PBS output carrying the scheduled state.
    Ideal,
    Orthogonal,
}

/// Raw fourfold counts by BSM outcome and analyzer port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PortCounts {
    pub phi_plus_ideal: u64,
    pub phi_plus_orthogonal: u64,
    pub phi_minus_ideal: u64,
    pub phi_minus_orthogonal: u64,
}

impl PortCounts {
    pub fn add(&mut self, outcome: BsmOutcome, port: Port) {
        let slot = match (outcome, port) {
            (BsmOutcome::PhiMinus, Port::Ideal) => &mut self.phi_minus_ideal,
            (BsmOutcome::PhiMinus, Port::Orthogonal) => &mut self.phi_minus_orthogonal,
            (_, Port::Ideal) => &mut self.phi_plus_ideal,
            (_, Port::Orthogonal) => &mut self.phi_plus_orthogonal,
        };
        *slot += 1;
    }

    pub fn total(&self) -> u64 {
        self.phi_plus_ideal + self.phi_plus_orthogonal + self.phi_minus_ideal + self.phi_minus_orthogonal
    }

    /// (correct, wrong) after the post-processing port swap for `φ⁻`.
    pub fn score(&self, swap_phi_minus: bool) -> (u64, u64) {
        let (mi, mo) = if swap_phi_minus {
            (self.phi_minus_orthogonal, self.phi_minus_ideal)
        } else {
            (self.phi_minus_ideal, self.phi_minus_orthogonal)
        };
        (self.phi_plus_ideal + mi, self.phi_plus_orthogonal + mo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub index: usize,
    pub label: String,
    pub max_elevation: f64,
    pub state: MubState,
    pub active_time_s: f64,
    pub counts: PortCounts,
    pub correct: u64,
    pub wrong: u64,
    /// Signal photons registered, as known to the simulator.
    pub signal_events: u64,
    /// Accidental coincidences, as known to the simulator (rate mode only).
    pub accidental_events: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFidelity {
    pub state: MubState,
    pub correct: u64,
    pub wrong: u64,
    /// `None` when the state collected no events.
    pub fidelity: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub seed: u64,
    pub mode: SimulationMode,
    pub orbits: Vec<OrbitRecord>,
    pub states: Vec<StateFidelity>,
    pub total_counts: u64,
    /// Mean over input states with data.
    pub mean_fidelity: f64,
    pub mean_sigma: f64,
}

impl CampaignResult {
    pub fn state(&self, m: MubState) -> &StateFidelity {
        self.states.iter().find(|s| s.state == m).expect("all six states present")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Writes `state,fidelity,sigma`; states without data are left empty.
    pub fn write_fidelity_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "fidelity", "sigma"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for s in &self.states {
            w.write_record([s.state.label().to_string(), fmt(s.fidelity), fmt(s.sigma)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Whether feed-forward is realized by swapping ports after `φ⁻`: the case
/// when `Z` maps the state to (nearly) its orthogonal complement.
pub fn swaps_ports(input: &PureState, feed_forward: bool) -> bool {
    if !feed_forward {
        return false;
    }
    let z = input
        .apply_unitary(&crate::qstate::pauli_z(), &[0])
        .expect("single-qubit input");
    input.overlap(&z) < 0.5
}

/// Probability that the analyzer (QWP, HWP, PBS set to map `input` onto H)
/// sends `rho` to the ideal port after the uplink rotation.
pub fn analyzer_port_probability(analyzer: &Operator, rho: &DensityMatrix, rotation: &Operator) -> f64 {
    let u = analyzer * rotation;
    let out = &u * rho.matrix() * u.adjoint();
    out[(0, 0)].re.clamp(0.0, 1.0)
}

/// Analyzer operator for an input state.
pub fn analyzer_for(input: &PureState) -> Operator {
    waveplate_angles(input, &MubState::H.state()).operator()
}

/// Per-orbit event sampler.
struct EventModel {
    branches: Vec<RawBranch>,
    analyzer: Operator,
    delta: f64,
    jitter: f64,
    double_pair: f64,
    /// `P(ideal port)` per branch when the rotation is fixed.
    fixed: Option<Vec<f64>>,
}

impl EventModel {
    fn new(cfg: &CampaignConfig, input: &PureState) -> Result<Self> {
        let p = cfg.effective();
        let branches = raw_branches(input, p.entangled_fidelity, p.mode_overlap)?;
        let analyzer = analyzer_for(input);
        let fixed = (p.polarization_jitter == 0.0).then(|| {
            let r = polarization_rotation(p.polarization_delta);
            branches
                .iter()
                .map(|b| analyzer_port_probability(&analyzer, &b.state, &r))
                .collect()
        });
        Ok(Self {
            branches,
            analyzer,
            delta: p.polarization_delta,
            jitter: p.polarization_jitter,
            double_pair: p.double_pair_fraction,
            fixed,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (BsmOutcome, Port) {
        let mut u: f64 = rng.random();
        let mut k = self.branches.len() - 1;
        for (i, b) in self.branches.iter().enumerate() {
            if u < b.probability {
                k = i;
                break;
            }
            u -= b.probability;
        }
        let outcome = self.branches[k].outcome;
        let p_ideal = if rng.random::<f64>() < self.double_pair {
            0.5
        } else if let Some(fixed) = &self.fixed {
            fixed[k]
        } else {
            let r = polarization_distortion(self.delta, self.jitter, rng);
            analyzer_port_probability(&self.analyzer, &self.branches[k].state, &r)
        };
        (outcome, coin_port(p_ideal, rng))
    }
}

fn coin_port<R: Rng + ?Sized>(p_ideal: f64, rng: &mut R) -> Port {
    if rng.random::<f64>() < p_ideal {
        Port::Ideal
    } else {
        Port::Orthogonal
    }
}

fn random_outcome<R: Rng + ?Sized>(rng: &mut R) -> BsmOutcome {
    if rng.random::<bool>() {
        BsmOutcome::PhiPlus
    } else {
        BsmOutcome::PhiMinus
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("finite mean").sample(rng) as u64
    } else {
        0
    }
}

/// Deterministic random substream of an orbit.
pub fn orbit_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulates orbit `index` of the campaign.
///
/// Time slices below the minimum tracking elevation contribute nothing.
pub fn run_orbit<R: Rng + ?Sized>(cfg: &CampaignConfig, index: usize, rng: &mut R) -> Result<OrbitRecord> {
    let orbit = cfg
        .orbits
        .get(index)
        .ok_or_else(|| crate::error::invalid("orbit", format!("index {index} out of range")))?;
    let state = cfg.schedule()[index];
    let input = state.state();
    let model = EventModel::new(cfg, &input)?;
    let slices = orbit_slices(cfg, orbit)?;
    let swap = swaps_ports(&input, cfg.noise.feed_forward);

    let (counts, signal_events, accidental_events) = match cfg.mode {
        SimulationMode::Rate => rate_mode(cfg, &model, &slices, rng),
        SimulationMode::TimeTags => time_tag_mode(cfg, &model, &slices, rng)?,
    };
    let (correct, wrong) = counts.score(swap);
    Ok(OrbitRecord {
        index,
        label: orbit.label.clone(),
        max_elevation: orbit.max_elevation,
        state,
        active_time_s: slices.len() as f64 * cfg.time_slice,
        counts,
        correct,
        wrong,
        signal_events,
        accidental_events,
    })
}

fn rate_mode<R: Rng + ?Sized>(
    cfg: &CampaignConfig,
    model: &EventModel,
    slices: &[Slice],
    rng: &mut R,
) -> (PortCounts, u64, Option<u64>) {
    let rates = CountModel::from_config(cfg);
    let acc_mean = rates.accidental_rate() * cfg.time_slice;
    let mut counts = PortCounts::default();
    let (mut signal, mut accidental) = (0u64, 0u64);
    for s in slices {
        let n = poisson(rates.signal_rate(&s.sample) * cfg.time_slice, rng);
        for _ in 0..n {
            let (o, p) = model.sample(rng);
            counts.add(o, p);
        }
        let a = poisson(acc_mean, rng);
        for _ in 0..a {
            let o = random_outcome(rng);
            counts.add(o, coin_port(0.5, rng));
        }
        signal += n;
        accidental += a;
    }
    (counts, signal, Some(accidental))
}

fn time_tag_mode<R: Rng + ?Sized>(
    cfg: &CampaignConfig,
    model: &EventModel,
    slices: &[Slice],
    rng: &mut R,
) -> Result<(PortCounts, u64, Option<u64>)> {
    let rates = CountModel::from_config(cfg);
    let half = cfg.orbit_duration / 2.0;
    let to_ps = |t: f64| ((t + half) * 1e12).round() as i64;
    let mut events = Vec::new();
    let mut signal = 0u64;
    for s in slices {
        let lo = s.t - cfg.time_slice / 2.0;
        let expected = rates.herald_rate * cfg.time_slice;
        let detected_mean = (rates.signal_rate(&s.sample) * cfg.time_slice).min(expected);
        let n_sig = poisson(detected_mean, rng);
        let n_lost = poisson(expected - detected_mean, rng);
        signal += n_sig;
        for k in 0..n_sig + n_lost {
            let t = lo + rng.random::<f64>() * cfg.time_slice;
            let (outcome, sat) = if k < n_sig {
                let (o, p) = model.sample(rng);
                let ch = match p {
                    Port::Ideal => PORT_IDEAL,
                    Port::Orthogonal => PORT_ORTHOGONAL,
                };
                (o, Some(ch))
            } else {
                (random_outcome(rng), None)
            };
            events.push(TrueEvent {
                ground_time_ps: to_ps(t),
                ground_channel: if outcome == BsmOutcome::PhiMinus {
                    HERALD_PHI_MINUS
                } else {
                    HERALD_PHI_PLUS
                },
                satellite_channel: sat,
            });
        }
    }
    events.sort_unstable_by_key(|e| e.ground_time_ps);
    let params = StreamParams {
        satellite_clock: cfg.detection.clock()?,
        jitter_sigma_ps: cfg.detection.jitter_sigma_ps,
        satellite_background_hz: rates.background_rate,
        sync_rate: cfg.detection.sync_rate,
        duration_s: cfg.orbit_duration,
        ..StreamParams::default()
    };
    let (ground, sat) = generate_streams(&events, &params, rng)?;
    let fit = fit_clock_streams(&ground, &sat)?;
    let matched = match_coincidences(&ground, &sat, &fit.clock, cfg.detection.window_ps)?;
    let mut counts = PortCounts::default();
    for pair in &matched.pairs {
        let outcome = if pair.ground.channel == HERALD_PHI_MINUS {
            BsmOutcome::PhiMinus
        } else {
            BsmOutcome::PhiPlus
        };
        let port = if pair.satellite.channel == PORT_IDEAL {
            Port::Ideal
        } else {
            Port::Orthogonal
        };
        counts.add(outcome, port);
    }
    Ok((counts, signal, None))
}

/// Runs every orbit on its own random substream and aggregates per input
/// state. Rate-mode orbits run in parallel.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    cfg.validate_schedule()?;
    let run = |i: usize| run_orbit(cfg, i, &mut orbit_rng(cfg.seed, i));
    let orbits: Vec<OrbitRecord> = match cfg.mode {
        SimulationMode::Rate => (0..cfg.orbits.len()).into_par_iter().map(run).collect::<Result<_>>()?,
        SimulationMode::TimeTags => (0..cfg.orbits.len()).map(run).collect::<Result<_>>()?,
    };
    Ok(aggregate(cfg.seed, cfg.mode, orbits))
}

fn aggregate(seed: u64, mode: SimulationMode, orbits: Vec<OrbitRecord>) -> CampaignResult {
    let states: Vec<StateFidelity> = MubState::ALL
        .iter()
        .map(|&m| {
            let (correct, wrong) = orbits
                .iter()
                .filter(|o| o.state == m)
                .fold((0, 0), |(c, w), o| (c + o.correct, w + o.wrong));
            let est = estimate_fidelity(correct, wrong).ok();
            StateFidelity {
                state: m,
                correct,
                wrong,
                fidelity: est.map(|e| e.0),
                sigma: est.map(|e| e.1),
            }
        })
        .collect();
    let with_data: Vec<(f64, f64)> = states
        .iter()
        .filter_map(|s| Some((s.fidelity?, s.sigma?)))
        .collect();
    let k = with_data.len().max(1) as f64;
    let mean_fidelity = with_data.iter().map(|x| x.0).sum::<f64>() / k;
    let mean_sigma = with_data.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt() / k;
    CampaignResult {
        seed,
        mode,
        total_counts: orbits.iter().map(|o| o.counts.total()).sum(),
        orbits,
        states,
        mean_fidelity,
        mean_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::NoiseToggles;

    #[test]
    fn port_counts_scoring() {
        let mut c = PortCounts::default();
        c.add(BsmOutcome::PhiPlus, Port::Ideal);
        c.add(BsmOutcome::PhiMinus, Port::Orthogonal);
        c.add(BsmOutcome::PhiMinus, Port::Orthogonal);
        assert_eq!(c.total(), 3);
        assert_eq!(c.score(true), (3, 0));
        assert_eq!(c.score(false), (1, 2));
    }

    #[test]
    fn swap_rule() {
        assert!(!swaps_ports(&MubState::H.state(), true));
        assert!(!swaps_ports(&MubState::V.state(), true));
        for m in [MubState::Plus, MubState::Minus, MubState::R, MubState::L] {
            assert!(swaps_ports(&m.state(), true));
            assert!(!swaps_ports(&m.state(), false));
        }
    }

    #[test]
    fn analyzer_sends_input_to_ideal_port() {
        let id = polarization_rotation(0.0);
        for m in MubState::ALL {
            let a = analyzer_for(&m.state());
            let p = analyzer_port_probability(&a, &m.state().to_density(), &id);
            assert!(p > 1.0 - 1e-12);
            let q = analyzer_port_probability(&a, &m.orthogonal().state().to_density(), &id);
            assert!(q < 1e-12);
        }
    }

    #[test]
    fn substreams_are_distinct_and_repeatable() {
        let a: u64 = orbit_rng(5, 0).random();
        let b: u64 = orbit_rng(5, 1).random();
        let a2: u64 = orbit_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn out_of_range_orbit() {
        let cfg = CampaignConfig::default();
        assert!(run_orbit(&cfg, 99, &mut orbit_rng(1, 0)).is_err());
    }

    #[test]
    fn noiseless_orbit_is_all_correct() {
        let cfg = CampaignConfig::default().with_noise(NoiseToggles::all_off());
        for i in 0..6 {
            let r = run_orbit(&cfg, 26 + i, &mut orbit_rng(3, i)).unwrap();
            assert!(r.correct > 0);
            assert_eq!(r.wrong, 0, "{:?}", r.state);
        }
    }
}
