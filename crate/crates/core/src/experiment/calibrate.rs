//! Fits the free model parameters to published observables.
//!
//! Eight parameters are matched to eight observables: the four one-at-a-time
//! fidelity deficits, the uplink loss at the low and high ends of the
//! reference pass, the slew-induced loss excess at culmination, and the total
//! campaign count. Coordinate descent with golden-section line searches
//! warms up a Levenberg-Marquardt polish.

use super::analytic::{combine, error_budget, expected_state_counts, orbit_slices, signal_fidelities, NoiseSource};
use super::config::{CampaignConfig, EffectiveParams, NoiseToggles};
use crate::error::{Error, Result};
use crate::linkgeom::{db_to_transmittance, link_loss_db, LinkModel, LinkSample};
use crate::qstate::MubState;
use crate::timesync::accidental_rate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};

/// Model outputs compared against targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observables {
    pub double_pair: f64,
    pub distinguishability: f64,
    pub polarization_distortion: f64,
    pub background: f64,
    /// Uplink loss at the low tracking elevation of the reference pass, dB.
    pub loss_low_db: f64,
    /// Uplink loss at culmination of the reference pass, dB.
    pub loss_high_db: f64,
    /// Culmination loss minus the same loss without slew degradation, dB.
    pub culmination_excess_db: f64,
    pub total_counts: f64,
}

impl Observables {
    fn as_array(&self) -> [f64; 8] {
        [
            self.double_pair,
            self.distinguishability,
            self.polarization_distortion,
            self.background,
            self.loss_low_db,
            self.loss_high_db,
            self.culmination_excess_db,
            self.total_counts,
        ]
    }

    /// Weighted squared distance: deficits in percent, losses in dB, counts
    /// in percent of the target.
    pub fn residual(&self, target: &Observables) -> f64 {
        residual_vector(self, target).iter().map(|r| r * r).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_sweeps: usize,
    /// Residual below which the fit is accepted.
    pub tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    pub schema_version: u32,
    /// Base campaign configuration, relative to the targets file. Built-in
    /// defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    /// Elevation of the low loss endpoint, degrees.
    pub low_elevation: f64,
    pub targets: Observables,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            schema_version: super::config::SCHEMA_VERSION,
            config: None,
            low_elevation: 14.5,
            targets: Observables {
                double_pair: 0.06,
                distinguishability: 0.10,
                polarization_distortion: 0.03,
                background: 0.04,
                loss_low_db: 52.0,
                loss_high_db: 41.0,
                culmination_excess_db: 1.0,
                total_counts: 911.0,
            },
            solver: SolverSettings::default(),
        }
    }
}

impl CalibrationTargets {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let t: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if t.schema_version != super::config::SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", t.schema_version)));
        }
        Ok(t)
    }

    /// Base configuration named by the targets file, resolved against `dir`.
    pub fn base_config(&self, dir: &Path) -> Result<CampaignConfig> {
        match &self.config {
            Some(p) => CampaignConfig::load(&dir.join(p)),
            None => Ok(CampaignConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedParameters {
    pub mode_overlap: f64,
    pub double_pair_fraction: f64,
    pub polarization_delta: f64,
    pub background_rate: f64,
    pub receiver_efficiency: f64,
    pub zenith_transmittance: f64,
    pub system_efficiency_db: f64,
    pub slew_degradation_k: f64,
}

const BOUNDS: [(f64, f64); 8] = [
    (0.0, 1.0),
    (0.0, 0.5),
    (0.0, FRAC_PI_4),
    (0.0, 2e4),
    (1e-6, 1.0),
    (0.05, 1.0),
    (-20.0, 40.0),
    (0.0, 50.0),
];

impl CalibratedParameters {
    pub fn from_config(cfg: &CampaignConfig) -> Self {
        Self {
            mode_overlap: cfg.bsm.mode_overlap,
            double_pair_fraction: cfg.source.double_pair_fraction,
            polarization_delta: cfg.channel.polarization_delta,
            background_rate: cfg.detection.background_rate,
            receiver_efficiency: cfg.channel.receiver_efficiency,
            zenith_transmittance: cfg.link.zenith_transmittance,
            system_efficiency_db: cfg.link.system_efficiency_db,
            slew_degradation_k: cfg.link.slew_degradation_k,
        }
    }

    pub fn apply(&self, cfg: &CampaignConfig) -> CampaignConfig {
        let mut c = cfg.clone();
        c.bsm.mode_overlap = self.mode_overlap;
        c.source.double_pair_fraction = self.double_pair_fraction;
        c.channel.polarization_delta = self.polarization_delta;
        c.detection.background_rate = self.background_rate;
        c.channel.receiver_efficiency = self.receiver_efficiency;
        c.link.zenith_transmittance = self.zenith_transmittance;
        c.link.system_efficiency_db = self.system_efficiency_db;
        c.link.slew_degradation_k = self.slew_degradation_k;
        c
    }

    fn to_array(self) -> [f64; 8] {
        [
            self.mode_overlap,
            self.double_pair_fraction,
            self.polarization_delta,
            self.background_rate,
            self.receiver_efficiency,
            self.zenith_transmittance,
            self.system_efficiency_db,
            self.slew_degradation_k,
        ]
    }

    fn from_array(a: [f64; 8]) -> Self {
        Self {
            mode_overlap: a[0],
            double_pair_fraction: a[1],
            polarization_delta: a[2],
            background_rate: a[3],
            receiver_efficiency: a[4],
            zenith_transmittance: a[5],
            system_efficiency_db: a[6],
            slew_degradation_k: a[7],
        }
    }
}

/// Reference-pass samples at the two loss endpoints.
fn endpoint_samples(cfg: &CampaignConfig, low_elevation: f64) -> Result<(LinkSample, LinkSample, f64)> {
    let g = &cfg.geometry;
    let t_low = g.half_time_above(low_elevation).ok_or_else(|| {
        crate::error::invalid("low_elevation", "reference pass never reaches the low endpoint elevation")
    })?;
    Ok((
        LinkSample::new(low_elevation, t_low, g, &cfg.link)?,
        LinkSample::new(g.max_elevation, 0.0, g, &cfg.link)?,
        t_low,
    ))
}

/// Observables of a configuration through the public analysis functions.
pub fn observables(cfg: &CampaignConfig, low_elevation: f64) -> Result<Observables> {
    let budget = error_budget(cfg)?;
    let counts = expected_state_counts(&cfg.with_noise(NoiseToggles::all_on()))?;
    let g = &cfg.geometry;
    let (_, _, t_low) = endpoint_samples(cfg, low_elevation)?;
    let loss_high_db = link_loss_db(g.max_elevation, 0.0, g, &cfg.link)?;
    let flat = LinkModel {
        slew_degradation_k: 0.0,
        ..cfg.link.clone()
    };
    Ok(Observables {
        double_pair: budget.deficit(NoiseSource::DoublePair),
        distinguishability: budget.deficit(NoiseSource::Distinguishability),
        polarization_distortion: budget.deficit(NoiseSource::PolarizationDistortion),
        background: budget.deficit(NoiseSource::Background),
        loss_low_db: link_loss_db(low_elevation, t_low, g, &cfg.link)?,
        loss_high_db,
        culmination_excess_db: loss_high_db - link_loss_db(g.max_elevation, 0.0, g, &flat)?,
        total_counts: counts.iter().map(|c| c.total()).sum(),
    })
}

fn mean_deficit(p: EffectiveParams) -> Result<f64> {
    let f = signal_fidelities(&p)?;
    Ok(1.0 - f.iter().sum::<f64>() / f.len() as f64)
}

/// Fast evaluation of [`observables`] with geometry precomputed and each
/// block recomputed only when its own parameters change.
struct Evaluator {
    base: CampaignConfig,
    per_state: Vec<Vec<LinkSample>>,
    per_state_time: Vec<f64>,
    low: LinkSample,
    high: LinkSample,
    herald_rate: f64,
    window_s: f64,
    feed_forward: bool,
    cache_pair: Option<(f64, f64)>,
    cache_overlap: Option<(f64, f64)>,
    cache_delta: Option<(f64, f64)>,
    cache_link: Option<([f64; 3], Vec<f64>)>,
}

impl Evaluator {
    fn new(base: &CampaignConfig, low_elevation: f64) -> Result<Self> {
        base.validate()?;
        base.validate_schedule()?;
        let schedule = base.schedule();
        let mut per_state = vec![Vec::new(); MubState::ALL.len()];
        for (orbit, state) in base.orbits.iter().zip(schedule) {
            let idx = MubState::ALL.iter().position(|m| *m == state).expect("MUB state");
            per_state[idx].extend(orbit_slices(base, orbit)?.into_iter().map(|s| s.sample));
        }
        let per_state_time = per_state.iter().map(|v| v.len() as f64 * base.time_slice).collect();
        let (low, high, _) = endpoint_samples(base, low_elevation)?;
        Ok(Self {
            per_state,
            per_state_time,
            low,
            high,
            herald_rate: base.source.fourfold_ground_rate(),
            window_s: base.detection.window_s(),
            feed_forward: base.noise.feed_forward,
            base: base.clone(),
            cache_pair: None,
            cache_overlap: None,
            cache_delta: None,
            cache_link: None,
        })
    }

    fn cached(slot: &mut Option<(f64, f64)>, key: f64, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
        if let Some((k, v)) = *slot {
            if k == key {
                return Ok(v);
            }
        }
        let v = compute()?;
        *slot = Some((key, v));
        Ok(v)
    }

    fn link(&self, x: &[f64; 8]) -> LinkModel {
        LinkModel {
            zenith_transmittance: x[5],
            system_efficiency_db: x[6],
            slew_degradation_k: x[7],
            ..self.base.link.clone()
        }
    }

    fn evaluate(&mut self, x: &[f64; 8]) -> Result<Observables> {
        let ideal = EffectiveParams {
            feed_forward: self.feed_forward,
            ..EffectiveParams::ideal()
        };
        let fe = self.base.source.entangled_fidelity;
        let jitter = self.base.channel.polarization_jitter;
        let double_pair = Self::cached(&mut self.cache_pair, x[1], || {
            mean_deficit(EffectiveParams {
                entangled_fidelity: fe,
                double_pair_fraction: x[1],
                ..ideal
            })
        })?;
        let distinguishability = Self::cached(&mut self.cache_overlap, x[0], || {
            mean_deficit(EffectiveParams {
                mode_overlap: x[0],
                ..ideal
            })
        })?;
        let polarization_distortion = Self::cached(&mut self.cache_delta, x[2], || {
            mean_deficit(EffectiveParams {
                polarization_delta: x[2],
                polarization_jitter: jitter,
                ..ideal
            })
        })?;

        let link = self.link(x);
        let key = [x[5], x[6], x[7]];
        if self.cache_link.as_ref().map(|c| c.0) != Some(key) {
            let sums = self
                .per_state
                .iter()
                .map(|v| v.iter().map(|s| db_to_transmittance(link.loss_for(s).total_db())).sum())
                .collect();
            self.cache_link = Some((key, sums));
        }
        let sums = &self.cache_link.as_ref().expect("filled above").1;
        let acc = accidental_rate(self.herald_rate, x[3], self.window_s);
        let mut total = 0.0;
        let mut background = 0.0;
        for (sum, time) in sums.iter().zip(&self.per_state_time) {
            let signal = self.herald_rate * x[4] * sum * self.base.time_slice;
            let accidental = acc * time;
            let all = signal + accidental;
            total += all;
            if all > 0.0 {
                background += accidental / all / 2.0;
            }
        }
        background /= sums.len() as f64;

        let loss_high_db = link.loss_for(&self.high).total_db();
        let flat = LinkModel {
            slew_degradation_k: 0.0,
            ..link.clone()
        };
        Ok(Observables {
            double_pair,
            distinguishability,
            polarization_distortion,
            background,
            loss_low_db: link.loss_for(&self.low).total_db(),
            loss_high_db,
            culmination_excess_db: loss_high_db - flat.loss_for(&self.high).total_db(),
            total_counts: total,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub parameters: CalibratedParameters,
    pub residual: f64,
    /// False when the minimizer stalled above the tolerance (infeasible targets).
    pub within_tolerance: bool,
    /// Coordinate sweeps plus Levenberg-Marquardt iterations.
    pub sweeps: usize,
    pub targets: Observables,
    pub achieved: Observables,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_section(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

fn residual_vector(obs: &Observables, goal: &Observables) -> [f64; 8] {
    let (a, t) = (obs.as_array(), goal.as_array());
    let scales = [0.01, 0.01, 0.01, 0.01, 1.0, 1.0, 1.0, 0.01 * t[7].abs().max(1.0)];
    std::array::from_fn(|i| (a[i] - t[i]) / scales[i])
}

fn clamp_to_bounds(mut x: [f64; 8]) -> [f64; 8] {
    for (xi, (lo, hi)) in x.iter_mut().zip(BOUNDS) {
        *xi = xi.clamp(lo, hi);
    }
    x
}

/// One cyclic coordinate sweep with golden-section line searches inside
/// `radius`, which adapts to the step taken.
fn coordinate_sweep(
    ev: &mut Evaluator,
    goal: &Observables,
    x: &mut [f64; 8],
    fx: &mut f64,
    radius: &mut [f64; 8],
) -> Result<()> {
    for i in 0..8 {
        let (lo, hi) = BOUNDS[i];
        let width = hi - lo;
        let a = (x[i] - radius[i]).max(lo);
        let b = (x[i] + radius[i]).min(hi);
        let mut probe = *x;
        let (xi, fi) = golden_section(
            |v| {
                probe[i] = v;
                Ok(ev.evaluate(&probe)?.residual(goal))
            },
            a,
            b,
            1e-13 * width,
        )?;
        if fi < *fx {
            radius[i] = (8.0 * (xi - x[i]).abs()).clamp(1e-10 * width, width);
            x[i] = xi;
            *fx = fi;
        } else {
            radius[i] = (radius[i] * 0.5).max(1e-10 * width);
        }
    }
    Ok(())
}

/// Levenberg-Marquardt step from `x` with forward-difference Jacobian,
/// projected onto the bounds.
fn lm_step(ev: &mut Evaluator, goal: &Observables, x: &[f64; 8], r: &[f64; 8], lambda: f64) -> Result<[f64; 8]> {
    let mut jac = DMatrix::<f64>::zeros(8, 8);
    for j in 0..8 {
        let (lo, hi) = BOUNDS[j];
        let mut h = 1e-7 * x[j].abs().max(1e-3 * (hi - lo));
        if x[j] + h > hi {
            h = -h;
        }
        let mut xp = *x;
        xp[j] += h;
        let rp = residual_vector(&ev.evaluate(&xp)?, goal);
        for i in 0..8 {
            jac[(i, j)] = (rp[i] - r[i]) / h;
        }
    }
    let jt = jac.transpose();
    let mut a = &jt * &jac;
    for k in 0..8 {
        a[(k, k)] += lambda * a[(k, k)].max(1e-12);
    }
    let g = &jt * DVector::from_column_slice(r);
    let Some(step) = a.lu().solve(&(-g)) else {
        return Ok(*x);
    };
    Ok(clamp_to_bounds(std::array::from_fn(|k| x[k] + step[k])))
}

/// Coordinate sweeps before switching to damped Gauss-Newton.
const WARM_SWEEPS: usize = 3;

/// Fits the calibrated parameters of `base` to `targets`.
///
/// A few coordinate-descent sweeps from the parameters in `base` are
/// polished with Levenberg-Marquardt iterations on the square residual
/// system. A fit that stops improving above the tolerance is reported with
/// `within_tolerance == false`; running out of iterations is an error that
/// carries the best point found.
pub fn calibrate(base: &CampaignConfig, targets: &CalibrationTargets) -> Result<Calibration> {
    let mut ev = Evaluator::new(base, targets.low_elevation)?;
    let goal = targets.targets;
    let settings = targets.solver;
    let mut x = clamp_to_bounds(CalibratedParameters::from_config(base).to_array());
    let mut fx = ev.evaluate(&x)?.residual(&goal);
    let mut radius: [f64; 8] = BOUNDS.map(|(lo, hi)| hi - lo);
    let mut iterations = 0;
    while iterations < WARM_SWEEPS.min(settings.max_sweeps) && fx > settings.tolerance {
        iterations += 1;
        coordinate_sweep(&mut ev, &goal, &mut x, &mut fx, &mut radius)?;
    }

    let mut lambda = 1e-3;
    let mut stalled = false;
    while iterations < settings.max_sweeps && fx > settings.tolerance {
        iterations += 1;
        let r = residual_vector(&ev.evaluate(&x)?, &goal);
        let mut improved = false;
        while lambda < 1e12 {
            let candidate = lm_step(&mut ev, &goal, &x, &r, lambda)?;
            let fc = ev.evaluate(&candidate)?.residual(&goal);
            if fc < fx {
                improved = fx - fc > 1e-15 * fx;
                x = candidate;
                fx = fc;
                lambda = (lambda / 5.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // Gauss-Newton has settled; give coordinate descent one chance
            // to escape a bound before declaring a stall.
            let before = fx;
            coordinate_sweep(&mut ev, &goal, &mut x, &mut fx, &mut radius)?;
            if before - fx <= 1e-15 * before {
                stalled = true;
                break;
            }
            lambda = 1e-3;
        }
    }

    let parameters = CalibratedParameters::from_array(x);
    if !stalled && fx > settings.tolerance {
        return Err(Error::NonConvergence {
            iterations,
            residual: fx,
            best: Box::new(parameters),
        });
    }
    Ok(Calibration {
        parameters,
        residual: fx,
        within_tolerance: fx <= settings.tolerance,
        sweeps: iterations,
        targets: goal,
        achieved: ev.evaluate(&x)?,
    })
}

/// Expected fidelities and counts after applying `params` to `base`.
pub fn calibrated_campaign(base: &CampaignConfig, params: &CalibratedParameters) -> Result<super::AnalyticCampaign> {
    let cfg = params.apply(base);
    Ok(combine(&signal_fidelities(&cfg.effective())?, &expected_state_counts(&cfg)?))
}
