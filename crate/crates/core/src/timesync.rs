//! Two-clock time tagging: stream generation, clock recovery from sync
//! pulses, and coincidence matching.
//!
//! Timestamps are integer picoseconds. The ground clock is the reference; a
//! satellite clock reads `t_sat = t_ground + offset + drift · t_ground`.
//! Propagation delay is common to sync pulses and photons and is folded into
//! the offset.
//!
//! Text dump format (one tag per line, no header): `channel,time_ps`.

use crate::error::{invalid, Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const SYNC_CHANNEL: u16 = 0;
/// Ground herald after a `φ⁺` BSM outcome.
pub const HERALD_PHI_PLUS: u16 = 1;
/// Ground herald after a `φ⁻` BSM outcome.
pub const HERALD_PHI_MINUS: u16 = 2;
/// Satellite analyzer port projecting on the ideal state.
pub const PORT_IDEAL: u16 = 1;
/// Satellite analyzer port projecting on the orthogonal state.
pub const PORT_ORTHOGONAL: u16 = 2;

pub const MAX_DRIFT_PPM: f64 = 100.0;
const PS_PER_S: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub time_ps: i64,
    pub channel: u16,
}

/// Linear clock relation to the ground reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockModel {
    pub offset_ps: f64,
    pub drift_ppm: f64,
}

impl ClockModel {
    pub fn new(offset_ps: f64, drift_ppm: f64) -> Result<Self> {
        if !(drift_ppm.abs() < MAX_DRIFT_PPM) {
            return Err(invalid("drift_ppm", format!("|{drift_ppm}| must be below {MAX_DRIFT_PPM} ppm")));
        }
        Ok(Self { offset_ps, drift_ppm })
    }

    fn drift(&self) -> f64 {
        self.drift_ppm * 1e-6
    }

    /// Reference time → local reading.
    pub fn to_local(&self, reference_ps: f64) -> f64 {
        reference_ps + self.offset_ps + self.drift() * reference_ps
    }

    /// Local reading → reference time (rounded to the picosecond).
    pub fn to_reference(&self, local_ps: i64) -> i64 {
        ((local_ps as f64 - self.offset_ps) / (1.0 + self.drift())).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    tags: Vec<Tag>,
    clock: ClockModel,
}

impl TimeTagStream {
    /// Requires tags sorted by time.
    pub fn new(tags: Vec<Tag>, clock: ClockModel) -> Result<Self> {
        ensure_sorted(tags.iter().map(|t| t.time_ps))?;
        ClockModel::new(clock.offset_ps, clock.drift_ppm)?;
        Ok(Self { tags, clock })
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    /// The clock the stream was recorded with (as generated, not as fitted).
    pub fn clock(&self) -> ClockModel {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn channel_times(&self, channel: u16) -> Vec<i64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.time_ps)
            .collect()
    }

    pub fn count(&self, channel: u16) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    /// Writes the `channel,time_ps` dump.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.tags {
            writeln!(out, "{},{}", t.channel, t.time_ps)?;
        }
        Ok(())
    }

    /// Reads a `channel,time_ps` dump. Blank lines and `#` comments are skipped.
    pub fn read_text<R: BufRead>(input: R, clock: ClockModel) -> Result<Self> {
        let mut tags = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (ch, t) = line
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("line {}: expected `channel,time_ps`", n + 1)))?;
            let channel = ch
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("line {}: channel: {e}", n + 1)))?;
            let time_ps = t
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("line {}: time: {e}", n + 1)))?;
            tags.push(Tag { time_ps, channel });
        }
        Self::new(tags, clock)
    }
}

fn ensure_sorted(times: impl Iterator<Item = i64>) -> Result<()> {
    let mut prev = i64::MIN;
    for (i, t) in times.enumerate() {
        if t < prev {
            return Err(Error::Unsorted(i));
        }
        prev = t;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncConfig {
    pub sync_rate: f64,
    /// Full coincidence window, ps.
    pub window_ps: i64,
    /// Relative ground/satellite timing jitter, ps.
    pub detector_jitter_sigma_ps: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            sync_rate: 10e3,
            window_ps: 3000,
            detector_jitter_sigma_ps: 300.0,
        }
    }
}

/// A photon event known to the simulator: the ground herald and, if the
/// partner photon was detected, the satellite channel that clicked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueEvent {
    pub ground_time_ps: i64,
    pub ground_channel: u16,
    pub satellite_channel: Option<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamParams {
    pub satellite_clock: ClockModel,
    pub jitter_sigma_ps: f64,
    /// Total satellite background rate, split evenly over `background_channels`.
    pub satellite_background_hz: f64,
    pub background_channels: Vec<u16>,
    pub ground_background_hz: f64,
    pub ground_background_channel: u16,
    pub sync_rate: f64,
    pub duration_s: f64,
}

impl Default for StreamParams {
    fn default() -> Self {
        Self {
            satellite_clock: ClockModel::default(),
            jitter_sigma_ps: 0.0,
            satellite_background_hz: 0.0,
            background_channels: vec![PORT_IDEAL, PORT_ORTHOGONAL],
            ground_background_hz: 0.0,
            ground_background_channel: HERALD_PHI_PLUS,
            sync_rate: 0.0,
            duration_s: 1.0,
        }
    }
}

fn poisson_process<R: Rng + ?Sized>(rate_hz: f64, duration_s: f64, channel: u16, rng: &mut R, out: &mut Vec<Tag>) {
    if rate_hz <= 0.0 {
        return;
    }
    let gap = Exp::new(rate_hz).expect("positive rate");
    let mut t = gap.sample(rng);
    while t < duration_s {
        out.push(Tag {
            time_ps: (t * PS_PER_S) as i64,
            channel,
        });
        t += gap.sample(rng);
    }
}

/// Builds the ground and satellite tag streams for one acquisition.
pub fn generate_streams<R: Rng + ?Sized>(
    events: &[TrueEvent],
    params: &StreamParams,
    rng: &mut R,
) -> Result<(TimeTagStream, TimeTagStream)> {
    let clock = ClockModel::new(params.satellite_clock.offset_ps, params.satellite_clock.drift_ppm)?;
    if !(params.duration_s > 0.0) {
        return Err(invalid("duration", "must be positive"));
    }
    let jitter = if params.jitter_sigma_ps > 0.0 {
        Some(Normal::new(0.0, params.jitter_sigma_ps).map_err(|e| invalid("jitter_sigma_ps", e.to_string()))?)
    } else {
        None
    };
    let local = |t_ref: f64, rng: &mut R| -> i64 {
        let j = jitter.as_ref().map_or(0.0, |n| n.sample(rng));
        (clock.to_local(t_ref) + j).round() as i64
    };

    let mut ground = Vec::new();
    let mut sat = Vec::new();

    if params.sync_rate > 0.0 {
        let n = (params.duration_s * params.sync_rate).floor() as i64;
        let period = PS_PER_S / params.sync_rate;
        ground.reserve(n as usize);
        sat.reserve(n as usize);
        for k in 0..n {
            let t = (k as f64 * period).round();
            ground.push(Tag {
                time_ps: t as i64,
                channel: SYNC_CHANNEL,
            });
            sat.push(Tag {
                time_ps: local(t, rng),
                channel: SYNC_CHANNEL,
            });
        }
    }

    for ev in events {
        ground.push(Tag {
            time_ps: ev.ground_time_ps,
            channel: ev.ground_channel,
        });
        if let Some(ch) = ev.satellite_channel {
            sat.push(Tag {
                time_ps: local(ev.ground_time_ps as f64, rng),
                channel: ch,
            });
        }
    }

    if !params.background_channels.is_empty() {
        let per = params.satellite_background_hz / params.background_channels.len() as f64;
        for &ch in &params.background_channels {
            poisson_process(per, params.duration_s, ch, rng, &mut sat);
        }
    }
    poisson_process(
        params.ground_background_hz,
        params.duration_s,
        params.ground_background_channel,
        rng,
        &mut ground,
    );

    ground.sort_unstable();
    sat.sort_unstable();
    Ok((
        TimeTagStream::new(ground, ClockModel::default())?,
        TimeTagStream::new(sat, clock)?,
    ))
}

/// Recovered clock with its fit quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockFit {
    pub clock: ClockModel,
    pub residual_rms_ps: f64,
    pub pulses: usize,
}

/// Least-squares fit of `t_sat − t_ground = offset + drift · t_ground` over
/// sync pulses paired by index.
pub fn fit_clock(ground_sync: &[i64], satellite_sync: &[i64]) -> Result<ClockFit> {
    ensure_sorted(ground_sync.iter().copied())?;
    ensure_sorted(satellite_sync.iter().copied())?;
    if ground_sync.len() != satellite_sync.len() {
        return Err(Error::SyncMismatch {
            ground: ground_sync.len(),
            satellite: satellite_sync.len(),
        });
    }
    let n = ground_sync.len();
    if n < 2 {
        return Err(Error::TooFewSyncPulses(n));
    }
    // centre x to keep the normal equations well conditioned over 1e14 ps spans
    let nf = n as f64;
    let mean_x = ground_sync.iter().map(|&x| x as f64).sum::<f64>() / nf;
    let ys = || ground_sync.iter().zip(satellite_sync).map(|(&g, &s)| (g as f64 - mean_x, (s - g) as f64));
    let mean_y = ys().map(|(_, y)| y).sum::<f64>() / nf;
    let (sxx, sxy) = ys().fold((0.0, 0.0), |(sxx, sxy), (x, y)| (sxx + x * x, sxy + x * (y - mean_y)));
    if sxx <= 0.0 {
        return Err(Error::TooFewSyncPulses(1));
    }
    let slope = sxy / sxx;
    let offset = mean_y - slope * mean_x;
    let ss: f64 = ys()
        .map(|(x, y)| {
            let r = y - (mean_y + slope * x);
            r * r
        })
        .sum();
    Ok(ClockFit {
        clock: ClockModel {
            offset_ps: offset,
            drift_ppm: slope * 1e6,
        },
        residual_rms_ps: (ss / nf).sqrt(),
        pulses: n,
    })
}

/// Fits the clock from the sync channel of both streams.
pub fn fit_clock_streams(ground: &TimeTagStream, satellite: &TimeTagStream) -> Result<ClockFit> {
    fit_clock(
        &ground.channel_times(SYNC_CHANNEL),
        &satellite.channel_times(SYNC_CHANNEL),
    )
}

/// Greedy nearest-first pairing of two sorted time lists.
///
/// All pairs with `|a − b| ≤ half_window` are ranked by `(|a − b|, min, max)`
/// and accepted while both tags are still free. The ranking key is symmetric,
/// so swapping the lists swaps the pairs (for distinct timestamps).
pub fn match_times(a: &[i64], b: &[i64], half_window: i64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    let mut lo = 0usize;
    for (i, &ta) in a.iter().enumerate() {
        while lo < b.len() && b[lo] < ta - half_window {
            lo += 1;
        }
        let mut j = lo;
        while j < b.len() && b[j] <= ta + half_window {
            let tb = b[j];
            candidates.push(((ta - tb).abs(), ta.min(tb), ta.max(tb), i, j));
            j += 1;
        }
    }
    candidates.sort_unstable();
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, _, _, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coincidence {
    pub ground: Tag,
    /// Satellite tag with its time mapped to the ground clock.
    pub satellite: Tag,
    /// `satellite − ground` after correction, ps.
    pub delta_ps: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coincidences {
    pub pairs: Vec<Coincidence>,
    pub unmatched_ground: usize,
    pub unmatched_satellite: usize,
}

/// Matches non-sync tags of the two streams within `±window/2` after mapping
/// satellite times onto the ground clock with `clock`.
pub fn match_coincidences(
    ground: &TimeTagStream,
    satellite: &TimeTagStream,
    clock: &ClockModel,
    window_ps: i64,
) -> Result<Coincidences> {
    if window_ps < 0 {
        return Err(invalid("window_ps", "must be non-negative"));
    }
    let g: Vec<Tag> = ground.tags().iter().copied().filter(|t| t.channel != SYNC_CHANNEL).collect();
    let s: Vec<Tag> = satellite
        .tags()
        .iter()
        .filter(|t| t.channel != SYNC_CHANNEL)
        .map(|t| Tag {
            time_ps: clock.to_reference(t.time_ps),
            channel: t.channel,
        })
        .collect();
    let gt: Vec<i64> = g.iter().map(|t| t.time_ps).collect();
    let st: Vec<i64> = s.iter().map(|t| t.time_ps).collect();
    let pairs: Vec<Coincidence> = match_times(&gt, &st, window_ps / 2)
        .into_iter()
        .map(|(i, j)| Coincidence {
            ground: g[i],
            satellite: s[j],
            delta_ps: s[j].time_ps - g[i].time_ps,
        })
        .collect();
    Ok(Coincidences {
        unmatched_ground: g.len() - pairs.len(),
        unmatched_satellite: s.len() - pairs.len(),
        pairs,
    })
}

/// Accidental coincidence rate `r_trigger · r_background · τ`, Hz.
pub fn accidental_rate(trigger_rate: f64, background_rate: f64, window_s: f64) -> f64 {
    trigger_rate * background_rate * window_s
}
