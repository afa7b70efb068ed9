//! Pass geometry and uplink channel loss.
//!
//! The satellite flies a circular two-body orbit; Earth rotation is ignored.
//! Time `t` is measured from culmination. The orbit plane passes at central
//! angle `β_min` from the ground station, so the station-to-subsatellite
//! central angle obeys `cos β(t) = cos β_min · cos(ω t)`.

use crate::error::{invalid, Result};
use crate::qstate::{pauli_y, Operator, C64};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Standard gravitational parameter of the Earth, km³/s².
pub const GM_EARTH: f64 = 398_600.441_8;

/// Upper bound on the slew ratio fed to the tracking-error term; an
/// overhead pass would otherwise drive the azimuth rate to infinity.
pub const SLEW_RATIO_CAP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassGeometry {
    /// km
    pub earth_radius: f64,
    /// km
    pub orbit_altitude: f64,
    /// degrees
    pub max_elevation: f64,
    /// Tracking start/stop elevation, degrees.
    pub min_elevation: f64,
}

impl Default for PassGeometry {
    fn default() -> Self {
        Self {
            earth_radius: 6371.0,
            orbit_altitude: 500.0,
            max_elevation: 76.0,
            min_elevation: 14.5,
        }
    }
}

impl PassGeometry {
    pub fn with_max_elevation(&self, max_elevation: f64) -> Self {
        Self {
            max_elevation,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.orbit_altitude > 0.0) {
            return Err(invalid("orbit_altitude", "must be positive"));
        }
        if !(self.earth_radius > 0.0) {
            return Err(invalid("earth_radius", "must be positive"));
        }
        if !(self.min_elevation > 0.0) {
            return Err(invalid("min_elevation", "must be above the horizon"));
        }
        if !(self.min_elevation < self.max_elevation && self.max_elevation <= 90.0) {
            return Err(invalid(
                "max_elevation",
                format!(
                    "need min_elevation ({}) < max_elevation ({}) <= 90",
                    self.min_elevation, self.max_elevation
                ),
            ));
        }
        Ok(())
    }

    fn orbit_radius(&self) -> f64 {
        self.earth_radius + self.orbit_altitude
    }

    /// Two-body angular rate, rad/s.
    pub fn orbital_rate(&self) -> f64 {
        (GM_EARTH / self.orbit_radius().powi(3)).sqrt()
    }

    /// Station-to-subsatellite central angle at a given elevation, radians.
    pub fn central_angle(&self, elevation_deg: f64) -> f64 {
        let e = elevation_deg.to_radians();
        (self.earth_radius * e.cos() / self.orbit_radius()).acos() - e
    }

    /// Elevation in degrees at central angle `beta` (radians).
    pub fn elevation_at_central_angle(&self, beta: f64) -> f64 {
        let k = self.earth_radius / self.orbit_radius();
        (beta.cos() - k).atan2(beta.sin()).to_degrees()
    }

    /// Half-width in time of the part of the pass above `elevation_deg`, or
    /// `None` if the pass never gets that high.
    pub fn half_time_above(&self, elevation_deg: f64) -> Option<f64> {
        if elevation_deg > self.max_elevation {
            return None;
        }
        let ratio = self.central_angle(elevation_deg).cos()
            / self.central_angle(self.max_elevation).cos();
        Some(ratio.clamp(-1.0, 1.0).acos() / self.orbital_rate())
    }

    /// Time spent above `elevation_deg`, seconds.
    pub fn duration_above(&self, elevation_deg: f64) -> f64 {
        self.half_time_above(elevation_deg).map_or(0.0, |h| 2.0 * h)
    }

    /// Line of sight (km), its time derivative and the station's local
    /// up/north/east unit vectors at time `t`.
    fn frame(&self, t: f64) -> Frame {
        let bm = self.central_angle(self.max_elevation);
        let (r, a) = (self.earth_radius, self.orbit_radius());
        let w = self.orbital_rate();
        let phi = w * t;
        let station = [r * bm.cos(), 0.0, r * bm.sin()];
        let sat = [a * phi.cos(), a * phi.sin(), 0.0];
        let los = [sat[0] - station[0], sat[1] - station[1], sat[2] - station[2]];
        let dlos = [-a * w * phi.sin(), a * w * phi.cos(), 0.0];
        let up = [bm.cos(), 0.0, bm.sin()];
        let north = [-bm.sin(), 0.0, bm.cos()];
        let east = [0.0, 1.0, 0.0];
        Frame {
            los,
            dlos,
            up,
            north,
            east,
        }
    }

    /// Elevation and azimuth (degrees) from explicit station/satellite vectors.
    pub fn look_angles(&self, t: f64) -> (f64, f64) {
        let Frame { los, up, north, east, .. } = self.frame(t);
        let n = norm(los);
        let el = (dot(los, up) / n).asin().to_degrees();
        let az = dot(los, east).atan2(dot(los, north)).to_degrees();
        (el, az)
    }

    /// Magnitude of the azimuth-axis rate of an alt-az mount, deg/s.
    pub fn azimuth_rate(&self, t: f64) -> f64 {
        let Frame {
            los, dlos, north, east, ..
        } = self.frame(t);
        let (e, n) = (dot(los, east), dot(los, north));
        let (de, dn) = (dot(dlos, east), dot(dlos, north));
        let horiz = (e * e + n * n).max(1e-12);
        ((n * de - e * dn) / horiz).abs().to_degrees()
    }
}

struct Frame {
    los: [f64; 3],
    dlos: [f64; 3],
    up: [f64; 3],
    north: [f64; 3],
    east: [f64; 3],
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Line-of-sight distance in km at a given elevation.
pub fn slant_range(elevation_deg: f64, geometry: &PassGeometry) -> f64 {
    let (r, h) = (geometry.earth_radius, geometry.orbit_altitude);
    let s = elevation_deg.to_radians().sin();
    (r * r * s * s + 2.0 * r * h + h * h).sqrt() - r * s
}

/// Elevation in degrees at time `t` from culmination.
pub fn elevation_profile(geometry: &PassGeometry, t: f64) -> Result<f64> {
    geometry.validate()?;
    let bm = geometry.central_angle(geometry.max_elevation);
    let beta = (bm.cos() * (geometry.orbital_rate() * t).cos()).clamp(-1.0, 1.0).acos();
    Ok(geometry.elevation_at_central_angle(beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    /// Full-angle transmitter divergence along the two beam axes, µrad.
    pub divergence_x: f64,
    pub divergence_y: f64,
    /// Atmospheric seeing, µrad; added in quadrature per axis.
    pub seeing: f64,
    /// Residual APT pointing error at low slew, µrad.
    pub tracking_error: f64,
    /// Satellite receiver aperture, m.
    pub receiver_diameter: f64,
    pub zenith_transmittance: f64,
    /// Lumped optics and coupling loss, dB.
    pub system_efficiency_db: f64,
    pub slew_degradation_k: f64,
    /// Azimuth rate that normalizes the slew-degradation term, deg/s.
    pub max_slew_rate: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        // Divergence axes are the in-orbit equivalent measured through the
        // atmosphere, so no further seeing is added by default.
        Self {
            divergence_x: 24.0,
            divergence_y: 35.0,
            seeing: 0.0,
            tracking_error: 3.0,
            receiver_diameter: 0.3,
            zenith_transmittance: 0.8,
            system_efficiency_db: 6.0,
            slew_degradation_k: 0.0,
            max_slew_rate: 5.0,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("divergence_x", self.divergence_x),
            ("divergence_y", self.divergence_y),
            ("receiver_diameter", self.receiver_diameter),
            ("max_slew_rate", self.max_slew_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        for (name, v) in [
            ("seeing", self.seeing),
            ("tracking_error", self.tracking_error),
            ("slew_degradation_k", self.slew_degradation_k),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be non-negative")));
            }
        }
        if !(self.zenith_transmittance > 0.0 && self.zenith_transmittance <= 1.0) {
            return Err(invalid("zenith_transmittance", "must lie in (0, 1]"));
        }
        if !self.system_efficiency_db.is_finite() {
            return Err(invalid("system_efficiency_db", "must be finite"));
        }
        Ok(())
    }

    /// Per-axis seeing-broadened divergence, µrad.
    pub fn axis_divergences(&self) -> (f64, f64) {
        (
            self.divergence_x.hypot(self.seeing),
            self.divergence_y.hypot(self.seeing),
        )
    }

    /// Scalar divergence for the budget: geometric mean of the two axes.
    pub fn effective_divergence(&self) -> f64 {
        let (x, y) = self.axis_divergences();
        (x * y).sqrt()
    }

    /// Loss for a precomputed geometric sample.
    pub fn loss_for(&self, sample: &LinkSample) -> LossTerms {
        let theta = self.effective_divergence() * 1e-6;
        let spot = theta * sample.range_km * 1e3;
        let eta_geo = (self.receiver_diameter / spot).powi(2).min(1.0);
        let sigma = self.tracking_error * (1.0 + self.slew_degradation_k * sample.slew_ratio);
        let eta_point = 1.0 / (1.0 + (2.0 * sigma / self.effective_divergence()).powi(2));
        let eta_atm = self.zenith_transmittance.powf(sample.airmass);
        LossTerms {
            geometric_db: -10.0 * eta_geo.log10(),
            pointing_db: -10.0 * eta_point.log10(),
            atmosphere_db: -10.0 * eta_atm.log10(),
            system_db: self.system_efficiency_db,
        }
    }
}

/// Geometry-only inputs to the loss model at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub elevation_deg: f64,
    pub range_km: f64,
    pub airmass: f64,
    /// Azimuth rate over `max_slew_rate`, capped at [`SLEW_RATIO_CAP`].
    pub slew_ratio: f64,
}

impl LinkSample {
    pub fn new(elevation_deg: f64, t: f64, geometry: &PassGeometry, model: &LinkModel) -> Result<Self> {
        if !(elevation_deg > 0.0) {
            return Err(invalid("elevation", format!("{elevation_deg} deg is not above the horizon")));
        }
        Ok(Self {
            elevation_deg,
            range_km: slant_range(elevation_deg, geometry),
            airmass: 1.0 / elevation_deg.to_radians().sin(),
            slew_ratio: (geometry.azimuth_rate(t) / model.max_slew_rate).min(SLEW_RATIO_CAP),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossTerms {
    pub geometric_db: f64,
    pub pointing_db: f64,
    pub atmosphere_db: f64,
    pub system_db: f64,
}

impl LossTerms {
    pub fn total_db(&self) -> f64 {
        self.geometric_db + self.pointing_db + self.atmosphere_db + self.system_db
    }
}

/// Uplink loss in dB at `elevation_deg`, using the mount slew at time `t`.
pub fn link_loss_db(elevation_deg: f64, t: f64, geometry: &PassGeometry, model: &LinkModel) -> Result<f64> {
    Ok(model
        .loss_for(&LinkSample::new(elevation_deg, t, geometry, model)?)
        .total_db())
}

/// `10^(−dB/10)`.
pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub t_s: f64,
    pub elevation_deg: f64,
    pub range_km: f64,
    pub loss_db: f64,
}

/// Samples one pass every `step` seconds over a `duration` window centred on
/// culmination (endpoints included), skipping instants below `min_elevation`.
pub fn loss_profile(geometry: &PassGeometry, model: &LinkModel, duration: f64, step: f64) -> Result<Vec<LossRow>> {
    geometry.validate()?;
    model.validate()?;
    if !(duration > 0.0 && step > 0.0) {
        return Err(invalid("orbit_duration", "duration and step must be positive"));
    }
    let n = (duration / step).round() as i64;
    let mut rows = Vec::with_capacity(n as usize + 1);
    for i in 0..=n {
        let t = -duration / 2.0 + i as f64 * step;
        let elevation_deg = elevation_profile(geometry, t)?;
        if elevation_deg < geometry.min_elevation {
            continue;
        }
        rows.push(LossRow {
            t_s: t,
            elevation_deg,
            range_km: slant_range(elevation_deg, geometry),
            loss_db: link_loss_db(elevation_deg, t, geometry, model)?,
        });
    }
    Ok(rows)
}

/// Writes `t_s,elevation_deg,range_km,loss_db`.
pub fn write_loss_csv<W: Write>(rows: &[LossRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Linear-polarization rotation `[[cos a, −sin a], [sin a, cos a]]`, a Bloch
/// rotation by `2a` about the y axis (circular states are unaffected).
pub fn polarization_rotation(angle: f64) -> Operator {
    let (s, c) = angle.sin_cos();
    Operator::from_row_slice(
        2,
        2,
        &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
    )
}

/// One draw of the uplink polarization distortion: a rotation by
/// `delta + Normal(0, jitter_sigma)`.
pub fn polarization_distortion<R: Rng + ?Sized>(delta: f64, jitter_sigma: f64, rng: &mut R) -> Operator {
    let jitter = if jitter_sigma > 0.0 {
        Normal::new(0.0, jitter_sigma)
            .expect("finite sigma")
            .sample(rng)
    } else {
        0.0
    };
    polarization_rotation(delta + jitter)
}

/// Kraus operators of the jitter-averaged distortion channel.
///
/// Averaging the y-axis rotation over Gaussian jitter shrinks the x/z Bloch
/// components by `e = exp(−2σ²)`, which equals mixing `R(δ)` and `R(δ)·Y`
/// with weights `(1 ± e)/2`.
pub fn polarization_kraus(delta: f64, jitter_sigma: f64) -> Vec<Operator> {
    let e = (-2.0 * jitter_sigma * jitter_sigma).exp();
    let r = polarization_rotation(delta);
    let mut k = vec![r.scale(((1.0 + e) / 2.0).sqrt())];
    if e < 1.0 {
        k.push((&r * pauli_y()).scale(((1.0 - e) / 2.0).sqrt()));
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{check_unitary, fidelity, DensityMatrix, MubState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geo() -> PassGeometry {
        PassGeometry::default()
    }

    #[test]
    fn slant_range_examples() {
        assert!((slant_range(90.0, &geo()) - 500.0).abs() < 1e-9);
        let low = slant_range(14.5, &geo());
        assert!((low - 1432.0).abs() < 1.0, "{low}");
        // closed form at 76° evaluates to 514.146 km
        let high = slant_range(76.0, &geo());
        assert!((high - 514.146).abs() < 1e-3, "{high}");
    }

    #[test]
    fn slant_range_monotone() {
        let mut prev = f64::INFINITY;
        for k in 10..=900 {
            let l = slant_range(k as f64 / 10.0, &geo());
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn slant_range_matches_vector_geometry() {
        let g = geo();
        for t in [-150.0, -60.0, 0.0, 42.0, 170.0] {
            let (el, _) = g.look_angles(t);
            let bm = g.central_angle(g.max_elevation);
            let phi = g.orbital_rate() * t;
            let a = g.earth_radius + g.orbit_altitude;
            let sat = [a * phi.cos(), a * phi.sin(), 0.0];
            let st = [g.earth_radius * bm.cos(), 0.0, g.earth_radius * bm.sin()];
            let d = ((sat[0] - st[0]).powi(2) + (sat[1] - st[1]).powi(2) + (sat[2] - st[2]).powi(2)).sqrt();
            assert!((slant_range(el, &g) - d).abs() < 1e-6);
        }
    }

    #[test]
    fn elevation_profile_examples() {
        let g = geo();
        assert!((elevation_profile(&g, 0.0).unwrap() - 76.0).abs() < 1e-9);
        for t in [10.0, 77.0, 160.0] {
            let a = elevation_profile(&g, t).unwrap();
            let b = elevation_profile(&g, -t).unwrap();
            assert_eq!(a, b);
            let (el, _) = g.look_angles(t);
            assert!((a - el).abs() < 1e-9);
        }
        assert!((g.orbital_rate() - 1.109e-3).abs() < 1e-6);
        let d = g.duration_above(14.5);
        assert!((d - 350.0).abs() <= 20.0, "{d}");
        let bad = g.with_max_elevation(10.0);
        assert!(elevation_profile(&bad, 0.0).is_err());
    }

    #[test]
    fn azimuth_rate_matches_finite_difference() {
        let g = geo();
        for t in [-120.0, -30.0, 5.0, 90.0] {
            let h = 1e-3;
            let (_, a1) = g.look_angles(t + h);
            let (_, a0) = g.look_angles(t - h);
            let mut d = a1 - a0;
            if d > 180.0 {
                d -= 360.0;
            } else if d < -180.0 {
                d += 360.0;
            }
            assert!((d.abs() / (2.0 * h) - g.azimuth_rate(t)).abs() < 1e-4);
        }
        assert!(g.azimuth_rate(0.0) > g.azimuth_rate(150.0));
    }

    #[test]
    fn divergence() {
        let m = LinkModel {
            divergence_x: 14.0,
            divergence_y: 14.0,
            seeing: 5.0,
            ..LinkModel::default()
        };
        assert!((m.effective_divergence() - 14.866_068_747_318_506).abs() < 1e-9);
        let m = LinkModel {
            divergence_x: 14.0,
            divergence_y: 14.0,
            seeing: 0.0,
            ..LinkModel::default()
        };
        assert_eq!(m.effective_divergence(), 14.0);
        let m = LinkModel {
            divergence_x: 24.0,
            divergence_y: 35.0,
            seeing: 0.0,
            ..LinkModel::default()
        };
        assert!((m.effective_divergence() - (24.0f64 * 35.0).sqrt()).abs() < 1e-12);
        assert!((m.effective_divergence() - 28.98).abs() < 0.01);
    }

    #[test]
    fn loss_cap_limit() {
        let m = LinkModel {
            receiver_diameter: 1e9,
            zenith_transmittance: 1.0,
            tracking_error: 0.0,
            system_efficiency_db: 7.5,
            ..LinkModel::default()
        };
        let l = link_loss_db(40.0, 10.0, &geo(), &m).unwrap();
        assert!((l - 7.5).abs() < 1e-12);
        assert!(link_loss_db(0.0, 0.0, &geo(), &m).is_err());
    }

    #[test]
    fn loss_increases_with_range() {
        let m = LinkModel::default();
        let mut prev = f64::NEG_INFINITY;
        for k in (15..=89).rev() {
            let s = LinkSample {
                elevation_deg: k as f64,
                range_km: slant_range(k as f64, &geo()),
                airmass: 1.0,
                slew_ratio: 0.0,
            };
            let l = m.loss_for(&s).total_db();
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn profile_rows_and_csv() {
        let rows = loss_profile(&geo(), &LinkModel::default(), 350.0, 1.0).unwrap();
        assert_eq!(rows.len(), 351);
        assert_eq!(rows[0].t_s, -175.0);
        let mut buf = Vec::new();
        write_loss_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,elevation_deg,range_km,loss_db\n"));
        assert_eq!(text.lines().count(), 352);
    }

    #[test]
    fn distortion_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = polarization_distortion(0.0, 0.0, &mut rng);
        assert_eq!(id, Operator::identity(2, 2));
        for delta in [0.05, 0.2, -0.7] {
            let u = polarization_distortion(delta, 0.01, &mut rng);
            check_unitary(&u).unwrap();
            let h = MubState::H.state().to_density();
            let out = h.apply_unitary(&polarization_rotation(delta), &[0]).unwrap();
            let f = fidelity(&MubState::H.state(), &out);
            assert!((f - delta.cos().powi(2)).abs() < 1e-14);
            let r = MubState::R.state().to_density().apply_unitary(&polarization_rotation(delta), &[0]).unwrap();
            assert!((fidelity(&MubState::R.state(), &r) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn kraus_channel_matches_sampled_average() {
        let (delta, sigma) = (0.15, 0.2);
        let rho = MubState::Plus.state().to_density();
        let exact = rho.apply_kraus(&polarization_kraus(delta, sigma), &[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let mut acc = Operator::zeros(2, 2);
        for _ in 0..n {
            let u = polarization_distortion(delta, sigma, &mut rng);
            acc += &u * rho.matrix() * u.adjoint();
        }
        let sampled = DensityMatrix::new(acc.unscale(n as f64)).unwrap();
        assert!(exact.distance(&sampled) < 3e-3);
        let identity = rho.apply_kraus(&polarization_kraus(0.0, 0.0), &[0]).unwrap();
        assert!(identity.distance(&rho) < 1e-15);
    }
}
