//! Walker constellations, circular-orbit propagation and ground geometry.
//!
//! Everything here is a pure function of its inputs. Satellites move on
//! circular two-body orbits; the Earth is a sphere of radius
//! [`EARTH_RADIUS_KM`] rotating uniformly about its z axis. Scenario time is
//! measured in seconds from the scenario start, and the Earth-fixed frame
//! coincides with the inertial frame at `t = 0`.

mod tle;

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tle::{export_tle, import_tle, TleError};

/// Mean Earth radius used for orbits and ground stations.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Standard gravitational parameter of the Earth.
pub const MU_EARTH_KM3_S2: f64 = 398_600.441_8;
/// Sidereal rotation rate of the Earth.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;
/// Speed of light in vacuum, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstellationError {
    #[error("invalid shell field `{field}`: {reason}")]
    InvalidShell { field: &'static str, reason: String },
    #[error("invalid ground station `{id}` field `{field}`: {reason}")]
    InvalidStation {
        id: String,
        field: &'static str,
        reason: String,
    },
}

/// Parameters of one symmetric orbital shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    pub plane_count: u32,
    pub sats_per_plane: u32,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    /// Fraction in `[0, 1)` of one in-plane spacing by which each successive
    /// plane is staggered.
    #[serde(default)]
    pub phasing_offset: f64,
}

impl ShellSpec {
    pub fn validate(&self) -> Result<(), ConstellationError> {
        let bad = |field, reason: &str| {
            Err(ConstellationError::InvalidShell {
                field,
                reason: reason.to_string(),
            })
        };
        if self.plane_count < 1 {
            return bad("plane_count", "must be at least 1");
        }
        if self.sats_per_plane < 1 {
            return bad("sats_per_plane", "must be at least 1");
        }
        if !(self.altitude_km > 0.0 && self.altitude_km < 100_000.0) {
            return bad("altitude_km", "must lie in (0, 100000)");
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return bad("inclination_deg", "must lie in [0, 180]");
        }
        if !(0.0..1.0).contains(&self.phasing_offset) {
            return bad("phasing_offset", "must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn satellite_count(&self) -> usize {
        self.plane_count as usize * self.sats_per_plane as usize
    }
}

/// Circular orbital elements. The argument of perigee is folded into the
/// mean anomaly, so `mean_anomaly_at_epoch_rad` is the argument of latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    pub semi_major_axis_km: f64,
    pub inclination_rad: f64,
    pub raan_rad: f64,
    pub mean_anomaly_at_epoch_rad: f64,
    pub epoch_s: f64,
}

impl OrbitalElements {
    pub fn mean_motion_rad_s(&self) -> f64 {
        (MU_EARTH_KM3_S2 / self.semi_major_axis_km.powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        TAU / self.mean_motion_rad_s()
    }

    /// Argument of latitude at scenario time `t_s`, wrapped to `[0, 2π)`.
    pub fn argument_of_latitude(&self, t_s: f64) -> f64 {
        normalize_angle(
            self.mean_anomaly_at_epoch_rad + self.mean_motion_rad_s() * (t_s - self.epoch_s),
        )
    }

    /// Inertial position and velocity at `t_s`.
    pub fn inertial_state(&self, t_s: f64) -> (Vector3<f64>, Vector3<f64>) {
        let u = self.argument_of_latitude(t_s);
        let a = self.semi_major_axis_km;
        let speed = a * self.mean_motion_rad_s();
        let (su, cu) = u.sin_cos();
        let (so, co) = self.raan_rad.sin_cos();
        let (si, ci) = self.inclination_rad.sin_cos();
        let pos = Vector3::new(co * cu - so * su * ci, so * cu + co * su * ci, su * si) * a;
        let vel = Vector3::new(-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si) * speed;
        (pos, vel)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatId(pub u32);

impl std::fmt::Display for SatId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sat-{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Satellite {
    pub id: SatId,
    /// Plane index within the shell.
    pub plane: u32,
    /// Position of the satellite within its plane, ordered by anomaly.
    pub slot: u32,
    pub elements: OrbitalElements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub satellites: Vec<Satellite>,
    pub plane_count: u32,
}

/// Propagated state of one satellite. Velocity is the inertial velocity
/// expressed in Earth-fixed axes, so its magnitude is the orbital speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub sat_id: SatId,
    pub position_ecef_km: Vector3<f64>,
    pub velocity_ecef_km_s: Vector3<f64>,
}

impl Constellation {
    pub fn len(&self) -> usize {
        self.satellites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.satellites.is_empty()
    }

    /// Satellites of each plane, ordered by slot.
    pub fn planes(&self) -> Vec<Vec<SatId>> {
        let mut planes = vec![Vec::new(); self.plane_count as usize];
        let mut sats: Vec<&Satellite> = self.satellites.iter().collect();
        sats.sort_by_key(|s| (s.plane, s.slot));
        for s in sats {
            planes[s.plane as usize].push(s.id);
        }
        planes
    }
}

/// Builds the Walker layout for `spec`.
pub fn synthesize_walker(spec: &ShellSpec) -> Result<Constellation, ConstellationError> {
    spec.validate()?;
    let a = EARTH_RADIUS_KM + spec.altitude_km;
    let inclination = spec.inclination_deg.to_radians();
    let planes = spec.plane_count as f64;
    let per_plane = spec.sats_per_plane as f64;
    let mut satellites = Vec::with_capacity(spec.satellite_count());
    for p in 0..spec.plane_count {
        let raan = normalize_angle(TAU * p as f64 / planes);
        for s in 0..spec.sats_per_plane {
            let anomaly =
                TAU * s as f64 / per_plane + TAU * spec.phasing_offset * p as f64 / per_plane;
            satellites.push(Satellite {
                id: SatId(p * spec.sats_per_plane + s),
                plane: p,
                slot: s,
                elements: OrbitalElements {
                    semi_major_axis_km: a,
                    inclination_rad: inclination,
                    raan_rad: raan,
                    mean_anomaly_at_epoch_rad: normalize_angle(anomaly),
                    epoch_s: 0.0,
                },
            });
        }
    }
    Ok(Constellation {
        satellites,
        plane_count: spec.plane_count,
    })
}

/// Rotates an inertial vector into the Earth-fixed frame at `t_s`.
pub fn inertial_to_earth_fixed(v: &Vector3<f64>, t_s: f64) -> Vector3<f64> {
    let (s, c) = (EARTH_ROTATION_RAD_S * t_s).sin_cos();
    Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
}

pub fn propagate_one(sat: &Satellite, t_s: f64) -> SatelliteState {
    let (pos, vel) = sat.elements.inertial_state(t_s);
    SatelliteState {
        sat_id: sat.id,
        position_ecef_km: inertial_to_earth_fixed(&pos, t_s),
        velocity_ecef_km_s: inertial_to_earth_fixed(&vel, t_s),
    }
}

/// States of every satellite at `t_s`, in constellation order.
pub fn propagate(constellation: &Constellation, t_s: f64) -> Vec<SatelliteState> {
    constellation
        .satellites
        .iter()
        .map(|s| propagate_one(s, t_s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStation {
    pub id: String,
    pub name: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    #[serde(default)]
    pub altitude_km: f64,
}

impl GroundStation {
    pub fn validate(&self) -> Result<(), ConstellationError> {
        let bad = |field, reason: &str| {
            Err(ConstellationError::InvalidStation {
                id: self.id.clone(),
                field,
                reason: reason.to_string(),
            })
        };
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return bad("latitude_deg", "must lie in [-90, 90]");
        }
        if !(-180.0..=180.0).contains(&self.longitude_deg) {
            return bad("longitude_deg", "must lie in [-180, 180]");
        }
        if !(self.altitude_km >= 0.0) {
            return bad("altitude_km", "must be non-negative");
        }
        Ok(())
    }
}

/// Earth-fixed position of a station on the spherical Earth.
pub fn ground_ecef(gs: &GroundStation) -> Vector3<f64> {
    let r = EARTH_RADIUS_KM + gs.altitude_km;
    let (slat, clat) = gs.latitude_deg.to_radians().sin_cos();
    let (slon, clon) = gs.longitude_deg.to_radians().sin_cos();
    Vector3::new(r * clat * clon, r * clat * slon, r * slat)
}

/// Elevation of `sat` above the local horizontal plane at `gs_ecef`, in
/// degrees. Negative below the horizon.
pub fn elevation_deg(sat: &SatelliteState, gs_ecef: &Vector3<f64>) -> f64 {
    elevation_from_positions(&sat.position_ecef_km, gs_ecef)
}

pub fn elevation_from_positions(sat_ecef: &Vector3<f64>, gs_ecef: &Vector3<f64>) -> f64 {
    let los = sat_ecef - gs_ecef;
    let up = gs_ecef.normalize();
    (los.dot(&up) / los.norm())
        .clamp(-1.0, 1.0)
        .asin()
        .to_degrees()
}

/// Great-circle distance between two points on the Earth's surface.
pub fn great_circle_km(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let cos = a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0);
    let sin = a.normalize().cross(&b.normalize()).norm();
    EARTH_RADIUS_KM * sin.atan2(cos)
}
