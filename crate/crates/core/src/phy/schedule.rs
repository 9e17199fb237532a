//! Per-slot capacity of every visible satellite-to-ground link.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    channel_capacity, db_to_linear, sinr, AntennaModel, InterferenceSet, PhyError, RadioLink,
};
use crate::constellation::{
    elevation_from_positions, ground_ecef, propagate, Constellation, GroundStation, SatId,
};
use crate::time::{slot_count, slot_start};

/// Index of a ground station within the scenario's station list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GsIndex(pub u32);

fn default_mask() -> f64 {
    25.0
}

fn default_channels() -> u32 {
    1
}

/// Radio configuration shared by all satellite downlinks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioParams {
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub g_max_dbi: f64,
    pub aperture_radius_m: f64,
    pub rx_gain_dbi: f64,
    pub rx_noise_temp_k: f64,
    #[serde(default = "default_mask")]
    pub elevation_mask_deg: f64,
    /// Number of frequency channels; satellite `i` transmits on `i % channel_count`.
    #[serde(default = "default_channels")]
    pub channel_count: u32,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            frequency_hz: 12e9,
            bandwidth_hz: 250e6,
            tx_power_w: 10.0,
            g_max_dbi: 11.5,
            aperture_radius_m: 0.015,
            rx_gain_dbi: 35.0,
            rx_noise_temp_k: 290.0,
            elevation_mask_deg: default_mask(),
            channel_count: 4,
        }
    }
}

impl RadioParams {
    pub fn antenna(&self) -> AntennaModel {
        AntennaModel {
            g_max: db_to_linear(self.g_max_dbi),
            aperture_radius_m: self.aperture_radius_m,
            frequency_hz: self.frequency_hz,
        }
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        self.antenna().validate()?;
        for (field, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("rx_noise_temp_k", self.rx_noise_temp_k),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PhyError::InvalidParameter {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(-90.0..=90.0).contains(&self.elevation_mask_deg) {
            return Err(PhyError::InvalidParameter {
                field: "elevation_mask_deg",
                reason: "must lie in [-90, 90]".into(),
            });
        }
        if self.channel_count == 0 {
            return Err(PhyError::InvalidParameter {
                field: "channel_count",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn channel_of(&self, sat: SatId) -> u32 {
        sat.0 % self.channel_count
    }

    /// Downlink from a nadir-pointing satellite at `sat_pos` to a station at
    /// `gs_pos`.
    pub fn downlink(
        &self,
        sat: SatId,
        gs_id: &str,
        sat_pos: &Vector3<f64>,
        gs_pos: &Vector3<f64>,
    ) -> RadioLink {
        let ray = gs_pos - sat_pos;
        let nadir = -sat_pos.normalize();
        let theta = (nadir.dot(&ray) / ray.norm()).clamp(-1.0, 1.0).acos();
        RadioLink {
            tx_id: sat.to_string(),
            rx_id: gs_id.to_string(),
            tx_power_w: self.tx_power_w,
            tx_antenna: self.antenna(),
            rx_gain_linear: db_to_linear(self.rx_gain_dbi),
            distance_km: ray.norm(),
            offaxis_angle_rad: theta.min(std::f64::consts::FRAC_PI_2),
            bandwidth_hz: self.bandwidth_hz,
            rx_noise_temp_k: self.rx_noise_temp_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCapacity {
    pub sinr: f64,
    pub capacity_bit_s: f64,
}

/// Replaces computed capacities with configured values while keeping the
/// set of visible pairs (and their SINR) from the physical model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CapacityOverride {
    #[default]
    Phy,
    Constant {
        bit_s: f64,
    },
    /// `high_bit_s` for the first `period_slots` slots, then `low_bit_s`, and so on.
    Alternating {
        low_bit_s: f64,
        high_bit_s: f64,
        #[serde(default = "one")]
        period_slots: u32,
    },
}

fn one() -> u32 {
    1
}

impl CapacityOverride {
    pub fn capacity_for_slot(&self, slot_index: usize) -> Option<f64> {
        match *self {
            CapacityOverride::Phy => None,
            CapacityOverride::Constant { bit_s } => Some(bit_s),
            CapacityOverride::Alternating {
                low_bit_s,
                high_bit_s,
                period_slots,
            } => {
                let phase = slot_index / period_slots.max(1) as usize;
                Some(if phase.is_multiple_of(2) {
                    high_bit_s
                } else {
                    low_bit_s
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySchedule {
    pub slot_duration_s: f64,
    pub duration_s: f64,
    pub station_ids: Vec<String>,
    pub slots: Vec<BTreeMap<(SatId, GsIndex), LinkCapacity>>,
}

impl CapacitySchedule {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn horizon_s(&self) -> f64 {
        slot_start(self.slots.len(), self.slot_duration_s)
    }

    pub fn apply_override(&mut self, ovr: &CapacityOverride) {
        for (k, slot) in self.slots.iter_mut().enumerate() {
            if let Some(cap) = ovr.capacity_for_slot(k) {
                for v in slot.values_mut() {
                    v.capacity_bit_s = cap;
                }
            }
        }
    }
}

/// Link capacities of every station's visible satellites at one instant.
pub fn capacities_at(
    constellation: &Constellation,
    stations: &[GroundStation],
    radio: &RadioParams,
    t_s: f64,
    elevation_mask_deg: f64,
) -> Result<BTreeMap<(SatId, GsIndex), LinkCapacity>, PhyError> {
    let states = propagate(constellation, t_s);
    let mut out = BTreeMap::new();
    for (g, gs) in stations.iter().enumerate() {
        let gs_pos = ground_ecef(gs);
        let visible: Vec<_> = states
            .iter()
            .filter(|s| {
                elevation_from_positions(&s.position_ecef_km, &gs_pos) >= elevation_mask_deg
            })
            .collect();
        let links: Vec<RadioLink> = visible
            .iter()
            .map(|s| radio.downlink(s.sat_id, &gs.id, &s.position_ecef_km, &gs_pos))
            .collect();
        for (i, s) in visible.iter().enumerate() {
            let channel = radio.channel_of(s.sat_id);
            let interferers = InterferenceSet::new(
                visible
                    .iter()
                    .zip(&links)
                    .enumerate()
                    .filter(|&(j, (o, _))| j != i && radio.channel_of(o.sat_id) == channel)
                    .map(|(_, (_, l))| l.clone())
                    .collect(),
            );
            let ratio = sinr(&links[i], &interferers)?;
            out.insert(
                (s.sat_id, GsIndex(g as u32)),
                LinkCapacity {
                    sinr: ratio,
                    capacity_bit_s: channel_capacity(ratio, radio.bandwidth_hz),
                },
            );
        }
    }
    Ok(out)
}

/// Capacity of every visible satellite-station pair at each slot boundary.
/// Slots are evaluated in parallel; the result does not depend on the order.
pub fn capacity_schedule(
    constellation: &Constellation,
    stations: &[GroundStation],
    radio: &RadioParams,
    slot_duration_s: f64,
    duration_s: f64,
    elevation_mask_deg: f64,
) -> Result<CapacitySchedule, PhyError> {
    radio.validate()?;
    for (field, v) in [
        ("slot_duration_s", slot_duration_s),
        ("duration_s", duration_s),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(PhyError::InvalidParameter {
                field,
                reason: format!("must be positive, got {v}"),
            });
        }
    }
    let n = slot_count(duration_s, slot_duration_s);
    let slots = (0..n)
        .into_par_iter()
        .map(|k| {
            capacities_at(
                constellation,
                stations,
                radio,
                slot_start(k, slot_duration_s),
                elevation_mask_deg,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CapacitySchedule {
        slot_duration_s,
        duration_s,
        station_ids: stations.iter().map(|s| s.id.clone()).collect(),
        slots,
    })
}

pub const SCHEDULE_HEADER: &str = "slot_index,t_s,sat_id,gs_id,sinr,capacity_bit_s";

/// Serialises the schedule as one CSV record per visible pair.
pub fn write_schedule_records(schedule: &CapacitySchedule) -> String {
    let mut out = String::from(SCHEDULE_HEADER);
    out.push('\n');
    for (k, slot) in schedule.slots.iter().enumerate() {
        let t = slot_start(k, schedule.slot_duration_s);
        for ((sat, gs), cap) in slot {
            let _ = writeln!(
                out,
                "{k},{t},{sat},{},{:.9e},{}",
                schedule.station_ids[gs.0 as usize],
                cap.sinr,
                cap.capacity_bit_s.floor() as u64
            );
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ScheduleReadError {
    #[error("record {record}: {reason}")]
    Record { record: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parses records produced by [`write_schedule_records`].
pub fn read_schedule_records(
    text: &str,
    station_ids: &[String],
    slot_duration_s: f64,
    duration_s: f64,
) -> Result<CapacitySchedule, ScheduleReadError> {
    let mut slots = vec![BTreeMap::new(); slot_count(duration_s, slot_duration_s)];
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| ScheduleReadError::Record {
            record: i + 1,
            reason,
        };
        let get = |j: usize| rec.get(j).ok_or_else(|| bad(format!("missing column {j}")));
        let k: usize = get(0)?
            .parse()
            .map_err(|e| bad(format!("slot_index: {e}")))?;
        let sat: u32 = get(2)?
            .strip_prefix("sat-")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("sat_id".into()))?;
        let gs = station_ids
            .iter()
            .position(|s| s == get(3).unwrap_or_default())
            .ok_or_else(|| bad(format!("unknown station {}", get(3).unwrap_or_default())))?;
        let sinr: f64 = get(4)?.parse().map_err(|e| bad(format!("sinr: {e}")))?;
        let cap: u64 = get(5)?.parse().map_err(|e| bad(format!("capacity: {e}")))?;
        let slot = slots
            .get_mut(k)
            .ok_or_else(|| bad(format!("slot {k} beyond horizon")))?;
        slot.insert(
            (SatId(sat), GsIndex(gs as u32)),
            LinkCapacity {
                sinr,
                capacity_bit_s: cap as f64,
            },
        );
    }
    Ok(CapacitySchedule {
        slot_duration_s,
        duration_s,
        station_ids: station_ids.to_vec(),
        slots,
    })
}
