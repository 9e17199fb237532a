//! Reference physical layer for satellite-to-ground links.
//!
//! Beam gain follows the circular-aperture pattern
//! `G(θ) = 4·G_max·|J₁(ka·sinθ)/(ka·sinθ)|²`, links are characterised by the
//! free-space channel coefficient `h = √(G_t·G_r)/(4πd/λ)`, co-channel
//! interference is the power sum `Σ P_k·h_k²`, and capacity is Shannon's
//! `B·log₂(1 + SINR)` with thermal noise `k_B·T·B`. All quantities are linear
//! and SI internally; dBi only appears at configuration boundaries.

mod bessel;
mod schedule;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bessel::bessel_j1;
pub use schedule::{
    capacity_schedule, read_schedule_records, write_schedule_records, CapacityOverride,
    CapacitySchedule, GsIndex, LinkCapacity, RadioParams,
};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const BOLTZMANN_J_K: f64 = 1.380_649e-23;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("off-axis angle {0} rad outside [0, π/2]")]
    AngleOutOfDomain(f64),
    #[error("zero transmitter-receiver distance")]
    ZeroDistance,
    #[error("invalid radio parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("interferer {0} shares the desired transmitter id")]
    InterfererIsDesired(String),
    #[error("interferer {tx} targets {found}, expected {expected}")]
    WrongReceiver {
        tx: String,
        expected: String,
        found: String,
    },
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaModel {
    /// Peak gain, linear.
    pub g_max: f64,
    pub aperture_radius_m: f64,
    pub frequency_hz: f64,
}

impl AntennaModel {
    pub fn validate(&self) -> Result<(), PhyError> {
        positive("g_max", self.g_max)?;
        positive("aperture_radius_m", self.aperture_radius_m)?;
        positive("frequency_hz", self.frequency_hz)
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.frequency_hz
    }

    pub fn wave_number(&self) -> f64 {
        2.0 * PI * self.frequency_hz / SPEED_OF_LIGHT_M_S
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), PhyError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PhyError::InvalidParameter {
            field,
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

/// Beam gain (linear) at `theta_rad` off boresight.
pub fn antenna_gain(theta_rad: f64, antenna: &AntennaModel) -> Result<f64, PhyError> {
    if !(0.0..=PI / 2.0).contains(&theta_rad) {
        return Err(PhyError::AngleOutOfDomain(theta_rad));
    }
    if theta_rad == 0.0 {
        return Ok(antenna.g_max);
    }
    let x = antenna.wave_number() * antenna.aperture_radius_m * theta_rad.sin();
    let ratio = bessel_j1(x) / x;
    Ok(4.0 * antenna.g_max * ratio * ratio)
}

/// One directed transmitter-to-receiver link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioLink {
    pub tx_id: String,
    pub rx_id: String,
    pub tx_power_w: f64,
    pub tx_antenna: AntennaModel,
    pub rx_gain_linear: f64,
    pub distance_km: f64,
    pub offaxis_angle_rad: f64,
    pub bandwidth_hz: f64,
    pub rx_noise_temp_k: f64,
}

impl RadioLink {
    pub fn validate(&self) -> Result<(), PhyError> {
        self.tx_antenna.validate()?;
        positive("tx_power_w", self.tx_power_w)?;
        positive("rx_gain_linear", self.rx_gain_linear)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("rx_noise_temp_k", self.rx_noise_temp_k)?;
        if self.distance_km == 0.0 {
            return Err(PhyError::ZeroDistance);
        }
        positive("distance_km", self.distance_km)?;
        if !(0.0..=PI / 2.0).contains(&self.offaxis_angle_rad) {
            return Err(PhyError::AngleOutOfDomain(self.offaxis_angle_rad));
        }
        Ok(())
    }

    /// Received power `P·h²`, watts.
    pub fn received_power_w(&self) -> Result<f64, PhyError> {
        let h = channel_coefficient(self)?;
        Ok(self.tx_power_w * h * h)
    }
}

/// Real free-space channel coefficient of `link`.
pub fn channel_coefficient(link: &RadioLink) -> Result<f64, PhyError> {
    if link.distance_km == 0.0 {
        return Err(PhyError::ZeroDistance);
    }
    let g_t = antenna_gain(link.offaxis_angle_rad, &link.tx_antenna)?;
    let d_m = link.distance_km * 1e3;
    let lambda = link.tx_antenna.wavelength_m();
    Ok((g_t * link.rx_gain_linear).sqrt() / (4.0 * PI * d_m / lambda))
}

/// Co-frequency transmitters interfering at one receiver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSet {
    pub entries: Vec<RadioLink>,
}

impl InterferenceSet {
    pub fn new(entries: Vec<RadioLink>) -> Self {
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Total interference power at `rx_id`, watts.
pub fn interference_power(rx_id: &str, interferers: &InterferenceSet) -> Result<f64, PhyError> {
    let mut total = 0.0;
    for link in &interferers.entries {
        if link.rx_id != rx_id {
            return Err(PhyError::WrongReceiver {
                tx: link.tx_id.clone(),
                expected: rx_id.to_string(),
                found: link.rx_id.clone(),
            });
        }
        total += link.received_power_w()?;
    }
    Ok(total)
}

pub fn thermal_noise_w(rx_noise_temp_k: f64, bandwidth_hz: f64) -> f64 {
    BOLTZMANN_J_K * rx_noise_temp_k * bandwidth_hz
}

/// Signal to interference-plus-noise ratio of `desired`.
pub fn sinr(desired: &RadioLink, interferers: &InterferenceSet) -> Result<f64, PhyError> {
    desired.validate()?;
    if let Some(dup) = interferers
        .entries
        .iter()
        .find(|l| l.tx_id == desired.tx_id)
    {
        return Err(PhyError::InterfererIsDesired(dup.tx_id.clone()));
    }
    let signal = desired.received_power_w()?;
    let interference = interference_power(&desired.rx_id, interferers)?;
    Ok(signal / (thermal_noise_w(desired.rx_noise_temp_k, desired.bandwidth_hz) + interference))
}

/// Shannon capacity in bit/s. Negative SINR is not physical and maps to zero.
pub fn channel_capacity(sinr: f64, bandwidth_hz: f64) -> f64 {
    debug_assert!(sinr >= 0.0, "negative SINR {sinr}");
    bandwidth_hz * (1.0 + sinr.max(0.0)).log2()
}
