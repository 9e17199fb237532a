//! Downlink budget of a Ku-band beam: gain pattern, SINR and Shannon
//! capacity as the station moves off boresight, alone and with a
//! co-channel neighbour.
//!
//!     cargo run --example link_budget

use leotwin::phy::{
    antenna_gain, channel_capacity, linear_to_db, sinr, thermal_noise_w, InterferenceSet,
    RadioLink, RadioParams,
};

fn main() -> anyhow::Result<()> {
    let radio = RadioParams {
        aperture_radius_m: 0.3,
        g_max_dbi: 33.0,
        ..RadioParams::default()
    };
    let ant = radio.antenna();
    println!(
        "f = {:.1} GHz, B = {:.0} MHz, G_max = {:.1} dBi, noise floor {:.1} dBW",
        radio.frequency_hz / 1e9,
        radio.bandwidth_hz / 1e6,
        radio.g_max_dbi,
        linear_to_db(thermal_noise_w(radio.rx_noise_temp_k, radio.bandwidth_hz))
    );

    let link = |tx: &str, theta_deg: f64, distance_km: f64| RadioLink {
        tx_id: tx.into(),
        rx_id: "ut".into(),
        tx_power_w: radio.tx_power_w,
        tx_antenna: ant,
        rx_gain_linear: 10f64.powf(radio.rx_gain_dbi / 10.0),
        distance_km,
        offaxis_angle_rad: theta_deg.to_radians(),
        bandwidth_hz: radio.bandwidth_hz,
        rx_noise_temp_k: radio.rx_noise_temp_k,
    };
    // a neighbour 1200 km away whose beam reaches us 1° off its axis
    let neighbour = InterferenceSet::new(vec![link("sat-b", 1.0, 1200.0)]);

    println!(
        "\n{:>6} {:>9} {:>10} {:>12} {:>10} {:>12}",
        "θ (°)", "gain dBi", "SNR dB", "C (Mbit/s)", "SINR dB", "C (Mbit/s)"
    );
    for theta in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0] {
        let g = antenna_gain(f64::to_radians(theta), &ant)?;
        let desired = link("sat-a", theta, 700.0);
        let alone = sinr(&desired, &InterferenceSet::default())?;
        let shared = sinr(&desired, &neighbour)?;
        println!(
            "{theta:>6.1} {:>9.2} {:>10.2} {:>12.1} {:>10.2} {:>12.1}",
            linear_to_db(g),
            linear_to_db(alone),
            channel_capacity(alone, radio.bandwidth_hz) / 1e6,
            linear_to_db(shared),
            channel_capacity(shared, radio.bandwidth_hz) / 1e6,
        );
    }
    Ok(())
}
