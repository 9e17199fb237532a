//! Builds the Starlink shell, propagates one satellite for an orbit and
//! round-trips the whole constellation through TLE text.
//!
//!     cargo run --example walker_and_tle [-- out.tle]

use leotwin::constellation::{
    export_tle, import_tle, propagate_one, synthesize_walker, ShellSpec, EARTH_RADIUS_KM,
};

fn main() -> anyhow::Result<()> {
    let shell = ShellSpec {
        plane_count: 72,
        sats_per_plane: 18,
        altitude_km: 550.0,
        inclination_deg: 53.2,
        phasing_offset: 0.0,
    };
    let c = synthesize_walker(&shell)?;
    let sat = &c.satellites[0];
    let period = sat.elements.period_s();
    println!(
        "{} satellites in {} planes, period {:.1} min",
        c.len(),
        c.plane_count,
        period / 60.0
    );

    println!(
        "{:>8} {:>9} {:>9} {:>10}",
        "t (s)", "lat", "lon", "speed km/s"
    );
    for i in 0..=8 {
        let t = period * i as f64 / 8.0;
        let s = propagate_one(sat, t);
        let p = s.position_ecef_km;
        let lat = (p.z / p.norm()).asin().to_degrees();
        let lon = p.y.atan2(p.x).to_degrees();
        println!(
            "{t:>8.0} {lat:>9.3} {lon:>9.3} {:>10.4}",
            s.velocity_ecef_km_s.norm()
        );
    }

    let text = export_tle(&c);
    println!(
        "\nfirst record:\n{}",
        text.lines().take(3).collect::<Vec<_>>().join("\n")
    );
    let back = import_tle(&text)?;
    let worst = c
        .satellites
        .iter()
        .zip(&back.satellites)
        .map(|(a, b)| {
            (propagate_one(a, 3600.0).position_ecef_km - propagate_one(b, 3600.0).position_ecef_km)
                .norm()
        })
        .fold(0.0, f64::max);
    println!(
        "re-imported {} satellites; worst position difference after 1 h: {:.1} m at {:.0} km altitude",
        back.len(),
        worst * 1e3,
        back.satellites[0].elements.semi_major_axis_km - EARTH_RADIUS_KM
    );

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, text)?;
        println!("wrote {path}");
    }
    Ok(())
}
