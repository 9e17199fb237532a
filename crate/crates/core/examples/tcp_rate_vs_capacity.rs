//! AIMD send rate against ground link capacity, London to Shanghai over
//! bent-pipe relays. Runs the stable and the alternating-capacity scenarios
//! and prints per-slot rates plus summary statistics.
//!
//!     cargo run --release --example tcp_rate_vs_capacity [-- --every 10]

use std::time::Instant;

use leotwin::engine::{mean_and_cv, Engine};
use leotwin::gateway::load_bundled;

fn main() -> anyhow::Result<()> {
    let every: usize = std::env::args()
        .skip_while(|a| a != "--every")
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(20);

    for name in ["kuiper-relay-stable", "kuiper-relay-alternating"] {
        let started = Instant::now();
        let loaded = load_bundled(name)?;
        let out = Engine::new(loaded.engine_setup(None)?)?.run()?;
        let flow = &out.flows[0];
        println!("== {name} ({:.1} s)", started.elapsed().as_secs_f64());
        println!(
            "{:>5} {:>12} {:>12} {:>8}",
            "slot", "rate Mbit/s", "cap Mbit/s", "cwnd"
        );
        for s in flow.samples.iter().step_by(every) {
            println!(
                "{:>5} {:>12.3} {:>12.3} {:>8.1}",
                s.slot_index,
                s.send_rate_bit_s / 1e6,
                s.bottleneck_bit_s / 1e6,
                s.cwnd_segments
            );
        }
        let (mean, cv) = mean_and_cv(&flow.rates_from(50.0));
        println!("last 150 s: mean {:.3} Mbit/s, CV {:.3}", mean / 1e6, cv);
        println!(
            "delivered {:.1} Mbit of {:.1} offered, capacity {:.1}",
            flow.delivered_bits / 1e6,
            flow.offered_bits / 1e6,
            flow.capacity_bits / 1e6
        );
        let paths: Vec<_> = out.log.path_records().collect();
        if let Some(p) = paths.first() {
            println!(
                "slot 0 path: {} hops, {:.0} km, theoretical RTT {:.1} ms",
                p.hops.len() - 1,
                p.total_distance_km,
                p.theoretical_rtt_s * 1e3
            );
        }
        println!(
            "slots with a path: {}/{}",
            paths.len(),
            out.log.topology_records().count()
        );
    }
    Ok(())
}
