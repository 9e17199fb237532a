//! Per-slot graph statistics for a bundled scenario: link counts, visible
//! satellites per station and how many ground links change between slots.
//!
//!     cargo run --release --example topology_snapshots [-- starlink-ping 30]

use std::collections::BTreeSet;

use leotwin::gateway::load_bundled;
use leotwin::topology::LinkKind;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "starlink-ping".into());
    let slots: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let loaded = load_bundled(&name)?;
    let mut scenario = loaded.scenario.clone();
    // only the first few slots are needed
    scenario.duration_s = scenario.slot_duration_s * slots as f64;
    let plan = scenario.plan(&loaded.base_dir, scenario.seed)?;
    let builder = plan.builder();

    print!(
        "{:>5} {:>7} {:>6} {:>6} {:>7}",
        "slot", "t (s)", "ISL", "GSL", "failed"
    );
    for gs in &plan.stations {
        print!(" {:>10}", gs.id.chars().take(10).collect::<String>());
    }
    println!(" {:>8}", "GSL churn");

    let mut prev: Option<BTreeSet<u64>> = None;
    for k in 0..builder.slot_count() {
        let s = builder.slot(k)?;
        let gsl: BTreeSet<u64> = s
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::Gsl)
            .map(|l| l.link_id.0)
            .collect();
        let isl = s.links.len() - gsl.len();
        print!(
            "{k:>5} {:>7.1} {isl:>6} {:>6} {:>7}",
            s.t_s,
            gsl.len(),
            s.failed_count()
        );
        for node in s.station_nodes() {
            print!(" {:>10}", s.neighbors(node).len());
        }
        let churn = prev
            .as_ref()
            .map_or(0, |p| p.symmetric_difference(&gsl).count());
        println!(" {churn:>8}");
        prev = Some(gsl);
    }
    Ok(())
}
