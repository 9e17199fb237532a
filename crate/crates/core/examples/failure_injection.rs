//! Replaces future slots of a run with edited graphs: first every ISL is cut
//! for ten seconds, then a forwarding table is forced for one slot.
//!
//!     cargo run --release --example failure_injection

use leotwin::engine::{Engine, NextHopEntry, SlotArtifacts};
use leotwin::gateway::load_bundled;
use leotwin::topology::LinkKind;

fn main() -> anyhow::Result<()> {
    let mut scenario = load_bundled("starlink-ping")?;
    // 30 s at 1 s slots keeps the example quick
    scenario.scenario.slot_duration_s = 1.0;
    scenario.scenario.duration_s = 30.0;
    for d in &mut scenario.scenario.workload {
        if let leotwin::engine::Directive::Ping { count, .. } = d {
            *count = 30;
        }
    }
    let baseline = Engine::new(scenario.engine_setup(None)?)?.run()?;

    let mut engine = Engine::new(scenario.engine_setup(None)?)?;
    let mut edits = Vec::new();
    for k in 10..20 {
        let a = engine.slot_artifacts(k)?;
        edits.push(SlotArtifacts {
            snapshot: a.snapshot.with_failed(|l| l.kind == LinkKind::Isl),
            next_hops: None,
        });
    }
    // at slot 25 send Shanghai's traffic into a two-node loop
    let s25 = engine.slot_artifacts(25)?.snapshot;
    let sh = s25.node_by_name("shanghai").unwrap();
    let first = s25
        .neighbors(sh)
        .iter()
        .find(|(_, li)| !s25.links[*li].failed)
        .map(|(n, _)| *n)
        .unwrap();
    let second = s25
        .neighbors(first)
        .iter()
        .map(|(n, _)| *n)
        .find(|n| s25.is_satellite(*n))
        .unwrap();
    let entry = |node: String, next: String| NextHopEntry {
        node,
        dst: "sao-paulo".into(),
        next,
    };
    edits.push(SlotArtifacts {
        next_hops: Some(vec![
            entry("shanghai".into(), s25.node_name(first)),
            entry(s25.node_name(first), s25.node_name(second)),
            entry(s25.node_name(second), s25.node_name(first)),
        ]),
        snapshot: s25,
    });
    println!("injected slots {:?}", engine.inject(edits)?);
    let edited = engine.run()?;

    println!("{:>6} {:>14} {:>24}", "t (s)", "baseline ms", "edited");
    let outcome = |log: &leotwin::engine::MetricsLog, t: f64| -> String {
        if let Some(s) = log
            .rtt_samples()
            .find(|s| s.launch_t_s == t && s.src == "shanghai")
        {
            format!("{:.2}", s.rtt_s * 1e3)
        } else if let Some(x) = log
            .ping_timeouts()
            .find(|x| x.launch_t_s == t && x.src == "shanghai")
        {
            format!("timeout {:?}", x.reason)
        } else {
            "-".into()
        }
    };
    for t in (0..30).map(f64::from) {
        println!(
            "{t:>6.0} {:>14} {:>24}",
            outcome(&baseline.log, t),
            outcome(&edited.log, t)
        );
    }
    Ok(())
}
