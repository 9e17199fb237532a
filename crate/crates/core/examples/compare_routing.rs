//! Centralized shortest-delay routing against state-aware forwarding on the
//! failure-injected Starlink scenario, every 50th slot.
//!
//!     cargo run --release --example compare_routing

use leotwin::gateway::load_bundled;
use leotwin::pathcomp::{route, AlgorithmRegistry, RouteError};

fn main() -> anyhow::Result<()> {
    let loaded = load_bundled("starlink-isl-failures")?;
    let plan = loaded.scenario.plan(&loaded.base_dir, loaded.seed(None))?;
    let builder = plan.builder();
    let registry = AlgorithmRegistry::with_defaults();
    let names = [
        "centralized",
        "state-aware",
        "state-aware-k2",
        "state-aware-k4",
    ];
    let algs = names
        .iter()
        .map(|n| registry.get(n))
        .collect::<Result<Vec<_>, _>>()?;

    print!("{:>5} {:>7}", "slot", "failed");
    for n in names {
        print!(" {n:>16}");
    }
    println!();
    let mut reached = vec![0; names.len()];
    let mut total = 0;
    for k in (0..builder.slot_count()).step_by(50) {
        let s = builder.slot(k)?;
        let (src, dst) = (
            s.node_by_name("shanghai").unwrap(),
            s.node_by_name("sao-paulo").unwrap(),
        );
        total += 1;
        print!("{k:>5} {:>7}", s.failed_count());
        for (i, alg) in algs.iter().enumerate() {
            let cell = match route(&s, src, dst, alg.as_ref()) {
                Ok(r) => {
                    reached[i] += 1;
                    format!("{:.2} ms/{}h", r.theoretical_rtt_s * 1e3, r.hop_count())
                }
                Err(RouteError::NoRoute { reason, hops_taken }) => {
                    format!("{reason:?} @{hops_taken}")
                }
                Err(e) => return Err(e.into()),
            };
            print!(" {cell:>16}");
        }
        println!();
    }
    print!("{:>13}", "reached");
    for r in reached {
        print!(" {:>16}", format!("{r}/{total}"));
    }
    println!();
    Ok(())
}
