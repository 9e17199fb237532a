use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use leotwin::constellation::export_tle;
use leotwin::engine::{mean_and_cv, Engine, MetricsLog, StreamKind};
use leotwin::gateway::{self, http, LoadedScenario, RunManager, RunOptions};
use leotwin::pathcomp::{route, AlgorithmRegistry, RouteError};
use leotwin::phy::write_schedule_records;
use leotwin::topology::write_snapshot_records;

#[derive(Parser)]
#[command(
    name = "leotwin",
    version,
    about = "LEO satellite network digital twin"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `bundled:<name>`.
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the constellation as TLE records.
    Synth(Common),
    /// Write the per-slot ground link capacity schedule as CSV.
    Capacity(Common),
    /// Write per-slot link records as JSON lines.
    Topo {
        #[command(flatten)]
        common: Common,
        /// Only this slot.
        #[arg(long)]
        slot: Option<usize>,
    },
    /// Compare path algorithms over the workload's station pairs.
    Route {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithm names; all registered ones by default.
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
        /// Evaluate every n-th slot.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
    /// Run the full emulation and write metrics.jsonl.
    Run(Common),
    /// Serve the HTTP API; the scenario, if any, is started at boot.
    Serve {
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Wall seconds per simulated second for the boot run.
        #[arg(long)]
        pace: Option<f64>,
    },
    /// Write one CSV per metric stream, reusing metrics.jsonl when it matches.
    Export(Common),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(c) => synth(&c),
        Command::Capacity(c) => capacity(&c),
        Command::Topo { common, slot } => topo(&common, slot),
        Command::Route {
            common,
            algorithms,
            every,
        } => route_cmd(&common, &algorithms, every.max(1)),
        Command::Run(c) => run(&c).map(|_| ()),
        Command::Serve {
            scenario,
            seed,
            out_dir,
            addr,
            pace,
        } => serve(scenario, seed, out_dir, &addr, pace),
        Command::Export(c) => export(&c),
    }
}

fn load(c: &Common) -> Result<LoadedScenario> {
    let l = gateway::resolve_scenario(&c.scenario)?;
    fs::create_dir_all(&c.out_dir).with_context(|| format!("creating {}", c.out_dir.display()))?;
    Ok(l)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn synth(c: &Common) -> Result<()> {
    let l = load(c)?;
    let constellation = l.scenario.constellation(&l.base_dir)?;
    write(
        &c.out_dir.join("constellation.tle"),
        export_tle(&constellation),
    )
}

fn capacity(c: &Common) -> Result<()> {
    let l = load(c)?;
    let plan = l.scenario.plan(&l.base_dir, l.seed(c.seed))?;
    write(
        &c.out_dir.join("capacity.csv"),
        write_schedule_records(&plan.schedule),
    )
}

fn topo(c: &Common, only: Option<usize>) -> Result<()> {
    let l = load(c)?;
    let plan = l.scenario.plan(&l.base_dir, l.seed(c.seed))?;
    let builder = plan.builder();
    let slots: Vec<usize> = match only {
        Some(k) if k >= builder.slot_count() => {
            bail!("slot {k} beyond the last slot {}", builder.slot_count() - 1)
        }
        Some(k) => vec![k],
        None => (0..builder.slot_count()).collect(),
    };
    let path = c.out_dir.join("topology.jsonl");
    let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
    for k in slots {
        let mut buf = String::new();
        write_snapshot_records(&builder.slot(k)?, &mut buf);
        f.write_all(buf.as_bytes())?;
    }
    f.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct RouteLine {
    algorithm: String,
    slot_index: usize,
    src: String,
    dst: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    hops: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_distance_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theoretical_rtt_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    no_route: Option<String>,
}

fn route_cmd(c: &Common, algorithms: &[String], every: usize) -> Result<()> {
    let l = load(c)?;
    let registry = AlgorithmRegistry::with_defaults();
    let names: Vec<String> = if algorithms.is_empty() {
        registry.names().into_iter().map(String::from).collect()
    } else {
        algorithms.to_vec()
    };
    let algs = names
        .iter()
        .map(|n| registry.get(n))
        .collect::<Result<Vec<_>, _>>()?;
    let plan = l.scenario.plan(&l.base_dir, l.seed(c.seed))?;
    let builder = plan.builder();
    let mut pairs = Vec::new();
    for d in &l.scenario.workload {
        let (leotwin::engine::Directive::Ping { src, dst, .. }
        | leotwin::engine::Directive::Flow { src, dst, .. }) = d;
        if src != dst && !pairs.contains(&(src.clone(), dst.clone())) {
            pairs.push((src.clone(), dst.clone()));
        }
    }
    if pairs.is_empty() {
        let ids: Vec<_> = l
            .scenario
            .ground_stations
            .iter()
            .map(|g| g.id.clone())
            .collect();
        if ids.len() >= 2 {
            pairs.push((ids[0].clone(), ids[1].clone()));
        }
    }
    let path = c.out_dir.join("paths.jsonl");
    let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
    let mut summary: Vec<(String, usize, Vec<f64>)> =
        names.iter().map(|n| (n.clone(), 0, Vec::new())).collect();
    for k in (0..builder.slot_count()).step_by(every) {
        let snap = builder.slot(k)?;
        for (src, dst) in &pairs {
            let (s, d) = (
                snap.node_by_name(src).unwrap(),
                snap.node_by_name(dst).unwrap(),
            );
            for (i, alg) in algs.iter().enumerate() {
                let mut line = RouteLine {
                    algorithm: names[i].clone(),
                    slot_index: k,
                    src: src.clone(),
                    dst: dst.clone(),
                    hops: None,
                    total_distance_km: None,
                    theoretical_rtt_s: None,
                    no_route: None,
                };
                summary[i].1 += 1;
                match route(&snap, s, d, alg.as_ref()) {
                    Ok(rec) => {
                        summary[i].2.push(rec.theoretical_rtt_s);
                        line.hops = Some(rec.hops.iter().map(|&n| snap.node_name(n)).collect());
                        line.total_distance_km = Some(rec.total_distance_km);
                        line.theoretical_rtt_s = Some(rec.theoretical_rtt_s);
                    }
                    Err(RouteError::NoRoute { reason, .. }) => {
                        line.no_route = Some(format!("{reason:?}").to_lowercase())
                    }
                    Err(e) => return Err(e.into()),
                }
                serde_json::to_writer(&mut f, &line)?;
                f.write_all(b"\n")?;
            }
        }
    }
    f.flush()?;
    eprintln!("wrote {}", path.display());
    println!(
        "{:<20} {:>10} {:>16}",
        "algorithm", "reachable", "mean RTT (ms)"
    );
    for (name, total, rtts) in summary {
        let (mean, _) = mean_and_cv(&rtts);
        println!(
            "{name:<20} {:>4}/{:<5} {:>16.3}",
            rtts.len(),
            total,
            mean * 1e3
        );
    }
    Ok(())
}

fn run(c: &Common) -> Result<MetricsLog> {
    let l = load(c)?;
    let started = std::time::Instant::now();
    let out = Engine::new(l.engine_setup(c.seed)?)?.run()?;
    write(&c.out_dir.join("metrics.jsonl"), out.log.to_jsonl())?;
    let rtts: Vec<f64> = out.log.rtt_samples().map(|s| s.rtt_s).collect();
    let (mean_rtt, _) = mean_and_cv(&rtts);
    println!(
        "{}: {} slots in {:.1} s; {} replies (mean {:.2} ms), {} timeouts, {} path records",
        l.scenario.name,
        out.log.topology_records().count(),
        started.elapsed().as_secs_f64(),
        rtts.len(),
        mean_rtt * 1e3,
        out.log.ping_timeouts().count(),
        out.log.path_records().count()
    );
    for f in &out.flows {
        let (mean, cv) = mean_and_cv(&f.rates_from(0.0));
        println!(
            "flow {} -> {}: mean {:.3} Mbit/s, CV {:.3}",
            f.src,
            f.dst,
            mean / 1e6,
            cv
        );
    }
    Ok(out.log)
}

fn export(c: &Common) -> Result<()> {
    let l = load(c)?;
    let existing = c.out_dir.join("metrics.jsonl");
    let reuse = fs::read_to_string(&existing)
        .ok()
        .and_then(|t| MetricsLog::from_jsonl(&t).ok())
        .filter(|log| {
            log.header()
                .is_some_and(|h| h.scenario_hash == l.hash && h.seed == l.seed(c.seed))
        });
    let log = match reuse {
        Some(log) => log,
        None => run(c)?,
    };
    for kind in StreamKind::ALL {
        let path = c.out_dir.join(format!("{}.csv", kind.as_str()));
        let mut buf = Vec::new();
        log.write_csv(kind, &mut buf)?;
        write(&path, buf)?;
    }
    Ok(())
}

fn serve(
    scenario: Option<String>,
    seed: Option<u64>,
    out_dir: PathBuf,
    addr: &str,
    pace: Option<f64>,
) -> Result<()> {
    let manager = Arc::new(RunManager::new(Some(out_dir)));
    if let Some(s) = scenario {
        let status = manager.start(
            gateway::resolve_scenario(&s)?,
            RunOptions {
                seed,
                pace_wall_per_sim_s: pace,
            },
        )?;
        eprintln!("started run {} ({})", status.run_id, status.scenario_name);
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, http::router(manager))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
