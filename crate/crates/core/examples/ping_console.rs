//! Interactive probes against a prepared run. Each stdin line is
//! `<src> <dst> <t_s>`; an empty line or EOF quits. Without stdin input a
//! few sample probes are sent.
//!
//!     echo "shanghai sao-paulo 12.5" | cargo run --release --example ping_console

use std::io::{BufRead, IsTerminal};

use leotwin::engine::{Engine, PingOutcome};
use leotwin::gateway::load_bundled;

fn show(out: &PingOutcome) {
    match out {
        PingOutcome::Reply(s) => println!(
            "{} -> {} at {:.2} s: rtt {:.3} ms (propagation {:.3} ms), {} hops via {}",
            s.src,
            s.dst,
            s.launch_t_s,
            s.rtt_s * 1e3,
            s.theoretical_rtt_s * 1e3,
            s.hop_count,
            s.path.join(" ")
        ),
        PingOutcome::Timeout(t) => println!(
            "{} -> {} at {:.2} s: timeout ({:?}) at {:.2} s",
            t.src, t.dst, t.launch_t_s, t.reason, t.timeout_at_s
        ),
    }
}

fn main() -> anyhow::Result<()> {
    let name = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "starlink-ping".into());
    let engine = Engine::new(load_bundled(&name)?.engine_setup(None)?)?;
    eprintln!("{name}: {} slots ready", engine.slot_count());

    let samples = || -> anyhow::Result<()> {
        for t in [0.0, 50.0, 100.0, 150.0] {
            show(&engine.ping("shanghai", "sao-paulo", t)?);
        }
        show(&engine.ping("shanghai", "shanghai", 0.0)?);
        Ok(())
    };
    let stdin = std::io::stdin();
    if stdin.is_terminal() {
        return samples();
    }
    let mut handled = 0;
    for line in stdin.lock().lines() {
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.is_empty() {
            break;
        }
        let [src, dst, t] = parts[..] else {
            eprintln!("expected `<src> <dst> <t_s>`");
            continue;
        };
        handled += 1;
        match t
            .parse::<f64>()
            .map_err(anyhow::Error::from)
            .and_then(|t| Ok(engine.ping(src, dst, t)?))
        {
            Ok(out) => show(&out),
            Err(e) => eprintln!("error: {e}"),
        }
    }
    if handled == 0 {
        samples()?;
    }
    Ok(())
}
