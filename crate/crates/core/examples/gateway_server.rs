//! Serves the HTTP API with one paced run already started, and prints a few
//! requests to try. Stops with Ctrl-C.
//!
//!     cargo run --release --example gateway_server [-- 127.0.0.1:8080]

use std::sync::Arc;

use leotwin::gateway::{http::router, load_bundled, RunManager, RunOptions};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let addr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let manager = Arc::new(RunManager::new(Some("out".into())));
    let run = manager.start(
        load_bundled("starlink-ping")?,
        RunOptions {
            seed: None,
            // real time
            pace_wall_per_sim_s: Some(1.0),
        },
    )?;
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    let base = format!("http://{}", listener.local_addr()?);
    let id = &run.run_id;
    println!("run {id} started; try:");
    println!("  curl {base}/runs/{id}");
    println!("  curl -N {base}/runs/{id}/events");
    println!("  curl {base}/runs/{id}/metrics/rtt?from=0&to=5");
    println!(
        "  curl -X POST -H 'content-type: application/json' -d '{{\"src\":\"shanghai\",\"dst\":\"sao-paulo\"}}' {base}/runs/{id}/ping"
    );
    println!("  curl -X POST --data-binary @scenarios/kuiper-relay-stable.toml {base}/runs");
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
