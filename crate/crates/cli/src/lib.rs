pub mod config;
pub mod pipeline;
pub mod seeds;
pub mod service;

use std::sync::Arc;

use anyhow::Result;
use camshot_core::oracle::SessionHub;

pub use config::{OracleKind, PipelineConfig};

/// Starts the session service on a background thread with one session bound
/// to a fresh hub, for commands that refine with the human oracle. Returns
/// the hub and the bound address.
pub fn spawn_human_session(cfg: &PipelineConfig) -> Result<(Arc<SessionHub>, std::net::SocketAddr, u64)> {
    let inputs = pipeline::Inputs::load(cfg)?;
    let state = Arc::new(service::AppState::with_seeds(cfg.clone(), inputs, Vec::new()));
    let hub = Arc::new(SessionHub::new(cfg.refine.iterations));
    let id = state.register(Arc::clone(&hub));
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(service::bind(&cfg.serve.addr))?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        if let Err(e) = rt.block_on(service::serve(listener, state)) {
            log::error!("session service stopped: {e:#}");
        }
    });
    Ok((hub, addr, id))
}
