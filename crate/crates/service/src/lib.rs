//! Live typing sessions over HTTP and WebSocket.
//!
//! A client creates a session, then sends the action it intends at each
//! trial. The server draws evidence for that action from the session's
//! calibration profile, decodes it and streams back a [`TrialUpdate`].

pub mod api;
pub mod session;

use std::net::SocketAddr;

pub use api::{router, AppState};
pub use session::{CreateSession, ServiceConfig, Session, SessionView, TrialUpdate};

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
