//! HTTP front end for uploading datasets, annotating clusters, running
//! explanations and fetching stored artifacts.

pub mod api;
pub mod config;
pub mod store;

pub use api::{router, AppState};
pub use config::{ServiceConfig, ARTIFACT_DIR_ENV};
pub use store::ArtifactStore;

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, dir = %config.artifact_dir.display(), "listening");
    let app = router(AppState::new(config)?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
