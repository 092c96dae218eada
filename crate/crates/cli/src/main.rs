use std::process::ExitCode;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("FHIRFORGE_LOG"))
        .with_writer(std::io::stderr)
        .init();
    ExitCode::from(fhirforge_cli::run_from(std::env::args_os()).await)
}
