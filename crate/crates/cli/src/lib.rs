//! Command-line front end: argument parsing, dispatch and output rendering.

pub mod args;
pub mod commands;
pub mod error;
pub mod render;

use std::io::{BufRead, Write};

pub use args::{Cli, Command};
pub use error::CliError;
pub use render::{Format, Output, Table};

/// Runs one parsed command, reading `monitor` input from `input`.
pub fn run<R: BufRead, W: Write>(cli: Cli, input: R, mut out: W) -> Result<(), CliError> {
    let format = cli.format.unwrap_or(match cli.command {
        Command::Design(_) => Format::Json,
        _ => Format::Table,
    });
    let output = match &cli.command {
        Command::Design(a) => commands::design(a)?,
        Command::Boundaries(a) => commands::boundaries(a)?,
        Command::Oc(a) => commands::oc(a)?,
        Command::Estimate(a) => commands::estimate(a)?,
        Command::Compare(a) => commands::compare(a)?,
        Command::Monitor(a) => return commands::monitor(a, format, input, out),
        Command::Simulate(a) => return commands::simulate(a, format, out),
        Command::Serve(a) => return serve(a),
    };
    output.write(format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn serve(args: &args::ServeArgs) -> Result<(), CliError> {
    let mut config = curtail_service::Config::from_env().map_err(CliError::Usage)?;
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(dir) = &args.data_dir {
        config.data_dir = dir.clone();
    }
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info,tower_http=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(curtail_service::serve(config))?;
    Ok(())
}
