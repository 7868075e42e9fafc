mod args;
mod report;
mod run;

use args::Cli;
use clap::Parser;
use report::{error_json, CliError, Report};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help and --version are not errors
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = cli.cmd.name();
    let result = std::panic::catch_unwind(|| execute(&cli)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(CliError::internal(msg.unwrap_or_else(|| "panic".into())))
    });
    match result {
        Ok(pass) => ExitCode::from(if pass { 0 } else { 1 }),
        Err(e) => {
            let body = error_json(command, &e);
            eprint!("{body}");
            let _ = std::fs::write(&cli.report, &body);
            ExitCode::from(e.exit as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("input-invalid", "--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::internal(e.to_string()))?;
    }
    let mut tables = vec![];
    for e in &cli.emit {
        let t = e
            .strip_prefix("csv:")
            .ok_or_else(|| CliError::input("input-invalid", format!("--emit expects csv:<table>, got `{e}`")))?;
        if !cli.cmd.tables().contains(&t) {
            return Err(CliError::input(
                "input-invalid",
                format!("`{}` has no table `{t}` (available: {})", cli.cmd.name(), cli.cmd.tables().join(", ")),
            ));
        }
        tables.push(t.to_string());
    }
    let config = serde_json::to_value(cli).map_err(|e| CliError::internal(e.to_string()))?;
    let mut rep = Report::new(cli.cmd.name(), config, tables);
    run::run(&cli.cmd, &mut rep)?;
    rep.write(&cli.report, !cli.no_timings)?;
    Ok(rep.pass())
}
