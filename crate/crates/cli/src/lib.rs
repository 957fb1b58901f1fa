//! Batch front end for `cvmet-core`: JSON run configurations, CSV/JSON
//! tables, and the regression claims.

pub mod claims;
pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::path::Path;

pub use config::{Command, RunConfig};
pub use error::CliError;

/// Execute `command` and write its outputs. `out` overrides `output.csv`.
pub fn run(command: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let csv = out.or(cfg.output.csv.as_deref());
    let json = cfg.output.json.as_deref();
    if command == Command::Claims {
        cfg.validate(command)?;
        let outcomes = claims::run_all(cfg);
        for o in &outcomes {
            eprintln!("{}", o.report());
        }
        claims::claims_table(&outcomes).write(csv, json)?;
        let failed = outcomes.iter().filter(|o| !o.passed()).count();
        return if failed == 0 { Ok(()) } else { Err(CliError::ClaimsFailed(failed)) };
    }
    let tables = commands::tables_for(command, cfg)?;
    let mut tables = tables.into_iter();
    let main = tables.next().expect("every command yields a table");
    main.write(csv, json)?;
    // the optomech fit summary goes next to the main CSV
    if let Some(summary) = tables.next() {
        let path = csv.map(commands::fit_path);
        let json_path = json.map(commands::fit_path);
        summary.write(path.as_deref(), json_path.as_deref())?;
    }
    Ok(())
}
