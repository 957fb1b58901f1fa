//! Fixtures for the acceptance run.

use std::path::PathBuf;

use cvmet::{CliError, RunConfig};

/// Location of the configuration shipped with the workspace.
pub fn shipped_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

pub fn shipped_config() -> Result<RunConfig, CliError> {
    RunConfig::load(&shipped_config_path(), &[])
}

#[cfg(test)]
mod tests {
    #[test]
    fn shipped_config_is_valid_for_every_command() {
        let cfg = super::shipped_config().unwrap();
        for c in [
            cvmet::Command::Qfi,
            cvmet::Command::Sweep,
            cvmet::Command::Ratio,
            cvmet::Command::BchTable,
            cvmet::Command::FactorizationCheck,
            cvmet::Command::Optomech,
            cvmet::Command::Claims,
        ] {
            cfg.validate(c).unwrap();
        }
    }
}
