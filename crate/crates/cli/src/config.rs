use std::path::{Path, PathBuf};

use cvmet_core::applications::OptomechParams;
use cvmet_core::cvspace::{DimensionLoop, ProbeSpec};
use cvmet_core::qfi::{Parameter, QfiMethod};
use cvmet_core::strategies::{StrategyConfig, StrategyKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Command {
    Qfi,
    Sweep,
    Ratio,
    BchTable,
    FactorizationCheck,
    Optomech,
    Claims,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NQueries,
    Theta1,
    Theta2,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioSpec {
    pub m_values: Vec<u32>,
    pub n_queries: u32,
    pub theta1: f64,
    pub theta2: f64,
    pub method: QfiMethod,
}

impl Default for RatioSpec {
    fn default() -> Self {
        Self {
            m_values: vec![1, 2, 3],
            n_queries: 800,
            theta1: 0.1,
            theta2: 0.1,
            method: QfiMethod::GeneratorExact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BchSpec {
    pub m_max: u32,
}

impl Default for BchSpec {
    fn default() -> Self {
        Self { m_max: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationSpec {
    pub m_values: Vec<u32>,
    pub lambdas: Vec<f64>,
    pub dim: usize,
}

impl Default for FactorizationSpec {
    fn default() -> Self {
        Self { m_values: vec![1, 2, 3], lambdas: vec![0.1, 0.2, 0.3], dim: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptomechSweep {
    pub params: OptomechParams,
    pub n_values: Vec<u32>,
}

impl Default for OptomechSweep {
    fn default() -> Self {
        Self { params: OptomechParams::default(), n_values: (8..=24).step_by(2).collect() }
    }
}

fn default_strategy() -> StrategyConfig {
    StrategyConfig {
        theta1: 0.1,
        theta2: 0.1,
        n_queries: 4,
        m: 1,
        strategy: StrategyKind::Switch,
        probe: ProbeSpec::Vacuum,
    }
}

fn default_methods() -> Vec<QfiMethod> {
    vec![QfiMethod::FiniteDifference, QfiMethod::GeneratorExact, QfiMethod::Asymptotic]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub strategy: StrategyConfig,
    pub parameter: Parameter,
    pub method: QfiMethod,
    pub methods: Vec<QfiMethod>,
    pub fd_step: Option<f64>,
    pub dimension: DimensionLoop,
    pub sweep: Option<SweepSpec>,
    pub ratio: RatioSpec,
    pub bch: BchSpec,
    pub factorization: FactorizationSpec,
    pub optomech: OptomechSweep,
    pub output: OutputSpec,
    pub nu: u32,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            strategy: default_strategy(),
            parameter: Parameter::Theta2,
            method: QfiMethod::FiniteDifference,
            methods: default_methods(),
            fd_step: None,
            dimension: DimensionLoop::default(),
            sweep: None,
            ratio: RatioSpec::default(),
            bch: BchSpec::default(),
            factorization: FactorizationSpec::default(),
            optomech: OptomechSweep::default(),
            output: OutputSpec::default(),
            nu: 1,
            seed: 0,
        }
    }
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self, CliError> {
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    /// Checks that apply to every command; command-specific checks run later.
    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        if self.nu == 0 {
            return Err(CliError::Config("nu must be positive".into()));
        }
        let invalid = |msg: &str| Err(CliError::Config(msg.into()));
        match command {
            Command::Qfi => self.strategy.validate().map_err(CliError::from),
            Command::Sweep => {
                let Some(sweep) = &self.sweep else {
                    return invalid("sweep requires a `sweep` section");
                };
                if sweep.values.is_empty() {
                    return invalid("sweep values must not be empty");
                }
                if !strictly_increasing(&sweep.values) {
                    return invalid("sweep values must be strictly increasing");
                }
                if matches!(sweep.param, SweepParam::NQueries | SweepParam::M)
                    && sweep.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0)
                {
                    return invalid("n_queries and m sweep values must be positive integers");
                }
                if self.methods.is_empty() {
                    return invalid("at least one QFI method is required");
                }
                self.strategy.validate().map_err(CliError::from)
            }
            Command::Ratio => {
                if self.ratio.m_values.is_empty() || !strictly_increasing(&self.ratio.m_values) {
                    return invalid("ratio.m_values must be non-empty and strictly increasing");
                }
                Ok(())
            }
            Command::BchTable => {
                if self.bch.m_max == 0 || self.bch.m_max > cvmet_core::bch::MAX_ORDER {
                    return invalid("bch.m_max must lie in 1..=30");
                }
                Ok(())
            }
            Command::FactorizationCheck => {
                let f = &self.factorization;
                if f.m_values.is_empty() || f.lambdas.is_empty() {
                    return invalid("factorization needs m_values and lambdas");
                }
                Ok(())
            }
            Command::Optomech => {
                let o = &self.optomech;
                if o.n_values.len() < 4 || !strictly_increasing(&o.n_values) {
                    return invalid("optomech.n_values needs at least 4 strictly increasing entries");
                }
                o.params.validate().map_err(CliError::from)
            }
            Command::Claims => Ok(()),
        }
    }
}

/// Set `a.b.c=value` inside a JSON document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    if path.is_empty() {
        return Err(CliError::Config("override key is empty".into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(CliError::Config(format!("`{path}`: `{key}` is not inside an object")));
            }
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("non-empty key path")
}
