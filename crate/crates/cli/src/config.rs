//! Scenario files: TOML whose keys mirror [`ScenarioConfig`]. Omitted keys take their
//! defaults and unknown keys are rejected.

use std::path::Path;

use wmn_core::experiments::ScenarioConfig;

use crate::CliError;

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    cfg.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Comma-separated list of numbers; an empty list is a usage error.
pub fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("not a number: `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one number".into()));
    }
    Ok(values)
}
