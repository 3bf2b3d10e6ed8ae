//! TOML configuration files: the pipeline config (all tunables, grouped
//! per stage) and synthetic scene specs. Unknown keys are rejected and
//! every value is validated against its module invariants at load time.

use super::IoError;
use crate::pipeline::PipelineConfig;
use crate::synth::SceneSpec;
use std::path::Path;

pub fn load_config(path: &Path) -> Result<PipelineConfig, IoError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<PipelineConfig, IoError> {
    let config: PipelineConfig =
        toml::from_str(text).map_err(|e| IoError::InvalidData(e.to_string()))?;
    config
        .validate()
        .map_err(IoError::InvalidData)?;
    Ok(config)
}

pub fn dump_config(config: &PipelineConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}

pub fn load_scene_spec(path: &Path) -> Result<SceneSpec, IoError> {
    let text = std::fs::read_to_string(path)?;
    let spec: SceneSpec = toml::from_str(&text).map_err(|e| IoError::InvalidData(e.to_string()))?;
    spec.validate()
        .map_err(|e| IoError::InvalidData(e.to_string()))?;
    Ok(spec)
}

pub fn dump_scene_spec(spec: &SceneSpec) -> String {
    toml::to_string_pretty(spec).expect("scene spec serializes")
}
