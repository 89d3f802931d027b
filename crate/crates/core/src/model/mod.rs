//! The MOI-Mixer recommender: configuration, parameters, forward pass and checkpoints.

mod checkpoint;
mod config;
mod mixer;
mod params;

pub use checkpoint::{
    load_checkpoint, parse_config_text, save_checkpoint, CONFIG_FILE, MANIFEST_FILE, PARAMS_FILE,
};
pub use config::{Arch, ModelConfig, TokenMixerKind};
pub use mixer::{ModelVars, MoiMixerModel, ParamEntry, Positions};
pub use params::{rounded_millions, ParamCount, ParamKind, Scope};
