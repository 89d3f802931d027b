//! Checkpoints: a `key = value` config, raw little-endian `f64` parameters and a
//! manifest mapping each tensor name to its shape and offset.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::mixer::MoiMixerModel;
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const CONFIG_FILE: &str = "model.config";
pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "params.manifest";

/// Writes the model into `dir`, creating it if needed.
pub fn save_checkpoint(model: &MoiMixerModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut config = String::new();
    for (k, v) in model.config().to_pairs() {
        config.push_str(&format!("{k} = {v}\n"));
    }
    let mut manifest = String::new();
    let mut bytes = Vec::new();
    let mut offset = 0usize;
    for e in model.params() {
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.name,
            e.value.rows(),
            e.value.cols(),
            offset
        ));
        for x in e.value.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        offset += e.value.len();
    }
    for (name, content) in [
        (CONFIG_FILE, config.into_bytes()),
        (MANIFEST_FILE, manifest.into_bytes()),
        (PARAMS_FILE, bytes),
    ] {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Parses `key = value` lines over the default configuration. Blank lines and `#` comments are skipped.
///
/// Unknown keys are errors.
pub fn parse_config_text(text: &str, path: &Path) -> Result<ModelConfig> {
    let mut config = ModelConfig::default_for(1, 1);
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: expected key = value", n + 1),
        })?;
        if !config.set(k.trim(), v.trim())? {
            return Err(Error::Config(format!("unknown model key '{}'", k.trim())));
        }
    }
    config.validate()?;
    Ok(config)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Restores a model written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<MoiMixerModel> {
    let config_path = dir.join(CONFIG_FILE);
    let config = parse_config_text(&read_text(&config_path)?, &config_path)?;
    let mut model = MoiMixerModel::new(config, 0)?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = read_text(&manifest_path)?;
    let params_path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format {
            path: params_path,
            reason: "length is not a multiple of 8".into(),
        });
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let expected: Vec<String> = model.params().iter().map(|e| e.name.clone()).collect();
    let bad = |reason: String| Error::Format {
        path: manifest_path.clone(),
        reason,
    };
    let mut values = Vec::with_capacity(expected.len());
    let lines: Vec<&str> = manifest.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != expected.len() {
        return Err(bad(format!(
            "{} tensors listed, model has {}",
            lines.len(),
            expected.len()
        )));
    }
    for (line, want) in lines.iter().zip(&expected) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(format!("malformed line '{line}'")));
        }
        if f[0] != want {
            return Err(bad(format!("expected tensor {want}, found {}", f[0])));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(format!("bad number '{s}'")))
        };
        let (rows, cols, offset) = (num(f[1])?, num(f[2])?, num(f[3])?);
        let end = offset + rows * cols;
        if end > floats.len() {
            return Err(bad(format!(
                "tensor {want} runs past the end of {PARAMS_FILE}"
            )));
        }
        values.push(Matrix::from_vec(rows, cols, floats[offset..end].to_vec())?);
    }
    model.load_params(values)?;
    Ok(model)
}
