//! Checkpoint = plain-text config header, a blank line, then the PFT1
//! tensor container. The loader rejects any config/shape mismatch with a
//! diagnostic naming the offending tensor.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::params::{param_specs, ParamSet};
use crate::model::{IptModel, ModelConfig, TaskId};
use crate::tensor::container;

pub fn save_checkpoint(path: &Path, model: &IptModel) -> Result<()> {
    let mut bytes = render_header(model.config()).into_bytes();
    bytes.push(b'\n');
    container::write_container(&mut bytes, &model.params().to_named_tensors())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<IptModel> {
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(&name, e))?;
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Data(format!("{name}: missing header/container separator")))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::Data(format!("{name}: header is not UTF-8")))?;
    let config = parse_header(header, &name)?;
    config.validate()?;

    let tensors = container::read_container(&bytes[split + 2..], &name)?;
    let mut params = ParamSet::new();
    let mut by_name: std::collections::HashMap<String, crate::tensor::Tensor<f32>> =
        tensors.into_iter().collect();
    for (pname, shape, _) in param_specs(&config) {
        let tensor = by_name.remove(&pname).ok_or_else(|| {
            Error::Config(format!("{name}: checkpoint is missing tensor '{pname}'"))
        })?;
        if tensor.shape() != shape.as_slice() {
            return Err(Error::Config(format!(
                "{name}: tensor '{pname}' has shape {:?}, config implies {shape:?}",
                tensor.shape()
            )));
        }
        params.insert(pname, tensor);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Config(format!(
            "{name}: checkpoint contains tensor '{extra}' not implied by its config"
        )));
    }
    Ok(IptModel::from_parts(config, params))
}

fn render_header(cfg: &ModelConfig) -> String {
    let tasks: Vec<&str> = cfg.tasks.iter().map(|t| t.name()).collect();
    format!(
        "format = murk-checkpoint-v1\n\
         feature_channels = {}\n\
         patch_size = {}\n\
         encoder_layers = {}\n\
         decoder_layers = {}\n\
         attn_heads = {}\n\
         ffn_multiplier = {}\n\
         max_patches = {}\n\
         tasks = {}\n\
         underwater_own_embedding = {}\n",
        cfg.feature_channels,
        cfg.patch_size,
        cfg.encoder_layers,
        cfg.decoder_layers,
        cfg.attn_heads,
        cfg.ffn_multiplier,
        cfg.max_patches,
        tasks.join(","),
        cfg.underwater_own_embedding,
    )
}

fn parse_header(header: &str, source: &str) -> Result<ModelConfig> {
    let mut map = std::collections::HashMap::new();
    for line in header.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Data(format!("{source}: bad header line '{line}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<&String> {
        map.get(k)
            .ok_or_else(|| Error::Data(format!("{source}: header lacks '{k}'")))
    };
    if get("format")? != "murk-checkpoint-v1" {
        return Err(Error::Data(format!(
            "{source}: unsupported checkpoint format '{}'",
            get("format")?
        )));
    }
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Data(format!("{source}: header field '{k}' is not an integer")))
    };
    let tasks = get("tasks")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| TaskId::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelConfig {
        feature_channels: parse_usize("feature_channels")?,
        patch_size: parse_usize("patch_size")?,
        encoder_layers: parse_usize("encoder_layers")?,
        decoder_layers: parse_usize("decoder_layers")?,
        attn_heads: parse_usize("attn_heads")?,
        ffn_multiplier: parse_usize("ffn_multiplier")?,
        max_patches: parse_usize("max_patches")?,
        tasks,
        underwater_own_embedding: get("underwater_own_embedding")? == "true",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            feature_channels: 2,
            patch_size: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            attn_heads: 2,
            ffn_multiplier: 2,
            max_patches: 16,
            tasks: vec![TaskId::DenoiseSigma30, TaskId::Upscale2x],
            underwater_own_embedding: false,
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = IptModel::new(tiny_config(), 3).unwrap();
        save_checkpoint(&path, &model).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        for ((n1, t1), (n2, t2)) in loaded.params().iter().zip(model.params().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.data(), t2.data(), "payload differs for {n1}");
        }
    }

    #[test]
    fn loader_names_missing_or_misshapen_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = IptModel::new(tiny_config(), 3).unwrap();
        save_checkpoint(&path, &model).unwrap();

        // Rewrite the header with a different channel count: shapes no
        // longer match and the loader must say which tensor broke.
        let bytes = fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let _ = text;
        let split = bytes.windows(2).position(|w| w == b"\n\n").unwrap();
        let header = String::from_utf8(bytes[..split].to_vec()).unwrap();
        let bad_header = header.replace("feature_channels = 2", "feature_channels = 4");
        let mut bad = bad_header.into_bytes();
        bad.extend_from_slice(&bytes[split..]);
        let bad_path = dir.path().join("bad.ckpt");
        fs::write(&bad_path, bad).unwrap();

        let err = load_checkpoint(&bad_path).unwrap_err().to_string();
        assert!(err.contains("head.denoise30.conv0.weight"), "diagnostic was: {err}");
    }
}
