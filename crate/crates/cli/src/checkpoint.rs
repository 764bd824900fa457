//! On-disk checkpoints: flat little-endian f64 vectors with JSON sidecars.
//! The sidecar lives next to the binary with a `.json` extension.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use dataforge_core::contrastive::EncoderParams;
use dataforge_core::nnet::{Arch, Params};
use dataforge_core::valuation::{InfluenceMatrix, InfluenceMode};

use crate::{Error, Result};

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, "length is not a multiple of 8"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ParamsSidecar {
    arch: Arch,
    seed: u64,
}

pub fn save_params(path: &Path, params: &Params, arch: &Arch, seed: u64) -> Result<()> {
    write_f64s(path, &params.theta)?;
    write_json(&sidecar_path(path), &ParamsSidecar { arch: *arch, seed })
}

pub fn load_params(path: &Path) -> Result<(Params, Arch, u64)> {
    let sidecar: ParamsSidecar = read_json(&sidecar_path(path))?;
    let theta = read_f64s(path)?;
    if theta.len() != sidecar.arch.param_len() {
        return Err(Error::format(
            path,
            format!(
                "{} parameters on disk, architecture expects {}",
                theta.len(),
                sidecar.arch.param_len()
            ),
        ));
    }
    Ok((Params { theta }, sidecar.arch, sidecar.seed))
}

#[derive(Serialize, Deserialize)]
struct EncoderSidecar {
    input_dim: usize,
    hidden_dim: usize,
    embed_dim: usize,
    margin: f64,
}

pub fn save_encoder(path: &Path, enc: &EncoderParams, margin: f64) -> Result<()> {
    write_f64s(path, &enc.theta)?;
    write_json(
        &sidecar_path(path),
        &EncoderSidecar {
            input_dim: enc.input_dim,
            hidden_dim: enc.hidden_dim,
            embed_dim: enc.embed_dim,
            margin,
        },
    )
}

pub fn load_encoder(path: &Path) -> Result<(EncoderParams, f64)> {
    let sidecar: EncoderSidecar = read_json(&sidecar_path(path))?;
    let theta = read_f64s(path)?;
    let enc = EncoderParams {
        input_dim: sidecar.input_dim,
        hidden_dim: sidecar.hidden_dim,
        embed_dim: sidecar.embed_dim,
        theta,
    };
    let expected = sidecar.input_dim * sidecar.hidden_dim
        + sidecar.hidden_dim
        + sidecar.hidden_dim * sidecar.embed_dim
        + sidecar.embed_dim;
    if enc.theta.len() != expected {
        return Err(Error::format(
            path,
            format!("{} parameters on disk, encoder expects {expected}", enc.theta.len()),
        ));
    }
    Ok((enc, sidecar.margin))
}

#[derive(Serialize, Deserialize)]
struct InfluenceSidecar {
    train_ids: Vec<u64>,
    val_ids: Vec<u64>,
    mode: InfluenceMode,
}

pub fn save_influence(path: &Path, matrix: &InfluenceMatrix) -> Result<()> {
    write_f64s(path, matrix.values())?;
    write_json(
        &sidecar_path(path),
        &InfluenceSidecar {
            train_ids: matrix.train_ids().to_vec(),
            val_ids: matrix.val_ids().to_vec(),
            mode: matrix.mode(),
        },
    )
}

pub fn load_influence(path: &Path) -> Result<InfluenceMatrix> {
    let sidecar: InfluenceSidecar = read_json(&sidecar_path(path))?;
    let values = read_f64s(path)?;
    Ok(InfluenceMatrix::new(
        values,
        sidecar.train_ids,
        sidecar.val_ids,
        sidecar.mode,
    )?)
}
