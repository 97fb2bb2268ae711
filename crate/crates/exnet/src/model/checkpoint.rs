//! Self-describing binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "EXNETCKP"
//! version  u32      currently 1
//! kind     u8       0 = experts network, 1 = embed-mlp
//! meta     u64 length + JSON bytes  (config, num_features, entity names)
//! ntensors u64
//! per tensor:
//!   name   u64 length + UTF-8 bytes
//!   ndims  u64, then each dim as u64
//!   data   f64 values, little-endian, row-major
//! ```
//!
//! Round-trips are bit-exact: tensor bytes are written and read as raw IEEE
//! f64 bit patterns.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbedMlpConfig, EmbedMlpModel, ExNetConfig, ExNetModel, Model};
use crate::rng::SeededRng;

const MAGIC: &[u8; 8] = b"EXNETCKP";
const VERSION: u32 = 1;

/// A checkpointed model of either kind, plus its entity-id mapping.
pub enum LoadedModel {
    ExNet(ExNetModel),
    EmbedMlp(EmbedMlpModel),
}

impl LoadedModel {
    pub fn as_model(&self) -> &dyn Model {
        match self {
            LoadedModel::ExNet(m) => m,
            LoadedModel::EmbedMlp(m) => m,
        }
    }

    pub fn as_model_mut(&mut self) -> &mut dyn Model {
        match self {
            LoadedModel::ExNet(m) => m,
            LoadedModel::EmbedMlp(m) => m,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ExNetMeta {
    config: ExNetConfig,
    num_features: usize,
    entity_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EmbedMlpMeta {
    config: EmbedMlpConfig,
    num_features: usize,
    num_entities: usize,
    entity_names: Vec<String>,
}

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn write_tensors<W: Write, M: Model + ?Sized>(w: &mut W, model: &mut M) -> Result<()> {
    let tensors = model.tensors();
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for t in tensors {
        write_bytes(w, t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u64).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_tensors<R: Read, M: Model + ?Sized>(r: &mut R, model: &mut M) -> Result<()> {
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let n = u64::from_le_bytes(n) as usize;
    let mut tensors = model.tensors();
    if tensors.len() != n {
        return Err(Error::Checkpoint(format!(
            "tensor count mismatch: file has {n}, model has {}",
            tensors.len()
        )));
    }
    for t in tensors.iter_mut() {
        let name = String::from_utf8(read_bytes(r)?)
            .map_err(|_| Error::Checkpoint("bad tensor name".into()))?;
        if name != t.name {
            return Err(Error::Checkpoint(format!(
                "tensor order mismatch: file '{name}', model '{}'",
                t.name
            )));
        }
        let mut ndims = [0u8; 8];
        r.read_exact(&mut ndims)?;
        let ndims = u64::from_le_bytes(ndims) as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            let mut d = [0u8; 8];
            r.read_exact(&mut d)?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        if shape != t.shape {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' shape mismatch: file {shape:?}, model {:?}",
                t.shape
            )));
        }
        let mut bytes = vec![0u8; t.data.len() * 8];
        r.read_exact(&mut bytes)?;
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
    }
    Ok(())
}

/// Save an experts network with its entity-id mapping.
pub fn save_exnet(path: &Path, model: &mut ExNetModel, entity_names: &[String]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[0u8])?;
    let meta = ExNetMeta {
        config: model.config.clone(),
        num_features: model.num_features,
        entity_names: entity_names.to_vec(),
    };
    write_bytes(&mut w, &serde_json::to_vec(&meta)?)?;
    write_tensors(&mut w, model)?;
    w.flush()?;
    Ok(())
}

/// Save an embed-mlp baseline with its entity-id mapping.
pub fn save_embed_mlp(
    path: &Path,
    model: &mut EmbedMlpModel,
    entity_names: &[String],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[1u8])?;
    let num_entities = model.num_entities();
    let meta = EmbedMlpMeta {
        config: model.config.clone(),
        num_features: model.num_features,
        num_entities,
        entity_names: entity_names.to_vec(),
    };
    write_bytes(&mut w, &serde_json::to_vec(&meta)?)?;
    write_tensors(&mut w, model)?;
    w.flush()?;
    Ok(())
}

/// Load a checkpoint of either kind; returns the model and entity names.
pub fn load(path: &Path) -> Result<(LoadedModel, Vec<String>)> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not an exnet checkpoint".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let meta = read_bytes(&mut r)?;
    match kind[0] {
        0 => {
            let meta: ExNetMeta = serde_json::from_slice(&meta)?;
            let mut model = ExNetModel::new(
                meta.config,
                meta.num_features,
                meta.entity_names.len(),
                &mut SeededRng::new(0),
            )?;
            read_tensors(&mut r, &mut model)?;
            Ok((LoadedModel::ExNet(model), meta.entity_names))
        }
        1 => {
            let meta: EmbedMlpMeta = serde_json::from_slice(&meta)?;
            let mut model = EmbedMlpModel::new(
                meta.config,
                meta.num_features,
                meta.num_entities,
                &mut SeededRng::new(0),
            )?;
            read_tensors(&mut r, &mut model)?;
            Ok((LoadedModel::EmbedMlp(model), meta.entity_names))
        }
        k => Err(Error::Checkpoint(format!("unknown model kind {k}"))),
    }
}
