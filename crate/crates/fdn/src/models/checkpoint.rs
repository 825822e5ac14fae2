//! Versioned binary model checkpoints: a JSON header (spec, likelihood,
//! prior scale) followed by named parameter arrays as little-endian f64.
//! Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::prob::PriorSpec;

use super::{Likelihood, Model, ModelSpec};

const MAGIC: &[u8; 8] = b"FDNCKPT1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ModelSpec,
    likelihood: Likelihood,
    sigma0: f64,
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    let header = Header {
        format_version: FORMAT_VERSION,
        spec: model.spec().clone(),
        likelihood: model.likelihood(),
        sigma0: model.prior().sigma0,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    f.write_all(&header_bytes)?;

    let store = model.store();
    f.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, tensor) in store.iter() {
        f.write_all(&(name.len() as u32).to_le_bytes())?;
        f.write_all(name.as_bytes())?;
        f.write_all(&[tensor.shape().len() as u8])?;
        for &d in tensor.shape() {
            f.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact(f: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    f.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u32(f: &mut impl Read) -> Result<u32> {
    let b = read_exact(f, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn load(path: &Path) -> Result<Model> {
    let mut f = std::fs::File::open(path)?;
    let magic = read_exact(&mut f, 8)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let header_len = read_u32(&mut f)? as usize;
    let header: Header = serde_json::from_slice(&read_exact(&mut f, header_len)?)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }

    let n_params = read_u32(&mut f)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..n_params {
        let name_len = read_u32(&mut f)? as usize;
        let name = String::from_utf8(read_exact(&mut f, name_len)?)
            .map_err(|_| Error::Checkpoint("invalid parameter name".into()))?;
        let rank = read_exact(&mut f, 1)?[0] as usize;
        if rank > 2 {
            return Err(Error::Checkpoint(format!("rank {rank} unsupported")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let b = read_exact(&mut f, 8)?;
            shape.push(u64::from_le_bytes(b.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let bytes = read_exact(&mut f, numel * 8)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(&name, Tensor::new(shape, data))?;
    }

    Model::from_parts(
        &header.spec,
        header.likelihood,
        PriorSpec::new(header.sigma0)?,
        store,
    )
}
