//! Versioned binary checkpoint.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "OFRKCKPT" | version | d | heads | tier | sab_count | user_count | d_in | max_outfit_size
//! param_count, then per parameter:
//!     name_len | name (utf-8) | rank | dims… | values as little-endian f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{EncoderConfig, ModelParams, Tier};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"OFRKCKPT";

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Input(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::parse("checkpoint", 0, format!("reading {what}: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_checkpoint<T: Scalar>(model: &ModelParams<T>, w: &mut impl Write) -> Result<()> {
    let c = &model.config;
    w.write_all(MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION as usize)?;
    for v in [c.d, c.heads, c.tier.code() as usize, c.sab_count, c.user_count, c.d_in, c.max_outfit_size] {
        put_u32(w, v)?;
    }
    put_u32(w, model.store.len())?;
    for p in model.store.iter() {
        put_u32(w, p.name.len())?;
        w.write_all(p.name.as_bytes())?;
        put_u32(w, p.value.shape().len())?;
        for &dim in p.value.shape() {
            put_u32(w, dim)?;
        }
        for v in p.value.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(r: &mut impl Read) -> Result<ModelParams<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::parse("checkpoint", 0, format!("reading magic: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::parse("checkpoint", 0, "not a checkpoint file"));
    }
    let version = get_u32(r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let d = get_u32(r, "d")? as usize;
    let heads = get_u32(r, "heads")? as usize;
    let tier_code = get_u32(r, "tier")?;
    let tier = Tier::from_code(tier_code)
        .ok_or_else(|| Error::parse("checkpoint", 0, format!("unknown tier code {tier_code}")))?;
    let config = EncoderConfig {
        d,
        heads,
        tier,
        sab_count: get_u32(r, "sab_count")? as usize,
        user_count: get_u32(r, "user_count")? as usize,
        d_in: get_u32(r, "d_in")? as usize,
        max_outfit_size: get_u32(r, "max_outfit_size")? as usize,
    };
    let mut model = ModelParams::<T>::new(config, 0)?;
    let count = get_u32(r, "param_count")? as usize;
    if count != model.store.len() {
        return Err(Error::parse(
            "checkpoint",
            0,
            format!("{count} parameters stored, architecture has {}", model.store.len()),
        ));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let len = get_u32(r, "name length")? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::parse("checkpoint", 0, format!("reading name: {e}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::parse("checkpoint", 0, "parameter name is not utf-8"))?;
        let rank = get_u32(r, "rank")? as usize;
        let shape = (0..rank)
            .map(|_| get_u32(r, "dimension").map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let id = model
            .store
            .find(&name)
            .ok_or_else(|| Error::parse("checkpoint", 0, format!("unexpected parameter `{name}`")))?;
        if model.store.get(id).shape() != shape.as_slice() {
            return Err(Error::parse("checkpoint", 0, format!("parameter `{name}` has shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::parse("checkpoint", 0, format!("reading `{name}`: {e}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        *model.store.get_mut(id) = Tensor::new(shape, data)?;
        seen[id.0] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(
            "checkpoint",
            0,
            format!("parameter `{}` missing", model.store.name(crate::diffcore::ParamId(missing))),
        ));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &ModelParams<T>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
