//! `DWMC` checkpoint files.
//!
//! ```text
//! "DWMC"  u32 version (1)  u32 tensor_count
//! per tensor: u32 name_len, name (UTF-8), u32 ndim, ndim x u32 dims, f64 payload
//! ```
//!
//! Everything is a named tensor. Parameters are stored as `param.<name>`,
//! optimizer moments as `adam.m.<name>` / `adam.v.<name>`, and run metadata
//! under `meta.*`. Integers wider than 32 bits are split into 32-bit halves
//! (low first) so that every value is exact in binary64; strings are stored
//! one byte per element.

use std::path::Path;

use driver_wm_core::data::sha256_hex;
use driver_wm_core::model::{Architecture, ModelConfig, Variant};
use driver_wm_core::numerics::{ParameterSet, RngState, Tensor};
use driver_wm_core::topology::Topology;
use driver_wm_core::training::{Checkpoint, Moments};

use crate::binary::{put_f64s, put_u32, to_u32, Reader};
use crate::error::{self, Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"DWMC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32(tensors.len(), "tensor count")?);
    for t in tensors {
        put_u32(&mut out, to_u32(t.name.len(), "name length")?);
        out.extend_from_slice(t.name.as_bytes());
        let shape = t.tensor.shape();
        put_u32(&mut out, to_u32(shape.len(), "rank")?);
        for &d in shape {
            put_u32(&mut out, to_u32(d, "dimension")?);
        }
        put_f64s(&mut out, t.tensor.data());
    }
    Ok(out)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let n = r.u32("tensor count")? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for i in 0..n {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| FormatError::Header(format!("tensor {} name is not UTF-8", i)))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| FormatError::Header(format!("tensor `{}` is too large", name)))?;
        let data = r.f64s(count, &format!("tensor `{}`", name))?;
        let tensor = Tensor::new(shape, data).map_err(|e| FormatError::Header(e.to_string()))?;
        out.push(NamedTensor { name, tensor });
    }
    r.finish()?;
    Ok(out)
}

fn vector(xs: Vec<f64>) -> Tensor {
    let n = xs.len();
    Tensor::new(vec![n], xs).expect("vector shape")
}

fn halves(x: u64) -> [f64; 2] {
    [(x & 0xffff_ffff) as f64, (x >> 32) as f64]
}

fn named(name: impl Into<String>, tensor: Tensor) -> NamedTensor {
    NamedTensor {
        name: name.into(),
        tensor,
    }
}

fn indices(xs: &[usize]) -> Tensor {
    vector(xs.iter().map(|&x| x as f64).collect())
}

pub fn checkpoint_tensors(ck: &Checkpoint) -> Vec<NamedTensor> {
    let c = &ck.arch.config;
    let topo = &ck.arch.topology;
    let variant = Variant::ALL.iter().position(|&v| v == ck.arch.variant).expect("known variant");
    let mut out = vec![
        named("meta.variant", vector(vec![variant as f64])),
        named(
            "meta.model",
            vector(vec![
                c.d as f64,
                c.k as f64,
                c.v as f64,
                c.heads as f64,
                c.queries as f64,
                c.rank as f64,
                c.channels as f64,
                c.log_sigma_min,
                c.log_sigma_max,
                c.gate_bias,
            ]),
        ),
        named(
            "meta.topology.edges",
            Tensor::new(
                vec![topo.edges().len(), 2],
                topo.edges().iter().flat_map(|&(i, j)| [i as f64, j as f64]).collect(),
            )
            .expect("edge shape"),
        ),
        named("meta.topology.roi", indices(topo.roi_joints())),
        named("meta.topology.hands", indices(topo.hand_joints())),
        named("meta.topology.head", indices(topo.head_joints())),
    ];
    let [s0, s1] = halves(ck.step);
    out.push(named("meta.progress", vector(vec![s0, s1, ck.epoch as f64, ck.val_metric])));
    let mut rng = Vec::with_capacity(8);
    rng.extend(halves(ck.rng.seed));
    rng.extend(halves(ck.rng.stream));
    rng.extend(halves(ck.rng.word_pos as u64));
    rng.extend(halves((ck.rng.word_pos >> 64) as u64));
    out.push(named("meta.rng", vector(rng)));
    out.push(named("meta.corpus_id", vector(ck.corpus_id.bytes().map(f64::from).collect())));
    out.push(named(
        "meta.trainable",
        vector(ck.params.iter().map(|e| f64::from(u8::from(e.trainable))).collect()),
    ));
    for (prefix, set) in [("param.", &ck.params), ("adam.m.", &ck.moments.m), ("adam.v.", &ck.moments.v)] {
        for e in set.iter() {
            out.push(named(format!("{}{}", prefix, e.name), e.tensor.clone()));
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError::Header(msg.into())
}

fn find<'a>(ts: &'a [NamedTensor], name: &str) -> Result<&'a [f64], FormatError> {
    ts.iter()
        .find(|t| t.name == name)
        .map(|t| t.tensor.data())
        .ok_or_else(|| FormatError::MissingField(name.to_string()))
}

fn exact_usize(x: f64, what: &str) -> Result<usize, FormatError> {
    if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(bad(format!("{} holds {}, not a 32-bit count", what, x)))
    }
}

fn exact_u64(lo: f64, hi: f64, what: &str) -> Result<u64, FormatError> {
    Ok(exact_usize(lo, what)? as u64 | (exact_usize(hi, what)? as u64) << 32)
}

fn index_list(ts: &[NamedTensor], name: &str) -> Result<Vec<usize>, FormatError> {
    find(ts, name)?.iter().map(|&x| exact_usize(x, name)).collect()
}

pub fn checkpoint_from_tensors(ts: &[NamedTensor]) -> Result<Checkpoint, FormatError> {
    let vid = exact_usize(*find(ts, "meta.variant")?.first().ok_or_else(|| bad("empty meta.variant"))?, "meta.variant")?;
    let variant = *Variant::ALL.get(vid).ok_or_else(|| bad(format!("unknown variant index {}", vid)))?;
    let m = find(ts, "meta.model")?;
    if m.len() != 10 {
        return Err(bad(format!("meta.model has {} entries, expected 10", m.len())));
    }
    let u = |i: usize| exact_usize(m[i], "meta.model");
    let mut config = ModelConfig::new(u(0)?, u(1)?, u(2)?);
    config.heads = u(3)?;
    config.queries = u(4)?;
    config.rank = u(5)?;
    config.channels = u(6)?;
    config.log_sigma_min = m[7];
    config.log_sigma_max = m[8];
    config.gate_bias = m[9];
    let edges = index_list(ts, "meta.topology.edges")?;
    if edges.len() % 2 != 0 {
        return Err(bad("meta.topology.edges has an odd length"));
    }
    let topology = Topology::new(
        config.k,
        edges.chunks_exact(2).map(|p| (p[0], p[1])).collect(),
        index_list(ts, "meta.topology.roi")?,
        index_list(ts, "meta.topology.hands")?,
        index_list(ts, "meta.topology.head")?,
    )
    .map_err(|e| bad(e.to_string()))?;
    let arch = Architecture::new(config, variant, topology).map_err(|e| bad(e.to_string()))?;

    let p = find(ts, "meta.progress")?;
    let r = find(ts, "meta.rng")?;
    if p.len() != 4 || r.len() != 8 {
        return Err(bad("malformed meta.progress or meta.rng"));
    }
    let rng = RngState {
        seed: exact_u64(r[0], r[1], "meta.rng")?,
        stream: exact_u64(r[2], r[3], "meta.rng")?,
        word_pos: exact_u64(r[4], r[5], "meta.rng")? as u128 | (exact_u64(r[6], r[7], "meta.rng")? as u128) << 64,
    };
    let corpus_id = find(ts, "meta.corpus_id")?
        .iter()
        .map(|&b| u8::try_from(exact_usize(b, "meta.corpus_id")?).map_err(|_| bad("meta.corpus_id byte out of range")))
        .collect::<Result<Vec<u8>, _>>()?;
    let corpus_id = String::from_utf8(corpus_id).map_err(|_| bad("meta.corpus_id is not UTF-8"))?;

    let trainable = find(ts, "meta.trainable")?;
    let mut params = ParameterSet::new();
    let mut m_set = ParameterSet::new();
    let mut v_set = ParameterSet::new();
    for t in ts {
        let (set, name) = if let Some(n) = t.name.strip_prefix("param.") {
            (&mut params, n)
        } else if let Some(n) = t.name.strip_prefix("adam.m.") {
            (&mut m_set, n)
        } else if let Some(n) = t.name.strip_prefix("adam.v.") {
            (&mut v_set, n)
        } else {
            continue;
        };
        let i = set.len();
        let flag = *trainable.get(i).ok_or_else(|| bad("meta.trainable is shorter than the parameter list"))?;
        set.insert(name, t.tensor.clone(), flag != 0.0).map_err(|e| bad(e.to_string()))?;
    }
    if params.len() != trainable.len() {
        return Err(bad(format!("{} parameters but {} trainable flags", params.len(), trainable.len())));
    }
    let expected = arch.init_params(0).map_err(|e| bad(e.to_string()))?;
    for set in [&params, &m_set, &v_set] {
        expected.check_layout(set).map_err(|e| bad(e.to_string()))?;
    }
    Ok(Checkpoint {
        arch,
        params,
        moments: Moments { m: m_set, v: v_set },
        step: exact_u64(p[0], p[1], "meta.progress")?,
        epoch: exact_usize(p[2], "meta.progress")?,
        rng,
        val_metric: p[3],
        corpus_id,
    })
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>, FormatError> {
    encode_tensors(&checkpoint_tensors(ck))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    checkpoint_from_tensors(&decode_tensors(bytes)?)
}

/// Writes the checkpoint and returns the SHA-256 of the file.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<String> {
    let bytes = encode_checkpoint(ck).map_err(|e| Error::format(path, e))?;
    error::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Reads a checkpoint and the SHA-256 of its file.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    let bytes = error::read(path)?;
    let ck = decode_checkpoint(&bytes).map_err(|e| Error::format(path, e))?;
    Ok((ck, sha256_hex(&bytes)))
}
