//! On-disk corpus: a `DWM1` binary blob plus a key/value manifest.
//!
//! Blob layout, all integers little-endian:
//!
//! ```text
//! "DWM1"
//! u32 version (1), num_clips, T, T_obs, V, D, K
//! per clip:
//!   coords    T*K*2 f32
//!   mask      T*K   u8
//!   internal  T*D   f32
//!   external  T*V*D f32
//!   labels    4     u8   (dbr, der, tcr, vcr)
//!   frame     2     u32  (W, H)
//! ```
//!
//! Clip ids, splits and the corpus identity live in the manifest; clips are
//! stored in manifest `clip_ids` order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use driver_wm_core::data::{
    sha256_hex, Clip, Corpus, CorpusManifest, FeatureSequence, LabelSet, SkeletonSequence, Splits,
};

use crate::binary::{put_f32s, put_u32, to_u32, Reader};
use crate::error::{self, Error, FormatError, Result};
use crate::kv;

pub const MAGIC: [u8; 4] = *b"DWM1";
pub const VERSION: u32 = 1;
pub const BLOB_FILE: &str = "corpus.dwm";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn encode_blob(corpus: &Corpus) -> Result<Vec<u8>, FormatError> {
    let m = &corpus.manifest;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32(corpus.clips.len(), "num_clips")?);
    for (what, x) in [("T", m.t), ("T_obs", m.t_obs), ("V", m.v), ("D", m.d), ("K", m.k)] {
        put_u32(&mut out, to_u32(x, what)?);
    }
    for c in &corpus.clips {
        if (c.t, c.t_obs, c.v(), c.d(), c.k) != (m.t, m.t_obs, m.v, m.d, m.k) {
            return Err(FormatError::Header(format!("clip {} does not match the corpus shape", c.id)));
        }
        put_f32s(&mut out, &c.skeleton.coords);
        out.extend_from_slice(&c.skeleton.mask);
        put_f32s(&mut out, &c.features.internal);
        put_f32s(&mut out, &c.features.external);
        let l = &c.labels;
        out.extend_from_slice(&[l.dbr, l.der, l.tcr, l.vcr]);
        put_u32(&mut out, c.skeleton.frame.0);
        put_u32(&mut out, c.skeleton.frame.1);
    }
    Ok(out)
}

/// Decodes a blob, naming clips from `manifest` and checking that both agree
/// on every shape.
pub fn decode_blob(bytes: &[u8], manifest: &CorpusManifest) -> Result<Vec<Clip>, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let n = r.u32("header")? as usize;
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        *d = r.u32("header")? as usize;
    }
    let [t, t_obs, v, d, k] = dims;
    let m = manifest;
    if (n, t, t_obs, v, d, k) != (m.clip_ids.len(), m.t, m.t_obs, m.v, m.d, m.k) {
        return Err(FormatError::Header(format!(
            "blob header (clips {}, T {}, T_obs {}, V {}, D {}, K {}) disagrees with the manifest \
             (clips {}, T {}, T_obs {}, V {}, D {}, K {})",
            n, t, t_obs, v, d, k, m.clip_ids.len(), m.t, m.t_obs, m.v, m.d, m.k
        )));
    }
    if t_obs == 0 || t_obs >= t || v == 0 || d == 0 || k == 0 {
        return Err(FormatError::Header(format!("invalid shape T {} T_obs {} V {} D {} K {}", t, t_obs, v, d, k)));
    }
    let mut clips = Vec::with_capacity(n);
    for id in &m.clip_ids {
        let what = |part: &str| format!("clip {} {}", id, part);
        let coords = r.f32s(t * k * 2, &what("coords"))?;
        let mask = r.u8s(t * k, &what("mask"))?;
        let internal = r.f32s(t * d, &what("internal features"))?;
        let external = r.f32s(t * v * d, &what("external features"))?;
        let l = r.u8s(4, &what("labels"))?;
        let frame = (r.u32(&what("frame"))?, r.u32(&what("frame"))?);
        let clip = Clip {
            id: id.clone(),
            t,
            t_obs,
            k,
            skeleton: SkeletonSequence { coords, mask, frame },
            features: FeatureSequence { internal, external, d, v },
            labels: LabelSet {
                dbr: l[0],
                der: l[1],
                tcr: l[2],
                vcr: l[3],
            },
        };
        clip.validate().map_err(|e| FormatError::Header(e.to_string()))?;
        clips.push(clip);
    }
    r.finish()?;
    Ok(clips)
}

pub fn manifest_text(m: &CorpusManifest) -> String {
    let mut s = String::from("# driver-wm corpus manifest\n");
    let _ = writeln!(s, "format = {}", VERSION);
    let _ = writeln!(s, "corpus_id = {}", m.corpus_id);
    let _ = writeln!(s, "config_hash = {}", m.config_hash);
    let _ = writeln!(s, "seed = {}", m.seed);
    let _ = writeln!(s, "t = {}", m.t);
    let _ = writeln!(s, "t_obs = {}", m.t_obs);
    let _ = writeln!(s, "v = {}", m.v);
    let _ = writeln!(s, "d = {}", m.d);
    let _ = writeln!(s, "k = {}", m.k);
    let _ = writeln!(s, "num_clips = {}", m.clip_ids.len());
    let _ = writeln!(s, "clip_ids = {}", m.clip_ids.join(" "));
    let _ = writeln!(s, "train = {}", m.splits.train.join(" "));
    let _ = writeln!(s, "val = {}", m.splits.val.join(" "));
    let _ = writeln!(s, "test = {}", m.splits.test.join(" "));
    s
}

pub fn parse_manifest(text: &str) -> Result<CorpusManifest, FormatError> {
    let e = kv::parse(text)?;
    let format: u32 = kv::field(&e, "format")?;
    if format != VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: format,
            supported: VERSION,
        });
    }
    let clip_ids = kv::words(&e, "clip_ids")?;
    let num: usize = kv::field(&e, "num_clips")?;
    if num != clip_ids.len() {
        return Err(FormatError::Header(format!("num_clips = {} but {} ids listed", num, clip_ids.len())));
    }
    let manifest = CorpusManifest {
        corpus_id: kv::field(&e, "corpus_id")?,
        config_hash: kv::field(&e, "config_hash")?,
        seed: kv::field(&e, "seed")?,
        t: kv::field(&e, "t")?,
        t_obs: kv::field(&e, "t_obs")?,
        v: kv::field(&e, "v")?,
        d: kv::field(&e, "d")?,
        k: kv::field(&e, "k")?,
        clip_ids,
        splits: Splits {
            train: kv::words(&e, "train")?,
            val: kv::words(&e, "val")?,
            test: kv::words(&e, "test")?,
        },
    };
    manifest.check_splits().map_err(|err| FormatError::Header(err.to_string()))?;
    Ok(manifest)
}

/// A corpus read from disk together with the SHA-256 of its blob.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub blob_sha256: String,
}

pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<String> {
    let blob = encode_blob(corpus).map_err(|e| Error::format(dir, e))?;
    error::write(&dir.join(BLOB_FILE), &blob)?;
    error::write(&dir.join(MANIFEST_FILE), manifest_text(&corpus.manifest))?;
    Ok(sha256_hex(&blob))
}

pub fn load_corpus(dir: &Path) -> Result<LoadedCorpus> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest = parse_manifest(&error::read_text(&mpath)?).map_err(|e| Error::format(&mpath, e))?;
    let bpath: PathBuf = dir.join(BLOB_FILE);
    let blob = error::read(&bpath)?;
    let clips = decode_blob(&blob, &manifest).map_err(|e| Error::format(&bpath, e))?;
    Ok(LoadedCorpus {
        corpus: Corpus { clips, manifest },
        blob_sha256: sha256_hex(&blob),
    })
}
