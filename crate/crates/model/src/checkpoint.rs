//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"AMCK" | u32 version | u64 header length | header (JSON) | f32 payload
//! ```
//!
//! The header carries [`CheckpointMeta`] and a tensor table of
//! `(name, shape, offset, len)`, offsets counted in f32 elements.

use crate::backbone::{BackboneConfig, ToyTransformer};
use crate::heads::{AciHead, RtpHead, RtpMode};
use crate::params::{ParamStore, Snapshot};
use crate::vocab::Vocab;
use crate::{ModelError, Result};
use argmine_core::labels::Schema;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"AMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `backbone`, `aci` or `rtp`.
    pub kind: String,
    pub backbone: BackboneConfig,
    pub vocab: Vocab,
    pub schema: Option<Schema>,
    pub rtp_mode: Option<RtpMode>,
    pub rtp_classes: Option<Vec<String>>,
    pub lexicon_hash: String,
    pub tokenizer_fingerprint: String,
    pub manifest_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub epoch: Option<usize>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Snapshot,
}

pub fn to_bytes(meta: &CheckpointMeta, stores: &[&ParamStore]) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut offset = 0;
    for store in stores {
        for (name, shape, values) in store.snapshot()? {
            tensors.push(TensorEntry { name, shape, offset, len: values.len() });
            offset += values.len();
            for v in values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = serde_json::to_vec(&Header { meta: meta.clone(), tensors })?;
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| ModelError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
    let payload = &bytes[header_end..];
    let mut params = Vec::with_capacity(header.tensors.len());
    for t in header.tensors {
        let (s, e) = (t.offset * 4, (t.offset + t.len) * 4);
        if e > payload.len() || t.shape.iter().product::<usize>() != t.len {
            return Err(ModelError::Checkpoint(format!("tensor {} is inconsistent", t.name)));
        }
        let values = payload[s..e].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        params.push((t.name, t.shape, values));
    }
    Ok(Checkpoint { meta: header.meta, params })
}

pub fn save(path: &Path, meta: &CheckpointMeta, stores: &[&ParamStore]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(meta, stores)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

impl Checkpoint {
    pub fn backbone(&self) -> Result<ToyTransformer> {
        let b = ToyTransformer::new(self.meta.backbone.clone())?;
        crate::backbone::Backbone::params(&b).load(&self.params)?;
        Ok(b)
    }

    pub fn aci_head(&self) -> Result<AciHead> {
        let schema = self.meta.schema.ok_or_else(|| ModelError::Checkpoint("no schema recorded".into()))?;
        let head = AciHead::new(self.meta.backbone.hidden, schema, 0)?;
        head.params().load(&self.params)?;
        Ok(head)
    }

    pub fn rtp_head(&self) -> Result<RtpHead> {
        let (Some(mode), Some(classes)) = (self.meta.rtp_mode, self.meta.rtp_classes.clone()) else {
            return Err(ModelError::Checkpoint("no relation head recorded".into()));
        };
        let head = RtpHead::new(self.meta.backbone.hidden, mode, classes, 0)?;
        head.params().load(&self.params)?;
        Ok(head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::Backbone;

    fn meta(vocab: Vocab, cfg: BackboneConfig) -> CheckpointMeta {
        CheckpointMeta {
            kind: "aci".into(),
            backbone: cfg,
            vocab,
            schema: Some(Schema::Cmv),
            rtp_mode: None,
            rtp_classes: None,
            lexicon_hash: "lex".into(),
            tokenizer_fingerprint: "tok".into(),
            manifest_hash: "man".into(),
            seed: 7,
            code_version: "0.1.0".into(),
            epoch: Some(2),
            extra: serde_json::Value::Null,
        }
    }

    #[test]
    fn roundtrip_and_idempotent_bytes() {
        let vocab = Vocab::from_tokens(Vocab::specials(3));
        let cfg = BackboneConfig { hidden: 8, heads: 2, ff: 8, ..BackboneConfig::toy(vocab.len()) };
        let b = ToyTransformer::new(cfg.clone()).unwrap();
        let head = AciHead::new(8, Schema::Cmv, 3).unwrap();
        let m = meta(vocab, cfg);
        let bytes = to_bytes(&m, &[b.params(), head.params()]).unwrap();
        assert_eq!(bytes, to_bytes(&m, &[b.params(), head.params()]).unwrap());
        assert_eq!(&bytes[..4], MAGIC);
        let ck = from_bytes(&bytes).unwrap();
        assert_eq!(ck.meta, m);
        assert_eq!(ck.backbone().unwrap().params().snapshot().unwrap(), b.params().snapshot().unwrap());
        assert_eq!(ck.aci_head().unwrap().params().snapshot().unwrap(), head.params().snapshot().unwrap());
        assert!(ck.rtp_head().is_err());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(from_bytes(b"nope").is_err());
        let mut bytes = b"AMCK".to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        assert!(from_bytes(&bytes).is_err());
    }
}
