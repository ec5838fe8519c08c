use crate::params::ParamStore;
use crate::{ModelError, Result};
use argmine_core::corpus::{SerializedThread, SpecialFlag};
use candle_core::{Device, Tensor, D};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Dense,
    /// Local window plus tokens flagged as global.
    WindowedGlobal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_positions: usize,
    pub attention: AttentionMode,
    pub window_size: usize,
    pub seed: u64,
}

impl BackboneConfig {
    /// Two layers, hidden 64, four heads, dense attention.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff: 256,
            max_positions: 4096,
            attention: AttentionMode::Dense,
            window_size: 512,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.vocab_size == 0 || self.hidden == 0 || self.layers == 0 || self.heads == 0 || self.ff == 0 {
            return bad("backbone sizes must be positive");
        }
        if self.hidden % self.heads != 0 {
            return bad("hidden size must be divisible by the head count");
        }
        if self.max_positions == 0 || self.window_size == 0 {
            return bad("max_positions and window_size must be positive");
        }
        Ok(())
    }
}

/// Per-token contextual encoder with an MLM output head.
pub trait Backbone {
    fn config(&self) -> &BackboneConfig;
    /// `[len, hidden]` vectors for token ids.
    fn encode(&self, ids: &[u32], global: &[bool]) -> Result<Tensor>;
    /// `[len, vocab]` scores for encoder vectors.
    fn mlm_logits(&self, hidden: &Tensor) -> Result<Tensor>;
    fn params(&self) -> &ParamStore;
}

/// Additive attention mask: row `i` may attend to `j` iff
/// `|i - j| < window` or either token is global (dense mode allows all).
pub fn attention_mask(global: &[bool], mode: AttentionMode, window: usize) -> Vec<f32> {
    let n = global.len();
    let mut m = vec![0f32; n * n];
    if mode == AttentionMode::WindowedGlobal {
        for i in 0..n {
            for j in 0..n {
                let near = i.abs_diff(j) < window;
                if !(near || global[i] || global[j]) {
                    m[i * n + j] = -1e9;
                }
            }
        }
    }
    m
}

fn sinusoidal(n: usize, hidden: usize) -> Vec<f32> {
    let mut t = vec![0f32; n * hidden];
    for p in 0..n {
        for i in 0..hidden / 2 {
            let freq = (10000f64).powf(-2.0 * i as f64 / hidden as f64);
            let a = p as f64 * freq;
            t[p * hidden + 2 * i] = a.sin() as f32;
            t[p * hidden + 2 * i + 1] = a.cos() as f32;
        }
    }
    t
}

pub(crate) fn layer_norm(x: &Tensor, g: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let xc = x.broadcast_sub(&mean)?;
    let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
    let xn = xc.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
    Ok(xn.broadcast_mul(g)?.broadcast_add(b)?)
}

pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&m)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub(crate) fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let xc = x.broadcast_sub(&m)?;
    let lse = xc.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(xc.broadcast_sub(&lse)?)
}

/// Small pre-norm transformer encoder with sinusoidal positions and an
/// MLM head tied to the input embeddings.
#[derive(Debug, Clone)]
pub struct ToyTransformer {
    cfg: BackboneConfig,
    params: ParamStore,
}

impl ToyTransformer {
    pub fn new(cfg: BackboneConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, f) = (cfg.hidden, cfg.ff);
        let mut p = ParamStore::new(cfg.seed);
        p.uniform("emb", &[cfg.vocab_size, h], 0.1)?;
        for l in 0..cfg.layers {
            for n in ["wq", "wk", "wv", "wo"] {
                p.glorot(&format!("l{l}.{n}"), h, h)?;
            }
            for n in ["bq", "bk", "bv", "bo", "ln1.b", "ln2.b", "b2"] {
                p.constant(&format!("l{l}.{n}"), &[h], 0.0)?;
            }
            p.constant(&format!("l{l}.ln1.g"), &[h], 1.0)?;
            p.constant(&format!("l{l}.ln2.g"), &[h], 1.0)?;
            p.glorot(&format!("l{l}.w1"), h, f)?;
            p.constant(&format!("l{l}.b1"), &[f], 0.0)?;
            p.glorot(&format!("l{l}.w2"), f, h)?;
        }
        p.constant("lnf.g", &[h], 1.0)?;
        p.constant("lnf.b", &[h], 0.0)?;
        p.constant("mlm.b", &[cfg.vocab_size], 0.0)?;
        Ok(Self { cfg, params: p })
    }

    /// A copy with its own parameter storage.
    pub fn deep_clone(&self) -> Result<Self> {
        Ok(Self { cfg: self.cfg.clone(), params: self.params.deep_clone()? })
    }

    fn t(&self, name: &str) -> Result<Tensor> {
        self.params.tensor(name)
    }

    fn attention(&self, l: usize, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (n, h) = x.dims2()?;
        let heads = self.cfg.heads;
        let d = h / heads;
        let proj = |w: &str, b: &str| -> Result<Tensor> {
            let y = x.matmul(&self.t(&format!("l{l}.{w}"))?)?.broadcast_add(&self.t(&format!("l{l}.{b}"))?)?;
            Ok(y.reshape((n, heads, d))?.transpose(0, 1)?.contiguous()?)
        };
        let q = proj("wq", "bq")?;
        let k = proj("wk", "bk")?;
        let v = proj("wv", "bv")?;
        let scores = (q.matmul(&k.transpose(1, 2)?.contiguous()?)? * (1.0 / (d as f64).sqrt()))?;
        let att = softmax_last(&scores.broadcast_add(mask)?)?;
        let o = att.matmul(&v)?.transpose(0, 1)?.contiguous()?.reshape((n, h))?;
        Ok(o.matmul(&self.t(&format!("l{l}.wo"))?)?.broadcast_add(&self.t(&format!("l{l}.bo"))?)?)
    }
}

impl Backbone for ToyTransformer {
    fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    fn encode(&self, ids: &[u32], global: &[bool]) -> Result<Tensor> {
        let n = ids.len();
        if n == 0 {
            return Err(ModelError::Config("empty input".into()));
        }
        if n > self.cfg.max_positions {
            return Err(ModelError::Config(format!("{n} tokens exceed max_positions {}", self.cfg.max_positions)));
        }
        if global.len() != n {
            return Err(ModelError::Config("global flags do not match input length".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.cfg.vocab_size) {
            return Err(ModelError::Config(format!("token id {bad} outside vocabulary")));
        }
        let dev = Device::Cpu;
        let h = self.cfg.hidden;
        let ids_t = Tensor::from_vec(ids.to_vec(), n, &dev)?;
        let pos = Tensor::from_vec(sinusoidal(n, h), (n, h), &dev)?;
        let mut x = (self.t("emb")?.index_select(&ids_t, 0)? + pos)?;
        let mask = Tensor::from_vec(attention_mask(global, self.cfg.attention, self.cfg.window_size), (n, n), &dev)?;
        for l in 0..self.cfg.layers {
            let a = layer_norm(&x, &self.t(&format!("l{l}.ln1.g"))?, &self.t(&format!("l{l}.ln1.b"))?)?;
            x = (&x + self.attention(l, &a, &mask)?)?;
            let a = layer_norm(&x, &self.t(&format!("l{l}.ln2.g"))?, &self.t(&format!("l{l}.ln2.b"))?)?;
            let ff = a
                .matmul(&self.t(&format!("l{l}.w1"))?)?
                .broadcast_add(&self.t(&format!("l{l}.b1"))?)?
                .gelu()?
                .matmul(&self.t(&format!("l{l}.w2"))?)?
                .broadcast_add(&self.t(&format!("l{l}.b2"))?)?;
            x = (&x + ff)?;
        }
        layer_norm(&x, &self.t("lnf.g")?, &self.t("lnf.b")?)
    }

    fn mlm_logits(&self, hidden: &Tensor) -> Result<Tensor> {
        Ok(hidden.matmul(&self.t("emb")?.t()?)?.broadcast_add(&self.t("mlm.b")?)?)
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalPolicy {
    UserTokens,
    None,
}

impl std::str::FromStr for GlobalPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "user_tokens" | "user-tokens" => Ok(Self::UserTokens),
            "none" => Ok(Self::None),
            _ => Err(format!("unknown global attention policy {s:?}")),
        }
    }
}

/// Copy of `st` with global attention set on USER tokens or nowhere.
pub fn set_global_attention(st: &SerializedThread, policy: GlobalPolicy) -> SerializedThread {
    let mut out = st.clone();
    out.global_attention = st
        .special_flags
        .iter()
        .map(|f| policy == GlobalPolicy::UserTokens && *f == SpecialFlag::User)
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: AttentionMode, window: usize) -> ToyTransformer {
        let cfg = BackboneConfig {
            hidden: 8,
            heads: 2,
            ff: 16,
            attention: mode,
            window_size: window,
            ..BackboneConfig::toy(20)
        };
        ToyTransformer::new(cfg).unwrap()
    }

    #[test]
    fn shapes_and_determinism() {
        let m = small(AttentionMode::Dense, 512);
        let ids = [1u32, 5, 7, 2, 9];
        let h = m.encode(&ids, &[false; 5]).unwrap();
        assert_eq!(h.dims(), [5, 8]);
        assert_eq!(m.mlm_logits(&h).unwrap().dims(), [5, 20]);
        let again = small(AttentionMode::Dense, 512).encode(&ids, &[false; 5]).unwrap();
        assert_eq!(h.to_vec2::<f32>().unwrap(), again.to_vec2::<f32>().unwrap());
    }

    #[test]
    fn windowed_equals_dense_below_window() {
        let ids = [3u32, 4, 5, 6, 7, 8];
        let g = [true, false, false, true, false, false];
        let a = small(AttentionMode::Dense, 512).encode(&ids, &g).unwrap();
        let b = small(AttentionMode::WindowedGlobal, 512).encode(&ids, &g).unwrap();
        let diff = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(diff < 1e-5);
    }

    #[test]
    fn window_mask_shape() {
        let m = attention_mask(&[false, false, false, true, false], AttentionMode::WindowedGlobal, 2);
        let allowed: Vec<Vec<bool>> = (0..5).map(|i| (0..5).map(|j| m[i * 5 + j] == 0.0).collect()).collect();
        assert_eq!(allowed[0], [true, true, false, true, false]);
        assert_eq!(allowed[3], [true; 5]);
        assert_eq!(allowed[4], [false, false, false, true, true]);
    }

    #[test]
    fn limits() {
        let m = small(AttentionMode::Dense, 4);
        assert!(m.encode(&[], &[]).is_err());
        assert!(m.encode(&[99], &[false]).is_err());
    }
}
