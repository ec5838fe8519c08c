use crate::backbone::Backbone;
use crate::params::ParamStore;
use crate::prompt::PromptInstance;
use crate::vocab::Vocab;
use crate::{ModelError, Result};
use argmine_core::corpus::SerializedThread;
use argmine_core::crf::{nll_with_grad, EmissionMatrix, TransitionTable};
use argmine_core::labels::Schema;
use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

fn to_f64(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_vec1::<f32>()?.into_iter().map(f64::from).collect())
}

fn from_f64(v: &[f64], shape: &[usize]) -> Result<Tensor> {
    let v: Vec<f32> = v.iter().map(|&x| x as f32).collect();
    Ok(Tensor::from_vec(v, shape, &Device::Cpu)?)
}

/// Per-token projection to BIO label scores plus CRF potentials.
#[derive(Debug, Clone)]
pub struct AciHead {
    pub schema: Schema,
    params: ParamStore,
}

impl AciHead {
    pub fn new(hidden: usize, schema: Schema, seed: u64) -> Result<Self> {
        let l = schema.label_count();
        let mut p = ParamStore::new(seed);
        p.glorot("aci.proj.w", hidden, l)?;
        p.constant("aci.proj.b", &[l], 0.0)?;
        p.constant("aci.crf.trans", &[l, l], 0.0)?;
        p.constant("aci.crf.start", &[l], 0.0)?;
        p.constant("aci.crf.end", &[l], 0.0)?;
        Ok(Self { schema, params: p })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn labels(&self) -> Result<usize> {
        Ok(self.params.tensor("aci.proj.b")?.dims1()?)
    }

    pub fn check(&self, schema: Schema) -> Result<()> {
        let l = self.labels()?;
        if l != schema.label_count() {
            return Err(ModelError::Config(format!(
                "head has {l} labels but schema {schema} needs {}",
                schema.label_count()
            )));
        }
        Ok(())
    }

    /// `[len, labels]` emission scores.
    pub fn emissions(&self, hidden: &Tensor) -> Result<Tensor> {
        Ok(hidden.matmul(&self.params.tensor("aci.proj.w")?)?.broadcast_add(&self.params.tensor("aci.proj.b")?)?)
    }

    /// Current CRF potentials under the schema's BIO mask.
    pub fn transitions(&self) -> Result<TransitionTable> {
        let mut t = TransitionTable::bio(self.schema);
        t.trans = to_f64(&self.params.tensor("aci.crf.trans")?)?;
        t.start = to_f64(&self.params.tensor("aci.crf.start")?)?;
        t.end = to_f64(&self.params.tensor("aci.crf.end")?)?;
        Ok(t)
    }
}

pub fn emission_matrix(em: &Tensor) -> Result<EmissionMatrix> {
    let (n, l) = em.dims2()?;
    Ok(EmissionMatrix::new(n, l, to_f64(em)?)?)
}

/// Emissions for a serialized thread.
pub fn aci_forward(b: &dyn Backbone, vocab: &Vocab, head: &AciHead, st: &SerializedThread) -> Result<EmissionMatrix> {
    head.check(head.schema)?;
    let h = b.encode(&vocab.ids(&st.tokens), &st.global_attention)?;
    emission_matrix(&head.emissions(&h)?)
}

/// CRF negative log-likelihood of `gold`, and a scalar tensor whose
/// gradient equals the likelihood gradient w.r.t. backbone and head.
pub fn aci_loss(b: &dyn Backbone, head: &AciHead, ids: &[u32], global: &[bool], gold: &[usize]) -> Result<(f64, Tensor)> {
    let h = b.encode(ids, global)?;
    let em = head.emissions(&h)?;
    let e = emission_matrix(&em)?;
    let t = head.transitions()?;
    let (loss, g) = nll_with_grad(&e, &t, gold)?;
    let l = t.labels;
    let p = &head.params;
    let surrogate = ((em * from_f64(&g.emissions, &[e.len, l])?)?.sum_all()?
        + (p.tensor("aci.crf.trans")? * from_f64(&g.trans, &[l, l])?)?.sum_all()?)?;
    let surrogate = ((surrogate + (p.tensor("aci.crf.start")? * from_f64(&g.start, &[l])?)?.sum_all()?)?
        + (p.tensor("aci.crf.end")? * from_f64(&g.end, &[l])?)?.sum_all()?)?;
    Ok((loss, surrogate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtpMode {
    /// Concatenated encoder vectors at `k` mask positions.
    Prompt { k: usize },
    /// Concatenated mean vectors of the two components.
    MeanPool,
}

#[derive(Debug, Clone)]
pub struct RtpHead {
    pub mode: RtpMode,
    pub classes: Vec<String>,
    params: ParamStore,
}

pub enum RtpInput<'a> {
    Prompt(&'a PromptInstance),
    /// Token ranges of the referred-to and the referring component.
    MeanPool { thread: &'a SerializedThread, first: (usize, usize), second: (usize, usize) },
}

impl RtpHead {
    pub fn new(hidden: usize, mode: RtpMode, classes: Vec<String>, seed: u64) -> Result<Self> {
        let input = match mode {
            RtpMode::Prompt { k } if k > 0 => k * hidden,
            RtpMode::Prompt { .. } => return Err(ModelError::Config("prompt head needs k > 0".into())),
            RtpMode::MeanPool => 2 * hidden,
        };
        let mut p = ParamStore::new(seed);
        p.glorot("rtp.w", input, classes.len())?;
        p.constant("rtp.b", &[classes.len()], 0.0)?;
        Ok(Self { mode, classes, params: p })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn input_dim(&self) -> Result<usize> {
        Ok(self.params.tensor("rtp.w")?.dims2()?.0)
    }

    fn affine(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.params.tensor("rtp.w")?)?.broadcast_add(&self.params.tensor("rtp.b")?)?;
        Ok(y.squeeze(0)?)
    }
}

/// Class scores `[classes]` for one relation instance.
pub fn rtp_forward(b: &dyn Backbone, vocab: &Vocab, head: &RtpHead, input: &RtpInput) -> Result<Tensor> {
    match (head.mode, input) {
        (RtpMode::Prompt { k }, RtpInput::Prompt(inst)) => {
            let n = inst.len();
            if inst.mask_positions.len() != k || inst.mask_positions.iter().any(|&m| m >= n) {
                return Err(ModelError::Config(format!(
                    "mask positions {:?} do not fit a {k}-mask head over {n} tokens",
                    inst.mask_positions
                )));
            }
            let h = b.encode(&vocab.ids(&inst.tokens()), &inst.global())?;
            let idx: Vec<u32> = inst.mask_positions.iter().map(|&m| m as u32).collect();
            let rows = h.index_select(&Tensor::from_vec(idx, k, &Device::Cpu)?, 0)?;
            head.affine(&rows.reshape((1, k * b.config().hidden))?)
        }
        (RtpMode::MeanPool, RtpInput::MeanPool { thread, first, second }) => {
            let h = b.encode(&vocab.ids(&thread.tokens), &thread.global_attention)?;
            let n = thread.len();
            let mean = |(s, e): (usize, usize)| -> Result<Tensor> {
                if s >= e || e > n {
                    return Err(ModelError::Config(format!("component range ({s}, {e}) outside {n} tokens")));
                }
                Ok(h.narrow(0, s, e - s)?.mean_keepdim(0)?)
            };
            head.affine(&Tensor::cat(&[mean(*first)?, mean(*second)?], 1)?)
        }
        _ => Err(ModelError::Config("relation head mode does not match the instance kind".into())),
    }
}
