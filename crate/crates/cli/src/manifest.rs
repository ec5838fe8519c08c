//! Experiment manifest: a TOML file naming the corpus, the model and the
//! training regime of a run. Its SHA-256 is stamped into every artifact.

use anyhow::{bail, Context, Result};
use argmine_core::labels::Schema;
use argmine_core::markers::{MarkerLexicon, MaskPolicy};
use argmine_core::synthetic::SynthConfig;
use argmine_model::training::{Granularity, Task, TrainConfig};
use argmine_model::{AttentionMode, BackboneConfig, GlobalPolicy, RtpMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const OUTPUT_DIR_ENV: &str = "ARGMINE_OUTPUT_DIR";
pub const SEED_ENV: &str = "ARGMINE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// Generated in memory from `[corpus.synthetic]`.
    Synthetic,
    /// Post records plus standoff component and relation files.
    Records,
    /// Post records whose bodies carry inline `<claim>`/`<premise>` tags.
    Inline,
    /// A ConvoKit utterance export (unlabeled).
    Convokit,
    /// A directory of brat `.txt`/`.ann` pairs, chunked into posts.
    Brat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub kind: CorpusKind,
    #[serde(default = "cmv")]
    pub schema: Schema,
    pub posts: Option<PathBuf>,
    pub components: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub dir: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: SynthConfig,
}

fn cmv() -> Schema {
    Schema::Cmv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SerializeSection {
    pub max_len: usize,
    pub user_tokens: usize,
    pub global_attention: String,
}

impl Default for SerializeSection {
    fn default() -> Self {
        Self { max_len: 4096, user_tokens: 12, global_attention: "user_tokens".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Train:test ratios such as `"80:20"`.
    pub ratios: Vec<String>,
    pub seeds: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratios: vec!["80:20".into()], seeds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneSection {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_positions: usize,
    pub attention: AttentionMode,
    pub window_size: usize,
    /// Start from this checkpoint's backbone instead of a fresh one.
    pub checkpoint: Option<PathBuf>,
}

impl Default for BackboneSection {
    fn default() -> Self {
        let t = BackboneConfig::toy(1);
        Self {
            hidden: t.hidden,
            layers: t.layers,
            heads: t.heads,
            ff: t.ff,
            max_positions: t.max_positions,
            attention: t.attention,
            window_size: t.window_size,
            checkpoint: None,
        }
    }
}

impl BackboneSection {
    pub fn config(&self, vocab_size: usize, seed: u64) -> BackboneConfig {
        BackboneConfig {
            vocab_size,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ff: self.ff,
            max_positions: self.max_positions,
            attention: self.attention,
            window_size: self.window_size,
            seed,
        }
    }
}

/// Optional overrides of the task defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub granularity: Option<Granularity>,
    pub tokens_per_batch: Option<usize>,
    pub grad_accum: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub checkpoint_every_epoch: Option<bool>,
    pub warmup_steps: Option<usize>,
    pub clip_norm: Option<f64>,
    pub freeze_backbone: Option<bool>,
    pub default_epoch: Option<usize>,
    pub heldout_fraction: Option<f64>,
    pub report_last: Option<usize>,
    /// sMLM only: `selective` or `random15`.
    pub policy: Option<MaskPolicy>,
    /// RTP only.
    pub mode: Option<RtpMode>,
}

impl TrainSection {
    pub fn config(&self, task: Task, seed: u64) -> Result<TrainConfig> {
        let mut c = TrainConfig::defaults(task, self.granularity.unwrap_or(Granularity::Thread));
        c.seed = seed;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(tokens_per_batch, grad_accum, learning_rate, epochs, checkpoint_every_epoch, warmup_steps, freeze_backbone, default_epoch, heldout_fraction, report_last);
        if self.clip_norm.is_some() {
            c.clip_norm = self.clip_norm;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub serialize: SerializeSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub backbone: BackboneSection,
    #[serde(default)]
    pub smlm: TrainSection,
    #[serde(default)]
    pub aci: TrainSection,
    #[serde(default)]
    pub rtp: TrainSection,
}

/// A parsed manifest with its hash; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub manifest: ExperimentManifest,
    pub hash: String,
    pub base: PathBuf,
}

impl Loaded {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &base)
    }

    pub fn from_str(text: &str, base: &Path) -> Result<Self> {
        let manifest: ExperimentManifest = toml::from_str(text).context("parsing manifest")?;
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        let loaded = Self { manifest, hash, base: base.to_path_buf() };
        loaded.check()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Output directory, overridable through the environment.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.resolve(&self.manifest.output_dir),
        }
    }

    /// Explicit flag, then environment, then manifest.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(s) if !s.is_empty() => s.parse().with_context(|| format!("{SEED_ENV}={s:?} is not an integer")),
            _ => Ok(self.manifest.seed),
        }
    }

    pub fn lexicon(&self) -> Result<MarkerLexicon> {
        match &self.manifest.corpus.lexicon {
            Some(p) => {
                let p = self.resolve(p);
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading lexicon {}", p.display()))?;
                Ok(MarkerLexicon::parse(&text)?)
            }
            None => Ok(MarkerLexicon::default()),
        }
    }

    pub fn global_policy(&self) -> Result<GlobalPolicy> {
        self.manifest.serialize.global_attention.parse().map_err(anyhow::Error::msg)
    }

    fn check(&self) -> Result<()> {
        let c = &self.manifest.corpus;
        let need = |name: &str, p: &Option<PathBuf>| -> Result<()> {
            match p {
                None => bail!("corpus kind {:?} needs `{name}`", c.kind),
                Some(p) if !self.resolve(p).exists() => bail!("corpus.{name} {} does not exist", self.resolve(p).display()),
                Some(_) => Ok(()),
            }
        };
        match c.kind {
            CorpusKind::Synthetic => {}
            CorpusKind::Records => {
                need("posts", &c.posts)?;
                need("components", &c.components)?;
                need("relations", &c.relations)?;
            }
            CorpusKind::Inline | CorpusKind::Convokit => need("posts", &c.posts)?,
            CorpusKind::Brat => need("dir", &c.dir)?,
        }
        for p in [&c.lexicon, &self.manifest.backbone.checkpoint].into_iter().flatten() {
            if !self.resolve(p).exists() {
                bail!("{} does not exist", self.resolve(p).display());
            }
        }
        if self.manifest.serialize.max_len == 0 {
            bail!("serialize.max_len must be positive");
        }
        self.global_policy()?;
        for r in &self.manifest.split.ratios {
            argmine_core::corpus::parse_ratio(r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_manifest_gets_defaults() {
        let m = Loaded::from_str("output_dir = \"out\"\n[corpus]\nkind = \"synthetic\"\n", Path::new("/tmp")).unwrap();
        assert_eq!(m.manifest.split.seeds, 5);
        assert_eq!(m.manifest.serialize.max_len, 4096);
        assert_eq!(m.hash.len(), 64);
        let aci = m.manifest.aci.config(Task::Aci, 3).unwrap();
        assert_eq!((aci.learning_rate, aci.grad_accum, aci.epochs, aci.seed), (2e-5, 4, 30, 3));
    }

    #[test]
    fn missing_paths_and_unknown_keys_fail() {
        let base = Path::new("/nonexistent");
        assert!(Loaded::from_str("output_dir = \"o\"\n[corpus]\nkind = \"records\"\n", base).is_err());
        let missing = "output_dir = \"o\"\n[corpus]\nkind = \"inline\"\nposts = \"p.jsonl\"\n";
        assert!(Loaded::from_str(missing, base).is_err());
        assert!(Loaded::from_str("output_dir = \"o\"\nbogus = 1\n[corpus]\nkind = \"synthetic\"\n", base).is_err());
    }

    #[test]
    fn overrides_apply() {
        let text = "output_dir = \"o\"\n[corpus]\nkind = \"synthetic\"\n[smlm]\nepochs = 2\nlearning_rate = 0.001\n";
        let m = Loaded::from_str(text, Path::new("/tmp")).unwrap();
        let c = m.manifest.smlm.config(Task::Smlm, 0).unwrap();
        assert_eq!((c.epochs, c.learning_rate, c.grad_accum), (2, 1e-3, 3));
    }

    #[test]
    fn rtp_mode_spellings() {
        let base = "output_dir = \"o\"\n[corpus]\nkind = \"synthetic\"\n[rtp]\n";
        let m = Loaded::from_str(&format!("{base}mode = {{ prompt = {{ k = 2 }} }}\n"), Path::new("/tmp")).unwrap();
        assert_eq!(m.manifest.rtp.mode, Some(RtpMode::Prompt { k: 2 }));
        let m = Loaded::from_str(&format!("{base}mode = \"mean_pool\"\n"), Path::new("/tmp")).unwrap();
        assert_eq!(m.manifest.rtp.mode, Some(RtpMode::MeanPool));
    }
}
