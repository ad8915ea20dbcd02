//! Run configuration: a key=value text file plus flag overrides. Every
//! hyperparameter is a named key with its default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegnnError};
use crate::train::NegMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    // Dataset paths.
    pub kg1_triples: String,
    pub kg1_ent_ids: String,
    pub kg1_rel_ids: String,
    pub kg2_triples: String,
    pub kg2_ent_ids: String,
    pub kg2_rel_ids: String,
    pub sem1: String,
    pub sem2: String,
    pub reference: String,
    pub out_dir: String,

    // Model.
    pub dim: usize,
    pub sem_dim: usize,
    pub depth: usize,
    pub q: usize,
    pub k: usize,

    // Seed expansion.
    pub epsilon: f64,
    pub theta_sem: f64,

    // TNECS.
    pub theta_fin: f64,
    pub interval: usize,
    pub max_updates: usize,
    pub cumulative_seeds: bool,
    pub embedding_correction: bool,
    /// 0 means "same as interval".
    pub final_epochs: usize,

    // Training.
    pub lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub neg_mode: NegMode,
    pub rng_seed: u64,
    pub eval_every: usize,
    pub patience: usize,

    // Splits and evaluation.
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub raw_cosine_eval: bool,
    pub eval_mean_direction: bool,
    /// Drop pre-aligned training entities from the ranking candidates.
    pub exclude_seed_candidates: bool,

    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kg1_triples: "kg1_triples.txt".into(),
            kg1_ent_ids: "kg1_ent_ids.txt".into(),
            kg1_rel_ids: "kg1_rel_ids.txt".into(),
            kg2_triples: "kg2_triples.txt".into(),
            kg2_ent_ids: "kg2_ent_ids.txt".into(),
            kg2_rel_ids: "kg2_rel_ids.txt".into(),
            sem1: "sem1.txt".into(),
            sem2: "sem2.txt".into(),
            reference: "reference_pairs.txt".into(),
            out_dir: "out".into(),
            dim: 100,
            sem_dim: 32,
            depth: 2,
            q: 15,
            k: 15,
            epsilon: 0.5,
            theta_sem: 0.01,
            theta_fin: 0.05,
            interval: 30,
            max_updates: 3,
            cumulative_seeds: false,
            embedding_correction: true,
            final_epochs: 0,
            lr: 0.01,
            gamma: 2.0,
            lambda: 1.0,
            neg_mode: NegMode::Sampled(256),
            rng_seed: 0,
            eval_every: 10,
            patience: 10,
            train_frac: 0.3,
            valid_frac: 0.1,
            test_frac: 0.6,
            raw_cosine_eval: false,
            eval_mean_direction: false,
            exclude_seed_candidates: false,
            threads: 0,
        }
    }
}

fn neg_mode_to_string(m: NegMode) -> String {
    match m {
        NegMode::Full => "full".to_string(),
        NegMode::Sampled(n) => format!("sampled:{n}"),
    }
}

fn neg_mode_from_string(s: &str) -> Result<NegMode> {
    if s == "full" {
        return Ok(NegMode::Full);
    }
    if let Some(n) = s.strip_prefix("sampled:") {
        let n: usize = n
            .parse()
            .map_err(|_| SegnnError::Config(format!("bad neg_mode '{s}'")))?;
        if n == 0 {
            return Err(SegnnError::Config("sampled negative count must be >= 1".into()));
        }
        return Ok(NegMode::Sampled(n));
    }
    Err(SegnnError::Config(format!(
        "neg_mode must be 'full' or 'sampled:N', got '{s}'"
    )))
}

impl RunConfig {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut w = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        w("kg1_triples", self.kg1_triples.clone());
        w("kg1_ent_ids", self.kg1_ent_ids.clone());
        w("kg1_rel_ids", self.kg1_rel_ids.clone());
        w("kg2_triples", self.kg2_triples.clone());
        w("kg2_ent_ids", self.kg2_ent_ids.clone());
        w("kg2_rel_ids", self.kg2_rel_ids.clone());
        w("sem1", self.sem1.clone());
        w("sem2", self.sem2.clone());
        w("reference", self.reference.clone());
        w("out_dir", self.out_dir.clone());
        w("dim", self.dim.to_string());
        w("sem_dim", self.sem_dim.to_string());
        w("depth", self.depth.to_string());
        w("q", self.q.to_string());
        w("k", self.k.to_string());
        w("epsilon", self.epsilon.to_string());
        w("theta_sem", self.theta_sem.to_string());
        w("theta_fin", self.theta_fin.to_string());
        w("interval", self.interval.to_string());
        w("max_updates", self.max_updates.to_string());
        w("cumulative_seeds", self.cumulative_seeds.to_string());
        w("embedding_correction", self.embedding_correction.to_string());
        w("final_epochs", self.final_epochs.to_string());
        w("lr", self.lr.to_string());
        w("gamma", self.gamma.to_string());
        w("lambda", self.lambda.to_string());
        w("neg_mode", neg_mode_to_string(self.neg_mode));
        w("rng_seed", self.rng_seed.to_string());
        w("eval_every", self.eval_every.to_string());
        w("patience", self.patience.to_string());
        w("train_frac", self.train_frac.to_string());
        w("valid_frac", self.valid_frac.to_string());
        w("test_frac", self.test_frac.to_string());
        w("raw_cosine_eval", self.raw_cosine_eval.to_string());
        w("eval_mean_direction", self.eval_mean_direction.to_string());
        w("exclude_seed_candidates", self.exclude_seed_candidates.to_string());
        w("threads", self.threads.to_string());
        s
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        macro_rules! parse {
            ($t:ty) => {
                v.parse::<$t>()
                    .map_err(|_| SegnnError::Config(format!("bad value '{v}' for key '{key}'")))?
            };
        }
        match key {
            "kg1_triples" => self.kg1_triples = v.to_string(),
            "kg1_ent_ids" => self.kg1_ent_ids = v.to_string(),
            "kg1_rel_ids" => self.kg1_rel_ids = v.to_string(),
            "kg2_triples" => self.kg2_triples = v.to_string(),
            "kg2_ent_ids" => self.kg2_ent_ids = v.to_string(),
            "kg2_rel_ids" => self.kg2_rel_ids = v.to_string(),
            "sem1" => self.sem1 = v.to_string(),
            "sem2" => self.sem2 = v.to_string(),
            "reference" => self.reference = v.to_string(),
            "out_dir" => self.out_dir = v.to_string(),
            "dim" => self.dim = parse!(usize),
            "sem_dim" => self.sem_dim = parse!(usize),
            "depth" => self.depth = parse!(usize),
            "q" => self.q = parse!(usize),
            "k" => self.k = parse!(usize),
            "epsilon" => self.epsilon = parse!(f64),
            "theta_sem" => self.theta_sem = parse!(f64),
            "theta_fin" => self.theta_fin = parse!(f64),
            "interval" => self.interval = parse!(usize),
            "max_updates" => self.max_updates = parse!(usize),
            "cumulative_seeds" => self.cumulative_seeds = parse!(bool),
            "embedding_correction" => self.embedding_correction = parse!(bool),
            "final_epochs" => self.final_epochs = parse!(usize),
            "lr" => self.lr = parse!(f64),
            "gamma" => self.gamma = parse!(f64),
            "lambda" => self.lambda = parse!(f64),
            "neg_mode" => self.neg_mode = neg_mode_from_string(v)?,
            "rng_seed" => self.rng_seed = parse!(u64),
            "eval_every" => self.eval_every = parse!(usize),
            "patience" => self.patience = parse!(usize),
            "train_frac" => self.train_frac = parse!(f64),
            "valid_frac" => self.valid_frac = parse!(f64),
            "test_frac" => self.test_frac = parse!(f64),
            "raw_cosine_eval" => self.raw_cosine_eval = parse!(bool),
            "eval_mean_direction" => self.eval_mean_direction = parse!(bool),
            "exclude_seed_candidates" => self.exclude_seed_candidates = parse!(bool),
            "threads" => self.threads = parse!(usize),
            _ => return Err(SegnnError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                SegnnError::Config(format!("line {}: expected 'key = value'", no + 1))
            })?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_key_values(&text)?;
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .ok_or_else(|| SegnnError::Config(format!("override '{ov}' is not key=value")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(SegnnError::Config("epsilon must be in [0,1]".into()));
        }
        if self.gamma <= 0.0 || self.lambda < 0.0 {
            return Err(SegnnError::Config("gamma must be > 0 and lambda >= 0".into()));
        }
        if self.dim == 0 || self.sem_dim == 0 || self.depth == 0 {
            return Err(SegnnError::Config("dim, sem_dim, depth must be >= 1".into()));
        }
        if self.interval == 0 {
            return Err(SegnnError::Config("interval must be >= 1".into()));
        }
        let s = self.train_frac + self.valid_frac + self.test_frac;
        if self.train_frac < 0.0 || self.valid_frac < 0.0 || self.test_frac < 0.0 || (s - 1.0).abs() > 1e-9 {
            return Err(SegnnError::Config("split fractions must sum to 1".into()));
        }
        Ok(())
    }

    /// Echo of the configuration for report files.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.to_key_values()
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    }
}
