//! Threshold nearest-neighbor embedding correction: periodic seed
//! reselection from final embeddings plus Xavier re-initialization of the
//! trainable entity block.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kg::{Provenance, SeedPair, SeedSet};
use crate::lgam::{forward, xavier_bound, ForwardTrace, HighOrderNeighbors, ModelParams, UnifiedGraph};
use crate::sim::{mutual_nearest_pairs, SimilarityMatrix};
use crate::train::{
    final_similarity_of, train_epochs, validation_hits1, EpochRecord, LossConfig, OptimizerState,
    TrainOptions,
};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TnecsConfig {
    /// Final-embedding similarity threshold.
    pub theta_fin: f64,
    /// Training epochs between corrections.
    pub interval: usize,
    /// Number of correction executions.
    pub max_updates: usize,
    /// CSLS neighbor count for the final similarity matrix.
    pub q: usize,
    /// Seed retention: false = rebuild the potential set each update
    /// (literal union with the pre-aligned set), true = keep previously
    /// selected pairs that are not re-selected.
    pub cumulative: bool,
    /// When false, seeds are still reselected every interval but the
    /// entity block is never re-initialized (ablation switch).
    pub correction: bool,
    /// Length of the training block after the last update; None = interval.
    pub final_epochs: Option<usize>,
}

impl Default for TnecsConfig {
    fn default() -> Self {
        TnecsConfig {
            theta_fin: 0.05,
            interval: 30,
            max_updates: 3,
            q: 15,
            cumulative: false,
            correction: true,
            final_epochs: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: usize,
    pub epoch: usize,
    pub s_o: usize,
    pub s_e: usize,
    pub val_hits1: Option<f64>,
}

/// CSLS-adjusted cosine similarity of final embeddings (G1 rows, G2 cols).
pub fn final_similarity(
    trace: &ForwardTrace,
    graph: &UnifiedGraph,
    q: usize,
) -> Result<SimilarityMatrix> {
    final_similarity_of(trace, graph, q)
}

/// Reselects potential pairs from the final similarity matrix. The
/// bidirectional-nearest-neighbor predicate excludes only pairs whose both
/// endpoints are pre-aligned, and the result unions S_O with the
/// pre-aligned pairs, so non-reselected INIT/ITER pairs drop out unless
/// `cumulative` retention is on.
pub fn optimize_seeds(m_fin: &SimilarityMatrix, cfg: &TnecsConfig, seeds: &SeedSet) -> SeedSet {
    let pre = seeds.pre_only();
    let mut out = pre.clone();
    for (i, j, score) in mutual_nearest_pairs(m_fin, cfg.theta_fin, &pre) {
        out.try_insert(SeedPair {
            e1: i,
            e2: j,
            provenance: Provenance::Iter,
            score,
        });
    }
    if cfg.cumulative {
        for p in seeds.pairs() {
            if p.provenance != Provenance::Pre {
                out.try_insert(*p);
            }
        }
    }
    out
}

/// Re-draws the trainable entity block from Xavier-uniform(-b, b) with
/// b = sqrt(6/(d+d)). Relation embeddings and attention vectors are kept.
pub fn embedding_correction(params: &mut ModelParams, rng_seed: u64) {
    let b = xavier_bound(params.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for v in params.entity_base.data_mut() {
        *v = rng.gen_range(-b..b);
    }
}

/// Algorithm driver: repeat {train `interval` epochs, reselect seeds from
/// final embeddings, correct entity embeddings} `max_updates` times, then
/// train one final block. Returns the final seed set and both histories.
#[allow(clippy::too_many_arguments)]
pub fn run_iterative(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    graph: &UnifiedGraph,
    nbrs: &HighOrderNeighbors,
    seeds: SeedSet,
    loss_cfg: &LossConfig,
    opts: &TrainOptions,
    cfg: &TnecsConfig,
    valid: Option<&[(usize, usize)]>,
    correction_seed: u64,
) -> Result<(SeedSet, Vec<UpdateRecord>, Vec<EpochRecord>)> {
    let mut seeds = seeds;
    let mut epoch_log = Vec::new();
    let mut updates = Vec::new();
    let mut epoch = 0usize;

    for u in 0..cfg.max_updates {
        let h = train_epochs(
            params, state, graph, nbrs, &seeds, loss_cfg, opts, valid, cfg.interval, epoch,
        )?;
        epoch += h.len();
        epoch_log.extend(h);

        let trace = forward(params, graph, nbrs, opts.depth);
        let m_fin = final_similarity(&trace, graph, cfg.q.min(graph.n1.min(graph.n2)).max(1))?;
        seeds = optimize_seeds(&m_fin, cfg, &seeds);
        let val_hits1 = match valid {
            Some(v) if !v.is_empty() => Some(validation_hits1(&trace, graph, v, opts.q)?),
            _ => None,
        };
        updates.push(UpdateRecord {
            update: u,
            epoch,
            s_o: seeds.count_by(Provenance::Iter),
            s_e: seeds.len(),
            val_hits1,
        });

        if cfg.correction {
            embedding_correction(params, correction_seed.wrapping_add(u as u64 + 1));
            state.reset_entity_acc();
        }
    }

    let last = cfg.final_epochs.unwrap_or(cfg.interval);
    let h = train_epochs(
        params, state, graph, nbrs, &seeds, loss_cfg, opts, valid, last, epoch,
    )?;
    epoch_log.extend(h);
    Ok((seeds, updates, epoch_log))
}
