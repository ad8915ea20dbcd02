//! Loss, gradients, and optimization: Euclidean pair distance, LogSumExp
//! margin loss over the expanded seed set, and RMSprop updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegnnError};
use crate::eval;
use crate::kg::SeedSet;
use crate::lgam::{backward, forward, ForwardTrace, Gradients, HighOrderNeighbors, ModelParams, UnifiedGraph};
use crate::mat::Mat;
use crate::sim::{cosine_matrix, csls_adjust, CslsParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NegMode {
    /// Every entity of the opposite graph except the aligned partner.
    Full,
    /// n uniform negatives excluding the partner.
    Sampled(usize),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    /// Scaling factor applied inside the exponent.
    pub gamma: f64,
    /// Margin added to the positive-minus-negative distance gap.
    pub lambda: f64,
    pub neg_mode: NegMode,
    pub rng_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        // gamma/lambda have no published values; these are project defaults.
        LossConfig {
            gamma: 2.0,
            lambda: 1.0,
            neg_mode: NegMode::Sampled(256),
            rng_seed: 0,
        }
    }
}

/// RMSprop state: per-block squared-gradient accumulators.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub acc_entity: Mat,
    pub acc_relation: Mat,
    pub acc_v1: Vec<f64>,
    pub acc_v2: Vec<f64>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        OptimizerState {
            lr,
            rho: 0.9,
            eps: 1e-8,
            acc_entity: Mat::zeros(params.entity_base.rows(), params.dim),
            acc_relation: Mat::zeros(params.relation_emb.rows(), params.dim),
            acc_v1: vec![0.0; params.dim],
            acc_v2: vec![0.0; params.dim],
        }
    }

    /// Zeroes the entity-block accumulator (fresh statistics after an
    /// embedding correction).
    pub fn reset_entity_acc(&mut self) {
        self.acc_entity.data_mut().fill(0.0);
    }
}

/// L2 distance between the final embeddings of G1 entity i and G2 entity j.
pub fn pair_distance(trace: &ForwardTrace, graph: &UnifiedGraph, i: usize, j: usize) -> f64 {
    dist_rows(&trace.hfinal, i, graph.g2(j))
}

fn dist_rows(h: &Mat, a: usize, b: usize) -> f64 {
    h.row(a)
        .iter()
        .zip(h.row(b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// log(1 + sum exp(a_k)) = logsumexp over {0} ∪ {a_k}, overflow-safe.
fn log1p_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().cloned().fold(0.0f64, f64::max);
    let s: f64 = a.iter().map(|&x| (x - m).exp()).sum::<f64>() + (-m).exp();
    m + s.ln()
}

fn sample_negatives(
    rng: &mut ChaCha8Rng,
    pool: usize,
    exclude: usize,
    mode: NegMode,
) -> Vec<usize> {
    match mode {
        NegMode::Full => (0..pool).filter(|&x| x != exclude).collect(),
        NegMode::Sampled(n) => {
            if n >= pool.saturating_sub(1) {
                return (0..pool).filter(|&x| x != exclude).collect();
            }
            let idx = rand::seq::index::sample(rng, pool - 1, n);
            idx.iter()
                .map(|x| if x >= exclude { x + 1 } else { x })
                .collect()
        }
    }
}

struct LossAccum {
    loss: f64,
    /// Gradient of the loss w.r.t. h_final rows; None when only the loss
    /// value is needed.
    d_final: Option<Mat>,
}

fn loss_core(
    trace: &ForwardTrace,
    graph: &UnifiedGraph,
    seeds: &SeedSet,
    cfg: &LossConfig,
    epoch_seed: u64,
    want_grad: bool,
) -> Result<LossAccum> {
    if seeds.is_empty() {
        return Err(SegnnError::EmptySeeds);
    }
    let h = &trace.hfinal;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ epoch_seed.wrapping_mul(0x9E3779B97F4A7C15));
    let mut loss = 0.0;
    let mut d_final = want_grad.then(|| Mat::zeros(h.rows(), h.cols()));

    // Adds c * d dist(a,b)/d h to the final-embedding gradient.
    let add_dist_grad = |d_final: &mut Mat, a: usize, b: usize, c: f64| {
        let dist = dist_rows(h, a, b);
        if dist == 0.0 {
            return;
        }
        let scale = c / dist;
        for idx in 0..h.cols() {
            let diff = h.at(a, idx) - h.at(b, idx);
            *d_final.at_mut(a, idx) += scale * diff;
            *d_final.at_mut(b, idx) -= scale * diff;
        }
    };

    for pair in seeds.pairs() {
        let ui = pair.e1;
        let uj = graph.g2(pair.e2);
        let dpos = dist_rows(h, ui, uj);

        // Direction 1: negatives from G2 replace the partner.
        let negs2 = sample_negatives(&mut rng, graph.n2, pair.e2, cfg.neg_mode);
        let a2: Vec<f64> = negs2
            .iter()
            .map(|&j| cfg.gamma * (cfg.lambda + dpos - dist_rows(h, ui, graph.g2(j))))
            .collect();
        let l2 = log1p_sum_exp(&a2);
        loss += l2;

        // Direction 2: negatives from G1 replace the source.
        let negs1 = sample_negatives(&mut rng, graph.n1, pair.e1, cfg.neg_mode);
        let a1: Vec<f64> = negs1
            .iter()
            .map(|&i| cfg.gamma * (cfg.lambda + dpos - dist_rows(h, i, uj)))
            .collect();
        let l1 = log1p_sum_exp(&a1);
        loss += l1;

        if let Some(df) = d_final.as_mut() {
            let mut pos_coeff = 0.0;
            for (&j, &a) in negs2.iter().zip(&a2) {
                let p = (a - l2).exp();
                pos_coeff += cfg.gamma * p;
                add_dist_grad(df, ui, graph.g2(j), -cfg.gamma * p);
            }
            for (&i, &a) in negs1.iter().zip(&a1) {
                let p = (a - l1).exp();
                pos_coeff += cfg.gamma * p;
                add_dist_grad(df, i, uj, -cfg.gamma * p);
            }
            add_dist_grad(df, ui, uj, pos_coeff);
        }
    }
    Ok(LossAccum { loss, d_final })
}

/// LogSumExp margin loss over the expanded seed set.
pub fn alignment_loss(
    trace: &ForwardTrace,
    graph: &UnifiedGraph,
    seeds: &SeedSet,
    cfg: &LossConfig,
    epoch_seed: u64,
) -> Result<f64> {
    Ok(loss_core(trace, graph, seeds, cfg, epoch_seed, false)?.loss)
}

/// Exact gradients of the alignment loss w.r.t. every parameter block, via
/// the reverse-mode pass through the encoder.
pub fn gradients(
    params: &ModelParams,
    graph: &UnifiedGraph,
    nbrs: &HighOrderNeighbors,
    seeds: &SeedSet,
    cfg: &LossConfig,
    depth: usize,
    epoch_seed: u64,
) -> Result<(f64, Gradients)> {
    let trace = forward(params, graph, nbrs, depth);
    gradients_with_trace(params, graph, nbrs, &trace, seeds, cfg, epoch_seed)
}

pub fn gradients_with_trace(
    params: &ModelParams,
    graph: &UnifiedGraph,
    nbrs: &HighOrderNeighbors,
    trace: &ForwardTrace,
    seeds: &SeedSet,
    cfg: &LossConfig,
    epoch_seed: u64,
) -> Result<(f64, Gradients)> {
    let acc = loss_core(trace, graph, seeds, cfg, epoch_seed, true)?;
    let grads = backward(params, graph, nbrs, trace, &acc.d_final.unwrap());
    if let Some(block) = grads.non_finite_block() {
        return Err(SegnnError::NonFiniteGradient {
            block: block.to_string(),
        });
    }
    Ok((acc.loss, grads))
}

fn rmsprop_block(p: &mut [f64], g: &[f64], acc: &mut [f64], lr: f64, rho: f64, eps: f64) {
    for ((pi, &gi), ai) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
        *ai = rho * *ai + (1.0 - rho) * gi * gi;
        *pi -= lr * gi / (ai.sqrt() + eps);
    }
}

/// acc <- rho*acc + (1-rho)*g^2; p <- p - lr*g/(sqrt(acc)+eps).
pub fn rmsprop_step(params: &mut ModelParams, grads: &Gradients, state: &mut OptimizerState) {
    let (lr, rho, eps) = (state.lr, state.rho, state.eps);
    rmsprop_block(
        params.entity_base.data_mut(),
        grads.entity_base.data(),
        state.acc_entity.data_mut(),
        lr, rho, eps,
    );
    rmsprop_block(
        params.relation_emb.data_mut(),
        grads.relation_emb.data(),
        state.acc_relation.data_mut(),
        lr, rho, eps,
    );
    rmsprop_block(&mut params.v1, &grads.v1, &mut state.acc_v1, lr, rho, eps);
    rmsprop_block(&mut params.v2, &grads.v2, &mut state.acc_v2, lr, rho, eps);
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_hits1: Option<f64>,
    pub seed_counts: (usize, usize, usize),
    pub wall_ms: u128,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub depth: usize,
    pub q: usize,
    /// Epochs between validation evaluations.
    pub eval_every: usize,
    /// Evaluations without improvement before early stop.
    pub patience: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            depth: 2,
            q: 15,
            eval_every: 10,
            patience: 10,
        }
    }
}

/// Validation Hits@1 on the current trace, with Q clamped for small splits.
pub fn validation_hits1(
    trace: &ForwardTrace,
    graph: &UnifiedGraph,
    valid: &[(usize, usize)],
    q: usize,
) -> Result<f64> {
    let m = final_similarity_of(trace, graph, q)?;
    eval::hits_at_k(&m, valid, 1)
}

/// CSLS-adjusted cosine similarity of final embeddings, G1 rows x G2 cols.
pub fn final_similarity_of(
    trace: &ForwardTrace,
    graph: &UnifiedGraph,
    q: usize,
) -> Result<crate::sim::SimilarityMatrix> {
    let h = &trace.hfinal;
    let mut h1 = Mat::zeros(graph.n1, h.cols());
    for i in 0..graph.n1 {
        h1.row_mut(i).copy_from_slice(h.row(i));
    }
    let mut h2 = Mat::zeros(graph.n2, h.cols());
    for j in 0..graph.n2 {
        h2.row_mut(j).copy_from_slice(h.row(graph.g2(j)));
    }
    let no_missing1 = vec![false; graph.n1];
    let no_missing2 = vec![false; graph.n2];
    let cos = cosine_matrix(&h1, &no_missing1, &h2, &no_missing2)?;
    let q = q.min(graph.n1.min(graph.n2)).max(1);
    csls_adjust(&cos, CslsParams { q })
}

/// Runs forward/gradients/step per epoch; early-stops when validation
/// Hits@1 fails to improve for `patience` consecutive evaluations.
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    graph: &UnifiedGraph,
    nbrs: &HighOrderNeighbors,
    seeds: &SeedSet,
    cfg: &LossConfig,
    opts: &TrainOptions,
    valid: Option<&[(usize, usize)]>,
    epochs: usize,
    epoch_offset: usize,
) -> Result<Vec<EpochRecord>> {
    if epochs == 0 {
        return Err(SegnnError::Config("epochs must be >= 1".to_string()));
    }
    let mut history = Vec::with_capacity(epochs);
    let mut best_val = f64::NEG_INFINITY;
    let mut stale = 0usize;
    let counts = (
        seeds.count_by(crate::kg::Provenance::Pre),
        seeds.count_by(crate::kg::Provenance::Init),
        seeds.count_by(crate::kg::Provenance::Iter),
    );
    for e in 0..epochs {
        let t0 = std::time::Instant::now();
        let epoch = epoch_offset + e;
        let trace = forward(params, graph, nbrs, opts.depth);
        let (loss, grads) =
            gradients_with_trace(params, graph, nbrs, &trace, seeds, cfg, epoch as u64)?;
        rmsprop_step(params, &grads, state);

        let mut val_hits1 = None;
        if let Some(v) = valid {
            if !v.is_empty() && (e + 1) % opts.eval_every == 0 {
                let h1 = validation_hits1(&trace, graph, v, opts.q)?;
                val_hits1 = Some(h1);
                if h1 > best_val {
                    best_val = h1;
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
        }
        history.push(EpochRecord {
            epoch,
            loss,
            val_hits1,
            seed_counts: counts,
            wall_ms: t0.elapsed().as_millis(),
        });
        if stale >= opts.patience {
            break;
        }
    }
    Ok(history)
}
