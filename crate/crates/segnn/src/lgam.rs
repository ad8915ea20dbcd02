//! Local and global awareness encoder: relation-aware local aggregation over
//! graph edges, attention over semantic high-order neighbors, and the
//! reverse-mode pass through both branches.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SegnnError};
use crate::kg::{EmbeddingTable, EntityId, KnowledgeGraph, RelationId};
use crate::mat::{axpy, dot, Mat};
use crate::sim::{cosine_matrix, csls_adjust, topk_rows, CslsParams};

/// Both graphs merged into one index space: G2 entity ids offset by |E1|,
/// G2 relation ids offset by kg1.num_relations_total().
#[derive(Clone, Debug)]
pub struct UnifiedGraph {
    pub num_entities: usize,
    pub num_relations: usize,
    pub n1: usize,
    pub n2: usize,
    pub adjacency: Vec<Vec<(RelationId, EntityId)>>,
}

impl UnifiedGraph {
    pub fn build(kg1: &KnowledgeGraph, kg2: &KnowledgeGraph) -> Self {
        let n1 = kg1.num_entities;
        let n2 = kg2.num_entities;
        let r1 = kg1.num_relations_total();
        let mut adjacency = Vec::with_capacity(n1 + n2);
        adjacency.extend(kg1.adjacency.iter().cloned());
        for adj in &kg2.adjacency {
            adjacency.push(adj.iter().map(|&(r, e)| (r + r1, e + n1)).collect());
        }
        UnifiedGraph {
            num_entities: n1 + n2,
            num_relations: r1 + kg2.num_relations_total(),
            n1,
            n2,
            adjacency,
        }
    }

    /// Unified index of a G2 entity.
    pub fn g2(&self, e2: EntityId) -> usize {
        self.n1 + e2
    }
}

/// Stacks both semantic tables into one unified-index table.
pub fn stack_semantics(sem1: &EmbeddingTable, sem2: &EmbeddingTable) -> Result<EmbeddingTable> {
    if sem1.dim != sem2.dim {
        return Err(SegnnError::DimMismatch {
            found: sem2.dim,
            expected: sem1.dim,
        });
    }
    let mut vectors = Mat::zeros(sem1.num_entities() + sem2.num_entities(), sem1.dim);
    for i in 0..sem1.num_entities() {
        vectors.row_mut(i).copy_from_slice(sem1.vectors.row(i));
    }
    for i in 0..sem2.num_entities() {
        vectors
            .row_mut(sem1.num_entities() + i)
            .copy_from_slice(sem2.vectors.row(i));
    }
    let mut missing = sem1.missing.clone();
    missing.extend_from_slice(&sem2.missing);
    Ok(EmbeddingTable {
        dim: sem1.dim,
        vectors,
        missing,
    })
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub dim: usize,
    pub entity_base: Mat,
    pub relation_emb: Mat,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl ModelParams {
    /// Xavier-uniform initialization of every block, deterministic per seed.
    pub fn xavier_init(num_entities: usize, num_relations: usize, dim: usize, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let b = xavier_bound(dim);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-b..b)).collect() };
        ModelParams {
            dim,
            entity_base: Mat::from_vec(num_entities, dim, draw(num_entities * dim)),
            relation_emb: Mat::from_vec(num_relations, dim, draw(num_relations * dim)),
            v1: draw(dim),
            v2: draw(dim),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entity_base.is_finite()
            && self.relation_emb.is_finite()
            && self.v1.iter().all(|v| v.is_finite())
            && self.v2.iter().all(|v| v.is_finite())
    }
}

/// Uniform bound b = sqrt(6 / (fan_in + fan_out)) with fan_in = fan_out = d.
pub fn xavier_bound(dim: usize) -> f64 {
    (6.0 / (2.0 * dim as f64)).sqrt()
}

/// Per-entity semantic high-order neighbor lists, fixed after preprocessing.
#[derive(Clone, Debug)]
pub struct HighOrderNeighbors {
    pub k: usize,
    pub lists: Vec<Vec<usize>>,
}

/// CSLS-adjusted self-similarity over all entities of both graphs jointly;
/// per entity the top-K indices excluding self. Missing-semantics entities
/// get empty lists.
pub fn global_neighbors(sem_all: &EmbeddingTable, k: usize, q: usize) -> Result<HighOrderNeighbors> {
    let n = sem_all.num_entities();
    if k >= n {
        return Err(SegnnError::KOutOfRange { k, limit: n - 1 });
    }
    let cos = cosine_matrix(
        &sem_all.vectors,
        &sem_all.missing,
        &sem_all.vectors,
        &sem_all.missing,
    )?;
    let m = csls_adjust(&cos, CslsParams { q })?;
    let mut lists = topk_rows(&m, k, true)?;
    for (i, list) in lists.iter_mut().enumerate() {
        if sem_all.missing[i] {
            list.clear();
        }
    }
    Ok(HighOrderNeighbors { k, lists })
}

/// h0: mean of neighbor base embeddings plus mean of incident relation
/// embeddings; isolated entities fall back to their own base embedding.
pub fn local_input_features(graph: &UnifiedGraph, params: &ModelParams) -> Mat {
    let d = params.dim;
    let mut h0 = Mat::zeros(graph.num_entities, d);
    h0.par_rows_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| {
            let edges = &graph.adjacency[i];
            if edges.is_empty() {
                row.copy_from_slice(params.entity_base.row(i));
                return;
            }
            let w = 1.0 / edges.len() as f64;
            for &(r, j) in edges {
                axpy(w, params.entity_base.row(j), row);
                axpy(w, params.relation_emb.row(r), row);
            }
        });
    h0
}

fn softmax_from_logits(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One local relation-aware layer:
/// out_i = tanh( sum_k alpha_k (h_j - 2 (r_k . h_j) r_k) ),
/// alpha = softmax over incident edges of (v1 . r_k).
/// Isolated entities pass h_in through unchanged.
pub fn local_layer(h_in: &Mat, params: &ModelParams, graph: &UnifiedGraph) -> Mat {
    let d = params.dim;
    let mut out = Mat::zeros(graph.num_entities, d);
    out.par_rows_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| {
            let edges = &graph.adjacency[i];
            if edges.is_empty() {
                row.copy_from_slice(h_in.row(i));
                return;
            }
            let logits: Vec<f64> = edges
                .iter()
                .map(|&(r, _)| dot(&params.v1, params.relation_emb.row(r)))
                .collect();
            let alpha = softmax_from_logits(&logits);
            for (&(r, j), &a) in edges.iter().zip(&alpha) {
                let rel = params.relation_emb.row(r);
                let hj = h_in.row(j);
                let rh = dot(rel, hj);
                for (idx, o) in row.iter_mut().enumerate() {
                    *o += a * (hj[idx] - 2.0 * rh * rel[idx]);
                }
            }
            for o in row.iter_mut() {
                *o = o.tanh();
            }
        });
    out
}

/// One global attention layer over fixed high-order neighbors:
/// out_i = tanh( sum_j beta_ij h_j ), beta = softmax of (v2 . h_j).
/// Empty neighbor lists pass h_in through unchanged.
pub fn global_layer(h_in: &Mat, params: &ModelParams, nbrs: &HighOrderNeighbors) -> Mat {
    let d = params.dim;
    let n = h_in.rows();
    let mut out = Mat::zeros(n, d);
    out.par_rows_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| {
            let list = &nbrs.lists[i];
            if list.is_empty() {
                row.copy_from_slice(h_in.row(i));
                return;
            }
            let logits: Vec<f64> = list.iter().map(|&j| dot(&params.v2, h_in.row(j))).collect();
            let beta = softmax_from_logits(&logits);
            for (&j, &b) in list.iter().zip(&beta) {
                axpy(b, h_in.row(j), row);
            }
            for o in row.iter_mut() {
                *o = o.tanh();
            }
        });
    out
}

/// Per-layer activations for both branches. Index 0 is the shared h0.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub depth: usize,
    pub dim: usize,
    /// local[0] = h0, local[t] = t-th local layer output.
    pub local: Vec<Mat>,
    /// global[0] = h0, global[t] = t-th global layer output.
    pub global: Vec<Mat>,
    /// [local h0..hl || global h0..hl], width 2*(l+1)*d.
    pub hfinal: Mat,
}

impl ForwardTrace {
    pub fn final_width(&self) -> usize {
        2 * (self.depth + 1) * self.dim
    }
}

/// Full forward pass: shared h0, l local layers, l global layers, then the
/// concatenation [h0..hl(local) || h0..hl(global)] per entity.
pub fn forward(
    params: &ModelParams,
    graph: &UnifiedGraph,
    nbrs: &HighOrderNeighbors,
    depth: usize,
) -> ForwardTrace {
    assert!(depth >= 1, "encoder depth must be >= 1");
    let h0 = local_input_features(graph, params);
    let mut local = vec![h0.clone()];
    for t in 0..depth {
        local.push(local_layer(&local[t], params, graph));
    }
    let mut global = vec![h0];
    for t in 0..depth {
        global.push(global_layer(&global[t], params, nbrs));
    }
    let d = params.dim;
    let width = 2 * (depth + 1) * d;
    let mut hfinal = Mat::zeros(graph.num_entities, width);
    for i in 0..graph.num_entities {
        let row = hfinal.row_mut(i);
        for (t, h) in local.iter().enumerate() {
            row[t * d..(t + 1) * d].copy_from_slice(h.row(i));
        }
        let off = (depth + 1) * d;
        for (t, h) in global.iter().enumerate() {
            row[off + t * d..off + (t + 1) * d].copy_from_slice(h.row(i));
        }
    }
    ForwardTrace {
        depth,
        dim: d,
        local,
        global,
        hfinal,
    }
}

/// Parameter-shaped gradient blocks.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub entity_base: Mat,
    pub relation_emb: Mat,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            entity_base: Mat::zeros(params.entity_base.rows(), params.dim),
            relation_emb: Mat::zeros(params.relation_emb.rows(), params.dim),
            v1: vec![0.0; params.dim],
            v2: vec![0.0; params.dim],
        }
    }

    pub fn non_finite_block(&self) -> Option<&'static str> {
        if !self.entity_base.is_finite() {
            return Some("entity_base");
        }
        if !self.relation_emb.is_finite() {
            return Some("relation_emb");
        }
        if !self.v1.iter().all(|v| v.is_finite()) {
            return Some("v1");
        }
        if !self.v2.iter().all(|v| v.is_finite()) {
            return Some("v2");
        }
        None
    }
}

fn local_layer_backward(
    h_in: &Mat,
    h_out: &Mat,
    d_out: &Mat,
    params: &ModelParams,
    graph: &UnifiedGraph,
    grads: &mut Gradients,
) -> Mat {
    let d = params.dim;
    let mut d_in = Mat::zeros(h_in.rows(), d);
    for i in 0..graph.num_entities {
        let edges = &graph.adjacency[i];
        if edges.is_empty() {
            let out_grad = d_out.row(i).to_vec();
            axpy(1.0, &out_grad, d_in.row_mut(i));
            continue;
        }
        // ds = d_out * (1 - tanh^2), using the cached activation.
        let mut ds = vec![0.0; d];
        for idx in 0..d {
            let y = h_out.at(i, idx);
            ds[idx] = d_out.at(i, idx) * (1.0 - y * y);
        }
        let logits: Vec<f64> = edges
            .iter()
            .map(|&(r, _)| dot(&params.v1, params.relation_emb.row(r)))
            .collect();
        let alpha = softmax_from_logits(&logits);
        // d_alpha_k = ds . m_k with m_k = h_j - 2 (r . h_j) r.
        let mut d_alpha = vec![0.0; edges.len()];
        for (k, &(r, j)) in edges.iter().enumerate() {
            let rel = params.relation_emb.row(r);
            let hj = h_in.row(j);
            let rh = dot(rel, hj);
            let mut acc = 0.0;
            for idx in 0..d {
                acc += ds[idx] * (hj[idx] - 2.0 * rh * rel[idx]);
            }
            d_alpha[k] = acc;

            // dm_k = alpha_k * ds; back through m_k into h_j and rel.
            let a = alpha[k];
            let r_dm: f64 = (0..d).map(|idx| rel[idx] * a * ds[idx]).sum();
            {
                let din_j = d_in.row_mut(j);
                for idx in 0..d {
                    din_j[idx] += a * ds[idx] - 2.0 * r_dm * rel[idx];
                }
            }
            let drel = grads.relation_emb.row_mut(r);
            for idx in 0..d {
                drel[idx] += -2.0 * (r_dm * hj[idx] + rh * a * ds[idx]);
            }
        }
        // Softmax backward into logits, then into v1 and relation rows.
        let s_dot: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
        for (k, &(r, _)) in edges.iter().enumerate() {
            let dz = alpha[k] * (d_alpha[k] - s_dot);
            let rel = params.relation_emb.row(r);
            for idx in 0..d {
                grads.v1[idx] += dz * rel[idx];
            }
            let drel = grads.relation_emb.row_mut(r);
            for idx in 0..d {
                drel[idx] += dz * params.v1[idx];
            }
        }
    }
    d_in
}

fn global_layer_backward(
    h_in: &Mat,
    h_out: &Mat,
    d_out: &Mat,
    params: &ModelParams,
    nbrs: &HighOrderNeighbors,
    grads: &mut Gradients,
) -> Mat {
    let d = params.dim;
    let mut d_in = Mat::zeros(h_in.rows(), d);
    for i in 0..h_in.rows() {
        let list = &nbrs.lists[i];
        if list.is_empty() {
            let out_grad = d_out.row(i).to_vec();
            axpy(1.0, &out_grad, d_in.row_mut(i));
            continue;
        }
        let mut ds = vec![0.0; d];
        for idx in 0..d {
            let y = h_out.at(i, idx);
            ds[idx] = d_out.at(i, idx) * (1.0 - y * y);
        }
        let logits: Vec<f64> = list.iter().map(|&j| dot(&params.v2, h_in.row(j))).collect();
        let beta = softmax_from_logits(&logits);
        let d_beta: Vec<f64> = list.iter().map(|&j| dot(&ds, h_in.row(j))).collect();
        let s_dot: f64 = beta.iter().zip(&d_beta).map(|(b, g)| b * g).sum();
        for (k, &j) in list.iter().enumerate() {
            let dz = beta[k] * (d_beta[k] - s_dot);
            let hj = h_in.row(j).to_vec();
            for idx in 0..d {
                grads.v2[idx] += dz * hj[idx];
            }
            let din_j = d_in.row_mut(j);
            for idx in 0..d {
                din_j[idx] += beta[k] * ds[idx] + dz * params.v2[idx];
            }
        }
    }
    d_in
}

fn input_features_backward(d_h0: &Mat, graph: &UnifiedGraph, grads: &mut Gradients) {
    for i in 0..graph.num_entities {
        let edges = &graph.adjacency[i];
        if edges.is_empty() {
            let g = d_h0.row(i).to_vec();
            axpy(1.0, &g, grads.entity_base.row_mut(i));
            continue;
        }
        let w = 1.0 / edges.len() as f64;
        let g = d_h0.row(i).to_vec();
        for &(r, j) in edges {
            axpy(w, &g, grads.entity_base.row_mut(j));
            axpy(w, &g, grads.relation_emb.row_mut(r));
        }
    }
}

/// Reverse-mode pass: given the loss gradient on h_final rows, accumulates
/// gradients for every parameter block.
pub fn backward(
    params: &ModelParams,
    graph: &UnifiedGraph,
    nbrs: &HighOrderNeighbors,
    trace: &ForwardTrace,
    d_final: &Mat,
) -> Gradients {
    let d = params.dim;
    let depth = trace.depth;
    let n = graph.num_entities;
    let mut grads = Gradients::zeros_like(params);

    let slice_grad = |block: usize| -> Mat {
        let mut m = Mat::zeros(n, d);
        for i in 0..n {
            m.row_mut(i)
                .copy_from_slice(&d_final.row(i)[block * d..(block + 1) * d]);
        }
        m
    };

    // Local branch: concat blocks 0..=depth.
    let mut cur = slice_grad(depth);
    for t in (1..=depth).rev() {
        let mut d_in = local_layer_backward(
            &trace.local[t - 1],
            &trace.local[t],
            &cur,
            params,
            graph,
            &mut grads,
        );
        for (dst, src) in d_in.data_mut().iter_mut().zip(slice_grad(t - 1).data()) {
            *dst += src;
        }
        cur = d_in;
    }
    let mut d_h0 = cur;

    // Global branch: concat blocks depth+1 ..= 2*depth+1.
    let off = depth + 1;
    let mut cur = slice_grad(off + depth);
    for t in (1..=depth).rev() {
        let mut d_in = global_layer_backward(
            &trace.global[t - 1],
            &trace.global[t],
            &cur,
            params,
            nbrs,
            &mut grads,
        );
        for (dst, src) in d_in.data_mut().iter_mut().zip(slice_grad(off + t - 1).data()) {
            *dst += src;
        }
        cur = d_in;
    }
    for (dst, src) in d_h0.data_mut().iter_mut().zip(cur.data()) {
        *dst += src;
    }

    input_features_backward(&d_h0, graph, &mut grads);
    grads
}
