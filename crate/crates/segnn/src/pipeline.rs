//! End-to-end driver: ingest -> seed expansion -> global neighbor
//! preprocessing -> iterative optimization -> evaluation and artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::error::{Result, SegnnError};
use crate::eval::{self, Direction, EvalReport};
use crate::kg::{
    load_knowledge_graph, load_pair_file, load_semantic_embeddings, seeds_from_pairs,
    split_reference, write_seed_pairs, DatasetBundle, Provenance, SeedSet,
};
use crate::lgam::{forward, global_neighbors, stack_semantics, ModelParams, UnifiedGraph};
use crate::seedx::{expand_seeds, fused_semantic_similarity, neighborhood_semantic_embedding, SeedExpansionConfig};
use crate::sim::cosine_matrix;
use crate::tnecs::{run_iterative, TnecsConfig};
use crate::train::{final_similarity_of, LossConfig, OptimizerState, TrainOptions};

pub struct PipelineOutcome {
    pub report: EvalReport,
    pub seeds: SeedSet,
    pub out_dir: PathBuf,
}

pub fn load_bundle(cfg: &RunConfig) -> Result<(DatasetBundle, Vec<(usize, usize)>)> {
    let kg1 = load_knowledge_graph(
        1,
        Path::new(&cfg.kg1_triples),
        Path::new(&cfg.kg1_ent_ids),
        Path::new(&cfg.kg1_rel_ids),
    )?;
    let kg2 = load_knowledge_graph(
        2,
        Path::new(&cfg.kg2_triples),
        Path::new(&cfg.kg2_ent_ids),
        Path::new(&cfg.kg2_rel_ids),
    )?;
    let sem1 = load_semantic_embeddings(Path::new(&cfg.sem1), kg1.num_entities, cfg.sem_dim)?;
    let sem2 = load_semantic_embeddings(Path::new(&cfg.sem2), kg2.num_entities, cfg.sem_dim)?;
    let reference = load_pair_file(Path::new(&cfg.reference))?;
    Ok((
        DatasetBundle {
            kg1,
            kg2,
            sem1,
            sem2,
            pre_seeds: SeedSet::new(),
        },
        reference,
    ))
}

fn clamp_q(q: usize, rows: usize, cols: usize) -> usize {
    q.min(rows.min(cols)).max(1)
}

/// Runs seed expansion on a loaded bundle; returns the expanded set.
pub fn expansion_stage(bundle: &DatasetBundle, pre: &SeedSet, cfg: &RunConfig) -> Result<SeedSet> {
    let nbr1 = neighborhood_semantic_embedding(&bundle.kg1, &bundle.sem1);
    let nbr2 = neighborhood_semantic_embedding(&bundle.kg2, &bundle.sem2);
    let xcfg = SeedExpansionConfig {
        epsilon: cfg.epsilon,
        theta_sem: cfg.theta_sem,
        q: clamp_q(cfg.q, bundle.kg1.num_entities, bundle.kg2.num_entities),
    };
    let m_sem = fused_semantic_similarity(&bundle.sem1, &bundle.sem2, &nbr1, &nbr2, &xcfg)?;
    Ok(expand_seeds(&m_sem, &xcfg, pre))
}

#[derive(Serialize)]
struct SeedSummary {
    pre: usize,
    init: usize,
    iter: usize,
    total: usize,
    score_histogram: Vec<usize>,
}

fn seed_summary(seeds: &SeedSet) -> SeedSummary {
    // 10-bin histogram of finite pair scores.
    let scores: Vec<f64> = seeds
        .pairs()
        .iter()
        .map(|p| p.score)
        .filter(|s| s.is_finite())
        .collect();
    let mut hist = vec![0usize; 10];
    if !scores.is_empty() {
        let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        for s in scores {
            let b = (((s - lo) / span) * 10.0).floor() as usize;
            hist[b.min(9)] += 1;
        }
    }
    SeedSummary {
        pre: seeds.count_by(Provenance::Pre),
        init: seeds.count_by(Provenance::Init),
        iter: seeds.count_by(Provenance::Iter),
        total: seeds.len(),
        score_histogram: hist,
    }
}

pub fn init_thread_pool(threads: usize) {
    if threads > 0 {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

/// Full pipeline per the run configuration. Writes expanded seeds, training
/// log, TNECS history, checkpoint, and the evaluation report to out_dir.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    init_thread_pool(cfg.threads);
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)?;

    let (bundle, reference) = load_bundle(cfg)?;
    let (train_pairs, valid_pairs, test_pairs) = split_reference(
        &reference,
        (cfg.train_frac, cfg.valid_frac, cfg.test_frac),
        cfg.rng_seed,
    )?;
    let pre = seeds_from_pairs(&train_pairs, Provenance::Pre)?;

    // Stage 1: semantic seed expansion.
    let expanded = expansion_stage(&bundle, &pre, cfg)?;
    write_seed_pairs(&expanded, &out_dir.join("expanded_seeds.txt"))?;
    fs::write(
        out_dir.join("seed_summary.json"),
        serde_json::to_string_pretty(&seed_summary(&expanded))?,
    )?;

    // Stage 2: encoder preprocessing.
    let graph = UnifiedGraph::build(&bundle.kg1, &bundle.kg2);
    let sem_all = stack_semantics(&bundle.sem1, &bundle.sem2)?;
    let k = cfg.k.min(graph.num_entities.saturating_sub(1)).max(1);
    let q_all = clamp_q(cfg.q, graph.num_entities, graph.num_entities);
    let nbrs = global_neighbors(&sem_all, k, q_all)?;

    // Stage 3: iterative optimization.
    let mut params = ModelParams::xavier_init(
        graph.num_entities,
        graph.num_relations,
        cfg.dim,
        cfg.rng_seed,
    );
    let mut state = OptimizerState::new(&params, cfg.lr);
    let loss_cfg = LossConfig {
        gamma: cfg.gamma,
        lambda: cfg.lambda,
        neg_mode: cfg.neg_mode,
        rng_seed: cfg.rng_seed,
    };
    let opts = TrainOptions {
        depth: cfg.depth,
        q: cfg.q,
        eval_every: cfg.eval_every,
        patience: cfg.patience,
    };
    let tnecs_cfg = TnecsConfig {
        theta_fin: cfg.theta_fin,
        interval: cfg.interval,
        max_updates: cfg.max_updates,
        q: cfg.q,
        cumulative: cfg.cumulative_seeds,
        correction: cfg.embedding_correction,
        final_epochs: (cfg.final_epochs > 0).then_some(cfg.final_epochs),
    };
    let valid_opt = (!valid_pairs.is_empty()).then_some(valid_pairs.as_slice());
    let (seeds, updates, epoch_log) = run_iterative(
        &mut params,
        &mut state,
        &graph,
        &nbrs,
        expanded,
        &loss_cfg,
        &opts,
        &tnecs_cfg,
        valid_opt,
        cfg.rng_seed.wrapping_add(0xC0_FFEE),
    )?;

    let mut log_body = String::new();
    for rec in &epoch_log {
        log_body.push_str(&serde_json::to_string(rec)?);
        log_body.push('\n');
    }
    fs::write(out_dir.join("training_log.jsonl"), log_body)?;
    fs::write(
        out_dir.join("tnecs-history.json"),
        serde_json::to_string_pretty(&updates)?,
    )?;

    save_checkpoint(
        &Checkpoint {
            dim: cfg.dim,
            depth: cfg.depth,
            k,
            q: cfg.q,
            n1: graph.n1,
            n2: graph.n2,
            epoch: epoch_log.len(),
            updates_done: updates.len(),
            params: params.clone(),
            opt: state.clone(),
            seeds: seeds.clone(),
        },
        &out_dir.join("checkpoint.bin"),
    )?;

    // Stage 4: final alignment and evaluation.
    let trace = forward(&params, &graph, &nbrs, cfg.depth);
    let m = if cfg.raw_cosine_eval {
        let h = &trace.hfinal;
        let mut h1 = crate::mat::Mat::zeros(graph.n1, h.cols());
        for i in 0..graph.n1 {
            h1.row_mut(i).copy_from_slice(h.row(i));
        }
        let mut h2 = crate::mat::Mat::zeros(graph.n2, h.cols());
        for j in 0..graph.n2 {
            h2.row_mut(j).copy_from_slice(h.row(graph.g2(j)));
        }
        cosine_matrix(&h1, &vec![false; graph.n1], &h2, &vec![false; graph.n2])?
    } else {
        final_similarity_of(&trace, &graph, clamp_q(cfg.q, graph.n1, graph.n2))?
    };
    let m = if cfg.exclude_seed_candidates {
        let mut m = m;
        for &(e1, e2) in &train_pairs {
            for j in 0..graph.n2 {
                *m.at_mut(e1, j) = crate::sim::NEG_SENTINEL;
            }
            for i in 0..graph.n1 {
                *m.at_mut(i, e2) = crate::sim::NEG_SENTINEL;
            }
        }
        m
    } else {
        m
    };
    if test_pairs.is_empty() {
        return Err(SegnnError::EmptySeeds);
    }
    let direction = if cfg.eval_mean_direction {
        Direction::Mean
    } else {
        Direction::G1ToG2
    };
    let report = eval::evaluate(&m, &test_pairs, &[1, 10], direction)?;

    let report_json = json!({
        "hits@1": report.hits.get(&1),
        "hits@10": report.hits.get(&10),
        "mrr": report.mrr,
        "n_test": report.n_test,
        "config": cfg.echo(),
    });
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report_json)?,
    )?;
    fs::write(
        out_dir.join("report.csv"),
        format!("{}\n{}\n", report.csv_header(), report.csv_row()),
    )?;

    Ok(PipelineOutcome {
        report,
        seeds,
        out_dir,
    })
}
