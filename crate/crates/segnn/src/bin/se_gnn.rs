//! Command-line driver for the entity-alignment pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segnn::checkpoint::load_checkpoint;
use segnn::config::RunConfig;
use segnn::error::{Result, SegnnError};
use segnn::eval::{evaluate, Direction};
use segnn::fixture::{generate, write_fixture, FixtureOptions};
use segnn::kg::{seeds_from_pairs, split_reference, write_seed_pairs, Provenance};
use segnn::lgam::{forward, global_neighbors, stack_semantics, UnifiedGraph};
use segnn::pipeline::{expansion_stage, init_thread_pool, load_bundle, run_pipeline};
use segnn::train::final_similarity_of;

#[derive(Parser)]
#[command(name = "se-gnn", about = "Semi-supervised knowledge-graph entity alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Flag overrides, e.g. --set epsilon=0.3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset and print its statistics.
    Ingest(ConfigArgs),
    /// Run semantic seed expansion and emit the expanded seed file.
    ExpandSeeds(ConfigArgs),
    /// Train with iterative seed optimization; writes a checkpoint.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full pipeline: ingest, expand, train, evaluate, report.
    Run(ConfigArgs),
    /// Grid sweep over comma-separated value lists, emitting a CSV.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Grid axes, e.g. --grid epsilon=0.3,0.5 --grid theta_sem=0.01,0.02.
        #[arg(long = "grid", value_name = "KEY=V1,V2,...")]
        grid: Vec<String>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Generate a synthetic benchmark dataset directory.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 600)]
        triples: usize,
        #[arg(long, default_value_t = 8)]
        relations: usize,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 32)]
        sem_dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => {
            let cfg = RunConfig::load(&args.config, &args.overrides)?;
            let (bundle, reference) = load_bundle(&cfg)?;
            for kg in [&bundle.kg1, &bundle.kg2] {
                println!(
                    "kg{}: {} entities, {} relations, {} triples ({} duplicates dropped)",
                    kg.graph_id,
                    kg.num_entities,
                    kg.num_relations,
                    kg.triples.len(),
                    kg.duplicates_dropped
                );
            }
            println!("reference pairs: {}", reference.len());
            Ok(())
        }
        Command::ExpandSeeds(args) => {
            let cfg = RunConfig::load(&args.config, &args.overrides)?;
            init_thread_pool(cfg.threads);
            let (bundle, reference) = load_bundle(&cfg)?;
            let (train_pairs, _, _) = split_reference(
                &reference,
                (cfg.train_frac, cfg.valid_frac, cfg.test_frac),
                cfg.rng_seed,
            )?;
            let pre = seeds_from_pairs(&train_pairs, Provenance::Pre)?;
            let expanded = expansion_stage(&bundle, &pre, &cfg)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let out = PathBuf::from(&cfg.out_dir).join("expanded_seeds.txt");
            write_seed_pairs(&expanded, &out)?;
            println!(
                "expanded seeds: {} pre + {} init = {} total -> {}",
                expanded.count_by(Provenance::Pre),
                expanded.count_by(Provenance::Init),
                expanded.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train(args) | Command::Run(args) => {
            let cfg = RunConfig::load(&args.config, &args.overrides)?;
            let outcome = run_pipeline(&cfg)?;
            println!(
                "hits@1 = {:.4}, hits@10 = {:.4}, mrr = {:.4} (n_test = {})",
                outcome.report.hits.get(&1).copied().unwrap_or(0.0),
                outcome.report.hits.get(&10).copied().unwrap_or(0.0),
                outcome.report.mrr,
                outcome.report.n_test
            );
            println!("artifacts in {}", outcome.out_dir.display());
            Ok(())
        }
        Command::Evaluate { cfg: args, checkpoint } => {
            let cfg = RunConfig::load(&args.config, &args.overrides)?;
            init_thread_pool(cfg.threads);
            let ck = load_checkpoint(&checkpoint)?;
            let (bundle, reference) = load_bundle(&cfg)?;
            let (_, _, test_pairs) = split_reference(
                &reference,
                (cfg.train_frac, cfg.valid_frac, cfg.test_frac),
                cfg.rng_seed,
            )?;
            let graph = UnifiedGraph::build(&bundle.kg1, &bundle.kg2);
            let sem_all = stack_semantics(&bundle.sem1, &bundle.sem2)?;
            let nbrs = global_neighbors(&sem_all, ck.k, ck.q.min(graph.num_entities).max(1))?;
            let trace = forward(&ck.params, &graph, &nbrs, ck.depth);
            let q = ck.q.min(graph.n1.min(graph.n2)).max(1);
            let m = final_similarity_of(&trace, &graph, q)?;
            let report = evaluate(&m, &test_pairs, &[1, 10], Direction::G1ToG2)?;
            println!(
                "hits@1 = {:.4}, hits@10 = {:.4}, mrr = {:.4} (n_test = {})",
                report.hits.get(&1).copied().unwrap_or(0.0),
                report.hits.get(&10).copied().unwrap_or(0.0),
                report.mrr,
                report.n_test
            );
            Ok(())
        }
        Command::Sweep { cfg: args, grid, out } => {
            let base = RunConfig::load(&args.config, &args.overrides)?;
            let mut axes: Vec<(String, Vec<String>)> = Vec::new();
            for g in &grid {
                let (k, vs) = g
                    .split_once('=')
                    .ok_or_else(|| SegnnError::Config(format!("bad grid '{g}'")))?;
                axes.push((
                    k.trim().to_string(),
                    vs.split(',').map(|v| v.trim().to_string()).collect(),
                ));
            }
            let mut rows = vec![Vec::<(String, String)>::new()];
            for (k, vs) in &axes {
                let mut next = Vec::new();
                for row in &rows {
                    for v in vs {
                        let mut r = row.clone();
                        r.push((k.clone(), v.clone()));
                        next.push(r);
                    }
                }
                rows = next;
            }
            let mut csv = String::new();
            let axis_names: Vec<String> = axes.iter().map(|(k, _)| k.clone()).collect();
            csv.push_str(&format!("{},hits@1,hits@10,mrr,n_test\n", axis_names.join(",")));
            for (run, assignment) in rows.iter().enumerate() {
                let mut cfg = base.clone();
                for (k, v) in assignment {
                    cfg.set(k, v)?;
                }
                cfg.out_dir = format!("{}/sweep_{run}", base.out_dir);
                let outcome = run_pipeline(&cfg)?;
                let vals: Vec<String> = assignment.iter().map(|(_, v)| v.clone()).collect();
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    vals.join(","),
                    outcome.report.hits.get(&1).copied().unwrap_or(0.0),
                    outcome.report.hits.get(&10).copied().unwrap_or(0.0),
                    outcome.report.mrr,
                    outcome.report.n_test
                ));
            }
            std::fs::write(&out, csv)?;
            println!("sweep results -> {}", out.display());
            Ok(())
        }
        Command::GenFixture {
            out,
            entities,
            triples,
            relations,
            dropout,
            sigma,
            sem_dim,
            seed,
        } => {
            let fixture = generate(&FixtureOptions {
                num_entities: entities,
                num_triples: triples,
                num_relations: relations,
                edge_dropout: dropout,
                sem_noise: sigma,
                sem_dim,
                rng_seed: seed,
            })?;
            write_fixture(&fixture, &out)?;
            println!(
                "fixture: {} entities/graph, {}+{} triples -> {}",
                entities,
                fixture.kg1.triples.len(),
                fixture.kg2.triples.len(),
                out.display()
            );
            Ok(())
        }
    }
}
