//! Synthetic benchmark generator: a random source graph, an isomorphic copy
//! under a random entity permutation with optional edge dropout, and
//! pseudo-semantic vectors with controllable cross-graph noise.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kg::{
    sample_standard_normal, write_id_map, write_knowledge_graph, write_semantic_embeddings,
    EmbeddingTable, EntityId, KnowledgeGraph,
};
use crate::mat::{norm, Mat};

#[derive(Clone, Copy, Debug)]
pub struct FixtureOptions {
    pub num_entities: usize,
    pub num_triples: usize,
    pub num_relations: usize,
    /// Probability of dropping each mapped triple in the second graph.
    pub edge_dropout: f64,
    /// Gaussian noise added to the second graph's semantic vectors.
    pub sem_noise: f64,
    pub sem_dim: usize,
    pub rng_seed: u64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            num_entities: 200,
            num_triples: 600,
            num_relations: 8,
            edge_dropout: 0.0,
            sem_noise: 0.1,
            sem_dim: 32,
            rng_seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub kg1: KnowledgeGraph,
    pub kg2: KnowledgeGraph,
    pub sem1: EmbeddingTable,
    pub sem2: EmbeddingTable,
    /// Ground-truth alignment (e1, e2 = permutation of e1).
    pub reference: Vec<(EntityId, EntityId)>,
}

/// Builds the fixture in memory. The source graph is a random cycle over all
/// entities (so nobody is isolated) plus uniform random extra triples.
pub fn generate(opts: &FixtureOptions) -> Result<Fixture> {
    let n = opts.num_entities;
    assert!(n >= 2 && opts.num_triples >= n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut triples: HashSet<(usize, usize, usize)> = HashSet::new();
    for w in 0..n {
        let h = order[w];
        let t = order[(w + 1) % n];
        let r = rng.gen_range(0..opts.num_relations);
        triples.insert((h, r, t));
    }
    while triples.len() < opts.num_triples {
        let h = rng.gen_range(0..n);
        let t = rng.gen_range(0..n);
        if h == t {
            continue;
        }
        let r = rng.gen_range(0..opts.num_relations);
        triples.insert((h, r, t));
    }
    let kg1 = KnowledgeGraph::from_triples(1, n, opts.num_relations, triples.iter().copied().collect())?;

    // Random isomorphism, then per-triple dropout for the second graph.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut t2: Vec<(usize, usize, usize)> = Vec::new();
    for &(h, r, t) in &kg1.triples {
        if rng.gen_range(0.0..1.0) < opts.edge_dropout {
            continue;
        }
        t2.push((perm[h], r, perm[t]));
    }
    if t2.is_empty() {
        let &(h, r, t) = &kg1.triples[0];
        t2.push((perm[h], r, perm[t]));
    }
    let kg2 = KnowledgeGraph::from_triples(2, n, opts.num_relations, t2)?;

    // Unit semantic vectors; the second graph sees a noisy copy.
    let mut v1 = Mat::zeros(n, opts.sem_dim);
    let mut v2 = Mat::zeros(n, opts.sem_dim);
    for i in 0..n {
        let row = v1.row_mut(i);
        for x in row.iter_mut() {
            *x = sample_standard_normal(&mut rng);
        }
        let nr = norm(row);
        for x in row.iter_mut() {
            *x /= nr;
        }
    }
    for i in 0..n {
        let src = v1.row(i).to_vec();
        let dst = v2.row_mut(perm[i]);
        for (d, s) in dst.iter_mut().zip(&src) {
            *d = s + opts.sem_noise * sample_standard_normal(&mut rng);
        }
        let nr = norm(dst);
        if nr > 0.0 {
            for d in dst.iter_mut() {
                *d /= nr;
            }
        }
    }
    let sem1 = EmbeddingTable {
        dim: opts.sem_dim,
        vectors: v1,
        missing: vec![false; n],
    };
    let sem2 = EmbeddingTable {
        dim: opts.sem_dim,
        vectors: v2,
        missing: vec![false; n],
    };
    let reference: Vec<(usize, usize)> = (0..n).map(|i| (i, perm[i])).collect();
    Ok(Fixture {
        kg1,
        kg2,
        sem1,
        sem2,
        reference,
    })
}

/// Writes a generated fixture as a loadable dataset directory.
pub fn write_fixture(fixture: &Fixture, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_knowledge_graph(&fixture.kg1, &dir.join("kg1_triples.txt"))?;
    write_knowledge_graph(&fixture.kg2, &dir.join("kg2_triples.txt"))?;
    write_id_map(fixture.kg1.num_entities, "e1_", &dir.join("kg1_ent_ids.txt"))?;
    write_id_map(fixture.kg1.num_relations, "r1_", &dir.join("kg1_rel_ids.txt"))?;
    write_id_map(fixture.kg2.num_entities, "e2_", &dir.join("kg2_ent_ids.txt"))?;
    write_id_map(fixture.kg2.num_relations, "r2_", &dir.join("kg2_rel_ids.txt"))?;
    write_semantic_embeddings(&fixture.sem1, &dir.join("sem1.txt"))?;
    write_semantic_embeddings(&fixture.sem2, &dir.join("sem2.txt"))?;
    let mut body = String::new();
    for &(a, b) in &fixture.reference {
        body.push_str(&format!("{a}\t{b}\n"));
    }
    fs::write(dir.join("reference_pairs.txt"), body)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::load_knowledge_graph;

    #[test]
    fn generated_graph_has_no_isolated_entities() {
        let f = generate(&FixtureOptions::default()).unwrap();
        assert_eq!(f.kg1.num_entities, 200);
        assert!(f.kg1.triples.len() >= 600);
        assert!(f.kg1.adjacency.iter().all(|a| !a.is_empty()));
    }

    #[test]
    fn zero_dropout_gives_isomorphic_copy() {
        let f = generate(&FixtureOptions { edge_dropout: 0.0, ..Default::default() }).unwrap();
        assert_eq!(f.kg1.triples.len(), f.kg2.triples.len());
        let perm: Vec<usize> = {
            let mut p = vec![0; f.reference.len()];
            for &(a, b) in &f.reference {
                p[a] = b;
            }
            p
        };
        let mapped: std::collections::HashSet<_> =
            f.kg1.triples.iter().map(|&(h, r, t)| (perm[h], r, perm[t])).collect();
        for t in &f.kg2.triples {
            assert!(mapped.contains(t));
        }
    }

    #[test]
    fn dropout_removes_triples_but_not_all() {
        let f = generate(&FixtureOptions { edge_dropout: 0.5, ..Default::default() }).unwrap();
        assert!(f.kg2.triples.len() < f.kg1.triples.len());
        assert!(!f.kg2.triples.is_empty());
    }

    #[test]
    fn semantics_are_unit_norm_and_noise_scales() {
        let quiet = generate(&FixtureOptions { sem_noise: 0.01, ..Default::default() }).unwrap();
        let loud = generate(&FixtureOptions { sem_noise: 1.0, ..Default::default() }).unwrap();
        for i in 0..quiet.kg1.num_entities {
            assert!((norm(quiet.sem1.vectors.row(i)) - 1.0).abs() < 1e-9);
            assert!((norm(quiet.sem2.vectors.row(i)) - 1.0).abs() < 1e-9);
        }
        let mean_cos = |f: &Fixture| -> f64 {
            f.reference
                .iter()
                .map(|&(a, b)| {
                    crate::mat::dot(f.sem1.vectors.row(a), f.sem2.vectors.row(b))
                })
                .sum::<f64>()
                / f.reference.len() as f64
        };
        assert!(mean_cos(&quiet) > 0.99);
        assert!(mean_cos(&loud) < mean_cos(&quiet));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&FixtureOptions::default()).unwrap();
        let b = generate(&FixtureOptions::default()).unwrap();
        assert_eq!(a.kg1.triples, b.kg1.triples);
        assert_eq!(a.reference, b.reference);
        assert_eq!(a.sem2.vectors.data(), b.sem2.vectors.data());
        let c = generate(&FixtureOptions { rng_seed: 8, ..Default::default() }).unwrap();
        assert_ne!(a.reference, c.reference);
    }

    #[test]
    fn written_fixture_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let opts = FixtureOptions { num_entities: 20, num_triples: 40, ..Default::default() };
        let f = generate(&opts).unwrap();
        write_fixture(&f, dir.path()).unwrap();
        let kg1 = load_knowledge_graph(
            1,
            &dir.path().join("kg1_triples.txt"),
            &dir.path().join("kg1_ent_ids.txt"),
            &dir.path().join("kg1_rel_ids.txt"),
        )
        .unwrap();
        assert_eq!(kg1.num_entities, f.kg1.num_entities);
        assert_eq!(kg1.triples, f.kg1.triples);
        let sem1 =
            crate::kg::load_semantic_embeddings(&dir.path().join("sem1.txt"), 20, opts.sem_dim)
                .unwrap();
        assert_eq!(sem1.dim, f.sem1.dim);
        for i in 0..20 {
            for (a, b) in sem1.vectors.row(i).iter().zip(f.sem1.vectors.row(i)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
