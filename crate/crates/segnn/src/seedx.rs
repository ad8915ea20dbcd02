//! Seed expansion from neighborhood-level semantic information.

use crate::error::{Result, SegnnError};
use crate::kg::{EmbeddingTable, KnowledgeGraph, Provenance, SeedPair, SeedSet};
use crate::mat::{axpy, Mat};
use crate::sim::{cosine_matrix, csls_adjust, mutual_nearest_pairs, CslsParams, SimilarityMatrix};

#[derive(Clone, Copy, Debug)]
pub struct SeedExpansionConfig {
    /// Fusion weight between entity-level and neighborhood-level matrices.
    pub epsilon: f64,
    /// Semantic similarity threshold for initial potential pairs.
    pub theta_sem: f64,
    /// CSLS nearest-neighbor count.
    pub q: usize,
}

impl Default for SeedExpansionConfig {
    fn default() -> Self {
        SeedExpansionConfig {
            epsilon: 0.5,
            theta_sem: 0.01,
            q: 15,
        }
    }
}

/// Aggregates one hop of neighborhood semantics with symmetric degree
/// normalization applied per term:
/// h_n(i) = sum_j h_s(j) / sqrt(deg(i) * deg(j)).
/// Isolated entities get a zero row flagged missing.
pub fn neighborhood_semantic_embedding(kg: &KnowledgeGraph, sem: &EmbeddingTable) -> EmbeddingTable {
    let n = kg.num_entities;
    let mut vectors = Mat::zeros(n, sem.dim);
    let mut missing = vec![false; n];
    let deg: Vec<usize> = kg.adjacency.iter().map(|a| a.len()).collect();
    for i in 0..n {
        if deg[i] == 0 {
            missing[i] = true;
            continue;
        }
        let row = vectors.row_mut(i);
        for &(_, j) in &kg.adjacency[i] {
            if sem.missing[j] {
                continue;
            }
            let w = 1.0 / ((deg[i] * deg[j]) as f64).sqrt();
            axpy(w, sem.vectors.row(j), row);
        }
    }
    EmbeddingTable {
        dim: sem.dim,
        vectors,
        missing,
    }
}

/// M_sem = epsilon * CSLS(cos(sem1, sem2)) + (1 - epsilon) * CSLS(cos(nbr1, nbr2)).
pub fn fused_semantic_similarity(
    sem1: &EmbeddingTable,
    sem2: &EmbeddingTable,
    nbr1: &EmbeddingTable,
    nbr2: &EmbeddingTable,
    cfg: &SeedExpansionConfig,
) -> Result<SimilarityMatrix> {
    if sem1.dim != sem2.dim || nbr1.dim != nbr2.dim {
        return Err(SegnnError::DimMismatch {
            found: sem2.dim,
            expected: sem1.dim,
        });
    }
    let params = CslsParams { q: cfg.q };
    let m_s = csls_adjust(
        &cosine_matrix(&sem1.vectors, &sem1.missing, &sem2.vectors, &sem2.missing)?,
        params,
    )?;
    let m_n = csls_adjust(
        &cosine_matrix(&nbr1.vectors, &nbr1.missing, &nbr2.vectors, &nbr2.missing)?,
        params,
    )?;
    let mut out = Mat::zeros(m_s.rows(), m_s.cols());
    for (o, (a, b)) in out
        .data_mut()
        .iter_mut()
        .zip(m_s.data().iter().zip(m_n.data()))
    {
        *o = cfg.epsilon * a + (1.0 - cfg.epsilon) * b;
    }
    Ok(out)
}

/// S_E = S ∪ S_I where S_I are bidirectional nearest neighbors above
/// theta_sem with at least one endpoint unseeded; INIT pairs that would
/// conflict with existing pairs are dropped.
pub fn expand_seeds(m_sem: &SimilarityMatrix, cfg: &SeedExpansionConfig, seeds: &SeedSet) -> SeedSet {
    let mut out = seeds.clone();
    for (i, j, score) in mutual_nearest_pairs(m_sem, cfg.theta_sem, seeds) {
        out.try_insert(SeedPair {
            e1: i,
            e2: j,
            provenance: Provenance::Init,
            score,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Provenance;
    use crate::sim::cosine_matrix;

    fn table(rows: &[Vec<f64>]) -> EmbeddingTable {
        EmbeddingTable {
            dim: rows[0].len(),
            vectors: Mat::from_rows(rows),
            missing: vec![false; rows.len()],
        }
    }

    #[test]
    fn single_neighbor_both_degree_one() {
        let kg = crate::kg::KnowledgeGraph::from_triples(1, 2, 1, vec![(0, 0, 1)]).unwrap();
        let sem = table(&[vec![0.3, 0.4], vec![0.6, 0.8]]);
        let nbr = neighborhood_semantic_embedding(&kg, &sem);
        // deg(0) = deg(1) = 1, so h_n(0) = h_s(1) exactly.
        assert_eq!(nbr.vectors.row(0), sem.vectors.row(1));
        assert_eq!(nbr.vectors.row(1), sem.vectors.row(0));
    }

    #[test]
    fn per_term_degree_normalization() {
        // Entity 0 has degree 2 with neighbors 1 (degree 1) and 2 (degree 4).
        let kg = crate::kg::KnowledgeGraph::from_triples(
            1,
            6,
            1,
            vec![(0, 0, 1), (0, 0, 2), (2, 0, 3), (2, 0, 4), (5, 0, 2)],
        )
        .unwrap();
        assert_eq!(kg.adjacency[0].len(), 2);
        assert_eq!(kg.adjacency[1].len(), 1);
        assert_eq!(kg.adjacency[2].len(), 4);
        let mut rows = vec![vec![0.0, 0.0]; 6];
        rows[1] = vec![1.0, 0.0];
        rows[2] = vec![0.0, 1.0];
        let sem = table(&rows);
        let nbr = neighborhood_semantic_embedding(&kg, &sem);
        let want = [1.0 / 2f64.sqrt(), 1.0 / 8f64.sqrt()];
        assert!((nbr.vectors.at(0, 0) - want[0]).abs() < 1e-12);
        assert!((nbr.vectors.at(0, 1) - want[1]).abs() < 1e-12);
    }

    #[test]
    fn isolated_entity_flagged() {
        let kg = crate::kg::KnowledgeGraph::from_triples(1, 3, 1, vec![(0, 0, 1)]).unwrap();
        let sem = table(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let nbr = neighborhood_semantic_embedding(&kg, &sem);
        assert!(nbr.missing[2]);
        assert!(nbr.vectors.row(2).iter().all(|&v| v == 0.0));
    }

    fn fixture_tables() -> (EmbeddingTable, EmbeddingTable, EmbeddingTable, EmbeddingTable) {
        let sem1 = table(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let sem2 = table(&[vec![1.0, 0.0], vec![0.6, 0.8]]);
        let nbr1 = table(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let nbr2 = table(&[vec![0.6, 0.8], vec![1.0, 0.0]]);
        (sem1, sem2, nbr1, nbr2)
    }

    #[test]
    fn fusion_degenerate_and_mean() {
        let (sem1, sem2, nbr1, nbr2) = fixture_tables();
        let q = 1;
        let m_s = crate::sim::csls_adjust(
            &cosine_matrix(&sem1.vectors, &sem1.missing, &sem2.vectors, &sem2.missing).unwrap(),
            crate::sim::CslsParams { q },
        )
        .unwrap();
        let m_n = crate::sim::csls_adjust(
            &cosine_matrix(&nbr1.vectors, &nbr1.missing, &nbr2.vectors, &nbr2.missing).unwrap(),
            crate::sim::CslsParams { q },
        )
        .unwrap();

        let mut cfg = SeedExpansionConfig { epsilon: 1.0, theta_sem: 0.01, q };
        let full_s = fused_semantic_similarity(&sem1, &sem2, &nbr1, &nbr2, &cfg).unwrap();
        assert_eq!(full_s.data(), m_s.data());

        cfg.epsilon = 0.0;
        let full_n = fused_semantic_similarity(&sem1, &sem2, &nbr1, &nbr2, &cfg).unwrap();
        assert_eq!(full_n.data(), m_n.data());

        cfg.epsilon = 0.5;
        let half = fused_semantic_similarity(&sem1, &sem2, &nbr1, &nbr2, &cfg).unwrap();
        for ((h, a), b) in half.data().iter().zip(m_s.data()).zip(m_n.data()) {
            assert!((h - 0.5 * (a + b)).abs() < 1e-12);
        }
    }

    #[test]
    fn expand_diagonal_dominant() {
        let m = Mat::from_vec(2, 2, vec![0.9, 0.1, 0.1, 0.8]);
        let cfg = SeedExpansionConfig { epsilon: 0.5, theta_sem: 0.01, q: 1 };
        let out = expand_seeds(&m, &cfg, &SeedSet::new());
        assert_eq!(out.count_by(Provenance::Init), 2);
    }

    #[test]
    fn expand_fully_seeded_is_identity() {
        let m = Mat::from_vec(2, 2, vec![0.9, 0.1, 0.1, 0.8]);
        let mut seeds = SeedSet::new();
        for i in 0..2 {
            seeds
                .insert(SeedPair { e1: i, e2: i, provenance: Provenance::Pre, score: 1.0 })
                .unwrap();
        }
        let cfg = SeedExpansionConfig { epsilon: 0.5, theta_sem: 0.01, q: 1 };
        let out = expand_seeds(&m, &cfg, &seeds);
        assert_eq!(out.len(), seeds.len());
        assert_eq!(out.count_by(Provenance::Init), 0);
    }

    #[test]
    fn expand_threshold_dominates() {
        let m = Mat::from_vec(2, 2, vec![0.9, 0.1, 0.1, 0.8]);
        let cfg = SeedExpansionConfig { epsilon: 0.5, theta_sem: 0.95, q: 1 };
        let out = expand_seeds(&m, &cfg, &SeedSet::new());
        assert!(out.is_empty());
    }

    #[test]
    fn expand_monotone_in_threshold_and_superset() {
        let m = Mat::from_vec(3, 3, vec![0.9, 0.1, 0.0, 0.1, 0.5, 0.2, 0.0, 0.2, 0.3]);
        let mut seeds = SeedSet::new();
        seeds
            .insert(SeedPair { e1: 2, e2: 1, provenance: Provenance::Pre, score: 1.0 })
            .unwrap();
        let lo = expand_seeds(
            &m,
            &SeedExpansionConfig { epsilon: 0.5, theta_sem: 0.01, q: 1 },
            &seeds,
        );
        let hi = expand_seeds(
            &m,
            &SeedExpansionConfig { epsilon: 0.5, theta_sem: 0.6, q: 1 },
            &seeds,
        );
        // Original pairs always kept.
        for p in seeds.pairs() {
            assert!(lo.pairs().contains(p));
            assert!(hi.pairs().contains(p));
        }
        // Higher threshold never adds pairs the lower one lacks.
        for p in hi.pairs() {
            assert!(lo.pairs().iter().any(|q| q.e1 == p.e1 && q.e2 == p.e2));
        }
    }

    #[test]
    fn identical_graphs_recover_identity_mapping() {
        let kg = crate::kg::KnowledgeGraph::from_triples(
            1,
            4,
            1,
            vec![(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 0)],
        )
        .unwrap();
        let sem = crate::kg::pseudo_semantic_embeddings(&kg, 8, 1);
        let nbr = neighborhood_semantic_embedding(&kg, &sem);
        let cfg = SeedExpansionConfig { epsilon: 0.5, theta_sem: 0.01, q: 2 };
        let m = fused_semantic_similarity(&sem, &sem, &nbr, &nbr, &cfg).unwrap();
        let out = expand_seeds(&m, &cfg, &SeedSet::new());
        for p in out.pairs() {
            assert_eq!(p.e1, p.e2);
        }
        assert_eq!(out.len(), 4);
    }
}
