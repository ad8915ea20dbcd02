//! Ranking evaluation: Hits@K and mean reciprocal rank over a test seed set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegnnError};
use crate::sim::SimilarityMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    G1ToG2,
    G2ToG1,
    Mean,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub hits: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub n_test: usize,
    pub direction: Direction,
}

/// 1-based rank of the true partner within row i, descending score, ties
/// broken by lower column index.
fn rank_in_row(m: &SimilarityMatrix, i: usize, j: usize) -> usize {
    let row = m.row(i);
    let target = row[j];
    let mut rank = 1;
    for (jj, &v) in row.iter().enumerate() {
        if v > target || (v == target && jj < j) {
            rank += 1;
        }
    }
    rank
}

/// 1-based rank of the true partner within column j, descending score.
fn rank_in_col(m: &SimilarityMatrix, i: usize, j: usize) -> usize {
    let target = m.at(i, j);
    let mut rank = 1;
    for ii in 0..m.rows() {
        let v = m.at(ii, j);
        if v > target || (v == target && ii < i) {
            rank += 1;
        }
    }
    rank
}

fn ranks(m: &SimilarityMatrix, test: &[(usize, usize)], direction: Direction) -> Vec<f64> {
    test.par_iter()
        .map(|&(i, j)| match direction {
            Direction::G1ToG2 => rank_in_row(m, i, j) as f64,
            Direction::G2ToG1 => rank_in_col(m, i, j) as f64,
            Direction::Mean => (rank_in_row(m, i, j) as f64 + rank_in_col(m, i, j) as f64) / 2.0,
        })
        .collect()
}

pub fn hits_at_k(m: &SimilarityMatrix, test: &[(usize, usize)], k: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(SegnnError::EmptySeeds);
    }
    let hit = test
        .par_iter()
        .filter(|&&(i, j)| rank_in_row(m, i, j) <= k)
        .count();
    Ok(hit as f64 / test.len() as f64)
}

pub fn mrr(m: &SimilarityMatrix, test: &[(usize, usize)]) -> Result<f64> {
    if test.is_empty() {
        return Err(SegnnError::EmptySeeds);
    }
    let sum: f64 = test
        .par_iter()
        .map(|&(i, j)| 1.0 / rank_in_row(m, i, j) as f64)
        .sum();
    Ok(sum / test.len() as f64)
}

/// Full report for the requested cutoffs. For Mean direction, hits and mrr
/// are averaged over both ranking directions.
pub fn evaluate(
    m: &SimilarityMatrix,
    test: &[(usize, usize)],
    ks: &[usize],
    direction: Direction,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(SegnnError::EmptySeeds);
    }
    let dirs: &[Direction] = match direction {
        Direction::Mean => &[Direction::G1ToG2, Direction::G2ToG1],
        d => return single_direction(m, test, ks, d),
    };
    let mut hits = BTreeMap::new();
    let mut mrr_sum = 0.0;
    for &d in dirs {
        let r = single_direction(m, test, ks, d)?;
        for (&k, &v) in &r.hits {
            *hits.entry(k).or_insert(0.0) += v / dirs.len() as f64;
        }
        mrr_sum += r.mrr / dirs.len() as f64;
    }
    Ok(EvalReport {
        hits,
        mrr: mrr_sum,
        n_test: test.len(),
        direction,
    })
}

fn single_direction(
    m: &SimilarityMatrix,
    test: &[(usize, usize)],
    ks: &[usize],
    direction: Direction,
) -> Result<EvalReport> {
    let rs = ranks(m, test, direction);
    let mut hits = BTreeMap::new();
    for &k in ks {
        let h = rs.iter().filter(|&&r| r <= k as f64).count() as f64 / rs.len() as f64;
        hits.insert(k, h);
    }
    let mrr = rs.iter().map(|r| 1.0 / r).sum::<f64>() / rs.len() as f64;
    Ok(EvalReport {
        hits,
        mrr,
        n_test: test.len(),
        direction,
    })
}

impl EvalReport {
    /// CSV row "hits@k1,...,mrr,n_test" matching `csv_header`.
    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.hits.values().map(|v| format!("{v}")).collect();
        cols.push(format!("{}", self.mrr));
        cols.push(format!("{}", self.n_test));
        cols.join(",")
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = self.hits.keys().map(|k| format!("hits@{k}")).collect();
        cols.push("mrr".to_string());
        cols.push("n_test".to_string());
        cols.join(",")
    }
}
