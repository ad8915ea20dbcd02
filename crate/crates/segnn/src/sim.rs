//! Dense similarity kernels: cosine matrices, CSLS local scaling, top-K row
//! selection, and the bidirectional nearest-neighbor + threshold filter.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Result, SegnnError};
use crate::kg::SeedSet;
use crate::mat::{dot, norm, Mat};

pub type SimilarityMatrix = Mat;

/// Finite stand-in for -inf: rows/columns flagged missing get this score so
/// they lose every argmax without poisoning arithmetic.
pub const NEG_SENTINEL: f64 = -1.0e30;

#[derive(Clone, Copy, Debug)]
pub struct CslsParams {
    pub q: usize,
}

/// Cosine similarity of every row of `a` against every row of `b`.
/// Rows flagged missing (or with zero norm) produce sentinel entries.
pub fn cosine_matrix(
    a: &Mat,
    missing_a: &[bool],
    b: &Mat,
    missing_b: &[bool],
) -> Result<SimilarityMatrix> {
    if a.cols() != b.cols() {
        return Err(SegnnError::DimMismatch {
            found: b.cols(),
            expected: a.cols(),
        });
    }
    let norms_b: Vec<f64> = (0..b.rows()).map(|j| norm(b.row(j))).collect();
    let mut out = Mat::zeros(a.rows(), b.rows());
    out.par_rows_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| {
            let ai = a.row(i);
            let na = norm(ai);
            if missing_a.get(i).copied().unwrap_or(false) || na == 0.0 {
                row.fill(NEG_SENTINEL);
                return;
            }
            for (j, out_ij) in row.iter_mut().enumerate() {
                if missing_b.get(j).copied().unwrap_or(false) || norms_b[j] == 0.0 {
                    *out_ij = NEG_SENTINEL;
                } else {
                    *out_ij = dot(ai, b.row(j)) / (na * norms_b[j]);
                }
            }
        });
    Ok(out)
}

fn mean_top_q(values: impl Iterator<Item = f64>, q: usize) -> f64 {
    // Keeps the q largest seen so far in a small sorted buffer.
    let mut top: Vec<f64> = Vec::with_capacity(q + 1);
    for v in values {
        let pos = top.partition_point(|&t| t > v);
        if pos < q {
            top.insert(pos, v);
            if top.len() > q {
                top.pop();
            }
        }
    }
    top.iter().sum::<f64>() / q as f64
}

/// CSLS adjustment: out(i,j) = 2 m(i,j) - avg1(i) - avg2(j), where avg1(i)
/// is the mean of the Q largest entries of row i and avg2(j) the mean of
/// the Q largest entries of column j.
pub fn csls_adjust(m: &SimilarityMatrix, params: CslsParams) -> Result<SimilarityMatrix> {
    let q = params.q;
    if q < 1 || q > m.rows().min(m.cols()) {
        return Err(SegnnError::QOutOfRange {
            q,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let avg1: Vec<f64> = (0..m.rows())
        .into_par_iter()
        .map(|i| mean_top_q(m.row(i).iter().copied(), q))
        .collect();
    let avg2: Vec<f64> = (0..m.cols())
        .into_par_iter()
        .map(|j| mean_top_q((0..m.rows()).map(|i| m.at(i, j)), q))
        .collect();
    let mut out = Mat::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            *out.at_mut(i, j) = 2.0 * m.at(i, j) - avg1[i] - avg2[j];
        }
    }
    Ok(out)
}

/// Strict argmax of a slice; None on an exact tie for the maximum.
fn strict_argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = None;
    let mut tied = false;
    for (idx, v) in values.enumerate() {
        if v > best {
            best = v;
            best_idx = Some(idx);
            tied = false;
        } else if v == best {
            tied = true;
        }
    }
    if tied {
        None
    } else {
        best_idx
    }
}

/// Bidirectional strict nearest neighbors above a threshold, with the
/// "at least one endpoint unseeded" clause, reduced to one-to-one by
/// descending score.
pub fn mutual_nearest_pairs(
    m: &SimilarityMatrix,
    threshold: f64,
    excluded: &SeedSet,
) -> Vec<(usize, usize, f64)> {
    let seeded1: HashSet<usize> = excluded.pairs().iter().map(|p| p.e1).collect();
    let seeded2: HashSet<usize> = excluded.pairs().iter().map(|p| p.e2).collect();

    let row_best: Vec<Option<usize>> = (0..m.rows())
        .into_par_iter()
        .map(|i| strict_argmax(m.row(i).iter().copied()))
        .collect();
    let col_best: Vec<Option<usize>> = (0..m.cols())
        .into_par_iter()
        .map(|j| strict_argmax((0..m.rows()).map(|i| m.at(i, j))))
        .collect();

    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &rb) in row_best.iter().enumerate() {
        if let Some(j) = rb {
            if col_best[j] == Some(i)
                && m.at(i, j) > threshold
                && !(seeded1.contains(&i) && seeded2.contains(&j))
            {
                candidates.push((i, j, m.at(i, j)));
            }
        }
    }
    // Greedy one-to-one by descending score; ties resolved by (i, j).
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut used1 = HashSet::new();
    let mut used2 = HashSet::new();
    let mut out = Vec::new();
    for (i, j, s) in candidates {
        if used1.insert(i) && used2.insert(j) {
            out.push((i, j, s));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Per-row indices of the K largest entries, ties broken by lower index.
/// With `exclude_self`, entry (i, i) is skipped (self-similarity use).
pub fn topk_rows(m: &SimilarityMatrix, k: usize, exclude_self: bool) -> Result<Vec<Vec<usize>>> {
    let limit = if exclude_self {
        m.cols().saturating_sub(1)
    } else {
        m.cols()
    };
    if k > limit {
        return Err(SegnnError::KOutOfRange { k, limit });
    }
    Ok((0..m.rows())
        .into_par_iter()
        .map(|i| {
            let row = m.row(i);
            let mut idx: Vec<usize> = (0..row.len())
                .filter(|&j| !(exclude_self && j == i))
                .collect();
            idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
            idx.truncate(k);
            idx
        })
        .collect())
}

const MAT_MAGIC: &[u8; 4] = b"SMAT";

/// Debug dump: magic, rows u32 LE, cols u32 LE, entries as f32 LE.
pub fn write_matrix(m: &SimilarityMatrix, path: &Path) -> Result<()> {
    let mut w = File::create(path)?;
    w.write_all(MAT_MAGIC)?;
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    for &v in m.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<SimilarityMatrix> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 12 || &buf[0..4] != MAT_MAGIC {
        return Err(SegnnError::CorruptChecksum);
    }
    let rows = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if buf.len() != 12 + rows * cols * 4 {
        return Err(SegnnError::CorruptChecksum);
    }
    let mut m = Mat::zeros(rows, cols);
    for (idx, v) in m.data_mut().iter_mut().enumerate() {
        let off = 12 + idx * 4;
        *v = f32::from_le_bytes(buf[off..off + 4].try_into().unwrap()) as f64;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Provenance, SeedPair};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat2(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    /// Direct evaluation of the CSLS definition, independent of the
    /// incremental top-Q selection in the implementation.
    pub fn csls_oracle(m: &Mat, q: usize) -> Mat {
        let top_mean = |mut vals: Vec<f64>| -> f64 {
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            vals[..q].iter().sum::<f64>() / q as f64
        };
        let avg1: Vec<f64> = (0..m.rows()).map(|i| top_mean(m.row(i).to_vec())).collect();
        let avg2: Vec<f64> = (0..m.cols())
            .map(|j| top_mean((0..m.rows()).map(|i| m.at(i, j)).collect()))
            .collect();
        let mut out = Mat::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                *out.at_mut(i, j) = 2.0 * m.at(i, j) - avg1[i] - avg2[j];
            }
        }
        out
    }

    #[test]
    fn cosine_identical_and_orthogonal() {
        let a = mat2(&[&[1.0, 0.0]]);
        let b = mat2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let m = cosine_matrix(&a, &[false], &b, &[false, false]).unwrap();
        assert_eq!(m.at(0, 0), 1.0);
        assert_eq!(m.at(0, 1), 0.0);
    }

    #[test]
    fn cosine_matches_dot_product_oracle() {
        let a = mat2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = mat2(&[&[1.0, 0.0], &[0.6, 0.8]]);
        let m = cosine_matrix(&a, &[false, false], &b, &[false, false]).unwrap();
        let expect = [[1.0, 0.6], [0.0, 0.8]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.at(i, j) - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_missing_rows_get_sentinel() {
        let a = mat2(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let b = mat2(&[&[1.0, 0.0]]);
        let m = cosine_matrix(&a, &[false, true], &b, &[false]).unwrap();
        assert_eq!(m.at(1, 0), NEG_SENTINEL);
        assert!(m.at(0, 0) > 0.9);
    }

    #[test]
    fn cosine_dim_mismatch() {
        let a = mat2(&[&[1.0, 0.0]]);
        let b = mat2(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(
            cosine_matrix(&a, &[false], &b, &[false]),
            Err(SegnnError::DimMismatch { .. })
        ));
    }

    #[test]
    fn csls_hand_example() {
        let m = mat2(&[&[1.0, 0.6], &[0.0, 0.8]]);
        let out = csls_adjust(&m, CslsParams { q: 1 }).unwrap();
        let expect = [[0.0, -0.6], [-1.8, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((out.at(i, j) - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csls_constant_matrix_is_zero() {
        let m = Mat::from_vec(3, 3, vec![0.7; 9]);
        for q in 1..=3 {
            let out = csls_adjust(&m, CslsParams { q }).unwrap();
            assert!(out.data().iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn csls_one_by_one() {
        let m = mat2(&[&[0.4]]);
        let out = csls_adjust(&m, CslsParams { q: 1 }).unwrap();
        assert_eq!(out.at(0, 0), 0.0);
    }

    #[test]
    fn csls_q_out_of_range() {
        let m = Mat::zeros(2, 2);
        assert!(matches!(
            csls_adjust(&m, CslsParams { q: 3 }),
            Err(SegnnError::QOutOfRange { .. })
        ));
        assert!(matches!(
            csls_adjust(&m, CslsParams { q: 0 }),
            Err(SegnnError::QOutOfRange { .. })
        ));
    }

    #[test]
    fn csls_matches_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let rows = rng.gen_range(1..=12);
            let cols = rng.gen_range(1..=12);
            let m = Mat::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let q = rng.gen_range(1..=rows.min(cols));
            let got = csls_adjust(&m, CslsParams { q }).unwrap();
            let want = csls_oracle(&m, q);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csls_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Mat::from_vec(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let shifted = Mat::from_vec(5, 4, m.data().iter().map(|v| v + 0.37).collect());
        let a = csls_adjust(&m, CslsParams { q: 2 }).unwrap();
        let b = csls_adjust(&shifted, CslsParams { q: 2 }).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mutual_pairs_diagonal_dominant() {
        let m = mat2(&[&[0.9, 0.1], &[0.1, 0.8]]);
        let got = mutual_nearest_pairs(&m, 0.5, &crate::kg::SeedSet::new());
        assert_eq!(got, vec![(0, 0, 0.9), (1, 1, 0.8)]);
    }

    #[test]
    fn mutual_pairs_tie_fails_strictness() {
        let m = mat2(&[&[0.9, 0.9]]);
        assert!(mutual_nearest_pairs(&m, 0.0, &crate::kg::SeedSet::new()).is_empty());
    }

    #[test]
    fn mutual_pairs_threshold_filters() {
        let m = mat2(&[&[0.9, 0.1], &[0.1, 0.8]]);
        let got = mutual_nearest_pairs(&m, 0.85, &crate::kg::SeedSet::new());
        assert_eq!(got, vec![(0, 0, 0.9)]);
    }

    #[test]
    fn mutual_pairs_fully_seeded_pair_blocked() {
        let m = mat2(&[&[0.9, 0.1], &[0.1, 0.8]]);
        let mut seeds = crate::kg::SeedSet::new();
        seeds
            .insert(SeedPair { e1: 0, e2: 0, provenance: Provenance::Pre, score: 1.0 })
            .unwrap();
        let got = mutual_nearest_pairs(&m, 0.0, &seeds);
        // (0,0) has both endpoints seeded; (1,1) survives.
        assert_eq!(got, vec![(1, 1, 0.8)]);
    }

    #[test]
    fn mutual_pairs_half_seeded_pair_allowed() {
        let m = mat2(&[&[0.9, 0.1], &[0.1, 0.8]]);
        let mut seeds = crate::kg::SeedSet::new();
        seeds
            .insert(SeedPair { e1: 0, e2: 1, provenance: Provenance::Pre, score: 1.0 })
            .unwrap();
        // e1=0 is seeded but e2=0 is not: the (0,0) candidate survives the
        // at-least-one-unseeded-endpoint clause.
        let got = mutual_nearest_pairs(&m, 0.0, &seeds);
        assert_eq!(got, vec![(0, 0, 0.9), (1, 1, 0.8)]);
    }

    /// Exhaustive four-condition predicate plus greedy one-to-one reduction.
    pub fn mutual_oracle(
        m: &Mat,
        threshold: f64,
        seeded1: &std::collections::HashSet<usize>,
        seeded2: &std::collections::HashSet<usize>,
    ) -> Vec<(usize, usize, f64)> {
        let mut cand = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m.at(i, j);
                let row_ok = (0..m.cols()).all(|jj| jj == j || v > m.at(i, jj));
                let col_ok = (0..m.rows()).all(|ii| ii == i || v > m.at(ii, j));
                let unseeded = !(seeded1.contains(&i) && seeded2.contains(&j));
                if row_ok && col_ok && v > threshold && unseeded {
                    cand.push((i, j, v));
                }
            }
        }
        cand.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        let mut u1 = std::collections::HashSet::new();
        let mut u2 = std::collections::HashSet::new();
        let mut out = Vec::new();
        for (i, j, v) in cand {
            if u1.insert(i) && u2.insert(j) {
                out.push((i, j, v));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    #[test]
    fn mutual_pairs_match_predicate_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let rows = rng.gen_range(1..=10);
            let cols = rng.gen_range(1..=10);
            let m = Mat::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let thr = rng.gen_range(-0.5..0.5);
            let got = mutual_nearest_pairs(&m, thr, &crate::kg::SeedSet::new());
            let want = mutual_oracle(&m, thr, &Default::default(), &Default::default());
            assert_eq!(got, want);
        }
    }

    #[test]
    fn topk_examples() {
        let m = mat2(&[&[0.1, 0.9, 0.5]]);
        assert_eq!(topk_rows(&m, 2, false).unwrap(), vec![vec![1, 2]]);
        let m = mat2(&[&[0.5, 0.5]]);
        assert_eq!(topk_rows(&m, 1, false).unwrap(), vec![vec![0]]);
        let m = Mat::zeros(2, 2);
        assert!(matches!(
            topk_rows(&m, 3, false),
            Err(SegnnError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0);
                *m.at_mut(i, j) = v;
                *m.at_mut(j, i) = v;
            }
        }
        let got = topk_rows(&m, 3, true).unwrap();
        for i in 0..n {
            let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            idx.sort_by(|&a, &b| m.at(i, b).partial_cmp(&m.at(i, a)).unwrap().then(a.cmp(&b)));
            assert_eq!(got[i], idx[..3].to_vec());
        }
    }

    #[test]
    fn matrix_dump_roundtrip() {
        let dir = tempfile::TempDir::new().unwrap();
        let m = mat2(&[&[0.5, -1.25], &[3.0, 0.0]]);
        let p = dir.path().join("m.bin");
        write_matrix(&m, &p).unwrap();
        let m2 = read_matrix(&p).unwrap();
        assert_eq!(m, m2);
    }

    proptest! {
        #[test]
        fn mutual_pairs_one_to_one_and_above_threshold(
            data in proptest::collection::vec(-1.0f64..1.0, 36),
            thr in -0.5f64..0.5,
        ) {
            let m = Mat::from_vec(6, 6, data);
            let got = mutual_nearest_pairs(&m, thr, &crate::kg::SeedSet::new());
            let mut s1 = std::collections::HashSet::new();
            let mut s2 = std::collections::HashSet::new();
            for &(i, j, v) in &got {
                prop_assert!(s1.insert(i));
                prop_assert!(s2.insert(j));
                prop_assert!(v > thr);
            }
        }

        #[test]
        fn mutual_pairs_column_permutation_equivariant(
            data in proptest::collection::vec(-1.0f64..1.0, 30),
            perm_seed in 0u64..1000,
        ) {
            let m = Mat::from_vec(5, 6, data);
            let mut perm: Vec<usize> = (0..6).collect();
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            perm.shuffle(&mut rng);
            let mut mp = Mat::zeros(5, 6);
            for i in 0..5 {
                for j in 0..6 {
                    *mp.at_mut(i, perm[j]) = m.at(i, j);
                }
            }
            let base = mutual_nearest_pairs(&m, 0.0, &crate::kg::SeedSet::new());
            let got = mutual_nearest_pairs(&mp, 0.0, &crate::kg::SeedSet::new());
            let mut relabeled: Vec<(usize, usize, f64)> =
                base.iter().map(|&(i, j, v)| (i, perm[j], v)).collect();
            relabeled.sort_by(|a, b| a.0.cmp(&b.0));
            prop_assert_eq!(got, relabeled);
        }

        #[test]
        fn csls_plus_broadcast_recovers_two_m(
            data in proptest::collection::vec(-1.0f64..1.0, 20),
            q in 1usize..=4,
        ) {
            let m = Mat::from_vec(5, 4, data);
            let out = csls_adjust(&m, CslsParams { q }).unwrap();
            let want = csls_oracle(&m, q);
            for (a, b) in out.data().iter().zip(want.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
