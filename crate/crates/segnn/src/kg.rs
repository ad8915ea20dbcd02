//! Knowledge-graph data model and ingestion: triples, adjacency with inverse
//! augmentation, seed pairs, and semantic embedding tables.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegnnError};
use crate::mat::Mat;

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// Pre-aligned (human-labeled) pair; never removed or relabeled.
    Pre,
    /// Initial potential pair from semantic seed expansion.
    Init,
    /// Iterative potential pair from TNECS reselection.
    Iter,
}

impl Provenance {
    pub fn tag(self) -> u8 {
        match self {
            Provenance::Pre => 0,
            Provenance::Init => 1,
            Provenance::Iter => 2,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Provenance::Pre),
            1 => Some(Provenance::Init),
            2 => Some(Provenance::Iter),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub e1: EntityId,
    pub e2: EntityId,
    pub provenance: Provenance,
    pub score: f64,
}

/// One-to-one set of cross-graph entity pairs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SeedSet {
    pairs: Vec<SeedPair>,
}

impl SeedSet {
    pub fn new() -> Self {
        SeedSet { pairs: Vec::new() }
    }

    pub fn pairs(&self) -> &[SeedPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains_e1(&self, e1: EntityId) -> bool {
        self.pairs.iter().any(|p| p.e1 == e1)
    }

    pub fn contains_e2(&self, e2: EntityId) -> bool {
        self.pairs.iter().any(|p| p.e2 == e2)
    }

    /// Inserts a pair, rejecting any entity already used on either side.
    pub fn insert(&mut self, pair: SeedPair) -> Result<()> {
        if self.contains_e1(pair.e1) {
            return Err(SegnnError::DuplicateEntity { id: pair.e1, side: 1 });
        }
        if self.contains_e2(pair.e2) {
            return Err(SegnnError::DuplicateEntity { id: pair.e2, side: 2 });
        }
        self.pairs.push(pair);
        Ok(())
    }

    /// Inserts a pair if neither endpoint is taken; returns whether it went in.
    pub fn try_insert(&mut self, pair: SeedPair) -> bool {
        if self.contains_e1(pair.e1) || self.contains_e2(pair.e2) {
            return false;
        }
        self.pairs.push(pair);
        true
    }

    pub fn count_by(&self, p: Provenance) -> usize {
        self.pairs.iter().filter(|s| s.provenance == p).count()
    }

    /// PRE pairs only, in original order.
    pub fn pre_only(&self) -> SeedSet {
        SeedSet {
            pairs: self
                .pairs
                .iter()
                .copied()
                .filter(|p| p.provenance == Provenance::Pre)
                .collect(),
        }
    }

    /// Checks the global one-to-one invariant.
    pub fn is_one_to_one(&self) -> bool {
        let mut s1 = HashSet::new();
        let mut s2 = HashSet::new();
        self.pairs
            .iter()
            .all(|p| s1.insert(p.e1) && s2.insert(p.e2))
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    pub graph_id: u8,
    pub num_entities: usize,
    /// Declared relation count before inverse augmentation.
    pub num_relations: usize,
    /// Deduplicated triples, sorted by (head, relation, tail).
    pub triples: Vec<(EntityId, RelationId, EntityId)>,
    /// Per-entity incident edges after inverse augmentation; a triple
    /// (h, r, t) contributes (r, t) at h and (r + num_relations, h) at t.
    pub adjacency: Vec<Vec<(RelationId, EntityId)>>,
    /// Count of duplicate input triples dropped at load.
    pub duplicates_dropped: usize,
}

impl KnowledgeGraph {
    /// Relation id space size including inverses.
    pub fn num_relations_total(&self) -> usize {
        self.num_relations * 2
    }

    pub fn from_triples(
        graph_id: u8,
        num_entities: usize,
        num_relations: usize,
        raw: Vec<(EntityId, RelationId, EntityId)>,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(SegnnError::EmptyGraph);
        }
        for &(h, r, t) in &raw {
            if h >= num_entities || t >= num_entities {
                return Err(SegnnError::DanglingId {
                    id: h.max(t),
                    side: graph_id,
                });
            }
            if r >= num_relations {
                return Err(SegnnError::DanglingId { id: r, side: graph_id });
            }
        }
        let mut triples = raw;
        triples.sort_unstable();
        let before = triples.len();
        triples.dedup();
        let duplicates_dropped = before - triples.len();

        let mut adjacency = vec![Vec::new(); num_entities];
        for &(h, r, t) in &triples {
            adjacency[h].push((r, t));
            adjacency[t].push((r + num_relations, h));
        }
        Ok(KnowledgeGraph {
            graph_id,
            num_entities,
            num_relations,
            triples,
            adjacency,
            duplicates_dropped,
        })
    }
}

fn count_ids(path: &Path) -> Result<usize> {
    let f = File::open(path)?;
    let mut max_id = None;
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let id_str = line.split('\t').next().unwrap_or("");
        let id: usize = id_str.trim().parse().map_err(|_| SegnnError::MalformedLine {
            path: path.display().to_string(),
            line_no: no + 1,
            reason: format!("bad id '{id_str}'"),
        })?;
        max_id = Some(max_id.map_or(id, |m: usize| m.max(id)));
    }
    Ok(max_id.map_or(0, |m| m + 1))
}

/// Loads a graph from a triple file plus entity/relation id-map files.
pub fn load_knowledge_graph(
    graph_id: u8,
    triple_path: &Path,
    ent_id_path: &Path,
    rel_id_path: &Path,
) -> Result<KnowledgeGraph> {
    let num_entities = count_ids(ent_id_path)?;
    let num_relations = count_ids(rel_id_path)?;
    let f = File::open(triple_path)?;
    let mut raw = Vec::new();
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let mut next = |name: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| SegnnError::MalformedLine {
                    path: triple_path.display().to_string(),
                    line_no: no + 1,
                    reason: format!("missing or bad {name}"),
                })
        };
        let h = next("head")?;
        let r = next("relation")?;
        let t = next("tail")?;
        raw.push((h, r, t));
    }
    KnowledgeGraph::from_triples(graph_id, num_entities, num_relations, raw)
}

/// Writes triples back in canonical sorted order.
pub fn write_knowledge_graph(kg: &KnowledgeGraph, triple_path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(triple_path)?);
    for &(h, r, t) in &kg.triples {
        writeln!(w, "{h}\t{r}\t{t}")?;
    }
    Ok(())
}

pub fn write_id_map(n: usize, prefix: &str, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..n {
        writeln!(w, "{i}\t{prefix}{i}")?;
    }
    Ok(())
}

/// Loads "e1\te2" pairs as PRE seeds, enforcing one-to-one.
pub fn load_seed_pairs(path: &Path, kg1: &KnowledgeGraph, kg2: &KnowledgeGraph) -> Result<SeedSet> {
    let f = File::open(path)?;
    let mut set = SeedSet::new();
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let mut next = || -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| SegnnError::MalformedLine {
                    path: path.display().to_string(),
                    line_no: no + 1,
                    reason: "expected two tab-separated ids".to_string(),
                })
        };
        let e1 = next()?;
        let e2 = next()?;
        if e1 >= kg1.num_entities {
            return Err(SegnnError::OutOfRangeId { id: e1, side: 1 });
        }
        if e2 >= kg2.num_entities {
            return Err(SegnnError::OutOfRangeId { id: e2, side: 2 });
        }
        set.insert(SeedPair {
            e1,
            e2,
            provenance: Provenance::Pre,
            score: f64::INFINITY,
        })?;
    }
    Ok(set)
}

pub fn write_seed_pairs(set: &SeedSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in set.pairs() {
        writeln!(w, "{}\t{}", p.e1, p.e2)?;
    }
    Ok(())
}

/// Fixed (non-trainable) semantic vectors keyed by entity id.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: Mat,
    /// Entities with no semantic row; their vectors are zero and they are
    /// excluded from nearest-neighbor candidacy.
    pub missing: Vec<bool>,
}

impl EmbeddingTable {
    pub fn num_entities(&self) -> usize {
        self.vectors.rows()
    }
}

const EMB_MAGIC: &[u8; 4] = b"SEMB";

/// Loads semantic embeddings. Text layout: "entity_id\tf_1 f_2 ... f_d" per
/// line. Binary layout: magic "SEMB", dim u32 LE, rows u32 LE, then
/// rows*dim little-endian f32.
pub fn load_semantic_embeddings(
    path: &Path,
    num_entities: usize,
    expected_dim: usize,
) -> Result<EmbeddingTable> {
    let mut head = [0u8; 4];
    {
        let mut f = File::open(path)?;
        let n = f.read(&mut head)?;
        if n == 4 && &head == EMB_MAGIC {
            return load_binary_embeddings(path, num_entities, expected_dim);
        }
    }
    let f = File::open(path)?;
    let mut vectors = Mat::zeros(num_entities, expected_dim);
    let mut seen = vec![false; num_entities];
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id_str, rest) = line.split_once('\t').ok_or_else(|| SegnnError::MalformedLine {
            path: path.display().to_string(),
            line_no: no + 1,
            reason: "expected 'id\\tvalues'".to_string(),
        })?;
        let id: usize = id_str.trim().parse().map_err(|_| SegnnError::MalformedLine {
            path: path.display().to_string(),
            line_no: no + 1,
            reason: format!("bad id '{id_str}'"),
        })?;
        if id >= num_entities {
            return Err(SegnnError::OutOfRangeId { id, side: 0 });
        }
        let vals: Vec<f64> = rest
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| SegnnError::MalformedLine {
                path: path.display().to_string(),
                line_no: no + 1,
                reason: "bad float".to_string(),
            })?;
        if vals.len() != expected_dim {
            return Err(SegnnError::DimMismatch {
                found: vals.len(),
                expected: expected_dim,
            });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(SegnnError::NonFiniteValue { row: id });
        }
        vectors.row_mut(id).copy_from_slice(&vals);
        seen[id] = true;
    }
    let missing = seen.iter().map(|s| !s).collect();
    Ok(EmbeddingTable {
        dim: expected_dim,
        vectors,
        missing,
    })
}

fn load_binary_embeddings(
    path: &Path,
    num_entities: usize,
    expected_dim: usize,
) -> Result<EmbeddingTable> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 12 || &buf[0..4] != EMB_MAGIC {
        return Err(SegnnError::MalformedLine {
            path: path.display().to_string(),
            line_no: 0,
            reason: "bad binary embedding header".to_string(),
        });
    }
    let dim = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if dim != expected_dim {
        return Err(SegnnError::DimMismatch {
            found: dim,
            expected: expected_dim,
        });
    }
    if buf.len() != 12 + rows * dim * 4 || rows > num_entities {
        return Err(SegnnError::MalformedLine {
            path: path.display().to_string(),
            line_no: 0,
            reason: "binary embedding size mismatch".to_string(),
        });
    }
    let mut vectors = Mat::zeros(num_entities, dim);
    for i in 0..rows {
        for j in 0..dim {
            let off = 12 + (i * dim + j) * 4;
            let v = f32::from_le_bytes(buf[off..off + 4].try_into().unwrap()) as f64;
            if !v.is_finite() {
                return Err(SegnnError::NonFiniteValue { row: i });
            }
            *vectors.at_mut(i, j) = v;
        }
    }
    let mut missing = vec![false; num_entities];
    for m in missing.iter_mut().skip(rows) {
        *m = true;
    }
    Ok(EmbeddingTable {
        dim,
        vectors,
        missing,
    })
}

pub fn write_semantic_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..table.num_entities() {
        if table.missing[i] {
            continue;
        }
        let vals: Vec<String> = table.vectors.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{i}\t{}", vals.join(" "))?;
    }
    Ok(())
}

/// Deterministic unit-normalized pseudo-semantic vectors: per-entity
/// ChaCha8 stream keyed by (entity id, rng_seed), standard normal draws
/// via Box-Muller, then L2-normalized.
pub fn pseudo_semantic_embeddings(kg: &KnowledgeGraph, dim: usize, rng_seed: u64) -> EmbeddingTable {
    assert!(dim >= 1);
    let mut vectors = Mat::zeros(kg.num_entities, dim);
    for e in 0..kg.num_entities {
        let mut rng =
            ChaCha8Rng::seed_from_u64(rng_seed ^ ((e as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15)));
        let row = vectors.row_mut(e);
        for v in row.iter_mut() {
            *v = sample_standard_normal(&mut rng);
        }
        let n = crate::mat::norm(row);
        if n > 0.0 {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
    }
    EmbeddingTable {
        dim,
        vectors,
        missing: vec![false; kg.num_entities],
    }
}

/// Box-Muller draw from the given rng.
pub fn sample_standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Bundle of both graphs, their semantic tables, and PRE seeds.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub kg1: KnowledgeGraph,
    pub kg2: KnowledgeGraph,
    pub sem1: EmbeddingTable,
    pub sem2: EmbeddingTable,
    pub pre_seeds: SeedSet,
}

/// Splits reference pairs into (train, valid, test) by shuffled fractions.
/// Train pairs become PRE seeds; test pairs are disjoint from both.
pub fn split_reference(
    reference: &[(EntityId, EntityId)],
    fractions: (f64, f64, f64),
    rng_seed: u64,
) -> Result<(Vec<(EntityId, EntityId)>, Vec<(EntityId, EntityId)>, Vec<(EntityId, EntityId)>)> {
    let (ft, fv, fe) = fractions;
    if !(ft >= 0.0 && fv >= 0.0 && fe >= 0.0 && (ft + fv + fe - 1.0).abs() < 1e-9) {
        return Err(SegnnError::Config(format!(
            "split fractions must be non-negative and sum to 1, got {ft}/{fv}/{fe}"
        )));
    }
    let mut idx: Vec<usize> = (0..reference.len()).collect();
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    idx.shuffle(&mut rng);
    let n = reference.len();
    let nt = (ft * n as f64).round() as usize;
    let nv = (fv * n as f64).round() as usize;
    let nt = nt.min(n);
    let nv = nv.min(n - nt);
    let take = |ids: &[usize]| ids.iter().map(|&i| reference[i]).collect::<Vec<_>>();
    Ok((
        take(&idx[..nt]),
        take(&idx[nt..nt + nv]),
        take(&idx[nt + nv..]),
    ))
}

/// Loads a raw "e1\te2" pair file without seed bookkeeping.
pub fn load_pair_file(path: &Path) -> Result<Vec<(EntityId, EntityId)>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| SegnnError::MalformedLine {
                    path: path.display().to_string(),
                    line_no: no + 1,
                    reason: "expected two ids".to_string(),
                })
        };
        let e1 = parse(parts.next())?;
        let e2 = parse(parts.next())?;
        out.push((e1, e2));
    }
    Ok(out)
}

/// Builds a SeedSet from raw pairs with the given provenance.
pub fn seeds_from_pairs(pairs: &[(EntityId, EntityId)], provenance: Provenance) -> Result<SeedSet> {
    let mut set = SeedSet::new();
    for &(e1, e2) in pairs {
        set.insert(SeedPair {
            e1,
            e2,
            provenance,
            score: f64::INFINITY,
        })?;
    }
    Ok(set)
}
