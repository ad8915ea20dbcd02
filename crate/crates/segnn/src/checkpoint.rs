//! Versioned binary checkpoint: dims, parameter blocks, optimizer state,
//! iteration counters, and the current seed set, with a trailing SHA-256.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, SegnnError};
use crate::kg::{Provenance, SeedPair, SeedSet};
use crate::lgam::ModelParams;
use crate::mat::Mat;
use crate::train::OptimizerState;

const MAGIC: &[u8; 4] = b"SGCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub dim: usize,
    pub depth: usize,
    pub k: usize,
    pub q: usize,
    pub n1: usize,
    pub n2: usize,
    pub epoch: usize,
    pub updates_done: usize,
    pub params: ModelParams,
    pub opt: OptimizerState,
    pub seeds: SeedSet,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn mat(&mut self, m: &Mat) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for &v in m.data() {
            self.f64(v);
        }
    }
    fn vec(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(SegnnError::CorruptChecksum);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn mat(&mut self) -> Result<Mat> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        Ok(Mat::from_vec(rows, cols, data))
    }
    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    for v in [ck.dim, ck.depth, ck.k, ck.q, ck.n1, ck.n2, ck.epoch, ck.updates_done] {
        w.u64(v as u64);
    }
    w.mat(&ck.params.entity_base);
    w.mat(&ck.params.relation_emb);
    w.vec(&ck.params.v1);
    w.vec(&ck.params.v2);
    w.f64(ck.opt.lr);
    w.f64(ck.opt.rho);
    w.f64(ck.opt.eps);
    w.mat(&ck.opt.acc_entity);
    w.mat(&ck.opt.acc_relation);
    w.vec(&ck.opt.acc_v1);
    w.vec(&ck.opt.acc_v2);
    w.u64(ck.seeds.len() as u64);
    for p in ck.seeds.pairs() {
        w.u64(p.e1 as u64);
        w.u64(p.e2 as u64);
        w.buf.push(p.provenance.tag());
        w.f64(p.score);
    }
    let digest = Sha256::digest(&w.buf);
    let mut f = File::create(path)?;
    f.write_all(&w.buf)?;
    f.write_all(&digest)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 40 {
        return Err(SegnnError::CorruptChecksum);
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(SegnnError::CorruptChecksum);
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(SegnnError::CorruptChecksum);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SegnnError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let dim = r.u64()? as usize;
    let depth = r.u64()? as usize;
    let k = r.u64()? as usize;
    let q = r.u64()? as usize;
    let n1 = r.u64()? as usize;
    let n2 = r.u64()? as usize;
    let epoch = r.u64()? as usize;
    let updates_done = r.u64()? as usize;
    let entity_base = r.mat()?;
    let relation_emb = r.mat()?;
    let v1 = r.vec()?;
    let v2 = r.vec()?;
    let params = ModelParams {
        dim,
        entity_base,
        relation_emb,
        v1,
        v2,
    };
    let lr = r.f64()?;
    let rho = r.f64()?;
    let eps = r.f64()?;
    let acc_entity = r.mat()?;
    let acc_relation = r.mat()?;
    let acc_v1 = r.vec()?;
    let acc_v2 = r.vec()?;
    let opt = OptimizerState {
        lr,
        rho,
        eps,
        acc_entity,
        acc_relation,
        acc_v1,
        acc_v2,
    };
    let n_seeds = r.u64()? as usize;
    let mut seeds = SeedSet::new();
    for _ in 0..n_seeds {
        let e1 = r.u64()? as usize;
        let e2 = r.u64()? as usize;
        let tag = r.take(1)?[0];
        let score = r.f64()?;
        let provenance = Provenance::from_tag(tag).ok_or(SegnnError::CorruptChecksum)?;
        seeds
            .insert(SeedPair {
                e1,
                e2,
                provenance,
                score,
            })
            .map_err(|_| SegnnError::CorruptChecksum)?;
    }
    Ok(Checkpoint {
        dim,
        depth,
        k,
        q,
        n1,
        n2,
        epoch,
        updates_done,
        params,
        opt,
        seeds,
    })
}
