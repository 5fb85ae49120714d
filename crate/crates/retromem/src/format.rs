//! Binary checkpoint (`RMCK`) and memory bank (`RMEM`) files. All
//! integers and floats are little-endian.
//!
//! ```text
//! checkpoint := "RMCK" version:u32 table
//! table      := count:u32 { name_len:u32 name:utf8 ndim:u32 dims:u32[ndim] data:f32[prod(dims)] }
//! bank       := "RMEM" version:u32 backend:u8 N:u32 K:u32 C:u32
//!               labels:i32[N] prototypes:f32[K*C] enhancer:table embeddings:f32[N*C]
//! ```

use std::path::Path;

use retromem_core::memory::{Backend, Clustering, ClusteringConfig, Enhancer, MemoryBank};
use retromem_core::nn::ParamStore;
use retromem_core::rng::Rng;
use retromem_core::Tensor;

use crate::error::{Error, Result};
use crate::fsutil;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RMCK";
pub const BANK_MAGIC: &[u8; 4] = b"RMEM";
pub const VERSION: u32 = 1;
const MAX_NDIM: usize = 8;

pub type ParamTable = Vec<(String, Tensor<f32>)>;

pub fn param_table(store: &ParamStore<f32>) -> ParamTable {
    store
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect()
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("value fits in u32").to_le_bytes());
}

fn put_f32s(buf: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_table(buf: &mut Vec<u8>, table: &[(String, Tensor<f32>)]) {
    put_u32(buf, table.len());
    for (name, t) in table {
        put_u32(buf, name.len());
        buf.extend_from_slice(name.as_bytes());
        put_u32(buf, t.ndim());
        for &d in t.shape() {
            put_u32(buf, d);
        }
        put_f32s(buf, t.data());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, offset: usize, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            path: self.path.to_path_buf(),
            offset,
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => self.fail(self.bytes.len(), format!("truncated while reading {what}")),
        }
    }

    fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != m {
            return self.fail(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(m)
                ),
            );
        }
        let at = self.pos;
        let v = self.u32("version")?;
        if v != VERSION as usize {
            return self.fail(at, format!("unsupported version {v}, expected {VERSION}"));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn count(&mut self, n: usize, width: usize, what: &str) -> Result<&'a [u8]> {
        match n.checked_mul(width) {
            Some(len) => self.take(len, what),
            None => self.fail(self.pos, format!("{what} length overflows")),
        }
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.count(n, 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn i32s(&mut self, n: usize, what: &str) -> Result<Vec<i32>> {
        let b = self.count(n, 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn table(&mut self) -> Result<ParamTable> {
        let count = self.u32("parameter count")?;
        let mut out = Vec::new();
        for _ in 0..count {
            let len = self.u32("name length")?;
            let at = self.pos;
            let name = match std::str::from_utf8(self.take(len, "name")?) {
                Ok(s) => s.to_string(),
                Err(_) => return self.fail(at, "parameter name is not UTF-8"),
            };
            let at = self.pos;
            let ndim = self.u32("rank")?;
            if ndim > MAX_NDIM {
                return self.fail(at, format!("parameter {name} has rank {ndim}"));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(self.u32("dimension")?);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let Some(numel) = numel else {
                return self.fail(at, format!("parameter {name} is too large"));
            };
            let data = self.f32s(numel, &format!("parameter {name}"))?;
            out.push((name, Tensor::new(&shape, data)?));
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return self.fail(
                self.pos,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            );
        }
        Ok(())
    }
}

pub fn encode_checkpoint(table: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let mut buf = CHECKPOINT_MAGIC.to_vec();
    put_u32(&mut buf, VERSION as usize);
    put_table(&mut buf, table);
    buf
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ParamTable> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    r.magic(CHECKPOINT_MAGIC)?;
    let table = r.table()?;
    r.finish()?;
    Ok(table)
}

pub fn save_checkpoint(store: &ParamStore<f32>, path: &Path) -> Result<()> {
    fsutil::atomic_write(path, &encode_checkpoint(&param_table(store)))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamTable> {
    decode_checkpoint(&fsutil::read(path)?, path)
}

/// Replace every parameter of `store` with the checkpoint's values; the
/// store is untouched on any error.
pub fn load_into(store: &mut ParamStore<f32>, path: &Path) -> Result<()> {
    let table = load_checkpoint(path)?;
    let mut next = store.clone();
    next.load_from(&table).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: 8,
        reason: e.to_string(),
    })?;
    *store = next;
    Ok(())
}

pub fn encode_bank(bank: &MemoryBank) -> Vec<u8> {
    let (n, k, c) = (bank.n(), bank.k(), bank.dim());
    let mut buf = BANK_MAGIC.to_vec();
    put_u32(&mut buf, VERSION as usize);
    buf.push(bank.backend().id());
    put_u32(&mut buf, n);
    put_u32(&mut buf, k);
    put_u32(&mut buf, c);
    for l in &bank.clustering.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    put_f32s(&mut buf, bank.clustering.prototypes.data());
    put_table(&mut buf, &param_table(&bank.enhancer_params));
    put_f32s(&mut buf, bank.m.data());
    buf
}

/// Decode a bank; `config` supplies the clustering settings used by later
/// updates, with the backend taken from the file.
pub fn decode_bank(bytes: &[u8], path: &Path, config: &ClusteringConfig) -> Result<MemoryBank> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    r.magic(BANK_MAGIC)?;
    let at = r.pos;
    let backend = Backend::from_id(r.u8("backend")?);
    let Some(backend) = backend else {
        return r.fail(at, "unknown clustering backend");
    };
    let at = r.pos;
    let (n, k, c) = (r.u32("N")?, r.u32("K")?, r.u32("C")?);
    if n == 0 || k == 0 || c == 0 || k > n {
        return r.fail(at, format!("invalid bank extents N={n} K={k} C={c}"));
    }
    let at = r.pos;
    let labels = r.i32s(n, "labels")?;
    if labels.iter().any(|&l| l < 0 || l as usize >= k) {
        return r.fail(at, "label outside [0, K)");
    }
    let prototypes = Tensor::new(&[k, c], r.f32s(k * c, "prototypes")?)?;
    let at = r.pos;
    let table = r.table()?;
    let mut enhancer_params = ParamStore::new();
    let enhancer = Enhancer::new(c, &mut enhancer_params, &mut Rng::new(0))?;
    if let Err(e) = enhancer_params.load_from(&table) {
        return r.fail(at, format!("enhancer parameters: {e}"));
    }
    let m = Tensor::new(&[n, c], r.f32s(n * c, "embeddings")?)?;
    r.finish()?;
    let m_e = enhancer.apply(&enhancer_params, &m)?;
    let bank = MemoryBank {
        m,
        m_e,
        clustering: Clustering {
            raw_labels: labels.clone(),
            labels,
            prototypes,
            fallback: false,
        },
        enhancer,
        enhancer_params,
        config: ClusteringConfig {
            backend,
            ..config.clone()
        },
    };
    bank.validate()?;
    Ok(bank)
}

pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<()> {
    fsutil::atomic_write(path, &encode_bank(bank))
}

pub fn load_bank(path: &Path, config: &ClusteringConfig) -> Result<MemoryBank> {
    decode_bank(&fsutil::read(path)?, path, config)
}
