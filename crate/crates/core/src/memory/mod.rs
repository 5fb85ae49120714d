//! Prototype memory: embedding enhancement, clustering into prototypes,
//! cosine retrieval and the consistency objective.

mod flat;
mod hdbscan;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use flat::{dbscan, kmeans};
pub use hdbscan::hdbscan;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Attention, Bound, Group, LayerNorm, Linear, ParamStore, Scope};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Hdbscan,
    Dbscan,
    Kmeans,
    Direct,
}

impl Backend {
    pub fn id(self) -> u8 {
        match self {
            Backend::Hdbscan => 0,
            Backend::Dbscan => 1,
            Backend::Kmeans => 2,
            Backend::Direct => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        [
            Backend::Hdbscan,
            Backend::Dbscan,
            Backend::Kmeans,
            Backend::Direct,
        ]
        .into_iter()
        .find(|b| b.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Hdbscan => "hdbscan",
            Backend::Dbscan => "dbscan",
            Backend::Kmeans => "kmeans",
            Backend::Direct => "direct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hdbscan" => Ok(Backend::Hdbscan),
            "dbscan" => Ok(Backend::Dbscan),
            "kmeans" => Ok(Backend::Kmeans),
            "direct" => Ok(Backend::Direct),
            _ => Err(Error::Config(format!("unknown clustering backend {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringConfig {
    pub backend: Backend,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub eps: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Hdbscan,
            min_cluster_size: 5,
            min_samples: 5,
            eps: 0.3,
            k: 103,
            seed: 0,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 || self.min_samples < 1 || self.k < 1 || !(self.eps > 0.0) {
            return Err(Error::Config(format!(
                "clustering needs min_cluster_size ≥ 2, min_samples ≥ 1, k ≥ 1, eps > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Outcome of clustering `N` embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Backend output before noise assignment (`-1` = noise).
    pub raw_labels: Vec<i32>,
    /// Final labels, all in `0..K`.
    pub labels: Vec<i32>,
    /// `[K, C]` unit-norm prototypes.
    pub prototypes: Tensor<f32>,
    /// Set when every point came back as noise and k-means was used.
    pub fallback: bool,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.prototypes.shape()[0]
    }

    /// `M_c`: each row replaced by its cluster prototype.
    pub fn assigned(&self) -> Tensor<f32> {
        let c = self.prototypes.shape()[1];
        let mut data = Vec::with_capacity(self.labels.len() * c);
        for &l in &self.labels {
            data.extend_from_slice(self.prototypes.row(l as usize));
        }
        Tensor::new(&[self.labels.len(), c], data).expect("shape")
    }
}

fn unit_rows(m: &Tensor<f32>) -> Vec<f64> {
    let c = m.shape()[1];
    let mut out = Vec::with_capacity(m.numel());
    for row in m.data().chunks(c) {
        let n = libm::sqrt(row.iter().map(|&v| v as f64 * v as f64).sum::<f64>());
        out.extend(
            row.iter()
                .map(|&v| if n > 0.0 { v as f64 / n } else { 0.0 }),
        );
    }
    out
}

fn prototypes(x: &[f64], c: usize, labels: &[i32], k: usize) -> Tensor<f32> {
    let mut sums = vec![0.0f64; k * c];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            for (s, v) in sums[l as usize * c..][..c]
                .iter_mut()
                .zip(&x[i * c..(i + 1) * c])
            {
                *s += v;
            }
        }
    }
    let mut out = Vec::with_capacity(k * c);
    for row in sums.chunks(c) {
        let n = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        out.extend(
            row.iter()
                .map(|&v| if n > 0.0 { (v / n) as f32 } else { 0.0 }),
        );
    }
    Tensor::new(&[k, c], out).expect("shape")
}

fn nearest(protos: &[f64], c: usize, row: &[f64]) -> usize {
    let mut best = 0;
    let mut bs = f64::NEG_INFINITY;
    for (k, p) in protos.chunks(c).enumerate() {
        let s: f64 = p.iter().zip(row).map(|(a, b)| a * b).sum();
        if s > bs {
            bs = s;
            best = k;
        }
    }
    best
}

/// Run the configured backend on row-normalized `m_e [N, C]`, assign
/// noise to the nearest prototype by cosine, and recompute prototypes
/// over the final memberships.
pub fn cluster(m_e: &Tensor<f32>, cfg: &ClusteringConfig) -> Result<Clustering> {
    cfg.validate()?;
    if m_e.ndim() != 2 || m_e.shape()[0] == 0 {
        return crate::error::invalid(
            "cluster",
            format!("expects non-empty [N, C], got {:?}", m_e.shape()),
        );
    }
    let (n, c) = (m_e.shape()[0], m_e.shape()[1]);
    let x = unit_rows(m_e);
    let raw = match cfg.backend {
        Backend::Hdbscan => hdbscan(&x, c, cfg.min_cluster_size, cfg.min_samples),
        Backend::Dbscan => dbscan(&x, c, cfg.eps, cfg.min_samples),
        Backend::Kmeans => kmeans(&x, c, cfg.k, cfg.seed, 100),
        Backend::Direct => (0..n as i32).collect(),
    };
    let mut fallback = false;
    let mut labels = raw.clone();
    if labels.iter().all(|&l| l < 0) {
        fallback = true;
        let k = (libm::ceil(libm::sqrt(n as f64)) as usize).max(1);
        labels = kmeans(&x, c, k, cfg.seed, 100);
    }
    let k = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    if labels.iter().any(|&l| l < 0) {
        let partial = prototypes(&x, c, &labels, k);
        let pf: Vec<f64> = partial.data().iter().map(|&v| v as f64).collect();
        for i in 0..n {
            if labels[i] < 0 {
                labels[i] = nearest(&pf, c, &x[i * c..(i + 1) * c]) as i32;
            }
        }
    }
    let prototypes = prototypes(&x, c, &labels, k);
    Ok(Clustering {
        raw_labels: raw,
        labels,
        prototypes,
        fallback,
    })
}

/// Best prototype for a query: `(k*, s_{q,k*})`, lowest index on ties.
pub fn retrieve(fq: &[f32], prototypes: &Tensor<f32>) -> Result<(usize, f64)> {
    let norm = |v: &[f32]| libm::sqrt(v.iter().map(|&a| a as f64 * a as f64).sum::<f64>());
    let qn = norm(fq);
    if !(qn > 0.0) || !qn.is_finite() {
        return Err(Error::Memory(String::from("retrieve: query has zero norm")));
    }
    if prototypes.ndim() != 2 || prototypes.shape()[1] != fq.len() || prototypes.shape()[0] == 0 {
        return Err(Error::ShapeMismatch {
            op: "retrieve",
            lhs: vec![fq.len()],
            rhs: prototypes.shape().to_vec(),
        });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..prototypes.shape()[0] {
        let p = prototypes.row(k);
        let pn = norm(p);
        let dot: f64 = p.iter().zip(fq).map(|(&a, &b)| a as f64 * b as f64).sum();
        let s = if pn > 0.0 { dot / (qn * pn) } else { 0.0 };
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best)
}

/// `(1/N) Σᵢ ‖M_e[i] − M_c[i]‖²` on the graph.
pub fn consistency_loss<T: Real>(g: &mut Graph<T>, m_e: Var, m_c: Var) -> Result<Var> {
    let (a, b) = (g.shape(m_e).to_vec(), g.shape(m_c).to_vec());
    if a != b || a.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "consistency_loss",
            lhs: a,
            rhs: b,
        });
    }
    let d = g.sub(m_e, m_c)?;
    let sq = g.mul(d, d)?;
    let s = g.sum(sq)?;
    g.scale(s, T::one() / T::of_usize(a[0]))
}

/// Single pre-norm transformer layer applied to the memory items as an
/// unordered set.
#[derive(Clone, Debug)]
pub struct Enhancer {
    pub dim: usize,
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

pub const ENHANCER_HEADS: usize = 4;
pub const ENHANCER_EXPANSION: usize = 2;
/// Initial scale of the two residual output projections, so a fresh
/// enhancer starts close to the identity.
const OUTPUT_STD: f64 = 0.02;

impl Enhancer {
    pub fn new<T: Real>(dim: usize, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<Self> {
        let heads = if dim.is_multiple_of(ENHANCER_HEADS) {
            ENHANCER_HEADS
        } else {
            1
        };
        let mut s = Scope::new(store, rng, Group::Enhancer, "");
        Ok(Self {
            dim,
            ln1: LayerNorm::new(&mut s.sub("ln1"), dim)?,
            attn: Attention::with_out_std(&mut s.sub("attn"), dim, heads, OUTPUT_STD)?,
            ln2: LayerNorm::new(&mut s.sub("ln2"), dim)?,
            fc1: Linear::new(&mut s.sub("fc1"), dim, ENHANCER_EXPANSION * dim, true)?,
            fc2: Linear::with_std(
                &mut s.sub("fc2"),
                ENHANCER_EXPANSION * dim,
                dim,
                true,
                OUTPUT_STD,
            )?,
        })
    }

    /// Structure of an enhancer whose parameters were registered in
    /// `store` by [`Enhancer::new`].
    pub fn from_store<T: Real>(dim: usize, store: &ParamStore<T>) -> Result<Self> {
        let mut scratch = ParamStore::<T>::new();
        let e = Self::new(dim, &mut scratch, &mut Rng::new(0))?;
        let same = scratch.len() == store.len()
            && scratch
                .params()
                .iter()
                .zip(store.params())
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if !same {
            return Err(Error::Memory(format!(
                "enhancer parameters do not match dimension {dim}"
            )));
        }
        Ok(e)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, m: Var) -> Result<Var> {
        let s = g.shape(m);
        if s.len() != 2 || s[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "enhance",
                lhs: s.to_vec(),
                rhs: vec![self.dim],
            });
        }
        let h = self.ln1.forward(g, p, m)?;
        let a = self.attn.forward(g, p, h, h)?.out;
        let x = g.add(m, a)?;
        let h = self.ln2.forward(g, p, x)?;
        let h = self.fc1.forward(g, p, h)?;
        let h = g.gelu(h)?;
        let h = self.fc2.forward(g, p, h)?;
        g.add(x, h)
    }

    /// Forward pass outside of training.
    pub fn apply(&self, store: &ParamStore<f32>, m: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let p = store.bind(&mut g, |_| false);
        let x = g.constant(m.clone());
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }
}

/// Raw and enhanced embeddings, their clustering and the enhancer.
#[derive(Clone, Debug)]
pub struct MemoryBank {
    pub m: Tensor<f32>,
    pub m_e: Tensor<f32>,
    pub clustering: Clustering,
    pub enhancer: Enhancer,
    pub enhancer_params: ParamStore<f32>,
    pub config: ClusteringConfig,
}

impl MemoryBank {
    /// Enhance `m` with a freshly initialized enhancer and cluster.
    pub fn build(m: Tensor<f32>, config: ClusteringConfig, seed: u64) -> Result<Self> {
        if m.ndim() != 2 || m.shape()[0] == 0 {
            return crate::error::invalid("build_memory", "embeddings must be a non-empty [N, C]");
        }
        let mut enhancer_params = ParamStore::new();
        let enhancer = Enhancer::new(m.shape()[1], &mut enhancer_params, &mut Rng::new(seed))?;
        Self::with_enhancer(m, config, enhancer, enhancer_params)
    }

    pub fn with_enhancer(
        m: Tensor<f32>,
        config: ClusteringConfig,
        enhancer: Enhancer,
        enhancer_params: ParamStore<f32>,
    ) -> Result<Self> {
        let m_e = enhancer.apply(&enhancer_params, &m)?;
        let clustering = cluster(&m_e, &config)?;
        Ok(Self {
            m,
            m_e,
            clustering,
            enhancer,
            enhancer_params,
            config,
        })
    }

    pub fn n(&self) -> usize {
        self.m.shape()[0]
    }

    pub fn k(&self) -> usize {
        self.clustering.k()
    }

    pub fn dim(&self) -> usize {
        self.m.shape()[1]
    }

    pub fn backend(&self) -> Backend {
        self.config.backend
    }

    /// Re-enhance with the current enhancer weights and re-cluster. The
    /// new clustering replaces the old one only once fully computed.
    pub fn update(&mut self) -> Result<()> {
        let m_e = self.enhancer.apply(&self.enhancer_params, &self.m)?;
        let clustering = cluster(&m_e, &self.config)?;
        self.m_e = m_e;
        self.clustering = clustering;
        Ok(())
    }

    pub fn retrieve(&self, fq: &[f32]) -> Result<(usize, f64)> {
        retrieve(fq, &self.clustering.prototypes)
    }

    /// Check the documented invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Memory(m));
        let (n, c) = (self.n(), self.dim());
        let unit = |row: &[f32]| {
            let s: f64 = row.iter().map(|&v| v as f64 * v as f64).sum();
            (libm::sqrt(s) - 1.0).abs() <= 1e-5
        };
        if let Some(i) = (0..n).find(|&i| !unit(self.m.row(i))) {
            return fail(format!("embedding row {i} is not unit norm"));
        }
        let k = self.k();
        if k == 0 || self.clustering.labels.len() != n {
            return fail(format!(
                "bank has K={k} with {} labels for N={n}",
                self.clustering.labels.len()
            ));
        }
        if self
            .clustering
            .labels
            .iter()
            .any(|&l| l < 0 || l as usize >= k)
        {
            return fail(String::from("label outside [0, K)"));
        }
        if self.clustering.prototypes.shape() != [k, c] {
            return fail(format!(
                "prototype shape {:?}",
                self.clustering.prototypes.shape()
            ));
        }
        if let Some(i) = (0..k).find(|&i| !unit(self.clustering.prototypes.row(i))) {
            return fail(format!("prototype {i} is not unit norm"));
        }
        Ok(())
    }
}
