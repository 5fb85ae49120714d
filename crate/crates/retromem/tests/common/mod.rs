#![allow(dead_code)]

use std::path::Path;

use retromem_core::memory::{ClusteringConfig, MemoryBank};
use retromem_core::rng::Rng;
use retromem_core::Tensor;

/// A model small enough to train in seconds at 32×32.
pub const TINY: &str = "\
[data]
input_size = 32

[encoder]
patch_size = 8
embed_dim = 8
depth = 3
heads = 2
mlp_ratio = 2
dma_layers = 0, 2
dma_down_dim = 4
tap_layers = 0, 1, 2
pos_grid = 4

[decoder]
dim = 4
kernel = 3

[ipr]
latent_dim = 8
heads = 2
proto_tokens = 2
graph_nodes = 2

[train]
epochs = 2
batch_size = 2
learning_rate = 0.003

[clustering]
min_cluster_size = 2
min_samples = 2

[synth]
train_count = 4
test_count = 3
object_scale = 0.1, 0.3
";

pub fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("run.conf");
    std::fs::write(
        &p,
        format!(
            "{TINY}\n[run]\nout = {}\n{extra}",
            dir.join("run").display()
        ),
    )
    .unwrap();
    p
}

/// Unit-norm random embeddings.
pub fn embeddings(n: usize, c: usize, seed: u64) -> Tensor<f32> {
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(n * c);
    for _ in 0..n {
        let row: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        data.extend(row.iter().map(|v| (v / norm) as f32));
    }
    Tensor::new(&[n, c], data).unwrap()
}

pub fn bank(n: usize, c: usize, seed: u64) -> MemoryBank {
    let cfg = ClusteringConfig {
        min_cluster_size: 2,
        min_samples: 2,
        ..ClusteringConfig::default()
    };
    MemoryBank::build(embeddings(n, c, seed), cfg, seed).unwrap()
}
