//! Loading manifest rows as training samples and generating synthetic
//! datasets on disk.

use std::path::Path;

use retromem_core::model::Sample;
use retromem_core::synth::{generate_scene, scene_seed, Scene};
use retromem_core::{Graph, Tensor};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::manifest::{build_manifest, resolve, Manifest, PatternHistogram, SceneRecord, SplitTag};
use crate::netpbm::{read_netpbm, write_netpbm};
use crate::threads::par_map;

/// Offset mixed into the run seed for held-out scenes.
pub const TEST_SEED_SALT: u64 = 0x7e57_0000_0000_0000;

/// Bilinear resize of a `[C, H, W]` tensor.
pub fn resize(t: &Tensor<f32>, h: usize, w: usize) -> Result<Tensor<f32>> {
    let s = t.shape();
    if s[1] == h && s[2] == w {
        return Ok(t.clone());
    }
    let mut g = Graph::new();
    let x = g.constant(t.clone().reshape(&[1, s[0], s[1], s[2]])?);
    let y = g.resize_bilinear(x, h, w)?;
    Ok(g.value(y).clone().reshape(&[s[0], h, w])?)
}

/// Read one row at `size × size`; masks are re-binarized after resizing.
pub fn load_sample(manifest_path: &Path, r: &SceneRecord, size: usize) -> Result<Sample> {
    let image_path = resolve(manifest_path, &r.image);
    let image = read_netpbm(&image_path)?;
    if image.shape()[0] != 3 {
        return Err(Error::Usage(format!(
            "{}: expected an RGB PPM image",
            image_path.display()
        )));
    }
    let mask_path = resolve(manifest_path, &r.mask);
    let mask = read_netpbm(&mask_path)?;
    if mask.shape()[0] != 1 || mask.shape()[1..] != image.shape()[1..] {
        return Err(Error::Usage(format!(
            "{}: mask must be a single-channel PGM of the image's size",
            mask_path.display()
        )));
    }
    let mask = resize(&mask, size, size)?.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    Ok(Sample {
        image: resize(&image, size, size)?,
        mask,
    })
}

pub fn load_samples(
    manifest_path: &Path,
    rows: &[&SceneRecord],
    size: usize,
) -> Result<Vec<Sample>> {
    par_map(rows, |r| load_sample(manifest_path, r, size))
}

fn write_scene(
    dir: &Path,
    id: &str,
    scene: &Scene,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let image = Path::new("images").join(format!("{id}.ppm"));
    let mask = Path::new("masks").join(format!("{id}.pgm"));
    write_netpbm(&scene.image, &dir.join(&image))?;
    write_netpbm(&scene.mask, &dir.join(&mask))?;
    Ok((image, mask))
}

/// Generate `train_count` training scenes, skipping withheld patterns,
/// and `test_count` held-out scenes, then write images, masks and a
/// split-tagged manifest next to `cfg.manifest`.
pub fn gen_data(cfg: &TrainConfig) -> Result<Manifest> {
    let dc = &cfg.data;
    let dir = cfg.manifest.parent().unwrap_or(Path::new("."));
    let mut train: Vec<(u64, Scene)> = Vec::new();
    let mut next = 0usize;
    let budget = 1000 * dc.train_count;
    while train.len() < dc.train_count {
        if next >= budget {
            return Err(Error::Usage(format!(
                "could not draw {} training scenes outside {:?} in {budget} attempts",
                dc.train_count, dc.exclude_train
            )));
        }
        let seeds: Vec<u64> = (next..next + dc.train_count)
            .map(|i| scene_seed(cfg.seed, i))
            .collect();
        next += dc.train_count;
        let batch = par_map(&seeds, |&s| Ok((s, generate_scene(&dc.synth, s)?)))?;
        for (s, scene) in batch {
            if train.len() < dc.train_count && !dc.exclude_train.contains(&scene.pattern) {
                train.push((s, scene));
            }
        }
    }
    let test_seeds: Vec<u64> = (0..dc.test_count)
        .map(|i| scene_seed(cfg.seed ^ TEST_SEED_SALT, i))
        .collect();
    let test = par_map(&test_seeds, |&s| Ok((s, generate_scene(&dc.synth, s)?)))?;

    let histogram = PatternHistogram::from_tags(train.iter().map(|(_, s)| s.pattern));
    let named: Vec<(String, SplitTag, &Scene)> = train
        .iter()
        .enumerate()
        .map(|(i, (_, s))| (format!("train-{i:04}"), SplitTag::Train, s))
        .chain(
            test.iter()
                .enumerate()
                .map(|(i, (_, s))| (format!("test-{i:04}"), SplitTag::Seen, s)),
        )
        .collect();
    let records = par_map(&named, |(id, split, scene)| {
        let (image, mask) = write_scene(dir, id, scene)?;
        Ok(SceneRecord {
            id: id.clone(),
            image,
            mask,
            pattern: scene.pattern,
            split: *split,
        })
    })?;
    let manifest = build_manifest(records, &histogram)?;
    manifest.write(&cfg.manifest)?;
    Ok(manifest)
}
