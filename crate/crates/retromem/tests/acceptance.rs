//! Acceptance run: one pass/fail line per criterion. Exits nonzero when a
//! criterion fails that is not listed in `KNOWN_UNMET`.

mod common;
#[path = "../../core/tests/support/gradcases.rs"]
mod gradcases;
#[path = "../../core/tests/support/hdbscan_oracle.rs"]
mod hdbscan_oracle;
#[path = "../../core/tests/support/metric_oracles.rs"]
mod metric_oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use retromem::config::{Settings, TrainConfig};
use retromem::eval::{evaluate_split, prediction_path};
use retromem::format::{
    decode_bank, decode_checkpoint, encode_bank, encode_checkpoint, load_bank, load_into,
    param_table, save_bank, save_checkpoint,
};
use retromem::manifest::{
    build_manifest, resolve, Manifest, PatternHistogram, SceneRecord, SplitTag,
};
use retromem::netpbm::Netpbm;
use retromem::{commands, data};
use retromem_core::decoder::Stage;
use retromem_core::ipr::{Ipr, IprConfig};
use retromem_core::loss::total_loss;
use retromem_core::memory::{cluster, consistency_loss, hdbscan, retrieve, ClusteringConfig};
use retromem_core::metrics::{self, evaluate, MetricReport};
use retromem_core::model::{Model, ModelConfig, Sample};
use retromem_core::nn::ParamStore;
use retromem_core::rng::Rng;
use retromem_core::synth::PatternTag;
use retromem_core::train::evaluate_loss;
use retromem_core::{Graph, Tensor};

/// Criteria expected to fail at desk scale; see the decisions ledger.
const KNOWN_UNMET: [u32; 1] = [7];

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(t: Duration, limit: f64, what: &str) -> Result<(), String> {
    let s = t.as_secs_f64();
    if s < limit {
        Ok(())
    } else {
        Err(format!("{what} took {s:.1} s, limit {limit} s"))
    }
}

fn c1_gradients() -> Check {
    let t = Instant::now();
    let (mut n, mut worst, mut worst_name) = (0usize, 0.0f64, "");
    for seed in gradcases::SEEDS {
        for (name, errs) in gradcases::op_cases(seed)
            .into_iter()
            .chain(gradcases::block_cases(seed))
        {
            let w = gradcases::worst(&errs);
            ensure!(
                w < gradcases::TOL,
                "{name} seed {seed}: relative error {w:.2e}"
            );
            if w > worst {
                (worst, worst_name) = (w, name);
            }
            n += 1;
        }
    }
    within(t.elapsed(), 60.0, "gradient checks")?;
    Ok(format!(
        "{n} checks over {} seeds, worst {worst:.1e} ({worst_name})",
        gradcases::SEEDS.len()
    ))
}

fn instance(seed: u64) -> (Vec<f64>, usize, usize, usize) {
    let mut rng = Rng::new(seed ^ 0xacce);
    let n = 4 + rng.below(61);
    let dim = 1 + rng.below(3);
    let (mcs, ms) = (2 + rng.below(5), 1 + rng.below(5));
    let centres: Vec<f64> = (0..3 * dim).map(|_| rng.range(-4.0, 4.0)).collect();
    let x = (0..n)
        .flat_map(|_| {
            let c = rng.below(3);
            (0..dim)
                .map(|k| centres[c * dim + k] + rng.normal() * 0.8)
                .collect::<Vec<_>>()
        })
        .map(|v| {
            if seed.is_multiple_of(4) {
                (v * 2.0).round() / 2.0
            } else {
                v
            }
        })
        .collect();
    (x, dim, mcs, ms)
}

fn c2_clustering() -> Check {
    let t = Instant::now();
    let count = 30;
    for seed in 0..count {
        let (x, dim, mcs, ms) = instance(seed);
        let raw: Vec<usize> = hdbscan(&x, dim, mcs, ms)
            .iter()
            .map(|&l| if l < 0 { usize::MAX } else { l as usize })
            .collect();
        let got = hdbscan_oracle::canonical(&raw);
        let want = hdbscan_oracle::labels(&x, dim, mcs, ms);
        ensure!(got == want, "instance {seed}: {got:?} vs oracle {want:?}");
    }
    let mut rng = Rng::new(2);
    let blobs: Vec<f32> = (0..40)
        .flat_map(|i| {
            let c = if i % 2 == 0 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            };
            c.map(|v| (v + 0.03 * rng.normal()) as f32)
        })
        .collect();
    let c = cluster(
        &Tensor::new(&[40, 3], blobs).unwrap(),
        &ClusteringConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(c.k() == 2, "two blobs gave K = {}", c.k());
    ensure!(
        c.raw_labels.iter().all(|&l| l >= 0),
        "two blobs left noise before assignment"
    );
    ensure!(c.labels.iter().all(|&l| l >= 0), "noise after assignment");
    within(t.elapsed(), 30.0, "clustering checks")?;
    Ok(format!(
        "{count} random instances match the oracle; two blobs give K = 2 with no noise"
    ))
}

fn unit(v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn c3_retrieval() -> Check {
    for seed in 0..100u64 {
        let mut rng = Rng::new(seed);
        let (k, c) = (1 + rng.below(12), 2 + rng.below(7));
        let protos: Vec<f32> = (0..k)
            .flat_map(|_| unit(rng.normal_tensor::<f32>(&[c], 1.0).into_data()))
            .collect();
        let protos = Tensor::new(&[k, c], protos).unwrap();
        let q = rng.normal_tensor::<f32>(&[c], 1.0).into_data();
        let (base, _) = retrieve(&q, &protos).map_err(|e| e.to_string())?;
        for f in [1e-3f32, 0.5, 7.0, 1e3] {
            let scaled: Vec<f32> = q.iter().map(|v| v * f).collect();
            let (kk, s) = retrieve(&scaled, &protos).map_err(|e| e.to_string())?;
            ensure!(
                kk == base,
                "bank {seed}: scaling by {f} moved argmax {base} -> {kk}"
            );
            ensure!((-1.0..=1.0).contains(&s), "similarity {s} outside [-1, 1]");
        }
        for i in 0..k {
            let (kk, s) = retrieve(protos.row(i), &protos).map_err(|e| e.to_string())?;
            let dup = (0..i).any(|j| protos.row(j) == protos.row(i));
            ensure!(dup || kk == i, "self-retrieval of {i} returned {kk}");
            ensure!((s - 1.0).abs() <= 1e-6, "self-similarity {s}");
        }
    }
    let tied = Tensor::new(&[4, 2], vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
    for (q, want) in [([1.0f32, 0.0], 1), ([0.0, 1.0], 0), ([1.0, 1.0], 0)] {
        let (kk, _) = retrieve(&q, &tied).map_err(|e| e.to_string())?;
        ensure!(kk == want, "tie for {q:?} went to {kk}, expected {want}");
    }
    Ok(
        "argmax stable under scaling on 100 banks, self-similarity 1, ties go to the lowest index"
            .into(),
    )
}

fn c4_degeneracy() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut store = ParamStore::<f64>::new();
        let cfg = IprConfig {
            latent_dim: 6,
            heads: 2,
            proto_tokens: 1,
            graph_nodes: 3,
        };
        let ipr = Ipr::new(cfg, 6, &mut store, &mut Rng::new(seed)).map_err(|e| e.to_string())?;
        let mut rng = Rng::new(seed + 1000);
        let mut g = Graph::new();
        let p = store.bind(&mut g, |_| false);
        let f3 = g.constant(rng.normal_tensor(&[1, 6, 5, 4], 1.0));
        let proto = g.constant(rng.normal_tensor(&[1, 6], 1.0));
        let st = ipr
            .forward(&mut g, &p, f3, proto)
            .map_err(|e| e.to_string())?;
        let tl = g.value(st.tl);
        let (n, c) = (tl.shape()[0], tl.shape()[1]);
        for j in 0..c {
            let col: Vec<f64> = (0..n).map(|i| tl.at(&[i, j])).collect();
            let range = col.iter().copied().fold(f64::MIN, f64::max)
                - col.iter().copied().fold(f64::MAX, f64::min);
            worst = worst.max(range);
        }
    }
    ensure!(worst < 1e-6, "cross-attention spatial range {worst:.2e}");
    Ok(format!(
        "worst per-channel spatial range {worst:.1e} over 20 random inputs"
    ))
}

fn pair(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Rng::new(seed ^ 0x5eed);
    let density = rng.range(0.1, 0.9);
    let g: Vec<f64> = (0..64)
        .map(|_| if rng.uniform() < density { 1.0 } else { 0.0 })
        .collect();
    let p = g
        .iter()
        .map(|&v| ((v * 0.5 + 0.5 * rng.uniform()) * 255.0).round() / 255.0)
        .collect();
    (p, g)
}

fn c5_metrics() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let (p, g) = pair(seed);
        let pairs = [
            (
                "S_alpha",
                metrics::s_measure(&p, &g, 8, 8),
                metric_oracles::s_measure(&p, &g, 8, 8),
            ),
            (
                "E_m",
                metrics::e_measure(&p, &g, 8, 8),
                metric_oracles::e_measure(&p, &g),
            ),
            (
                "F_w",
                metrics::weighted_f(&p, &g, 8, 8),
                metric_oracles::weighted_f(&p, &g, 8, 8),
            ),
            (
                "F_adp",
                metrics::adaptive_f(&p, &g),
                metric_oracles::adaptive_f(&p, &g),
            ),
            ("MAE", metrics::mae(&p, &g), metric_oracles::mae(&p, &g)),
        ];
        for (name, a, b) in pairs {
            ensure!(
                (a - b).abs() <= 1e-6,
                "{name} pair {seed}: {a} vs oracle {b}"
            );
            worst = worst.max((a - b).abs());
        }
        let perfect = evaluate(&g, &g, 8, 8).values();
        ensure!(
            perfect == [1.0, 1.0, 1.0, 1.0, 0.0],
            "perfect prediction scored {perfect:?}"
        );
    }
    Ok(format!(
        "50 pairs within {worst:.1e} of the oracles; perfect cases exact"
    ))
}

fn c6_losses() -> Check {
    let target = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    for mag in [40.0, 60.0] {
        let mut g = Graph::<f64>::new();
        let logits: Vec<f64> = target
            .iter()
            .map(|&t| if t == 1.0 { mag } else { -mag })
            .collect();
        let p = g.constant(Tensor::from_f64(&[1, 1, 2, 4], &logits).unwrap());
        let y = g.constant(Tensor::from_f64(&[1, 1, 2, 4], &target).unwrap());
        let (_, r) = total_loss(&mut g, [p, p, p], y, None).map_err(|e| e.to_string())?;
        for i in 0..3 {
            ensure!(r.l_iou[i] == 0.0, "IoU loss {} at ±{mag}", r.l_iou[i]);
            ensure!(r.l_bce[i] < 1e-6, "BCE {} at ±{mag}", r.l_bce[i]);
        }
    }
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = Rng::new(seed);
        let mut g = Graph::<f64>::new();
        let m = g.constant(rng.normal_tensor(&[6, 4], 1.0));
        let same = consistency_loss(&mut g, m, m).map_err(|e| e.to_string())?;
        ensure!(
            g.value(same).data()[0] == 0.0,
            "L_c(M, M) = {}",
            g.value(same).data()[0]
        );
        let mc = g.constant(rng.normal_tensor(&[6, 4], 1.0));
        let lc = consistency_loss(&mut g, m, mc).map_err(|e| e.to_string())?;
        let ps: Vec<_> = (0..3)
            .map(|_| g.constant(rng.normal_tensor(&[1, 1, 4, 4], 2.0)))
            .collect();
        let mask = Tensor::new(
            &[1, 1, 4, 4],
            (0..16)
                .map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let y = g.constant(mask);
        let (loss, r) =
            total_loss(&mut g, [ps[0], ps[1], ps[2]], y, Some(lc)).map_err(|e| e.to_string())?;
        let sum: f64 = r.l_seg.iter().sum::<f64>() + r.l_c;
        let parts: f64 = (0..3).map(|i| r.l_bce[i] + r.l_iou[i]).sum::<f64>() + r.l_c;
        worst = worst
            .max((sum - r.total).abs())
            .max((parts - r.total).abs())
            .max((g.value(loss).data()[0] - r.total).abs());
    }
    ensure!(worst <= 1e-6, "decomposition off by {worst:.2e}");
    Ok(format!("saturated logits give IoU 0 and BCE < 1e-6, L_c(M, M) = 0, decomposition within {worst:.1e}"))
}

fn config(
    path: &Path,
    out: &Path,
    overrides: &[&str],
    stage: Stage,
) -> Result<TrainConfig, String> {
    let mut s = Settings::read(path).map_err(|e| e.to_string())?;
    s.set("run.out", out.display().to_string());
    for o in overrides {
        s.set_pair(o).map_err(|e| e.to_string())?;
    }
    TrainConfig::resolve(&s, stage).map_err(|e| e.to_string())
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn train_mae(samples: &[Sample], predict: impl Fn(&Tensor<f32>) -> Tensor<f32>) -> f64 {
    let per: Vec<f64> = samples
        .iter()
        .map(|s| {
            let p: Vec<f64> = predict(&s.image).data().iter().map(|&v| v as f64).collect();
            let g: Vec<f64> = s.mask.data().iter().map(|&v| v as f64).collect();
            metrics::mae(&p, &g)
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

fn c7_overfit() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let conf = repo_file("configs/overfit.conf");
    let learn = config(&conf, dir.path(), &[], Stage::Learn)?;
    let recall = config(&conf, dir.path(), &[], Stage::Recall)?;
    let err = |e: retromem::Error| e.to_string();
    commands::gen_data(&learn).map_err(err)?;
    let manifest = Manifest::read(&learn.manifest).map_err(err)?;
    let samples = data::load_samples(&learn.manifest, &manifest.train_rows(), learn.input_size)
        .map_err(err)?;
    ensure!(
        samples.len() == 8 && samples[0].image.shape() == [3, 64, 64],
        "expected 8 scenes at 64×64"
    );
    let steps = |c: &TrainConfig| c.schedule.epochs * c.schedule.steps_per_epoch(samples.len());
    ensure!(
        steps(&learn) <= 500 && steps(&recall) <= 500,
        "more than 500 steps per stage"
    );

    let t = Instant::now();
    let s1 = commands::train_stage1(&learn).map_err(err)?;
    let t1 = t.elapsed();
    let l1 = evaluate_loss(&s1.model, None, &samples).map_err(|e| e.to_string())?;
    let mae1 = train_mae(&samples, |x| s1.model.predict_learn(x).unwrap());
    commands::build_memory(&learn).map_err(err)?;
    let t = Instant::now();
    let s2 = commands::train_stage2(&recall).map_err(err)?;
    let t2 = t.elapsed();
    let l2 = evaluate_loss(&s2.model, Some(&s2.bank), &samples).map_err(|e| e.to_string())?;
    let mae2 = train_mae(&samples, |x| s2.model.infer(&s2.bank, x).unwrap().prob);

    let (seg1, seg2) = (l1.seg_total(), l2.seg_total());
    let levels = |r: &[f64; 3]| r.map(|v| format!("{v:.3}")).join("/");
    let detail = format!(
        "stage 1: MAE {mae1:.4}, L_seg {seg1:.3} ({}), {:.0} s; stage 2: MAE {mae2:.4}, L_seg {seg2:.3} ({}), {:.0} s, K = {}",
        levels(&l1.l_seg),
        t1.as_secs_f64(),
        levels(&l2.l_seg),
        t2.as_secs_f64(),
        s2.bank.k()
    );
    let mut failures = Vec::new();
    if mae2 >= 0.05 {
        failures.push("MAE ≥ 0.05");
    }
    if seg2 >= 0.05 {
        failures.push("L_seg ≥ 0.05");
    }
    if seg2 > seg1 {
        failures.push("stage-2 loss above stage-1");
    }
    if (t1 + t2).as_secs_f64() >= 600.0 {
        failures.push("over 10 minutes");
    }
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join(", ")))
    }
}

fn tiny_model(seed: u64) -> Model {
    let mut cfg = ModelConfig::desk();
    cfg.encoder.depth = 3;
    cfg.encoder.dma_layers = vec![0, 2];
    cfg.encoder.tap_layers = [0, 1, 2];
    Model::new(cfg, seed).unwrap()
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn c8_persistence() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let err = |e: retromem::Error| e.to_string();
    let a = tiny_model(1);
    let ck = dir.path().join("m.rmck");
    save_checkpoint(&a.params, &ck).map_err(err)?;
    let mut b = tiny_model(2);
    load_into(&mut b.params, &ck).map_err(err)?;
    for (x, y) in a.params.params().iter().zip(b.params.params()) {
        ensure!(
            x.name == y.name && bits(&x.value) == bits(&y.value),
            "parameter {} differs after reload",
            x.name
        );
    }
    let ck_bytes = std::fs::read(&ck).map_err(|e| e.to_string())?;
    ensure!(
        encode_checkpoint(&param_table(&b.params)) == ck_bytes,
        "re-encoded checkpoint differs"
    );

    let bank = common::bank(16, 8, 3);
    let bk = dir.path().join("b.rmem");
    save_bank(&bank, &bk).map_err(err)?;
    let back = load_bank(&bk, &bank.config).map_err(err)?;
    ensure!(
        back.clustering.labels == bank.clustering.labels
            && bits(&back.clustering.prototypes) == bits(&bank.clustering.prototypes)
            && bits(&back.m) == bits(&bank.m)
            && bits(&back.m_e) == bits(&bank.m_e),
        "bank contents differ after reload"
    );
    let bank_bytes = std::fs::read(&bk).map_err(|e| e.to_string())?;
    ensure!(encode_bank(&back) == bank_bytes, "re-encoded bank differs");

    let mut rejected = 0;
    for cut in 0..ck_bytes.len() {
        ensure!(
            decode_checkpoint(&ck_bytes[..cut], &ck).is_err(),
            "checkpoint truncated to {cut} bytes accepted"
        );
        rejected += 1;
    }
    for cut in 0..bank_bytes.len() {
        ensure!(
            decode_bank(&bank_bytes[..cut], &bk, &bank.config).is_err(),
            "bank truncated to {cut} bytes accepted"
        );
        rejected += 1;
    }
    std::fs::write(&ck, &ck_bytes[..ck_bytes.len() - 3]).map_err(|e| e.to_string())?;
    let mut c = tiny_model(4);
    let before = param_table(&c.params);
    ensure!(
        load_into(&mut c.params, &ck).is_err(),
        "truncated checkpoint loaded"
    );
    ensure!(
        param_table(&c.params) == before,
        "failed load changed the model"
    );
    Ok(format!(
        "checkpoint and bank round-trip bit-exactly; {rejected} truncations rejected"
    ))
}

fn c9_splits() -> Check {
    let mut tags = vec![PatternTag::SmallObject; 49];
    tags.extend(vec![PatternTag::LargeObject; 500]);
    tags.extend(vec![PatternTag::BackgroundMatch; 451]);
    let hist = PatternHistogram::from_tags(tags);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("data");
    let preds = dir.path().join("preds");
    let patterns = [
        PatternTag::SmallObject,
        PatternTag::EdgeBlur,
        PatternTag::LargeObject,
    ];
    let mut rng = Rng::new(9);
    let mut records = Vec::new();
    for i in 0..12 {
        let id = format!("row{i:02}");
        let mask: Vec<u8> = (0..64)
            .map(|_| if rng.uniform() < 0.4 { 255 } else { 0 })
            .collect();
        let pred: Vec<u8> = mask
            .iter()
            .map(|&m| (m as f64 * 0.6 + rng.range(0.0, 100.0)) as u8)
            .collect();
        let img = |pixels| Netpbm {
            channels: 1,
            width: 8,
            height: 8,
            pixels,
        };
        let mask_rel = PathBuf::from(format!("masks/{id}.pgm"));
        img(mask)
            .write(&root.join(&mask_rel))
            .map_err(|e| e.to_string())?;
        img(pred)
            .write(&prediction_path(&preds, &id))
            .map_err(|e| e.to_string())?;
        records.push(SceneRecord {
            id,
            image: PathBuf::from("unused.ppm"),
            mask: mask_rel,
            pattern: patterns[i % 3],
            split: SplitTag::Seen,
        });
    }
    let manifest = build_manifest(records, &hist).map_err(|e| e.to_string())?;
    for r in &manifest.records {
        let want = match r.pattern {
            PatternTag::SmallObject => SplitTag::Rare,
            PatternTag::EdgeBlur => SplitTag::Unseen,
            _ => SplitTag::Seen,
        };
        ensure!(
            r.split == want,
            "{} tagged {} instead of {want}",
            r.id,
            r.split
        );
    }
    let mpath = root.join("manifest.tsv");
    manifest.write(&mpath).map_err(|e| e.to_string())?;
    let ev = evaluate_split(&preds, &manifest, &mpath).map_err(|e| e.to_string())?;
    let load = |p: &Path| -> Vec<f64> {
        Netpbm::read(p)
            .unwrap()
            .pixels
            .iter()
            .map(|&v| v as f64 / 255.0)
            .collect()
    };
    for t in SplitTag::TEST {
        let rows: Vec<MetricReport> = manifest
            .with_split(t)
            .map(|r| {
                evaluate(
                    &load(&prediction_path(&preds, &r.id)),
                    &load(&resolve(&mpath, &r.mask)),
                    8,
                    8,
                )
            })
            .collect();
        let s = ev
            .splits
            .iter()
            .find(|s| s.split == Some(t))
            .ok_or(format!("split {t} missing"))?;
        ensure!(
            s.count == rows.len() && s.metrics == MetricReport::mean(&rows),
            "split {t} differs from recomputation"
        );
    }
    Ok("4.9% / 0% / 50% patterns tagged rare / unseen / seen; split aggregates equal recomputation exactly".into())
}

fn c10_determinism() -> Check {
    let conf_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let conf = common::write_config(conf_dir.path(), "seed = 3\n");
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let learn = config(&conf, dir.path(), &["train.epochs=4"], Stage::Learn)?;
        let recall = config(&conf, dir.path(), &["train.epochs=4"], Stage::Recall)?;
        let err = |e: retromem::Error| e.to_string();
        commands::gen_data(&learn).map_err(err)?;
        commands::train_stage1(&learn).map_err(err)?;
        commands::build_memory(&learn).map_err(err)?;
        commands::train_stage2(&recall).map_err(err)?;
        let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
        files.push([
            read(&learn.paths.stage1_checkpoint)?,
            read(&learn.paths.bank)?,
            read(&recall.paths.stage2_checkpoint)?,
            read(&recall.paths.stage2_bank)?,
        ]);
    }
    let names = [
        "stage-1 checkpoint",
        "bank",
        "stage-2 checkpoint",
        "recall bank",
    ];
    for (i, name) in names.iter().enumerate() {
        ensure!(files[0][i] == files[1][i], "{name} differs between runs");
    }
    Ok("two full runs produce byte-identical checkpoints and banks".into())
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Check); 10] = [
        (1, "finite-difference gradients", c1_gradients),
        (2, "clustering oracle", c2_clustering),
        (3, "retrieval invariants", c3_retrieval),
        (4, "single-token attention degeneracy", c4_degeneracy),
        (5, "metric oracles", c5_metrics),
        (6, "loss identities", c6_losses),
        (7, "two-stage overfit", c7_overfit),
        (8, "persistence", c8_persistence),
        (9, "split protocol", c9_splits),
        (10, "determinism", c10_determinism),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut unexpected = 0;
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => {
                passed += 1;
                println!("criterion {id:>2} PASS {name}: {detail} [{secs:.1} s]");
            }
            Err(detail) => {
                let known = KNOWN_UNMET.contains(&id);
                if !known {
                    unexpected += 1;
                }
                let tag = if known {
                    " (known, see decisions ledger)"
                } else {
                    ""
                };
                println!("criterion {id:>2} FAIL{tag} {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {passed}/{ran} criteria passed, {unexpected} unexpected failures");
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
