//! Binary segmentation metrics on `h × w` maps. Predictions are
//! probabilities in `[0, 1]`; ground truth is foreground where `> 0.5`.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub s_alpha: f64,
    pub e_m: f64,
    pub f_w: f64,
    pub f_adp: f64,
    pub mae: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 5] = ["s_alpha", "e_m", "f_w", "f_adp", "mae"];

    pub fn values(&self) -> [f64; 5] {
        [self.s_alpha, self.e_m, self.f_w, self.f_adp, self.mae]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            s_alpha: v[0],
            e_m: v[1],
            f_w: v[2],
            f_adp: v[3],
            mae: v[4],
        }
    }

    /// Arithmetic mean of several reports.
    pub fn mean(reports: &[MetricReport]) -> Self {
        let mut acc = [0.0; 5];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        let n = reports.len().max(1) as f64;
        Self::from_values(acc.map(|a| a / n))
    }
}

pub fn evaluate(pred: &[f64], gt: &[f64], h: usize, w: usize) -> MetricReport {
    MetricReport {
        s_alpha: s_measure(pred, gt, h, w),
        e_m: e_measure(pred, gt, h, w),
        f_w: weighted_f(pred, gt, h, w),
        f_adp: adaptive_f(pred, gt),
        mae: mae(pred, gt),
    }
}

fn fg(gt: &[f64]) -> Vec<bool> {
    gt.iter().map(|&v| v > 0.5).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mae(pred: &[f64], gt: &[f64]) -> f64 {
    let g = fg(gt);
    pred.iter()
        .zip(&g)
        .map(|(&p, &f)| (p - if f { 1.0 } else { 0.0 }).abs())
        .sum::<f64>()
        / pred.len() as f64
}

const ALPHA: f64 = 0.5;

/// Structure measure: object-aware plus region-aware similarity.
pub fn s_measure(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let g = fg(gt);
    let y = g.iter().filter(|&&b| b).count() as f64 / g.len() as f64;
    if y == 0.0 {
        return 1.0 - mean(pred);
    }
    if y == 1.0 {
        return mean(pred);
    }
    let s = ALPHA * s_object(pred, &g, y) + (1.0 - ALPHA) * s_region(pred, &g, h, w);
    s.max(0.0)
}

fn s_object(pred: &[f64], g: &[bool], u: f64) -> f64 {
    let fg_vals: Vec<f64> = pred
        .iter()
        .zip(g)
        .filter(|(_, &b)| b)
        .map(|(&p, _)| p)
        .collect();
    let bg_vals: Vec<f64> = pred
        .iter()
        .zip(g)
        .filter(|(_, &b)| !b)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    u * object_score(&fg_vals) + (1.0 - u) * object_score(&bg_vals)
}

fn object_score(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    let sd = if v.len() < 2 {
        0.0
    } else {
        libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64)
    };
    2.0 * m / (m * m + 1.0 + sd)
}

/// Split index along one axis: the pixel edge nearest the foreground
/// centroid.
fn split_at(coords_sum: f64, count: f64) -> usize {
    libm::round(coords_sum / count + 0.5) as usize
}

fn s_region(pred: &[f64], g: &[bool], h: usize, w: usize) -> f64 {
    let (mut sy, mut sx, mut cnt) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if g[y * w + x] {
                sy += y as f64;
                sx += x as f64;
                cnt += 1.0;
            }
        }
    }
    let cy = split_at(sy, cnt);
    let cx = split_at(sx, cnt);
    let area = (h * w) as f64;
    let blocks = [
        (0, cy, 0, cx),
        (0, cy, cx, w),
        (cy, h, 0, cx),
        (cy, h, cx, w),
    ];
    let mut total = 0.0;
    for (y0, y1, x0, x1) in blocks {
        let n = (y1 - y0) * (x1 - x0);
        if n == 0 {
            continue;
        }
        let mut pb = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for y in y0..y1 {
            for x in x0..x1 {
                pb.push(pred[y * w + x]);
                gb.push(if g[y * w + x] { 1.0 } else { 0.0 });
            }
        }
        total += n as f64 * ssim(&pb, &gb);
    }
    total / area
}

fn ssim(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len();
    let x = mean(p);
    let y = mean(g);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    if n >= 2 {
        for (&a, &b) in p.iter().zip(g) {
            sxx += (a - x) * (a - x);
            syy += (b - y) * (b - y);
            sxy += (a - x) * (b - y);
        }
        let d = (n - 1) as f64;
        sxx /= d;
        syy /= d;
        sxy /= d;
    }
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / beta
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub const E_THRESHOLDS: usize = 256;

/// Enhanced-alignment measure averaged over 256 binarization thresholds.
pub fn e_measure(pred: &[f64], gt: &[f64], _h: usize, _w: usize) -> f64 {
    let g = fg(gt);
    let gf: Vec<f64> = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let n = pred.len() as f64;
    let n_fg = gf.iter().sum::<f64>();
    let mg = n_fg / n;
    let mut acc = 0.0;
    let mut bin = vec![0.0; pred.len()];
    for t in 0..E_THRESHOLDS {
        let th = (t as f64 + 0.5) / E_THRESHOLDS as f64;
        for (b, &p) in bin.iter_mut().zip(pred) {
            *b = if p >= th { 1.0 } else { 0.0 };
        }
        acc += enhanced_alignment(&bin, &gf, n_fg, mg);
    }
    acc / E_THRESHOLDS as f64
}

fn enhanced_alignment(bin: &[f64], gf: &[f64], n_fg: f64, mg: f64) -> f64 {
    let n = bin.len() as f64;
    if n_fg == 0.0 {
        return bin.iter().map(|b| 1.0 - b).sum::<f64>() / n;
    }
    if n_fg == n {
        return bin.iter().sum::<f64>() / n;
    }
    let mp = bin.iter().sum::<f64>() / n;
    let mut s = 0.0;
    for (&b, &g) in bin.iter().zip(gf) {
        let (a, c) = (b - mp, g - mg);
        let align = 2.0 * a * c / (a * a + c * c);
        s += (align + 1.0) * (align + 1.0) / 4.0;
    }
    s / n
}

const WF_BETA2: f64 = 1.0;
const WF_SIGMA: f64 = 5.0;
const WF_RADIUS: usize = 3;

/// Normalized 7×7 Gaussian weights, row-major.
pub fn gaussian_kernel() -> Vec<f64> {
    let k = 2 * WF_RADIUS + 1;
    let mut out = Vec::with_capacity(k * k);
    for y in 0..k {
        for x in 0..k {
            let dy = y as f64 - WF_RADIUS as f64;
            let dx = x as f64 - WF_RADIUS as f64;
            out.push(libm::exp(
                -(dx * dx + dy * dy) / (2.0 * WF_SIGMA * WF_SIGMA),
            ));
        }
    }
    let s: f64 = out.iter().sum();
    out.iter().map(|v| v / s).collect()
}

/// Weighted F-measure. An empty ground truth scores 0.
pub fn weighted_f(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let g = fg(gt);
    if !g.iter().any(|&b| b) {
        return 0.0;
    }
    let err: Vec<f64> = pred
        .iter()
        .zip(&g)
        .map(|(&p, &f)| (if f { 1.0 } else { 0.0 } - p).abs())
        .collect();
    let (dist, spread) = nearest_foreground(&g, &err, h, w);

    let k = gaussian_kernel();
    let kw = 2 * WF_RADIUS + 1;
    let mut ea = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for ky in 0..kw {
                let yy = y as isize + ky as isize - WF_RADIUS as isize;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let xx = x as isize + kx as isize - WF_RADIUS as isize;
                    if xx >= 0 && xx < w as isize {
                        s += k[ky * kw + kx] * spread[yy as usize * w + xx as usize];
                    }
                }
            }
            ea[y * w + x] = s;
        }
    }

    let (mut tp, mut fp, mut ew_fg, mut n_fg) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..h * w {
        if g[i] {
            let e = if ea[i] < err[i] { ea[i] } else { err[i] };
            ew_fg += e;
            n_fg += 1.0;
        } else {
            let b = 2.0 - libm::exp(libm::log(0.5) / 5.0 * dist[i]);
            fp += err[i] * b;
        }
    }
    tp += n_fg - ew_fg;
    let recall = 1.0 - ew_fg / n_fg;
    let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let den = recall + WF_BETA2 * precision;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + WF_BETA2) * recall * precision / den
    }
}

/// Distance from every pixel to the nearest foreground pixel, and the
/// error map with each background pixel replaced by the mean error of
/// its equidistant nearest foreground pixels.
fn nearest_foreground(g: &[bool], err: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dist = vec![0.0; h * w];
    let mut spread = err.to_vec();
    let fg_rows: Vec<Vec<usize>> = (0..h)
        .map(|y| (0..w).filter(|&x| g[y * w + x]).collect())
        .collect();
    for y in 0..h {
        for x in 0..w {
            if g[y * w + x] {
                continue;
            }
            let mut best = usize::MAX;
            let mut sum = 0.0;
            let mut cnt = 0usize;
            // rows sorted by vertical offset so the search can stop once
            // the offset alone exceeds the best distance
            for dy in 0..h {
                let dy2 = dy * dy;
                if dy2 > best {
                    break;
                }
                let rows: &[usize] = if dy == 0 { &[0] } else { &[1, 2] };
                for &side in rows {
                    let yy = match side {
                        0 => y,
                        1 if y >= dy => y - dy,
                        2 if y + dy < h => y + dy,
                        _ => continue,
                    };
                    for &xx in &fg_rows[yy] {
                        let d2 = dy2 + xx.abs_diff(x).pow(2);
                        if d2 < best {
                            best = d2;
                            sum = err[yy * w + xx];
                            cnt = 1;
                        } else if d2 == best {
                            sum += err[yy * w + xx];
                            cnt += 1;
                        }
                    }
                }
            }
            dist[y * w + x] = libm::sqrt(best as f64);
            spread[y * w + x] = sum / cnt as f64;
        }
    }
    (dist, spread)
}

const ADP_BETA2: f64 = 0.3;

/// F-measure at the adaptive threshold `min(2·mean(P), 1)`.
pub fn adaptive_f(pred: &[f64], gt: &[f64]) -> f64 {
    let g = fg(gt);
    let th = (2.0 * mean(pred)).min(1.0);
    let (mut tp, mut np, mut ng) = (0.0, 0.0, 0.0);
    for (&p, &f) in pred.iter().zip(&g) {
        let b = p >= th;
        if b {
            np += 1.0;
        }
        if f {
            ng += 1.0;
        }
        if b && f {
            tp += 1.0;
        }
    }
    if tp == 0.0 {
        return 0.0;
    }
    let pr = tp / np;
    let rc = tp / ng;
    (1.0 + ADP_BETA2) * pr * rc / (ADP_BETA2 * pr + rc)
}
