//! Straightforward re-derivations of each metric on `h × w` grids.

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var_unbiased(v: &[f64], m: f64) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
    }
}

pub fn mae(p: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - g[i]).abs();
    }
    s / p.len() as f64
}

pub fn s_measure(p: &[f64], g: &[f64], h: usize, w: usize) -> f64 {
    let y = mean(g);
    if y == 0.0 {
        return 1.0 - mean(p);
    }
    if y == 1.0 {
        return mean(p);
    }
    let obj = |vals: Vec<f64>| -> f64 {
        let m = mean(&vals);
        2.0 * m / (m * m + 1.0 + var_unbiased(&vals, m).sqrt())
    };
    let fore: Vec<f64> = (0..p.len())
        .filter(|&i| g[i] == 1.0)
        .map(|i| p[i])
        .collect();
    let back: Vec<f64> = (0..p.len())
        .filter(|&i| g[i] == 0.0)
        .map(|i| 1.0 - p[i])
        .collect();
    let so = y * obj(fore) + (1.0 - y) * obj(back);

    let mut cy = 0.0;
    let mut cx = 0.0;
    let mut n = 0.0;
    for r in 0..h {
        for c in 0..w {
            if g[r * w + c] == 1.0 {
                cy += r as f64;
                cx += c as f64;
                n += 1.0;
            }
        }
    }
    // split on the pixel boundary closest to the centroid
    let sy = (cy / n + 0.5).round() as usize;
    let sx = (cx / n + 0.5).round() as usize;
    let mut sr = 0.0;
    for (r0, r1) in [(0, sy), (sy, h)] {
        for (c0, c1) in [(0, sx), (sx, w)] {
            let mut bp = Vec::new();
            let mut bg = Vec::new();
            for r in r0..r1 {
                for c in c0..c1 {
                    bp.push(p[r * w + c]);
                    bg.push(g[r * w + c]);
                }
            }
            if bp.is_empty() {
                continue;
            }
            sr += bp.len() as f64 / (h * w) as f64 * ssim(&bp, &bg);
        }
    }
    (0.5 * so + 0.5 * sr).max(0.0)
}

fn ssim(p: &[f64], g: &[f64]) -> f64 {
    let (x, y) = (mean(p), mean(g));
    let d = if p.len() < 2 {
        f64::INFINITY
    } else {
        p.len() as f64 - 1.0
    };
    let sx: f64 = p.iter().map(|a| (a - x).powi(2)).sum::<f64>() / d;
    let sy: f64 = g.iter().map(|a| (a - y).powi(2)).sum::<f64>() / d;
    let sxy: f64 = p.iter().zip(g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / d;
    let num = 4.0 * x * y * sxy;
    let den = (x * x + y * y) * (sx + sy);
    if num != 0.0 {
        num / den
    } else if den == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn e_measure(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let fg = g.iter().sum::<f64>();
    let mut total = 0.0;
    for t in 0..256 {
        let th = (t as f64 + 0.5) / 256.0;
        let b: Vec<f64> = p.iter().map(|&v| if v >= th { 1.0 } else { 0.0 }).collect();
        let score = if fg == 0.0 {
            b.iter().map(|v| 1.0 - v).sum::<f64>() / n
        } else if fg == n {
            b.iter().sum::<f64>() / n
        } else {
            let (mb, mg) = (mean(&b), mean(g));
            let mut s = 0.0;
            for i in 0..p.len() {
                let (u, v) = (b[i] - mb, g[i] - mg);
                let a = 2.0 * u * v / (u * u + v * v);
                s += (1.0 + a).powi(2) / 4.0;
            }
            s / n
        };
        total += score;
    }
    total / 256.0
}

pub fn weighted_f(p: &[f64], g: &[f64], h: usize, w: usize) -> f64 {
    let fg: Vec<usize> = (0..g.len()).filter(|&i| g[i] == 1.0).collect();
    if fg.is_empty() {
        return 0.0;
    }
    let e: Vec<f64> = (0..p.len()).map(|i| (g[i] - p[i]).abs()).collect();
    let mut spread = e.clone();
    let mut dist = vec![0.0; p.len()];
    for i in 0..p.len() {
        if g[i] == 1.0 {
            continue;
        }
        let (r, c) = ((i / w) as f64, (i % w) as f64);
        let d = |j: usize| ((j / w) as f64 - r).powi(2) + ((j % w) as f64 - c).powi(2);
        let best = fg.iter().map(|&j| d(j)).fold(f64::INFINITY, f64::min);
        let ties: Vec<f64> = fg
            .iter()
            .filter(|&&j| d(j) == best)
            .map(|&j| e[j])
            .collect();
        dist[i] = best.sqrt();
        spread[i] = mean(&ties);
    }
    let mut k = [[0.0f64; 7]; 7];
    let mut ks = 0.0;
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (a as f64 - 3.0, b as f64 - 3.0);
            *v = (-(dx * dx + dy * dy) / 50.0).exp();
            ks += *v;
        }
    }
    let mut tp_loss = 0.0;
    let mut fp = 0.0;
    for i in 0..p.len() {
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        if g[i] == 1.0 {
            let mut ea = 0.0;
            for a in -3..=3isize {
                for b in -3..=3isize {
                    let (rr, cc) = (r + a, c + b);
                    if rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize {
                        ea += k[(a + 3) as usize][(b + 3) as usize] / ks
                            * spread[rr as usize * w + cc as usize];
                    }
                }
            }
            tp_loss += e[i].min(ea);
        } else {
            fp += e[i] * (2.0 - (0.5f64.ln() / 5.0 * dist[i]).exp());
        }
    }
    let nf = fg.len() as f64;
    let tp = nf - tp_loss;
    let recall = 1.0 - tp_loss / nf;
    let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

pub fn adaptive_f(p: &[f64], g: &[f64]) -> f64 {
    let th = f64::min(2.0 * mean(p), 1.0);
    let pos: Vec<bool> = p.iter().map(|&v| v >= th).collect();
    let tp = (0..p.len()).filter(|&i| pos[i] && g[i] == 1.0).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let prec = tp / pos.iter().filter(|&&b| b).count() as f64;
    let rec = tp / g.iter().filter(|&&v| v == 1.0).count() as f64;
    1.3 * prec * rec / (0.3 * prec + rec)
}
