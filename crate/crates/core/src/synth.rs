//! Procedural camouflage scenes: value-noise textures, smooth blob
//! objects filled with a shifted copy of the background, exact masks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTag {
    BackgroundMatch,
    SmallObject,
    LargeObject,
    MultiObject,
    LowLight,
    Occlusion,
    EdgeBlur,
}

impl PatternTag {
    pub const ALL: [PatternTag; 7] = [
        PatternTag::BackgroundMatch,
        PatternTag::SmallObject,
        PatternTag::LargeObject,
        PatternTag::MultiObject,
        PatternTag::LowLight,
        PatternTag::Occlusion,
        PatternTag::EdgeBlur,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternTag::BackgroundMatch => "background_match",
            PatternTag::SmallObject => "small_object",
            PatternTag::LargeObject => "large_object",
            PatternTag::MultiObject => "multi_object",
            PatternTag::LowLight => "low_light",
            PatternTag::Occlusion => "occlusion",
            PatternTag::EdgeBlur => "edge_blur",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pattern tag {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub canvas: usize,
    /// 1 fills objects purely with shifted background texture.
    pub blend_alpha: f64,
    /// Total mask area as a fraction of the canvas.
    pub object_scale: (f64, f64),
    pub object_count: (usize, usize),
    pub brightness: (f64, f64),
    pub texture: u32,
    pub occlusion_prob: f64,
    /// Width in pixels of the soft compositing edge.
    pub edge_softness: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            canvas: 64,
            blend_alpha: 0.6,
            object_scale: (0.01, 0.4),
            object_count: (1, 3),
            brightness: (0.2, 1.0),
            texture: 0,
            occlusion_prob: 0.15,
            edge_softness: (0.0, 2.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.canvas >= 32
            && self.canvas.is_multiple_of(16)
            && (0.0..=1.0).contains(&self.blend_alpha)
            && 0.0 < self.object_scale.0
            && self.object_scale.0 <= self.object_scale.1
            && self.object_scale.1 < 0.8
            && 1 <= self.object_count.0
            && self.object_count.0 <= self.object_count.1
            && 0.0 < self.brightness.0
            && self.brightness.0 <= self.brightness.1
            && self.brightness.1 <= 1.0
            && (0.0..=1.0).contains(&self.occlusion_prob)
            && 0.0 <= self.edge_softness.0
            && self.edge_softness.0 <= self.edge_softness.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synth config {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    /// `[3, H, W]`, values are multiples of 1/255.
    pub image: Tensor<f32>,
    /// `[1, H, W]` in {0, 1}.
    pub mask: Tensor<f32>,
    pub pattern: PatternTag,
    pub objects: usize,
    pub brightness: f64,
    pub occluded: bool,
    pub softness: f64,
}

impl Scene {
    pub fn area_fraction(&self) -> f64 {
        self.mask.data().iter().filter(|&&v| v > 0.5).count() as f64 / self.mask.numel() as f64
    }
}

/// Periodic lattice noise with smoothstep interpolation.
struct ValueNoise {
    size: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut Rng, size: usize) -> Self {
        Self {
            size,
            lattice: (0..size * size).map(|_| rng.uniform()).collect(),
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let s = self.size as f64;
        let (x, y) = (x - s * libm::floor(x / s), y - s * libm::floor(y / s));
        let (x0, y0) = (libm::floor(x), libm::floor(y));
        let (fx, fy) = (x - x0, y - y0);
        let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
        let (i0, j0) = (x0 as usize % self.size, y0 as usize % self.size);
        let (i1, j1) = ((i0 + 1) % self.size, (j0 + 1) % self.size);
        let v = |i: usize, j: usize| self.lattice[j * self.size + i];
        let top = v(i0, j0) * (1.0 - sx) + v(i1, j0) * sx;
        let bot = v(i0, j1) * (1.0 - sx) + v(i1, j1) * sx;
        top * (1.0 - sy) + bot * sy
    }
}

/// Coloured multi-octave texture, evaluated at continuous coordinates.
struct Texture {
    octaves: Vec<(ValueNoise, f64, f64)>,
    base: [f64; 3],
    tint: [[f64; 3]; 2],
    contrast: f64,
}

const PALETTES: [[[f64; 3]; 3]; 3] = [
    [[0.35, 0.42, 0.22], [0.50, 0.38, 0.20], [0.20, 0.30, 0.15]],
    [[0.78, 0.68, 0.48], [0.62, 0.50, 0.33], [0.88, 0.80, 0.62]],
    [[0.50, 0.50, 0.52], [0.35, 0.36, 0.40], [0.68, 0.66, 0.62]],
];

impl Texture {
    fn new(rng: &mut Rng, family: u32, canvas: usize) -> Self {
        let pal = PALETTES[family as usize % PALETTES.len()];
        let jitter =
            |rng: &mut Rng, c: [f64; 3]| c.map(|v| (v + rng.range(-0.06, 0.06)).clamp(0.0, 1.0));
        let base = jitter(rng, pal[0]);
        let tint = [jitter(rng, pal[1]), jitter(rng, pal[2])];
        let cells = [canvas / 16, canvas / 8, canvas / 4];
        let octaves = cells
            .iter()
            .enumerate()
            .map(|(o, &c)| {
                let n = ValueNoise::new(rng, c.max(2) * 2);
                (n, c as f64 / canvas as f64, libm::pow(0.5, o as f64))
            })
            .collect();
        Self {
            octaves,
            base,
            tint,
            contrast: rng.range(0.6, 1.0),
        }
    }

    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let mut a = 0.0;
        let mut b = 0.0;
        for (i, (n, freq, amp)) in self.octaves.iter().enumerate() {
            let v = n.at(x * freq, y * freq);
            if i % 2 == 0 {
                a += amp * v;
            } else {
                b += amp * v;
            }
        }
        let (a, b) = ((a / 1.25).clamp(0.0, 1.0), (b / 0.5).clamp(0.0, 1.0));
        let mut out = [0.0; 3];
        for c in 0..3 {
            let mix = self.base[c] * (1.0 - a) + self.tint[0][c] * a;
            let mix = mix * (1.0 - 0.5 * b) + self.tint[1][c] * 0.5 * b;
            out[c] = 0.5 + (mix - 0.5) * (1.0 + self.contrast) - 0.1 * self.contrast * (0.5 - a);
        }
        out
    }
}

/// Star-shaped smooth blob: radius modulated by low harmonics.
#[derive(Clone, Debug)]
struct Blob {
    cx: f64,
    cy: f64,
    harmonics: Vec<(f64, f64)>,
}

impl Blob {
    fn radius_factor(&self, theta: f64) -> f64 {
        1.0 + self
            .harmonics
            .iter()
            .enumerate()
            .map(|(k, &(a, phi))| a * libm::cos((k + 2) as f64 * theta + phi))
            .sum::<f64>()
    }

    fn contains(&self, r: f64, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let d = libm::sqrt(dx * dx + dy * dy);
        d <= r * self.radius_factor(libm::atan2(dy, dx))
    }

    fn max_factor(&self) -> f64 {
        1.0 + self.harmonics.iter().map(|h| h.0.abs()).sum::<f64>()
    }
}

struct Layout {
    blobs: Vec<Blob>,
    /// Occluding stripe as (horizontal, centre offset, half width) in
    /// units of the blob radius.
    stripe: Option<(bool, f64, f64)>,
}

fn rasterize(layout: &Layout, r: f64, canvas: usize) -> Vec<bool> {
    let mut m = vec![false; canvas * canvas];
    for y in 0..canvas {
        for x in 0..canvas {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut inside = layout.blobs.iter().any(|b| b.contains(r, px, py));
            if inside {
                if let (Some((horiz, off, half)), Some(b)) = (layout.stripe, layout.blobs.first()) {
                    let d = if horiz {
                        py - (b.cy + off * r)
                    } else {
                        px - (b.cx + off * r)
                    };
                    if d.abs() <= half * r {
                        inside = false;
                    }
                }
            }
            m[y * canvas + x] = inside;
        }
    }
    m
}

fn place(rng: &mut Rng, n: usize, r_frac: f64, canvas: usize) -> Option<Vec<Blob>> {
    let c = canvas as f64;
    let mut blobs: Vec<Blob> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..100 {
            let harmonics = (0..3)
                .map(|k| {
                    (
                        rng.range(-0.12, 0.12) / (k + 1) as f64,
                        rng.range(0.0, core::f64::consts::TAU),
                    )
                })
                .collect();
            let mut b = Blob {
                cx: 0.0,
                cy: 0.0,
                harmonics,
            };
            let reach = r_frac * c * b.max_factor() + 1.0;
            if 2.0 * reach >= c {
                return None;
            }
            b.cx = rng.range(reach, c - reach);
            b.cy = rng.range(reach, c - reach);
            let clear = blobs.iter().all(|o| {
                let d = libm::hypot(o.cx - b.cx, o.cy - b.cy);
                d > reach + r_frac * c * o.max_factor() + 1.0 + 3.0
            });
            if clear {
                blobs.push(b);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(blobs)
}

/// Largest radius whose mask does not exceed `target` pixels, found by
/// bisection (mask area is monotone in the radius).
fn fit_radius(layout: &Layout, target: usize, r_max: f64, canvas: usize) -> (f64, Vec<bool>) {
    let count = |m: &[bool]| m.iter().filter(|&&v| v).count();
    let (mut lo, mut hi) = (0.0, r_max);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if count(&rasterize(layout, mid, canvas)) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = rasterize(layout, lo, canvas);
    (lo, m)
}

/// Number of 8-connected foreground components.
pub fn connected_components(mask: &[bool], h: usize, w: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (y, x) = ((i / w) as isize, (i % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    let j = yy as usize * w + xx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

fn box_blur(m: &[f64], n: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return m.to_vec();
    }
    let mut out = vec![0.0; m.len()];
    for y in 0..n {
        for x in 0..n {
            let (mut s, mut c) = (0.0, 0.0);
            for yy in y.saturating_sub(radius)..(y + radius + 1).min(n) {
                for xx in x.saturating_sub(radius)..(x + radius + 1).min(n) {
                    s += m[yy * n + xx];
                    c += 1.0;
                }
            }
            out[y * n + x] = s / c;
        }
    }
    out
}

/// Pattern tag implied by the sampled parameters, most specific first.
pub fn classify(
    objects: usize,
    area: f64,
    brightness: f64,
    occluded: bool,
    softness: f64,
) -> PatternTag {
    if objects > 1 {
        PatternTag::MultiObject
    } else if area < 0.02 {
        PatternTag::SmallObject
    } else if area > 0.3 {
        PatternTag::LargeObject
    } else if brightness < 0.3 {
        PatternTag::LowLight
    } else if occluded {
        PatternTag::Occlusion
    } else if softness > 1.0 {
        PatternTag::EdgeBlur
    } else {
        PatternTag::BackgroundMatch
    }
}

/// Deterministic in `(cfg, seed)`.
pub fn generate_scene(cfg: &SynthConfig, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let n = cfg.canvas;
    let np = n * n;
    let mut rng = Rng::new(seed);
    let lo_px = libm::ceil(cfg.object_scale.0 * np as f64) as usize;
    let hi_px = libm::floor(cfg.object_scale.1 * np as f64) as usize;

    let (objects, layout, mask) = 'sample: {
        for _ in 0..200 {
            let objects =
                cfg.object_count.0 + rng.below(cfg.object_count.1 - cfg.object_count.0 + 1);
            let area = rng.range(cfg.object_scale.0, cfg.object_scale.1);
            let target = libm::round(area * np as f64) as usize;
            let r_est = libm::sqrt(area / objects as f64 / core::f64::consts::PI);
            let Some(blobs) = place(&mut rng, objects, r_est * 1.3, n) else {
                continue;
            };
            let stripe = (objects == 1 && rng.uniform() < cfg.occlusion_prob).then(|| {
                (
                    rng.uniform() < 0.5,
                    rng.range(-0.4, 0.4),
                    rng.range(0.12, 0.25),
                )
            });
            let layout = Layout { blobs, stripe };
            let (_, mask) = fit_radius(&layout, target, r_est * 1.3 * n as f64, n);
            let px = mask.iter().filter(|&&v| v).count();
            if px == 0 || px < lo_px || px > hi_px {
                continue;
            }
            if objects > 1 && connected_components(&mask, n, n) < objects {
                continue;
            }
            break 'sample (objects, layout, mask);
        }
        return Err(Error::Config(format!(
            "could not place objects for seed {seed} with {cfg:?}"
        )));
    };

    let background = Texture::new(&mut rng, cfg.texture, n);
    let family = cfg.texture.wrapping_add(1 + rng.below(2) as u32);
    let foreign = Texture::new(&mut rng, family, n);
    let (ox, oy) = (
        rng.range(0.25, 0.75) * n as f64,
        rng.range(0.25, 0.75) * n as f64,
    );
    let brightness = rng.range(cfg.brightness.0, cfg.brightness.1);
    let softness = rng.range(cfg.edge_softness.0, cfg.edge_softness.1);
    let alpha_mask: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let alpha_mask = box_blur(&alpha_mask, n, libm::round(softness) as usize);

    let mut img = vec![0.0f32; 3 * np];
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let bg = background.sample(fx, fy);
            let shifted = background.sample(fx + ox, fy + oy);
            let other = foreign.sample(fx, fy);
            let a = alpha_mask[y * n + x];
            for c in 0..3 {
                let obj = cfg.blend_alpha * shifted[c] + (1.0 - cfg.blend_alpha) * other[c];
                let v = ((1.0 - a) * bg[c] + a * obj) * brightness;
                img[c * np + y * n + x] = (libm::round(v.clamp(0.0, 1.0) * 255.0) / 255.0) as f32;
            }
        }
    }
    let image = Tensor::new(&[3, n, n], img)?;
    let mask_t = Tensor::new(
        &[1, n, n],
        mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?;
    let area = mask.iter().filter(|&&b| b).count() as f64 / np as f64;
    let occluded = layout.stripe.is_some();
    Ok(Scene {
        image,
        mask: mask_t,
        pattern: classify(objects, area, brightness, occluded, softness),
        objects,
        brightness,
        occluded,
        softness,
    })
}

/// Per-scene seed for index `i` of a generated set.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_priority() {
        assert_eq!(classify(2, 0.01, 0.1, true, 2.0), PatternTag::MultiObject);
        assert_eq!(classify(1, 0.01, 0.1, true, 2.0), PatternTag::SmallObject);
        assert_eq!(classify(1, 0.1, 0.1, false, 0.0), PatternTag::LowLight);
        assert_eq!(
            classify(1, 0.1, 0.9, false, 0.0),
            PatternTag::BackgroundMatch
        );
    }

    #[test]
    fn components_counted_with_diagonals() {
        let m = [true, false, false, false, true, false, false, false, true];
        assert_eq!(connected_components(&m, 3, 3), 1);
        let m = [true, false, true, false, false, false, true, false, true];
        assert_eq!(connected_components(&m, 3, 3), 4);
    }

    #[test]
    fn tags_round_trip() {
        for t in PatternTag::ALL {
            assert_eq!(PatternTag::parse(t.name()).unwrap(), t);
        }
        assert!(PatternTag::parse("nope").is_err());
    }
}
