//! Edge-aware cost aggregation on a bilateral pyramid.
//!
//! Each level halves the resolution with a 3×3 bilateral filter centered on
//! the even pixels. The coarsest slice is then carried back up: every fine
//! pixel mixes its (at most) four nearest coarse pixels, weighted by
//! bilinear position times color similarity between the fine guidance pixel
//! and the coarse guidance pixel. Weights depend on the guidance only, so
//! they are computed once and reused for every cost slice. The pyramid is
//! geometric, so the work per slice is linear in its size.

use rayon::prelude::*;

use super::SphereSweepVolume;
use crate::error::{Error, Result};
use crate::image::{Rgb, RgbImage};

/// Color similarity `exp(−‖a − b‖² / (2σ²))`.
#[inline]
pub fn color_weight(a: &Rgb, b: &Rgb, sigma_i: f64) -> f64 {
    let d2: f64 = (0..3).map(|k| ((a[k] - b[k]) as f64).powi(2)).sum();
    (-d2 / (2.0 * sigma_i * sigma_i)).exp()
}

/// Bilateral weight between pixel `(x, y)` and its neighbor `(x+m, y+n)`.
/// The exponent is negative and the neighbor offset is two-dimensional.
pub fn bilateral_weight(img: &RgbImage, x: usize, y: usize, m: isize, n: isize, sigma_i: f64) -> f64 {
    let (nx, ny) = (x as isize + m, y as isize + n);
    assert!(
        nx >= 0 && ny >= 0 && (nx as usize) < img.width && (ny as usize) < img.height,
        "neighbor ({nx}, {ny}) outside the image"
    );
    color_weight(&img.get(x, y), &img.get(nx as usize, ny as usize), sigma_i)
}

/// Work counters for one aggregation run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AggregationStats {
    pub levels: usize,
    pub slices: usize,
    /// Weighted taps evaluated for one slice, down and up passes together.
    pub taps_per_slice: usize,
}

impl AggregationStats {
    pub fn total_taps(&self) -> usize {
        self.taps_per_slice * self.slices
    }
}

const DOWN_TAPS: usize = 9;
const UP_TAPS: usize = 4;

/// Normalized filter taps from one pyramid level to the next.
struct Taps<const K: usize> {
    index: Vec<[u32; K]>,
    weight: Vec<[f64; K]>,
    used: usize,
}

impl<const K: usize> Taps<K> {
    #[inline]
    fn apply(&self, src: &[f64], dst: &mut [f64]) {
        for ((d, idx), w) in dst.iter_mut().zip(&self.index).zip(&self.weight) {
            let mut s = 0.0;
            for k in 0..K {
                s += w[k] * src[idx[k] as usize];
            }
            *d = s;
        }
    }
}

fn coarse_size(n: usize) -> usize {
    n.div_ceil(2)
}

/// Taps for `I_out(x, y) = Σ I(2x+m, 2y+n)·w_mn / τ`, plus the downsampled
/// guidance itself.
fn down_taps(g: &RgbImage, sigma_i: f64) -> (Taps<DOWN_TAPS>, RgbImage) {
    let (cw, ch) = (coarse_size(g.width), coarse_size(g.height));
    let rows: Vec<Vec<([u32; DOWN_TAPS], [f64; DOWN_TAPS], usize)>> = (0..ch)
        .into_par_iter()
        .map(|y| {
            (0..cw)
                .map(|x| {
                    let (fx, fy) = (2 * x, 2 * y);
                    let center = g.get(fx, fy);
                    let mut idx = [0u32; DOWN_TAPS];
                    let mut w = [0.0; DOWN_TAPS];
                    let mut used = 0;
                    let mut tau = 0.0;
                    for (k, (m, n)) in (-1isize..=1).flat_map(|n| (-1isize..=1).map(move |m| (m, n))).enumerate() {
                        let (tx, ty) = (fx as isize + m, fy as isize + n);
                        if tx < 0 || ty < 0 || tx as usize >= g.width || ty as usize >= g.height {
                            continue;
                        }
                        let (tx, ty) = (tx as usize, ty as usize);
                        idx[k] = (ty * g.width + tx) as u32;
                        w[k] = color_weight(&center, &g.get(tx, ty), sigma_i);
                        tau += w[k];
                        used += 1;
                    }
                    // the center tap has weight 1, so τ ≥ 1
                    for v in &mut w {
                        *v /= tau;
                    }
                    (idx, w, used)
                })
                .collect()
        })
        .collect();
    let mut index = Vec::with_capacity(cw * ch);
    let mut weight = Vec::with_capacity(cw * ch);
    let mut used = 0;
    for (i, w, u) in rows.into_iter().flatten() {
        index.push(i);
        weight.push(w);
        used += u;
    }
    let coarse = RgbImage {
        width: cw,
        height: ch,
        data: index
            .iter()
            .zip(&weight)
            .map(|(i, w)| {
                let mut c = [0.0f64; 3];
                for k in 0..DOWN_TAPS {
                    let p = g.data[i[k] as usize];
                    for ch in 0..3 {
                        c[ch] += w[k] * p[ch] as f64;
                    }
                }
                [c[0] as f32, c[1] as f32, c[2] as f32]
            })
            .collect(),
    };
    (Taps { index, weight, used }, coarse)
}

/// Taps carrying a coarse level back to the fine level `fine`.
fn up_taps(fine: &RgbImage, coarse: &RgbImage, sigma_i: f64) -> Taps<UP_TAPS> {
    let (w, h) = (fine.width, fine.height);
    let rows: Vec<Vec<([u32; UP_TAPS], [f64; UP_TAPS], usize)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let g = fine.get(x, y);
                    let (qx0, qy0) = (x / 2, y / 2);
                    let (ax, ay) = (if x % 2 == 1 { 0.5 } else { 0.0 }, if y % 2 == 1 { 0.5 } else { 0.0 });
                    let qx1 = (qx0 + 1).min(coarse.width - 1);
                    let qy1 = (qy0 + 1).min(coarse.height - 1);
                    let cand = [
                        (qx0, qy0, (1.0 - ax) * (1.0 - ay)),
                        (qx1, qy0, ax * (1.0 - ay)),
                        (qx0, qy1, (1.0 - ax) * ay),
                        (qx1, qy1, ax * ay),
                    ];
                    let mut idx = [0u32; UP_TAPS];
                    let mut spatial = [0.0; UP_TAPS];
                    let mut wt = [0.0; UP_TAPS];
                    let mut used = 0;
                    for (k, &(qx, qy, s)) in cand.iter().enumerate() {
                        idx[k] = (qy * coarse.width + qx) as u32;
                        if s > 0.0 {
                            spatial[k] = s;
                            wt[k] = s * color_weight(&g, &coarse.get(qx, qy), sigma_i);
                            used += 1;
                        }
                    }
                    let total: f64 = wt.iter().sum();
                    // no coarse neighbor resembles this pixel: fall back to
                    // plain bilinear weights
                    let (wt, total) = if total > 1e-30 { (wt, total) } else { (spatial, spatial.iter().sum()) };
                    (idx, wt.map(|v| v / total), used)
                })
                .collect()
        })
        .collect();
    let mut index = Vec::with_capacity(w * h);
    let mut weight = Vec::with_capacity(w * h);
    let mut used = 0;
    for (i, wt, u) in rows.into_iter().flatten() {
        index.push(i);
        weight.push(wt);
        used += u;
    }
    Taps { index, weight, used }
}

/// Bilateral half-resolution image: output size `⌈W/2⌉ × ⌈H/2⌉`, taps
/// outside the input dropped from both sum and normalizer.
pub fn downsample(img: &RgbImage, sigma_i: f64) -> RgbImage {
    down_taps(img, sigma_i).1
}

struct Pyramid {
    down: Vec<Taps<DOWN_TAPS>>,
    up: Vec<Taps<UP_TAPS>>,
    sizes: Vec<usize>,
}

impl Pyramid {
    fn new(guidance: &RgbImage, sigma_i: f64, n_levels: usize) -> Self {
        let mut g = guidance.clone();
        let mut down = Vec::new();
        let mut up = Vec::new();
        let mut sizes = vec![g.data.len()];
        for _ in 0..n_levels {
            if g.width < 2 && g.height < 2 {
                break;
            }
            let (d, coarse) = down_taps(&g, sigma_i);
            up.push(up_taps(&g, &coarse, sigma_i));
            down.push(d);
            sizes.push(coarse.data.len());
            g = coarse;
        }
        Self { down, up, sizes }
    }

    fn taps(&self) -> usize {
        self.down.iter().map(|t| t.used).sum::<usize>() + self.up.iter().map(|t| t.used).sum::<usize>()
    }

    fn filter(&self, slice: &mut [f32]) {
        let (lo, hi) = slice
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mut levels: Vec<Vec<f64>> = vec![slice.iter().map(|&v| v as f64).collect()];
        for (l, t) in self.down.iter().enumerate() {
            let mut next = vec![0.0; self.sizes[l + 1]];
            t.apply(&levels[l], &mut next);
            levels.push(next);
        }
        let mut cur = levels.pop().expect("pyramid has a base level");
        for l in (0..self.up.len()).rev() {
            let mut fine = vec![0.0; self.sizes[l]];
            self.up[l].apply(&cur, &mut fine);
            cur = fine;
        }
        for (o, v) in slice.iter_mut().zip(cur) {
            *o = (v as f32).clamp(lo, hi);
        }
    }
}

/// Filters every cost slice of `volume` through a bilateral pyramid with
/// `n_levels` downsampling steps, guided by `guidance`.
pub fn aggregate(
    volume: &SphereSweepVolume,
    guidance: &RgbImage,
    sigma_i: f64,
    n_levels: usize,
) -> Result<(SphereSweepVolume, AggregationStats)> {
    if (guidance.width, guidance.height) != (volume.grid.width, volume.grid.height) {
        return Err(Error::InvalidArgument(format!(
            "guidance is {}×{}, volume grid is {}×{}",
            guidance.width, guidance.height, volume.grid.width, volume.grid.height
        )));
    }
    if !(sigma_i > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_i must be positive, got {sigma_i}")));
    }
    let pyramid = Pyramid::new(guidance, sigma_i, n_levels);
    let mut out = volume.clone();
    out.costs
        .par_chunks_mut(volume.slice_len())
        .for_each(|slice| pyramid.filter(slice));
    let stats = AggregationStats {
        levels: pyramid.down.len(),
        slices: volume.n_layers,
        taps_per_slice: pyramid.taps(),
    };
    Ok((out, stats))
}

/// Filters a single cost slice in place and returns the number of taps
/// evaluated.
pub fn aggregate_slice(slice: &mut [f32], guidance: &RgbImage, sigma_i: f64, n_levels: usize) -> usize {
    let p = Pyramid::new(guidance, sigma_i, n_levels);
    p.filter(slice);
    p.taps()
}
