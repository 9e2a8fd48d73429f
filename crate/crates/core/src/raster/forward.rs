use rayon::prelude::*;

use super::project::{project_gaussian, Splat2D};
use super::{Camera, ALPHA_MAX, FOOTPRINT_SIGMA2, TILE_SIZE, TRANSMITTANCE_MIN};
use crate::gaussian::GaussianSet;
use crate::image::Image;

/// One splat's share of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    /// Position in [`RenderAux::splats`].
    pub splat: u32,
    pub alpha: f64,
    /// Transmittance in front of this splat.
    pub transmittance: f64,
    /// Gaussian falloff `exp(-½ dᵀ Σ⁻¹ d)` at the pixel.
    pub falloff: f64,
}

impl Contribution {
    pub fn weight(&self) -> f64 {
        self.alpha * self.transmittance
    }
}

/// Everything the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct RenderAux {
    /// Visible splats, sorted front to back.
    pub splats: Vec<Splat2D>,
    pub(crate) pixel_offsets: Vec<usize>,
    pub(crate) contributions: Vec<Contribution>,
    pub(crate) final_transmittance: Vec<f64>,
    /// Per tile, ascending positions into `splats`.
    pub(crate) tile_lists: Vec<Vec<u32>>,
    pub(crate) fingerprint: u64,
    pub(crate) gaussian_count: usize,
    pub(crate) width: usize,
    pub(crate) height: usize,
}

impl RenderAux {
    /// Front-to-back contributors of pixel `(x, y)`.
    pub fn pixel_contributions(&self, x: usize, y: usize) -> &[Contribution] {
        let p = y * self.width + x;
        &self.contributions[self.pixel_offsets[p]..self.pixel_offsets[p + 1]]
    }

    /// Screen radius per Gaussian (0 when culled).
    pub fn radii(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.gaussian_count];
        for s in &self.splats {
            r[s.index] = s.radius;
        }
        r
    }

    pub fn visible(&self) -> Vec<bool> {
        let mut v = vec![false; self.gaussian_count];
        for s in &self.splats {
            v[s.index] = true;
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    /// `H × W × 3`, values in [0, 1].
    pub image: Image,
    /// Accumulated opacity `1 − T_final` per pixel.
    pub alpha: Vec<f64>,
    pub aux: RenderAux,
}

pub(crate) fn fingerprint(g: &GaussianSet, cam: &Camera, background: &[f64; 3]) -> u64 {
    // word-wise FNV-1a; only has to catch accidental reuse of stale aux
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    mix(g.sh_degree as u64);
    mix(g.len() as u64);
    let q = cam.pose.wxyz();
    let k = cam.intrinsics;
    let kf = [k.fx, k.fy, k.cx, k.cy];
    let floats = g
        .centers
        .iter()
        .flatten()
        .chain(g.log_scales.iter().flatten())
        .chain(g.rotations.iter().flatten())
        .chain(g.opacity_logits.iter())
        .chain(g.sh.iter())
        .chain(background.iter())
        .chain(q.iter())
        .chain(cam.pose.translation.iter())
        .chain(kf.iter());
    for v in floats {
        mix(v.to_bits());
    }
    mix(((k.width as u64) << 32) | k.height as u64);
    h
}

pub(crate) struct Tiles {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Per tile, positions into the sorted splat list (front to back).
    pub lists: Vec<Vec<u32>>,
}

impl Tiles {
    fn bin(splats: &[Splat2D], width: usize, height: usize) -> Tiles {
        let tiles_x = width.div_ceil(TILE_SIZE);
        let tiles_y = height.div_ceil(TILE_SIZE);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for (k, s) in splats.iter().enumerate() {
            let x0 = (s.mean2d.u - s.radius).ceil().max(0.0) as usize;
            let y0 = (s.mean2d.v - s.radius).ceil().max(0.0) as usize;
            let x1 = ((s.mean2d.u + s.radius).floor()).min(width as f64 - 1.0);
            let y1 = ((s.mean2d.v + s.radius).floor()).min(height as f64 - 1.0);
            if x1 < x0 as f64 || y1 < y0 as f64 {
                continue;
            }
            let (x1, y1) = (x1 as usize, y1 as usize);
            for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
                for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                    lists[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Tiles {
            tiles_x,
            tiles_y,
            lists,
        }
    }

    pub fn pixels(&self, tile: usize, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
        let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
        ys.flat_map(move |y| xs.clone().map(move |x| (x, y)))
    }
}

/// Screen-space falloff exponent `-½ dᵀ Σ⁻¹ d` and the offset `d`.
#[inline]
pub(crate) fn falloff_power(s: &Splat2D, x: usize, y: usize) -> (f64, f64, f64) {
    let dx = x as f64 - s.mean2d.u;
    let dy = y as f64 - s.mean2d.v;
    let q = &s.conic;
    let power = -0.5 * (q[(0, 0)] * dx * dx + 2.0 * q[(0, 1)] * dx * dy + q[(1, 1)] * dy * dy);
    (power, dx, dy)
}

/// Bounding box of a splat's footprint, for cheap rejection.
struct Footprint {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Footprint {
    fn new(s: &Splat2D) -> Self {
        Self {
            x0: s.mean2d.u - s.radius,
            x1: s.mean2d.u + s.radius,
            y0: s.mean2d.v - s.radius,
            y1: s.mean2d.v + s.radius,
        }
    }

    #[inline]
    fn covers_row(&self, y: f64) -> bool {
        y >= self.y0 && y <= self.y1
    }

    #[inline]
    fn covers_column(&self, x: f64) -> bool {
        x >= self.x0 && x <= self.x1
    }
}

struct TileResult {
    /// (pixel index, color, final transmittance, contribution count)
    pixels: Vec<(usize, [f64; 3], f64, usize)>,
    /// Contributions of `pixels`, concatenated in order.
    contribs: Vec<Contribution>,
}

pub fn render(g: &GaussianSet, cam: &Camera, background: [f64; 3]) -> RenderOutput {
    let (width, height) = (cam.width(), cam.height());
    let projected: Vec<Splat2D> = (0..g.len())
        .into_par_iter()
        .filter_map(|i| project_gaussian(g, i, cam))
        .collect();
    let mut order: Vec<(f64, usize, usize)> = projected
        .iter()
        .enumerate()
        .map(|(k, s)| (s.depth, s.index, k))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut slots: Vec<Option<Splat2D>> = projected.into_iter().map(Some).collect();
    let splats: Vec<Splat2D> = order
        .iter()
        .map(|&(_, _, k)| slots[k].take().expect("each slot is taken once"))
        .collect();
    let tiles = Tiles::bin(&splats, width, height);

    let boxes: Vec<Footprint> = splats.iter().map(Footprint::new).collect();
    let results: Vec<TileResult> = (0..tiles.lists.len())
        .into_par_iter()
        .map(|t| {
            let list = &tiles.lists[t];
            let mut pixels = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
            let mut contribs = Vec::new();
            let mut row: Vec<u32> = Vec::with_capacity(list.len());
            let mut last_y = usize::MAX;
            for (x, y) in tiles.pixels(t, width, height) {
                if y != last_y {
                    let yf = y as f64;
                    row.clear();
                    row.extend(list.iter().filter(|&&k| boxes[k as usize].covers_row(yf)));
                    last_y = y;
                }
                let xf = x as f64;
                let mut color = [0.0; 3];
                let mut trans = 1.0;
                let start = contribs.len();
                for &k in &row {
                    if !boxes[k as usize].covers_column(xf) {
                        continue;
                    }
                    let s = &splats[k as usize];
                    let (power, _, _) = falloff_power(s, x, y);
                    if power < -0.5 * FOOTPRINT_SIGMA2 {
                        continue;
                    }
                    let falloff = power.exp();
                    let alpha = (s.opacity * falloff).min(ALPHA_MAX);
                    let next = trans * (1.0 - alpha);
                    if next < TRANSMITTANCE_MIN {
                        break;
                    }
                    for c in 0..3 {
                        color[c] += s.color[c] * alpha * trans;
                    }
                    contribs.push(Contribution {
                        splat: k,
                        alpha,
                        transmittance: trans,
                        falloff,
                    });
                    trans = next;
                }
                for c in 0..3 {
                    color[c] += background[c] * trans;
                }
                pixels.push((y * width + x, color, trans, contribs.len() - start));
            }
            TileResult { pixels, contribs }
        })
        .collect();

    let n_pix = width * height;
    let mut image = Image::new(width, height, 3);
    let mut alpha = vec![0.0; n_pix];
    let mut final_transmittance = vec![1.0; n_pix];
    // (tile, start) of every pixel's run inside its tile's buffer
    let mut runs = vec![(0usize, 0usize, 0usize); n_pix];
    for (t, tile) in results.iter().enumerate() {
        let mut start = 0;
        for &(p, color, trans, n) in &tile.pixels {
            for c in 0..3 {
                image.data[p * 3 + c] = color[c].clamp(0.0, 1.0);
            }
            alpha[p] = 1.0 - trans;
            final_transmittance[p] = trans;
            runs[p] = (t, start, n);
            start += n;
        }
    }
    let total: usize = results.iter().map(|r| r.contribs.len()).sum();
    let mut pixel_offsets = Vec::with_capacity(n_pix + 1);
    let mut contributions = Vec::with_capacity(total);
    pixel_offsets.push(0);
    for &(t, start, n) in &runs {
        contributions.extend_from_slice(&results[t].contribs[start..start + n]);
        pixel_offsets.push(contributions.len());
    }

    RenderOutput {
        image,
        alpha,
        aux: RenderAux {
            splats,
            pixel_offsets,
            contributions,
            final_transmittance,
            tile_lists: tiles.lists,
            fingerprint: fingerprint(g, cam, &background),
            gaussian_count: g.len(),
            width,
            height,
        },
    }
}
