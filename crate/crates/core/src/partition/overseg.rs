//! Graph-based over-segmentation (Felzenszwalb–Huttenlocher region merging on
//! 4-neighbour colour-difference edges).
//!
//! The scale parameter is searched geometrically until the region count lands
//! in `[min_regions, max_regions]`, or the closest count found is returned.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::ImageField;
use crate::partition::LabelMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentParams {
    /// Initial merge scale; larger values give larger regions. Colour
    /// differences are measured on `[0, 1]` values.
    pub scale: f64,
    /// Regions smaller than this are absorbed after the main pass.
    pub min_size: usize,
    /// Gaussian pre-smoothing; 0 disables it.
    pub sigma: f64,
    pub min_regions: usize,
    pub max_regions: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            scale: 0.5,
            min_size: 8,
            sigma: 0.0,
            min_regions: 50,
            max_regions: 300,
        }
    }
}

/// Over-segmentation output.
#[derive(Debug, Clone, PartialEq)]
pub struct Overseg {
    pub map: LabelMap,
    /// Scale the search settled on.
    pub scale: f64,
    /// Set when the image is constant; the map then has a single region.
    pub degenerate: bool,
}

const MAX_SEARCH_STEPS: usize = 40;

pub fn overseg(image: &ImageField, params: &SegmentParams) -> Result<Overseg> {
    let first = image.pixel(0, 0).to_vec();
    let degenerate = (0..image.height()).all(|y| (0..image.width()).all(|x| image.pixel(y, x) == first.as_slice()));
    if degenerate {
        log::warn!("over-segmentation of a constant image yields a single region");
        return Ok(Overseg {
            map: LabelMap::new(image.height(), image.width(), vec![0; image.num_pixels()])?,
            scale: params.scale,
            degenerate,
        });
    }
    let smoothed = if params.sigma > 0.0 {
        gaussian_blur(image, params.sigma)
    } else {
        image.data().to_vec()
    };
    let edges = build_edges(&smoothed, image.height(), image.width(), image.channels());

    let band = params.min_regions..=params.max_regions;
    let distance = |count: usize| {
        if count < *band.start() {
            band.start() - count
        } else {
            count.saturating_sub(*band.end())
        }
    };
    let mut scale = params.scale.max(f64::MIN_POSITIVE);
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    let mut best: Option<(usize, f64, Vec<u32>)> = None;
    for _ in 0..MAX_SEARCH_STEPS {
        let labels = segment(&edges, image.num_pixels(), scale, params.min_size);
        let count = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        let d = distance(count);
        if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
            best = Some((d, scale, labels));
        }
        if d == 0 {
            break;
        }
        if count > *band.end() {
            lo = Some(scale);
        } else {
            hi = Some(scale);
        }
        scale = match (lo, hi) {
            (Some(l), Some(h)) => (l * h).sqrt(),
            (Some(l), None) => l * 4.0,
            (None, Some(h)) => h / 4.0,
            (None, None) => unreachable!(),
        };
        if let (Some(l), Some(h)) = (lo, hi) {
            if h / l < 1.0 + 1e-9 {
                break;
            }
        }
    }
    let (_, scale, labels) = best.expect("at least one pass runs");
    Ok(Overseg {
        map: LabelMap::new(image.height(), image.width(), labels)?,
        scale,
        degenerate,
    })
}

struct Edge {
    a: u32,
    b: u32,
    w: f64,
}

fn build_edges(values: &[f64], h: usize, w: usize, c: usize) -> Vec<Edge> {
    let dist = |i: usize, j: usize| {
        values[i * c..(i + 1) * c]
            .iter()
            .zip(&values[j * c..(j + 1) * c])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push(Edge { a: i as u32, b: (i + 1) as u32, w: dist(i, i + 1) });
            }
            if y + 1 < h {
                edges.push(Edge { a: i as u32, b: (i + w) as u32, w: dist(i, i + w) });
            }
        }
    }
    // stable: equal weights keep raster order
    edges.sort_by(|e, f| e.w.total_cmp(&f.w));
    edges
}

struct Forest {
    parent: Vec<u32>,
    size: Vec<usize>,
    internal: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let p = self.parent[i as usize];
            self.parent[i as usize] = self.parent[p as usize];
            i = p;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32, w: f64) {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] { (a, b) } else { (b, a) };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.internal[big as usize] = w.max(self.internal[big as usize]).max(self.internal[small as usize]);
    }
}

fn segment(edges: &[Edge], n: usize, scale: f64, min_size: usize) -> Vec<u32> {
    let mut forest = Forest::new(n);
    for e in edges {
        let (ra, rb) = (forest.find(e.a), forest.find(e.b));
        if ra == rb {
            continue;
        }
        let ta = forest.internal[ra as usize] + scale / forest.size[ra as usize] as f64;
        let tb = forest.internal[rb as usize] + scale / forest.size[rb as usize] as f64;
        if e.w <= ta.min(tb) {
            forest.union(ra, rb, e.w);
        }
    }
    for e in edges {
        let (ra, rb) = (forest.find(e.a), forest.find(e.b));
        if ra != rb && (forest.size[ra as usize] < min_size || forest.size[rb as usize] < min_size) {
            forest.union(ra, rb, e.w);
        }
    }
    // dense labels in raster order of first appearance
    let mut dense = vec![u32::MAX; n];
    let mut next = 0;
    (0..n as u32)
        .map(|i| {
            let r = forest.find(i) as usize;
            if dense[r] == u32::MAX {
                dense[r] = next;
                next += 1;
            }
            dense[r]
        })
        .collect()
}

fn gaussian_blur(image: &ImageField, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (h, w, c) = (image.height() as isize, image.width() as isize, image.channels());
    let src = image.data();
    let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let xx = clamp(x + ki as isize - radius, w);
                    acc += kv * src[(y as usize * w as usize + xx) * c + ch];
                }
                tmp[(y as usize * w as usize + x as usize) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let yy = clamp(y + ki as isize - radius, h);
                    acc += kv * tmp[(yy * w as usize + x as usize) * c + ch];
                }
                out[(y as usize * w as usize + x as usize) * c + ch] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_is_one_region() {
        let img = ImageField::constant(6, 6, 3, 0.3).unwrap();
        let seg = overseg(&img, &SegmentParams::default()).unwrap();
        assert!(seg.degenerate);
        assert_eq!(seg.map.region_count(), 1);
    }

    #[test]
    fn two_halves_give_two_regions() {
        let img = ImageField::from_fn(8, 8, 1, |_, x, _| if x < 4 { 0.0 } else { 1.0 }).unwrap();
        let seg = overseg(&img, &SegmentParams::default()).unwrap();
        assert!(!seg.degenerate);
        assert_eq!(seg.map.region_count(), 2);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(seg.map.get(y, x), u32::from(x >= 4));
            }
        }
    }

    #[test]
    fn search_lands_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = ImageField::from_fn(48, 48, 1, |y, x, _| {
            let (fx, fy) = (x as f64 / 6.0, y as f64 / 9.0);
            (0.5 + 0.3 * fx.sin() * fy.cos() + 0.1 * rng.random::<f64>()).clamp(0.0, 1.0)
        })
        .unwrap();
        let params = SegmentParams {
            min_regions: 20,
            max_regions: 60,
            ..SegmentParams::default()
        };
        let seg = overseg(&img, &params).unwrap();
        let count = seg.map.region_count();
        assert!((20..=60).contains(&count), "{count} regions at scale {}", seg.scale);
        assert_eq!(seg, overseg(&img, &params).unwrap());
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ImageField::constant(5, 4, 1, 0.25).unwrap();
        assert!(gaussian_blur(&img, 1.0).iter().all(|v| (v - 0.25).abs() < 1e-15));
    }
}
