//! Head-selector masks over the pixel grid.
//!
//! Two rules produce a [`PartitionMask`]:
//!
//! * [`pog`]: regular grid cells of stride `r = (r_x, r_y)`; pixel `(x, y)` goes to
//!   head `⌊x/r_x⌋ + ⌊y/r_y⌋·⌈W/r_x⌉`.
//! * [`pos`]: over-segment the image, split every label into its 4-connected
//!   components, then repeatedly fold the smallest region into its smallest
//!   neighbour until `k` regions remain.
//!
//! Every pixel carries exactly one head label.

pub mod io;
mod overseg;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageField;

pub use overseg::{overseg, Overseg, SegmentParams};

/// Intermediate label image (over-segmentation or merge stage).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    /// Row-major labels.
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::Input(format!(
                "{} labels for a {height}×{width} grid",
                labels.len()
            )));
        }
        Ok(LabelMap { height, width, labels })
    }

    /// Parses whitespace-separated rows of integers.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<Vec<u32>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<u32>().map_err(|e| Error::Format(format!("bad label {t:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Format("ragged label map".into()));
        }
        Self::new(rows.len(), width, rows.concat())
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Number of distinct labels.
    pub fn region_count(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    /// Pixel count per label id (indexed by label, length `max + 1`).
    pub fn areas(&self) -> Vec<usize> {
        let max = self.labels.iter().copied().max().unwrap_or(0) as usize;
        let mut areas = vec![0; max + 1];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// True when every label's pixel set is 4-connected.
    pub fn labels_connected(&self) -> bool {
        let relabeled = connected_relabel(self);
        relabeled.region_count() == self.region_count()
    }

    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> {
        let (w, h) = (self.width, self.height);
        let (y, x) = (idx / w, idx % w);
        let up = (y > 0).then(|| idx - w);
        let down = (y + 1 < h).then(|| idx + w);
        let left = (x > 0).then(|| idx - 1);
        let right = (x + 1 < w).then(|| idx + 1);
        [up, left, right, down].into_iter().flatten()
    }
}

/// How a mask was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Provenance {
    Grid { rx: usize, ry: usize },
    Segmentation(SegmentParams),
    /// Read from a file that does not record its origin.
    Imported,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Grid { rx, ry } => write!(f, "grid rx={rx} ry={ry}"),
            Provenance::Segmentation(p) => write!(
                f,
                "segmentation scale={} min_size={} sigma={} min_regions={} max_regions={}",
                p.scale, p.min_size, p.sigma, p.min_regions, p.max_regions
            ),
            Provenance::Imported => write!(f, "imported"),
        }
    }
}

/// Assignment of every pixel to exactly one of `k` heads.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMask {
    height: usize,
    width: usize,
    k: usize,
    labels: Vec<u32>,
    provenance: Provenance,
}

impl PartitionMask {
    /// Validates that labels lie in `0..k` and every head owns at least one pixel.
    pub fn new(height: usize, width: usize, k: usize, labels: Vec<u32>, provenance: Provenance) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::Input("mask size does not match its dimensions".into()));
        }
        if k == 0 {
            return Err(Error::Config("a mask needs at least one head".into()));
        }
        let mut seen = vec![false; k];
        for &l in &labels {
            let slot = seen
                .get_mut(l as usize)
                .ok_or_else(|| Error::Input(format!("label {l} outside 0..{k}")))?;
            *slot = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("head {empty} owns no pixels")));
        }
        Ok(PartitionMask {
            height,
            width,
            k,
            labels,
            provenance,
        })
    }

    /// Single head covering the whole grid.
    pub fn trivial(height: usize, width: usize) -> Self {
        PartitionMask {
            height,
            width,
            k: 1,
            labels: vec![0; height * width],
            provenance: Provenance::Grid { rx: width, ry: height },
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn label(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    /// Raster-order pixel indices owned by each head.
    pub fn regions(&self) -> Vec<Vec<usize>> {
        let mut regions = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            regions[l as usize].push(i);
        }
        regions
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.k];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// Largest over smallest region area.
    pub fn balance_ratio(&self) -> f64 {
        let areas = self.areas();
        let max = *areas.iter().max().unwrap_or(&1) as f64;
        let min = *areas.iter().min().unwrap_or(&1) as f64;
        max / min
    }

    /// One-hot head selector of pixel `index`.
    pub fn one_hot(&self, index: usize) -> Vec<u8> {
        let mut v = vec![0; self.k];
        v[self.labels[index] as usize] = 1;
        v
    }

    pub fn matches(&self, image: &ImageField) -> bool {
        self.height == image.height() && self.width == image.width()
    }

    pub fn to_label_map(&self) -> LabelMap {
        LabelMap {
            height: self.height,
            width: self.width,
            labels: self.labels.clone(),
        }
    }

    /// Pixel rectangle `(y0, x0, h, w)` of every head for grid masks.
    pub fn grid_cells(&self) -> Option<Vec<(usize, usize, usize, usize)>> {
        let Provenance::Grid { rx, ry } = self.provenance else {
            return None;
        };
        let cols = self.width.div_ceil(rx);
        Some(
            (0..self.k)
                .map(|l| {
                    let (cx, cy) = (l % cols, l / cols);
                    let (x0, y0) = (cx * rx, cy * ry);
                    (y0, x0, ry.min(self.height - y0), rx.min(self.width - x0))
                })
                .collect(),
        )
    }
}

/// Pixel strides of a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rx: usize,
    pub ry: usize,
}

impl GridSpec {
    /// Strides that split a `height×width` image into `cols×rows` cells
    /// (fewer when the division leaves an empty trailing cell).
    pub fn for_cells(height: usize, width: usize, cols: usize, rows: usize) -> Self {
        GridSpec {
            rx: width.div_ceil(cols.max(1)).max(1),
            ry: height.div_ceil(rows.max(1)).max(1),
        }
    }
}

/// Regular-grid partition.
pub fn pog(height: usize, width: usize, r: GridSpec) -> Result<PartitionMask> {
    if r.rx == 0 || r.ry == 0 {
        return Err(Error::Config("grid strides must be positive".into()));
    }
    if r.rx > width || r.ry > height {
        return Err(Error::Config(format!(
            "grid stride ({}, {}) exceeds the {height}×{width} image",
            r.rx, r.ry
        )));
    }
    let cols = width.div_ceil(r.rx);
    let rows = height.div_ceil(r.ry);
    let labels = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x / r.rx + (y / r.ry) * cols) as u32))
        .collect();
    PartitionMask::new(height, width, cols * rows, labels, Provenance::Grid { rx: r.rx, ry: r.ry })
}

/// Splits every label into its maximal 4-connected components.
///
/// New labels are dense from 0, numbered in raster order of each
/// component's first pixel.
pub fn connected_relabel(m: &LabelMap) -> LabelMap {
    const UNSET: u32 = u32::MAX;
    let mut out = vec![UNSET; m.labels.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..m.labels.len() {
        if out[start] != UNSET {
            continue;
        }
        let label = m.labels[start];
        out[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for n in m.neighbours(i) {
                if out[n] == UNSET && m.labels[n] == label {
                    out[n] = next;
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    LabelMap {
        height: m.height,
        width: m.width,
        labels: out,
    }
}

/// One iteration of [`greedy_merge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeEvent {
    /// Label of the smallest region, which disappears.
    pub absorbed: u32,
    /// Label of its smallest neighbour, which keeps its label.
    pub into: u32,
    pub absorbed_area: usize,
    pub merged_area: usize,
    pub regions_left: usize,
}

/// Merges regions until `k` remain. See [`greedy_merge_logged`].
pub fn greedy_merge(m: &LabelMap, k: usize) -> Result<PartitionMask> {
    greedy_merge_logged(m, k).map(|(mask, _)| mask)
}

/// Greedy region merging: while more than `k` regions remain, the region of
/// smallest area takes the label of its smallest 4-adjacent neighbour.
/// Area ties go to the lowest label id.
///
/// The input should be connected-relabeled. Surviving labels are compacted to
/// `0..k` in increasing order of their original id.
pub fn greedy_merge_logged(m: &LabelMap, k: usize) -> Result<(PartitionMask, Vec<MergeEvent>)> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let regions = m.region_count();
    if regions < k {
        return Err(Error::Precondition(format!(
            "only {regions} regions available for k = {k}; re-run over-segmentation with finer parameters"
        )));
    }
    let mut area = m.areas();
    let n = area.len();
    let mut alive: BTreeSet<u32> = (0..n as u32).filter(|&l| area[l as usize] > 0).collect();
    let mut adjacency = vec![BTreeSet::<u32>::new(); n];
    for i in 0..m.labels.len() {
        let a = m.labels[i];
        for j in m.neighbours(i) {
            let b = m.labels[j];
            if a != b {
                adjacency[a as usize].insert(b);
            }
        }
    }
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut log = Vec::with_capacity(regions - k);
    while alive.len() > k {
        let small = *alive
            .iter()
            .min_by_key(|&&l| (area[l as usize], l))
            .expect("at least k+1 regions alive");
        // a connected grid always gives the smallest region a neighbour
        let target = *adjacency[small as usize]
            .iter()
            .min_by_key(|&&l| (area[l as usize], l))
            .expect("pixel grid is connected");
        let absorbed_area = area[small as usize];
        area[target as usize] += absorbed_area;
        area[small as usize] = 0;
        let neighbours = std::mem::take(&mut adjacency[small as usize]);
        for nb in neighbours {
            adjacency[nb as usize].remove(&small);
            if nb != target {
                adjacency[nb as usize].insert(target);
                adjacency[target as usize].insert(nb);
            }
        }
        parent[small as usize] = target;
        alive.remove(&small);
        log.push(MergeEvent {
            absorbed: small,
            into: target,
            absorbed_area,
            merged_area: area[target as usize],
            regions_left: alive.len(),
        });
    }
    let resolve = |mut l: u32| {
        while parent[l as usize] != l {
            l = parent[l as usize];
        }
        l
    };
    let mut compact = vec![u32::MAX; n];
    for (new, &old) in alive.iter().enumerate() {
        compact[old as usize] = new as u32;
    }
    let labels = m.labels.iter().map(|&l| compact[resolve(l) as usize]).collect();
    let mask = PartitionMask::new(m.height, m.width, k, labels, Provenance::Imported)?;
    Ok((mask, log))
}

/// Segmentation-based partition: over-segment, split into connected
/// components, greedily merge to `k` regions.
pub fn pos(image: &ImageField, k: usize, params: &SegmentParams) -> Result<PartitionMask> {
    let seg = overseg(image, params)?;
    let relabeled = connected_relabel(&seg.map);
    let mask = greedy_merge(&relabeled, k)?;
    Ok(PartitionMask {
        provenance: Provenance::Segmentation(params.clone()),
        ..mask
    })
}

/// How a mask is derived from an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum PartitionRule {
    /// One head for the whole image.
    None,
    /// `cols × rows` grid cells.
    Grid { cols: usize, rows: usize },
    /// Cells of `rx × ry` pixels.
    GridStride { rx: usize, ry: usize },
    Segmentation {
        k: usize,
        #[serde(default)]
        params: SegmentParams,
    },
}

impl PartitionRule {
    pub fn apply(&self, image: &ImageField) -> Result<PartitionMask> {
        let (h, w) = (image.height(), image.width());
        match self {
            PartitionRule::None => Ok(PartitionMask::trivial(h, w)),
            PartitionRule::Grid { cols, rows } => {
                if *cols == 0 || *rows == 0 || *cols > w || *rows > h {
                    return Err(Error::Config(format!("cannot split {h}×{w} into {cols}×{rows} cells")));
                }
                pog(h, w, GridSpec::for_cells(h, w, *cols, *rows))
            }
            PartitionRule::GridStride { rx, ry } => pog(h, w, GridSpec { rx: *rx, ry: *ry }),
            PartitionRule::Segmentation { k, params } => pos(image, *k, params),
        }
    }

    /// Short name used in file sidecars.
    pub fn tag(&self) -> &'static str {
        match self {
            PartitionRule::None => "none",
            PartitionRule::Grid { .. } | PartitionRule::GridStride { .. } => "pog",
            PartitionRule::Segmentation { .. } => "pos",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flood_fill_components(m: &LabelMap) -> usize {
        // independent recursive-free DFS over an explicit stack
        let mut seen = vec![false; m.labels.len()];
        let mut count = 0;
        for s in 0..m.labels.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                let (y, x) = ((i / m.width) as isize, (i % m.width) as isize);
                for (dy, dx) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= m.height as isize || nx >= m.width as isize {
                        continue;
                    }
                    let j = ny as usize * m.width + nx as usize;
                    if !seen[j] && m.labels[j] == m.labels[i] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn pog_quadrants() {
        let mask = pog(256, 256, GridSpec { rx: 128, ry: 128 }).unwrap();
        assert_eq!(mask.k(), 4);
        assert_eq!(mask.areas(), vec![16384; 4]);
        assert_eq!(mask.label(0, 0), 0);
    }

    #[test]
    fn pog_floor_division() {
        let mask = pog(200, 400, GridSpec { rx: 190, ry: 127 }).unwrap();
        // columns: ceil(400/190) = 3
        assert_eq!(mask.label(100, 300), 1);
        assert_eq!(mask.label(130, 10), 3);
        assert_eq!(mask.k(), 6);
    }

    #[test]
    fn pog_rejects_oversized_stride() {
        assert!(matches!(pog(10, 10, GridSpec { rx: 11, ry: 2 }), Err(Error::Config(_))));
        assert!(matches!(pog(10, 10, GridSpec { rx: 0, ry: 2 }), Err(Error::Config(_))));
    }

    #[test]
    fn relabel_keeps_connected_maps() {
        let m = LabelMap::parse("5 5 7\n5 7 7\n9 9 9").unwrap();
        let r = connected_relabel(&m);
        assert_eq!(r.labels, vec![0, 0, 1, 0, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn relabel_splits_diagonal_touch() {
        let m = LabelMap::parse("1 1 0 0\n1 1 0 0\n0 0 1 1\n0 0 1 1").unwrap();
        let r = connected_relabel(&m);
        assert_eq!(r.region_count(), 4);
        let label_one: BTreeSet<u32> = m
            .labels
            .iter()
            .zip(&r.labels)
            .filter(|(a, _)| **a == 1)
            .map(|(_, b)| *b)
            .collect();
        assert_eq!(label_one.len(), 2);
    }

    #[test]
    fn relabel_checkerboard() {
        let text = "1 0 1 0\n0 1 0 1\n1 0 1 0\n0 1 0 1";
        let m = LabelMap::parse(text).unwrap();
        let r = connected_relabel(&m);
        assert_eq!(r.region_count(), flood_fill_components(&m));
        assert_eq!(r.region_count(), 16);
    }

    #[test]
    fn merge_toy_map() {
        let m = LabelMap::parse("1 1 1 1\n1 1 0 0\n2 2 2 2\n2 2 2 2").unwrap();
        assert_eq!(m.areas(), vec![2, 6, 8]);
        let (mask, log) = greedy_merge_logged(&m, 2).unwrap();
        assert_eq!(
            log,
            vec![MergeEvent {
                absorbed: 0,
                into: 1,
                absorbed_area: 2,
                merged_area: 8,
                regions_left: 2
            }]
        );
        assert_eq!(mask.labels(), &[0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(mask.areas(), vec![8, 8]);
    }

    #[test]
    fn merge_noop_at_k() {
        let m = LabelMap::parse("0 0 1\n2 2 1").unwrap();
        let (mask, log) = greedy_merge_logged(&m, 3).unwrap();
        assert!(log.is_empty());
        assert_eq!(mask.labels(), m.labels.as_slice());
    }

    #[test]
    fn merge_needs_enough_regions() {
        let m = LabelMap::parse("0 0\n1 1").unwrap();
        assert!(matches!(greedy_merge(&m, 3), Err(Error::Precondition(_))));
    }

    #[test]
    fn merge_tie_breaks_on_lowest_label() {
        // regions 1 and 2 tie at area 1: region 1 is picked, and its
        // smallest neighbour is region 2
        let m = LabelMap::parse("0 1 3\n0 2 3\n0 3 3").unwrap();
        let (_, log) = greedy_merge_logged(&m, 3).unwrap();
        assert_eq!(log[0].absorbed, 1);
        assert_eq!(log[0].into, 2);
    }

    #[test]
    fn mask_invariants_enforced() {
        assert!(PartitionMask::new(1, 2, 3, vec![0, 1], Provenance::Imported).is_err());
        assert!(PartitionMask::new(1, 2, 2, vec![0, 2], Provenance::Imported).is_err());
        let m = PartitionMask::new(1, 2, 2, vec![1, 0], Provenance::Imported).unwrap();
        assert_eq!(m.one_hot(0), vec![0, 1]);
    }

    #[test]
    fn grid_cells_cover_mask() {
        let mask = pog(10, 7, GridSpec::for_cells(10, 7, 2, 3)).unwrap();
        let cells = mask.grid_cells().unwrap();
        assert_eq!(cells.len(), mask.k());
        for (l, (y0, x0, h, w)) in cells.into_iter().enumerate() {
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    assert_eq!(mask.label(y, x), l);
                }
            }
            assert_eq!(h * w, mask.areas()[l]);
        }
    }
}
