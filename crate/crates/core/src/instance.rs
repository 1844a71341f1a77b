//! Connected-component instance extraction and region geometry.
//!
//! Semantic masks carry no instance ids, so every 8-connected set of
//! same-category pixels becomes one candidate region. Regions are ordered by
//! the (y_min, x_min) corner of their bounding box so downstream manifests do
//! not depend on labeling internals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::CategoricalMask;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("category 0 is background, not a valid instance category")]
    BackgroundCategory,
    #[error("empty pixel set")]
    EmptyPixelSet,
}

/// Tight axis-aligned box, half-open on the max edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

/// One 8-connected pixel set of a single category inside a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRegion {
    pub category: u16,
    /// Pixels in scan order (y, then x).
    pub pixels: Vec<(u32, u32)>,
    pub area: u64,
    pub bbox: PixelBox,
    pub centroid: (f64, f64),
    pub region_id: String,
}

impl InstanceRegion {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.pixels.binary_search_by(|&(px, py)| (py, px).cmp(&(y, x))).is_ok()
    }

    /// Pixels with at least one 8-neighbor outside the region (pixels on the
    /// patch border always qualify).
    pub fn boundary_pixels(&self) -> Vec<(u32, u32)> {
        self.pixels
            .iter()
            .copied()
            .filter(|&(x, y)| {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 {
                            return true;
                        }
                        if !self.contains(nx as u32, ny as u32) {
                            return true;
                        }
                    }
                }
                false
            })
            .collect()
    }
}

/// Area, tight half-open bbox, and centroid (mean pixel coordinate).
pub fn region_stats(pixels: &[(u32, u32)]) -> Result<(u64, PixelBox, (f64, f64)), InstanceError> {
    if pixels.is_empty() {
        return Err(InstanceError::EmptyPixelSet);
    }
    let (mut x_min, mut y_min) = (u32::MAX, u32::MAX);
    let (mut x_max, mut y_max) = (0u32, 0u32);
    let (mut sx, mut sy) = (0f64, 0f64);
    for &(x, y) in pixels {
        x_min = x_min.min(x);
        y_min = y_min.min(y);
        x_max = x_max.max(x);
        y_max = y_max.max(y);
        sx += x as f64;
        sy += y as f64;
    }
    let n = pixels.len() as f64;
    Ok((
        pixels.len() as u64,
        PixelBox { x_min, y_min, x_max: x_max + 1, y_max: y_max + 1 },
        (sx / n, sy / n),
    ))
}

/// Stable region id within a patch: category plus bbox-order index.
pub fn region_id(patch_id: &str, category: u16, index: usize) -> String {
    format!("{patch_id}:c{category}:r{index}")
}

/// Decompose one category of a mask into 8-connected regions.
pub fn connected_components(
    mask: &CategoricalMask,
    category: u16,
    patch_id: &str,
) -> Result<Vec<InstanceRegion>, InstanceError> {
    if category == 0 {
        return Err(InstanceError::BackgroundCategory);
    }
    let all = label_all(mask, patch_id);
    Ok(all.into_iter().filter(|r| r.category == category).collect())
}

/// Decompose every non-background category at once; regions are grouped by
/// category (ascending) and ordered by (y_min, x_min) within each category.
pub fn label_all(mask: &CategoricalMask, patch_id: &str) -> Vec<InstanceRegion> {
    let w = mask.width as usize;
    let h = mask.height as usize;
    // two-pass union-find labeling over the full mask; components never span
    // different categories
    let mut parent: Vec<u32> = Vec::new();
    let mut labels = vec![0u32; w * h]; // 0 = unlabeled/background

    fn find(parent: &mut Vec<u32>, mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    fn union(parent: &mut Vec<u32>, a: u32, b: u32) {
        let ra = find(parent, a);
        let rb = find(parent, b);
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi as usize] = lo;
        }
    }

    for y in 0..h {
        for x in 0..w {
            let cat = mask.labels[y * w + x];
            if cat == 0 {
                continue;
            }
            let mut adjacent = [0u32; 4];
            let mut n_adj = 0;
            // previously visited 8-neighbors: W, NW, N, NE
            let push = |lx: usize, ly: usize, adjacent: &mut [u32; 4], n_adj: &mut usize| {
                if mask.labels[ly * w + lx] == cat {
                    adjacent[*n_adj] = labels[ly * w + lx];
                    *n_adj += 1;
                }
            };
            if x > 0 {
                push(x - 1, y, &mut adjacent, &mut n_adj);
            }
            if y > 0 {
                if x > 0 {
                    push(x - 1, y - 1, &mut adjacent, &mut n_adj);
                }
                push(x, y - 1, &mut adjacent, &mut n_adj);
                if x + 1 < w {
                    push(x + 1, y - 1, &mut adjacent, &mut n_adj);
                }
            }
            if n_adj == 0 {
                let fresh = parent.len() as u32 + 1;
                parent.push(fresh - 1); // self-rooted at 0-based index
                labels[y * w + x] = fresh;
            } else {
                let min = *adjacent[..n_adj].iter().min().unwrap();
                labels[y * w + x] = min;
                for &a in &adjacent[..n_adj] {
                    union_shifted(&mut parent, min, a);
                }
            }
        }
    }

    // labels are 1-based into `parent`
    fn union_shifted(parent: &mut Vec<u32>, a: u32, b: u32) {
        union(parent, a - 1, b - 1);
    }

    // gather pixels per root in scan order
    let mut root_pixels: std::collections::BTreeMap<u32, (u16, Vec<(u32, u32)>)> =
        std::collections::BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l - 1);
            let cat = mask.labels[y * w + x];
            root_pixels
                .entry(root)
                .or_insert_with(|| (cat, Vec::new()))
                .1
                .push((x as u32, y as u32));
        }
    }

    let mut regions: Vec<InstanceRegion> = root_pixels
        .into_values()
        .map(|(category, pixels)| {
            let (area, bbox, centroid) = region_stats(&pixels).expect("non-empty component");
            InstanceRegion { category, pixels, area, bbox, centroid, region_id: String::new() }
        })
        .collect();

    regions.sort_by_key(|r| (r.category, r.bbox.y_min, r.bbox.x_min, r.pixels[0].1, r.pixels[0].0));
    let mut index_in_cat = 0usize;
    let mut prev_cat = None;
    for r in regions.iter_mut() {
        if prev_cat != Some(r.category) {
            index_in_cat = 0;
            prev_cat = Some(r.category);
        }
        r.region_id = region_id(patch_id, r.category, index_in_cat);
        index_in_cat += 1;
    }
    regions
}

/// Exact minimum Euclidean distance between two regions over all pixel pairs.
///
/// The closest pair of two disjoint pixel sets is always realized on their
/// boundaries, so only boundary pixels are compared.
pub fn min_separation(a: &InstanceRegion, b: &InstanceRegion) -> f64 {
    let ba = a.boundary_pixels();
    let bb = b.boundary_pixels();
    let mut best = u64::MAX;
    for &(ax, ay) in &ba {
        for &(bx, by) in &bb {
            let dx = ax as i64 - bx as i64;
            let dy = ay as i64 - by as i64;
            let d2 = (dx * dx + dy * dy) as u64;
            if d2 < best {
                best = d2;
            }
        }
    }
    (best as f64).sqrt()
}

/// Fast ≤ radius decision: lazily dilate `a` by the integer-radius disc and
/// probe membership in `b`. Exact for the decision because the disc contains
/// precisely the offsets with dx² + dy² ≤ radius².
pub fn within_distance(a: &InstanceRegion, b: &InstanceRegion, radius: f64) -> bool {
    // cheap prefilter on inflated boxes
    let r = radius.floor() as i64;
    if (a.bbox.x_min as i64) > b.bbox.x_max as i64 + r
        || (b.bbox.x_min as i64) > a.bbox.x_max as i64 + r
        || (a.bbox.y_min as i64) > b.bbox.y_max as i64 + r
        || (b.bbox.y_min as i64) > a.bbox.y_max as i64 + r
    {
        return false;
    }
    let r2 = (radius * radius).floor() as i64;
    let disc = disc_offsets(radius);
    let (small, large) = if a.pixels.len() <= b.pixels.len() { (a, b) } else { (b, a) };
    for &(x, y) in &small.boundary_pixels() {
        for &(dx, dy) in &disc {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx < 0 || ny < 0 {
                continue;
            }
            if dx * dx + dy * dy <= r2 && large.contains(nx as u32, ny as u32) {
                return true;
            }
        }
    }
    false
}

fn disc_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let r2 = (radius * radius).floor() as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}
