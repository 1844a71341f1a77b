//! Segmentation and grounding metrics.
//!
//! Per-sample IoU averages to gIoU; pooled pixel counts give cIoU. Pixel
//! tallies stay in integers until the final division so reduction order can
//! never change a result.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask dimensions {0}x{1} vs {2}x{3} do not match")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("empty evaluation set")]
    EmptyInput,
    #[error("empty mask has no bounding box")]
    EmptyMask,
    #[error("degenerate box: min must be strictly below max on both axes")]
    DegenerateBox,
    #[error("threshold must lie in (0, 1)")]
    BadThreshold,
    #[error("mixed pair kinds in one evaluation set")]
    MixedKinds,
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Self { width, height, bits }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn from_pixels(width: u32, height: u32, pixels: &[(u32, u32)]) -> Self {
        let mut bits = vec![false; width as usize * height as usize];
        for &(x, y) in pixels {
            bits[y as usize * width as usize + x as usize] = true;
        }
        Self { width, height, bits }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// Normalized axis-aligned box, half-open: (x_min, y_min, x_max, y_max).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// A prediction paired with its ground truth; masks or boxes, never mixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EvalPair {
    Masks { pred: BinaryMask, gt: BinaryMask, sample_id: String },
    Boxes { pred: NormBox, gt: NormBox, sample_id: String },
}

fn intersection_union(pred: &BinaryMask, gt: &BinaryMask) -> Result<(u64, u64), MetricsError> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(MetricsError::DimensionMismatch(pred.width, pred.height, gt.width, gt.height));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (a, b) in pred.bits.iter().zip(&gt.bits) {
        inter += (*a && *b) as u64;
        union += (*a || *b) as u64;
    }
    Ok((inter, union))
}

/// |∩| / |∪|. Both masks empty counts as a perfect match (1.0); exactly one
/// empty is a total miss (0.0).
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    let (inter, union) = intersection_union(pred, gt)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

fn pair_iou(pair: &EvalPair) -> Result<f64, MetricsError> {
    match pair {
        EvalPair::Masks { pred, gt, .. } => iou(pred, gt),
        EvalPair::Boxes { pred, gt, .. } => box_iou(pred, gt),
    }
}

/// Mean of per-sample IoU: every sample weighs the same.
pub fn giou(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    for p in pairs {
        sum += pair_iou(p)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Pooled intersection over pooled union across all samples (mask pairs only).
pub fn ciou(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut inter_total = 0u64;
    let mut union_total = 0u64;
    for p in pairs {
        match p {
            EvalPair::Masks { pred, gt, .. } => {
                let (i, u) = intersection_union(pred, gt)?;
                inter_total += i;
                union_total += u;
            }
            EvalPair::Boxes { .. } => return Err(MetricsError::MixedKinds),
        }
    }
    if union_total == 0 {
        return Ok(1.0);
    }
    Ok(inter_total as f64 / union_total as f64)
}

/// Tight enclosing box of a mask, normalized by its dimensions.
pub fn mask_to_box(mask: &BinaryMask) -> Result<NormBox, MetricsError> {
    let (mut x_min, mut y_min) = (u32::MAX, u32::MAX);
    let (mut x_max, mut y_max) = (0u32, 0u32);
    let mut any = false;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                any = true;
                x_min = x_min.min(x);
                y_min = y_min.min(y);
                x_max = x_max.max(x);
                y_max = y_max.max(y);
            }
        }
    }
    if !any {
        return Err(MetricsError::EmptyMask);
    }
    Ok(NormBox {
        x_min: x_min as f64 / mask.width as f64,
        y_min: y_min as f64 / mask.height as f64,
        x_max: (x_max + 1) as f64 / mask.width as f64,
        y_max: (y_max + 1) as f64 / mask.height as f64,
    })
}

/// Rectangle intersection area over union area; disjoint boxes give 0.
pub fn box_iou(a: &NormBox, b: &NormBox) -> Result<f64, MetricsError> {
    for bx in [a, b] {
        if !(bx.x_min < bx.x_max && bx.y_min < bx.y_max) {
            return Err(MetricsError::DegenerateBox);
        }
    }
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
    let area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
    let union = area_a + area_b - inter;
    Ok(inter / union)
}

/// Fraction of box pairs whose IoU reaches the threshold.
pub fn pr_at(pairs: &[EvalPair], threshold: f64) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::BadThreshold);
    }
    let mut hits = 0usize;
    for p in pairs {
        let v = match p {
            EvalPair::Boxes { pred, gt, .. } => box_iou(pred, gt)?,
            EvalPair::Masks { .. } => return Err(MetricsError::MixedKinds),
        };
        if v >= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: u32, h: u32, f: impl Fn(u32, u32) -> bool) -> BinaryMask {
        let mut bits = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                bits.push(f(x, y));
            }
        }
        BinaryMask::new(w, h, bits)
    }

    fn mask_pair(pred: BinaryMask, gt: BinaryMask) -> EvalPair {
        EvalPair::Masks { pred, gt, sample_id: "s".into() }
    }

    #[test]
    fn iou_basics() {
        let a = mask(4, 4, |x, _| x < 2); // left half, 8 px
        let b = mask(4, 4, |_, y| y < 2); // top half, 8 px
        // brute-force pixel counting: ∩ = 4 (the 2×2 corner), ∪ = 12
        assert!((iou(&a, &b).unwrap() - 4.0 / 12.0).abs() < 1e-12);

        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let disjoint = mask(4, 4, |x, _| x >= 2);
        assert_eq!(iou(&a, &disjoint).unwrap(), 0.0);

        // symmetry and the empty conventions
        assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        let empty = BinaryMask::empty(4, 4);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&a, &empty).unwrap(), 0.0);

        assert!(iou(&a, &BinaryMask::empty(3, 4)).is_err());
    }

    #[test]
    fn giou_is_the_mean() {
        let a = mask(4, 4, |x, _| x < 2);
        let pairs = vec![
            mask_pair(a.clone(), a.clone()),
            mask_pair(a.clone(), mask(4, 4, |x, _| x >= 2)),
        ];
        assert_eq!(giou(&pairs).unwrap(), 0.5);
        assert_eq!(giou(&pairs[..1]).unwrap(), 1.0);

        let third = mask_pair(mask(4, 4, |x, _| x < 2), mask(4, 4, |_, y| y < 2));
        let all = vec![third, pairs[0].clone(), pairs[1].clone()];
        assert!((giou(&all).unwrap() - (1.0 / 3.0 + 1.0 + 0.0) / 3.0).abs() < 1e-12);
        assert!(giou(&[]).is_err());
    }

    #[test]
    fn ciou_pools_pixels_and_differs_from_giou() {
        let quarter = mask_pair(mask(4, 4, |x, _| x < 2), mask(4, 4, |_, y| y < 2)); // ∩=4 ∪=12
        let full = mask_pair(mask(4, 4, |_, _| true), mask(4, 4, |_, _| true)); // ∩=∪=16
        let pairs = vec![quarter.clone(), full];
        let c = ciou(&pairs).unwrap();
        let g = giou(&pairs).unwrap();
        assert!((c - 20.0 / 28.0).abs() < 1e-4);
        assert!((g - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-4);
        assert!((c - g).abs() > 0.01);

        // single pair: cIoU equals IoU
        assert!((ciou(&pairs[..1]).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        let disjoint = vec![mask_pair(mask(4, 4, |x, _| x < 2), mask(4, 4, |x, _| x >= 2))];
        assert_eq!(ciou(&disjoint).unwrap(), 0.0);
    }

    #[test]
    fn mask_to_box_examples() {
        let full = mask(4, 4, |_, _| true);
        assert_eq!(
            mask_to_box(&full).unwrap(),
            NormBox { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 }
        );

        let dot = mask(512, 512, |x, y| (x, y) == (3, 5));
        let b = mask_to_box(&dot).unwrap();
        assert_eq!(b.x_min, 3.0 / 512.0);
        assert_eq!(b.y_min, 5.0 / 512.0);
        assert_eq!(b.x_max, 4.0 / 512.0);
        assert_eq!(b.y_max, 6.0 / 512.0);

        // L-shape: bbox of extremes, checked against an exhaustive scan
        let ell = mask(16, 16, |x, y| (x < 3 && y < 10) || (x < 8 && y >= 8 && y < 10));
        let b = mask_to_box(&ell).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for y in 0..16 {
            for x in 0..16 {
                if ell.get(x, y) {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        assert_eq!(b.x_min, *xs.iter().min().unwrap() as f64 / 16.0);
        assert_eq!(b.x_max, (*xs.iter().max().unwrap() + 1) as f64 / 16.0);
        assert_eq!(b.y_min, *ys.iter().min().unwrap() as f64 / 16.0);
        assert_eq!(b.y_max, (*ys.iter().max().unwrap() + 1) as f64 / 16.0);

        assert!(mask_to_box(&BinaryMask::empty(4, 4)).is_err());
    }

    #[test]
    fn box_iou_examples() {
        let unit = |x0: f64, y0: f64, x1: f64, y1: f64| NormBox {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
        };
        let a = unit(0.0, 0.0, 10.0, 10.0);
        assert_eq!(box_iou(&a, &a).unwrap(), 1.0);

        // rectangle arithmetic: ∩ = 50, ∪ = 150
        let b = unit(5.0, 0.0, 15.0, 10.0);
        assert!((box_iou(&a, &b).unwrap() - 50.0 / 150.0).abs() < 1e-12);

        // touching edges: zero-area intersection
        let c = unit(10.0, 0.0, 20.0, 10.0);
        assert_eq!(box_iou(&a, &c).unwrap(), 0.0);

        assert!(box_iou(&a, &unit(1.0, 1.0, 1.0, 5.0)).is_err());
    }

    #[test]
    fn pr_at_thresholds() {
        let base = NormBox { x_min: 0.0, y_min: 0.0, x_max: 0.1, y_max: 0.1 };
        let identical: Vec<EvalPair> = (0..4)
            .map(|i| EvalPair::Boxes { pred: base, gt: base, sample_id: format!("s{i}") })
            .collect();
        for t in [0.3, 0.5, 0.7] {
            assert_eq!(pr_at(&identical, t).unwrap(), 1.0);
        }

        // the 1/3-IoU pair counts at 0.3 but not at 0.5
        let third = EvalPair::Boxes {
            pred: NormBox { x_min: 0.0, y_min: 0.0, x_max: 0.10, y_max: 0.10 },
            gt: NormBox { x_min: 0.05, y_min: 0.0, x_max: 0.15, y_max: 0.10 },
            sample_id: "t".into(),
        };
        assert_eq!(pr_at(&[third.clone()], 0.3).unwrap(), 1.0);
        assert_eq!(pr_at(&[third], 0.5).unwrap(), 0.0);

        assert!(pr_at(&identical, 0.0).is_err());
        assert!(pr_at(&[], 0.5).is_err());
    }

    /// Naive per-pixel double loop, fully independent of the implementation.
    fn oracle_iou(pred: &BinaryMask, gt: &BinaryMask) -> (u64, u64) {
        let mut inter = 0;
        let mut union = 0;
        for y in 0..pred.height {
            for x in 0..pred.width {
                let (a, b) = (pred.get(x, y), gt.get(x, y));
                if a && b {
                    inter += 1;
                }
                if a || b {
                    union += 1;
                }
            }
        }
        (inter, union)
    }

    #[test]
    fn metrics_match_pixel_oracle_on_random_masks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = rng.gen_range(1..=64u32);
            let h = rng.gen_range(1..=64u32);
            let rand_mask = |rng: &mut rand_chacha::ChaCha8Rng| {
                let bits = (0..w as usize * h as usize).map(|_| rng.gen_bool(0.4)).collect();
                BinaryMask::new(w, h, bits)
            };
            let pairs: Vec<EvalPair> = (0..rng.gen_range(1..=5))
                .map(|i| EvalPair::Masks {
                    pred: rand_mask(&mut rng),
                    gt: rand_mask(&mut rng),
                    sample_id: format!("s{i}"),
                })
                .collect();
            let (mut isum, mut usum, mut iousum) = (0u64, 0u64, 0.0f64);
            for p in &pairs {
                if let EvalPair::Masks { pred, gt, .. } = p {
                    let (i, u) = oracle_iou(pred, gt);
                    isum += i;
                    usum += u;
                    iousum += if u == 0 { 1.0 } else { i as f64 / u as f64 };
                }
            }
            let expect_c = if usum == 0 { 1.0 } else { isum as f64 / usum as f64 };
            assert_eq!(ciou(&pairs).unwrap(), expect_c);
            assert_eq!(giou(&pairs).unwrap(), iousum / pairs.len() as f64);
        }
    }

    #[test]
    fn ciou_equals_giou_on_equal_union_fixtures() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        // every pair has union exactly 32 pixels: gt is a fixed 32-px bar and
        // pred a random-length prefix of it, so unions agree while
        // intersections vary
        let mut pairs = Vec::new();
        for i in 0..6 {
            let k = rng.gen_range(0..=16u32);
            let pred = mask(64, 8, |x, y| y == 0 && x < 32 - k);
            let gt = mask(64, 8, |x, y| y == 0 && x < 32);
            pairs.push(EvalPair::Masks { pred, gt, sample_id: format!("s{i}") });
        }
        let g = giou(&pairs).unwrap();
        let c = ciou(&pairs).unwrap();
        assert!((g - c).abs() < 1e-12, "g={g} c={c}");
    }
}
