//! Deterministic interactive instructions from mask geometry.
//!
//! Coordinates normalize as pixel centers, (p + 0.5) / dimension, rounded to
//! three decimals; boxes normalize their half-open edges directly. Small
//! regions (under the configured area) always get a single point, larger
//! ones draw the point count from the configured distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use segforge_core::instance::InstanceRegion;

use crate::InstructError;

/// Point-count policy for interactive prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRule {
    /// Regions below this pixel area always get one point.
    pub small_area: u64,
    /// P(k=1), P(k=2), P(k=3) for larger regions.
    pub dist: [f64; 3],
}

impl Default for PointRule {
    fn default() -> Self {
        Self { small_area: 200, dist: [0.6, 0.2, 0.2] }
    }
}

/// Number of prompt points for a region of the given area.
pub fn draw_point_count(area: u64, rule: &PointRule, rng: &mut impl Rng) -> usize {
    if area < rule.small_area {
        return 1;
    }
    let u: f64 = rng.gen_range(0.0..1.0);
    if u < rule.dist[0] {
        1
    } else if u < rule.dist[0] + rule.dist[1] {
        2
    } else {
        3
    }
}

/// Draw `k` distinct pixels uniformly from the region.
pub fn sample_region_pixels(
    region: &InstanceRegion,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(u32, u32)>, InstructError> {
    let n = region.pixels.len();
    if n == 0 {
        return Err(InstructError::EmptyRegion);
    }
    if k > n {
        return Err(InstructError::PointCountExceedsArea { k, area: region.area });
    }
    // partial Fisher-Yates over a copy of the (scan-ordered) pixel list
    let mut pool = region.pixels.clone();
    for slot in 0..k {
        let j = rng.gen_range(slot..pool.len());
        pool.swap(slot, j);
    }
    pool.truncate(k);
    Ok(pool)
}

/// Pixel-center normalization, rounded to three decimals.
pub fn normalize_point(pixel: (u32, u32), dims: (u32, u32)) -> (f64, f64) {
    let x = (pixel.0 as f64 + 0.5) / dims.0 as f64;
    let y = (pixel.1 as f64 + 0.5) / dims.1 as f64;
    (round3(x), round3(y))
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Sample normalized prompt points for a region: k = 1 under the small-area
/// rule, otherwise drawn from the configured distribution; points are
/// distinct region pixels, so each un-rounded coordinate lies inside the
/// region mask by construction.
pub fn sample_points(
    region: &InstanceRegion,
    dims: (u32, u32),
    rule: &PointRule,
    rng: &mut impl Rng,
) -> Result<Vec<(f64, f64)>, InstructError> {
    if region.pixels.is_empty() {
        return Err(InstructError::EmptyRegion);
    }
    let k = draw_point_count(region.area, rule, rng);
    let pixels = sample_region_pixels(region, k, rng)?;
    Ok(pixels.into_iter().map(|p| normalize_point(p, dims)).collect())
}

/// Fixed point template, 1-3 points, three-decimal formatting.
pub fn point_instruction(points: &[(f64, f64)]) -> Result<String, InstructError> {
    if points.is_empty() || points.len() > 3 {
        return Err(InstructError::BadPointCount(points.len()));
    }
    let rendered: Vec<String> =
        points.iter().map(|(x, y)| format!("({x:.3}, {y:.3})")).collect();
    Ok(format!(
        "Please segment the region/target corresponding to the points {{{}}}.",
        rendered.join(", ")
    ))
}

/// Fixed box template over the tight normalized bbox.
pub fn box_instruction(region: &InstanceRegion, dims: (u32, u32)) -> String {
    let b = normalized_bbox(region, dims);
    format!(
        "Please segment the region/target corresponding to the box x0,y0=[{:.3},{:.3}], x1,y1=[{:.3},{:.3}].",
        b.0, b.1, b.2, b.3
    )
}

/// Half-open tight bbox normalized by the patch dimensions, rounded to
/// three decimals.
pub fn normalized_bbox(region: &InstanceRegion, dims: (u32, u32)) -> (f64, f64, f64, f64) {
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    (
        round3(region.bbox.x_min as f64 / w),
        round3(region.bbox.y_min as f64 / h),
        round3(region.bbox.x_max as f64 / w),
        round3(region.bbox.y_max as f64 / h),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use segforge_core::instance::region_stats;

    fn region(pixels: Vec<(u32, u32)>) -> InstanceRegion {
        let mut pixels = pixels;
        pixels.sort_by_key(|&(x, y)| (y, x));
        let (area, bbox, centroid) = region_stats(&pixels).unwrap();
        InstanceRegion { category: 1, pixels, area, bbox, centroid, region_id: "r".into() }
    }

    fn block(x0: u32, y0: u32, w: u32, h: u32) -> InstanceRegion {
        region((y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (x, y))).collect())
    }

    #[test]
    fn small_regions_always_get_one_point() {
        let r = block(0, 0, 15, 10); // area 150 < 200
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let pts = sample_points(&r, (512, 512), &PointRule::default(), &mut rng).unwrap();
            assert_eq!(pts.len(), 1);
        }
    }

    #[test]
    fn point_count_distribution_matches_configuration() {
        let r = block(0, 0, 100, 50); // area 5000
        let rule = PointRule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0u32; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[draw_point_count(r.area, &rule, &mut rng)] += 1;
        }
        let freqs: Vec<f64> = counts[1..].iter().map(|&c| c as f64 / n as f64).collect();
        assert!((freqs[0] - 0.6).abs() <= 0.01, "P1={}", freqs[0]);
        assert!((freqs[1] - 0.2).abs() <= 0.01, "P2={}", freqs[1]);
        assert!((freqs[2] - 0.2).abs() <= 0.01, "P3={}", freqs[2]);
        // chi-square with 2 degrees of freedom: p > 0.001 ⇔ statistic below
        // the 0.999 quantile 13.8155
        let expected = [0.6 * n as f64, 0.2 * n as f64, 0.2 * n as f64];
        let chi2: f64 = counts[1..]
            .iter()
            .zip(&expected)
            .map(|(&o, &e)| (o as f64 - e) * (o as f64 - e) / e)
            .sum();
        assert!(chi2 < 13.8155, "chi2={chi2}");
    }

    #[test]
    fn sampled_points_are_distinct_region_pixels() {
        let r = block(10, 20, 30, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pixels = sample_region_pixels(&r, 3, &mut rng).unwrap();
            assert_eq!(pixels.len(), 3);
            let mut dedup = pixels.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), 3);
            for p in pixels {
                assert!(r.contains(p.0, p.1));
            }
        }
        assert!(matches!(
            sample_region_pixels(&region(vec![(0, 0)]), 2, &mut rng),
            Err(InstructError::PointCountExceedsArea { .. })
        ));
    }

    #[test]
    fn singleton_pixel_normalizes_to_center() {
        // (3.5/512, 5.5/512) rounded to three decimals
        let r = region(vec![(3, 5)]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = sample_points(&r, (512, 512), &PointRule::default(), &mut rng).unwrap();
        assert_eq!(pts, vec![(0.007, 0.011)]);
    }

    #[test]
    fn unrounded_coordinates_map_back_into_the_region() {
        let r = block(100, 200, 37, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let k = draw_point_count(r.area, &PointRule::default(), &mut rng);
            for (x, y) in sample_region_pixels(&r, k, &mut rng).unwrap() {
                let (nx, ny) = ((x as f64 + 0.5) / 512.0, (y as f64 + 0.5) / 512.0);
                let back = ((nx * 512.0 - 0.5) as u32, (ny * 512.0 - 0.5) as u32);
                assert!(r.contains(back.0, back.1));
                assert!((0.0..=1.0).contains(&nx) && (0.0..=1.0).contains(&ny));
            }
        }
    }

    #[test]
    fn point_template_golden_strings() {
        assert_eq!(
            point_instruction(&[(0.5, 0.5)]).unwrap(),
            "Please segment the region/target corresponding to the points {(0.500, 0.500)}."
        );
        assert_eq!(
            point_instruction(&[(0.007, 0.011), (0.25, 0.75)]).unwrap(),
            "Please segment the region/target corresponding to the points {(0.007, 0.011), (0.250, 0.750)}."
        );
        assert!(point_instruction(&[]).is_err());
        assert!(point_instruction(&[(0.1, 0.1); 4]).is_err());
    }

    #[test]
    fn box_template_golden_strings() {
        let full = block(0, 0, 512, 512);
        assert_eq!(
            box_instruction(&full, (512, 512)),
            "Please segment the region/target corresponding to the box x0,y0=[0.000,0.000], x1,y1=[1.000,1.000]."
        );
        let quarter = block(0, 0, 256, 256);
        assert_eq!(
            box_instruction(&quarter, (512, 512)),
            "Please segment the region/target corresponding to the box x0,y0=[0.000,0.000], x1,y1=[0.500,0.500]."
        );
        // single pixel (3,5): half-open bbox (3,5,4,6) normalized
        let dot = region(vec![(3, 5)]);
        assert_eq!(
            box_instruction(&dot, (512, 512)),
            "Please segment the region/target corresponding to the box x0,y0=[0.006,0.010], x1,y1=[0.008,0.012]."
        );
    }

    #[test]
    fn interactive_generation_replays_byte_identically() {
        let r = block(40, 60, 80, 80);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = sample_points(&r, (512, 512), &PointRule::default(), &mut rng).unwrap();
            point_instruction(&pts).unwrap()
        };
        assert_eq!(run(11), run(11));
        assert_eq!(box_instruction(&r, (512, 512)), box_instruction(&r, (512, 512)));
    }
}
