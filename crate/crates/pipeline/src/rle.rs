//! Column-major run-length codec for binary masks.
//!
//! Counts alternate background/foreground starting with the background run,
//! scanning columns left to right and pixels top to bottom within each
//! column. The leading-background convention matches the dominant
//! segmentation-annotation interchange format.

use anyhow::{bail, Context, Result};
use segforge_core::metrics::BinaryMask;

/// Encode as space-separated run counts.
pub fn rle_encode(mask: &BinaryMask) -> String {
    let mut counts: Vec<u64> = Vec::new();
    let mut current = false; // runs start with background
    let mut run = 0u64;
    for x in 0..mask.width {
        for y in 0..mask.height {
            let bit = mask.get(x, y);
            if bit == current {
                run += 1;
            } else {
                counts.push(run);
                current = bit;
                run = 1;
            }
        }
    }
    counts.push(run);
    counts.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

/// Decode; the run sum must equal width × height.
pub fn rle_decode(text: &str, width: u32, height: u32) -> Result<BinaryMask> {
    let counts: Vec<u64> = text
        .split_whitespace()
        .map(|t| t.parse::<u64>().with_context(|| format!("bad run count '{t}'")))
        .collect::<Result<_>>()?;
    let total: u64 = counts.iter().sum();
    let expect = width as u64 * height as u64;
    if total != expect {
        bail!("run counts sum to {total}, expected {width}x{height}={expect}");
    }
    let mut bits = vec![false; expect as usize];
    let mut idx = 0u64;
    let mut value = false;
    for run in counts {
        if value {
            for i in idx..idx + run {
                // column-major index back to row-major storage
                let x = (i / height as u64) as u32;
                let y = (i % height as u64) as u32;
                bits[y as usize * width as usize + x as usize] = true;
            }
        }
        idx += run;
        value = !value;
    }
    Ok(BinaryMask::new(width, height, bits))
}
