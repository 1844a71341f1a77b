//! Raster images, categorical masks, taxonomy handling, and tiling.
//!
//! Images are row-major 8-bit buffers with 1, 3, or 4 channels. Masks are
//! row-major unsigned 16-bit category labels where 0 is background. Both
//! persist as PNG (masks as 16-bit grayscale) so every intermediate artifact
//! stays losslessly inspectable with ordinary tools.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image dimensions {iw}x{ih} do not match mask dimensions {mw}x{mh}")]
    DimensionMismatch { iw: u32, ih: u32, mw: u32, mh: u32 },
    #[error("tile size {tile} exceeds source dimensions {width}x{height}")]
    TileTooLarge { tile: u32, width: u32, height: u32 },
    #[error("stride must be >= 1")]
    ZeroStride,
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BadBufferLength { got: usize, width: u32, height: u32, channels: u8 },
    #[error("unsupported channel count {0} (expected 1, 3, or 4)")]
    BadChannelCount(u8),
    #[error("raster dimensions must be positive")]
    EmptyRaster,
    #[error("unknown raw code {code} at pixel ({x}, {y})")]
    UnknownRawCode { code: RawCode, x: u32, y: u32 },
    #[error("taxonomy error: {0}")]
    Taxonomy(String),
    #[error("taxonomy parse error at line {line}: {msg}")]
    TaxonomyParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// One image window: row-major 8-bit samples, 1/3/4 channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<u8>,
    pub source_id: String,
    /// Ground sampling distance in meters per pixel, when known.
    pub gsd: Option<f64>,
}

impl RasterImage {
    pub fn new(
        width: u32,
        height: u32,
        channels: u8,
        data: Vec<u8>,
        source_id: impl Into<String>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyRaster);
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(RasterError::BadChannelCount(channels));
        }
        let expect = width as usize * height as usize * channels as usize;
        if data.len() != expect {
            return Err(RasterError::BadBufferLength { got: data.len(), width, height, channels });
        }
        Ok(Self { width, height, channels, data, source_id: source_id.into(), gsd: None })
    }

    /// Solid-color image, handy for synthetic fixtures.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8, source_id: &str) -> Self {
        let n = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; n], source_id).expect("valid dims")
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let off = (y as usize * self.width as usize + x as usize) * c;
        &self.data[off..off + c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels as usize;
        let off = (y as usize * self.width as usize + x as usize) * c;
        &mut self.data[off..off + c]
    }

    fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> RasterImage {
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(w as usize * h as usize * c);
        for y in y0..y0 + h {
            let start = (y as usize * self.width as usize + x0 as usize) * c;
            data.extend_from_slice(&self.data[start..start + w as usize * c]);
        }
        RasterImage {
            width: w,
            height: h,
            channels: self.channels,
            data,
            source_id: self.source_id.clone(),
            gsd: self.gsd,
        }
    }
}

/// Single-channel categorical mask; label 0 is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalMask {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u16>,
    pub taxonomy_id: String,
}

impl CategoricalMask {
    pub fn new(
        width: u32,
        height: u32,
        labels: Vec<u16>,
        taxonomy_id: impl Into<String>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyRaster);
        }
        if labels.len() != width as usize * height as usize {
            return Err(RasterError::BadBufferLength {
                got: labels.len(),
                width,
                height,
                channels: 1,
            });
        }
        Ok(Self { width, height, labels, taxonomy_id: taxonomy_id.into() })
    }

    #[inline]
    pub fn label(&self, x: u32, y: u32) -> u16 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set_label(&mut self, x: u32, y: u32, v: u16) {
        self.labels[y as usize * self.width as usize + x as usize] = v;
    }

    /// Distinct non-background labels present, ascending.
    pub fn present_categories(&self) -> Vec<u16> {
        let mut seen = std::collections::BTreeSet::new();
        for &l in &self.labels {
            if l != 0 {
                seen.insert(l);
            }
        }
        seen.into_iter().collect()
    }

    /// Every label must be background or a taxonomy entry.
    pub fn validate_against(&self, taxonomy: &CategoryTaxonomy) -> Result<(), RasterError> {
        for (i, &l) in self.labels.iter().enumerate() {
            if l != 0 && !taxonomy.entries.contains_key(&l) {
                let x = (i % self.width as usize) as u32;
                let y = (i / self.width as usize) as u32;
                return Err(RasterError::Taxonomy(format!(
                    "label {l} at ({x}, {y}) is not in taxonomy '{}'",
                    taxonomy.taxonomy_id
                )));
            }
        }
        Ok(())
    }

    fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> CategoricalMask {
        let mut labels = Vec::with_capacity(w as usize * h as usize);
        for y in y0..y0 + h {
            let start = y as usize * self.width as usize + x0 as usize;
            labels.extend_from_slice(&self.labels[start..start + w as usize]);
        }
        CategoricalMask { width: w, height: h, labels, taxonomy_id: self.taxonomy_id.clone() }
    }
}

/// Unified category taxonomy plus per-source synonym mappings.
///
/// Synonym keys are matched case-insensitively on the label name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTaxonomy {
    pub taxonomy_id: String,
    /// category id -> canonical name
    pub entries: BTreeMap<u16, String>,
    /// (source dataset, lowercased source label) -> category id
    pub synonym_map: BTreeMap<(String, String), u16>,
}

impl CategoryTaxonomy {
    pub fn new(taxonomy_id: impl Into<String>) -> Self {
        Self { taxonomy_id: taxonomy_id.into(), ..Default::default() }
    }

    pub fn add_entry(&mut self, id: u16, name: impl Into<String>) -> Result<(), RasterError> {
        let name = name.into();
        if id == 0 {
            return Err(RasterError::Taxonomy("category id 0 is reserved for background".into()));
        }
        if self.entries.contains_key(&id) {
            return Err(RasterError::Taxonomy(format!("duplicate category id {id}")));
        }
        let lower = name.to_lowercase();
        if self.entries.values().any(|n| n.to_lowercase() == lower) {
            return Err(RasterError::Taxonomy(format!("duplicate category name '{name}'")));
        }
        self.entries.insert(id, name);
        Ok(())
    }

    pub fn add_synonym(
        &mut self,
        dataset: impl Into<String>,
        label: impl Into<String>,
        id: u16,
    ) -> Result<(), RasterError> {
        if !self.entries.contains_key(&id) {
            return Err(RasterError::Taxonomy(format!("synonym target {id} is not a category")));
        }
        self.synonym_map.insert((dataset.into(), label.into().to_lowercase()), id);
        Ok(())
    }

    pub fn name_of(&self, id: u16) -> Option<&str> {
        self.entries.get(&id).map(String::as_str)
    }

    /// Resolve a (dataset, label) pair: explicit synonym first, then a
    /// case-insensitive match against canonical names.
    pub fn resolve(&self, dataset: &str, label: &str) -> Option<u16> {
        let lower = label.to_lowercase();
        if let Some(&id) = self.synonym_map.get(&(dataset.to_string(), lower.clone())) {
            return Some(id);
        }
        self.entries
            .iter()
            .find(|(_, name)| name.to_lowercase() == lower)
            .map(|(&id, _)| id)
    }

    /// Parse the tab-separated taxonomy table format:
    ///
    /// ```text
    /// # comment
    /// category<TAB>63<TAB>Car
    /// synonym<TAB>potsdam<TAB>Car<TAB>63
    /// ```
    pub fn from_reader(taxonomy_id: &str, reader: impl BufRead) -> Result<Self, RasterError> {
        let mut tax = CategoryTaxonomy::new(taxonomy_id);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let parse_id = |s: &str| {
                s.parse::<u16>().map_err(|_| RasterError::TaxonomyParse {
                    line: lineno + 1,
                    msg: format!("bad category id '{s}'"),
                })
            };
            match parts.as_slice() {
                ["category", id, name] => tax
                    .add_entry(parse_id(id)?, name.to_string())
                    .map_err(|e| RasterError::TaxonomyParse { line: lineno + 1, msg: e.to_string() })?,
                ["synonym", dataset, label, id] => tax
                    .add_synonym(dataset.to_string(), label.to_string(), parse_id(id)?)
                    .map_err(|e| RasterError::TaxonomyParse { line: lineno + 1, msg: e.to_string() })?,
                _ => {
                    return Err(RasterError::TaxonomyParse {
                        line: lineno + 1,
                        msg: format!("unrecognized record '{line}'"),
                    })
                }
            }
        }
        Ok(tax)
    }

    pub fn from_path(taxonomy_id: &str, path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(taxonomy_id, std::io::BufReader::new(file))
    }

    pub fn to_table_string(&self) -> String {
        let mut out = String::from("# category\t<id>\t<name>\n");
        for (id, name) in &self.entries {
            out.push_str(&format!("category\t{id}\t{name}\n"));
        }
        out.push_str("# synonym\t<dataset>\t<label>\t<id>\n");
        for ((dataset, label), id) in &self.synonym_map {
            out.push_str(&format!("synonym\t{dataset}\t{label}\t{id}\n"));
        }
        out
    }
}

/// One tiled window of a source image together with its aligned mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub image: RasterImage,
    pub mask: CategoricalMask,
    /// Pixel offset of this window in the source raster.
    pub origin: (u32, u32),
    pub source_id: String,
    pub patch_id: String,
}

/// Deterministic patch identifier: a pure function of source and origin.
pub fn patch_id(source_id: &str, origin: (u32, u32)) -> String {
    format!("{}_x{}_y{}", source_id, origin.0, origin.1)
}

/// Window start offsets along one axis: the stride grid clamped so the final
/// window sits flush with the border when the grid overshoots.
pub fn window_starts(dim: u32, tile: u32, stride: u32) -> Vec<u32> {
    debug_assert!(tile <= dim && stride >= 1);
    let mut starts: Vec<u32> = (0..)
        .map(|k| k * stride)
        .take_while(|&s| s + tile <= dim)
        .collect();
    let last = dim - tile;
    if *starts.last().expect("at least start 0") != last {
        starts.push(last);
    }
    starts
}

/// Slide a tile window over an aligned image/mask pair, row-major by origin.
pub fn tile(
    image: &RasterImage,
    mask: &CategoricalMask,
    tile_px: u32,
    stride: u32,
) -> Result<Vec<Patch>, RasterError> {
    if image.width != mask.width || image.height != mask.height {
        return Err(RasterError::DimensionMismatch {
            iw: image.width,
            ih: image.height,
            mw: mask.width,
            mh: mask.height,
        });
    }
    if stride == 0 {
        return Err(RasterError::ZeroStride);
    }
    if tile_px > image.width || tile_px > image.height {
        return Err(RasterError::TileTooLarge {
            tile: tile_px,
            width: image.width,
            height: image.height,
        });
    }
    let xs = window_starts(image.width, tile_px, stride);
    let ys = window_starts(image.height, tile_px, stride);
    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            patches.push(Patch {
                image: image.crop(x, y, tile_px, tile_px),
                mask: mask.crop(x, y, tile_px, tile_px),
                origin: (x, y),
                source_id: image.source_id.clone(),
                patch_id: patch_id(&image.source_id, (x, y)),
            });
        }
    }
    Ok(patches)
}

/// Raw mask encodings as shipped by source datasets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawMask {
    /// Index or palette masks decode to per-pixel integer codes.
    Index { width: u32, height: u32, codes: Vec<u16> },
    /// RGB-coded label masks, row-major interleaved.
    Rgb { width: u32, height: u32, data: Vec<u8> },
}

/// A raw per-pixel code prior to taxonomy normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RawCode {
    Index(u16),
    Rgb(u8, u8, u8),
}

impl fmt::Display for RawCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawCode::Index(v) => write!(f, "index {v}"),
            RawCode::Rgb(r, g, b) => write!(f, "rgb({r}, {g}, {b})"),
        }
    }
}

/// Map every raw pixel code to a unified category id. Any code absent from
/// `decode_table` aborts with the offending code and its first location.
pub fn normalize_mask(
    raw: &RawMask,
    decode_table: &BTreeMap<RawCode, u16>,
    taxonomy_id: &str,
) -> Result<CategoricalMask, RasterError> {
    let (width, height) = match raw {
        RawMask::Index { width, height, .. } => (*width, *height),
        RawMask::Rgb { width, height, .. } => (*width, *height),
    };
    let mut labels = Vec::with_capacity(width as usize * height as usize);
    let lookup = |code: RawCode, i: usize| {
        decode_table.get(&code).copied().ok_or_else(|| RasterError::UnknownRawCode {
            code,
            x: (i % width as usize) as u32,
            y: (i / width as usize) as u32,
        })
    };
    match raw {
        RawMask::Index { codes, .. } => {
            for (i, &c) in codes.iter().enumerate() {
                labels.push(lookup(RawCode::Index(c), i)?);
            }
        }
        RawMask::Rgb { data, .. } => {
            for i in 0..width as usize * height as usize {
                let p = &data[i * 3..i * 3 + 3];
                labels.push(lookup(RawCode::Rgb(p[0], p[1], p[2]), i)?);
            }
        }
    }
    CategoricalMask::new(width, height, labels, taxonomy_id)
}

/// Resolve a batch of (dataset, label) names against the taxonomy. Unmapped
/// names come back in the reject list instead of vanishing.
pub fn merge_labels(
    source_labels: &[(String, String)],
    taxonomy: &CategoryTaxonomy,
) -> (BTreeMap<(String, String), u16>, Vec<(String, String)>) {
    let mut mapped = BTreeMap::new();
    let mut rejected = Vec::new();
    for (dataset, label) in source_labels {
        match taxonomy.resolve(dataset, label) {
            Some(id) => {
                mapped.insert((dataset.clone(), label.clone()), id);
            }
            None => rejected.push((dataset.clone(), label.clone())),
        }
    }
    (mapped, rejected)
}

// ---------------------------------------------------------------------------
// PNG persistence
// ---------------------------------------------------------------------------

pub fn write_image_png(image: &RasterImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let color = match image.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        4 => image::ExtendedColorType::Rgba8,
        c => return Err(RasterError::BadChannelCount(c)),
    };
    image::save_buffer_with_format(
        path,
        &image.data,
        image.width,
        image.height,
        color,
        image::ImageFormat::Png,
    )?;
    Ok(())
}

/// PNG-encode into memory (for prompt attachments).
pub fn encode_image_png(image: &RasterImage) -> Result<Vec<u8>, RasterError> {
    let color = match image.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        4 => image::ExtendedColorType::Rgba8,
        c => return Err(RasterError::BadChannelCount(c)),
    };
    let mut bytes = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(std::io::Cursor::new(&mut bytes));
    image::ImageEncoder::write_image(encoder, &image.data, image.width, image.height, color)?;
    Ok(bytes)
}

pub fn read_image_png(path: impl AsRef<Path>, source_id: &str) -> Result<RasterImage, RasterError> {
    let img = image::open(path)?;
    let (width, height) = (img.width(), img.height());
    let (channels, data) = match img {
        image::DynamicImage::ImageLuma8(b) => (1u8, b.into_raw()),
        image::DynamicImage::ImageRgb8(b) => (3u8, b.into_raw()),
        image::DynamicImage::ImageRgba8(b) => (4u8, b.into_raw()),
        other => (3u8, other.to_rgb8().into_raw()),
    };
    RasterImage::new(width, height, channels, data, source_id)
}

/// Masks persist as 16-bit grayscale PNG so label ids survive losslessly.
pub fn write_mask_png(mask: &CategoricalMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(mask.width, mask.height, mask.labels.clone())
            .expect("label buffer matches dims");
    image::DynamicImage::ImageLuma16(buf).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_mask_png(path: impl AsRef<Path>, taxonomy_id: &str) -> Result<CategoricalMask, RasterError> {
    let img = image::open(path)?;
    let (width, height) = (img.width(), img.height());
    let labels: Vec<u16> = match img {
        image::DynamicImage::ImageLuma16(b) => b.into_raw(),
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u16::from).collect(),
        other => other.to_luma16().into_raw(),
    };
    CategoricalMask::new(width, height, labels, taxonomy_id)
}
