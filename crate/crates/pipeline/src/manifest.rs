//! Line-delimited JSON manifest: one header line, then one record per line,
//! sorted by record id. Counts in the header must reconcile with the record
//! lines on load.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use segforge_core::metrics::BinaryMask;
use segforge_core::Task;
use segforge_instruct::{InstructionRecord, TaskSubtype};

use crate::rle::{rle_decode, rle_encode};

pub const MANIFEST_VERSION: &str = "1";

/// One manifest line: the instruction record plus enough ground truth to
/// evaluate against it standalone (mask as RLE, dims, categories).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(flatten)]
    pub record: InstructionRecord,
    pub categories: Vec<u16>,
    pub width: u32,
    pub height: u32,
    /// Union of the record's region pixels, column-major RLE.
    pub gt_rle: String,
    pub gt_area: u64,
}

impl ManifestRecord {
    pub fn gt_mask(&self) -> Result<BinaryMask> {
        rle_decode(&self.gt_rle, self.width, self.height)
    }

    pub fn from_parts(
        record: InstructionRecord,
        categories: Vec<u16>,
        width: u32,
        height: u32,
        gt: &BinaryMask,
    ) -> Self {
        Self {
            record,
            categories,
            width,
            height,
            gt_rle: rle_encode(gt),
            gt_area: gt.count_ones(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub total: usize,
    pub interactive: usize,
    pub referring: usize,
    pub reasoning: usize,
    pub point: usize,
    #[serde(rename = "box")]
    pub box_: usize,
    pub attribute: usize,
    pub contextual: usize,
    pub accepted: usize,
}

impl ManifestCounts {
    pub fn tally(records: &[ManifestRecord]) -> Self {
        let mut c = ManifestCounts::default();
        for r in records {
            c.total += 1;
            match r.record.task {
                Task::Interactive => c.interactive += 1,
                Task::Referring => c.referring += 1,
                Task::Reasoning => c.reasoning += 1,
            }
            match r.record.subtype {
                Some(TaskSubtype::Point) => c.point += 1,
                Some(TaskSubtype::Box) => c.box_ += 1,
                Some(TaskSubtype::Attribute) => c.attribute += 1,
                Some(TaskSubtype::Contextual) => c.contextual += 1,
                None => {}
            }
            if r.record.accepted {
                c.accepted += 1;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub counts: ManifestCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Assemble from unordered records: sorts by record id, rejects
    /// duplicate ids, and tallies the header counts.
    pub fn assemble(config_hash: String, seed: u64, mut records: Vec<ManifestRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.record.record_id.cmp(&b.record.record_id));
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(&r.record.record_id) {
                bail!("duplicate record id {}", r.record.record_id);
            }
        }
        let counts = ManifestCounts::tally(&records);
        Ok(Self {
            header: ManifestHeader {
                version: MANIFEST_VERSION.into(),
                config_hash,
                seed,
                counts,
            },
            records,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", serde_json::to_string(&self.header)?)?;
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(&path)
            .with_context(|| format!("creating manifest {}", path.as_ref().display()))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    /// Load and validate: header present, records sorted, counts reconcile.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(&path)
            .with_context(|| format!("opening manifest {}", path.as_ref().display()))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header_line = lines
            .next()
            .transpose()?
            .context("manifest is empty: missing header line")?;
        let header: ManifestHeader =
            serde_json::from_str(&header_line).context("parsing manifest header")?;
        if header.version != MANIFEST_VERSION {
            bail!("unsupported manifest version {}", header.version);
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(&line)
                .with_context(|| format!("parsing manifest record on line {}", i + 2))?;
            records.push(record);
        }
        for pair in records.windows(2) {
            if pair[0].record.record_id >= pair[1].record.record_id {
                bail!(
                    "manifest records are not strictly sorted: '{}' before '{}'",
                    pair[0].record.record_id,
                    pair[1].record.record_id
                );
            }
        }
        let actual = ManifestCounts::tally(&records);
        if actual != header.counts {
            bail!(
                "manifest header counts do not reconcile with records: header {:?}, actual {:?}",
                header.counts,
                actual
            );
        }
        Ok(Self { header, records })
    }
}

/// Plain JSONL of records without a header (intermediate stage output).
pub fn write_records_jsonl(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(&path)?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_records_jsonl(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading records {}", path.as_ref().display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(line).with_context(|| format!("record on line {}", i + 1))?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_record(id: &str, task: Task, subtype: Option<TaskSubtype>) -> ManifestRecord {
        let gt = BinaryMask::from_pixels(8, 8, &[(1, 1), (2, 1)]);
        let record = InstructionRecord {
            record_id: id.into(),
            patch_id: "p_x0_y0".into(),
            region_ids: vec![format!("{id}:region")],
            task,
            subtype,
            text: "Please segment the region/target corresponding to the points {(0.500, 0.500)}."
                .into(),
            answer_explanation: None,
            prompt_points: if task == Task::Interactive { Some(vec![(0.5, 0.5)]) } else { None },
            prompt_box: None,
            scores: None,
            accepted: true,
        };
        ManifestRecord::from_parts(record, vec![63], 8, 8, &gt)
    }

    #[test]
    fn assemble_sorts_and_counts() {
        let records = vec![
            sample_record("b", Task::Referring, None),
            sample_record("a", Task::Interactive, Some(TaskSubtype::Point)),
            sample_record("c", Task::Reasoning, Some(TaskSubtype::Attribute)),
        ];
        let m = Manifest::assemble("hash".into(), 42, records).unwrap();
        let ids: Vec<&str> = m.records.iter().map(|r| r.record.record_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(m.header.counts.total, 3);
        assert_eq!(m.header.counts.interactive, 1);
        assert_eq!(m.header.counts.point, 1);
        assert_eq!(m.header.counts.attribute, 1);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let records = vec![
            sample_record("a", Task::Referring, None),
            sample_record("a", Task::Referring, None),
        ];
        assert!(Manifest::assemble("hash".into(), 42, records).is_err());
    }

    #[test]
    fn save_load_round_trip_reconciles() {
        let dir = std::env::temp_dir().join(format!("segforge-manifest-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("manifest.jsonl");
        let m = Manifest::assemble(
            "hash".into(),
            7,
            vec![
                sample_record("a", Task::Interactive, Some(TaskSubtype::Point)),
                sample_record("b", Task::Referring, None),
            ],
        )
        .unwrap();
        m.save(&path).unwrap();
        let loaded = Manifest::load(&path).unwrap();
        assert_eq!(loaded, m);

        // corrupt the header count: load must fail
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replacen("\"total\":2", "\"total\":3", 1);
        std::fs::write(&path, text).unwrap();
        let err = Manifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("reconcile"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn gt_mask_round_trips_through_rle() {
        let r = sample_record("a", Task::Interactive, Some(TaskSubtype::Point));
        let gt = r.gt_mask().unwrap();
        assert_eq!(gt.count_ones(), 2);
        assert_eq!(r.gt_area, 2);
        assert!(gt.get(1, 1) && gt.get(2, 1));
    }
}
