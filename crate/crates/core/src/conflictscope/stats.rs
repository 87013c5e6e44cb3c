//! Per-step conflict records, their aggregation, and CSV export.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{cos_angle, gms_from_norms};
use super::GradSnapshot;
use crate::error::{Error, Result};
use crate::models::Architecture;

/// Number of uniform histogram bins over `[-1, 1]`.
pub const HISTOGRAM_BINS: usize = 40;

/// Group made of the union of every per-block record.
pub const POOLED: &str = "pooled";
/// Group whose gradients are all captured blocks concatenated.
pub const GLOBAL: &str = "global";

/// One pair of task gradients observed at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub step: usize,
    /// A block name, or an aggregate group (`global`, `encoder`, `decoder`).
    pub group: String,
    /// `None` when a gradient is numerically zero.
    pub cos: Option<f64>,
    pub norm_time: f64,
    pub norm_mark: f64,
}

impl ConflictRecord {
    fn new(step: usize, group: impl Into<String>, time: &[f64], mark: &[f64]) -> Result<Self> {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(Self {
            step,
            group: group.into(),
            cos: cos_angle(time, mark)?,
            norm_time: norm(time),
            norm_mark: norm(mark),
        })
    }

    /// Whether the record describes a single parameter block.
    pub fn is_block(&self) -> bool {
        self.group.contains('.')
    }
}

/// Aggregated statistics of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: String,
    /// Records with a defined angle.
    pub steps: usize,
    /// Records excluded because a gradient was zero.
    pub undefined: usize,
    pub conflicting: usize,
    pub cg: Option<f64>,
    /// Mean GMS over conflicting records.
    pub mean_gms: Option<f64>,
    /// Mean TPI over conflicting records.
    pub mean_tpi: Option<f64>,
    pub histogram: Vec<u64>,
}

impl GroupSummary {
    fn from_records<'a>(group: &str, records: impl Iterator<Item = &'a ConflictRecord>) -> Self {
        let mut s = GroupSummary {
            group: group.to_string(),
            steps: 0,
            undefined: 0,
            conflicting: 0,
            cg: None,
            mean_gms: None,
            mean_tpi: None,
            histogram: vec![0; HISTOGRAM_BINS],
        };
        let (mut gms_sum, mut tpi_sum) = (0.0, 0.0);
        for r in records {
            let Some(cos) = r.cos else {
                s.undefined += 1;
                continue;
            };
            s.steps += 1;
            s.histogram[histogram_bin(cos)] += 1;
            if cos < 0.0 {
                s.conflicting += 1;
                // a defined angle implies both norms are positive
                gms_sum += gms_from_norms(r.norm_time, r.norm_mark).unwrap_or(0.0);
                tpi_sum += f64::from(u8::from(r.norm_time > r.norm_mark));
            }
        }
        if s.steps > 0 {
            s.cg = Some(s.conflicting as f64 / s.steps as f64);
        }
        if s.conflicting > 0 {
            s.mean_gms = Some(gms_sum / s.conflicting as f64);
            s.mean_tpi = Some(tpi_sum / s.conflicting as f64);
        }
        s
    }
}

/// Bin index of a cosine; the top bin is closed.
pub fn histogram_bin(cos: f64) -> usize {
    let x = ((cos + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor();
    (x.max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Append-only log of conflict records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConflictStats {
    pub records: Vec<ConflictRecord>,
}

impl ConflictStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Adds per-block records and the `global`, `encoder` and `decoder`
    /// aggregates of one step's snapshots.
    pub fn push(&mut self, snapshots: &[GradSnapshot]) -> Result<()> {
        let Some(first) = snapshots.first() else {
            return Ok(());
        };
        let step = first.step;
        let mut groups: Vec<(&str, Vec<f64>, Vec<f64>)> = vec![(GLOBAL, Vec::new(), Vec::new())];
        for snap in snapshots {
            self.records.push(ConflictRecord::new(
                step,
                &snap.block,
                &snap.time_grad,
                &snap.mark_grad,
            )?);
            let group = Architecture::block_group(&snap.block);
            if !groups.iter().any(|g| g.0 == group) {
                groups.push((group, Vec::new(), Vec::new()));
            }
            for g in groups.iter_mut().filter(|g| g.0 == GLOBAL || g.0 == group) {
                g.1.extend_from_slice(&snap.time_grad);
                g.2.extend_from_slice(&snap.mark_grad);
            }
        }
        for (name, t, m) in groups {
            self.records.push(ConflictRecord::new(step, name, &t, &m)?);
        }
        Ok(())
    }

    /// Cosine series of one group, undefined entries dropped.
    pub fn cos_series(&self, group: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.group == group)
            .filter_map(|r| r.cos)
            .collect()
    }

    /// Summaries: blocks in first-seen order, then `pooled`, then the aggregates.
    pub fn summaries(&self) -> Vec<GroupSummary> {
        let mut blocks: Vec<&str> = Vec::new();
        let mut aggregates: Vec<&str> = Vec::new();
        for r in &self.records {
            let list = if r.is_block() {
                &mut blocks
            } else {
                &mut aggregates
            };
            if !list.contains(&r.group.as_str()) {
                list.push(&r.group);
            }
        }
        let mut out: Vec<GroupSummary> = blocks
            .iter()
            .map(|b| GroupSummary::from_records(b, self.records.iter().filter(|r| r.group == *b)))
            .collect();
        if !blocks.is_empty() {
            out.push(GroupSummary::from_records(
                POOLED,
                self.records.iter().filter(|r| r.is_block()),
            ));
        }
        out.extend(
            aggregates.iter().map(|a| {
                GroupSummary::from_records(a, self.records.iter().filter(|r| r.group == *a))
            }),
        );
        out
    }

    /// Summary of one group (including `pooled`).
    pub fn summary(&self, group: &str) -> Option<GroupSummary> {
        self.summaries().into_iter().find(|s| s.group == group)
    }
}

pub(crate) fn create_with_comment(path: &Path, comment: &str) -> Result<File> {
    let mut file = File::create(path)?;
    if !comment.is_empty() {
        writeln!(file, "# {comment}")?;
    }
    Ok(file)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes the raw records (`step,group,cos,norm_time,norm_mark`).
pub fn write_records(records: &[ConflictRecord], path: &Path, comment: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_with_comment(path, comment)?);
    if records.is_empty() {
        w.write_record(["step", "group", "cos", "norm_time", "norm_mark"])
            .map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_records`]; `#` lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<ConflictRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the histogram table (`group,bin_lo,bin_hi,count`) and the summary
/// table (`group,steps,undefined,conflicting,cg,mean_gms,mean_tpi`).
pub fn export_histograms(
    stats: &ConflictStats,
    histogram_path: &Path,
    summary_path: &Path,
    comment: &str,
) -> Result<()> {
    let summaries = stats.summaries();
    let mut h = csv::Writer::from_writer(create_with_comment(histogram_path, comment)?);
    h.write_record(["group", "bin_lo", "bin_hi", "count"])
        .map_err(csv_err)?;
    let width = 2.0 / HISTOGRAM_BINS as f64;
    for s in &summaries {
        for (i, count) in s.histogram.iter().enumerate() {
            let lo = -1.0 + i as f64 * width;
            h.write_record([
                s.group.clone(),
                lo.to_string(),
                (lo + width).to_string(),
                count.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    h.flush()?;
    let mut w = csv::Writer::from_writer(create_with_comment(summary_path, comment)?);
    w.write_record([
        "group",
        "steps",
        "undefined",
        "conflicting",
        "cg",
        "mean_gms",
        "mean_tpi",
    ])
    .map_err(csv_err)?;
    for s in &summaries {
        w.write_record([
            s.group.clone(),
            s.steps.to_string(),
            s.undefined.to_string(),
            s.conflicting.to_string(),
            opt(s.cg),
            opt(s.mean_gms),
            opt(s.mean_tpi),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
