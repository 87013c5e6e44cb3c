use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Event, EventSequence};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    seq_id: String,
    #[serde(rename = "T")]
    horizon: f64,
    events: Vec<Event>,
}

/// Reads one sequence per line. When `num_marks` is `None`, K is the
/// largest observed mark plus one.
pub fn load_dataset<P: AsRef<Path>>(path: P, num_marks: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_dataset(BufReader::new(file), &name, num_marks)
}

pub fn parse_dataset<R: BufRead>(
    reader: R,
    name: &str,
    num_marks: Option<usize>,
) -> Result<Dataset> {
    let mut sequences = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        sequences.push(EventSequence {
            seq_id: rec.seq_id,
            horizon: rec.horizon,
            events: rec.events,
        });
    }
    let k = match num_marks {
        Some(k) => k,
        None => sequences
            .iter()
            .flat_map(|s| s.events.iter().map(|e| e.k + 1))
            .max()
            .unwrap_or(1),
    };
    Dataset::new(name, k, sequences)
}

pub fn write_dataset<P: AsRef<Path>>(ds: &Dataset, path: P) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in &ds.sequences {
        let rec = Record {
            seq_id: s.seq_id.clone(),
            horizon: s.horizon,
            events: s.events.clone(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), "t", None)
    }

    #[test]
    fn single_line() {
        let ds =
            parse(r#"{"seq_id":"a","T":10,"events":[{"t":1.0,"k":0},{"t":2.5,"k":1}]}"#).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.sequences[0].len(), 2);
        assert_eq!(ds.num_marks, 2);
    }

    #[test]
    fn duplicate_times_rejected() {
        let r = parse(r#"{"seq_id":"a","T":10,"events":[{"t":2.0,"k":0},{"t":2.0,"k":1}]}"#);
        assert!(matches!(r, Err(Error::NonIncreasingTimes { index: 1, .. })));
    }

    #[test]
    fn unsorted_not_resorted() {
        let r = parse(r#"{"seq_id":"a","T":10,"events":[{"t":3.0,"k":0},{"t":2.0,"k":1}]}"#);
        assert!(matches!(r, Err(Error::NonIncreasingTimes { .. })));
    }

    #[test]
    fn empty_events_allowed() {
        let ds = parse(r#"{"seq_id":"a","T":10,"events":[]}"#).unwrap();
        assert_eq!(ds.sequences[0].len(), 0);
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\"seq_id\":\"a\",\"T\":10,\"events\":[]}\n{oops}\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn mark_range_checked_against_given_k() {
        let r = parse_dataset(
            r#"{"seq_id":"a","T":10,"events":[{"t":1.0,"k":2}]}"#.as_bytes(),
            "t",
            Some(2),
        );
        assert!(matches!(r, Err(Error::MarkOutOfRange { .. })));
    }

    #[test]
    fn round_trip() {
        let ds = parse(
            "{\"seq_id\":\"a\",\"T\":10,\"events\":[{\"t\":0.1,\"k\":0},{\"t\":2.5,\"k\":1}]}\n\
             {\"seq_id\":\"b\",\"T\":10,\"events\":[]}\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        write_dataset(&ds, &p).unwrap();
        let back = load_dataset(&p, Some(2)).unwrap();
        assert_eq!(back.sequences, ds.sequences);
    }
}
