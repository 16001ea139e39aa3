//! Line-delimited sequence files: one JSON record per line with fields
//! `seq_id`, `label`, `t_obs` and `events` (an array of `[t, k]` pairs).
//! Floats are written in shortest round-trip form, so reading back is exact.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventSequence};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate seq_id {seq_id} on line {line}")]
    DuplicateSeqId { seq_id: String, line: usize },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    seq_id: String,
    label: u8,
    t_obs: f64,
    events: Vec<(f64, usize)>,
}

pub fn write_sequences_to<W: Write>(seqs: &[EventSequence], mut w: W) -> std::io::Result<()> {
    for s in seqs {
        let rec = Record {
            seq_id: s.seq_id.clone(),
            label: s.label,
            t_obs: s.t_obs,
            events: s.events.iter().map(|e| (e.t, e.k)).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_sequences_from<R: Read>(r: R) -> Result<Vec<EventSequence>, IoError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IoError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.label > 1 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("label must be 0 or 1, got {}", rec.label),
            });
        }
        if !seen.insert(rec.seq_id.clone()) {
            return Err(IoError::DuplicateSeqId {
                seq_id: rec.seq_id,
                line: line_no,
            });
        }
        out.push(EventSequence::new(
            rec.seq_id,
            rec.label,
            rec.events.into_iter().map(|(t, k)| Event::new(t, k)).collect(),
            rec.t_obs,
        ));
    }
    Ok(out)
}

pub fn write_sequences(seqs: &[EventSequence], path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    write_sequences_to(seqs, BufWriter::new(file)).map_err(|e| IoError::io(path, e))
}

pub fn read_sequences(path: &Path) -> Result<Vec<EventSequence>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    read_sequences_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_round_trips() {
        let s = EventSequence::new("a", 0, vec![Event::new(0.5, 3)], 1.0);
        let mut buf = Vec::new();
        write_sequences_to(std::slice::from_ref(&s), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "{\"seq_id\":\"a\",\"label\":0,\"t_obs\":1.0,\"events\":[[0.5,3]]}\n");
        assert_eq!(read_sequences_from(&buf[..]).unwrap(), vec![s]);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = read_sequences_from("{not json}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 1, .. }));
        let two = "{\"seq_id\":\"a\",\"label\":0,\"t_obs\":1,\"events\":[]}\n{\"seq_id\":\"b\",\"label\":7,\"t_obs\":1,\"events\":[]}\n";
        assert!(matches!(read_sequences_from(two.as_bytes()).unwrap_err(), IoError::Parse { line: 2, .. }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = EventSequence::new("x", 0, vec![], 1.0);
        let mut buf = Vec::new();
        write_sequences_to(&[a.clone(), a], &mut buf).unwrap();
        assert!(matches!(
            read_sequences_from(&buf[..]).unwrap_err(),
            IoError::DuplicateSeqId { line: 2, .. }
        ));
    }
}
