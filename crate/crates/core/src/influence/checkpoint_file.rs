//! Checkpoint JSONL: a header `{param_dim, epochs}` followed by one
//! `{epoch_index, learning_rate, params}` record per checkpoint.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate_checkpoints, Checkpoint, InfluenceError, ParameterVector};

#[derive(Debug, Error)]
pub enum CheckpointFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] InfluenceError),
}

#[derive(Serialize, Deserialize)]
struct Header {
    param_dim: usize,
    epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    epoch_index: u32,
    learning_rate: f64,
    params: Vec<f64>,
}

pub fn write_checkpoints<W: Write>(mut w: W, checkpoints: &[Checkpoint]) -> io::Result<()> {
    let header = Header {
        param_dim: checkpoints.first().map_or(0, |c| c.params.len()),
        epochs: checkpoints.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for c in checkpoints {
        let rec = Record {
            epoch_index: c.epoch_index(),
            learning_rate: c.learning_rate(),
            params: c.params.as_slice().to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_checkpoints(path: &Path, checkpoints: &[Checkpoint]) -> Result<(), CheckpointFileError> {
    let io_err = |source| CheckpointFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = File::create(path).map_err(io_err)?;
    write_checkpoints(BufWriter::new(f), checkpoints).map_err(io_err)
}

pub fn read_checkpoints<R: BufRead>(reader: R) -> Result<Vec<Checkpoint>, CheckpointFileError> {
    let mut header: Option<Header> = None;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|source| CheckpointFileError::Io {
            path: PathBuf::from("<reader>"),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let malformed = |e: serde_json::Error| CheckpointFileError::Malformed {
            line: line_no,
            message: e.to_string(),
        };
        match &header {
            None => header = Some(serde_json::from_str(&text).map_err(malformed)?),
            Some(h) => {
                let rec: Record = serde_json::from_str(&text).map_err(malformed)?;
                if rec.params.len() != h.param_dim {
                    return Err(CheckpointFileError::Malformed {
                        line: line_no,
                        message: format!(
                            "params has {} entries, header says {}",
                            rec.params.len(),
                            h.param_dim
                        ),
                    });
                }
                let params = ParameterVector::new(rec.params)?;
                out.push(Checkpoint::new(params, rec.learning_rate, rec.epoch_index)?);
            }
        }
    }
    let header = header.ok_or(CheckpointFileError::Malformed {
        line: 1,
        message: "missing header record".into(),
    })?;
    if out.len() != header.epochs {
        return Err(CheckpointFileError::Malformed {
            line: 1,
            message: format!(
                "header declares {} checkpoints, file has {}",
                header.epochs,
                out.len()
            ),
        });
    }
    validate_checkpoints(&out, header.param_dim)?;
    Ok(out)
}

pub fn load_checkpoints(path: &Path) -> Result<Vec<Checkpoint>, CheckpointFileError> {
    let f = File::open(path).map_err(|source| CheckpointFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoints(BufReader::new(f))
}

impl CheckpointFileError {
    pub fn is_io(&self) -> bool {
        matches!(self, CheckpointFileError::Io { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn cps() -> Vec<Checkpoint> {
        vec![
            Checkpoint::new(ParameterVector::new(vec![0.1, -0.2]).unwrap(), 0.01, 1).unwrap(),
            Checkpoint::new(ParameterVector::new(vec![0.3, 1e-17]).unwrap(), 0.005, 2).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let mut buf = Vec::new();
        write_checkpoints(&mut buf, &cps()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"param_dim":2,"epochs":2}"#));
        assert_eq!(read_checkpoints(Cursor::new(buf)).unwrap(), cps());
    }

    #[test]
    fn count_and_dimension_mismatch() {
        let short = "{\"param_dim\":2,\"epochs\":2}\n{\"epoch_index\":1,\"learning_rate\":0.1,\"params\":[0,0]}\n";
        assert!(read_checkpoints(Cursor::new(short)).is_err());
        let wide = "{\"param_dim\":1,\"epochs\":1}\n{\"epoch_index\":1,\"learning_rate\":0.1,\"params\":[0,0]}\n";
        let err = read_checkpoints(Cursor::new(wide)).unwrap_err();
        assert!(matches!(err, CheckpointFileError::Malformed { line: 2, .. }));
        let bad_lr = "{\"param_dim\":1,\"epochs\":1}\n{\"epoch_index\":1,\"learning_rate\":0,\"params\":[0]}\n";
        assert!(matches!(
            read_checkpoints(Cursor::new(bad_lr)),
            Err(CheckpointFileError::Invalid(_))
        ));
    }
}
