//! Flat two-column CSV tables keyed by state ordinal.
//!
//! Policies are written as `ordinal,action` and value tables as
//! `ordinal,value`. Rows must appear in ordinal order starting at 0.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::mdp::PolicyTable;
use crate::network::Decision;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("table has {got} rows, expected {expected}")]
    Length { got: usize, expected: usize },
}

pub const POLICY_HEADER: &str = "ordinal,action";
pub const VALUE_HEADER: &str = "ordinal,value";

pub fn write_policy<W: Write>(policy: &PolicyTable, mut out: W) -> io::Result<()> {
    writeln!(out, "{POLICY_HEADER}")?;
    for (s, d) in policy.actions().iter().enumerate() {
        writeln!(out, "{s},{}", d.target())?;
    }
    out.flush()
}

pub fn read_policy<R: BufRead>(input: R) -> Result<PolicyTable, ArtifactError> {
    let rows = read_rows(input, POLICY_HEADER, |s| s.parse::<usize>().map_err(|e| e.to_string()))?;
    Ok(PolicyTable::new(rows.into_iter().map(Decision::new).collect()))
}

/// Values are printed with the shortest representation that parses back
/// to the same `f64`.
pub fn write_values<W: Write>(values: &[f64], mut out: W) -> io::Result<()> {
    writeln!(out, "{VALUE_HEADER}")?;
    for (s, v) in values.iter().enumerate() {
        writeln!(out, "{s},{v}")?;
    }
    out.flush()
}

pub fn read_values<R: BufRead>(input: R) -> Result<Vec<f64>, ArtifactError> {
    read_rows(input, VALUE_HEADER, |s| s.parse::<f64>().map_err(|e| e.to_string()))
}

fn read_rows<R: BufRead, T>(
    input: R,
    header: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, ArtifactError> {
    let mut lines = input.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header {
        return Err(ArtifactError::Header {
            expected: header.to_string(),
            found: first,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let (ord, val) = line.split_once(',').ok_or_else(|| ArtifactError::Parse {
            line: line_no,
            message: "missing comma".into(),
        })?;
        let ord: usize = ord
            .trim()
            .parse()
            .map_err(|e: std::num::ParseIntError| ArtifactError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if ord != out.len() {
            return Err(ArtifactError::Parse {
                line: line_no,
                message: format!("ordinal {ord} out of sequence, expected {}", out.len()),
            });
        }
        out.push(parse(val.trim()).map_err(|message| ArtifactError::Parse { line: line_no, message })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_round_trip() {
        let p = PolicyTable::new(vec![Decision::IDLE, Decision::new(2), Decision::new(1)]);
        let mut buf = Vec::new();
        write_policy(&p, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "ordinal,action\n0,0\n1,2\n2,1\n"
        );
        assert_eq!(read_policy(&buf[..]).unwrap(), p);
    }

    #[test]
    fn values_round_trip_exactly() {
        let v = vec![0.1, -3.25e-9, 1e300, 12345.678901234567, 0.0];
        let mut buf = Vec::new();
        write_values(&v, &mut buf).unwrap();
        assert_eq!(read_values(&buf[..]).unwrap(), v);
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(
            read_policy(&b"a,b\n0,0\n"[..]),
            Err(ArtifactError::Header { .. })
        ));
        assert!(matches!(
            read_policy(&b"ordinal,action\n1,0\n"[..]),
            Err(ArtifactError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_values(&b"ordinal,value\n0,x\n"[..]),
            Err(ArtifactError::Parse { line: 2, .. })
        ));
    }
}
