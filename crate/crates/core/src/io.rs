//! Reading numeric matrices from text.
//!
//! One observation per line, values separated by commas and/or whitespace.
//! Blank lines and lines starting with `#` are skipped. A credal sample is
//! either one file per extreme point or a single file with an integer group
//! column; groups become extreme points in ascending label order.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CredalError, Result};
use crate::kcd::CredalSample;
use crate::kernel::Dataset;

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> CredalError {
    CredalError::Parse {
        file: source.to_string(),
        line,
        message: message.into(),
    }
}

/// Numeric rows of `text` with their 1-based line numbers.
fn rows(text: &str, source: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut vals = Vec::new();
        for tok in trimmed.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(source, line, format!("'{tok}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(source, line, format!("non-finite value '{tok}'")));
            }
            vals.push(v);
        }
        if let Some((first_line, first)) = out.first() {
            if first.len() != vals.len() {
                return Err(parse_err(
                    source,
                    line,
                    format!(
                        "{} columns, but line {first_line} has {}",
                        vals.len(),
                        first.len()
                    ),
                ));
            }
        }
        out.push((line, vals));
    }
    if out.is_empty() {
        return Err(parse_err(source, 0, "no data rows"));
    }
    Ok(out)
}

/// Parse a matrix with one observation per line.
pub fn parse_matrix(text: &str, source: &str) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = rows(text, source)?.into_iter().map(|(_, r)| r).collect();
    Dataset::from_rows(&rows)
}

/// Parse a matrix whose column `group_col` (0-based) holds integer extreme
/// point labels.
pub fn parse_grouped(text: &str, source: &str, group_col: usize) -> Result<(CredalSample, Vec<i64>)> {
    let mut groups: BTreeMap<i64, Vec<Vec<f64>>> = BTreeMap::new();
    for (line, mut r) in rows(text, source)? {
        if group_col >= r.len() {
            return Err(parse_err(
                source,
                line,
                format!("group column {group_col} out of range for {} columns", r.len()),
            ));
        }
        if r.len() < 2 {
            return Err(parse_err(source, line, "no data columns besides the group column"));
        }
        let g = r.remove(group_col);
        if g.fract() != 0.0 || g.abs() > 2f64.powi(53) {
            return Err(parse_err(source, line, format!("group label {g} is not an integer")));
        }
        groups.entry(g as i64).or_default().push(r);
    }
    let labels: Vec<i64> = groups.keys().copied().collect();
    let sets = groups
        .into_values()
        .map(|rows| Dataset::from_rows(&rows))
        .collect::<Result<Vec<_>>>()?;
    Ok((CredalSample::new(sets)?, labels))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CredalError::Io(format!("{}: {e}", path.display())))
}

pub fn read_matrix(path: &Path) -> Result<Dataset> {
    parse_matrix(&read(path)?, &path.display().to_string())
}

pub fn read_grouped(path: &Path, group_col: usize) -> Result<(CredalSample, Vec<i64>)> {
    parse_grouped(&read(path)?, &path.display().to_string(), group_col)
}

/// One file per extreme point, or a single grouped file when `group_col`
/// is set.
pub fn read_credal_sample(paths: &[impl AsRef<Path>], group_col: Option<usize>) -> Result<CredalSample> {
    match group_col {
        Some(col) => {
            if paths.len() != 1 {
                return Err(crate::error::invalid(
                    "a grouped credal sample is read from exactly one file",
                ));
            }
            Ok(read_grouped(paths[0].as_ref(), col)?.0)
        }
        None => {
            let sets = paths
                .iter()
                .map(|p| read_matrix(p.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            CredalSample::new(sets)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_delimiters_and_comments() {
        let ds = parse_matrix("# header\n1,2\n\n3 4\n 5,\t6 \n", "t").unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_matrix("1,2\n3,x\n", "data.csv").unwrap_err();
        assert_eq!(
            err,
            CredalError::Parse {
                file: "data.csv".into(),
                line: 2,
                message: "'x' is not a number".into()
            }
        );
        assert!(err.to_string().starts_with("data.csv:2:"));
        let err = parse_matrix("1,2\n# c\n3\n", "f").unwrap_err();
        assert!(matches!(err, CredalError::Parse { line: 3, .. }));
        assert!(parse_matrix("# only\n", "f").is_err());
        assert!(parse_matrix("1,inf\n", "f").is_err());
    }

    #[test]
    fn grouped_files() {
        let text = "3,0.5\n1,1.0\n2,2.0\n1,1.5\n3,0.0\n";
        let (s, labels) = parse_grouped(text, "g", 0).unwrap();
        assert_eq!(labels, vec![1, 2, 3]);
        assert_eq!(s.sizes(), vec![2, 1, 2]);
        assert_eq!(s.extreme(0).row(1), &[1.5]);
        let err = parse_grouped("1,2\n1.5,3\n", "g", 0).unwrap_err();
        assert!(matches!(err, CredalError::Parse { line: 2, .. }));
        assert!(parse_grouped("1,2\n", "g", 5).is_err());
    }

    #[test]
    fn reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        std::fs::write(&a, "1 2\n3 4\n").unwrap();
        std::fs::write(&b, "5 6\n").unwrap();
        let s = read_credal_sample(&[&a, &b], None).unwrap();
        assert_eq!(s.sizes(), vec![2, 1]);
        assert!(matches!(
            read_matrix(&dir.path().join("missing")),
            Err(CredalError::Io(_))
        ));
    }
}
