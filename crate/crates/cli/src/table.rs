//! Numeric CSV tables with an optional header row.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
}

impl Table {
    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Parses CSV text. The first line is a header when any of its cells is not a number.
pub fn parse_table(text: &str, source: &str) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(format!("{source}: {e}")))?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if let Some(w) = width {
            if rec.len() != w {
                return Err(CliError::data(format!(
                    "{source}: line {line} has {} fields, expected {w}",
                    rec.len()
                )));
            }
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(parse_cell).collect();
        if names.is_none() && rows.is_empty() && parsed.iter().any(|v| v.is_none()) {
            names = Some(rec.iter().map(str::to_string).collect());
            width = Some(rec.len());
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (j, v) in parsed.into_iter().enumerate() {
            match v {
                Some(x) => row.push(x),
                None => {
                    return Err(CliError::data(format!(
                        "{source}: line {line}, column {}: '{}' is not a number",
                        j + 1,
                        &rec[j]
                    )))
                }
            }
        }
        width = Some(row.len());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{source}: no data rows")));
    }
    let p = rows[0].len();
    let names = names.unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
    let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Ok(Table { names, data })
}

pub fn load_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    parse_table(&text, &path.display().to_string())
}

/// Shortest round-trip formatting of every cell.
pub fn format_table(names: &[String], data: &DMatrix<f64>) -> String {
    let mut out = names.join(",");
    out.push('\n');
    for i in 0..data.nrows() {
        let row: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        out += &row.join(",");
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, names: &[String], data: &DMatrix<f64>) -> CliResult<()> {
    write_text(path, &format_table(names, data))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detected() {
        let t = parse_table("a,b\n1,2\n3,4\n5,6\n", "t").unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.data.shape(), (3, 2));
    }

    #[test]
    fn headerless() {
        let t = parse_table("1,2e-3\n", "t").unwrap();
        assert_eq!(t.names, vec!["x1", "x2"]);
        assert_eq!(t.data[(0, 1)], 2e-3);
    }

    #[test]
    fn ragged_row_names_line() {
        let e = parse_table("a,b\n1,2\n3\n", "t").unwrap_err();
        assert!(e.message.contains("line 3"), "{}", e.message);
        let e = parse_table("1,2\nx,4\n", "t").unwrap_err();
        assert!(e.message.contains("line 2"), "{}", e.message);
        assert!(parse_table("", "t").is_err());
    }
}
