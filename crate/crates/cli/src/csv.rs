//! Plot-ready CSV: a header row, one row per grid point, every float with 17
//! significant digits so a parse reproduces the doubles bit-exactly.

use std::io::Write;
use std::path::Path;

pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn emit(path: &Path, table: &CsvTable) -> Result<(), String> {
    let mut buf = String::new();
    buf.push_str(&table.columns.join(","));
    buf.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        buf.push_str(&cells.join(","));
        buf.push('\n');
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    file.write_all(buf.as_bytes())
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}

#[cfg(test)]
pub fn parse(path: &Path) -> Result<CsvTable, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| format!("{} is empty", path.display()))?;
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("{}:{}: bad float `{cell}`: {e}", path.display(), ln + 2))
            })
            .collect::<Result<_, _>>()?;
        if row.len() != columns.len() {
            return Err(format!(
                "{}:{}: {} cells, expected {}",
                path.display(),
                ln + 2,
                row.len(),
                columns.len()
            ));
        }
        rows.push(row);
    }
    Ok(CsvTable { columns, rows })
}
