//! CSV emission with a versioned schema line and reproducible formatting.
//!
//! Every table starts with a comment line naming its schema (for example
//! `# pcbench-sweep v1`) so downstream plotting scripts can validate what
//! they are reading, followed by a plain header row. Floats are written in
//! scientific notation with the shortest digit string that parses back to
//! the identical bits, so a rerun with the same config and seeds produces
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use polychaos::Result;

/// One CSV cell. Floats and integers format differently, so rows carry
/// typed fields instead of preformatted strings.
#[derive(Debug, Clone, Copy)]
pub enum Field {
    Int(u64),
    Float(f64),
    Str(&'static str),
}

impl Field {
    fn render(&self, out: &mut String) {
        match self {
            Field::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Field::Float(v) => {
                let _ = write!(out, "{v:e}");
            }
            Field::Str(v) => out.push_str(v),
        }
    }
}

/// Formats a table: schema comment, header row, then one line per row.
pub fn table_string(schema: &str, header: &[&str], rows: &[Vec<Field>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {schema}");
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (i, field) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            field.render(&mut out);
        }
        out.push('\n');
    }
    out
}

/// Writes a table to `path`, creating parent directories as needed.
pub fn write_table(path: &Path, schema: &str, header: &[&str], rows: &[Vec<Field>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, table_string(schema, header, rows))?;
    Ok(())
}
