//! Minimal CSV emission for trajectories and report tables.
//!
//! Floats use Rust's shortest round-trip formatting, so output is exact and
//! byte-identical across runs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::flow::Trajectory;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:?}"),
            Cell::Bool(v) => write!(f, "{v}"),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    write!(f, "\"{}\"", s.replace('"', "\"\""))
                } else {
                    f.write_str(s)
                }
            }
        }
    }
}

pub fn write_rows<W: Write>(w: &mut W, header: &[&str], rows: &[Vec<Cell>]) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let line: Vec<String> = row.iter().map(Cell::to_string).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Header `t,c0,...,c{d-1}` and one row per sample.
pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    let d = traj.states.first().map_or(0, |s| s.dim());
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("c{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (t, s) in traj.iter() {
        write!(w, "{t:?}")?;
        for c in s.coords() {
            write!(w, ",{c:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn to_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::TrajectoryStatus;
    use crate::StateVector;

    #[test]
    fn trajectory_layout() {
        let tr = Trajectory {
            start_time: 0.0,
            times: vec![0.0, 0.5],
            states: vec![StateVector::euclidean(&[1.0, 2.0]), StateVector::euclidean(&[0.25, -1.0])],
            status: TrajectoryStatus::Completed,
        };
        let mut out = Vec::new();
        write_trajectory(&mut out, &tr).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,c0,c1\n0.0,1.0,2.0\n0.5,0.25,-1.0\n");
    }

    #[test]
    fn text_cells_are_quoted() {
        let mut out = Vec::new();
        write_rows(&mut out, &["a", "b"], &[vec![Cell::from("x,y"), Cell::from(3usize)]]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a,b\n\"x,y\",3\n");
    }
}
