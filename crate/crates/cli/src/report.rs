//! Run reports and CSV artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use semiflow::csv::{self, Cell};
use semiflow::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Signed slack; positive means the check holds with room to spare.
    pub margin: f64,
    pub detail: String,
}

/// Accumulates checks, scalar values and artifacts of one run.
#[derive(Debug)]
pub struct RunReport {
    pub experiment: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub values: Vec<(String, String)>,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
    out_dir: PathBuf,
}

impl RunReport {
    pub fn new(experiment: &str, seed: u64, out_dir: &Path) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            config: Vec::new(),
            checks: Vec::new(),
            values: Vec::new(),
            artifacts: Vec::new(),
            error: None,
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn check(&mut self, name: &str, pass: bool, margin: f64, detail: impl Into<String>) {
        assert!(self.checks.iter().all(|c| c.name != name), "check '{name}' recorded twice");
        let detail = detail.into();
        log::info!("check {name}: {} ({detail})", if pass { "pass" } else { "fail" });
        self.checks.push(Check { name: name.to_string(), pass, margin, detail });
    }

    pub fn value(&mut self, key: &str, v: impl std::fmt::Display) {
        self.values.push((key.to_string(), v.to_string()));
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }

    fn artifact_path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.out_dir.join(name)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> io::Result<()> {
        let path = self.artifact_path(name);
        csv::to_file(&path, |w| csv::write_rows(w, header, rows))
    }

    pub fn write_trajectory(&mut self, name: &str, traj: &Trajectory) -> io::Result<()> {
        let path = self.artifact_path(name);
        csv::to_file(&path, |w| csv::write_trajectory(w, traj))
    }

    /// Everything except the wall-clock line, which is appended on write.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.experiment);
        let _ = writeln!(s, "seed: {}", self.seed);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k}: {v}");
        }
        for (k, v) in &self.values {
            let _ = writeln!(s, "value.{k}: {v}");
        }
        for c in &self.checks {
            let _ = writeln!(s, "check.{}: {}", c.name, if c.pass { "pass" } else { "fail" });
            let _ = writeln!(s, "check.{}.margin: {:?}", c.name, c.margin);
            let _ = writeln!(s, "check.{}.detail: {}", c.name, c.detail);
        }
        for a in &self.artifacts {
            let _ = writeln!(s, "artifact: {a}");
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error: {e}");
        }
        let _ = writeln!(s, "result: {}", if self.passed() { "pass" } else { "fail" });
        s
    }

    pub fn write(&self, wall_clock: f64) -> io::Result<PathBuf> {
        let path = self.out_dir.join("report.txt");
        let mut body = self.render();
        let _ = writeln!(body, "wall_clock_s: {wall_clock:.3}");
        fs::write(&path, body)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_lists_checks_and_result() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RunReport::new("verify", 3, dir.path());
        r.config.push(("triples".into(), "100".into()));
        r.check("semigroup", true, 1e-9, "worst 1e-10");
        r.value("c", 1.0);
        r.write_csv("t.csv", &["a", "b"], &[vec![Cell::from(1usize), Cell::from(0.5)]]).unwrap();
        let s = r.render();
        assert!(s.contains("config.triples: 100\n"));
        assert!(s.contains("check.semigroup: pass\n"));
        assert!(s.contains("artifact: t.csv\n"));
        assert!(s.ends_with("result: pass\n"));
        assert_eq!(fs::read_to_string(dir.path().join("t.csv")).unwrap(), "a,b\n1,0.5\n");
        r.check("other", false, -1.0, "");
        assert!(!r.passed());
    }

    #[test]
    #[should_panic(expected = "recorded twice")]
    fn duplicate_checks_are_a_bug() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RunReport::new("verify", 0, dir.path());
        r.check("a", true, 0.0, "");
        r.check("a", true, 0.0, "");
    }
}
