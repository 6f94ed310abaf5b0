//! Stability at infinity for the built-in models on the whole space.

use rand_chacha::ChaCha8Rng;
use semiflow::builtin;
use semiflow::wazewski::{gaussian_direction, stability_at_infinity_probe, StabilityProbeSpec, STABILITY_CSV_HEADER};
use semiflow::Region;

use crate::config::{at_least, increasing_positive, positive, ConfigError, Params};
use crate::report::RunReport;

pub const KEYS: &[&str] = &["model", "inner_radii", "start_radii", "samples_per_radius", "horizon", "expect"];

#[derive(Debug, Clone)]
pub struct Setup {
    model: String,
    spec: StabilityProbeSpec,
    expect_table: bool,
}

pub fn configure(p: &mut Params) -> Result<Setup, ConfigError> {
    let names: Vec<&str> = builtin::catalogue().into_iter().map(|(n, _)| n).collect();
    let model = p.get("model", "repeller".to_string(), |m: &String| {
        if names.contains(&m.as_str()) {
            Ok(())
        } else {
            Err(format!("unknown model '{m}' (expected one of {})", names.join(", ")))
        }
    })?;
    let expect = p.get("expect", "table".to_string(), |e: &String| match e.as_str() {
        "table" | "counterexample" => Ok(()),
        _ => Err("expected 'table' or 'counterexample'".into()),
    })?;
    Ok(Setup {
        model,
        spec: StabilityProbeSpec {
            inner_radii: p.get_list("inner_radii", vec![1.0, 2.0, 4.0], increasing_positive)?,
            start_radii: p.get_list("start_radii", vec![0.5, 1.0, 2.0, 4.0, 8.0], increasing_positive)?,
            samples_per_radius: p.get("samples_per_radius", 8, at_least(1))?,
            horizon: p.get("horizon", 5.0, positive)?,
            seed: 0,
        },
        expect_table: expect == "table",
    })
}

pub fn run(s: &Setup, seed: u64, report: &mut RunReport) -> semiflow::Result<()> {
    let model = builtin::catalogue()
        .into_iter()
        .find(|(n, _)| *n == s.model)
        .map(|(_, m)| m)
        .expect("validated at configuration");
    let dim = model.dim();
    let spec = StabilityProbeSpec { seed, ..s.spec.clone() };
    let dir = move |rng: &mut ChaCha8Rng| gaussian_direction(dim, rng);
    let table = stability_at_infinity_probe(&model, &Region::everything(), &spec, &dir)?;
    let found = table.rows.iter().filter(|r| r.big_r.is_some()).count();
    report.value("samples", table.samples.len());
    report.write_csv("stability.csv", &STABILITY_CSV_HEADER, &table.csv_rows())?;
    if let Some((r, tr)) = &table.counterexample {
        report.value("counterexample.r", r);
        report.write_trajectory("counterexample.csv", tr)?;
    }
    report.check("stability_monotone", table.is_monotone(), 0.0, "R(r) nondecreasing");
    if s.expect_table {
        report.check(
            "stability_table",
            found == table.rows.len(),
            found as f64 - table.rows.len() as f64,
            format!("{found} of {} radii have a sufficient R", table.rows.len()),
        );
    } else {
        report.check(
            "stability_counterexample",
            table.counterexample.is_some(),
            0.0,
            "a start beyond every tested R enters the inner ball",
        );
    }
    Ok(())
}
