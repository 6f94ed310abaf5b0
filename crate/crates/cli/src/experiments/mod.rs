//! Experiment registry: key lists, configuration and dispatch.

pub mod elliptic;
pub mod mountain_pass;
pub mod quotient;
pub mod resonant;
pub mod stability;
pub mod verify;

use clap::ValueEnum;

use crate::config::{ConfigError, ConfigFile, Params};
use crate::report::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Verify,
    MountainPass,
    Resonant,
    Elliptic,
    QuotientDemo,
    StabilityProbe,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Verify => "verify",
            Experiment::MountainPass => "mountain-pass",
            Experiment::Resonant => "resonant",
            Experiment::Elliptic => "elliptic",
            Experiment::QuotientDemo => "quotient-demo",
            Experiment::StabilityProbe => "stability-probe",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Experiment::Verify => verify::KEYS,
            Experiment::MountainPass => mountain_pass::KEYS,
            Experiment::Resonant => resonant::KEYS,
            Experiment::Elliptic => elliptic::KEYS,
            Experiment::QuotientDemo => quotient::KEYS,
            Experiment::StabilityProbe => stability::KEYS,
        }
    }
}

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub enum Setup {
    Verify(verify::Setup),
    MountainPass(mountain_pass::Setup),
    Resonant(Box<resonant::Setup>),
    Elliptic(Box<elliptic::Setup>),
    QuotientDemo(quotient::Setup),
    StabilityProbe(stability::Setup),
}

/// Parameters of one run: the setup, the effective seed and the config echo.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub setup: Setup,
    pub seed: u64,
    pub echo: Vec<(String, String)>,
}

/// Validates every key and value before any computation. `seed_flag`
/// overrides a `seed` key in the file.
pub fn prepare(experiment: Experiment, file: &ConfigFile, seed_flag: Option<u64>) -> Result<Prepared, ConfigError> {
    let mut allowed = experiment.keys().to_vec();
    allowed.push("seed");
    let mut p = Params::new(file, experiment.name(), &allowed)?;
    let file_seed = p.get("seed", 0u64, |_| Ok(()))?;
    let seed = seed_flag.unwrap_or(file_seed);
    let setup = match experiment {
        Experiment::Verify => Setup::Verify(verify::configure(&mut p)?),
        Experiment::MountainPass => Setup::MountainPass(mountain_pass::configure(&mut p)?),
        Experiment::Resonant => Setup::Resonant(Box::new(resonant::configure(&mut p)?)),
        Experiment::Elliptic => Setup::Elliptic(Box::new(elliptic::configure(&mut p)?)),
        Experiment::QuotientDemo => Setup::QuotientDemo(quotient::configure(&mut p)?),
        Experiment::StabilityProbe => Setup::StabilityProbe(stability::configure(&mut p)?),
    };
    // the echo lists the effective seed rather than the file value
    let echo = p.echo().iter().filter(|(k, _)| k != "seed").cloned().collect();
    Ok(Prepared { setup, seed, echo })
}

pub fn execute(prepared: &Prepared, report: &mut RunReport) -> semiflow::Result<()> {
    let seed = prepared.seed;
    match &prepared.setup {
        Setup::Verify(s) => verify::run(s, seed, report),
        Setup::MountainPass(s) => mountain_pass::run(s, seed, report),
        Setup::Resonant(s) => resonant::run(s, seed, report),
        Setup::Elliptic(s) => elliptic::run(s, seed, report),
        Setup::QuotientDemo(s) => quotient::run(s, seed, report),
        Setup::StabilityProbe(s) => stability::run(s, seed, report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_accepts_an_empty_config() {
        for e in Experiment::value_variants() {
            let p = prepare(*e, &ConfigFile::default(), None).unwrap();
            assert_eq!(p.seed, 0);
            assert!(!p.echo.is_empty());
        }
    }

    #[test]
    fn out_of_range_values_fail_before_running() {
        let file = ConfigFile::parse("resonant.modes = 1\n").unwrap();
        let err = prepare(Experiment::Resonant, &file, None).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("modes"));
        let file = ConfigFile::parse("b = gaussian:5\n").unwrap();
        assert!(prepare(Experiment::Elliptic, &file, None).is_err());
        let file = ConfigFile::parse("model = hopf\nexpect = maybe\n").unwrap();
        assert!(prepare(Experiment::StabilityProbe, &file, None).is_err());
    }

    #[test]
    fn seed_flag_overrides_file() {
        let file = ConfigFile::parse("seed = 5\n").unwrap();
        assert_eq!(prepare(Experiment::Verify, &file, None).unwrap().seed, 5);
        assert_eq!(prepare(Experiment::Verify, &file, Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn profiles_round_trip_in_the_echo() {
        let file = ConfigFile::parse("a = dip:1,0.5,2\nb = zero\n").unwrap();
        let p = prepare(Experiment::Elliptic, &file, None).unwrap();
        let get = |k: &str| p.echo.iter().find(|(key, _)| key == k).unwrap().1.clone();
        assert_eq!(get("a"), "dip:1.0,0.5,2.0");
        assert_eq!(get("b"), "zero");
    }
}
