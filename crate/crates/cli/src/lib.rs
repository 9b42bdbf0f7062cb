//! `rydsim` command line: run experiment configs, run the numerical
//! cross-check suite, and evaluate addressing-beam formulas.

pub mod check;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rydsim::optics::{
    addressing_rabi, intensity_fraction, light_shift, raman_coupling, scattering_lifetime, BeamSpec, ShiftMode,
    TAU_6P_NS, WAIST_UM,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rydsim", version, about = "Rydberg spin-exchange simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Master seed, replacing `readout.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Shots per point, replacing `readout.shots` (0 = exact probabilities).
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    /// Output directory, replacing `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Config override `key=value`, e.g. `readout.eta=1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Worker threads for parallel scans.
    #[arg(long, env = "RYDSIM_THREADS", global = true)]
    pub threads: Option<usize>,
    /// Ignore unknown config keys instead of rejecting them.
    #[arg(long, global = true)]
    pub lax: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the protocol described by a config file.
    Run {
        config: PathBuf,
    },
    /// Run cross-checks: `all` or one module name.
    Check {
        #[arg(default_value = "all")]
        scope: String,
        /// Force the named check to fail (for testing the reporting).
        #[arg(long, hide = true)]
        inject_failure: Option<String>,
    },
    /// Light shift, scattering lifetime and Raman coupling of one beam.
    Lightshift {
        /// Beam power, mW.
        #[arg(long)]
        power: f64,
        /// Detuning from the intermediate state, MHz.
        #[arg(long, allow_negative_numbers = true)]
        detuning: f64,
        /// Beam waist, µm.
        #[arg(long, default_value_t = WAIST_UM)]
        waist: f64,
        /// Transverse distance of the atom from the beam axis, µm.
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
    },
}

/// Parses `args` (including the program name) and executes; returns the
/// process exit code. Normal output goes to stdout, errors to stderr as JSON.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { ref config } => run::run_cli(config, &cli.global),
        Command::Check {
            ref scope,
            ref inject_failure,
        } => check::check_cli(scope, inject_failure.as_deref()),
        Command::Lightshift {
            power,
            detuning,
            waist,
            offset,
        } => lightshift_cli(power, detuning, waist, offset),
    }
}

pub(crate) fn print_error(code: i32, errors: Vec<serde_json::Value>) {
    let doc = json!({ "status": "error", "exit_code": code, "errors": errors });
    eprintln!("{doc}");
}

/// Quantities printed by `lightshift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamReport {
    pub intensity_fraction: f64,
    pub perturbative_mhz: f64,
    pub dressed_mhz: f64,
    /// `None` without scattering.
    pub lifetime_us: Option<f64>,
    pub raman_mhz: f64,
}

pub fn beam_report(power: f64, detuning: f64, waist: f64, offset: f64) -> rydsim::Result<BeamReport> {
    let beam = BeamSpec::new(power, detuning, [0.0; 3]).with_waist(waist);
    beam.validate()?;
    let fraction = intensity_fraction(&beam, &[0.0, 0.0, offset]);
    let omega = addressing_rabi(&beam)? * fraction.sqrt();
    Ok(BeamReport {
        intensity_fraction: fraction,
        perturbative_mhz: light_shift(omega, detuning, ShiftMode::Perturbative)?.value,
        dressed_mhz: light_shift(omega, detuning, ShiftMode::Dressed)?.value,
        lifetime_us: scattering_lifetime(omega, detuning, TAU_6P_NS)?.lifetime,
        raman_mhz: raman_coupling(omega, detuning)?,
    })
}

impl BeamReport {
    pub fn line(&self) -> String {
        let lifetime = self.lifetime_us.map_or("inf".to_string(), |t| format!("{t:.4}"));
        format!(
            "perturbative_mhz={:.4} dressed_mhz={:.4} lifetime_us={lifetime} raman_mhz={:.4} intensity_fraction={:.6}",
            self.perturbative_mhz, self.dressed_mhz, self.raman_mhz, self.intensity_fraction
        )
    }
}

fn lightshift_cli(power: f64, detuning: f64, waist: f64, offset: f64) -> i32 {
    match beam_report(power, detuning, waist, offset) {
        Ok(r) => {
            println!("{}", r.line());
            EXIT_OK
        }
        Err(e) => {
            print_error(EXIT_VALIDATION, vec![json!({ "class": "domain", "message": e.to_string() })]);
            EXIT_VALIDATION
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operating_point_report() {
        let r = beam_report(30.0, 1300.0, 3.4, 0.0).unwrap();
        let line = r.line();
        assert!(line.starts_with("perturbative_mhz=4.8008 dressed_mhz=4.7832 lifetime_us=32.7656"), "{line}");
        assert!(line.contains("raman_mhz=5.5435"), "{line}");
    }

    #[test]
    fn zero_power_reports_zeros() {
        let r = beam_report(0.0, 1300.0, 3.4, 0.0).unwrap();
        assert_eq!((r.perturbative_mhz, r.dressed_mhz, r.raman_mhz), (0.0, 0.0, 0.0));
        assert_eq!(r.lifetime_us, None);
        assert!(r.line().contains("lifetime_us=inf"));
    }

    #[test]
    fn offset_scales_shift_by_intensity() {
        let centre = beam_report(30.0, 1300.0, 3.4, 0.0).unwrap();
        let off = beam_report(30.0, 1300.0, 3.4, 5.2).unwrap();
        let ratio = off.perturbative_mhz / centre.perturbative_mhz;
        assert!((ratio - (-2.0 * 5.2f64.powi(2) / 3.4f64.powi(2)).exp()).abs() < 1e-12);
    }

    #[test]
    fn parses_global_flags_anywhere() {
        let cli = Cli::try_parse_from(["rydsim", "run", "x.json", "--seed", "5", "--set", "readout.eta=1"]).unwrap();
        assert_eq!(cli.global.seed, Some(5));
        assert_eq!(cli.global.set, vec!["readout.eta=1".to_string()]);
        let cli = Cli::try_parse_from(["rydsim", "lightshift", "--power", "30", "--detuning", "-1300"]).unwrap();
        assert!(matches!(cli.command, Command::Lightshift { detuning, .. } if detuning == -1300.0));
    }

    #[test]
    fn missing_flag_is_usage_error() {
        let err = Cli::try_parse_from(["rydsim", "lightshift", "--power", "30"]).unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::MissingRequiredArgument);
        assert!(err.use_stderr());
    }
}
