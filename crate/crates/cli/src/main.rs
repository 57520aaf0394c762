use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use uavmec::runner::{emit_results, run_single, run_sweep, to_csv, to_json, Format, SweepResult};
use uavmec::{load_scenario, verify, Scenario};

#[derive(Parser)]
#[command(
    name = "uavmec",
    version,
    about = "UAV-aided vehicular edge computing energy simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Solve the scenario at each value of one config key.
    Sweep {
        config: PathBuf,
        /// Dotted config key, e.g. `geometry.altitude`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values in base units.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        values: Vec<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the acceptance checks; defaults are used without a config.
    Verify {
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Output {
    /// Also run the baseline scheme.
    #[arg(long)]
    baseline: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn scenario(path: Option<&PathBuf>, seed: Option<u64>) -> Result<Scenario> {
    let s = match path {
        Some(p) => load_scenario(p)?,
        None => Scenario::from_toml_str("")?,
    };
    match seed {
        Some(seed) => Ok(s.with_override("run.seed", toml::Value::Integer(seed as i64))?),
        None => Ok(s),
    }
}

fn write(result: &SweepResult, out: &Output) -> Result<()> {
    let format = Format::from(out.format);
    match &out.out {
        Some(path) => emit_results(result, format, path)?,
        None => match format {
            Format::Csv => print!("{}", to_csv(result)?),
            Format::Json => println!("{}", to_json(result)?),
        },
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { config, output } => {
            let s = scenario(Some(&config), output.seed)?;
            let result = run_single(&s.config, output.baseline);
            write(&result, &output)?;
            let failed: Vec<_> = result.rows.iter().filter(|r| r.status != "ok").collect();
            for r in &failed {
                eprintln!("{}: {}", r.mode.name(), r.status);
            }
            Ok(if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Sweep {
            config,
            axis,
            values,
            output,
        } => {
            let s = scenario(Some(&config), output.seed)?;
            let result = run_sweep(&s, &axis, &values, output.baseline)?;
            write(&result, &output)?;
            Ok(ExitCode::SUCCESS)
        }
        // the report carries the status, so this always exits 0
        Command::Verify { config, seed } => {
            match scenario(config.as_ref(), seed) {
                Ok(s) => println!("{}", verify(&s)),
                Err(e) => println!("FAIL config: {e:#}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    fn exit(args: &[&str]) -> Result<ExitCode> {
        run(Cli::try_parse_from(
            std::iter::once("uavmec").chain(args.iter().copied()),
        )?)
    }

    fn config(dir: &tempfile::TempDir, text: &str) -> String {
        let path = dir.path().join("scenario.toml");
        fs::write(&path, text).unwrap();
        path.display().to_string()
    }

    #[test]
    fn solve_writes_rows_and_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(&dir, "[timing]\ndeadline = 0.4\n");
        let out = dir.path().join("out.csv");
        let code = exit(&["solve", &cfg, "--baseline", "--out", out.to_str().unwrap()]).unwrap();
        assert_eq!(code, ExitCode::SUCCESS);
        let text = fs::read_to_string(out).unwrap();
        let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].contains("optimized") && rows[2].contains("baseline"));
    }

    #[test]
    fn infeasible_solve_exits_nonzero() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            &dir,
            "[timing]\ndeadline = 0.2\n[task]\nbits = \"50 Gbit\"\n",
        );
        let out = dir.path().join("out.json");
        let code = exit(&[
            "solve",
            &cfg,
            "--format",
            "json",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        assert_eq!(code, ExitCode::FAILURE);
        assert!(fs::read_to_string(out).unwrap().contains("\"rows\""));
    }

    #[test]
    fn sweep_emits_one_row_per_value() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(&dir, "[timing]\ndeadline = 0.4\n");
        let out = dir.path().join("sweep.csv");
        let args = [
            "sweep",
            &cfg,
            "--axis",
            "geometry.altitude",
            "--values",
            "10,20",
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(exit(&args).unwrap(), ExitCode::SUCCESS);
        let text = fs::read_to_string(out).unwrap();
        assert!(text.starts_with("# sweep axis: geometry.altitude"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }

    #[test]
    fn bad_inputs_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(&dir, "[timing]\ndeadline = 8\nslot = 0.3\n");
        assert!(exit(&["solve", &cfg]).is_err());
        assert!(exit(&["solve", "/nonexistent/scenario.toml"]).is_err());
        let good = config(&dir, "");
        assert!(exit(&["solve", &good, "--format", "xml"]).is_err());
        assert!(exit(&["sweep", &good, "--axis", "geometry.altitude"]).is_err());
    }

    #[test]
    fn verify_reports_config_errors_without_failing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(&dir, "[radio]\nbandwidth = -1\n");
        assert_eq!(exit(&["verify", &cfg]).unwrap(), ExitCode::SUCCESS);
    }
}
