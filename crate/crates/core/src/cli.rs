//! Command-line front end: `validate`, `sweep` and `dg`.
//!
//! Exit codes: 0 on success, 1 on a runtime or suite failure, 2 on a
//! configuration or usage error. Results go to standard output or the CSV
//! file; diagnostics go to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Experiment, RunConfig};
use crate::datagen::{sample_channels, trial_rng, Stream};
use crate::metrics::{aggregate_statistics, overall_dg, pairwise_dg_definition, pairwise_table};
use crate::model::{linear_to_db, ChannelSet, Precoders, SweepRecord, SystemConfig};
use crate::oracle::{run_suite, Suite, SuiteSizes};
use crate::par::{with_threads, Execution};
use crate::precoding::{alternating_optimize, pat_mc_precoders};
use crate::simulate::{FeatureSource, Simulator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const CSV_HEADER: &str = "scheme,snr_db,L,M,U,K,accuracy,dg,trials,seed";

#[derive(Debug, Parser)]
#[command(name = "iscc-sim", version, about = "Discriminant-gain precoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the internal consistency suites at reduced size.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Run only this suite (theorem1, lemma1, subproblems, ascent).
        #[arg(long)]
        suite: Option<Suite>,
    },
    /// Accuracy versus SNR for every configured scheme, written as CSV.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Discriminant-gain report on one sampled channel realization.
    Dg {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the configured output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

/// Formats `x` with 10 significant digits, in positional notation for
/// magnitudes in `[1e-5, 1e10)` and scientific notation otherwise.
pub fn sig10(x: f64) -> String {
    if x == 0.0 {
        return "0.000000000".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.9e}");
    let exp: i32 = sci[sci.find('e').map_or(sci.len(), |i| i + 1)..].parse().unwrap_or(0);
    if (-5..10).contains(&exp) {
        format!("{x:.*}", (9 - exp) as usize)
    } else {
        sci
    }
}

/// CSV text for sweep rows, header included.
pub fn sweep_csv(rows: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let dg = r.dg.map(sig10).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.scheme,
            sig10(linear_to_db(r.snr)),
            r.classes,
            r.antennas,
            r.users,
            r.subcarriers,
            sig10(r.accuracy),
            dg,
            r.trials,
            r.seed
        ));
    }
    out
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match cli.command {
        Command::Validate { common, suite } => validate(&common, suite, out, err),
        Command::Sweep { common } => sweep(&common, err),
        Command::Dg { common } => dg(&common, out, err),
    }
}

fn load(common: &CommonArgs, err: &mut dyn Write) -> Option<Experiment> {
    let result = (|| {
        if common.trials == Some(0) {
            return Err(ConfigError::Invalid("--trials must be at least 1".into()));
        }
        if common.threads == Some(0) {
            return Err(ConfigError::Invalid("--threads must be at least 1".into()));
        }
        let cfg = RunConfig::load(&common.config)?;
        let base = common.config.parent().unwrap_or(Path::new("."));
        let mut exp = cfg.resolve(base)?;
        if let Some(seed) = common.seed {
            exp.seed = seed;
        }
        if let Some(trials) = common.trials {
            exp.trials = trials;
        }
        exp.out_path = match &common.out {
            Some(p) => p.clone(),
            None => base.join(&exp.out_path),
        };
        Ok(exp)
    })();
    match result {
        Ok(exp) => Some(exp),
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", common.config.display());
            None
        }
    }
}

fn validate(common: &CommonArgs, only: Option<Suite>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(exp) = load(common, err) else {
        return EXIT_CONFIG;
    };
    let suites: Vec<Suite> = match only {
        Some(s) => vec![s],
        None => Suite::ALL.to_vec(),
    };
    let sizes = SuiteSizes::reduced();
    let mut failed = false;
    for suite in suites {
        match with_threads(common.threads, || run_suite(suite, &sizes, exp.seed, Execution::default())) {
            Ok(report) => {
                failed |= !report.passed();
                let _ = writeln!(out, "{report}");
            }
            Err(e) => {
                failed = true;
                let _ = writeln!(out, "FAIL {suite}: {e}");
            }
        }
    }
    if failed {
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

fn sweep(common: &CommonArgs, err: &mut dyn Write) -> i32 {
    let Some(exp) = load(common, err) else {
        return EXIT_CONFIG;
    };
    let source = match &exp.samples {
        Some(s) => FeatureSource::Recorded(s),
        None => FeatureSource::Synthetic,
    };
    let sim = Simulator::new(&exp.system, &exp.stats).with_source(source);
    let rows = match with_threads(common.threads, || sim.run_sweep(&exp.schemes, &exp.snr_grid(), exp.trials, exp.seed)) {
        Ok(rows) => rows,
        Err(e) => {
            let _ = writeln!(err, "error: simulation failed: {e}");
            return EXIT_FAILURE;
        }
    };
    if let Err(e) = fs::write(&exp.out_path, sweep_csv(&rows)) {
        let _ = fs::remove_file(&exp.out_path);
        let _ = writeln!(err, "error: cannot write {}: {e}", exp.out_path.display());
        return EXIT_FAILURE;
    }
    let _ = writeln!(err, "wrote {} rows to {}", rows.len(), exp.out_path.display());
    EXIT_OK
}

/// Largest relative gap between the closed-form and divergence-based
/// pairwise gains over all pairs.
fn identity_residual(cfg: &SystemConfig, exp: &Experiment, ch: &ChannelSet, pc: &Precoders) -> crate::Result<f64> {
    let agg = aggregate_statistics(cfg, &exp.stats, ch, pc)?;
    let mut worst: f64 = 0.0;
    for (l, lp, g) in pairwise_table(cfg, &exp.stats, ch, pc)? {
        let d = pairwise_dg_definition(&agg, l, lp)?;
        let scale = g.abs().max(d.abs());
        if scale > 0.0 {
            worst = worst.max((g - d).abs() / scale);
        }
    }
    Ok(worst)
}

fn dg_report(exp: &Experiment, out: &mut dyn Write) -> crate::Result<()> {
    let cfg = exp.report_system();
    let ch = sample_channels(&cfg, &mut trial_rng(exp.seed, 0, Stream::Channel));
    let baseline = pat_mc_precoders(&cfg, &exp.stats, &ch)?;
    let report = alternating_optimize(&cfg, &exp.stats, &ch, &baseline)?;
    let proposed = &report.final_precoders;

    writeln!(
        out,
        "U={} M={} K={} L={} seed={} sensor_budget_mw={}",
        cfg.users,
        cfg.antennas,
        cfg.subcarriers,
        exp.stats.classes(),
        exp.seed,
        sig10(cfg.sensor_budget(&exp.stats)?)
    )?;
    writeln!(out, "pat_mc_dg {}", sig10(overall_dg(&cfg, &exp.stats, &ch, &baseline)?))?;
    writeln!(out, "proposed_dg {}", sig10(overall_dg(&cfg, &exp.stats, &ch, proposed)?))?;
    writeln!(out, "proposed_rounds {} converged={}", report.iterations, report.converged)?;
    writeln!(out, "l,l',pat_mc,proposed")?;
    let base_table = pairwise_table(&cfg, &exp.stats, &ch, &baseline)?;
    let prop_table = pairwise_table(&cfg, &exp.stats, &ch, proposed)?;
    for ((l, lp, a), (_, _, b)) in base_table.into_iter().zip(prop_table) {
        writeln!(out, "{},{},{},{}", l + 1, lp + 1, sig10(a), sig10(b))?;
    }
    let residual = identity_residual(&cfg, exp, &ch, &baseline)?.max(identity_residual(&cfg, exp, &ch, proposed)?);
    writeln!(out, "residual {residual:.3e}")?;
    Ok(())
}

fn dg(common: &CommonArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(exp) = load(common, err) else {
        return EXIT_CONFIG;
    };
    match with_threads(common.threads, || {
        let mut buf = Vec::new();
        dg_report(&exp, &mut buf).map(|_| buf)
    }) {
        Ok(buf) => {
            let _ = out.write_all(&buf);
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig10_formats() {
        assert_eq!(sig10(0.5), "0.5000000000");
        assert_eq!(sig10(-25.0), "-25.00000000");
        assert_eq!(sig10(1.0), "1.000000000");
        assert_eq!(sig10(123.456789012345), "123.4567890");
        assert_eq!(sig10(9.9999999999), "10.00000000");
        assert_eq!(sig10(1.5e-7), "1.500000000e-7");
        assert_eq!(sig10(0.0), "0.000000000");
    }

    #[test]
    fn csv_rows() {
        use crate::model::Scheme;
        let rows = [
            SweepRecord {
                scheme: Scheme::Proposed,
                snr: 0.1,
                classes: 10,
                antennas: 16,
                users: 12,
                subcarriers: 10,
                accuracy: 0.75,
                dg: Some(12.5),
                trials: 2000,
                seed: 7,
            },
            SweepRecord {
                scheme: Scheme::Ideal,
                dg: None,
                ..SweepRecord {
                    scheme: Scheme::Proposed,
                    snr: 1.0,
                    classes: 10,
                    antennas: 16,
                    users: 12,
                    subcarriers: 10,
                    accuracy: 1.0,
                    dg: None,
                    trials: 2000,
                    seed: 7,
                }
            },
        ];
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "proposed,-10.00000000,10,16,12,10,0.7500000000,12.50000000,2000,7");
        assert_eq!(lines[2], "ideal,0.000000000,10,16,12,10,1.000000000,,2000,7");
    }
}
