//! `seqcomply`: simulate, fit, compare and validate from the command line.

mod manifest;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use seqcomply::estimate::{self, EstimateReport, FitSummary, Method};
use seqcomply::io;
use seqcomply::{
    fit, parse_config, simulate_dataset, true_sample_late, Config, Contrast, Error, Result,
    ThetaUpdate,
};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "seqcomply", version, about = "Complier effects in two-period experiments with noncompliance")]
struct Cli {
    #[arg(long, value_enum, default_value = "warn", global = true)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Conjugate,
    Marginal,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and its ground truth from the `[dgp]` section.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Dataset CSV; the truth goes next to it as `<stem>.truth.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the sampler on a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        theta_update: Option<Kernel>,
        /// Output directory for draws.csv, summary.json, config.toml, manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the Bayesian estimate against the naive estimators.
    Compare {
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Ground-truth sidecar; defaults to `<data stem>.truth.json` if present.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Arms as `w1w2,w1w2`, e.g. `11,00`; defaults to the fit's contrast.
        #[arg(long)]
        contrast: Option<String>,
        /// CSV output; the table is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the sampler against exact posteriors on the built-in fixtures.
    Validate {
        #[arg(long, default_value_t = 200_000)]
        sweeps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.log_level {
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Fit {
            data,
            config,
            chains,
            draws,
            warmup,
            seed,
            theta_update,
            out,
        } => run_fit(FitArgs {
            data,
            config,
            chains,
            draws,
            warmup,
            seed,
            theta_update,
            out,
        }),
        Command::Compare {
            data,
            fit,
            truth,
            contrast,
            out,
        } => compare(&data, &fit, truth.as_deref(), contrast.as_deref(), out.as_deref()),
        Command::Validate { sweeps, seed } => validate(sweeps, seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<ExitCode> {
    let config = parse_config(config_path)?;
    let mut dgp = config.dgp.ok_or_else(|| Error::InvalidConfig {
        field: "dgp".into(),
        reason: "simulate needs a [dgp] section".into(),
    })?;
    if let Some(s) = seed {
        dgp.seed = s;
    }
    let (data, truth) = simulate_dataset(&dgp)?;
    io::write_dataset(&data, out)?;
    let truth_path = io::truth_path(out);
    io::write_truth(&truth, &truth_path)?;
    info!(
        "simulated {} units, {} compliers, true LATE {:?}",
        data.len(),
        truth.n_co,
        truth.true_late
    );
    let mut m = RunManifest::new("simulate", Some(config_path), Some(dgp.seed));
    m.input(config_path)?;
    m.output(out)?;
    m.output(&truth_path)?;
    m.write(&out.with_extension("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

struct FitArgs {
    data: PathBuf,
    config: Option<PathBuf>,
    chains: Option<usize>,
    draws: Option<usize>,
    warmup: Option<usize>,
    seed: Option<u64>,
    theta_update: Option<Kernel>,
    out: PathBuf,
}

fn run_fit(args: FitArgs) -> Result<ExitCode> {
    let mut config = match &args.config {
        Some(p) => parse_config(p)?,
        None => Config::default(),
    };
    let s = &mut config.sampler;
    if let Some(v) = args.chains {
        s.n_chains = v;
    }
    if let Some(v) = args.draws {
        s.n_draws = v;
    }
    if let Some(v) = args.warmup {
        s.n_warmup = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    if let Some(k) = args.theta_update {
        s.theta_update = match k {
            Kernel::Conjugate => ThetaUpdate::ConjugateGibbs,
            Kernel::Marginal => ThetaUpdate::MarginalMh,
        };
    }
    s.validate()?;
    let data = io::read_dataset(&args.data)?;
    info!(
        "fitting {} units: {} chains x {} draws after {} warmup",
        data.len(),
        s.n_chains,
        s.n_draws,
        s.n_warmup
    );
    let result = fit(&config.sampler, &data, &config.prior)?;
    let summary = FitSummary::from_fit(&result)?;
    if result.missing_late() > 0 {
        warn!("{} draws had no compliers", result.missing_late());
    }
    if let Some(r) = summary.diagnostics.max_rhat.filter(|r| *r > 1.05) {
        warn!("max R-hat {r:.3} exceeds 1.05");
    }

    fs::create_dir_all(&args.out)?;
    let draws_path = args.out.join("draws.csv");
    let mut w = BufWriter::new(File::create(&draws_path)?);
    io::write_draws_csv(&result, &mut w)?;
    w.flush()?;
    drop(w);
    let summary_path = args.out.join("summary.json");
    let mut w = BufWriter::new(File::create(&summary_path)?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    drop(w);
    let config_out = args.out.join("config.toml");
    let mut effective = config.clone();
    effective.dgp = None;
    fs::write(&config_out, effective.to_toml_string()?)?;

    println!(
        "LATE posterior mean {:.4} (sd {:.4}, 95% interval {:.4} to {:.4})",
        summary.late.mean, summary.late.sd, summary.late.q025, summary.late.q975
    );

    let mut m = RunManifest::new("fit", args.config.as_deref(), Some(config.sampler.seed));
    m.input(&args.data)?;
    if let Some(p) = &args.config {
        m.input(p)?;
    }
    m.output(&draws_path)?;
    m.output(&summary_path)?;
    m.output(&config_out)?;
    m.write(&args.out.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

fn parse_contrast(s: &str) -> Result<Contrast> {
    let bad = || Error::InvalidConfig {
        field: "contrast".into(),
        reason: format!("expected two arms like `11,00`, got `{s}`"),
    };
    let arms: Vec<&str> = s.split(',').map(str::trim).collect();
    if arms.len() != 2 {
        return Err(bad());
    }
    let mut bits = [[0u8; 2]; 2];
    for (k, arm) in arms.iter().enumerate() {
        let b = arm.as_bytes();
        if b.len() != 2 {
            return Err(bad());
        }
        for j in 0..2 {
            bits[k][j] = match b[j] {
                b'0' => 0,
                b'1' => 1,
                _ => return Err(bad()),
            };
        }
    }
    Contrast::try_from(bits).map_err(|_| bad())
}

struct Row {
    method: Method,
    report: Option<EstimateReport>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn compare(
    data_path: &Path,
    fit_dir: &Path,
    truth: Option<&Path>,
    contrast: Option<&str>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let data = io::read_dataset(data_path)?;
    let summary_path = fit_dir.join("summary.json");
    let summary: FitSummary = serde_json::from_reader(BufReader::new(File::open(&summary_path)?))?;
    let contrast = match contrast {
        Some(s) => parse_contrast(s)?,
        None => summary.contrast,
    };
    if contrast != summary.contrast {
        warn!(
            "fit used contrast {}, baselines use {}",
            summary.contrast, contrast
        );
    }
    let draws_path = fit_dir.join("draws.csv");
    let late: Vec<f64> = io::read_late_draws(BufReader::new(File::open(&draws_path)?))?
        .into_iter()
        .flatten()
        .collect();
    let bayes = estimate::summarize_posterior(&late)?;

    let truth_path = match truth {
        Some(p) => Some(p.to_path_buf()),
        None => Some(io::truth_path(data_path)).filter(|p| p.exists()),
    };
    let true_late = match &truth_path {
        Some(p) => match true_sample_late(&io::read_truth(p)?, contrast) {
            Ok(v) => Some(v),
            Err(Error::NoCompliers) => {
                warn!("truth has no compliers");
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };

    let baseline = |method: Method, r: Result<EstimateReport>| -> Result<Row> {
        match r {
            Ok(rep) => Ok(Row {
                method,
                report: Some(rep),
            }),
            Err(Error::EmptyArm { arm }) => {
                warn!("{}: empty arm {arm}", method.name());
                Ok(Row {
                    method,
                    report: None,
                })
            }
            Err(e) => Err(e),
        }
    };
    let rows = vec![
        Row {
            method: Method::BayesLate,
            report: Some(bayes),
        },
        baseline(Method::Itt, estimate::itt_estimate(&data, contrast))?,
        baseline(Method::PerProtocol, estimate::per_protocol_estimate(&data, contrast))?,
        baseline(Method::AsTreated, estimate::as_treated_estimate(&data, contrast))?,
    ];

    let mut header = vec!["method", "point", "lo", "hi", "n_used"];
    if true_late.is_some() {
        header.extend(["truth", "bias"]);
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let rep = r.report.as_ref();
            let point = rep.map(|x| x.point);
            let mut row = vec![
                r.method.name().to_string(),
                fmt_opt(point),
                fmt_opt(rep.and_then(|x| x.interval).map(|i| i.lo)),
                fmt_opt(rep.and_then(|x| x.interval).map(|i| i.hi)),
                rep.map(|x| x.n_used.to_string()).unwrap_or_default(),
            ];
            if let Some(t) = true_late {
                row.push(t.to_string());
                row.push(fmt_opt(point.map(|p| p - t)));
            }
            row
        })
        .collect();

    let mut m = RunManifest::new("compare", None, Some(summary.diagnostics.seed));
    m.input(data_path)?;
    m.input(&summary_path)?;
    m.input(&draws_path)?;
    if let Some(p) = &truth_path {
        m.input(p)?;
    }
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
        w.write_record(&header).map_err(|e| Error::Schema(e.to_string()))?;
        for row in &table {
            w.write_record(row).map_err(|e| Error::Schema(e.to_string()))?;
        }
        w.flush()?;
        drop(w);
        m.output(path)?;
        m.write(&path.with_extension("manifest.json"))?;
    }
    print_table(&header, &table, contrast);
    Ok(ExitCode::SUCCESS)
}

fn print_table(header: &[&str], rows: &[Vec<String>], contrast: Contrast) {
    let short = |s: &str| match s.parse::<f64>() {
        Ok(v) if s.contains('.') || s.contains('e') => format!("{v:.4}"),
        _ => s.to_string(),
    };
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|c| short(c)).collect())
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|j| {
            cells
                .iter()
                .map(|r| r[j].len())
                .chain([header[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    println!("contrast {contrast}");
    let line = |vals: Vec<&str>| {
        vals.iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (v, w))| {
                if j == 0 {
                    format!("{v:<w$}")
                } else {
                    format!("{v:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(header.to_vec()));
    for r in &cells {
        println!("{}", line(r.iter().map(String::as_str).collect()));
    }
}

fn validate(sweeps: usize, seed: u64) -> Result<ExitCode> {
    let checks = seqcomply::validate::run_fixture_suite(sweeps, seed)?;
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        println!(
            "{} {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
