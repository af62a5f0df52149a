use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fundnet::bifurcation::{screened_draw, DrawScreen};
use fundnet::network::{complete_monoid, fundamental_network, network_to_json, parse_network_file, NetworkFile, ResponseFunction};
use fundnet::report::{self, AnalysisReport, ReportOptions};
use fundnet::simulate;
use fundnet::synchrony::{enumerate_robust, hasse_edges};
use fundnet::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "fundnet", version, about = "Fundamental networks and synchrony-breaking bifurcations of coupled cell networks")]
struct Cli {
    /// Worker threads for parallel λ sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete the input maps to a monoid and print its multiplication table.
    Complete { file: PathBuf },
    /// Print the fundamental network in the input file format.
    Fundamental { file: PathBuf },
    /// List the robust synchrony partitions and their Hasse diagram.
    Synchrony { file: PathBuf },
    /// Spectrum of the origin and the center/hyperbolic splitting.
    Spectrum(Analysis),
    /// Center manifold reduction and the normal-form coefficients.
    Reduce(Analysis),
    /// Steady-state branches near the bifurcation and their asymptotics.
    Branches(Analysis),
    /// Integrate the network from an initial state and print a CSV trajectory.
    Simulate(Simulate),
    /// Relax the full network onto every stable predicted branch point.
    Validate(Analysis),
    /// Run the whole pipeline and write report.json, branches.csv and diagram.svg.
    Report {
        #[command(flatten)]
        analysis: Analysis,
        /// Output directory.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Analysis {
    file: PathBuf,
    /// Seed for drawing a response when the file does not give one.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Jet order of the center manifold reduction.
    #[arg(long, default_value_t = 3)]
    order: u32,
    #[arg(long, default_value_t = 1e-4)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1e-2)]
    lambda_max: f64,
    /// Threshold on |Re| separating center from hyperbolic eigenvalues.
    #[arg(long)]
    tol_re: Option<f64>,
}

impl Analysis {
    fn options(&self) -> ReportOptions {
        ReportOptions {
            seed: self.seed,
            order: self.order,
            tol_re: self.tol_re,
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            ..ReportOptions::default()
        }
    }
}

#[derive(Args)]
struct Simulate {
    file: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lambda: f64,
    /// Initial state, comma separated (default: a small fixed kick off the origin).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> fundnet::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> fundnet::Result<NetworkFile> {
    parse_network_file(&read(path)?)
}

fn analyze(a: &Analysis) -> fundnet::Result<AnalysisReport> {
    let opts = a.options();
    let p = report::run_pipeline(&read(&a.file)?, &opts)?;
    report::build_report(&p, &opts)
}

fn to_json<T: serde::Serialize>(v: &T) -> fundnet::Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Internal(e.to_string()))
}

fn response(file: &NetworkFile, seed: u64) -> fundnet::Result<ResponseFunction> {
    match &file.response {
        Some(f) => Ok(f.clone()),
        None => {
            let opts = ReportOptions { seed, ..ReportOptions::default() }.analysis();
            let d = screened_draw(&file.spec, seed, &opts, &DrawScreen::default())?;
            Ok(d.response)
        }
    }
}

fn run(cmd: Command) -> fundnet::Result<String> {
    let value = match cmd {
        Command::Complete { file } => {
            let m = complete_monoid(&load(&file)?.spec);
            json!({
                "size": m.size(),
                "labels": m.elements.iter().map(|e| e.label.clone()).collect::<Vec<_>>(),
                "targets": m.elements.iter().map(|e| e.one_based()).collect::<Vec<_>>(),
                "table": m.table,
            })
        }
        Command::Fundamental { file } => {
            let net = load(&file)?;
            let fund = fundamental_network(&complete_monoid(&net.spec), net.spec.cell_dim);
            let name = net.name.map(|n| format!("fundamental network of {n}"));
            return Ok(network_to_json(&fund, None, name.as_deref()));
        }
        Command::Synchrony { file } => {
            let parts = enumerate_robust(&load(&file)?.spec)?;
            let nontrivial: Vec<String> = parts.iter().filter(|p| !p.is_singletons()).map(|p| p.to_string()).collect();
            json!({
                "balanced": parts.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                "nontrivial": nontrivial,
                "hasse": hasse_edges(&parts),
            })
        }
        Command::Spectrum(a) => {
            let r = analyze(&a)?;
            json!({ "meta": to_json(&r.meta)?, "spectrum": to_json(&r.spectrum)?, "splitting": to_json(&r.splitting)? })
        }
        Command::Reduce(a) => {
            let r = analyze(&a)?;
            json!({ "meta": to_json(&r.meta)?, "reduced": to_json(&r.reduced)? })
        }
        Command::Branches(a) => {
            let r = analyze(&a)?;
            json!({ "meta": to_json(&r.meta)?, "branches": to_json(&r.branches)?, "table": to_json(&r.table)?, "gaps": r.gaps })
        }
        Command::Validate(a) => {
            let r = analyze(&a)?;
            json!({ "meta": to_json(&r.meta)?, "validation": to_json(&r.validation)? })
        }
        Command::Report { analysis, out } => {
            let r = report::write_report(&read(&analysis.file)?, &analysis.options(), &out)?;
            return Ok(format!(
                "wrote {} to {} ({} branches, seed {}, draw {})\n",
                report::REPORT_FILES.join(", "),
                out.display(),
                r.branches.len(),
                r.meta.seed,
                r.meta.draw_attempt
            ));
        }
        Command::Simulate(s) => {
            let net = load(&s.file)?;
            let f = response(&net, s.seed)?;
            let dim = net.spec.state_dim();
            let x0 = s.x0.unwrap_or_else(|| (0..dim).map(|i| 1e-2 * [0.6, -0.8, 0.3][i % 3]).collect());
            let tr = simulate::integrate(&net.spec, &f, &x0, s.lambda, s.t_end, s.step)?;
            let csv = tr.to_csv();
            if tr.blow_up {
                eprintln!("warning: trajectory left the bounded region and was stopped");
            }
            return match s.out {
                Some(path) => {
                    std::fs::write(&path, csv)?;
                    Ok(format!("wrote {} samples to {}\n", tr.times.len(), path.display()))
                }
                None => Ok(csv),
            };
        }
    };
    let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(text + "\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Input => 2,
                ErrorClass::Degenerate => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
