//! Command-line front end: parse triplet configs, run computations and
//! verification suites, emit CSV/JSON.
//!
//! Every subcommand takes `--config` pointing at a JSON triplet
//! `{"m": .., "sigma2": .., "levy": {"kind": ..}}` and `--out` naming an
//! output base path; `<out>.csv` and `<out>.json` are written next to each
//! other. Exit codes: 0 success (and, for `verify`, all checks passed),
//! 1 verification failures, 2 malformed configuration, 3 numerical
//! refusal (threshold, cap or convergence precondition).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use skipfree::generator::{self, BoundaryPolicy, ChainKind};
use skipfree::invariant;
use skipfree::kernels::FactorialPoly;
use skipfree::simulate;
use skipfree::spectral::{self, SpectralSystem};
use skipfree::verify::{self, Suite};
use skipfree::{BernsteinTriplet, Error};

#[derive(Parser)]
#[command(name = "skipfree", version, about = "Discrete self-similar and skip-free Laguerre chains: generators, invariant laws, spectral expansions, simulation and verification")]
struct Cli {
    /// Worker threads (also SKIPFREE_THREADS); defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ssm,
    Laguerre,
}

impl From<KindArg> for ChainKind {
    fn from(k: KindArg) -> ChainKind {
        match k {
            KindArg::Ssm => ChainKind::SelfSimilar,
            KindArg::Laguerre => ChainKind::Laguerre,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Substochastic,
    Reflecting,
}

impl From<BoundaryArg> for BoundaryPolicy {
    fn from(b: BoundaryArg) -> BoundaryPolicy {
        match b {
            BoundaryArg::Substochastic => BoundaryPolicy::SubStochastic,
            BoundaryArg::Reflecting => BoundaryPolicy::Reflecting,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Series,
    Solve,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Build a truncated generator and export it as CSV plus a JSON header.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Truncation level N.
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "substochastic")]
        boundary: BoundaryArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the invariant law with certificates.
    Invariant {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
        /// Truncation level (grown automatically when omitted).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate eigen- and co-eigenfunctions with residual summaries.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        kmax: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the (possibly subordinated) Laguerre semigroup to a function.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        /// Subordination index; switches to the subordinated semigroup.
        #[arg(long)]
        beta: Option<f64>,
        /// Function spec: identity | delta:<n> | pk:<k> | coeffs:<path>.
        #[arg(long)]
        f: String,
        /// State truncation.
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate exact paths and endpoint statistics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        n0: u64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        replicas: u64,
        #[arg(long)]
        seed: u64,
        /// Cap on the number of full paths written to the CSV.
        #[arg(long, default_value_t = 1000)]
        max_paths: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run verification suites and emit a JSON pass/fail report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 20240901)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("SKIPFREE_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        // a failure here means a pool already exists, which is fine
        let _ = rayon_pool(threads);
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Refusal(msg)) => {
            eprintln!("numerical refusal: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("io error: {msg}");
            ExitCode::from(4)
        }
    }
}

fn rayon_pool(threads: usize) -> Result<(), String> {
    skipfree::configure_threads(threads)
}

enum CliError {
    Config(String),
    Refusal(String),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        match e {
            Error::InvalidTriplet(m) => CliError::Config(m),
            other => CliError::Refusal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e.to_string())
    }
}

fn load_config(path: &Path) -> Result<BernsteinTriplet, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    BernsteinTriplet::from_json(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn write_pair(out: &Path, csv: Option<&str>, json: &serde_json::Value) -> Result<(), CliError> {
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    if let Some(csv) = csv {
        fs::write(out.with_extension("csv"), csv)?;
    }
    fs::write(
        out.with_extension("json"),
        serde_json::to_string_pretty(json).expect("reports serialize") + "\n",
    )?;
    Ok(())
}

fn parse_function(spec: &str, n_max: usize) -> Result<Vec<f64>, CliError> {
    if spec == "identity" {
        return Ok((0..=n_max).map(|n| n as f64).collect());
    }
    if let Some(rest) = spec.strip_prefix("delta:") {
        let n: usize = rest
            .parse()
            .map_err(|_| CliError::Config(format!("bad delta index '{rest}'")))?;
        if n > n_max {
            return Err(CliError::Config(format!(
                "delta index {n} beyond truncation {n_max}"
            )));
        }
        let mut f = vec![0.0; n_max + 1];
        f[n] = 1.0;
        return Ok(f);
    }
    if let Some(rest) = spec.strip_prefix("pk:") {
        let k: usize = rest
            .parse()
            .map_err(|_| CliError::Config(format!("bad basis index '{rest}'")))?;
        return Ok(FactorialPoly::basis(k).sample(n_max));
    }
    if let Some(rest) = spec.strip_prefix("coeffs:") {
        let text = fs::read_to_string(rest)
            .map_err(|e| CliError::Config(format!("{rest}: {e}")))?;
        let values: Vec<f64> = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{rest}: {e}")))?;
        let mut f = vec![0.0; n_max + 1];
        for (n, v) in values.into_iter().enumerate() {
            if n <= n_max {
                f[n] = v;
            }
        }
        return Ok(f);
    }
    Err(CliError::Config(format!(
        "unknown function spec '{spec}' (expected identity | delta:<n> | pk:<k> | coeffs:<path>)"
    )))
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Gen {
            config,
            kind,
            n,
            boundary,
            out,
        } => {
            let triplet = load_config(&config)?;
            let g = match ChainKind::from(kind) {
                ChainKind::SelfSimilar => generator::build_gphi(&triplet, n, boundary.into())?,
                ChainKind::Laguerre => generator::build_lphi(&triplet, n, boundary.into())?,
            };
            let report = g.validate();
            let mut meta = g.metadata();
            meta["validation"] = serde_json::json!({
                "max_interior_residual": report.max_interior_residual,
                "min_offdiag": report.min_offdiag,
                "boundary_row_sum": report.boundary_row_sum,
            });
            write_pair(&out, Some(&g.to_csv()), &meta)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Invariant {
            config,
            method,
            n,
            out,
        } => {
            let triplet = load_config(&config)?;
            let law = match (method, n) {
                (MethodArg::Series, Some(n)) => invariant::nphi_series(&triplet, n)?,
                (MethodArg::Series, None) => invariant::nphi_series(&triplet, 400)?,
                (_, Some(n)) => {
                    let gen = generator::build_lphi(&triplet, n, BoundaryPolicy::Reflecting)?;
                    invariant::nphi_solve(&gen)?
                }
                (_, None) => invariant::nphi_solve_auto(&triplet, 64)?,
            };
            let certs = invariant::moment_certificate(&law, &triplet, 10)?;
            let mut meta = law.metadata();
            meta["certificates"] = serde_json::to_value(&certs).unwrap();
            if matches!(method, MethodArg::Both) && triplet.sigma2 < 1.0 {
                let series = invariant::nphi_series(&triplet, law.n_max().min(400))?;
                let sup = (0..=series.n_max())
                    .map(|i| (series.weight(i) - law.weight(i)).abs())
                    .fold(0.0, f64::max);
                meta["series_vs_solve_sup"] = serde_json::json!(sup);
            }
            write_pair(&out, Some(&law.to_csv()), &meta)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum {
            config,
            kmax,
            n,
            out,
        } => {
            let triplet = load_config(&config)?;
            let sys = SpectralSystem::build(&triplet, kmax, n)?;
            let check_k = kmax.min(12);
            let mut biorth_max = 0.0f64;
            for k in 0..=check_k {
                for l in 0..=check_k {
                    biorth_max = biorth_max.max(sys.biorthogonality_check(k, l).abs());
                }
            }
            let meta = serde_json::json!({
                "t_star": sys.t_star,
                "kmax": sys.kmax,
                "k_usable": sys.k_usable,
                "n_max": sys.n_max,
                "biorthogonality_max_residual": biorth_max,
                "biorthogonality_checked_up_to": check_k,
                "triplet": triplet,
            });
            write_pair(&out, Some(&spectral::spectral_csv(&sys)), &meta)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evolve {
            config,
            t,
            beta,
            f,
            n,
            out,
        } => {
            let triplet = load_config(&config)?;
            let input = parse_function(&f, n)?;
            let sys = SpectralSystem::build(&triplet, (n / 6).max(30).min(n), n)?;
            let output = match beta {
                Some(beta) => sys.subordinated_apply(&input, t, beta)?,
                None => sys.evolve(&input, t)?,
            };
            let mut csv = String::from("n,input,output\n");
            for i in 0..=n {
                csv.push_str(&format!("{i},{:.16e},{:.16e}\n", input[i], output[i]));
            }
            let meta = serde_json::json!({
                "t": t,
                "beta": beta,
                "f": f,
                "n_max": n,
                "t_star": sys.t_star,
                "k_usable": sys.k_usable,
                "route": if beta.is_some() { "subordinated" }
                         else if triplet.sigma2 > 0.0 && t >= sys.t_star + sys.threshold_margin { "spectral" }
                         else { "uniformization" },
            });
            write_pair(&out, Some(&csv), &meta)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            config,
            kind,
            n0,
            t,
            replicas,
            seed,
            max_paths,
            out,
        } => {
            let triplet = load_config(&config)?;
            let kind = ChainKind::from(kind);
            let ends = simulate::endpoints(&triplet, kind, n0, t, replicas, seed)?;
            let mut csv = String::from("replica,jump_time,state\n");
            for i in 0..replicas.min(max_paths) {
                let p = simulate::gillespie(&triplet, kind, n0, t, seed + i)?;
                p.csv_rows(i, &mut csv);
            }
            let mut moments_json = Vec::new();
            for k in 1..=3usize {
                let (mean, se) = simulate::factorial_moment_estimate(&ends, k);
                moments_json.push(serde_json::json!({"k": k, "mean": mean, "stderr": se}));
            }
            let meta = serde_json::json!({
                "kind": kind,
                "n0": n0,
                "t": t,
                "replicas": replicas,
                "seed": seed,
                "paths_in_csv": replicas.min(max_paths),
                "endpoint_factorial_moments": moments_json,
            });
            write_pair(&out, Some(&csv), &meta)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            config,
            suite,
            seed,
            out,
        } => {
            let triplet = load_config(&config)?;
            let suite: Suite = suite.parse().map_err(CliError::Config)?;
            let reports = verify::run_suites(&triplet, suite, seed)?;
            let passed = reports.iter().all(|r| r.passed);
            let meta = serde_json::json!({
                "passed": passed,
                "seed": seed,
                "triplet": triplet,
                "suites": reports,
            });
            // the report is written even when checks fail
            write_pair(&out, None, &meta)?;
            for r in &reports {
                for c in &r.checks {
                    println!(
                        "{} {}::{} = {:.3e} (tol {:.1e})",
                        if c.passed { "PASS" } else { "FAIL" },
                        r.suite,
                        c.name,
                        c.value,
                        c.tolerance
                    );
                }
            }
            Ok(if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
