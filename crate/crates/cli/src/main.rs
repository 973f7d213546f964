use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayesdl::eval::{self, CurveFile, Outcome};
use bayesdl::experiment::{self, ExperimentConfig, MetricsRow, RunArtifact, TaskKind};
use bayesdl::losses::Likelihood;
use bayesdl::predict;
use bayesdl::Error;
use clap::{Parser, Subcommand, ValueEnum};

/// Train and evaluate uncertainty-aware networks on synthetic tasks.
#[derive(Parser)]
#[command(name = "bayesdl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        /// Check decomposition and probability invariants after the run.
        #[arg(long)]
        self_check: bool,
    },
    /// Run every `*.json` config in a directory and write summary tables.
    Sweep {
        dir: PathBuf,
        #[arg(long)]
        self_check: bool,
    },
    /// Score a prediction dump and write its calibration and PR curves.
    Eval {
        dump: PathBuf,
        /// Output directory (defaults to the dump's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Noise family for regression intervals.
        #[arg(long, value_enum, default_value_t = Family::Gaussian)]
        likelihood: Family,
        #[arg(long, default_value_t = eval::DEFAULT_BINS)]
        bins: usize,
    },
    /// Render a calibration or PR curve CSV as SVG.
    Plot {
        curve: PathBuf,
        /// Output path (defaults to the input with an `.svg` extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Gaussian,
    Laplace,
}

impl From<Family> for Likelihood {
    fn from(f: Family) -> Self {
        match f {
            Family::Gaussian => Likelihood::Gaussian,
            Family::Laplace => Likelihood::Laplace,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Property(_) => 3,
        e if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, self_check } => run(&config, self_check).map(|a| print_artifact(&a)),
        Command::Sweep { dir, self_check } => sweep(&dir, self_check),
        Command::Eval { dump, out, likelihood, bins } => eval_dump(&dump, out.as_deref(), likelihood.into(), bins),
        Command::Plot { curve, out } => plot(&curve, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(path: &Path, self_check: bool) -> bayesdl::Result<RunArtifact> {
    let config = ExperimentConfig::load(path)?;
    let out = experiment::execute(&config)?;
    if self_check {
        experiment::self_check(&out)?;
    }
    experiment::write_artifacts(&out)
}

fn print_artifact(a: &RunArtifact) {
    println!("{} -> {} (config_hash {})", a.name, a.dir.display(), a.config_hash);
    for row in &a.metrics {
        let cells: Vec<String> = row
            .cells
            .iter()
            .filter(|(c, _)| !matches!(*c, "run" | "variant"))
            .map(|(c, v)| format!("{c}={v}"))
            .collect();
        println!("  {}", cells.join(" "));
    }
}

fn sweep(dir: &Path, self_check: bool) -> bayesdl::Result<()> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        return Err(Error::Config { field: "sweep".into(), msg: format!("no *.json configs in {}", dir.display()) });
    }
    let mut by_task: BTreeMap<&'static str, Vec<MetricsRow>> = BTreeMap::new();
    for path in &configs {
        let artifact = run(path, self_check)?;
        print_artifact(&artifact);
        let key = match artifact.task {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        };
        by_task.entry(key).or_default().extend(artifact.metrics);
    }
    for (task, rows) in &by_task {
        let path = dir.join(format!("summary_{task}.csv"));
        experiment::emit_table(rows, experiment::columns(rows[0].task), &[], &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn hash_comments(path: &Path) -> bayesdl::Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            l.trim_start_matches('#').trim().strip_prefix("config_hash:").map(|h| format!("config_hash:{h}"))
        })
        .collect())
}

fn eval_dump(path: &Path, out: Option<&Path>, likelihood: Likelihood, bins: usize) -> bayesdl::Result<()> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap_or_default();
    let tag = hash_comments(path)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dump".into());
    let percentiles = eval::default_percentiles();

    let (calibration, pr) = if predict::is_regression_header(header) {
        let recs = predict::read_regression_dump(path)?;
        let y: Vec<f64> = recs.iter().map(|r| r.y_true).collect();
        let mu: Vec<f64> = recs.iter().map(|r| r.pred_mean).collect();
        let var: Vec<f64> = recs.iter().map(|r| r.total_var).collect();
        println!("n={} rmse={}", recs.len(), experiment::sig6(eval::rmse(&mu, &y)?));
        if var.iter().all(|&v| v > 0.0) {
            let cal = eval::regression_calibration(&mu, &var, &y, likelihood, &eval::default_levels())?;
            let residuals: Vec<f64> = mu.iter().zip(&y).map(|(m, t)| m - t).collect();
            let pr = eval::precision_recall_uncertainty(&var, Outcome::Error(&residuals), &percentiles)?;
            (Some(cal), Some(pr))
        } else {
            println!("no predictive variance; skipping calibration and PR curves");
            (None, None)
        }
    } else {
        let recs = predict::read_classification_dump(path)?;
        let classes = recs.first().map_or(0, |r| r.probs.len());
        let labels: Vec<usize> = recs.iter().map(|r| r.label).collect();
        let pred: Vec<usize> = recs.iter().map(|r| r.pred_class).collect();
        let m = eval::classification_metrics(&pred, &labels, classes)?;
        println!(
            "n={} accuracy={} mean_iou={}",
            recs.len(),
            experiment::sig6(m.accuracy),
            experiment::sig6(m.mean_iou)
        );
        let probs =
            bayesdl::Tensor64::matrix(recs.len(), classes, recs.iter().flat_map(|r| r.probs.clone()).collect())?;
        let cal = eval::classification_calibration(&probs, &labels, bins)?;
        let correct: Vec<bool> = pred.iter().zip(&labels).map(|(p, l)| p == l).collect();
        let entropy: Vec<f64> = recs.iter().map(|r| r.entropy).collect();
        let pr = eval::precision_recall_uncertainty(&entropy, Outcome::Correct(&correct), &percentiles)?;
        (Some(cal), Some(pr))
    };
    if let Some(cal) = calibration {
        println!("calibration_mse={}", experiment::sig6(eval::calibration_mse(&cal)?));
        let p = out.join(format!("{stem}.calibration.csv"));
        eval::write_calibration_csv(&p, &tag, &cal)?;
        println!("wrote {}", p.display());
    }
    if let Some(pr) = pr {
        let p = out.join(format!("{stem}.pr.csv"));
        eval::write_pr_csv(&p, &tag, &pr)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn plot(path: &Path, out: Option<PathBuf>) -> bayesdl::Result<()> {
    let curve = CurveFile::read(path)?;
    let out = out.unwrap_or_else(|| path.with_extension("svg"));
    experiment::emit_plot(&curve, &out, &hash_comments(path)?)?;
    println!("wrote {}", out.display());
    Ok(())
}
