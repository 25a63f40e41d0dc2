use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ciptrace::linalg::format_real;
use ciptrace::trace::{
    default_grid, fit_trace, median, preprocess, quantile, LengthscaleFit, PreprocessConfig, Rejection, Trace,
};
use ciptrace::KernelSpec;
use clap::Args;

use crate::args::{parse_grid, KernelArgs};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory of trace CSV files.
    pub input_dir: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Lengthscale grid, `lo:hi:count` (log-spaced) or a comma list.
    #[arg(long)]
    pub grid: Option<String>,
    /// Apply the length and duration windows before fitting.
    #[arg(long)]
    pub filter: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn csv_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

fn trace_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

enum Outcome {
    Fitted(Vec<(String, LengthscaleFit)>),
    Unreadable(ciptrace::Error),
    Rejected(Rejection),
    Failed(ciptrace::Error),
}

fn fit_one(path: &Path, cfg: &PreprocessConfig, template: &KernelSpec, grid: &[f64]) -> Outcome {
    let trace = match Trace::load(path) {
        Ok(t) => t,
        Err(e) => return Outcome::Unreadable(e),
    };
    let trace = match preprocess(&trace, cfg) {
        Ok(t) => t,
        Err(r) => return Outcome::Rejected(r),
    };
    match fit_trace(&trace, template, grid) {
        Ok(fits) => Outcome::Fitted(trace.dim_labels().iter().cloned().zip(fits).collect()),
        Err(e) => Outcome::Failed(e),
    }
}

/// Fits every file, spreading the files over the available cores; results keep file order.
fn fit_all(files: &[PathBuf], cfg: &PreprocessConfig, template: &KernelSpec, grid: &[f64]) -> Vec<Outcome> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(files.len()).max(1);
    let chunk = files.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|p| fit_one(p, cfg, template, grid)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("fit worker panicked")).collect()
    })
}

pub fn run(args: &FitArgs) -> anyhow::Result<()> {
    let grid = match &args.grid {
        Some(g) => parse_grid(g)?,
        None => default_grid(),
    };
    let template = args.kernel.spec()?;
    let cfg = if args.filter { PreprocessConfig::default() } else { PreprocessConfig::unfiltered() };
    let files = csv_files(&args.input_dir)?;
    if files.is_empty() {
        bail!("no CSV traces in {}", args.input_dir.display());
    }
    let outcomes = fit_all(&files, &cfg, &template, &grid);
    let mut out = csv::Writer::from_writer(
        File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?,
    );
    out.write_record(["trace_id", "dim", "l_eff", "loglik"])?;
    let mut fitted = Vec::new();
    let mut rejected = 0;
    for (path, outcome) in files.iter().zip(outcomes) {
        let name = trace_id(path);
        match outcome {
            Outcome::Fitted(rows) => {
                for (label, f) in rows {
                    out.write_record([name.as_str(), &label, &format_real(f.l_eff), &format_real(f.loglik)])?;
                    fitted.push(f.l_eff);
                }
            }
            Outcome::Unreadable(e) => tracing::warn!(file = %name, "skipping unreadable trace: {e}"),
            Outcome::Rejected(r) => {
                tracing::warn!(file = %name, reason = r.reason.code(), "trace rejected: {}", r.detail);
                rejected += 1;
            }
            Outcome::Failed(e) => tracing::warn!(file = %name, "fit failed: {e}"),
        }
    }
    out.flush()?;
    if fitted.is_empty() {
        bail!("none of the {} traces could be fitted ({rejected} rejected by preprocessing)", files.len());
    }
    let med = median(&fitted).expect("nonempty");
    let q1 = quantile(&fitted, 0.25).expect("nonempty");
    let q3 = quantile(&fitted, 0.75).expect("nonempty");
    println!("fitted {} dimension(s) from {} file(s), {rejected} rejected", fitted.len(), files.len());
    println!("median_l_eff={med} q25={q1} q75={q3}");
    Ok(())
}
