use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context};
use ciptrace::adversary::{posterior_covariance, target_interval, write_sweep_csv, SweepRow, Target};
use ciptrace::gp::build_covariance;
use ciptrace::loss::{certified_epsilon, cip_bound};
use ciptrace::mechanism::{concentrated_baseline, uniform_baseline, MechanismFile, SecretField};
use ciptrace::sdp::{multiple_secrets, solve_sdp_a, SolverStatus};
use ciptrace::{Error, NoiseMechanism, SecretSet, UtilityBudget};
use clap::Args;
use nalgebra::DMatrix;

use crate::args::{parse_list, parse_sweep, KernelArgs, SecretArg};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Trace length; defaults to the mechanism file's, else 50.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub secret: SecretArg,
    /// Mechanism file to evaluate (reported as `mech`).
    #[arg(long)]
    pub mech: Option<PathBuf>,
    /// Comma list of designs from `sdp`, `uniform`, `concentrated`, all at the same MSE.
    /// Defaults to every design applicable to the secret when no mechanism file is given.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Average per-point noise variance; with `--mech` the file's MSE is matched instead.
    #[arg(long, default_value_t = 0.5)]
    pub budget: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    /// `l_eff=lo:hi:count` (log-spaced) or `l_eff=a,b,...`; defaults to `--l-eff`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Comma list of factors applied to the lengthscale of the prior the adversary actually
    /// uses; mechanisms are always designed for the assumed one.
    #[arg(long)]
    pub misspec: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Design {
    Sdp,
    Uniform,
    Concentrated,
}

impl Design {
    fn name(self) -> &'static str {
        match self {
            Design::Sdp => "sdp",
            Design::Uniform => "uniform",
            Design::Concentrated => "concentrated",
        }
    }

    fn parse(s: &str) -> anyhow::Result<Self> {
        Ok(match s.trim() {
            "sdp" => Design::Sdp,
            "uniform" => Design::Uniform,
            "concentrated" => Design::Concentrated,
            other => bail!("unknown design `{other}`"),
        })
    }
}

/// A mechanism under evaluation; `structured` is set when the block form is known.
struct Candidate {
    name: String,
    cov: DMatrix<f64>,
    structured: Option<NoiseMechanism>,
}

struct Setup {
    target: Target,
    secret: Option<SecretSet>,
    all: Vec<SecretSet>,
    designs: Vec<Design>,
    file: Option<MechanismFile>,
    o_t: f64,
    factors: Vec<f64>,
    lambda: f64,
}

fn require_optimal(what: &str, status: SolverStatus) -> anyhow::Result<()> {
    if status != SolverStatus::Optimal {
        return Err(Error::Solver(format!("{what} stopped with status {status:?}")).into());
    }
    Ok(())
}

impl Setup {
    fn candidates(&self, prior: &DMatrix<f64>) -> anyhow::Result<Vec<Candidate>> {
        let n = self.target.n();
        let budget = UtilityBudget::new(self.o_t, n)?;
        let mut out = Vec::new();
        if let Some(f) = &self.file {
            let structured = match (&f.header.secret_indices, &self.secret) {
                (SecretField::List(_), Some(_)) => Some(f.noise_mechanism()?),
                _ => None,
            };
            out.push(Candidate { name: "mech".into(), cov: f.cov.clone(), structured });
        }
        for &d in &self.designs {
            let (cov, structured) = match (d, &self.secret) {
                (Design::Sdp, Some(s)) => {
                    let sol = solve_sdp_a(prior, s, &budget)?;
                    require_optimal("SDP_A", sol.status)?;
                    (sol.mechanism.cov().clone(), Some(sol.mechanism))
                }
                (Design::Sdp, None) => {
                    let ms = multiple_secrets(prior, &self.all, self.o_t)?;
                    require_optimal("SDP_B", ms.merge.status)?;
                    (ms.cov, None)
                }
                (Design::Uniform, Some(s)) => {
                    let m = uniform_baseline(s, &budget)?;
                    (m.cov().clone(), Some(m))
                }
                (Design::Uniform, None) => (DMatrix::identity(n, n) * self.o_t, None),
                (Design::Concentrated, Some(s)) => {
                    let m = concentrated_baseline(s, &budget)?;
                    (m.cov().clone(), Some(m))
                }
                (Design::Concentrated, None) => bail!("the concentrated design needs a basic or compound secret"),
            };
            out.push(Candidate { name: d.name().into(), cov, structured });
        }
        Ok(out)
    }

    fn epsilon(&self, prior: &DMatrix<f64>, c: &Candidate) -> anyhow::Result<f64> {
        Ok(match (&self.secret, &c.structured) {
            (Some(s), Some(m)) => cip_bound(prior, m, s, self.lambda)?.epsilon,
            (Some(s), None) => certified_epsilon(prior, &c.cov, s, self.lambda)?,
            (None, _) => {
                let mut worst: f64 = 0.0;
                for s in &self.all {
                    worst = worst.max(certified_epsilon(prior, &c.cov, s, self.lambda)?);
                }
                worst
            }
        })
    }

    fn point(&self, kernel: &KernelArgs, l_eff: f64) -> anyhow::Result<Vec<SweepRow>> {
        let n = self.target.n();
        let spec = kernel.spec_at(l_eff)?;
        let assumed = build_covariance(&spec, n)?;
        let mut rows = Vec::new();
        for cand in self.candidates(&assumed)? {
            for &f in &self.factors {
                // factor 1 reuses the assumed prior so those rows match an unswept run exactly
                let truth =
                    if f == 1.0 { assumed.clone() } else { build_covariance(&kernel.spec_at(f * l_eff)?, n)? };
                let post = posterior_covariance(&truth, &cand.cov)?;
                rows.push(SweepRow {
                    l_eff,
                    mechanism: cand.name.clone(),
                    true_scale: f,
                    mse: cand.cov.trace(),
                    interval: target_interval(&post, &self.target)?,
                    epsilon_bound: self.epsilon(&truth, &cand)?,
                });
            }
        }
        Ok(rows)
    }
}

pub fn run(args: &EvaluateArgs) -> anyhow::Result<()> {
    let file = match &args.mech {
        Some(p) => Some(MechanismFile::load(p).with_context(|| format!("cannot read mechanism {}", p.display()))?),
        None => None,
    };
    let n = match (&file, args.n) {
        (Some(f), Some(n)) if f.header.n != n => bail!("--n {n} disagrees with the mechanism's n = {}", f.header.n),
        (Some(f), _) => f.header.n,
        (None, n) => n.unwrap_or(50),
    };
    let secret = args.secret.resolve(n)?;
    if let (Some(f), Some(s)) = (&file, &secret) {
        if let SecretField::List(idx) = &f.header.secret_indices {
            if idx.as_slice() != s.indices() {
                bail!("mechanism was designed for indices {idx:?}, not {:?}", s.indices());
            }
        }
    }
    let all = if secret.is_none() { args.secret.all_basic(n)? } else { Vec::new() };
    let target = match &secret {
        Some(s) => Target::Secret(s.clone()),
        None => Target::AllBasic { n },
    };
    let designs = match &args.baseline {
        Some(list) => list.split(',').map(Design::parse).collect::<anyhow::Result<Vec<_>>>()?,
        None if file.is_some() => Vec::new(),
        None if secret.is_some() => vec![Design::Sdp, Design::Uniform, Design::Concentrated],
        None => vec![Design::Sdp, Design::Uniform],
    };
    let o_t = match &file {
        Some(f) => f.cov.trace() / n as f64,
        None => args.budget,
    };
    let grid = match &args.sweep {
        Some(s) => parse_sweep(s)?,
        None => vec![args.kernel.l_eff],
    };
    let factors = match &args.misspec {
        Some(s) => parse_list(s).context("--misspec")?,
        None => vec![1.0],
    };
    if factors.iter().any(|&f| !(f.is_finite() && f > 0.0)) {
        bail!("--misspec factors must be positive");
    }
    let setup = Setup { target, secret, all, designs, file, o_t, factors, lambda: args.lambda };
    let results: Vec<anyhow::Result<Vec<SweepRow>>> = std::thread::scope(|scope| {
        let setup = &setup;
        let handles: Vec<_> = grid.iter().map(|&l| scope.spawn(move || setup.point(&args.kernel, l))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for (l, r) in grid.iter().zip(results) {
        rows.extend(r.with_context(|| format!("at l_eff = {l}"))?);
    }
    if let Some(f) = &setup.file {
        if let Some(row) = rows.iter().find(|r| r.mechanism == "mech" && r.true_scale == 1.0) {
            tracing::info!(stored = f.header.epsilon_bound, recomputed = row.epsilon_bound, l_eff = row.l_eff, "mechanism epsilon");
        }
    }
    let w = BufWriter::new(File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?);
    write_sweep_csv(&rows, w)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}
