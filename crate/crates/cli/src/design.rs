use std::path::PathBuf;

use anyhow::Context;
use ciptrace::gp::build_covariance;
use ciptrace::linalg::format_real;
use ciptrace::loss::cip_bound;
use ciptrace::mechanism::{MechanismFile, MechanismHeader, SecretField};
use ciptrace::sdp::{multiple_secrets, solve_sdp_a, SolverStatus};
use ciptrace::{Error, UtilityBudget};
use clap::Args;

use crate::args::{KernelArgs, SecretArg};

/// Smallest eigenvalue of (merged − member) accepted as domination.
pub const DOMINANCE_TOL: f64 = 1e-7;

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Trace length.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// `basic:i=25,r=1`, `compound:i=24,25;r=1` or `all-basic:r=1`.
    #[arg(long)]
    pub secret: SecretArg,
    /// Average per-point noise variance o_t.
    #[arg(long, default_value_t = 0.5)]
    pub budget: f64,
    /// Renyi order.
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn require_optimal(what: &str, status: SolverStatus) -> anyhow::Result<()> {
    if status != SolverStatus::Optimal {
        return Err(Error::Solver(format!("{what} stopped with status {status:?}")).into());
    }
    Ok(())
}

fn extra(pairs: &[(String, String)], skip: &[&str]) -> Vec<(String, String)> {
    pairs.iter().filter(|(k, _)| !skip.contains(&k.as_str())).cloned().collect()
}

pub fn run(args: &DesignArgs) -> anyhow::Result<()> {
    let spec = args.kernel.spec()?;
    let prior = build_covariance(&spec, args.n)?;
    let budget = UtilityBudget::new(args.budget, args.n)?;
    let file = match args.secret.resolve(args.n)? {
        Some(secret) => {
            let sol = solve_sdp_a(&prior, &secret, &budget)?;
            require_optimal("SDP_A", sol.status)?;
            let report = cip_bound(&prior, &sol.mechanism, &secret, args.lambda)?;
            let mut extra = extra(&report.to_pairs(), &["lambda", "sigma_s_sq"]);
            extra.push(("solver_status".into(), format!("{:?}", sol.status)));
            extra.push(("iterations".into(), sol.iterations.to_string()));
            extra.push(("duality_gap".into(), format_real(sol.duality_gap)));
            println!("{report}");
            MechanismFile {
                header: MechanismHeader {
                    n: args.n,
                    secret_indices: SecretField::List(secret.indices().to_vec()),
                    sigma_s_sq: sol.mechanism.sigma_s_sq(),
                    lambda: args.lambda,
                    radius: secret.radius(),
                    epsilon_bound: report.epsilon,
                    o_t: args.budget,
                    kernel: spec.to_string(),
                    extra,
                },
                cov: sol.mechanism.cov().clone(),
            }
        }
        None => {
            let secrets = args.secret.all_basic(args.n)?;
            let ms = multiple_secrets(&prior, &secrets, args.budget)?;
            if let Some(bad) = ms.per_secret.iter().position(|s| s.status != SolverStatus::Optimal) {
                require_optimal(&format!("SDP_A for index {bad}"), ms.per_secret[bad].status)?;
            }
            require_optimal("SDP_B", ms.merge.status)?;
            let margin = ms.min_dominance_margin();
            let epsilon = ms.merged_epsilons(&prior, &secrets, args.lambda)?.into_iter().fold(0.0, f64::max);
            let mse = ms.cov.trace();
            let min_diag = ms.cov.diagonal().min();
            println!("epsilon={epsilon} lambda={} r={} mse={mse} dominance_margin={margin}", args.lambda, args.secret.radius());
            MechanismFile {
                header: MechanismHeader {
                    n: args.n,
                    secret_indices: SecretField::All,
                    sigma_s_sq: min_diag,
                    lambda: args.lambda,
                    radius: args.secret.radius(),
                    epsilon_bound: epsilon,
                    o_t: args.budget,
                    kernel: spec.to_string(),
                    extra: vec![
                        ("mse".into(), format_real(mse)),
                        ("solver_status".into(), format!("{:?}", ms.merge.status)),
                        ("iterations".into(), ms.merge.iterations.to_string()),
                        ("dominance_margin".into(), format_real(margin)),
                        ("audited_dominance".into(), (margin >= -DOMINANCE_TOL).to_string()),
                    ],
                },
                cov: ms.cov,
            }
        }
    };
    file.save(&args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}
