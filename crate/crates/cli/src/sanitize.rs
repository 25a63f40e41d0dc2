use std::path::PathBuf;

use anyhow::{bail, Context};
use ciptrace::mechanism::{apply_noise, MechanismFile};
use ciptrace::trace::Trace;
use clap::Args;
use nalgebra::DVector;

#[derive(Debug, Args)]
pub struct SanitizeArgs {
    /// Trace CSV to release.
    pub trace: PathBuf,
    /// Mechanism file written by `design`.
    pub mech: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Multi-dimensional traces are unrolled time-major: index t·d + k holds dimension k at time t.
pub fn run(args: &SanitizeArgs) -> anyhow::Result<()> {
    let trace = Trace::load(&args.trace).with_context(|| format!("cannot read trace {}", args.trace.display()))?;
    let mech = MechanismFile::load(&args.mech).with_context(|| format!("cannot read mechanism {}", args.mech.display()))?;
    let (len, dims) = (trace.len(), trace.dims());
    if len * dims != mech.header.n {
        bail!("trace has {len} x {dims} values but the mechanism is for n = {}", mech.header.n);
    }
    let x = DVector::from_fn(len * dims, |i, _| trace.dimension(i % dims)[i / dims]);
    let z = apply_noise(&mech.cov, &x, args.seed)?;
    let values = (0..dims).map(|k| (0..len).map(|t| z[t * dims + k]).collect()).collect();
    let released = Trace::new(trace.timestamps().to_vec(), values, trace.dim_labels().to_vec())?;
    released.save(&args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}
