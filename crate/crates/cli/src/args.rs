//! Flag grammars shared by the subcommands.

use std::str::FromStr;

use anyhow::{bail, Context};
use ciptrace::trace::log_grid;
use ciptrace::{KernelSpec, SecretSet};
use clap::{Args, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Rbf,
    Periodic,
}

/// Prior kernel flags.
#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: Family,
    /// Lengthscale in samples.
    #[arg(long = "l-eff", default_value_t = 6.0)]
    pub l_eff: f64,
    /// Period in samples (periodic kernel only).
    #[arg(long, default_value_t = 24.0)]
    pub period: f64,
}

impl KernelArgs {
    pub fn spec(&self) -> anyhow::Result<KernelSpec> {
        self.spec_at(self.l_eff)
    }

    pub fn spec_at(&self, l_eff: f64) -> anyhow::Result<KernelSpec> {
        Ok(match self.kernel {
            Family::Rbf => KernelSpec::rbf(l_eff)?,
            Family::Periodic => KernelSpec::periodic(l_eff, self.period)?,
        })
    }
}

/// `basic:i=25,r=1`, `compound:i=24,25;r=1` or `all-basic:r=1`.
#[derive(Debug, Clone, PartialEq)]
pub enum SecretArg {
    Basic { indices: Vec<usize>, radius: f64 },
    Compound { indices: Vec<usize>, radius: f64 },
    AllBasic { radius: f64 },
}

impl SecretArg {
    pub fn radius(&self) -> f64 {
        match self {
            SecretArg::Basic { radius, .. } | SecretArg::Compound { radius, .. } | SecretArg::AllBasic { radius } => {
                *radius
            }
        }
    }

    /// The secret set for a basic or compound argument; `None` for all-basic.
    pub fn resolve(&self, n: usize) -> anyhow::Result<Option<SecretSet>> {
        Ok(match self {
            SecretArg::Basic { indices, radius } if indices.len() == 1 => Some(SecretSet::basic(indices[0], *radius, n)?),
            SecretArg::Basic { indices, radius } => Some(SecretSet::basic_point(indices.clone(), *radius, n)?),
            SecretArg::Compound { indices, radius } => Some(SecretSet::compound(indices.clone(), *radius, n)?),
            SecretArg::AllBasic { .. } => None,
        })
    }

    /// One basic secret per index.
    pub fn all_basic(&self, n: usize) -> anyhow::Result<Vec<SecretSet>> {
        (0..n).map(|i| Ok(SecretSet::basic(i, self.radius(), n)?)).collect()
    }
}

impl FromStr for SecretArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let (kind, body) = s.split_once(':').with_context(|| format!("secret `{s}` has no `kind:` prefix"))?;
        // a token with `=` opens a key; bare tokens continue the previous key's list
        let mut fields: Vec<(String, Vec<String>)> = Vec::new();
        for tok in body.split([',', ';']).map(str::trim).filter(|t| !t.is_empty()) {
            match tok.split_once('=') {
                Some((k, v)) => fields.push((k.trim().to_string(), vec![v.trim().to_string()])),
                None => match fields.last_mut() {
                    Some((_, vs)) => vs.push(tok.to_string()),
                    None => bail!("secret `{s}`: value `{tok}` before any key"),
                },
            }
        }
        let get = |key: &str| fields.iter().find(|(k, _)| k == key).map(|(_, v)| v);
        if let Some((k, _)) = fields.iter().find(|(k, _)| k != "i" && k != "r") {
            bail!("secret `{s}`: unknown key `{k}`");
        }
        let radius = match get("r") {
            Some(v) if v.len() == 1 => v[0].parse::<f64>().with_context(|| format!("secret `{s}`: bad radius"))?,
            Some(_) => bail!("secret `{s}`: radius takes one value"),
            None => 1.0,
        };
        let indices = || -> anyhow::Result<Vec<usize>> {
            let v = get("i").with_context(|| format!("secret `{s}` needs `i=`"))?;
            v.iter()
                .map(|t| t.parse::<usize>().with_context(|| format!("secret `{s}`: bad index `{t}`")))
                .collect()
        };
        Ok(match kind.trim() {
            "basic" => SecretArg::Basic { indices: indices()?, radius },
            "compound" => {
                let indices = indices()?;
                if indices.len() < 2 {
                    bail!("secret `{s}`: a compound secret needs at least two indices");
                }
                SecretArg::Compound { indices, radius }
            }
            "all-basic" => {
                if get("i").is_some() {
                    bail!("secret `{s}`: all-basic takes no indices");
                }
                SecretArg::AllBasic { radius }
            }
            other => bail!("unknown secret kind `{other}`"),
        })
    }
}

/// Lengthscale grid: `lo:hi:count` (log-spaced) or a comma list of values.
pub fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, hi, count] => {
            let lo: f64 = lo.trim().parse().with_context(|| format!("grid `{s}`: bad lower end"))?;
            let hi: f64 = hi.trim().parse().with_context(|| format!("grid `{s}`: bad upper end"))?;
            let count: usize = count.trim().parse().with_context(|| format!("grid `{s}`: bad count"))?;
            if !(lo > 0.0 && hi >= lo) || count == 0 {
                bail!("grid `{s}` needs 0 < lo <= hi and a positive count");
            }
            log_grid(lo, hi, count)
        }
        [list] => parse_list(list).with_context(|| format!("grid `{s}`"))?,
        _ => bail!("grid `{s}` is neither lo:hi:count nor a comma list"),
    };
    if grid.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
        bail!("grid `{s}` has a non-positive lengthscale");
    }
    Ok(grid)
}

/// `l_eff=lo:hi:count`.
pub fn parse_sweep(s: &str) -> anyhow::Result<Vec<f64>> {
    let body = s.strip_prefix("l_eff=").with_context(|| format!("sweep `{s}` must start with `l_eff=`"))?;
    parse_grid(body)
}

pub fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number `{}`", t.trim())))
        .collect()
}
