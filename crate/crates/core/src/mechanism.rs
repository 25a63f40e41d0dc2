//! Additive Gaussian noise mechanisms, the two structure-blind baselines, and the mechanism
//! file format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::gp::{sample_mvn, Mvn};
use crate::linalg::{self, format_real};
use crate::secrets::SecretSet;

const PSD_TOL: f64 = 1e-7;
const BLOCK_TOL: f64 = 1e-10;

/// Average per-point MSE allowance `o_t` over a trace of length `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityBudget {
    pub o_t: f64,
    pub n: usize,
}

impl UtilityBudget {
    pub fn new(o_t: f64, n: usize) -> Result<Self> {
        if !(o_t.is_finite() && o_t > 0.0) {
            return Err(invalid(format!("per-point budget must be positive, got {o_t}")));
        }
        if n == 0 {
            return Err(invalid("budget over an empty trace"));
        }
        Ok(Self { o_t, n })
    }

    /// Total allowed trace of the noise covariance, n·o_t.
    pub fn total(&self) -> f64 {
        self.n as f64 * self.o_t
    }
}

/// Noise covariance Σ^(g) with σ_s²·I on the secret block and no secret/remainder coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMechanism {
    cov: DMatrix<f64>,
    secret_indices: Vec<usize>,
    sigma_s_sq: f64,
}

impl NoiseMechanism {
    pub fn new(cov: DMatrix<f64>, secret_indices: Vec<usize>, sigma_s_sq: f64) -> Result<Self> {
        let n = cov.nrows();
        linalg::check_square(&cov, n)?;
        if !linalg::all_finite(&cov) {
            return Err(invalid("noise covariance has non-finite entries"));
        }
        if !(sigma_s_sq.is_finite() && sigma_s_sq >= 0.0) {
            return Err(invalid(format!("secret noise variance must be >= 0, got {sigma_s_sq}")));
        }
        if secret_indices.is_empty() || secret_indices.iter().any(|&i| i >= n) {
            return Err(invalid("secret indices empty or out of range"));
        }
        let scale = cov.amax().max(1.0);
        if !linalg::is_symmetric(&cov, BLOCK_TOL) {
            return Err(invalid("noise covariance is not symmetric"));
        }
        let rem = linalg::complement(&secret_indices, n);
        for (a, &i) in secret_indices.iter().enumerate() {
            for (b, &j) in secret_indices.iter().enumerate() {
                let want = if a == b { sigma_s_sq } else { 0.0 };
                if (cov[(i, j)] - want).abs() > BLOCK_TOL * scale {
                    return Err(invalid(format!(
                        "secret block entry ({i},{j}) is {}, expected {want}",
                        cov[(i, j)]
                    )));
                }
            }
            for &u in &rem {
                if cov[(i, u)].abs() > BLOCK_TOL * scale {
                    return Err(invalid(format!("secret/remainder coupling at ({i},{u})")));
                }
            }
        }
        if linalg::min_eigenvalue(&cov) < -PSD_TOL * scale {
            return Err(invalid("noise covariance is not positive semidefinite"));
        }
        Ok(Self { cov, secret_indices, sigma_s_sq })
    }

    /// Assembles Σ^(g) from σ_s² and the remainder block, whose rows follow the ascending
    /// order of the non-secret indices.
    pub fn from_blocks(
        n: usize,
        secret_indices: &[usize],
        sigma_s_sq: f64,
        remainder_cov: &DMatrix<f64>,
    ) -> Result<Self> {
        let rem = linalg::complement(secret_indices, n);
        linalg::check_square(remainder_cov, rem.len())?;
        let mut cov = DMatrix::zeros(n, n);
        for &i in secret_indices {
            if i >= n {
                return Err(invalid(format!("secret index {i} out of range")));
            }
            cov[(i, i)] = sigma_s_sq;
        }
        let sym = linalg::symmetrize(remainder_cov);
        for (a, &i) in rem.iter().enumerate() {
            for (b, &j) in rem.iter().enumerate() {
                cov[(i, j)] = sym[(a, b)];
            }
        }
        Self::new(cov, secret_indices.to_vec(), sigma_s_sq)
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn secret_indices(&self) -> &[usize] {
        &self.secret_indices
    }

    pub fn sigma_s_sq(&self) -> f64 {
        self.sigma_s_sq
    }

    pub fn n(&self) -> usize {
        self.cov.nrows()
    }

    /// Expected squared error of a release, trace(Σ^(g)).
    pub fn mse(&self) -> f64 {
        self.cov.trace()
    }

    /// Σ^(g)_uu over the ascending non-secret indices.
    pub fn remainder_block(&self) -> DMatrix<f64> {
        let rem = linalg::complement(&self.secret_indices, self.n());
        linalg::submatrix(&self.cov, &rem, &rem)
    }

    pub fn apply(&self, trace: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
        apply_noise(&self.cov, trace, seed)
    }
}

/// Z = X + G with G ~ N(0, cov), deterministic in `seed`.
pub fn apply_noise(cov: &DMatrix<f64>, trace: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
    let n = trace.len();
    linalg::check_square(cov, n)?;
    let noise = Mvn::zero_mean(cov.clone())?;
    let g = sample_mvn(&noise, seed, 1).pop().expect("one draw");
    Ok(trace + g)
}

fn check_budget(secret: &SecretSet, budget: &UtilityBudget) -> Result<()> {
    if budget.n != secret.n() {
        return Err(Error::DimensionMismatch { expected: secret.n(), found: budget.n });
    }
    Ok(())
}

/// Independent noise of variance o_t everywhere.
pub fn uniform_baseline(secret: &SecretSet, budget: &UtilityBudget) -> Result<NoiseMechanism> {
    check_budget(secret, budget)?;
    let cov = DMatrix::identity(budget.n, budget.n) * budget.o_t;
    NoiseMechanism::new(cov, secret.indices().to_vec(), budget.o_t)
}

/// Whole budget spent on the secret coordinates, nothing elsewhere.
pub fn concentrated_baseline(
    secret: &SecretSet,
    budget: &UtilityBudget,
) -> Result<NoiseMechanism> {
    check_budget(secret, budget)?;
    let v = budget.total() / secret.len() as f64;
    let mut cov = DMatrix::zeros(budget.n, budget.n);
    for &i in secret.indices() {
        cov[(i, i)] = v;
    }
    NoiseMechanism::new(cov, secret.indices().to_vec(), v)
}

/// Secret indices as recorded in a mechanism file.
#[derive(Debug, Clone, PartialEq)]
pub enum SecretField {
    /// Every index is its own basic secret.
    All,
    List(Vec<usize>),
}

/// Eight mandatory header fields plus optional extra `key: value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismHeader {
    pub n: usize,
    pub secret_indices: SecretField,
    pub sigma_s_sq: f64,
    pub lambda: f64,
    pub radius: f64,
    pub epsilon_bound: f64,
    pub o_t: f64,
    pub kernel: String,
    pub extra: Vec<(String, String)>,
}

impl MechanismHeader {
    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// A noise covariance with its header, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismFile {
    pub header: MechanismHeader,
    pub cov: DMatrix<f64>,
}

const KEYS: [&str; 8] =
    ["n", "secret_indices", "sigma_s_sq", "lambda", "radius", "epsilon_bound", "o_t", "kernel"];

impl MechanismFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.header;
        let secret = match &h.secret_indices {
            SecretField::All => "all".to_string(),
            SecretField::List(v) => {
                v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
            }
        };
        // f64 Display is the shortest string that parses back to the same value
        let values = [
            h.n.to_string(),
            secret,
            format_real(h.sigma_s_sq),
            format_real(h.lambda),
            format_real(h.radius),
            format_real(h.epsilon_bound),
            format_real(h.o_t),
            h.kernel.clone(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(w, "# {k}: {v}")?;
        }
        for (k, v) in &h.extra {
            if k.contains(':') || v.contains('\n') {
                return Err(invalid(format!("header entry `{k}` cannot be serialized")));
            }
            writeln!(w, "# {k}: {v}")?;
        }
        let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.cov.nrows() {
            cw.write_record(self.cov.row(i).iter().map(|&x| format_real(x)))?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut header_lines = Vec::new();
        let mut body = String::new();
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("bad header line `{}`", line.trim())))?;
                header_lines.push((k.trim().to_string(), v.trim().to_string()));
            } else {
                body.push_str(&line);
                reader.read_to_string(&mut body)?;
                break;
            }
        }
        if header_lines.len() < KEYS.len() {
            return Err(Error::Parse(format!(
                "mechanism header has {} lines, need {}",
                header_lines.len(),
                KEYS.len()
            )));
        }
        for (want, (got, _)) in KEYS.iter().zip(&header_lines) {
            if want != got {
                return Err(Error::Parse(format!("expected header key `{want}`, found `{got}`")));
            }
        }
        let val = |i: usize| header_lines[i].1.as_str();
        let num = |i: usize| -> Result<f64> {
            val(i).parse().map_err(|_| Error::Parse(format!("{}: `{}`", KEYS[i], val(i))))
        };
        let n: usize =
            val(0).parse().map_err(|_| Error::Parse(format!("n: `{}`", val(0))))?;
        let secret_indices = if val(1) == "all" {
            SecretField::All
        } else {
            SecretField::List(
                val(1)
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse(format!("secret_indices: `{}`", val(1))))?,
            )
        };
        let header = MechanismHeader {
            n,
            secret_indices,
            sigma_s_sq: num(2)?,
            lambda: num(3)?,
            radius: num(4)?,
            epsilon_bound: num(5)?,
            o_t: num(6)?,
            kernel: val(7).to_string(),
            extra: header_lines[KEYS.len()..].to_vec(),
        };
        let mut rows = Vec::with_capacity(n * n);
        let mut count = 0;
        let mut cr = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
        for rec in cr.records() {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: rec.len() });
            }
            for f in rec.iter() {
                rows.push(
                    f.trim().parse::<f64>().map_err(|_| Error::Parse(format!("entry `{f}`")))?,
                );
            }
            count += 1;
        }
        if count != n {
            return Err(Error::DimensionMismatch { expected: n, found: count });
        }
        let cov = DMatrix::from_row_slice(n, n, &rows);
        Ok(Self { header, cov })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }

    /// The structured mechanism, when the header names explicit secret indices.
    pub fn noise_mechanism(&self) -> Result<NoiseMechanism> {
        match &self.header.secret_indices {
            SecretField::List(idx) => {
                NoiseMechanism::new(self.cov.clone(), idx.clone(), self.header.sigma_s_sq)
            }
            SecretField::All => Err(invalid("merged all-secret mechanism has no block structure")),
        }
    }
}
