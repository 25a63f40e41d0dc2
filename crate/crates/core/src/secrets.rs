//! Secret sets and discriminative pairs.

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecretKind {
    /// All secret coordinates share one time point.
    Basic,
    /// Secret coordinates span two or more time points.
    Compound,
}

/// Sensitive coordinates of an n-dimensional trace vector together with the radius `r` of the
/// hypotheses to be kept indistinguishable.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretSet {
    indices: Vec<usize>,
    /// time group of each entry of `indices`, numbered by first appearance
    groups: Vec<usize>,
    unique_times: usize,
    radius: f64,
    n: usize,
}

impl SecretSet {
    /// `timestamps[k]` is the time of `indices[k]`; coordinates with equal timestamps belong to
    /// one (multi-dimensional) location.
    pub fn new(indices: Vec<usize>, timestamps: &[f64], radius: f64, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("secret set is empty"));
        }
        if timestamps.len() != indices.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                found: timestamps.len(),
            });
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!("secret radius must be positive, got {radius}")));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(invalid(format!("secret index {i} outside trace of length {n}")));
            }
            if seen[i] {
                return Err(invalid(format!("secret index {i} repeated")));
            }
            seen[i] = true;
        }
        if indices.len() >= n {
            return Err(invalid("secret set must leave at least one non-secret index"));
        }
        let mut distinct: Vec<f64> = Vec::new();
        let mut groups = Vec::with_capacity(indices.len());
        for &t in timestamps {
            if !t.is_finite() {
                return Err(invalid("secret timestamps must be finite"));
            }
            let g = match distinct.iter().position(|&d| d == t) {
                Some(g) => g,
                None => {
                    distinct.push(t);
                    distinct.len() - 1
                }
            };
            groups.push(g);
        }
        Ok(Self { indices, groups, unique_times: distinct.len(), radius, n })
    }

    /// One scalar coordinate.
    pub fn basic(index: usize, radius: f64, n: usize) -> Result<Self> {
        Self::new(vec![index], &[0.0], radius, n)
    }

    /// Several coordinates observed at a single time, e.g. latitude and longitude of one point.
    pub fn basic_point(indices: Vec<usize>, radius: f64, n: usize) -> Result<Self> {
        let t = vec![0.0; indices.len()];
        Self::new(indices, &t, radius, n)
    }

    /// Scalar coordinates each at its own time.
    pub fn compound(indices: Vec<usize>, radius: f64, n: usize) -> Result<Self> {
        let t: Vec<f64> = (0..indices.len()).map(|k| k as f64).collect();
        Self::new(indices, &t, radius, n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn remainder(&self) -> Vec<usize> {
        linalg::complement(&self.indices, self.n)
    }

    pub fn kind(&self) -> SecretKind {
        if self.unique_times == 1 {
            SecretKind::Basic
        } else {
            SecretKind::Compound
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn unique_times(&self) -> usize {
        self.unique_times
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Positions into [`Self::indices`] grouped by time.
    pub fn time_groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.unique_times];
        for (pos, &g) in self.groups.iter().enumerate() {
            out[g].push(pos);
        }
        out
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!("secret radius must be positive, got {radius}")));
        }
        Ok(Self { radius, ..self.clone() })
    }
}

/// Two hypotheses about the secret coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminativePair {
    pub s_i: DVector<f64>,
    pub s_j: DVector<f64>,
}

/// Radius √S·r of the ball that contains every difference s_i − s_j of a discriminative pair.
pub fn delta_ball_radius(secret: &SecretSet) -> f64 {
    (secret.unique_times as f64).sqrt() * secret.radius
}

/// True iff every per-time sub-vector of the pair differs by at most r.
pub fn is_discriminative_pair(pair: &DiscriminativePair, secret: &SecretSet) -> Result<bool> {
    let m = secret.len();
    for v in [&pair.s_i, &pair.s_j] {
        if v.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: v.len() });
        }
    }
    let r2 = secret.radius * secret.radius;
    for group in secret.time_groups() {
        let d2: f64 = group.iter().map(|&p| (pair.s_i[p] - pair.s_j[p]).powi(2)).sum();
        // a few ulps of slack so exact boundary points stay inside
        if d2 > r2 * (1.0 + 4.0 * f64::EPSILON) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A per-dimension secret and the map from its local indices back to the full trace vector.
#[derive(Debug, Clone)]
pub struct DimensionSecret {
    pub label: String,
    /// `global_indices[k]` is the trace-vector position of local index `k`.
    pub global_indices: Vec<usize>,
    pub secret: SecretSet,
}

impl DimensionSecret {
    pub fn global_secret_indices(&self) -> Vec<usize> {
        self.secret.indices().iter().map(|&k| self.global_indices[k]).collect()
    }
}

/// Splits a secret over a multi-dimensional trace vector into one secret per dimension.
///
/// `dim_labels[i]` names the dimension of trace-vector position `i`. Time grouping carries
/// over, so S counts the distinct times within each dimension.
pub fn split_by_dimension<L: AsRef<str>>(
    secret: &SecretSet,
    dim_labels: &[L],
) -> Result<Vec<DimensionSecret>> {
    if dim_labels.len() != secret.n {
        return Err(invalid(format!(
            "{} dimension labels for a trace vector of length {}",
            dim_labels.len(),
            secret.n
        )));
    }
    let mut labels: Vec<&str> = Vec::new();
    for l in dim_labels {
        let l = l.as_ref();
        if l.is_empty() {
            return Err(invalid("empty dimension label"));
        }
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    let mut out = Vec::new();
    for label in labels {
        let global: Vec<usize> =
            (0..secret.n).filter(|&i| dim_labels[i].as_ref() == label).collect();
        let mut local = Vec::new();
        let mut times = Vec::new();
        for (pos, &gi) in secret.indices.iter().enumerate() {
            if dim_labels[gi].as_ref() == label {
                local.push(global.iter().position(|&g| g == gi).expect("label matches"));
                times.push(secret.groups[pos] as f64);
            }
        }
        if local.is_empty() {
            continue;
        }
        let sub = SecretSet::new(local, &times, secret.radius, global.len())?;
        out.push(DimensionSecret { label: label.to_string(), global_indices: global, secret: sub });
    }
    Ok(out)
}
