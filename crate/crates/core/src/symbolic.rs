//! Interval-valued reference signatures, enrollment and verification.
//!
//! A user's model keeps only the indices of the user's selected features,
//! the normalization fitted on the training signatures, and one interval
//! vector per cluster of training signatures: `[mean − α·σ, mean + α·σ]`
//! per selected feature. A probe is verified by counting how many of its
//! selected features fall inside the intervals of the best-matching
//! cluster.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::SignatureSample;
use crate::error::{Error, Result};
use crate::fcm::{fuzzy_c_means, harden, FcmParams};
use crate::seed::{derive_seed, hash_str};
use crate::spectral::{select_user_features, SelectionParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInterval {
    pub cluster_id: usize,
    pub member_count: usize,
    /// `[lower, upper]` per selected feature.
    pub intervals: Vec<[f64; 2]>,
}

impl ReferenceInterval {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.intervals.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }
}

/// Builds the interval reference of one cluster (rows = member samples,
/// columns = selected features) using the population standard deviation.
pub fn build_reference(samples: &DMatrix<f64>, alpha: f64) -> Result<ReferenceInterval> {
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::EmptyCluster);
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let intervals = samples
        .column_iter()
        .map(|col| {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let half = alpha * var.sqrt();
            [mean - half, mean + half]
        })
        .collect();
    Ok(ReferenceInterval {
        cluster_id: 0,
        member_count: n,
        intervals,
    })
}

/// Number of probe values inside their (closed) intervals.
pub fn acceptance_count(probe: &[f64], reference: &ReferenceInterval) -> Result<usize> {
    if probe.len() != reference.intervals.len() {
        return Err(Error::Contract(format!(
            "probe has {} selected features, reference has {}",
            probe.len(),
            reference.intervals.len()
        )));
    }
    Ok(probe
        .iter()
        .zip(&reference.intervals)
        .filter(|(t, [lo, hi])| *t >= lo && *t <= hi)
        .count())
}

/// Smallest acceptance count that passes threshold `tau` (a fraction of
/// `d`): `⌈tau·d⌉`, computed with a tolerance so that e.g. 0.3·10 gives 3.
pub fn required_count(tau: f64, d: usize) -> usize {
    let raw = tau * d as f64;
    let c = (raw - 1e-9 * raw.abs().max(1.0)).ceil();
    if c <= 0.0 {
        0
    } else {
        c as usize
    }
}

/// Per-feature affine normalization fitted on a user's training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Mean and population standard deviation per column; zero spread maps
    /// to scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let m = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mu = col.sum() / m;
            let sd = (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m).sqrt();
            mean.push(mu);
            scale.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Normalization { mean, scale }
    }

    pub fn feature_count(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j])
    }

    pub fn apply_one(&self, feature: usize, value: f64) -> f64 {
        (value - self.mean[feature]) / self.scale[feature]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub user_id: String,
    pub selected_indices: Vec<usize>,
    pub normalization: Normalization,
    pub alpha: f64,
    pub tau: f64,
    pub references: Vec<ReferenceInterval>,
}

impl UserModel {
    /// Number of selected features.
    pub fn d(&self) -> usize {
        self.selected_indices.len()
    }

    /// Normalized probe values on the selected features.
    pub fn project(&self, features: &[f64]) -> Result<Vec<f64>> {
        let k = self.normalization.feature_count();
        if features.len() != k {
            return Err(Error::Contract(format!(
                "probe has {} features, model of user {} expects {k}",
                features.len(),
                self.user_id
            )));
        }
        Ok(self
            .selected_indices
            .iter()
            .map(|&j| self.normalization.apply_one(j, features[j]))
            .collect())
    }

    /// Best acceptance count over the references and the cluster achieving
    /// it (first on ties), plus the per-cluster counts.
    pub fn score(&self, features: &[f64]) -> Result<(usize, usize, Vec<usize>)> {
        let probe = self.project(features)?;
        let counts = self
            .references
            .iter()
            .map(|r| acceptance_count(&probe, r))
            .collect::<Result<Vec<_>>>()?;
        let (best, &count) = counts
            .iter()
            .enumerate()
            .fold((0, &0), |acc, (i, c)| if *c > *acc.1 { (i, c) } else { acc });
        let best_cluster = self.references.get(best).map_or(0, |r| r.cluster_id);
        Ok((count, best_cluster, counts))
    }

    /// Checks the structural invariants of a model.
    pub fn validate(&self) -> Result<()> {
        let corrupt = |m: String| Err(Error::Contract(format!("model of user {}: {m}", self.user_id)));
        let k = self.normalization.feature_count();
        if self.normalization.scale.len() != k {
            return corrupt("normalization mean and scale differ in length".into());
        }
        if self.normalization.scale.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.normalization.mean.iter().any(|m| !m.is_finite())
        {
            return corrupt("normalization has a non-finite mean or non-positive scale".into());
        }
        if self.selected_indices.is_empty() {
            return corrupt("no selected features".into());
        }
        let mut seen = vec![false; k];
        for &j in &self.selected_indices {
            if j >= k {
                return corrupt(format!("selected feature {j} out of range (K = {k})"));
            }
            if std::mem::replace(&mut seen[j], true) {
                return corrupt(format!("selected feature {j} repeated"));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return corrupt(format!("alpha {} is not a finite non-negative number", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return corrupt(format!("tau {} outside [0, 1]", self.tau));
        }
        if self.references.is_empty() {
            return corrupt("no reference signatures".into());
        }
        for r in &self.references {
            if r.intervals.len() != self.selected_indices.len() {
                return corrupt(format!(
                    "reference {} has {} intervals for {} selected features",
                    r.cluster_id,
                    r.intervals.len(),
                    self.selected_indices.len()
                ));
            }
            if let Some([lo, hi]) = r
                .intervals
                .iter()
                .find(|[lo, hi]| !(lo <= hi && lo.is_finite() && hi.is_finite()))
            {
                return corrupt(format!("reference {} has interval [{lo}, {hi}]", r.cluster_id));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrollParams {
    pub selection: SelectionParams,
    /// Clusters per user; `None` picks 3 when there are at least 15
    /// training signatures and 1 otherwise.
    pub clusters: Option<usize>,
    pub fuzzifier: f64,
    pub fcm_tol: f64,
    pub fcm_max_iter: usize,
    pub alpha: f64,
    pub tau: f64,
    /// Half-width given to zero-width intervals (0 keeps point intervals).
    pub interval_epsilon: f64,
    pub seed: u64,
}

impl Default for EnrollParams {
    fn default() -> Self {
        EnrollParams {
            selection: SelectionParams::default(),
            clusters: None,
            fuzzifier: 2.0,
            fcm_tol: 1e-6,
            fcm_max_iter: 300,
            alpha: 2.0,
            tau: 0.5,
            interval_epsilon: 0.0,
            seed: 0,
        }
    }
}

impl EnrollParams {
    pub fn cluster_count(&self, training: usize) -> usize {
        self.clusters
            .unwrap_or(if training >= 15 { 3 } else { 1 })
    }
}

/// Builds a user's model from genuine training signatures.
///
/// Normalization is fitted on the training set, features are selected on
/// the normalized data, the training set restricted to those features is
/// clustered with fuzzy C-means, and every non-empty hardened cluster
/// becomes one interval reference.
pub fn enroll_user(user_id: &str, train: &[&SignatureSample], params: &EnrollParams) -> Result<UserModel> {
    let fail = |message: String| Error::Enrollment {
        user: user_id.to_string(),
        message,
    };
    let n = train.len();
    let clusters = params.cluster_count(n);
    if n < 2 || n < clusters {
        return Err(fail(format!(
            "{n} training signatures, need at least {}",
            clusters.max(2)
        )));
    }
    if !(0.0..=1.0).contains(&params.tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {}", params.tau)));
    }
    if params.interval_epsilon.is_nan() || params.interval_epsilon < 0.0 {
        return Err(Error::Config("interval epsilon must be >= 0".into()));
    }
    let k = train[0].features.len();
    if let Some(s) = train.iter().find(|s| s.features.len() != k) {
        return Err(fail(format!(
            "sample {} has {} features, expected {k}",
            s.sample_id,
            s.features.len()
        )));
    }
    let raw = DMatrix::from_fn(n, k, |i, j| train[i].features[j]);
    let normalization = Normalization::fit(&raw);
    let z = normalization.apply(&raw);

    let selection = select_user_features(&z, &params.selection)?;
    let selected = selection.indices;
    let projected = z.select_columns(&selected);

    let fcm = FcmParams {
        clusters,
        fuzzifier: params.fuzzifier,
        tol: params.fcm_tol,
        max_iter: params.fcm_max_iter,
    };
    let seed = derive_seed(params.seed, "fcm", hash_str(user_id));
    let partition = fuzzy_c_means(&projected, &fcm, seed)?;
    let hard = harden(&partition);

    let mut references = Vec::new();
    for cluster in 0..clusters {
        let members: Vec<usize> = (0..n).filter(|&i| hard.assignments[i] == cluster).collect();
        if members.is_empty() {
            continue;
        }
        let mut reference = build_reference(&projected.select_rows(&members), params.alpha)?;
        reference.cluster_id = cluster;
        if params.interval_epsilon > 0.0 {
            for iv in &mut reference.intervals {
                if iv[0] == iv[1] {
                    iv[0] -= params.interval_epsilon;
                    iv[1] += params.interval_epsilon;
                }
            }
        }
        references.push(reference);
    }

    Ok(UserModel {
        user_id: user_id.to_string(),
        selected_indices: selected,
        normalization,
        alpha: params.alpha,
        tau: params.tau,
        references,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub acceptance_count: usize,
    pub d: usize,
    pub best_cluster: usize,
    pub per_cluster_counts: Vec<usize>,
    pub required: usize,
    pub accepted: bool,
    pub tau_used: f64,
}

/// Verifies a probe against a user's model; `tau` overrides the model's
/// stored threshold. Accepts when the best acceptance count reaches
/// `⌈tau·d⌉`.
pub fn verify(features: &[f64], model: &UserModel, tau: Option<f64>) -> Result<VerificationResult> {
    let tau = tau.unwrap_or(model.tau);
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    let (count, best_cluster, per_cluster_counts) = model.score(features)?;
    let d = model.d();
    let required = required_count(tau, d);
    Ok(VerificationResult {
        acceptance_count: count,
        d,
        best_cluster,
        per_cluster_counts,
        required,
        accepted: count >= required,
        tau_used: tau,
    })
}

/// Looks up the claimed user's model and verifies the probe.
pub fn verify_claim<'a, I>(probe: &SignatureSample, models: I, tau: Option<f64>) -> Result<VerificationResult>
where
    I: IntoIterator<Item = &'a UserModel>,
{
    let model = models
        .into_iter()
        .find(|m| m.user_id == probe.user_id)
        .ok_or_else(|| Error::UnknownUser(probe.user_id.clone()))?;
    verify(&probe.features, model, tau)
}
