//! FAR/FRR threshold sweeps, EER extraction and multi-trial protocol runs.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_trial_split, Dataset, Protocol, TrialSplit};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::spectral::Weighting;
use crate::symbolic::{enroll_user, required_count, EnrollParams, UserModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub points: Vec<CurvePoint>,
}

impl ErrorCurve {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tau", "far", "frr"])?;
        for p in &self.points {
            w.write_record([p.tau.to_string(), p.far.to_string(), p.frr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `tau_min, tau_min + step, ...` up to `tau_max` inclusive.
pub fn tau_grid(tau_min: f64, tau_max: f64, step: f64) -> Result<Vec<f64>> {
    let ordered = tau_min.partial_cmp(&tau_max).is_some_and(|o| o.is_le());
    if step.is_nan() || step <= 0.0 || !ordered || tau_min < 0.0 || tau_max > 1.0 {
        return Err(Error::Config(format!(
            "invalid threshold grid {tau_min}..{tau_max} step {step}"
        )));
    }
    let n = ((tau_max - tau_min) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| {
            // round away accumulated binary error
            let t = tau_min + i as f64 * step;
            (t * 1e12).round() / 1e12
        })
        .collect())
}

/// 0.10, 0.15, ..., 0.90.
pub fn default_tau_grid() -> Vec<f64> {
    tau_grid(0.1, 0.9, 0.05).expect("static grid is valid")
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    if grid.iter().any(|t| !(0.0..=1.0).contains(t)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("threshold grid must be strictly ascending within [0, 1]".into()));
    }
    Ok(())
}

/// Best acceptance count and selected-feature count for every test
/// decision of a trial.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialScores {
    pub genuine: Vec<(usize, usize)>,
    pub forgery: Vec<(usize, usize)>,
}

fn model_lookup(models: &[UserModel]) -> HashMap<&str, &UserModel> {
    models.iter().map(|m| (m.user_id.as_str(), m)).collect()
}

/// Scores every genuine test signature against its own user's model and
/// every forgery against the model of the user it targets.
pub fn score_split(models: &[UserModel], dataset: &Dataset, split: &TrialSplit) -> Result<TrialScores> {
    let lookup = model_lookup(models);
    let mut scores = TrialScores::default();
    for us in &split.users {
        let user_id = &dataset.users()[us.user];
        let model = lookup
            .get(user_id.as_str())
            .ok_or_else(|| Error::UnknownUser(user_id.clone()))?;
        let d = model.d();
        for &i in &us.test_genuine {
            scores.genuine.push((model.score(&dataset.sample(i).features)?.0, d));
        }
        for &i in &us.test_forgery {
            scores.forgery.push((model.score(&dataset.sample(i).features)?.0, d));
        }
    }
    Ok(scores)
}

/// FAR and FRR at every threshold.
pub fn curve_from_scores(scores: &TrialScores, tau_grid: &[f64]) -> Result<ErrorCurve> {
    check_grid(tau_grid)?;
    if scores.genuine.is_empty() || scores.forgery.is_empty() {
        return Err(Error::Contract("a sweep needs genuine and forgery test signatures".into()));
    }
    let points = tau_grid
        .iter()
        .map(|&tau| {
            let accepted = |&&(count, d): &&(usize, usize)| count >= required_count(tau, d);
            let false_accepts = scores.forgery.iter().filter(accepted).count();
            let true_accepts = scores.genuine.iter().filter(accepted).count();
            CurvePoint {
                tau,
                far: false_accepts as f64 / scores.forgery.len() as f64,
                frr: (scores.genuine.len() - true_accepts) as f64 / scores.genuine.len() as f64,
            }
        })
        .collect();
    Ok(ErrorCurve { points })
}

pub fn sweep_thresholds(
    models: &[UserModel],
    dataset: &Dataset,
    split: &TrialSplit,
    tau_grid: &[f64],
) -> Result<ErrorCurve> {
    check_grid(tau_grid)?;
    curve_from_scores(&score_split(models, dataset, split)?, tau_grid)
}

/// Equal error rate: where the linearly interpolated FAR and FRR cross.
/// Without a crossing, `(FAR + FRR) / 2` at the point minimizing
/// `|FAR − FRR|`.
pub fn compute_eer(curve: &ErrorCurve) -> Result<f64> {
    let pts = &curve.points;
    if pts.is_empty() {
        return Err(Error::Contract("cannot compute the EER of an empty curve".into()));
    }
    let gap = |p: &CurvePoint| p.far - p.frr;
    for (i, p) in pts.iter().enumerate() {
        if gap(p) == 0.0 {
            return Ok(p.far);
        }
        if let Some(q) = pts.get(i + 1) {
            let (g0, g1) = (gap(p), gap(q));
            if g0.signum() != g1.signum() && g1 != 0.0 {
                let t = g0 / (g0 - g1);
                return Ok(p.far + t * (q.far - p.far));
            }
        }
    }
    let best = pts
        .iter()
        .min_by(|a, b| gap(a).abs().total_cmp(&gap(b).abs()))
        .expect("nonempty");
    Ok(0.5 * (best.far + best.frr))
}

/// Trains every user of a split on that user's training signatures.
/// Users are enrolled in parallel; the result is in split order.
pub fn enroll_all(dataset: &Dataset, split: &TrialSplit, params: &EnrollParams) -> Result<Vec<UserModel>> {
    split
        .users
        .par_iter()
        .map(|us| {
            let train: Vec<_> = us.train.iter().map(|&i| dataset.sample(i)).collect();
            enroll_user(&dataset.users()[us.user], &train, params)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub trials: usize,
    /// Selected features per user; `None` uses the protocol default.
    pub features: Option<usize>,
    pub enroll: EnrollParams,
    pub tau_grid: Vec<f64>,
    pub master_seed: u64,
    /// Reuse the same training draws for the skilled and random variants
    /// of a protocol within a trial.
    pub shared_training: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            trials: 20,
            features: None,
            enroll: EnrollParams::default(),
            tau_grid: default_tau_grid(),
            master_seed: 0,
            shared_training: false,
        }
    }
}

impl ProtocolConfig {
    pub fn trial_seed(&self, protocol: Protocol, trial: usize) -> u64 {
        let stream = if self.shared_training {
            "trial".to_string()
        } else {
            format!("trial/{protocol}")
        };
        derive_seed(self.master_seed, &stream, trial as u64)
    }

    pub fn enroll_params(&self, protocol: Protocol, trial: usize) -> EnrollParams {
        let mut p = self.enroll.clone();
        p.selection.features = self.features.unwrap_or_else(|| protocol.default_features());
        p.seed = derive_seed(self.master_seed, "enroll", trial as u64);
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub features: usize,
    pub clusters: Option<usize>,
    pub alpha: f64,
    pub neighbors: usize,
    pub eigenvectors: usize,
    pub weighting: Weighting,
    pub fuzzifier: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub shared_training: bool,
    pub tau_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub trial_seed: u64,
    pub eer: f64,
    pub curve: ErrorCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub trials: Vec<TrialReport>,
    pub mean_eer: f64,
    /// FAR and FRR averaged over trials at every threshold.
    pub mean_curve: ErrorCurve,
    pub params: ParamsEcho,
}

impl ProtocolReport {
    pub fn trial_eers(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.eer).collect()
    }
}

/// Runs one trial: split, enroll everyone, sweep, EER.
pub fn run_trial(dataset: &Dataset, protocol: Protocol, config: &ProtocolConfig, trial: usize) -> Result<TrialReport> {
    let trial_seed = config.trial_seed(protocol, trial);
    let split = make_trial_split(dataset, protocol, trial_seed)?;
    let models = enroll_all(dataset, &split, &config.enroll_params(protocol, trial))?;
    let curve = sweep_thresholds(&models, dataset, &split, &config.tau_grid)?;
    let eer = compute_eer(&curve)?;
    Ok(TrialReport {
        trial,
        trial_seed,
        eer,
        curve,
    })
}

pub fn run_protocol(dataset: &Dataset, protocol: Protocol, config: &ProtocolConfig) -> Result<ProtocolReport> {
    if config.trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    check_grid(&config.tau_grid)?;
    let features = config.features.unwrap_or_else(|| protocol.default_features());
    if features > dataset.feature_count() {
        return Err(Error::Config(format!(
            "cannot select {features} of {} features",
            dataset.feature_count()
        )));
    }
    let trials = (0..config.trials)
        .map(|t| run_trial(dataset, protocol, config, t))
        .collect::<Result<Vec<_>>>()?;
    let n = trials.len() as f64;
    let mean_eer = trials.iter().map(|t| t.eer).sum::<f64>() / n;
    let mean_curve = ErrorCurve {
        points: config
            .tau_grid
            .iter()
            .enumerate()
            .map(|(i, &tau)| CurvePoint {
                tau,
                far: trials.iter().map(|t| t.curve.points[i].far).sum::<f64>() / n,
                frr: trials.iter().map(|t| t.curve.points[i].frr).sum::<f64>() / n,
            })
            .collect(),
    };
    let e = &config.enroll;
    Ok(ProtocolReport {
        protocol,
        trials,
        mean_eer,
        mean_curve,
        params: ParamsEcho {
            features,
            clusters: e.clusters,
            alpha: e.alpha,
            neighbors: e.selection.neighbors,
            eigenvectors: e.selection.eigenvectors,
            weighting: e.selection.weighting,
            fuzzifier: e.fuzzifier,
            trials: config.trials,
            master_seed: config.master_seed,
            shared_training: config.shared_training,
            tau_grid: config.tau_grid.clone(),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSweepRow {
    pub d: usize,
    pub mean_eer: f64,
}

/// Mean EER of a protocol for each number of selected features.
pub fn sweep_feature_counts(
    dataset: &Dataset,
    protocol: Protocol,
    d_values: &[usize],
    config: &ProtocolConfig,
) -> Result<Vec<FeatureSweepRow>> {
    if let Some(&d) = d_values.iter().find(|&&d| d == 0 || d > dataset.feature_count()) {
        return Err(Error::Config(format!(
            "feature count {d} outside 1..={}",
            dataset.feature_count()
        )));
    }
    d_values
        .iter()
        .map(|&d| {
            let cfg = ProtocolConfig {
                features: Some(d),
                ..config.clone()
            };
            Ok(FeatureSweepRow {
                d,
                mean_eer: run_protocol(dataset, protocol, &cfg)?.mean_eer,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[FeatureSweepRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["d", "mean_eer"])?;
    for r in rows {
        w.write_record([r.d.to_string(), r.mean_eer.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
