//! Fuzzy C-means clustering of one user's training signatures.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcmParams {
    pub clusters: usize,
    /// Fuzzifier m > 1.
    pub fuzzifier: f64,
    /// Stop once no centroid moves more than this (Euclidean).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        FcmParams {
            clusters: 3,
            fuzzifier: 2.0,
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzyPartition {
    /// C × M, columns sum to one.
    pub memberships: DMatrix<f64>,
    /// C × d.
    pub centroids: DMatrix<f64>,
    pub fuzzifier: f64,
    /// Objective after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// State handed to an observer after each iteration.
pub struct IterationState<'a> {
    pub iteration: usize,
    pub memberships: &'a DMatrix<f64>,
    pub centroids: &'a DMatrix<f64>,
    pub objective: f64,
}

impl FcmParams {
    fn validate(&self, samples: usize) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::Config("cluster count C must be at least 1".into()));
        }
        if self.clusters > samples {
            return Err(Error::Config(format!(
                "cluster count C = {} exceeds the {samples} samples",
                self.clusters
            )));
        }
        if !(self.fuzzifier > 1.0 && self.fuzzifier.is_finite()) {
            return Err(Error::Config(format!("fuzzifier must exceed 1, got {}", self.fuzzifier)));
        }
        if self.tol.is_nan() || self.tol < 0.0 || self.max_iter == 0 {
            return Err(Error::Config("tolerance must be >= 0 and max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// Random column-stochastic C × M membership matrix; every column is
/// uniform on the probability simplex (normalized exponentials).
pub fn random_memberships(clusters: usize, samples: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DMatrix::from_fn(clusters, samples, |_, _| {
        -rng.random_range(f64::MIN_POSITIVE..1.0f64).ln()
    });
    for mut col in u.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    u
}

/// Fuzzy C-means on the rows of `x` from a seeded random membership matrix.
pub fn fuzzy_c_means(x: &DMatrix<f64>, params: &FcmParams, seed: u64) -> Result<FuzzyPartition> {
    params.validate(x.nrows())?;
    let init = random_memberships(params.clusters, x.nrows(), seed);
    fuzzy_c_means_observed(x, params, init, |_| {})
}

/// Fuzzy C-means from an explicit initial membership matrix.
pub fn fuzzy_c_means_from(
    x: &DMatrix<f64>,
    params: &FcmParams,
    init: DMatrix<f64>,
) -> Result<FuzzyPartition> {
    fuzzy_c_means_observed(x, params, init, |_| {})
}

/// As [`fuzzy_c_means_from`], calling `observe` after every iteration.
pub fn fuzzy_c_means_observed<F>(
    x: &DMatrix<f64>,
    params: &FcmParams,
    init: DMatrix<f64>,
    mut observe: F,
) -> Result<FuzzyPartition>
where
    F: FnMut(&IterationState<'_>),
{
    let (m, _) = x.shape();
    params.validate(m)?;
    let c = params.clusters;
    if init.shape() != (c, m) {
        return Err(Error::Contract(format!(
            "initial memberships are {}x{}, expected {c}x{m}",
            init.nrows(),
            init.ncols()
        )));
    }
    let fz = params.fuzzifier;
    let mut u = init;
    let mut v = centroids(x, &u, fz);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        u = memberships(x, &v, fz);
        let next = centroids(x, &u, fz);
        let shift = (0..c)
            .map(|i| (next.row(i) - v.row(i)).norm())
            .fold(0.0, f64::max);
        let obj = objective(x, &u, &v, fz);
        trace.push(obj);
        observe(&IterationState {
            iteration: iterations,
            memberships: &u,
            centroids: &v,
            objective: obj,
        });
        v = next;
        if shift < params.tol {
            converged = true;
            break;
        }
    }
    // final memberships consistent with the final centroids
    u = memberships(x, &v, fz);

    Ok(FuzzyPartition {
        memberships: u,
        centroids: v,
        fuzzifier: fz,
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn centroids(x: &DMatrix<f64>, u: &DMatrix<f64>, fz: f64) -> DMatrix<f64> {
    let (c, m) = u.shape();
    let mut v = DMatrix::zeros(c, x.ncols());
    for i in 0..c {
        let mut total = 0.0;
        for j in 0..m {
            let w = u[(i, j)].powf(fz);
            total += w;
            for (t, &xv) in x.row(j).iter().enumerate() {
                v[(i, t)] += w * xv;
            }
        }
        if total > 0.0 {
            v.row_mut(i).scale_mut(1.0 / total);
        }
    }
    v
}

fn memberships(x: &DMatrix<f64>, v: &DMatrix<f64>, fz: f64) -> DMatrix<f64> {
    let c = v.nrows();
    let m = x.nrows();
    let exponent = 1.0 / (fz - 1.0);
    let mut u = DMatrix::zeros(c, m);
    let mut d2 = vec![0.0; c];
    for j in 0..m {
        for (i, d) in d2.iter_mut().enumerate() {
            *d = (x.row(j) - v.row(i)).norm_squared();
        }
        if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
            u[(hit, j)] = 1.0;
            continue;
        }
        for i in 0..c {
            // (d_i / d_k)^(2/(m-1)) with squared distances
            let s: f64 = d2.iter().map(|&dk| (d2[i] / dk).powf(exponent)).sum();
            u[(i, j)] = 1.0 / s;
        }
    }
    u
}

/// `J = Σ_i Σ_j u_ij^m ‖x_j − v_i‖²`.
pub fn objective(x: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>, fz: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            total += u[(i, j)].powf(fz) * (x.row(j) - v.row(i)).norm_squared();
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hardening {
    /// Cluster of every sample.
    pub assignments: Vec<usize>,
    /// Clusters that received no sample.
    pub empty: Vec<usize>,
}

/// Crisp assignment by largest membership; ties go to the lower cluster.
pub fn harden(partition: &FuzzyPartition) -> Hardening {
    harden_memberships(&partition.memberships)
}

pub fn harden_memberships(u: &DMatrix<f64>) -> Hardening {
    let c = u.nrows();
    let assignments: Vec<usize> = u
        .column_iter()
        .map(|col| {
            col.iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > col[best] { i } else { best })
        })
        .collect();
    let empty = (0..c).filter(|i| !assignments.contains(i)).collect();
    Hardening { assignments, empty }
}
