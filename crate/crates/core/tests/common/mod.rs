//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the algorithms under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sigsel_core::dataset::{Dataset, Label, SignatureSample, TrialSplit};
use sigsel_core::symbolic::UserModel;

/// Thresholds of the miniature sweep, in twentieths: 0.1, 0.3, 0.5, 0.7, 0.9.
pub const MINI_GRID: [usize; 5] = [2, 6, 10, 14, 18];

/// Three users with six genuine signatures and two forgeries each, eight
/// features, values on a coarse lattice so boundary cases occur.
pub fn miniature() -> Dataset {
    let mut samples = Vec::new();
    for u in 0..3u64 {
        for s in 0..8u64 {
            let label = if s < 6 { Label::Genuine } else { Label::SkilledForgery };
            let features = (0..8u64)
                .map(|j| (((u * 7 + s * 3 + j * 5 + s * j) % 9) as f64) / 2.0 + u as f64)
                .collect();
            samples.push(SignatureSample {
                user_id: format!("w{u}"),
                sample_id: s,
                label,
                features,
            });
        }
    }
    Dataset::new(samples, 8).unwrap()
}

/// FAR and FRR at thresholds `k / 20` recomputed decision by decision from
/// the raw training data of single-cluster models: fit the z-score, form
/// `mean ± alpha·sd` intervals on the models' selected features, count hits
/// and compare with the exact integer threshold.
pub fn enumerate_curve(
    ds: &Dataset,
    split: &TrialSplit,
    models: &[UserModel],
    alpha: f64,
    grid: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let mut far = Vec::new();
    let mut frr = Vec::new();
    for &k in grid {
        let (mut fa, mut fr, mut n_f, mut n_g) = (0usize, 0usize, 0usize, 0usize);
        for (us, model) in split.users.iter().zip(models) {
            let sel = &model.selected_indices;
            let train: Vec<&Vec<f64>> = us.train.iter().map(|&i| &ds.sample(i).features).collect();
            let n = train.len() as f64;
            let intervals: Vec<(f64, f64, f64, f64)> = sel
                .iter()
                .map(|&j| {
                    let mean = train.iter().map(|f| f[j]).sum::<f64>() / n;
                    let sd = (train.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
                    let scale = if sd > 0.0 { sd } else { 1.0 };
                    let zs: Vec<f64> = train.iter().map(|f| (f[j] - mean) / scale).collect();
                    let zm = zs.iter().sum::<f64>() / n;
                    let zsd = (zs.iter().map(|z| (z - zm).powi(2)).sum::<f64>() / n).sqrt();
                    (mean, scale, zm - alpha * zsd, zm + alpha * zsd)
                })
                .collect();
            let hits = |f: &Vec<f64>| {
                sel.iter()
                    .zip(&intervals)
                    .filter(|(&j, &(mean, scale, lo, hi))| {
                        let z = (f[j] - mean) / scale;
                        lo <= z && z <= hi
                    })
                    .count()
            };
            let need = required_exact(k, 20, sel.len());
            for &i in &us.test_genuine {
                n_g += 1;
                fr += usize::from(hits(&ds.sample(i).features) < need);
            }
            for &i in &us.test_forgery {
                n_f += 1;
                fa += usize::from(hits(&ds.sample(i).features) >= need);
            }
        }
        far.push(fa as f64 / n_f as f64);
        frr.push(fr as f64 / n_g as f64);
    }
    (far, frr)
}

/// Cyclic coordinate descent for `½‖y − X a‖² + λ‖a‖₁`.
pub fn lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let k = x.ncols();
    let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm_squared()).collect();
    let mut a = DVector::<f64>::zeros(k);
    let mut r = y.clone();
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for j in 0..k {
            if norms[j] == 0.0 {
                continue;
            }
            let rho = x.column(j).dot(&r) + norms[j] * a[j];
            let new = soft(rho, lambda) / norms[j];
            let delta = new - a[j];
            if delta != 0.0 {
                r.axpy(-delta, &x.column(j), 1.0);
                a[j] = new;
                change = change.max(delta.abs());
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    a
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Support of a coefficient vector, ignoring entries below `tol`.
pub fn support(a: &DVector<f64>, tol: f64) -> Vec<usize> {
    (0..a.len()).filter(|&j| a[j].abs() > tol).collect()
}

pub fn centred_columns(mut x: DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows() as f64;
    for mut c in x.column_iter_mut() {
        let mean = c.sum() / m;
        c.add_scalar_mut(-mean);
    }
    x
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, kept local so the oracle does not share sampling code
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random symmetric nonnegative weight matrix with zero diagonal and
/// every vertex of positive degree. Roughly a third of the graphs are
/// built from two or three disconnected blocks.
pub fn random_weight_matrix(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let blocks = if m >= 6 && rng.random_bool(0.33) { rng.random_range(2..=3) } else { 1 };
    let block_of = |i: usize| i * blocks / m;
    let density: f64 = rng.random_range(0.15..0.8);
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            if block_of(i) == block_of(j) && rng.random_bool(density) {
                let v = rng.random_range(0.01..2.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    // a path inside each block keeps every degree positive
    for i in 1..m {
        if block_of(i) == block_of(i - 1) && w[(i, i - 1)] == 0.0 {
            let v = rng.random_range(0.01..2.0);
            w[(i, i - 1)] = v;
            w[(i - 1, i)] = v;
        }
    }
    w
}

/// Partition of the rows into two non-empty groups minimizing the total
/// within-group sum of squares, by exhaustive enumeration. Returns a label
/// per row with row 0 in group 0.
pub fn best_two_partition(x: &DMatrix<f64>) -> Vec<usize> {
    let m = x.nrows();
    assert!(m <= 20, "exhaustive search limited to 20 points");
    let mut best = (f64::INFINITY, 0u32);
    for mask in 1u32..(1 << (m - 1)) {
        // bit i set: row i + 1 in group 1
        let labels: Vec<usize> = (0..m)
            .map(|i| if i > 0 && mask & (1 << (i - 1)) != 0 { 1 } else { 0 })
            .collect();
        let mut sse = 0.0;
        for g in 0..2 {
            let rows: Vec<usize> = (0..m).filter(|&i| labels[i] == g).collect();
            let mean = rows.iter().fold(DVector::zeros(x.ncols()), |acc: DVector<f64>, &i| {
                acc + x.row(i).transpose()
            }) / rows.len() as f64;
            sse += rows
                .iter()
                .map(|&i| (x.row(i).transpose() - &mean).norm_squared())
                .sum::<f64>();
        }
        if sse < best.0 {
            best = (sse, mask);
        }
    }
    (0..m)
        .map(|i| if i > 0 && best.1 & (1 << (i - 1)) != 0 { 1 } else { 0 })
        .collect()
}

/// Number of points whose label disagrees with `truth`, minimized over
/// the two ways of matching two labels.
pub fn two_label_errors(labels: &[usize], truth: &[usize]) -> usize {
    let direct = labels.iter().zip(truth).filter(|(a, b)| a != b).count();
    direct.min(labels.len() - direct)
}

/// `⌈num·d / den⌉` in integer arithmetic: the acceptance count needed at
/// threshold `num / den`.
pub fn required_exact(num: usize, den: usize, d: usize) -> usize {
    (num * d).div_ceil(den)
}

/// Equal error rate from FAR/FRR pairs: the first sign change of
/// FAR − FRR, linearly interpolated; otherwise the mean of FAR and FRR
/// where they are closest.
pub fn eer_reference(far: &[f64], frr: &[f64]) -> f64 {
    let n = far.len();
    for i in 0..n {
        let g0 = far[i] - frr[i];
        if g0 == 0.0 {
            return far[i];
        }
        if i + 1 < n {
            let g1 = far[i + 1] - frr[i + 1];
            if g1 != 0.0 && (g0 < 0.0) != (g1 < 0.0) {
                let t = g0 / (g0 - g1);
                return far[i] + t * (far[i + 1] - far[i]);
            }
        }
    }
    let mut best = 0;
    for i in 1..n {
        if (far[i] - frr[i]).abs() < (far[best] - frr[best]).abs() {
            best = i;
        }
    }
    0.5 * (far[best] + frr[best])
}
