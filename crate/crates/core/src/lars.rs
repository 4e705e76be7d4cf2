//! Least angle regression with the lasso modification.
//!
//! Traces the solution path of `min_a ½‖y − X a‖² + λ‖a‖₁` from `λ = max|Xᵀy|`
//! downwards, one knot per change of the active set. No intercept is fitted:
//! callers centre `X` and `y`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathEvent {
    Enter(usize),
    Drop(usize),
}

/// Path point where the active set changes.
#[derive(Clone, Debug, PartialEq)]
pub struct LarsKnot {
    /// Penalty at this point: the common absolute correlation of the
    /// active features with the residual.
    pub lambda: f64,
    pub coefficients: DVector<f64>,
    pub active: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LarsPath {
    pub knots: Vec<LarsKnot>,
    pub events: Vec<PathEvent>,
}

impl LarsPath {
    /// Coefficients at the end of the path.
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.knots.last().expect("path has an initial knot").coefficients
    }

    pub fn lambda(&self) -> f64 {
        self.knots.last().expect("path has an initial knot").lambda
    }

    /// Features in the order they first entered the active set.
    pub fn entry_order(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for e in &self.events {
            if let PathEvent::Enter(j) = *e {
                if !seen.contains(&j) {
                    seen.push(j);
                }
            }
        }
        seen
    }
}

const STEP_EPS: f64 = 1e-12;

/// Runs LARS-lasso until the segment on which `max_active` features are
/// active ends, i.e. just before another feature would join, or until the
/// least-squares fit is reached. Columns with (numerically) zero norm never
/// enter; a column that is linearly dependent on the active set is skipped.
pub fn lars_path(x: &DMatrix<f64>, y: &DVector<f64>, max_active: usize) -> Result<LarsPath> {
    let (m, k) = x.shape();
    if y.len() != m {
        return Err(Error::Contract(format!(
            "target has {} entries but the design has {m} rows",
            y.len()
        )));
    }
    if max_active == 0 {
        return Err(Error::Config("LARS needs at least one active feature".into()));
    }

    let gram = x.transpose() * x;
    let xty = x.transpose() * y;
    let max_norm = (0..k).map(|j| gram[(j, j)]).fold(0.0, f64::max);
    let mut eligible: Vec<bool> = (0..k)
        .map(|j| gram[(j, j)] > 1e-12 * max_norm.max(f64::MIN_POSITIVE))
        .collect();

    let mut beta = DVector::<f64>::zeros(k);
    let mut active: Vec<usize> = Vec::new();
    let mut events = Vec::new();
    let correlations = |beta: &DVector<f64>| &xty - &gram * beta;
    let max_corr = |c: &DVector<f64>, eligible: &[bool]| {
        (0..k)
            .filter(|&j| eligible[j])
            .map(|j| c[j].abs())
            .fold(0.0, f64::max)
    };

    let c0 = correlations(&beta);
    let lambda0 = max_corr(&c0, &eligible);
    let mut knots = vec![LarsKnot {
        lambda: lambda0,
        coefficients: beta.clone(),
        active: Vec::new(),
    }];
    let corr_floor = 1e-13 * xty.amax().max(1e-300);
    if lambda0 <= corr_floor {
        return Ok(LarsPath { knots, events });
    }

    let first = (0..k)
        .filter(|&j| eligible[j])
        .max_by(|&a, &b| c0[a].abs().total_cmp(&c0[b].abs()).then(b.cmp(&a)))
        .expect("some column is eligible when lambda0 > 0");
    active.push(first);
    events.push(PathEvent::Enter(first));

    let mut just_dropped: Option<usize> = None;
    let max_steps = 8 * (k + m) + 16;
    for _ in 0..max_steps {
        if active.is_empty() {
            break;
        }
        let c = correlations(&beta);
        let big_c = max_corr(&c, &eligible);
        if big_c <= corr_floor {
            break;
        }
        let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| c[j].signum()));
        let ga = DMatrix::from_fn(active.len(), active.len(), |r, s| gram[(active[r], active[s])]);
        let chol = Cholesky::new(ga.clone()).filter(|ch| {
            let l = ch.l_dirty();
            (0..active.len()).all(|i| l[(i, i)] * l[(i, i)] > 1e-10 * ga[(i, i)])
        });
        let Some(chol) = chol else {
            // newest feature is collinear with the active set
            let j = active.pop().expect("nonempty");
            eligible[j] = false;
            if matches!(events.last(), Some(PathEvent::Enter(e)) if *e == j) {
                events.pop();
            }
            continue;
        };
        let w_raw = chol.solve(&signs);
        let norm = 1.0 / signs.dot(&w_raw).sqrt();
        let w = w_raw * norm;
        // a_j = x_jᵀ u with u = X_A w
        let mut a = DVector::<f64>::zeros(k);
        for (r, &j) in active.iter().enumerate() {
            a += gram.column(j) * w[r];
        }

        let mut gamma = big_c / norm;
        let mut joiner: Option<usize> = None;
        for j in 0..k {
            if !eligible[j] || active.contains(&j) {
                continue;
            }
            // A feature that just left is still tied with the active set;
            // only its later crossing may bring it back.
            let tied = just_dropped == Some(j);
            for (num, den) in [(big_c - c[j], norm - a[j]), (big_c + c[j], norm + a[j])] {
                if tied && num <= 1e-9 * big_c {
                    continue;
                }
                let g = num / den;
                if g.is_finite() && g > STEP_EPS && g < gamma {
                    gamma = g;
                    joiner = Some(j);
                }
            }
        }
        let mut dropper: Option<(usize, f64)> = None;
        for (r, &j) in active.iter().enumerate() {
            let g = -beta[j] / w[r];
            if g.is_finite() && g > STEP_EPS && g < dropper.map_or(gamma, |d| d.1) {
                dropper = Some((r, g));
            }
        }

        if let Some((r, g)) = dropper {
            for (s, &j) in active.iter().enumerate() {
                beta[j] += g * w[s];
            }
            let j = active.remove(r);
            beta[j] = 0.0;
            events.push(PathEvent::Drop(j));
            just_dropped = Some(j);
            knots.push(knot(&xty, &gram, &beta, &active, &eligible));
            continue;
        }

        for (s, &j) in active.iter().enumerate() {
            beta[j] += gamma * w[s];
        }
        just_dropped = None;
        knots.push(knot(&xty, &gram, &beta, &active, &eligible));
        match joiner {
            Some(j) if active.len() < max_active => {
                active.push(j);
                events.push(PathEvent::Enter(j));
            }
            _ => break,
        }
    }
    Ok(LarsPath { knots, events })
}

fn knot(
    xty: &DVector<f64>,
    gram: &DMatrix<f64>,
    beta: &DVector<f64>,
    active: &[usize],
    eligible: &[bool],
) -> LarsKnot {
    let c = xty - gram * beta;
    let lambda = c
        .iter()
        .zip(eligible)
        .filter(|(_, &e)| e)
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max);
    let mut active = active.to_vec();
    active.sort_unstable();
    LarsKnot {
        lambda,
        coefficients: beta.clone(),
        active,
    }
}

/// Coefficient vector at the end of the segment with `d` active features.
pub fn lars_regression(x: &DMatrix<f64>, y: &DVector<f64>, d: usize) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::Config("number of active features d must be at least 1".into()));
    }
    Ok(lars_path(x, y, d)?.coefficients().clone())
}
