//! Per-user unsupervised multi-cluster feature selection.
//!
//! The pipeline for one user's training matrix (samples × features):
//!
//! 1. a p-nearest-neighbour affinity graph over the samples,
//! 2. degree matrix `D` and Laplacian `L = D - W`,
//! 3. the generalized eigenproblem `L y = λ D y`, keeping the eigenvectors
//!    of the smallest non-trivial eigenvalues as a flat embedding,
//! 4. one L1-regularized regression per embedding vector (LARS, stopped at
//!    `d` active features),
//! 5. per-feature score `max_i |a_ij|`, top `d` features kept.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lars::lars_regression;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Binary,
    #[default]
    HeatKernel,
    DotProduct,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Weighting::Binary),
            "heat_kernel" | "heat" => Ok(Weighting::HeatKernel),
            "dot_product" | "dot" => Ok(Weighting::DotProduct),
            other => Err(format!("unknown weighting {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityGraph {
    pub weights: DMatrix<f64>,
    pub neighbors: usize,
    pub weighting: Weighting,
    /// Bandwidth actually used (heat kernel only).
    pub heat_sigma: Option<f64>,
}

fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows();
    let mut d2 = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = (x.row(i) - x.row(j)).norm_squared();
            d2[(i, j)] = v;
            d2[(j, i)] = v;
        }
    }
    d2
}

/// Connects every sample to its `neighbors` nearest samples (Euclidean,
/// ties by lower index) and symmetrizes with `W = max(W, Wᵀ)`.
///
/// With `heat_sigma = None` the heat-kernel bandwidth is the mean squared
/// distance over connected pairs.
pub fn build_affinity_graph(
    x: &DMatrix<f64>,
    neighbors: usize,
    weighting: Weighting,
    heat_sigma: Option<f64>,
) -> Result<AffinityGraph> {
    let m = x.nrows();
    if neighbors == 0 {
        return Err(Error::Config("neighbour count p must be at least 1".into()));
    }
    if neighbors >= m {
        return Err(Error::Config(format!(
            "neighbour count p = {neighbors} needs at least {} samples, got {m}",
            neighbors + 1
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("training matrix has non-finite entries".into()));
    }
    if let Some(s) = heat_sigma {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Config(format!("heat kernel sigma must be positive, got {s}")));
        }
    }

    let d2 = squared_distances(x);
    let mut adjacent = vec![false; m * m];
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        order.clear();
        order.extend((0..m).filter(|&j| j != i));
        order.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
        for &j in &order[..neighbors] {
            adjacent[i * m + j] = true;
            adjacent[j * m + i] = true;
        }
    }

    let sigma = match weighting {
        Weighting::HeatKernel => Some(match heat_sigma {
            Some(s) => s,
            None => {
                let (sum, count) = (0..m)
                    .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
                    .filter(|&(i, j)| adjacent[i * m + j])
                    .fold((0.0, 0usize), |(s, c), (i, j)| (s + d2[(i, j)], c + 1));
                let mean = if count > 0 { sum / count as f64 } else { 0.0 };
                if mean > 0.0 {
                    mean
                } else {
                    1.0
                }
            }
        }),
        _ => None,
    };

    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if !adjacent[i * m + j] {
                continue;
            }
            w[(i, j)] = match weighting {
                Weighting::Binary => 1.0,
                Weighting::HeatKernel => (-d2[(i, j)] / sigma.unwrap_or(1.0)).exp(),
                Weighting::DotProduct => x.row(i).dot(&x.row(j)).max(0.0),
            };
        }
    }
    Ok(AffinityGraph {
        weights: w,
        neighbors,
        weighting,
        heat_sigma: sigma,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPair {
    /// Diagonal of `D`.
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
}

pub fn degree_and_laplacian(w: &DMatrix<f64>) -> Result<LaplacianPair> {
    let m = w.nrows();
    if w.ncols() != m {
        return Err(Error::Contract(format!(
            "weight matrix must be square, got {}x{}",
            m,
            w.ncols()
        )));
    }
    let scale = w.amax().max(1.0);
    for i in 0..m {
        if w[(i, i)] != 0.0 {
            return Err(Error::Contract(format!("weight matrix has nonzero diagonal at {i}")));
        }
        for j in 0..m {
            let v = w[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Contract(format!("weight ({i},{j}) = {v} is not a nonnegative number")));
            }
            if (v - w[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Contract(format!("weight matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    let degree = DVector::from_iterator(m, w.row_iter().map(|r| r.sum()));
    let laplacian = DMatrix::from_diagonal(&degree) - w;
    Ok(LaplacianPair { degree, laplacian })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEmbedding {
    /// Columns are `D`-orthonormal generalized eigenvectors.
    pub vectors: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

/// Eigenvalues of the normalized problem below this are treated as zero.
const NULL_TOLERANCE: f64 = 1e-9;

/// Solves `L y = λ D y` for the `count` smallest non-trivial eigenpairs.
///
/// Works through the symmetric matrix `D^-1/2 L D^-1/2`. Exactly one
/// trivial vector (the constant, `λ = 0`) is removed; on a graph with
/// several connected components the remaining zero-eigenvalue vectors are
/// kept since they indicate the components.
pub fn spectral_embedding(pair: &LaplacianPair, count: usize) -> Result<SpectralEmbedding> {
    let m = pair.degree.len();
    if count == 0 {
        return Err(Error::Config("number of eigenvectors must be at least 1".into()));
    }
    if count >= m {
        return Err(Error::Config(format!(
            "{count} eigenvectors requested from a graph with {m} vertices (need fewer than {m})"
        )));
    }
    if let Some(vertex) = pair.degree.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(Error::DegenerateGraph { vertex });
    }
    let inv_sqrt = pair.degree.map(|d| 1.0 / d.sqrt());
    let mut normalized = pair.laplacian.clone();
    for i in 0..m {
        for j in 0..m {
            normalized[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    // exact symmetry for the solver
    let normalized = (&normalized + normalized.transpose()) * 0.5;
    let eig = SymmetricEigen::new(normalized.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let null: Vec<usize> = order
        .iter()
        .copied()
        .take_while(|&i| eig.eigenvalues[i] < NULL_TOLERANCE)
        .collect();
    let trivial = {
        let t = pair.degree.map(f64::sqrt);
        let n = t.norm();
        t / n
    };

    // Null space minus the constant direction, by Gram-Schmidt.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let wanted = null.len().saturating_sub(1);
    for &i in &null {
        if basis.len() == wanted {
            break;
        }
        let mut v: DVector<f64> = eig.eigenvectors.column(i).into_owned();
        for _ in 0..2 {
            v -= &trivial * trivial.dot(&v);
            for b in &basis {
                v -= b * b.dot(&v);
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            basis.push(v / n);
        }
    }
    let mut pairs: Vec<(f64, DVector<f64>)> = basis
        .into_iter()
        .map(|z| ((&normalized * &z).dot(&z), z))
        .collect();
    let skip = null.len().max(1);
    pairs.extend(
        order
            .iter()
            .skip(skip)
            .map(|&i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned())),
    );
    pairs.truncate(count);

    let mut vectors = DMatrix::zeros(m, pairs.len());
    let mut eigenvalues = Vec::with_capacity(pairs.len());
    for (c, (lambda, z)) in pairs.into_iter().enumerate() {
        let mut y = z.component_mul(&inv_sqrt);
        // sign convention: largest-magnitude entry positive (lowest index on ties)
        let pivot = y
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > y[best].abs() { i } else { best });
        if y[pivot] < 0.0 {
            y.neg_mut();
        }
        vectors.set_column(c, &y);
        eigenvalues.push(lambda);
    }
    Ok(SpectralEmbedding {
        vectors,
        eigenvalues,
    })
}

/// One regression coefficient vector (length = feature count) per
/// embedding vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCoefficients {
    pub vectors: Vec<DVector<f64>>,
}

/// `score(j) = max_i |a_ij|`.
pub fn mcfs_scores(coefficients: &SparseCoefficients) -> Vec<f64> {
    let Some(first) = coefficients.vectors.first() else {
        return Vec::new();
    };
    let mut scores = vec![0.0f64; first.len()];
    for a in &coefficients.vectors {
        for (s, v) in scores.iter_mut().zip(a.iter()) {
            *s = s.max(v.abs());
        }
    }
    scores
}

/// Parameters of [`select_user_features`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    /// Neighbour count p; clamped to `samples - 1`.
    pub neighbors: usize,
    pub weighting: Weighting,
    /// Heat-kernel bandwidth; `None` self-tunes.
    pub heat_sigma: Option<f64>,
    /// Number of embedding vectors (latent clusters); clamped to
    /// `samples - 2` (at least 1).
    pub eigenvectors: usize,
    /// Number of features to select.
    pub features: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            neighbors: 5,
            weighting: Weighting::HeatKernel,
            heat_sigma: None,
            eigenvectors: 5,
            features: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Selected feature indices by descending score (ascending index on ties).
    pub indices: Vec<usize>,
    /// Score of every feature.
    pub scores: Vec<f64>,
}

/// Column-wise z-score with population standard deviation. Columns with
/// zero spread are centred and left at zero.
pub fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows() as f64;
    let mut z = x.clone();
    for mut col in z.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / m).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    z
}

/// Ranks features by score, descending, ascending index on ties.
pub fn rank_features(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Selects `params.features` features for one user from the user's
/// genuine training matrix (rows = samples). The matrix is standardized
/// column-wise first; this is idempotent for already standardized input.
pub fn select_user_features(x: &DMatrix<f64>, params: &SelectionParams) -> Result<FeatureSelection> {
    let (m, k) = x.shape();
    let d = params.features;
    if d == 0 {
        return Err(Error::Config("number of selected features d must be at least 1".into()));
    }
    if d > k {
        return Err(Error::Config(format!("cannot select {d} of {k} features")));
    }
    if m < 2 {
        return Err(Error::Config(format!("feature selection needs at least 2 samples, got {m}")));
    }
    let z = standardize_columns(x);
    let neighbors = params.neighbors.clamp(1, m - 1);
    let graph = build_affinity_graph(&z, neighbors, params.weighting, params.heat_sigma)?;
    let pair = degree_and_laplacian(&graph.weights)?;
    let eigenvectors = params.eigenvectors.min(m.saturating_sub(2)).max(1);
    let embedding = spectral_embedding(&pair, eigenvectors)?;

    // a centred design with m rows has rank at most m - 1
    let active = d.min(m - 1);
    let mut vectors = Vec::with_capacity(embedding.vectors.ncols());
    for y in embedding.vectors.column_iter() {
        let mean = y.sum() / m as f64;
        let target = y.add_scalar(-mean);
        vectors.push(lars_regression(&z, &target, active)?);
    }
    let scores = mcfs_scores(&SparseCoefficients { vectors });
    let mut indices = rank_features(&scores);
    indices.truncate(d);
    Ok(FeatureSelection { indices, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn collinear_points_binary() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let g = build_affinity_graph(&x, 1, Weighting::Binary, None).unwrap();
        // 0 -> 1, 1 -> 0 (tie with 2, lower index), 2 -> 1
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        assert_eq!(g.weights, expected);
    }

    #[test]
    fn duplicate_points_get_unit_heat_weight() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 5.0, 5.0]);
        let g = build_affinity_graph(&x, 1, Weighting::HeatKernel, Some(2.0)).unwrap();
        assert_eq!(g.weights[(0, 1)], 1.0);
        assert_eq!(g.weights[(1, 0)], 1.0);
    }

    #[test]
    fn knn_graph_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 10, 4);
        let g = build_affinity_graph(&x, 3, Weighting::HeatKernel, None).unwrap();
        let w = &g.weights;
        assert_eq!(w, &w.transpose());
        for i in 0..10 {
            assert_eq!(w[(i, i)], 0.0);
            let nz = w.row(i).iter().filter(|v| **v > 0.0).count();
            assert!((3..=9).contains(&nz));
            // brute force: the 3 closest points are linked
            let mut dist: Vec<(f64, usize)> = (0..10)
                .filter(|&j| j != i)
                .map(|j| ((x.row(i) - x.row(j)).norm(), j))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            for &(_, j) in &dist[..3] {
                assert!(w[(i, j)] > 0.0);
            }
        }
    }

    #[test]
    fn too_many_neighbours_rejected() {
        let x = DMatrix::zeros(3, 2);
        assert!(matches!(
            build_affinity_graph(&x, 3, Weighting::Binary, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dot_product_weights_clamp_negative() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let g = build_affinity_graph(&x, 1, Weighting::DotProduct, None).unwrap();
        assert_eq!(g.weights[(0, 1)], 0.0);
    }

    #[test]
    fn two_node_laplacian() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = degree_and_laplacian(&w).unwrap();
        assert_eq!(p.degree.as_slice(), &[1.0, 1.0]);
        assert_eq!(p.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn star_degrees() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0]);
        let p = degree_and_laplacian(&w).unwrap();
        assert_eq!(p.degree.as_slice(), &[1.0, 0.5, 0.5]);
        for r in p.laplacian.row_iter() {
            assert!(r.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_weights_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(degree_and_laplacian(&w), Err(Error::Contract(_))));
    }

    #[test]
    fn path_graph_spectrum() {
        // L y = λ D y on P3: eigenvalues 0, 1, 2 with y = (1,0,-1), (1,-1,1)
        let w = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        let p = degree_and_laplacian(&w).unwrap();
        let e = spectral_embedding(&p, 2).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-12);
        let y0 = e.vectors.column(0);
        let s = 1.0 / 2f64.sqrt();
        for (a, b) in y0.iter().zip([s, 0.0, -s]) {
            assert!((a - b).abs() < 1e-12, "{y0}");
        }
        let y1 = e.vectors.column(1);
        for (a, b) in y1.iter().zip([0.5, -0.5, 0.5]) {
            assert!((a - b).abs() < 1e-12, "{y1}");
        }
    }

    #[test]
    fn disconnected_cliques_give_indicator() {
        let mut w = DMatrix::zeros(10, 10);
        for i in 0..10 {
            for j in 0..10 {
                if i != j && (i < 5) == (j < 5) {
                    w[(i, j)] = 1.0;
                }
            }
        }
        let p = degree_and_laplacian(&w).unwrap();
        let e = spectral_embedding(&p, 1).unwrap();
        assert!(e.eigenvalues[0].abs() < 1e-12);
        let y = e.vectors.column(0);
        for i in 1..5 {
            assert!((y[i] - y[0]).abs() < 1e-10);
            assert!((y[5 + i] - y[5]).abs() < 1e-10);
        }
        assert!((y[0] - y[5]).abs() > 0.1);
    }

    #[test]
    fn isolated_vertex_is_degenerate() {
        let w = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 0., 0., 0., 0.]);
        let p = degree_and_laplacian(&w).unwrap();
        assert!(matches!(
            spectral_embedding(&p, 1),
            Err(Error::DegenerateGraph { vertex: 2 })
        ));
    }

    #[test]
    fn too_many_eigenvectors_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = degree_and_laplacian(&w).unwrap();
        assert!(matches!(spectral_embedding(&p, 2), Err(Error::Config(_))));
    }

    #[test]
    fn scores_are_max_abs() {
        let a = SparseCoefficients {
            vectors: vec![
                DVector::from_vec(vec![0.0, 2.0, 0.0]),
                DVector::from_vec(vec![1.0, -3.0, 0.0]),
            ],
        };
        assert_eq!(mcfs_scores(&a), vec![1.0, 3.0, 0.0]);
        let zero = SparseCoefficients {
            vectors: vec![DVector::zeros(4)],
        };
        assert_eq!(mcfs_scores(&zero), vec![0.0; 4]);
        let one = SparseCoefficients {
            vectors: vec![DVector::from_vec(vec![-0.5, 0.25])],
        };
        assert_eq!(mcfs_scores(&one), vec![0.5, 0.25]);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        assert_eq!(rank_features(&[1.0, 3.0, 1.0, 0.0, 3.0]), vec![1, 4, 0, 2, 3]);
    }

    #[test]
    fn select_all_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 12, 8);
        let sel = select_user_features(
            &x,
            &SelectionParams {
                features: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let mut idx = sel.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn selection_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 20, 15);
        let p = SelectionParams::default();
        assert_eq!(select_user_features(&x, &p).unwrap(), select_user_features(&x, &p).unwrap());
    }

    #[test]
    fn five_sample_users_are_handled() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 5, 30);
        let sel = select_user_features(
            &x,
            &SelectionParams {
                features: 20,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sel.indices.len(), 20);
        // at most (m - 1) nonzero coefficients per embedding vector, 3 vectors
        assert!(sel.scores.iter().filter(|s| **s > 0.0).count() <= 12);
    }

    #[test]
    fn bad_selection_sizes() {
        let x = DMatrix::zeros(6, 4);
        let p = SelectionParams {
            features: 5,
            ..Default::default()
        };
        assert!(matches!(select_user_features(&x, &p), Err(Error::Config(_))));
        let p = SelectionParams {
            features: 0,
            ..Default::default()
        };
        assert!(matches!(select_user_features(&x, &p), Err(Error::Config(_))));
    }
}
