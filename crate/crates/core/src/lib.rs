//! Writer-dependent online signature verification.
//!
//! Each user gets a feature subset chosen by unsupervised multi-cluster
//! feature selection on that user's genuine signatures. The training
//! signatures, restricted to those features, are grouped with fuzzy
//! C-means and every cluster is stored as a vector of intervals. A probe
//! is accepted when enough of its selected features fall inside the
//! intervals of one of the claimed user's clusters.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`dataset`] | CSV corpora, synthetic generator, train/test protocols |
//! | [`spectral`] | kNN affinity graph, Laplacian, spectral embedding, feature scores |
//! | [`lars`] | least angle regression with the lasso modification |
//! | [`fcm`] | fuzzy C-means and hardening |
//! | [`symbolic`] | interval references, enrollment, verification |
//! | [`evaluation`] | FAR/FRR sweeps, EER, multi-trial protocol runs |

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fcm;
pub mod lars;
pub mod seed;
pub mod spectral;
pub mod symbolic;

pub use dataset::{
    generate_synthetic, load_dataset, make_trial_split, Dataset, GeneratorConfig, Label, Protocol,
    SignatureSample, SyntheticGroundTruth, TrialSplit,
};
pub use error::{Error, Result};
pub use evaluation::{
    compute_eer, run_protocol, sweep_feature_counts, sweep_thresholds, CurvePoint, ErrorCurve,
    FeatureSweepRow, ProtocolConfig, ProtocolReport,
};
pub use fcm::{fuzzy_c_means, harden, FcmParams, FuzzyPartition};
pub use spectral::{select_user_features, FeatureSelection, SelectionParams, Weighting};
pub use symbolic::{
    build_reference, enroll_user, verify, EnrollParams, ReferenceInterval, UserModel,
    VerificationResult,
};
