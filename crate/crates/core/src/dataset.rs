//! Signature corpora: CSV ingestion, synthetic generation and the
//! train/test protocols.
//!
//! A corpus is a flat list of [`SignatureSample`]s, each a fixed-length
//! vector of global features tagged with the writer and whether it is a
//! genuine signature or a skilled forgery. [`Dataset`] indexes samples by
//! user; [`make_trial_split`] draws the per-trial training and test sets.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Genuine,
    SkilledForgery,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::SkilledForgery => "skilled_forgery",
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "genuine" => Ok(Label::Genuine),
            "skilled_forgery" => Ok(Label::SkilledForgery),
            other => Err(format!(
                "unknown label {other:?} (expected genuine or skilled_forgery)"
            )),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One signature reduced to its global feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureSample {
    pub user_id: String,
    pub sample_id: u64,
    pub label: Label,
    pub features: Vec<f64>,
}

/// An immutable corpus of signatures with per-user indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<SignatureSample>,
    feature_count: usize,
    users: Vec<String>,
    genuine: Vec<Vec<usize>>,
    forgeries: Vec<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, checking that every sample has `feature_count`
    /// finite features and every user owns at least one genuine sample.
    /// Users are ordered by first appearance.
    pub fn new(samples: Vec<SignatureSample>, feature_count: usize) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::Config("feature count must be positive".into()));
        }
        let mut users: Vec<String> = Vec::new();
        let mut lookup: BTreeMap<&str, usize> = BTreeMap::new();
        let mut genuine: Vec<Vec<usize>> = Vec::new();
        let mut forgeries: Vec<Vec<usize>> = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_count {
                return Err(Error::Contract(format!(
                    "sample {} of user {} has {} features, expected {}",
                    s.sample_id,
                    s.user_id,
                    s.features.len(),
                    feature_count
                )));
            }
            if let Some(k) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::Contract(format!(
                    "sample {} of user {} has a non-finite value in feature {}",
                    s.sample_id, s.user_id, k
                )));
            }
            let u = *lookup.entry(s.user_id.as_str()).or_insert_with(|| {
                users.push(s.user_id.clone());
                genuine.push(Vec::new());
                forgeries.push(Vec::new());
                users.len() - 1
            });
            match s.label {
                Label::Genuine => genuine[u].push(i),
                Label::SkilledForgery => forgeries[u].push(i),
            }
        }
        if let Some(u) = genuine.iter().position(Vec::is_empty) {
            return Err(Error::Contract(format!(
                "user {} has no genuine samples",
                users[u]
            )));
        }
        Ok(Dataset {
            samples,
            feature_count,
            users,
            genuine,
            forgeries,
        })
    }

    pub fn samples(&self) -> &[SignatureSample] {
        &self.samples
    }

    pub fn sample(&self, index: usize) -> &SignatureSample {
        &self.samples[index]
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == user_id)
    }

    /// Indices (into [`Dataset::samples`]) of the user's genuine signatures.
    pub fn genuine_of(&self, user: usize) -> &[usize] {
        &self.genuine[user]
    }

    /// Indices of the skilled forgeries targeting the user.
    pub fn forgeries_of(&self, user: usize) -> &[usize] {
        &self.forgeries[user]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes the corpus in the canonical CSV schema.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["user_id".to_string(), "sample_id".into(), "label".into()];
        header.extend(feature_columns(self.feature_count));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = Vec::with_capacity(3 + self.feature_count);
            row.push(s.user_id.clone());
            row.push(s.sample_id.to_string());
            row.push(s.label.as_str().to_string());
            row.extend(s.features.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| csv_error(path, e))
    }
}

/// Feature column names `f0001 .. fK`.
pub fn feature_columns(count: usize) -> impl Iterator<Item = String> {
    (1..=count).map(|k| format!("f{k:04}"))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Loads a labelled corpus from a CSV file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, path)
}

/// Parses a labelled corpus; `source` names the input in error messages.
pub fn read_dataset<R: Read>(reader: R, source: impl Into<PathBuf>) -> Result<Dataset> {
    let source = source.into();
    let (samples, k) = parse_samples(reader, &source, true)?;
    if samples.is_empty() {
        return Err(Error::EmptyCorpus(source));
    }
    Dataset::new(samples, k)
}

/// Loads probe signatures for verification. The label column is optional;
/// when absent every sample is tagged genuine (the label plays no role in
/// verification).
pub fn load_probes(path: impl AsRef<Path>) -> Result<Vec<SignatureSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (samples, _) = parse_samples(file, path, false)?;
    if samples.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    Ok(samples)
}

fn parse_samples<R: Read>(
    reader: R,
    source: &Path,
    require_label: bool,
) -> Result<(Vec<SignatureSample>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let bad_header = |message: String| Error::Parse {
        path: source.to_path_buf(),
        line: 1,
        message,
    };
    if header.len() < 2 || &header[0] != "user_id" || &header[1] != "sample_id" {
        return Err(bad_header(
            "header must start with user_id,sample_id".to_string(),
        ));
    }
    let has_label = header.get(2) == Some("label");
    if require_label && !has_label {
        return Err(bad_header("third column must be label".to_string()));
    }
    let first_feature = if has_label { 3 } else { 2 };
    let k = header.len() - first_feature;
    if k == 0 {
        return Err(bad_header("no feature columns".to_string()));
    }
    for (j, name) in header.iter().enumerate().skip(first_feature) {
        let ok = name.len() > 1
            && name.starts_with('f')
            && name[1..].bytes().all(|b| b.is_ascii_digit());
        if !ok {
            return Err(bad_header(format!(
                "column {} is {name:?}, expected a feature column like f0001",
                j + 1
            )));
        }
    }

    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            message,
        };
        let user_id = record[0].to_string();
        if user_id.is_empty() {
            return Err(fail("empty user_id".into()));
        }
        let sample_id = record[1]
            .parse::<u64>()
            .map_err(|_| fail(format!("sample_id {:?} is not a non-negative integer", &record[1])))?;
        let label = if has_label {
            record[2].parse::<Label>().map_err(fail)?
        } else {
            Label::Genuine
        };
        let mut features = Vec::with_capacity(k);
        for (j, field) in record.iter().enumerate().skip(first_feature) {
            let v: f64 = field
                .parse()
                .map_err(|_| fail(format!("column {} value {field:?} is not a number", &header[j])))?;
            if !v.is_finite() {
                return Err(fail(format!("column {} value {field:?} is not finite", &header[j])));
            }
            features.push(v);
        }
        samples.push(SignatureSample {
            user_id,
            sample_id,
            label,
            features,
        });
    }
    Ok((samples, k))
}

/// Parameters of the synthetic corpus generator.
///
/// Each user has a random set of `planted` feature indices. On those
/// features the user's genuine signatures follow a few writing styles
/// (offset along a per-user direction) with within-style spread `noise`;
/// skilled forgeries reproduce the style but are displaced by
/// `separation * noise` along a second per-user sign pattern. All other
/// features are unstructured Gaussian noise with spread
/// `background_spread * noise`, identical for genuine and forged samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub genuine_per_user: usize,
    pub forgery_per_user: usize,
    pub features: usize,
    pub planted: usize,
    pub separation: f64,
    pub noise: f64,
    /// Number of writing styles per user (round-robin over samples).
    pub styles: usize,
    /// Distance between the outermost style centres, in units of `noise`.
    pub style_offset: f64,
    /// Spread of non-planted features, in units of `noise`.
    pub background_spread: f64,
    /// Spread of user means around the origin, in units of `noise`.
    pub user_spread: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_users: 20,
            genuine_per_user: 30,
            forgery_per_user: 25,
            features: 50,
            planted: 5,
            separation: 4.0,
            noise: 1.0,
            styles: 2,
            style_offset: 6.0,
            background_spread: 3.0,
            user_spread: 8.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_users == 0 || self.genuine_per_user == 0 || self.features == 0 {
            return fail("users, genuine samples and features must all be at least 1");
        }
        if self.planted == 0 {
            return fail("planted feature count must be at least 1");
        }
        if self.planted > self.features {
            return Err(Error::Config(format!(
                "planted feature count {} exceeds feature count {}",
                self.planted, self.features
            )));
        }
        if self.styles == 0 {
            return fail("style count must be at least 1");
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return fail("noise must be a positive finite number");
        }
        let nonneg = [
            self.separation,
            self.style_offset,
            self.background_spread,
            self.user_spread,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return fail("separation and spreads must be finite and non-negative");
        }
        Ok(())
    }
}

/// Planted discriminative features per user.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub users: BTreeMap<String, Vec<usize>>,
}

impl SyntheticGroundTruth {
    pub fn planted(&self, user_id: &str) -> Option<&[usize]> {
        self.users.get(user_id).map(Vec::as_slice)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `u01`, `u02`, ... padded to the width of the largest id.
pub fn user_name(index: usize, n_users: usize) -> String {
    let width = n_users.to_string().len().max(2);
    format!("u{:0width$}", index + 1)
}

/// Draws a synthetic corpus. Deterministic in `seed`.
pub fn generate_synthetic(
    config: &GeneratorConfig,
    seed: u64,
) -> Result<(Dataset, SyntheticGroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.features;
    let noise = config.noise;
    let mut samples =
        Vec::with_capacity(config.n_users * (config.genuine_per_user + config.forgery_per_user));
    let mut truth = SyntheticGroundTruth::default();

    let style_step = if config.styles > 1 {
        config.style_offset / (config.styles - 1) as f64
    } else {
        0.0
    };
    let style_centre = (config.styles as f64 - 1.0) / 2.0;

    for u in 0..config.n_users {
        let user_id = user_name(u, config.n_users);
        let mut planted = index::sample(&mut rng, k, config.planted).into_vec();
        planted.sort_unstable();
        let mut is_planted = vec![false; k];
        for &j in &planted {
            is_planted[j] = true;
        }
        let mean: Vec<f64> = (0..k)
            .map(|_| config.user_spread * noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let style_sign: Vec<f64> = (0..k).map(|_| random_sign(&mut rng)).collect();
        let forgery_sign: Vec<f64> = (0..k).map(|_| random_sign(&mut rng)).collect();

        let draw = |i: usize, shift: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let style = (i % config.styles) as f64 - style_centre;
            (0..k)
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    if is_planted[j] {
                        mean[j]
                            + style_sign[j] * style * style_step * noise
                            + forgery_sign[j] * shift * noise
                            + noise * z
                    } else {
                        mean[j] + config.background_spread * noise * z
                    }
                })
                .collect()
        };

        let mut sample_id = 0u64;
        for i in 0..config.genuine_per_user {
            let features = draw(i, 0.0, &mut rng);
            samples.push(SignatureSample {
                user_id: user_id.clone(),
                sample_id,
                label: Label::Genuine,
                features,
            });
            sample_id += 1;
        }
        for i in 0..config.forgery_per_user {
            let features = draw(i, config.separation, &mut rng);
            samples.push(SignatureSample {
                user_id: user_id.clone(),
                sample_id,
                label: Label::SkilledForgery,
                features,
            });
            sample_id += 1;
        }
        truth.users.insert(user_id, planted);
    }

    Ok((Dataset::new(samples, k)?, truth))
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// The four train/test protocols: skilled or random forgeries, with 5 or
/// 20 genuine training signatures per user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "skilled_05")]
    Skilled05,
    #[serde(rename = "skilled_20")]
    Skilled20,
    #[serde(rename = "random_05")]
    Random05,
    #[serde(rename = "random_20")]
    Random20,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Skilled05,
        Protocol::Skilled20,
        Protocol::Random05,
        Protocol::Random20,
    ];

    pub fn train_count(self) -> usize {
        match self {
            Protocol::Skilled05 | Protocol::Random05 => 5,
            Protocol::Skilled20 | Protocol::Random20 => 20,
        }
    }

    pub fn uses_random_forgeries(self) -> bool {
        matches!(self, Protocol::Random05 | Protocol::Random20)
    }

    /// Number of selected features used when none is given.
    pub fn default_features(self) -> usize {
        match self {
            Protocol::Skilled05 | Protocol::Random05 => 60,
            Protocol::Skilled20 | Protocol::Random20 => 50,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Skilled05 => "skilled_05",
            Protocol::Skilled20 => "skilled_20",
            Protocol::Random05 => "random_05",
            Protocol::Random20 => "random_20",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                format!("unknown protocol {s:?} (expected skilled_05, skilled_20, random_05 or random_20)")
            })
    }
}

/// One user's share of a trial. All entries index into the dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSplit {
    pub user: usize,
    pub train: Vec<usize>,
    pub test_genuine: Vec<usize>,
    /// Skilled forgeries of this user, or one genuine signature of every
    /// other user under the random protocols.
    pub test_forgery: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialSplit {
    pub protocol: Protocol,
    pub trial_seed: u64,
    pub users: Vec<UserSplit>,
}

impl TrialSplit {
    pub fn train_total(&self) -> usize {
        self.users.iter().map(|u| u.train.len()).sum()
    }

    pub fn genuine_test_total(&self) -> usize {
        self.users.iter().map(|u| u.test_genuine.len()).sum()
    }

    pub fn forgery_test_total(&self) -> usize {
        self.users.iter().map(|u| u.test_forgery.len()).sum()
    }
}

/// Draws the training and test sets of one trial.
///
/// Training signatures are sampled per user without replacement from a
/// stream keyed by `(trial_seed, user)`, so the skilled and random
/// variants of a protocol share training sets when given the same seed.
/// Random forgeries use an independent stream.
pub fn make_trial_split(dataset: &Dataset, protocol: Protocol, trial_seed: u64) -> Result<TrialSplit> {
    let need = protocol.train_count();
    let mut users = Vec::with_capacity(dataset.user_count());
    for u in 0..dataset.user_count() {
        let genuine = dataset.genuine_of(u);
        if genuine.len() < need {
            return Err(Error::InsufficientSamples {
                protocol: protocol.to_string(),
                user: dataset.users()[u].clone(),
                available: genuine.len(),
                required: need,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, "train", u as u64));
        let mut picked = index::sample(&mut rng, genuine.len(), need).into_vec();
        picked.sort_unstable();
        let mut in_train = vec![false; genuine.len()];
        for &p in &picked {
            in_train[p] = true;
        }
        let train: Vec<usize> = picked.iter().map(|&p| genuine[p]).collect();
        let test_genuine: Vec<usize> = genuine
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| !t)
            .map(|(&g, _)| g)
            .collect();

        let test_forgery = if protocol.uses_random_forgeries() {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, "impostor", u as u64));
            (0..dataset.user_count())
                .filter(|&v| v != u)
                .map(|v| {
                    let pool = dataset.genuine_of(v);
                    pool[rng.random_range(0..pool.len())]
                })
                .collect()
        } else {
            dataset.forgeries_of(u).to_vec()
        };

        users.push(UserSplit {
            user: u,
            train,
            test_genuine,
            test_forgery,
        });
    }
    Ok(TrialSplit {
        protocol,
        trial_seed,
        users,
    })
}
