//! JSON experiment configuration and the train → attack → eval pipeline.
//!
//! Seeds: the network init, SGD shuffling, blob generation, pool selection,
//! per-sample attacks and evaluation repeats each draw from
//! [`derive_seed`]`(seed, stream, index)` with their own stream tag. Attack
//! `i` (by sample id) uses index `i`, so results do not depend on the worker
//! count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attacks::{
    hsja::INIT_FAILURE, hsja_attack, pgd_attack, simba_attack, AttackOutcome, HsjaConfig, PgdConfig, SimbaConfig,
};
use crate::data::{
    self, load_checkpoint, read_attack_table, save_checkpoint, synth_blobs, write_attack_table, write_figure_data,
    write_report, AttackRecord, BlobConfig, CheckpointMeta, Dataset, FigureKind, ReportFormat, Split,
};
use crate::error::{Error, Result};
use crate::eval::{build_balanced_set, repeat_evaluate, EvalSettings, EvaluationReport, SignalPools};
use crate::mia::{
    signal_boundary_distance, signal_loss, signal_modified_entropy, signal_prediction_entropy, signal_softmax_response,
    SignalKind,
};
use crate::nn::{accuracy, train_sgd, Network, NetworkSpec, TrainConfig};
use crate::oracle::{AccessLevel, LocalOracle, Oracle, QueryKind};
use crate::seed::{derive_seed, stream};
use crate::tensor::Tensor;

pub const CHECKPOINT_FILE: &str = "model.json";
pub const ATTACK_TABLE_FILE: &str = "attacks.csv";
pub const ATTACK_META_FILE: &str = "attack_meta.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        #[serde(default)]
        label_noise: f64,
        /// Defaults to a derivation of the global seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        features: Vec<String>,
        label: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    WhiteBox,
    ScoreBased,
    LabelOnly,
}

impl Setting {
    pub fn access_level(self) -> AccessLevel {
        match self {
            Setting::WhiteBox => AccessLevel::WhiteBox,
            Setting::ScoreBased => AccessLevel::Scores,
            Setting::LabelOnly => AccessLevel::LabelOnly,
        }
    }

    pub fn default_strategy(self) -> Strategy {
        match self {
            Setting::WhiteBox => Strategy::Pgd,
            Setting::ScoreBased => Strategy::Simba,
            Setting::LabelOnly => Strategy::Hsja,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::WhiteBox => "white-box",
            Setting::ScoreBased => "score-based",
            Setting::LabelOnly => "label-only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Pgd,
    Simba,
    Hsja,
}

impl Strategy {
    fn required_query(self) -> QueryKind {
        match self {
            Strategy::Pgd => QueryKind::Gradient,
            Strategy::Simba => QueryKind::Scores,
            Strategy::Hsja => QueryKind::Label,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Pgd => "pgd",
            Strategy::Simba => "simba",
            Strategy::Hsja => "hsja",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSettings {
    pub setting: Setting,
    /// Defaults to PGD / SimBA / HSJA for white-box / score-based / label-only.
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub pgd: PgdConfig,
    #[serde(default)]
    pub simba: SimbaConfig,
    #[serde(default)]
    pub hsja: HsjaConfig,
    /// Samples used to pick the HSJA success distance when `hsja.d_target`
    /// is unset: the median final distance after `num_iterations` on them.
    #[serde(default = "default_calibration_samples")]
    pub calibration_samples: usize,
}

fn default_calibration_samples() -> usize {
    20
}

impl AttackSettings {
    pub fn strategy(&self) -> Strategy {
        self.strategy.unwrap_or_else(|| self.setting.default_strategy())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSettings {
    pub n_per_side: usize,
    /// Samples attacked per side; balanced sets are resampled from these.
    /// Defaults to `n_per_side`.
    #[serde(default)]
    pub pool_per_side: Option<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_fpr_levels")]
    pub fpr_levels: Vec<f64>,
}

fn default_repeats() -> usize {
    20
}

fn default_fpr_levels() -> Vec<f64> {
    vec![0.001, 0.01, 0.1]
}

impl EvaluationSettings {
    pub fn pool_per_side(&self) -> usize {
        self.pool_per_side.unwrap_or(self.n_per_side)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub network: NetworkSpec,
    pub train: TrainSettings,
    pub attack: AttackSettings,
    pub signals: Vec<SignalKind>,
    pub evaluation: EvaluationSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_json(&text)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            seed: derive_seed(self.seed, stream::TRAIN, 0),
        }
    }

    /// Rejects incompatible (setting, strategy, signal) combinations and bad
    /// parameters before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.network.shapes()?;
        self.train_config().validate()?;
        let level = self.attack.setting.access_level();
        let strategy = self.attack.strategy();
        if !level.permits(strategy.required_query()) {
            return Err(Error::InvalidConfig(format!(
                "strategy {strategy} needs {} queries, which the {} setting does not allow",
                strategy.required_query(),
                self.attack.setting
            )));
        }
        match strategy {
            Strategy::Pgd => self.attack.pgd.validate()?,
            Strategy::Simba => self.attack.simba.validate()?,
            Strategy::Hsja => {
                self.attack.hsja.validate()?;
                if self.attack.hsja.d_target.is_none() && self.attack.calibration_samples == 0 {
                    return Err(Error::InvalidConfig(
                        "hsja needs d_target or calibration_samples >= 1".into(),
                    ));
                }
            }
        }
        if self.signals.is_empty() {
            return Err(Error::InvalidConfig("no signals selected".into()));
        }
        for (i, s) in self.signals.iter().enumerate() {
            if self.signals[..i].contains(s) {
                return Err(Error::InvalidConfig(format!("signal {s} listed twice")));
            }
            let ok = match s {
                SignalKind::Iterations => true,
                SignalKind::SoftmaxResponse | SignalKind::PredictionEntropy | SignalKind::ModifiedEntropy => {
                    level.permits(QueryKind::Scores)
                }
                SignalKind::Loss => level == AccessLevel::WhiteBox,
                SignalKind::BoundaryDistance => strategy == Strategy::Hsja,
            };
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "signal {s} is not available in the {} setting with strategy {strategy}",
                    self.attack.setting
                )));
            }
        }
        let ev = &self.evaluation;
        if ev.n_per_side == 0 || ev.repeats == 0 {
            return Err(Error::InvalidConfig("n_per_side and repeats must be at least 1".into()));
        }
        if ev.pool_per_side() < ev.n_per_side {
            return Err(Error::InvalidConfig("pool_per_side must be >= n_per_side".into()));
        }
        if ev.fpr_levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::InvalidConfig("fpr levels must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Loads train and test splits, reshaped to the network input when the
/// element counts agree.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match &cfg.dataset {
        DatasetSource::Blobs {
            classes,
            per_class,
            dim,
            spread,
            label_noise,
            seed,
        } => synth_blobs(&BlobConfig {
            classes: *classes,
            per_class: *per_class,
            dim: *dim,
            spread: *spread,
            label_noise: *label_noise,
            seed: seed.unwrap_or_else(|| derive_seed(cfg.seed, stream::DATA, 0)),
        })?,
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
            test_limit,
        } => {
            let mut train = data::load_idx(train_images, train_labels, Split::Train)?;
            let mut test = data::load_idx(test_images, test_labels, Split::Test)?;
            if let Some(n) = train_limit {
                train = train.truncated(*n);
            }
            if let Some(n) = test_limit {
                test = test.truncated(*n);
            }
            (train, test)
        }
        DatasetSource::Csv {
            train,
            test,
            features,
            label,
        } => (
            data::load_csv(train, features, label, Split::Train)?,
            data::load_csv(test, features, label, Split::Test)?,
        ),
    };
    let shape = &cfg.network.input_shape;
    let fit = |d: Dataset| -> Result<Dataset> {
        if d.input_shape() == shape.as_slice() {
            return Ok(d);
        }
        if d.input_shape().iter().product::<usize>() == shape.iter().product::<usize>() {
            return d.reshaped(shape);
        }
        Err(Error::InvalidConfig(format!(
            "dataset samples have shape {:?} but the network expects {shape:?}",
            d.input_shape()
        )))
    };
    let (train, test) = (fit(train)?, fit(test)?);
    if train.num_classes().max(test.num_classes()) > cfg.network.num_classes {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} classes but the network outputs {}",
            train.num_classes().max(test.num_classes()),
            cfg.network.num_classes
        )));
    }
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
    pub epochs: usize,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Trains the target model in memory.
pub fn train_model(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<(Network, TrainSummary, Vec<f64>)> {
    let mut net = Network::init(cfg.network.clone(), derive_seed(cfg.seed, stream::INIT, 0))?;
    let report = train_sgd(&mut net, train.samples(), &cfg.train_config())?;
    let summary = TrainSummary {
        train_accuracy: accuracy(&net, train.samples())?,
        test_accuracy: accuracy(&net, test.samples())?,
        final_loss: *report.epoch_losses.last().unwrap(),
        epochs: report.epoch_losses.len(),
        train_samples: train.len(),
        test_samples: test.len(),
    };
    Ok((net, summary, report.epoch_losses))
}

/// `train` subcommand: writes the checkpoint, `losses.csv` and `train_summary.json`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let (train, test) = load_datasets(cfg)?;
    let (net, summary, losses) = train_model(cfg, &train, &test)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let tc = cfg.train_config();
    save_checkpoint(
        &net,
        &CheckpointMeta {
            train_config: Some(&tc),
            seed: Some(cfg.seed),
        },
        out.join(CHECKPOINT_FILE),
    )?;
    let mut w = csv::Writer::from_path(out.join("losses.csv"))?;
    w.write_record(["epoch", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    std::fs::write(out.join("train_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// One sample scheduled for attack.
#[derive(Debug, Clone)]
pub struct AttackSample {
    pub sample_id: usize,
    pub member: bool,
    pub source_index: usize,
    pub input: Tensor,
    pub label: usize,
}

/// Draws `pool_per_side` members from train and non-members from test.
/// Members get ids `0..P`, non-members `P..2P`.
pub fn select_attack_pool(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Vec<AttackSample>> {
    let per_side = cfg.evaluation.pool_per_side();
    let offset = train.len();
    let member_ids: Vec<usize> = (0..train.len()).collect();
    let nonmember_ids: Vec<usize> = (offset..offset + test.len()).collect();
    let set = build_balanced_set(
        &member_ids,
        &nonmember_ids,
        per_side,
        derive_seed(cfg.seed, stream::POOL, 0),
    )?;
    let mut out = Vec::with_capacity(2 * per_side);
    for (i, idx) in set.members.iter().enumerate() {
        let (x, y) = &train.samples()[*idx];
        out.push(AttackSample {
            sample_id: i,
            member: true,
            source_index: *idx,
            input: x.clone(),
            label: *y,
        });
    }
    for (i, idx) in set.nonmembers.iter().enumerate() {
        let (x, y) = &test.samples()[*idx - offset];
        out.push(AttackSample {
            sample_id: per_side + i,
            member: false,
            source_index: *idx - offset,
            input: x.clone(),
            label: *y,
        });
    }
    Ok(out)
}

/// Attack parameters after HSJA calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMeta {
    pub setting: Setting,
    pub strategy: Strategy,
    pub samples: usize,
    pub hsja_d_target: Option<f64>,
}

impl AttackMeta {
    pub fn context(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("setting".into(), self.setting.to_string());
        m.insert("strategy".into(), self.strategy.to_string());
        m.insert("attacked_samples".into(), self.samples.to_string());
        if let Some(d) = self.hsja_d_target {
            m.insert("hsja_d_target".into(), d.to_string());
        }
        m
    }
}

fn run_one(
    settings: &AttackSettings,
    hsja: &HsjaConfig,
    oracle: &dyn Oracle,
    sample: &AttackSample,
    seed: u64,
) -> Result<(AttackOutcome, Option<f64>)> {
    let seed = derive_seed(seed, stream::ATTACK, sample.sample_id as u64);
    match settings.strategy() {
        Strategy::Pgd => {
            let cfg = PgdConfig {
                seed,
                ..settings.pgd.clone()
            };
            Ok((pgd_attack(oracle, &sample.input, sample.label, &cfg)?, None))
        }
        Strategy::Simba => {
            let cfg = SimbaConfig {
                seed,
                ..settings.simba.clone()
            };
            Ok((simba_attack(oracle, &sample.input, sample.label, &cfg)?, None))
        }
        Strategy::Hsja => {
            let cfg = HsjaConfig { seed, ..hsja.clone() };
            match hsja_attack(oracle, &sample.input, sample.label, &cfg) {
                Ok(o) => {
                    let d = signal_boundary_distance(&o)?.value;
                    Ok((o, Some(d)))
                }
                Err(Error::Attack(m)) if m == INIT_FAILURE => {
                    // No misclassified point in the clip box: cap at its diameter.
                    let span = f64::from(cfg.clip_max - cfg.clip_min);
                    let cap = span * (sample.input.len() as f64).sqrt();
                    let o = AttackOutcome {
                        success: false,
                        iterations: cfg.num_iterations,
                        queries: cfg.max_init_draws as u64,
                        adversarial: sample.input.clone(),
                        l2_distance: 0.0,
                        initial_misclassified: false,
                    };
                    Ok((o, Some(cap)))
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn map_samples<T: Send>(
    samples: &[AttackSample],
    workers: usize,
    f: impl Fn(&AttackSample) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| samples.par_iter().map(&f).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        samples.iter().map(f).collect()
    }
}

/// Chooses the HSJA success distance when the config leaves it open.
pub fn calibrate_hsja(
    cfg: &ExperimentConfig,
    oracle: &dyn Oracle,
    samples: &[AttackSample],
    workers: usize,
) -> Result<HsjaConfig> {
    let mut hsja = cfg.attack.hsja.clone();
    if hsja.d_target.is_some() {
        return Ok(hsja);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::CALIBRATION, 0));
        order.shuffle(&mut rng);
    }
    let subset: Vec<AttackSample> = order
        .into_iter()
        .take(cfg.attack.calibration_samples)
        .map(|i| samples[i].clone())
        .collect();
    let probe = HsjaConfig {
        d_target: None,
        ..hsja.clone()
    };
    let results = map_samples(&subset, workers, |s| {
        let cfg = HsjaConfig {
            seed: derive_seed(cfg.seed, stream::CALIBRATION, 1 + s.sample_id as u64),
            ..probe.clone()
        };
        match hsja_attack(oracle, &s.input, s.label, &cfg) {
            Ok(o) if o.success && !o.initial_misclassified => Ok(Some(o.l2_distance)),
            Ok(_) => Ok(None),
            Err(Error::Attack(m)) if m == INIT_FAILURE => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let mut dists: Vec<f64> = results.into_iter().flatten().collect();
    if dists.is_empty() {
        return Err(Error::Attack("hsja calibration produced no boundary distances".into()));
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        (dists[n / 2 - 1] + dists[n / 2]) / 2.0
    };
    hsja.d_target = Some(median);
    Ok(hsja)
}

/// Attacks every sample through `oracle`. `net` enables the white-box loss
/// column. Rows come back ordered by sample id.
pub fn attack_samples(
    cfg: &ExperimentConfig,
    oracle: &dyn Oracle,
    net: Option<&Network>,
    samples: &[AttackSample],
    workers: usize,
) -> Result<(Vec<AttackRecord>, AttackMeta)> {
    let strategy = cfg.attack.strategy();
    let hsja = if strategy == Strategy::Hsja {
        calibrate_hsja(cfg, oracle, samples, workers)?
    } else {
        cfg.attack.hsja.clone()
    };
    let scores_ok = oracle.access_level().permits(QueryKind::Scores);
    let records = map_samples(samples, workers, |s| {
        let (outcome, boundary) = run_one(&cfg.attack, &hsja, oracle, s, cfg.seed)?;
        let mut record = AttackRecord {
            sample_id: s.sample_id,
            member: s.member,
            source_index: s.source_index,
            label: s.label,
            success: outcome.success,
            initial_misclassified: outcome.initial_misclassified,
            iterations: outcome.iterations,
            queries: outcome.queries,
            l2_distance: outcome.l2_distance,
            boundary_distance: boundary,
            softmax_response: None,
            prediction_entropy: None,
            modified_entropy: None,
            loss: None,
        };
        if scores_ok {
            let probs = oracle.query_scores(&s.input)?;
            record.softmax_response = Some(signal_softmax_response(&probs)?.value);
            record.prediction_entropy = Some(signal_prediction_entropy(&probs)?.value);
            record.modified_entropy = Some(signal_modified_entropy(&probs, s.label)?.value);
        }
        if let (Some(net), AccessLevel::WhiteBox) = (net, oracle.access_level()) {
            record.loss = Some(signal_loss(&net.forward(&s.input)?, s.label)?.value);
        }
        Ok(record)
    })?;
    let meta = AttackMeta {
        setting: cfg.attack.setting,
        strategy,
        samples: samples.len(),
        hsja_d_target: (strategy == Strategy::Hsja).then_some(hsja.d_target).flatten(),
    };
    Ok((records, meta))
}

/// `attack` subcommand: loads the checkpoint, attacks the selected pool and
/// writes `attacks.csv`, `attacks.json` and `attack_meta.json`.
pub fn run_attack(cfg: &ExperimentConfig, checkpoint: Option<&Path>, workers: usize) -> Result<Vec<AttackRecord>> {
    let out = &cfg.output_dir;
    let ckpt = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let (net, _) = load_checkpoint(&ckpt)?;
    if net.spec() != &cfg.network {
        return Err(Error::InvalidConfig(
            "checkpoint architecture differs from the config".into(),
        ));
    }
    let (train, test) = load_datasets(cfg)?;
    let samples = select_attack_pool(cfg, &train, &test)?;
    let net = Arc::new(net);
    let oracle = LocalOracle::new(Arc::clone(&net), cfg.attack.setting.access_level());
    let (records, meta) = attack_samples(cfg, &oracle, Some(&net), &samples, workers)?;
    write_attack_outputs(cfg, &records, &meta)?;
    Ok(records)
}

/// `attack` against a served model at `endpoint`. The pool is rebuilt from
/// the config's dataset, so the rows line up with a local run.
pub fn run_attack_remote(cfg: &ExperimentConfig, endpoint: &str, workers: usize) -> Result<Vec<AttackRecord>> {
    let oracle = crate::remote::connect_oracle(endpoint, cfg.attack.setting.access_level())?;
    let (train, test) = load_datasets(cfg)?;
    let samples = select_attack_pool(cfg, &train, &test)?;
    let (records, meta) = attack_samples(cfg, &oracle, None, &samples, workers)?;
    write_attack_outputs(cfg, &records, &meta)?;
    Ok(records)
}

fn write_attack_outputs(cfg: &ExperimentConfig, records: &[AttackRecord], meta: &AttackMeta) -> Result<()> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    write_attack_table(records, out.join(ATTACK_TABLE_FILE))?;
    std::fs::write(out.join("attacks.json"), serde_json::to_string_pretty(records)?)?;
    std::fs::write(out.join(ATTACK_META_FILE), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Resamples balanced sets from the attack table and scores every
/// configured signal.
pub fn evaluate_records(cfg: &ExperimentConfig, records: &[AttackRecord]) -> Result<EvaluationReport> {
    let (members, nonmembers): (Vec<&AttackRecord>, Vec<&AttackRecord>) = records.iter().partition(|r| r.member);
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::Evaluation(
            "attack table must contain members and non-members".into(),
        ));
    }
    let column = |rows: &[&AttackRecord], kind: SignalKind| -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.signal(kind)
                    .ok_or_else(|| Error::Evaluation(format!("sample {} has no {kind} value", r.sample_id)))
            })
            .collect()
    };
    let pools = cfg
        .signals
        .iter()
        .map(|&kind| {
            Ok(SignalPools {
                kind,
                members: column(&members, kind)?,
                nonmembers: column(&nonmembers, kind)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let settings = EvalSettings {
        n_per_side: cfg.evaluation.n_per_side,
        repeats: cfg.evaluation.repeats,
        base_seed: cfg.seed,
        fpr_levels: cfg.evaluation.fpr_levels.clone(),
    };
    repeat_evaluate(&pools, &settings)
}

/// `eval` subcommand: writes `report.json`, `report.csv` and one
/// `roc_<signal>.csv` per signal.
pub fn run_eval(cfg: &ExperimentConfig, table: Option<&Path>) -> Result<EvaluationReport> {
    let out = &cfg.output_dir;
    let table = table
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join(ATTACK_TABLE_FILE));
    let records = read_attack_table(&table)?;
    let mut report = evaluate_records(cfg, &records)?;
    if let Some(dir) = table.parent() {
        if let Ok(text) = std::fs::read_to_string(dir.join(ATTACK_META_FILE)) {
            let meta: AttackMeta = serde_json::from_str(&text)?;
            report.context = meta.context();
        }
    }
    report.generated_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    std::fs::create_dir_all(out)?;
    write_report(&report, out.join(REPORT_FILE), ReportFormat::Json)?;
    write_report(&report, out.join("report.csv"), ReportFormat::Csv)?;
    for m in &report.metrics {
        let mut w = csv::Writer::from_path(out.join(format!("roc_{}.csv", m.kind)))?;
        w.write_record(["fpr", "tpr"])?;
        for p in &m.roc {
            w.write_record([p.fpr.to_string(), p.tpr.to_string()])?;
        }
        w.flush()?;
    }
    Ok(report)
}

/// `figure-data` subcommand: `histogram.csv`, `scatter.csv` and `roc.csv`.
pub fn run_figure_data(cfg: &ExperimentConfig, table: Option<&Path>) -> Result<Vec<PathBuf>> {
    let out = &cfg.output_dir;
    let table = table
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join(ATTACK_TABLE_FILE));
    let records = read_attack_table(&table)?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (kind, name) in [
        (FigureKind::Histogram, "histogram.csv"),
        (FigureKind::Scatter, "scatter.csv"),
        (FigureKind::Roc, "roc.csv"),
    ] {
        let path = out.join(name);
        write_figure_data(kind, &records, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json(setting: &str, strategy: Option<&str>, signals: &[&str]) -> String {
        let strategy = strategy.map(|s| format!(r#""strategy": "{s}","#)).unwrap_or_default();
        let signals: Vec<String> = signals.iter().map(|s| format!("\"{s}\"")).collect();
        format!(
            r#"{{
              "dataset": {{"kind": "blobs", "classes": 2, "per_class": 20, "dim": 4, "spread": 0.1}},
              "network": {{"input_shape": [4], "layers": [
                  {{"kind": "dense", "inputs": 4, "outputs": 8}}, {{"kind": "relu"}},
                  {{"kind": "dense", "inputs": 8, "outputs": 2}}], "num_classes": 2}},
              "train": {{"epochs": 2, "learning_rate": 0.1, "batch_size": 4}},
              "attack": {{"setting": "{setting}", {strategy} "simba": {{"basis": "pixel"}}}},
              "signals": [{}],
              "evaluation": {{"n_per_side": 5}},
              "seed": 3
            }}"#,
            signals.join(",")
        )
    }

    #[test]
    fn defaults_follow_setting() {
        let cfg = ExperimentConfig::from_json(&base_json("label-only", None, &["iterations"])).unwrap();
        assert_eq!(cfg.attack.strategy(), Strategy::Hsja);
        assert_eq!(cfg.evaluation.repeats, 20);
        assert_eq!(cfg.attack.pgd, PgdConfig::default());
    }

    #[test]
    fn strategy_setting_mismatch() {
        let err = ExperimentConfig::from_json(&base_json("label-only", Some("pgd"), &["iterations"])).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert!(ExperimentConfig::from_json(&base_json("score-based", Some("pgd"), &["iterations"])).is_err());
        assert!(ExperimentConfig::from_json(&base_json("white-box", Some("hsja"), &["iterations"])).is_ok());
    }

    #[test]
    fn signal_compatibility() {
        assert!(ExperimentConfig::from_json(&base_json("score-based", None, &["loss"])).is_err());
        assert!(ExperimentConfig::from_json(&base_json("label-only", None, &["softmax_response"])).is_err());
        assert!(ExperimentConfig::from_json(&base_json("score-based", None, &["boundary_distance"])).is_err());
        assert!(ExperimentConfig::from_json(&base_json("label-only", None, &["boundary_distance"])).is_ok());
        assert!(ExperimentConfig::from_json(&base_json("white-box", None, &["loss", "modified_entropy"])).is_ok());
        assert!(ExperimentConfig::from_json(&base_json("white-box", None, &["loss", "loss"])).is_err());
    }

    #[test]
    fn invalid_network_is_config_error() {
        let json = base_json("white-box", None, &["iterations"]).replace("\"outputs\": 2", "\"outputs\": 3");
        let err = ExperimentConfig::from_json(&json).unwrap_err();
        assert_eq!(err.category(), crate::error::ErrorCategory::Config);
    }
}
