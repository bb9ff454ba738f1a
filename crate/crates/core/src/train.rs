//! Joint BPR training of the group and user objectives.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_training_negatives, Entity, EvalQuery, InteractionDataset, SplitDataset, Task};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ModelScorer};
use crate::model::{mlp_on_tape, ConsensusModel, ForwardVars, ModelParams, ParamVars, ViewMask, DEFAULT_DIM};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::{stream, StreamPurpose};
use crate::tensor::{Matrix, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub layers: usize,
    pub n_neg_train: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs between validation passes; 0 disables validation.
    pub eval_every: usize,
    /// Early-stop after this many validation passes without a better
    /// group HR@10. `None` trains for the full budget.
    pub patience: Option<usize>,
    pub views: ViewMask,
    pub group_self_loops: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            layers: 3,
            n_neg_train: 8,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 100,
            seed: 0,
            eval_every: 0,
            patience: None,
            views: ViewMask::ALL,
            group_self_loops: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("layers", self.layers),
            ("n_neg_train", self.n_neg_train),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Sampled `(positive, negative)` pairs of one entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityPairs {
    pub entity: usize,
    pub pairs: Vec<(usize, usize)>,
}

/// Samples pairs for every entity of `task` that has training interactions.
pub fn sample_pairs<R: Rng + ?Sized>(d: &InteractionDataset, task: Task, n: usize, rng: &mut R) -> Result<Vec<EntityPairs>> {
    let mut out = Vec::new();
    for e in 0..d.entity_count(task) {
        let entity = match task {
            Task::Group => Entity::Group(e),
            Task::User => Entity::User(e),
        };
        if d.interactions(entity).is_empty() {
            continue;
        }
        out.push(EntityPairs {
            entity: e,
            pairs: sample_training_negatives(d, entity, n, rng)?,
        });
    }
    Ok(out)
}

/// `−Σ_e (1/|D_e|) Σ ln σ(score(e, j) − score(e, j'))` with
/// `score(e, j) = MLP(entities[e] ⊙ items[j])`.
fn bpr_loss(
    tape: &mut Tape,
    vars: &ParamVars,
    entities: Var,
    items: Var,
    pairs: &[EntityPairs],
    task: Task,
) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let mut unique: HashMap<(usize, usize), usize> = HashMap::new();
    let (mut pos_entity, mut pos_item) = (Vec::new(), Vec::new());
    let (mut pair_pos, mut neg_entity, mut neg_item, mut weights) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for ep in pairs {
        if ep.pairs.is_empty() {
            return Err(Error::EmptyPairs(match task {
                Task::Group => Entity::Group(ep.entity),
                Task::User => Entity::User(ep.entity),
            }));
        }
        let w = 1.0 / ep.pairs.len() as f64;
        for &(j, neg) in &ep.pairs {
            let slot = *unique.entry((ep.entity, j)).or_insert_with(|| {
                pos_entity.push(ep.entity);
                pos_item.push(j);
                pos_entity.len() - 1
            });
            pair_pos.push(slot);
            neg_entity.push(ep.entity);
            neg_item.push(neg);
            weights.push(w);
        }
    }
    let score = |tape: &mut Tape, e: Vec<usize>, j: Vec<usize>| -> Result<Var> {
        let er = tape.row_select(entities, e)?;
        let ir = tape.row_select(items, j)?;
        let x = tape.hadamard(er, ir)?;
        mlp_on_tape(tape, vars, x)
    };
    let pos_unique = score(tape, pos_entity, pos_item)?;
    let pos = tape.row_select(pos_unique, pair_pos)?;
    let neg = score(tape, neg_entity, neg_item)?;
    let diff = tape.sub(pos, neg)?;
    let log_lik = tape.ln_sigmoid(diff)?;
    let w = tape.constant(Matrix::column(&weights));
    let weighted = tape.scale_rows(log_lik, w)?;
    let total = tape.sum(weighted)?;
    Ok(tape.scale(total, -1.0)?)
}

/// Group BPR loss over fused group and refined item representations.
pub fn bpr_loss_group(tape: &mut Tape, vars: &ParamVars, fwd: &ForwardVars, pairs: &[EntityPairs]) -> Result<Var> {
    bpr_loss(tape, vars, fwd.fused.fused, fwd.items_refined, pairs, Task::Group)
}

/// User BPR loss over the base user and item tables.
pub fn bpr_loss_user(tape: &mut Tape, vars: &ParamVars, pairs: &[EntityPairs]) -> Result<Var> {
    bpr_loss(tape, vars, vars.users, vars.items, pairs, Task::User)
}

/// Value of the joint loss and its gradients for fixed pairs.
#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub loss_group: f64,
    pub loss_user: f64,
    /// One gradient per tensor, in parameter order.
    pub gradients: Vec<Matrix>,
}

impl LossEvaluation {
    pub fn total(&self) -> f64 {
        self.loss_group + self.loss_user
    }
}

/// Builds one forward pass, both BPR terms, and back-propagates their sum.
pub fn joint_loss(
    model: &ConsensusModel,
    params: &ModelParams,
    group_pairs: &[EntityPairs],
    user_pairs: &[EntityPairs],
) -> Result<LossEvaluation> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let fwd = model.forward_on_tape(&mut tape, &vars)?;
    let lg = bpr_loss_group(&mut tape, &vars, &fwd, group_pairs)?;
    let lu = bpr_loss_user(&mut tape, &vars, user_pairs)?;
    let total = tape.add(lg, lu)?;
    let gradients = tape.backward(total)?.into_vec();
    Ok(LossEvaluation {
        loss_group: tape.value(lg).data()[0],
        loss_user: tape.value(lu).data()[0],
        gradients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_group: f64,
    pub loss_user: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub task: Task,
    pub metric: String,
    pub k: usize,
    pub value: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Epoch(EpochRecord),
    Validation(ValidationRecord),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn epochs(&self) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Epoch(e) => Some(e),
            LogRecord::Validation(_) => None,
        })
    }

    pub fn validations(&self) -> impl Iterator<Item = &ValidationRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Validation(v) => Some(v),
            LogRecord::Epoch(_) => None,
        })
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r).expect("log records serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    file: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}

/// Stateful training loop: one full-graph forward, one backward and one Adam
/// step per epoch over freshly sampled pairs.
pub struct Trainer<'a> {
    split: &'a SplitDataset,
    cfg: TrainConfig,
    model: ConsensusModel,
    params: ModelParams,
    adam: AdamState,
    negatives: rand_chacha::ChaCha8Rng,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(split: &'a SplitDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let d = &split.train;
        let params = ModelParams::init(
            d.num_users(),
            d.num_items(),
            d.num_groups(),
            cfg.dim,
            &mut stream(cfg.seed, StreamPurpose::Init),
        );
        Self::with_params(split, cfg, params)
    }

    /// Continues from existing parameters with a fresh optimizer state.
    pub fn with_params(split: &'a SplitDataset, cfg: &TrainConfig, params: ModelParams) -> Result<Self> {
        cfg.validate()?;
        let d = &split.train;
        if d.num_groups() == 0 && d.num_users() == 0 {
            return Err(Error::InvalidDataset("training dataset is empty".into()));
        }
        if params.dim() != cfg.dim {
            return Err(Error::Config(format!(
                "parameters have dim {} but config asks for {}",
                params.dim(),
                cfg.dim
            )));
        }
        let model = ConsensusModel::new(d, cfg.layers, cfg.views, cfg.group_self_loops);
        let adam = AdamState::new(params.tensors().map(Matrix::shape));
        Ok(Self {
            split,
            cfg: cfg.clone(),
            model,
            params,
            adam,
            negatives: stream(cfg.seed, StreamPurpose::TrainNegatives),
            epoch: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn model(&self) -> &ConsensusModel {
        &self.model
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// Runs one epoch. The recorded losses are those of the pre-step
    /// parameters on this epoch's pairs.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let start = Instant::now();
        self.epoch += 1;
        let d = &self.split.train;
        let group_pairs = sample_pairs(d, Task::Group, self.cfg.n_neg_train, &mut self.negatives)?;
        let user_pairs = sample_pairs(d, Task::User, self.cfg.n_neg_train, &mut self.negatives)?;
        let eval = joint_loss(&self.model, &self.params, &group_pairs, &user_pairs).map_err(|e| match e {
            Error::Tensor(TensorError::NonFinite { .. }) => Error::NonFiniteLoss {
                epoch: self.epoch,
                loss_group: f64::NAN,
                loss_user: f64::NAN,
            },
            other => other,
        })?;
        if !eval.total().is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                loss_group: eval.loss_group,
                loss_user: eval.loss_user,
            });
        }
        let mut tensors = self.params.tensors_mut();
        adam_step(&mut tensors, &eval.gradients, &mut self.adam, &self.cfg.adam());
        Ok(EpochRecord {
            epoch: self.epoch,
            loss_group: eval.loss_group,
            loss_user: eval.loss_user,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Validation metrics of the current parameters.
    pub fn validate(&self, queries: &[EvalQuery], ks: &[usize]) -> Result<Vec<ValidationRecord>> {
        let outputs = self.model.forward(&self.params)?;
        let scorer = ModelScorer::new(&self.params, &outputs);
        let mut out = Vec::new();
        for task in [Task::Group, Task::User] {
            let report = evaluate(&scorer, queries, ks, task, self.model.propagation_passes())?;
            if report.n_queries == 0 {
                continue;
            }
            for (i, &k) in report.ks.iter().enumerate() {
                for (metric, value) in [("HR", report.hr[i]), ("NDCG", report.ndcg[i])] {
                    out.push(ValidationRecord {
                        epoch: self.epoch,
                        task,
                        metric: metric.into(),
                        k,
                        value,
                        n_queries: report.n_queries,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Trains for the configured epoch budget without validation.
pub fn train(split: &SplitDataset, cfg: &TrainConfig) -> Result<(ModelParams, TrainingLog)> {
    train_with_validation(split, cfg, &[], &[])
}

/// Trains, validating every `cfg.eval_every` epochs on `queries`. With
/// `cfg.patience` set, stops once group HR@10 (or the largest K) has not
/// improved for that many validation passes and returns the best
/// parameters seen.
pub fn train_with_validation(
    split: &SplitDataset,
    cfg: &TrainConfig,
    queries: &[EvalQuery],
    ks: &[usize],
) -> Result<(ModelParams, TrainingLog)> {
    let mut trainer = Trainer::new(split, cfg)?;
    let mut log = TrainingLog::default();
    let watch_k = if ks.contains(&10) { Some(10) } else { ks.iter().copied().max() };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        log.records.push(LogRecord::Epoch(trainer.run_epoch()?));
        if cfg.eval_every == 0 || epoch % cfg.eval_every != 0 || queries.is_empty() || ks.is_empty() {
            continue;
        }
        let records = trainer.validate(queries, ks)?;
        let watched = records
            .iter()
            .find(|r| r.task == Task::Group && r.metric == "HR" && Some(r.k) == watch_k)
            .map(|r| r.value);
        log.records.extend(records.into_iter().map(LogRecord::Validation));
        let (Some(patience), Some(score)) = (cfg.patience, watched) else { continue };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, trainer.params().clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                break;
            }
        }
    }
    let params = match best {
        Some((_, p)) => p,
        None => trainer.into_params(),
    };
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pair_setup() -> (ConsensusModel, ModelParams) {
        let d = InteractionDataset::new(
            3,
            4,
            vec![vec![0, 1], vec![1, 2]],
            vec![vec![0, 1], vec![2]],
            vec![vec![0], vec![1, 3], vec![2]],
        )
        .unwrap();
        let model = ConsensusModel::new(&d, 2, ViewMask::ALL, true);
        let params = ModelParams::init(3, 4, 2, 4, &mut stream(1, StreamPurpose::Init));
        (model, params)
    }

    #[test]
    fn equal_scores_give_ln2() {
        let (model, params) = two_pair_setup();
        // identical positive and negative item → zero score difference
        let pairs = vec![EntityPairs {
            entity: 0,
            pairs: vec![(1, 1)],
        }];
        let e = joint_loss(&model, &params, &pairs, &pairs).unwrap();
        assert!((e.loss_group - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((e.loss_user - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn sum_over_entities_mean_over_pairs() {
        let (model, params) = two_pair_setup();
        let one = |entity, pairs| vec![EntityPairs { entity, pairs }];
        let a = joint_loss(&model, &params, &one(0, vec![(0, 2), (1, 3)]), &[]).unwrap();
        let b = joint_loss(&model, &params, &one(1, vec![(2, 0)]), &[]).unwrap();
        let mut both = one(0, vec![(0, 2), (1, 3)]);
        both.extend(one(1, vec![(2, 0)]));
        let ab = joint_loss(&model, &params, &both, &[]).unwrap();
        assert!((ab.loss_group - (a.loss_group + b.loss_group)).abs() < 1e-14);

        let x = joint_loss(&model, &params, &[], &one(1, vec![(1, 0)])).unwrap().loss_user;
        let y = joint_loss(&model, &params, &[], &one(1, vec![(3, 2)])).unwrap().loss_user;
        let xy = joint_loss(&model, &params, &[], &one(1, vec![(1, 0), (3, 2)])).unwrap().loss_user;
        assert!((xy - (x + y) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn no_users_means_zero_user_loss() {
        let (model, params) = two_pair_setup();
        let e = joint_loss(&model, &params, &[], &[]).unwrap();
        assert_eq!(e.loss_user, 0.0);
        assert_eq!(e.loss_group, 0.0);
    }

    #[test]
    fn empty_pair_list_is_rejected() {
        let (model, params) = two_pair_setup();
        let pairs = vec![EntityPairs {
            entity: 1,
            pairs: vec![],
        }];
        let err = joint_loss(&model, &params, &pairs, &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyPairs(Entity::Group(1))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { dim: 0, ..Default::default() },
            TrainConfig { layers: 0, ..Default::default() },
            TrainConfig { n_neg_train: 0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn log_round_trips_through_jsonl() {
        let log = TrainingLog {
            records: vec![
                LogRecord::Epoch(EpochRecord {
                    epoch: 1,
                    loss_group: 0.5,
                    loss_user: 0.25,
                    seconds: 0.01,
                }),
                LogRecord::Validation(ValidationRecord {
                    epoch: 1,
                    task: Task::Group,
                    metric: "HR".into(),
                    k: 5,
                    value: 0.5,
                    n_queries: 2,
                }),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        log.write_jsonl(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"epoch":1,"loss_group":0.5,"loss_user":0.25,"seconds":0.01}"#));
        assert_eq!(TrainingLog::read_jsonl(&path).unwrap(), log);
    }
}
