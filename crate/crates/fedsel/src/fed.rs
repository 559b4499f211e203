//! The federated round loop: non-IID partitioning, local training,
//! weighted aggregation, evaluation, and the selector protocol that ties
//! them together.
//!
//! Determinism contract: every random decision derives its stream from
//! `(run_seed, round, client_id, purpose)`, and aggregation always folds
//! clients in ascending id order. Running clients in parallel therefore
//! changes wall time only, never a single output byte.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::nn::{self, LayerSpec, LossConfig, LossKind, ModelParams};
use crate::rl::{reward_signal, StateEmbedding};
use crate::seeding::{channel, stream};
use crate::tensor::Tensor;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct PartitionConfig {
    pub n_clients: usize,
    /// Fraction of every client's quota drawn from its dominant class.
    /// 0 is an IID split, 1 gives single-class clients.
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClientShard {
    pub client_id: usize,
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub dominant_class: usize,
}

impl ClientShard {
    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut h = vec![0; num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Splits a dataset across clients with a controlled label skew.
///
/// Client `i` is dominated by class `i mod num_classes`. Each client first
/// receives `floor(sigma * quota)` samples of its dominant class from a
/// shuffled per-class pool, then the remaining quota is dealt uniformly
/// from everything left over. The shards are a partition: every sample
/// lands in exactly one shard.
pub fn partition_noniid(ds: &Dataset, cfg: &PartitionConfig) -> Result<Vec<ClientShard>> {
    if !(0.0..=1.0).contains(&cfg.sigma) {
        return Err(Error::Argument(format!(
            "sigma must lie in [0, 1], got {}",
            cfg.sigma
        )));
    }
    let n = ds.len();
    let k = cfg.n_clients;
    if k == 0 || k > n {
        return Err(Error::Argument(format!("{k} clients for {n} samples")));
    }

    // Quotas: floor(n / k) each, the remainder going to the first clients.
    let base = n / k;
    let extra = n % k;
    let quotas: Vec<usize> = (0..k).map(|i| base + usize::from(i < extra)).collect();

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &label) in ds.labels.iter().enumerate() {
        pools[label].push(i);
    }
    for (class, pool) in pools.iter_mut().enumerate() {
        let mut rng = stream(&[channel::PARTITION, cfg.seed, class as u64]);
        for i in (1..pool.len()).rev() {
            let j = rng.random_range(0..=i);
            pool.swap(i, j);
        }
    }

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, quota) in quotas.iter().enumerate() {
        let dominant = i % ds.num_classes;
        let want = (cfg.sigma * *quota as f64).floor() as usize;
        let pool = &mut pools[dominant];
        if pool.len() < want {
            return Err(Error::Partition {
                class: dominant,
                detail: format!(
                    "client {i} needs {want} dominant samples, {} remain",
                    pool.len()
                ),
            });
        }
        assigned[i].extend(pool.drain(pool.len() - want..));
    }

    let mut rest: Vec<usize> = pools.into_iter().flatten().collect();
    let mut rng = stream(&[channel::PARTITION, cfg.seed, 0xFFFF]);
    for i in (1..rest.len()).rev() {
        let j = rng.random_range(0..=i);
        rest.swap(i, j);
    }
    let mut cursor = 0;
    for (i, quota) in quotas.iter().enumerate() {
        let need = quota - assigned[i].len();
        assigned[i].extend_from_slice(&rest[cursor..cursor + need]);
        cursor += need;
    }
    debug_assert_eq!(cursor, rest.len());

    let width = ds.feature_len();
    let shards = assigned
        .into_iter()
        .enumerate()
        .map(|(i, mut idx)| {
            idx.sort_unstable();
            let mut data = Vec::with_capacity(idx.len() * width);
            let mut labels = Vec::with_capacity(idx.len());
            for &s in &idx {
                data.extend_from_slice(ds.samples.row(s));
                labels.push(ds.labels[s]);
            }
            let mut shape = vec![idx.len()];
            shape.extend_from_slice(ds.feature_shape());
            Ok(ClientShard {
                client_id: i,
                samples: Tensor::new(shape, data)?,
                labels,
                dominant_class: i % ds.num_classes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(shards)
}

fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(vec![labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l] = 1.0;
    }
    t
}

fn batch_rows(samples: &Tensor, idx: &[usize], feature_shape: &[usize]) -> Tensor {
    let w = samples.row_len();
    let mut data = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        data.extend_from_slice(samples.row(i));
    }
    let mut shape = vec![idx.len()];
    shape.extend_from_slice(feature_shape);
    Tensor::new(shape, data).expect("sized to shape")
}

/// Local SGD on one shard, starting from the global parameters. Zero
/// epochs return the global parameters unchanged, bit for bit. Sample
/// order reshuffles every epoch from the caller's stream; the trailing
/// partial batch is kept.
pub fn local_train(
    global: &ModelParams,
    spec: &[LayerSpec],
    shard: &ClientShard,
    num_classes: usize,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    reg_lambda: f64,
    rng: &mut crate::seeding::SeedStream,
) -> Result<ModelParams> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be positive".into()));
    }
    if shard.labels.is_empty() {
        return Err(Error::Argument(format!(
            "client {} has an empty shard",
            shard.client_id
        )));
    }
    let mut params = global.clone();
    let cfg = LossConfig {
        kind: LossKind::CrossEntropy,
        reg_lambda,
    };
    let n = shard.labels.len();
    let feature_shape: Vec<usize> = shard.samples.shape()[1..].to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch_size) {
            let x = batch_rows(&shard.samples, chunk, &feature_shape);
            let labels: Vec<usize> = chunk.iter().map(|&i| shard.labels[i]).collect();
            let t = one_hot(&labels, num_classes);
            let (_, grads) = nn::loss_and_grad(&params, spec, &x, &t, &cfg, rng)?;
            params = nn::sgd_step(&params, &grads, lr)?;
        }
    }
    Ok(params)
}

/// Weighted average of client parameters. Weights are normalized to sum
/// to one; clients are folded in the order given, so callers pass them in
/// ascending client-id order to keep results reproducible. Averaging a
/// single model returns it unchanged.
pub fn fedavg_aggregate(locals: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    if locals.is_empty() {
        return Err(Error::Aggregation("no client updates".into()));
    }
    if locals.len() != weights.len() {
        return Err(Error::Aggregation(format!(
            "{} updates but {} weights",
            locals.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Aggregation("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Aggregation("weights sum to zero".into()));
    }
    for (i, l) in locals.iter().enumerate().skip(1) {
        if !l.structure_matches(&locals[0]) {
            return Err(Error::Aggregation(format!(
                "update {i} has a different parameter structure"
            )));
        }
    }
    let flats: Vec<Vec<f64>> = locals.iter().map(|l| l.flatten()).collect();
    let mut acc = vec![0.0; flats[0].len()];
    for (flat, &w) in flats.iter().zip(weights) {
        let wn = w / total;
        for (a, &v) in acc.iter_mut().zip(flat) {
            *a += wn * v;
        }
    }
    ModelParams::from_flat_like(&locals[0], &acc)
}

/// Accuracy, mean cross-entropy loss, and the full score matrix on a
/// dataset, evaluated in fixed-size batches.
pub fn evaluate(
    params: &ModelParams,
    spec: &[LayerSpec],
    ds: &Dataset,
    rng: &mut crate::seeding::SeedStream,
) -> Result<(f64, f64, Tensor)> {
    if ds.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    let n = ds.len();
    let feature_shape: Vec<usize> = ds.samples.shape()[1..].to_vec();
    let mut scores = Tensor::zeros(vec![n, ds.num_classes]);
    let mut hits = 0usize;
    let mut loss = 0.0;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(256) {
        let x = batch_rows(&ds.samples, chunk, &feature_shape);
        let out = nn::forward(params, spec, &x, rng)?;
        if out.row_len() != ds.num_classes {
            return Err(Error::Dimension(format!(
                "model emits {} scores, dataset has {} classes",
                out.row_len(),
                ds.num_classes
            )));
        }
        for (r, &i) in chunk.iter().enumerate() {
            let row = out.row(r);
            scores.row_mut(i).copy_from_slice(row);
            if metrics::argmax_low(row) == ds.labels[i] {
                hits += 1;
            }
            loss -= row[ds.labels[i]].max(1e-300).ln();
        }
    }
    Ok((hits as f64 / n as f64, loss / n as f64, scores))
}

/// What a selector sees before choosing the round's clients.
pub struct SelectionContext<'a> {
    /// 1-based round about to run.
    pub round: usize,
    pub max_rounds: usize,
    pub n_clients: usize,
    /// How many clients to pick.
    pub k: usize,
    /// Present when the selector asked for embeddings.
    pub embedding: Option<&'a StateEmbedding>,
    pub run_seed: u64,
    pub prev_accuracy: f64,
    pub target_accuracy: f64,
}

/// What a selector learns after the round it chose.
#[derive(Debug, Clone)]
pub struct RoundFeedback {
    pub round: usize,
    pub reward: f64,
    pub accuracy: f64,
    pub selected: Vec<usize>,
    pub terminal: bool,
}

/// Cluster structure a selector derived this round, for the cluster log.
#[derive(Debug, Clone)]
pub struct ClusterInfo {
    pub assignments: Vec<usize>,
    pub num_clusters: usize,
}

pub trait Selector {
    fn name(&self) -> &'static str;

    /// Whether the engine must train every client this round and hand the
    /// selector a weight-delta embedding. Costly, so off by default.
    fn needs_embeddings(&self) -> bool {
        false
    }

    /// Picks exactly `ctx.k` distinct client ids in `0..ctx.n_clients`.
    fn select(&mut self, ctx: &SelectionContext) -> Result<Vec<usize>>;

    /// Reward feedback for the round just aggregated.
    fn observe(&mut self, _feedback: &RoundFeedback) {}

    /// Cluster structure computed during the last `select`, if any.
    fn cluster_info(&mut self) -> Option<ClusterInfo> {
        None
    }
}

/// One line of rounds.jsonl.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<usize>,
    pub test_acc: f64,
    pub test_loss: f64,
    pub reward: f64,
}

/// One line of clusters.jsonl: the embedding and clustering a selector
/// worked from, labeled by the sign of the reward it earned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub round: usize,
    pub label: String,
    pub assignments: Vec<usize>,
    pub selected: Vec<usize>,
    pub clients: Vec<[f64; 2]>,
    pub global: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct FedConfig {
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub local_lr: f64,
    pub local_batch: usize,
    pub target_accuracy: f64,
    pub max_rounds: usize,
    pub reg_lambda: f64,
    /// Stop as soon as the target is reached instead of running out the
    /// round budget.
    pub stop_at_target: bool,
    /// Train the round's clients on the rayon pool. Outputs are identical
    /// either way.
    pub parallel: bool,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig {
            clients_per_round: 4,
            local_epochs: 1,
            local_lr: 0.05,
            local_batch: 32,
            target_accuracy: 0.9,
            max_rounds: 100,
            reg_lambda: 0.0,
            stop_at_target: true,
            parallel: false,
        }
    }
}

/// Server-side simulation state for one run.
pub struct Engine {
    spec: Vec<LayerSpec>,
    pub global: ModelParams,
    shards: Vec<ClientShard>,
    test: Dataset,
    pub cfg: FedConfig,
    run_seed: u64,
    round: usize,
    prev_accuracy: f64,
    reached_target: bool,
    pub records: Vec<RoundRecord>,
    pub cluster_records: Vec<ClusterRecord>,
    last_scores: Option<Tensor>,
    /// Parameter-sample units of work done so far; the basis of the
    /// deterministic runtime column in reports.
    work_units: u64,
}

impl Engine {
    pub fn new(
        spec: Vec<LayerSpec>,
        shards: Vec<ClientShard>,
        test: Dataset,
        cfg: FedConfig,
        run_seed: u64,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Argument("no client shards".into()));
        }
        if cfg.clients_per_round == 0 || cfg.clients_per_round > shards.len() {
            return Err(Error::Argument(format!(
                "clients_per_round = {} with {} clients",
                cfg.clients_per_round,
                shards.len()
            )));
        }
        if cfg.max_rounds == 0 {
            return Err(Error::Argument("max_rounds must be positive".into()));
        }
        let global = ModelParams::init(&spec, &mut stream(&[channel::MODEL_INIT, run_seed]));
        Ok(Engine {
            spec,
            global,
            shards,
            test,
            cfg,
            run_seed,
            round: 0,
            prev_accuracy: 0.0,
            reached_target: false,
            records: Vec::new(),
            cluster_records: Vec::new(),
            last_scores: None,
            work_units: 0,
        })
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn rounds_run(&self) -> usize {
        self.round
    }

    pub fn reached_target(&self) -> bool {
        self.reached_target
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_acc).collect()
    }

    /// Nominal seconds of compute at a fixed rate of parameter-sample
    /// units per second. Deterministic, unlike wall time, so it can live
    /// in byte-compared output files.
    pub fn runtime_seconds(&self) -> f64 {
        self.work_units as f64 / 1e9
    }

    fn local_update(&self, client: usize, round: usize) -> Result<ModelParams> {
        let mut rng = stream(&[
            self.run_seed,
            round as u64,
            client as u64,
            channel::LOCAL_TRAIN,
        ]);
        local_train(
            &self.global,
            &self.spec,
            &self.shards[client],
            self.test.num_classes,
            self.cfg.local_epochs,
            self.cfg.local_lr,
            self.cfg.local_batch,
            self.cfg.reg_lambda,
            &mut rng,
        )
    }

    fn validate_selection(&self, selected: &[usize]) -> Result<()> {
        if selected.len() != self.cfg.clients_per_round {
            return Err(Error::Protocol(format!(
                "selector returned {} ids, expected {}",
                selected.len(),
                self.cfg.clients_per_round
            )));
        }
        let mut seen = vec![false; self.shards.len()];
        for &id in selected {
            if id >= self.shards.len() {
                return Err(Error::Protocol(format!("client id {id} out of range")));
            }
            if seen[id] {
                return Err(Error::Protocol(format!("client id {id} selected twice")));
            }
            seen[id] = true;
        }
        Ok(())
    }

    /// Runs one round: select, train, aggregate, evaluate, feed back.
    pub fn run_round(&mut self, selector: &mut dyn Selector) -> Result<&RoundRecord> {
        let round = self.round + 1;
        let n = self.shards.len();
        let param_count = nn::param_count(&self.spec) as u64;

        // Selectors that score clients need every client's local update
        // this round, not just the chosen ones.
        let mut locals_all: Vec<Option<ModelParams>> = (0..n).map(|_| None).collect();
        let embedding = if selector.needs_embeddings() {
            let updates = self.train_clients(&(0..n).collect::<Vec<_>>(), round)?;
            let global_flat = self.global.flatten();
            let deltas: Vec<Vec<f64>> = updates
                .iter()
                .map(|u| {
                    u.flatten()
                        .iter()
                        .zip(&global_flat)
                        .map(|(l, g)| l - g)
                        .collect()
                })
                .collect();
            for (slot, u) in locals_all.iter_mut().zip(updates) {
                *slot = Some(u);
            }
            Some(crate::rl::embed_weights(&deltas, &global_flat)?)
        } else {
            None
        };

        let ctx = SelectionContext {
            round,
            max_rounds: self.cfg.max_rounds,
            n_clients: n,
            k: self.cfg.clients_per_round,
            embedding: embedding.as_ref(),
            run_seed: self.run_seed,
            prev_accuracy: self.prev_accuracy,
            target_accuracy: self.cfg.target_accuracy,
        };
        let mut selected = selector.select(&ctx)?;
        self.validate_selection(&selected)?;
        selected.sort_unstable();

        let missing: Vec<usize> = selected
            .iter()
            .copied()
            .filter(|&c| locals_all[c].is_none())
            .collect();
        if !missing.is_empty() {
            let trained = self.train_clients(&missing, round)?;
            for (c, p) in missing.into_iter().zip(trained) {
                locals_all[c] = Some(p);
            }
        }
        let locals: Vec<ModelParams> = selected
            .iter()
            .map(|&c| locals_all[c].take().expect("trained above"))
            .collect();
        let weights: Vec<f64> = selected
            .iter()
            .map(|&c| self.shards[c].sample_count() as f64)
            .collect();
        self.global = fedavg_aggregate(&locals, &weights)?;

        let mut eval_rng = stream(&[self.run_seed, round as u64, channel::EVAL]);
        let (acc, loss, scores) = evaluate(&self.global, &self.spec, &self.test, &mut eval_rng)?;
        self.work_units += self.test.len() as u64 * param_count;
        self.last_scores = Some(scores);

        let (reward, crossed) = reward_signal(self.prev_accuracy, acc, self.cfg.target_accuracy);
        let terminal = crossed || round == self.cfg.max_rounds;
        selector.observe(&RoundFeedback {
            round,
            reward,
            accuracy: acc,
            selected: selected.clone(),
            terminal,
        });
        if let (Some(info), Some(emb)) = (selector.cluster_info(), embedding.as_ref()) {
            self.cluster_records.push(ClusterRecord {
                round,
                label: if reward > 0.0 { "reward" } else { "penalty" }.to_string(),
                assignments: info.assignments,
                selected: selected.clone(),
                clients: emb.clients.clone(),
                global: emb.global,
            });
        }

        self.records.push(RoundRecord {
            round,
            selected,
            test_acc: acc,
            test_loss: loss,
            reward,
        });
        self.prev_accuracy = acc;
        self.reached_target |= crossed;
        self.round = round;
        Ok(self.records.last().expect("just pushed"))
    }

    fn train_clients(&mut self, clients: &[usize], round: usize) -> Result<Vec<ModelParams>> {
        let param_count = nn::param_count(&self.spec) as u64;
        for &c in clients {
            self.work_units += (self.shards[c].sample_count() * self.cfg.local_epochs) as u64
                * param_count;
        }
        let eng: &Engine = self;
        if eng.cfg.parallel {
            clients
                .par_iter()
                .map(|&c| eng.local_update(c, round))
                .collect()
        } else {
            clients.iter().map(|&c| eng.local_update(c, round)).collect()
        }
    }

    /// Runs rounds until the budget is exhausted or, when configured, the
    /// target accuracy is reached.
    pub fn run(&mut self, selector: &mut dyn Selector) -> Result<()> {
        while self.round < self.cfg.max_rounds
            && !(self.cfg.stop_at_target && self.reached_target)
        {
            self.run_round(selector)?;
        }
        Ok(())
    }

    /// First 1-based round whose accuracy met the target.
    pub fn rounds_to_target(&self) -> Option<usize> {
        metrics::rounds_to_target(&self.accuracies(), self.cfg.target_accuracy)
    }

    /// Full metrics of the current global model, scored from the last
    /// evaluation of the run.
    pub fn final_metrics(&self) -> Result<MetricsReport> {
        let scores = self
            .last_scores
            .as_ref()
            .ok_or_else(|| Error::Argument("no rounds have run".into()))?;
        let preds: Vec<usize> = (0..scores.rows())
            .map(|i| metrics::argmax_low(scores.row(i)))
            .collect();
        metrics::metrics_report(&self.test.labels, &preds, scores, self.runtime_seconds())
    }
}
