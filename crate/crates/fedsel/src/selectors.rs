//! Client-selection strategies for the federated engine.
//!
//! Four selectors share the `Selector` protocol: uniform random sampling,
//! a farthest-point k-center spread over weight embeddings, a single
//! deep-Q agent, and the ensemble variant that combines member votes
//! naive-Bayes style and balances its picks across spectral clusters.

use crate::error::{Error, Result};
use crate::fed::{ClusterInfo, RoundFeedback, SelectionContext, Selector};
use crate::rl::{
    nb_combine, select_epsilon_greedy, softmax, DqnAgent, ReplayBuffer, StateEmbedding,
    Transition, DEFAULT_Q_HIDDEN,
};
use crate::seeding::{channel, stream};
use crate::spectral::{scnet_select, spectral_cluster};
use crate::tensor::Tensor;
use rand::Rng;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorKind {
    Random,
    KCenter,
    Dqn,
    DqreScnet,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 4] = [
        SelectorKind::Random,
        SelectorKind::KCenter,
        SelectorKind::Dqn,
        SelectorKind::DqreScnet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::Random => "random",
            SelectorKind::KCenter => "kcenter",
            SelectorKind::Dqn => "dqn",
            SelectorKind::DqreScnet => "dqre-scnet",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SelectorKind::Random),
            "kcenter" => Ok(SelectorKind::KCenter),
            "dqn" => Ok(SelectorKind::Dqn),
            "dqre-scnet" => Ok(SelectorKind::DqreScnet),
            other => Err(Error::Config(format!(
                "unknown selector '{other}' (expected random, kcenter, dqn, or dqre-scnet)"
            ))),
        }
    }
}

/// Knobs for the learning selectors. `k_clusters = 0` means "match
/// clients_per_round"; `bandwidth = 0` means "median pairwise distance".
#[derive(Debug, Clone)]
pub struct RlConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_rounds: usize,
    pub sync_interval: usize,
    pub replay_capacity: usize,
    pub replay_batch: usize,
    pub q_lr: f64,
    pub ensemble_size: usize,
    pub k_clusters: usize,
    pub bandwidth: f64,
    pub q_hidden: Vec<usize>,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_rounds: 200,
            sync_interval: 50,
            replay_capacity: 2048,
            replay_batch: 32,
            q_lr: 0.05,
            ensemble_size: 3,
            k_clusters: 0,
            bandwidth: 0.0,
            q_hidden: DEFAULT_Q_HIDDEN.to_vec(),
        }
    }
}

impl RlConfig {
    fn epsilon_at(&self, round: usize) -> f64 {
        if self.epsilon_decay_rounds == 0 {
            return self.epsilon_end;
        }
        let frac = ((round.saturating_sub(1)) as f64 / self.epsilon_decay_rounds as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

pub fn build_selector(kind: SelectorKind, rl: &RlConfig, run_seed: u64) -> Box<dyn Selector> {
    match kind {
        SelectorKind::Random => Box::new(RandomSelector),
        SelectorKind::KCenter => Box::new(KCenterSelector),
        SelectorKind::Dqn => Box::new(DqnSelector::new(rl.clone(), run_seed)),
        SelectorKind::DqreScnet => Box::new(DqreSelector::new(rl.clone(), run_seed)),
    }
}

/// Uniform k-subset of `0..n`, sorted ascending.
pub fn select_random(n: usize, k: usize, rng: &mut crate::seeding::SeedStream) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k = {k} with {n} candidates")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

pub struct RandomSelector;

impl Selector for RandomSelector {
    fn name(&self) -> &'static str {
        "random"
    }

    fn select(&mut self, ctx: &SelectionContext) -> Result<Vec<usize>> {
        let mut rng = stream(&[ctx.run_seed, ctx.round as u64, channel::SELECT]);
        select_random(ctx.n_clients, ctx.k, &mut rng)
    }
}

/// Greedy farthest-point traversal: the first pick is the point farthest
/// from the centroid, each later pick maximizes the distance to its
/// nearest already-picked point. Lower index wins ties. Returns ids in
/// pick order.
pub fn select_kcenter(points: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k = {k} with {n} points")));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Dimension("points have mixed dimensions".into()));
    }
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut centroid = vec![0.0; d];
    for p in points {
        for (c, v) in centroid.iter_mut().zip(p) {
            *c += v / n as f64;
        }
    }
    let mut picked = Vec::with_capacity(k);
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        if dist2(p, &centroid) > dist2(&points[best], &centroid) {
            best = i;
        }
    }
    picked.push(best);
    // min_d2[i] tracks the squared distance from point i to the nearest
    // picked point.
    let mut min_d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[best])).collect();
    while picked.len() < k {
        let mut next = None;
        for i in 0..n {
            if picked.contains(&i) {
                continue;
            }
            // Strict comparison keeps the lowest id on ties, and coincident
            // points (min distance zero) still get picked eventually.
            if next.map_or(true, |b| min_d2[i] > min_d2[b]) {
                next = Some(i);
            }
        }
        let next = next.expect("k <= n leaves an unpicked point");
        picked.push(next);
        for (i, p) in points.iter().enumerate() {
            min_d2[i] = min_d2[i].min(dist2(p, &points[next]));
        }
    }
    Ok(picked)
}

pub struct KCenterSelector;

impl Selector for KCenterSelector {
    fn name(&self) -> &'static str {
        "kcenter"
    }

    fn needs_embeddings(&self) -> bool {
        true
    }

    fn select(&mut self, ctx: &SelectionContext) -> Result<Vec<usize>> {
        let emb = require_embedding(ctx)?;
        let points: Vec<Vec<f64>> = emb.clients.iter().map(|c| c.to_vec()).collect();
        select_kcenter(&points, ctx.k)
    }
}

fn require_embedding<'a>(ctx: &'a SelectionContext) -> Result<&'a StateEmbedding> {
    ctx.embedding
        .ok_or_else(|| Error::Protocol("selector needs embeddings but got none".into()))
}

/// Per-client agent state: the global model's embedding coordinates, the
/// client's own, and the normalized round index.
fn client_states(emb: &StateEmbedding, round: usize, max_rounds: usize) -> Vec<Vec<f64>> {
    let t = round as f64 / max_rounds.max(1) as f64;
    emb.clients
        .iter()
        .map(|c| vec![emb.global[0], emb.global[1], c[0], c[1], t])
        .collect()
}

/// States of the clients picked last round, waiting for their next-state
/// observation before entering the replay buffer.
struct PendingStep {
    states: Vec<Vec<f64>>,
    reward: f64,
}

fn flush_pending(
    pending: &mut Option<PendingStep>,
    replay: &mut ReplayBuffer,
    next_states: &[Vec<f64>],
) {
    if let Some(p) = pending.take() {
        for state in p.states {
            replay.push(Transition {
                state,
                reward: p.reward,
                next_states: next_states.to_vec(),
                terminal: false,
            });
        }
    }
}

fn observe_step(
    pending: &mut Option<PendingStep>,
    replay: &mut ReplayBuffer,
    last_states: &[Vec<f64>],
    feedback: &RoundFeedback,
) {
    let states: Vec<Vec<f64>> = feedback
        .selected
        .iter()
        .filter_map(|&c| last_states.get(c).cloned())
        .collect();
    if states.is_empty() {
        return;
    }
    if feedback.terminal {
        for state in states {
            replay.push(Transition {
                state,
                reward: feedback.reward,
                next_states: Vec::new(),
                terminal: true,
            });
        }
    } else {
        *pending = Some(PendingStep {
            states,
            reward: feedback.reward,
        });
    }
}

pub struct DqnSelector {
    agent: DqnAgent,
    replay: ReplayBuffer,
    pending: Option<PendingStep>,
    rl: RlConfig,
    train_steps: usize,
    last_states: Vec<Vec<f64>>,
}

impl DqnSelector {
    pub fn new(rl: RlConfig, run_seed: u64) -> Self {
        let agent = DqnAgent::new(
            5,
            &rl.q_hidden,
            rl.gamma,
            &mut stream(&[channel::AGENT_INIT, run_seed, 0]),
        );
        let replay = ReplayBuffer::new(rl.replay_capacity);
        DqnSelector {
            agent,
            replay,
            pending: None,
            rl,
            train_steps: 0,
            last_states: Vec::new(),
        }
    }
}

impl Selector for DqnSelector {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn needs_embeddings(&self) -> bool {
        true
    }

    fn select(&mut self, ctx: &SelectionContext) -> Result<Vec<usize>> {
        let emb = require_embedding(ctx)?;
        let states = client_states(emb, ctx.round, ctx.max_rounds);
        flush_pending(&mut self.pending, &mut self.replay, &states);
        if self.replay.len() >= self.rl.replay_batch {
            let batch = self.replay.sample(
                self.rl.replay_batch,
                &mut stream(&[ctx.run_seed, ctx.round as u64, channel::REPLAY, 0]),
            )?;
            self.agent.td_step(&batch, self.rl.q_lr)?;
            self.train_steps += 1;
            if self.train_steps % self.rl.sync_interval == 0 {
                self.agent.sync_target();
            }
        }
        let q = self.agent.q_values(&states)?;
        let selected = select_epsilon_greedy(
            &q,
            self.rl.epsilon_at(ctx.round),
            ctx.k,
            &mut stream(&[ctx.run_seed, ctx.round as u64, channel::SELECT]),
        )?;
        self.last_states = states;
        Ok(selected)
    }

    fn observe(&mut self, feedback: &RoundFeedback) {
        observe_step(&mut self.pending, &mut self.replay, &self.last_states, feedback);
    }
}

/// Ensemble deep-Q selector with cluster-balanced picks.
///
/// Every member scores all clients; the softmaxed score rows combine into
/// a posterior naive-Bayes style. Clients are spectrally clustered on
/// their embedding coordinates and the posterior drives a round-robin
/// draw across clusters, so each round's cohort spans the cluster
/// structure instead of collapsing onto one region. Exploration swaps the
/// posterior for random scores but keeps the cluster balancing.
pub struct DqreSelector {
    members: Vec<DqnAgent>,
    replay: ReplayBuffer,
    pending: Option<PendingStep>,
    rl: RlConfig,
    train_steps: usize,
    last_states: Vec<Vec<f64>>,
    last_clusters: Option<ClusterInfo>,
}

impl DqreSelector {
    pub fn new(rl: RlConfig, run_seed: u64) -> Self {
        let members = (0..rl.ensemble_size.max(1))
            .map(|m| {
                DqnAgent::new(
                    5,
                    &rl.q_hidden,
                    rl.gamma,
                    &mut stream(&[channel::AGENT_INIT, run_seed, m as u64]),
                )
            })
            .collect();
        let replay = ReplayBuffer::new(rl.replay_capacity);
        DqreSelector {
            members,
            replay,
            pending: None,
            rl,
            train_steps: 0,
            last_states: Vec::new(),
            last_clusters: None,
        }
    }

    /// Posterior over clients from the ensemble's Q values.
    fn posterior(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = states.len();
        let priors = vec![1.0 / n as f64; n];
        let likelihoods = self
            .members
            .iter()
            .map(|m| Ok(softmax(&m.q_values(states)?)))
            .collect::<Result<Vec<_>>>()?;
        nb_combine(&priors, &likelihoods)
    }
}

impl Selector for DqreSelector {
    fn name(&self) -> &'static str {
        "dqre-scnet"
    }

    fn needs_embeddings(&self) -> bool {
        true
    }

    fn select(&mut self, ctx: &SelectionContext) -> Result<Vec<usize>> {
        let emb = require_embedding(ctx)?;
        let states = client_states(emb, ctx.round, ctx.max_rounds);
        flush_pending(&mut self.pending, &mut self.replay, &states);
        if self.replay.len() >= self.rl.replay_batch {
            for (m, agent) in self.members.iter_mut().enumerate() {
                let batch = self.replay.sample(
                    self.rl.replay_batch,
                    &mut stream(&[ctx.run_seed, ctx.round as u64, channel::REPLAY, m as u64]),
                )?;
                agent.td_step(&batch, self.rl.q_lr)?;
            }
            self.train_steps += 1;
            if self.train_steps % self.rl.sync_interval == 0 {
                for agent in &mut self.members {
                    agent.sync_target();
                }
            }
        }

        let mut rng = stream(&[ctx.run_seed, ctx.round as u64, channel::SELECT]);
        let explore = rng.random::<f64>() < self.rl.epsilon_at(ctx.round);
        let scores = if explore {
            // Random scores explore freely while the cluster rotation below
            // still spreads the picks.
            (0..states.len()).map(|_| rng.random::<f64>()).collect()
        } else {
            self.posterior(&states)?
        };

        let points = Tensor::from_rows(
            &emb.clients.iter().map(|c| c.to_vec()).collect::<Vec<_>>(),
        )?;
        let k_clusters = if self.rl.k_clusters == 0 {
            ctx.k
        } else {
            self.rl.k_clusters
        }
        .min(ctx.n_clients);
        let bandwidth = if self.rl.bandwidth > 0.0 {
            Some(self.rl.bandwidth)
        } else {
            None
        };
        let model = spectral_cluster(
            &points,
            k_clusters,
            bandwidth,
            &mut stream(&[ctx.run_seed, ctx.round as u64, channel::CLUSTER]),
        )?;

        let mut selected = scnet_select(&scores, &model.assignments, ctx.k)?;
        selected.sort_unstable();
        self.last_clusters = Some(ClusterInfo {
            assignments: model.assignments,
            num_clusters: model.k,
        });
        self.last_states = states;
        Ok(selected)
    }

    fn observe(&mut self, feedback: &RoundFeedback) {
        observe_step(&mut self.pending, &mut self.replay, &self.last_states, feedback);
    }

    fn cluster_info(&mut self) -> Option<ClusterInfo> {
        self.last_clusters.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn kind_round_trips_through_names() {
        for kind in SelectorKind::ALL {
            assert_eq!(kind.as_str().parse::<SelectorKind>().unwrap(), kind);
        }
        assert!("fancy".parse::<SelectorKind>().is_err());
    }

    #[test]
    fn random_subsets_are_valid_and_cover() {
        let mut seen = HashSet::new();
        for s in 0..200u64 {
            let picked = select_random(10, 3, &mut stream(&[s])).unwrap();
            assert_eq!(picked.len(), 3);
            assert!(picked.windows(2).all(|w| w[0] < w[1]));
            assert!(picked.iter().all(|&i| i < 10));
            seen.extend(picked);
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn kcenter_picks_extremes_first() {
        // Points at 0, 1, and 10 on a line: the far point goes first, then
        // the opposite end.
        let points = vec![vec![0.0], vec![1.0], vec![10.0]];
        assert_eq!(select_kcenter(&points, 2).unwrap(), vec![2, 0]);
        assert_eq!(select_kcenter(&points, 3).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn kcenter_breaks_ties_toward_lower_ids() {
        // A square: all corners tie in distance to the centroid.
        let points = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        let picked = select_kcenter(&points, 2).unwrap();
        assert_eq!(picked[0], 0);
        assert_eq!(picked[1], 3);
    }

    #[test]
    fn kcenter_survives_duplicate_points() {
        let points = vec![vec![1.0], vec![1.0], vec![1.0]];
        let picked = select_kcenter(&points, 3).unwrap();
        let set: HashSet<usize> = picked.into_iter().collect();
        assert_eq!(set, HashSet::from([0, 1, 2]));
    }

    #[test]
    fn epsilon_anneals_linearly() {
        let rl = RlConfig {
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_decay_rounds: 10,
            ..RlConfig::default()
        };
        assert_eq!(rl.epsilon_at(1), 1.0);
        assert!((rl.epsilon_at(6) - 0.5).abs() < 1e-12);
        assert_eq!(rl.epsilon_at(11), 0.0);
        assert_eq!(rl.epsilon_at(500), 0.0);
    }

    #[test]
    fn client_states_carry_global_and_round() {
        let emb = StateEmbedding {
            clients: vec![[1.0, 2.0], [3.0, 4.0]],
            global: [9.0, 8.0],
        };
        let states = client_states(&emb, 5, 10);
        assert_eq!(states[0], vec![9.0, 8.0, 1.0, 2.0, 0.5]);
        assert_eq!(states[1], vec![9.0, 8.0, 3.0, 4.0, 0.5]);
    }
}
