//! Value-based selection machinery: discounted returns, policy and TD
//! losses, a small deep-Q agent with a frozen target copy, naive-Bayes
//! ensemble voting, and the PCA embedding that turns weight deltas into
//! low-dimensional client states.

use crate::error::{Error, Result};
use crate::nn::{self, LayerSpec, LossConfig, ModelParams};
use crate::seeding::SeedStream;
use crate::tensor::Tensor;
use rand::Rng;

/// How the discount exponent is indexed when accumulating returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discounting {
    /// Element `j` gets `sum over i in j..T of lambda^i * r[i]`: the power
    /// counts from the start of the sequence, so later elements shrink.
    FromSequenceStart,
    /// Element `j` gets `sum over i in j..T of lambda^(i-j) * r[i]`, the
    /// usual suffix form.
    FromElement,
}

/// Discounted return at every position of a reward sequence.
///
/// Powers of lambda are built by sequential multiplication in ascending
/// order, deliberately mirroring the obvious double-loop definition so the
/// two agree bit for bit.
pub fn discounted_returns(rewards: &[f64], lambda: f64, mode: Discounting) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Argument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let t = rewards.len();
    let mut out = vec![0.0; t];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut pow = match mode {
            Discounting::FromSequenceStart => {
                let mut p = 1.0;
                for _ in 0..j {
                    p *= lambda;
                }
                p
            }
            Discounting::FromElement => 1.0,
        };
        let mut acc = 0.0;
        for &r in &rewards[j..] {
            acc += pow * r;
            pow *= lambda;
        }
        *slot = acc;
    }
    Ok(out)
}

/// Element-wise `returns - baseline`.
pub fn advantages(returns: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    if returns.len() != baseline.len() {
        return Err(Error::Dimension(format!(
            "{} returns but {} baseline entries",
            returns.len(),
            baseline.len()
        )));
    }
    Ok(returns.iter().zip(baseline).map(|(r, b)| r - b).collect())
}

const PROB_FLOOR: f64 = 1e-12;

/// Negative advantage-weighted log likelihood and its gradient with
/// respect to the probabilities. Probabilities at or below the floor
/// contribute a constant term, hence zero gradient.
pub fn policy_loss(probs: &[f64], advantages: &[f64]) -> Result<(f64, Vec<f64>)> {
    if probs.len() != advantages.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities but {} advantages",
            probs.len(),
            advantages.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (i, (&p, &a)) in probs.iter().zip(advantages).enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!(
                "probability {p} at index {i} is outside [0, 1]"
            )));
        }
        if p > PROB_FLOOR {
            loss -= a * p.ln();
            grad[i] = -a / p;
        } else {
            loss -= a * PROB_FLOOR.ln();
        }
    }
    Ok((loss, grad))
}

/// One step of selection experience. `next_states` carries the candidate
/// states available at the following step; the TD target maximizes the
/// frozen network over them. Terminal transitions ignore `next_states`.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub reward: f64,
    pub next_states: Vec<Vec<f64>>,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    buf: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            buf: Vec::with_capacity(capacity),
            capacity,
            next: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(t);
        } else {
            self.buf[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Uniform sample of `batch` distinct stored transitions.
    pub fn sample(&self, batch: usize, rng: &mut SeedStream) -> Result<Vec<Transition>> {
        if batch == 0 || batch > self.buf.len() {
            return Err(Error::Argument(format!(
                "batch {batch} from buffer of {}",
                self.buf.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.buf.len()).collect();
        for i in 0..batch {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        Ok(idx[..batch].iter().map(|&i| self.buf[i].clone()).collect())
    }
}

/// Dense Q-network spec: `state_dim` in, one scalar value out, relu
/// between hidden layers, linear output.
pub fn q_net(state_dim: usize, hidden: &[usize]) -> Vec<LayerSpec> {
    let mut spec = Vec::new();
    let mut prev = state_dim;
    for &h in hidden {
        spec.push(LayerSpec::Dense {
            input: prev,
            output: h,
        });
        spec.push(LayerSpec::Relu);
        prev = h;
    }
    spec.push(LayerSpec::Dense {
        input: prev,
        output: 1,
    });
    spec
}

pub const DEFAULT_Q_HIDDEN: [usize; 2] = [32, 32];

/// Deep-Q agent: a prediction network and a frozen copy of it. The copy
/// only changes on `sync_target`, which makes TD targets stable between
/// syncs.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    spec: Vec<LayerSpec>,
    state_dim: usize,
    pub theta: ModelParams,
    pub target: ModelParams,
    pub gamma: f64,
}

impl DqnAgent {
    pub fn new(state_dim: usize, hidden: &[usize], gamma: f64, rng: &mut SeedStream) -> Self {
        let spec = q_net(state_dim, hidden);
        let theta = ModelParams::init(&spec, rng);
        let target = theta.clone();
        DqnAgent {
            spec,
            state_dim,
            theta,
            target,
            gamma,
        }
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    fn q_with(&self, params: &ModelParams, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        if states.is_empty() {
            return Err(Error::Argument("no states".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if s.len() != self.state_dim {
                return Err(Error::Dimension(format!(
                    "state {i} has {} features, net expects {}",
                    s.len(),
                    self.state_dim
                )));
            }
        }
        let batch = Tensor::from_rows(states)?;
        let mut rng = crate::seeding::stream(&[0]);
        let out = nn::forward(params, &self.spec, &batch, &mut rng)?;
        Ok(out.iter().copied().collect())
    }

    /// Prediction-network values for a batch of states.
    pub fn q_values(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.q_with(&self.theta, states)
    }

    /// Frozen-network values.
    pub fn target_q_values(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.q_with(&self.target, states)
    }

    /// Mean squared TD error over a batch and its gradient with respect to
    /// the prediction network only; targets come from the frozen copy and
    /// carry no gradient.
    pub fn td_loss_and_grad(&self, batch: &[Transition]) -> Result<(f64, ModelParams)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            let y = if t.terminal {
                t.reward
            } else {
                let next = self.target_q_values(&t.next_states)?;
                let best = next
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                t.reward + self.gamma * best
            };
            targets.push(y);
        }
        let states: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
        let x = Tensor::from_rows(&states)?;
        let t = Tensor::new(vec![batch.len(), 1], targets)?;
        let mut rng = crate::seeding::stream(&[0]);
        let (half_mse, grads) = nn::loss_and_grad(
            &self.theta,
            &self.spec,
            &x,
            &t,
            &LossConfig::squared_error(),
            &mut rng,
        )?;
        // loss_and_grad computes 1/(2k) sum of squares; TD loss is the
        // plain mean of squares.
        let flat: Vec<f64> = grads.flatten().iter().map(|g| 2.0 * g).collect();
        Ok((2.0 * half_mse, ModelParams::from_flat(&self.spec, &flat)?))
    }

    /// One SGD step on the TD loss; returns the pre-step loss.
    pub fn td_step(&mut self, batch: &[Transition], lr: f64) -> Result<f64> {
        let (loss, grads) = self.td_loss_and_grad(batch)?;
        self.theta = nn::sgd_step(&self.theta, &grads, lr)?;
        Ok(loss)
    }

    /// Copies the prediction network into the frozen one, bit for bit.
    pub fn sync_target(&mut self) {
        self.target = self.theta.clone();
    }
}

/// Epsilon-greedy top-k selection over per-candidate values.
///
/// A single Bernoulli draw decides between exploring (a uniform k-subset)
/// and exploiting (the k highest values, lower index on ties). Ids come
/// back sorted ascending either way.
pub fn select_epsilon_greedy(
    values: &[f64],
    epsilon: f64,
    k: usize,
    rng: &mut SeedStream,
) -> Result<Vec<usize>> {
    let n = values.len();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k = {k} with {n} candidates")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Argument(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let explore = rng.random::<f64>() < epsilon;
    let mut picked: Vec<usize> = if explore {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&x, &y| {
            values[y]
                .partial_cmp(&values[x])
                .expect("values are finite")
                .then(x.cmp(&y))
        });
        idx.truncate(k);
        idx
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Naive-Bayes combination of ensemble member likelihoods: posterior is
/// proportional to `prior * product of member likelihoods`, evaluated in
/// log space. Zero likelihoods are allowed; a class every member zeroes
/// simply drops out. If every class drops out the vote is degenerate.
pub fn nb_combine(priors: &[f64], likelihoods: &[Vec<f64>]) -> Result<Vec<f64>> {
    let c = priors.len();
    if c == 0 {
        return Err(Error::Argument("no classes".into()));
    }
    for (m, row) in likelihoods.iter().enumerate() {
        if row.len() != c {
            return Err(Error::Dimension(format!(
                "member {m} scored {} classes, expected {c}",
                row.len()
            )));
        }
    }
    let ln_or_neg_inf = |v: f64, what: &str| -> Result<f64> {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::Argument(format!("{what} = {v} is not a weight")));
        }
        Ok(if v == 0.0 { f64::NEG_INFINITY } else { v.ln() })
    };
    let mut logp = Vec::with_capacity(c);
    for j in 0..c {
        let mut lp = ln_or_neg_inf(priors[j], "prior")?;
        for row in likelihoods {
            lp += ln_or_neg_inf(row[j], "likelihood")?;
        }
        logp.push(lp);
    }
    let m = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::DegenerateVote);
    }
    let lse = m + logp.iter().map(|&lp| (lp - m).exp()).sum::<f64>().ln();
    Ok(logp.iter().map(|&lp| (lp - lse).exp()).collect())
}

/// Row-wise softmax used to turn per-client Q values into a likelihood
/// row for `nb_combine`.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Step reward for an accuracy move plus the one-time bonus for crossing
/// the target. Returns the reward and whether this step crossed.
pub fn reward_signal(prev_acc: f64, curr_acc: f64, target: f64) -> (f64, bool) {
    let mut reward = if curr_acc > prev_acc { 0.1 } else { -0.1 };
    let crossed = prev_acc < target && curr_acc >= target;
    if crossed {
        reward += 1.0;
    }
    (reward, crossed)
}

/// Two-dimensional PCA coordinates for each client's weight delta, plus
/// the global weight vector projected onto the same axes.
#[derive(Debug, Clone)]
pub struct StateEmbedding {
    pub clients: Vec<[f64; 2]>,
    pub global: [f64; 2],
}

/// PCA of client deltas via the Gram trick: eigenvectors of the n x n
/// Gram matrix of mean-centered deltas give the principal axes without
/// ever forming a P x P covariance. Axes are sign-fixed (largest-magnitude
/// coordinate positive) and rank deficits leave the trailing coordinate
/// zero, so the embedding is deterministic.
pub fn embed_weights(deltas: &[Vec<f64>], global: &[f64]) -> Result<StateEmbedding> {
    let n = deltas.len();
    if n == 0 {
        return Err(Error::Argument("no deltas".into()));
    }
    let p = global.len();
    for (i, d) in deltas.iter().enumerate() {
        if d.len() != p {
            return Err(Error::Dimension(format!(
                "delta {i} has {} values, global has {p}",
                d.len()
            )));
        }
    }

    let mut mean = vec![0.0; p];
    for d in deltas {
        for (m, &v) in mean.iter_mut().zip(d) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = deltas
        .iter()
        .map(|d| d.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let mut gram = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in i..n {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            gram.data_mut()[i * n + j] = dot;
            gram.data_mut()[j * n + i] = dot;
        }
    }
    let (vals, vecs) = sym_eig_or_bail(&gram)?;
    let lam_max = vals.last().copied().unwrap_or(0.0).max(0.0);
    let tol = 1e-12 * lam_max.max(1.0);

    let mut clients = vec![[0.0; 2]; n];
    let mut global_coord = [0.0; 2];
    for axis in 0..2usize.min(n) {
        let col = n - 1 - axis;
        let lam = vals[col];
        if lam <= tol {
            continue;
        }
        let scale = 1.0 / lam.sqrt();
        // Principal axis in delta space: X^T u / sqrt(lambda), unit norm.
        let mut v = vec![0.0; p];
        for (i, c) in centered.iter().enumerate() {
            let u = vecs.row(i)[col] * scale;
            if u == 0.0 {
                continue;
            }
            for (vv, &cv) in v.iter_mut().zip(c) {
                *vv += u * cv;
            }
        }
        let mut peak = 0;
        for i in 1..p {
            if v[i].abs() > v[peak].abs() {
                peak = i;
            }
        }
        if v[peak] < 0.0 {
            for vv in v.iter_mut() {
                *vv = -*vv;
            }
        }
        for (coord, c) in clients.iter_mut().zip(&centered) {
            coord[axis] = c.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        global_coord[axis] = global
            .iter()
            .zip(&mean)
            .zip(&v)
            .map(|((g, m), b)| (g - m) * b)
            .sum();
    }
    Ok(StateEmbedding {
        clients,
        global: global_coord,
    })
}

fn sym_eig_or_bail(gram: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    crate::spectral::sym_eig(gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;

    #[test]
    fn returns_absolute_vs_suffix_indexing() {
        let r = [1.0, 1.0, 1.0];
        let abs = discounted_returns(&r, 0.5, Discounting::FromSequenceStart).unwrap();
        assert_eq!(abs, vec![1.75, 0.75, 0.25]);
        let suf = discounted_returns(&r, 0.5, Discounting::FromElement).unwrap();
        assert_eq!(suf, vec![1.75, 1.5, 1.0]);
    }

    #[test]
    fn returns_lambda_edge_cases() {
        let r = [2.0, 3.0, 4.0];
        // lambda 0 with absolute indexing: only position 0 keeps a term.
        assert_eq!(
            discounted_returns(&r, 0.0, Discounting::FromSequenceStart).unwrap(),
            vec![2.0, 0.0, 0.0]
        );
        assert_eq!(
            discounted_returns(&r, 0.0, Discounting::FromElement).unwrap(),
            vec![2.0, 3.0, 4.0]
        );
        // lambda 1: both modes reduce to suffix sums.
        assert_eq!(
            discounted_returns(&r, 1.0, Discounting::FromSequenceStart).unwrap(),
            vec![9.0, 7.0, 4.0]
        );
        assert!(discounted_returns(&r, 1.5, Discounting::FromElement).is_err());
        assert!(discounted_returns(&r, -0.1, Discounting::FromElement).is_err());
    }

    #[test]
    fn advantages_subtract_elementwise() {
        assert_eq!(
            advantages(&[2.0, 3.0], &[1.0, 1.0]).unwrap(),
            vec![1.0, 2.0]
        );
        assert!(advantages(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn policy_loss_worked_example() {
        let (loss, grad) = policy_loss(&[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert!((loss - 2.0 * 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(grad, vec![-2.0, -2.0]);
    }

    #[test]
    fn policy_loss_gradient_matches_finite_difference() {
        let probs = [0.2, 0.5, 0.3];
        let adv = [1.0, -2.0, 0.5];
        let (_, grad) = policy_loss(&probs, &adv).unwrap();
        let h = 1e-7;
        for i in 0..probs.len() {
            let mut plus = probs;
            plus[i] += h;
            let mut minus = probs;
            minus[i] -= h;
            let lp = policy_loss(&plus, &adv).unwrap().0;
            let lm = policy_loss(&minus, &adv).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!((grad[i] - fd).abs() < 1e-5, "i={i} grad {} fd {fd}", grad[i]);
        }
    }

    #[test]
    fn policy_loss_floors_tiny_probabilities() {
        let (_, grad) = policy_loss(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(grad[0], 0.0);
        assert!(policy_loss(&[1.2, 0.0], &[1.0, 1.0]).is_err());
    }

    fn scalar_agent(w: f64, b: f64, gamma: f64) -> DqnAgent {
        let mut agent = DqnAgent::new(1, &[], gamma, &mut stream(&[1]));
        let flat = vec![w, b];
        agent.theta = ModelParams::from_flat(agent.spec(), &flat).unwrap();
        agent.sync_target();
        agent
    }

    #[test]
    fn td_loss_worked_example() {
        // Constant network q = 2 everywhere; reward 1, gamma 0.9, so the
        // target is 2.8 and the squared error 0.64.
        let agent = scalar_agent(0.0, 2.0, 0.9);
        let t = Transition {
            state: vec![0.3],
            reward: 1.0,
            next_states: vec![vec![0.5], vec![0.7]],
            terminal: false,
        };
        let (loss, grads) = agent.td_loss_and_grad(&[t]).unwrap();
        assert!((loss - 0.64).abs() < 1e-12);
        let g = grads.flatten();
        // dL/dq = 2 (q - y) = -1.6; dq/dw = x, dq/db = 1.
        assert!((g[0] - (-1.6 * 0.3)).abs() < 1e-12);
        assert!((g[1] - (-1.6)).abs() < 1e-12);
    }

    #[test]
    fn td_terminal_ignores_next_states() {
        let agent = scalar_agent(0.0, 2.0, 0.9);
        let t = Transition {
            state: vec![0.0],
            reward: 0.5,
            next_states: vec![],
            terminal: true,
        };
        let (loss, _) = agent.td_loss_and_grad(&[t]).unwrap();
        // Target is the bare reward: (2 - 0.5)^2.
        assert!((loss - 2.25).abs() < 1e-12);
    }

    #[test]
    fn td_gradients_match_numeric_check() {
        let mut rng = stream(&[17]);
        let agent = DqnAgent::new(3, &[5], 0.9, &mut rng);
        let batch: Vec<Transition> = (0..4)
            .map(|i| Transition {
                state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(-1.0..1.0),
                next_states: (0..2)
                    .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
                terminal: i == 3,
            })
            .collect();
        let (_, grads) = agent.td_loss_and_grad(&batch).unwrap();
        let aflat = grads.flatten();
        let flat = agent.theta.flatten();
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut probe = agent.clone();
            let mut w = flat.clone();
            w[i] += h;
            probe.theta = ModelParams::from_flat(agent.spec(), &w).unwrap();
            let lp = probe.td_loss_and_grad(&batch).unwrap().0;
            w[i] = flat[i] - h;
            probe.theta = ModelParams::from_flat(agent.spec(), &w).unwrap();
            let lm = probe.td_loss_and_grad(&batch).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (aflat[i] - fd).abs() / f64::max(aflat[i].abs() + fd.abs(), 1e-4);
            assert!(rel < 1e-4, "param {i}: analytic {} fd {fd}", aflat[i]);
        }
    }

    #[test]
    fn target_stays_frozen_until_sync() {
        let mut rng = stream(&[19]);
        let mut agent = DqnAgent::new(2, &[4], 0.9, &mut rng);
        let before = agent.target.flatten();
        let batch = vec![Transition {
            state: vec![0.2, -0.4],
            reward: 1.0,
            next_states: vec![vec![0.0, 0.0]],
            terminal: false,
        }];
        for _ in 0..5 {
            agent.td_step(&batch, 0.05).unwrap();
        }
        assert_eq!(agent.target.flatten(), before);
        assert_ne!(agent.theta.flatten(), before);
        agent.sync_target();
        let t_bits: Vec<u64> = agent.target.flatten().iter().map(|v| v.to_bits()).collect();
        let p_bits: Vec<u64> = agent.theta.flatten().iter().map(|v| v.to_bits()).collect();
        assert_eq!(t_bits, p_bits);
    }

    #[test]
    fn epsilon_zero_takes_top_k_with_low_id_ties() {
        let q = [0.1, 0.9, 0.3, 0.9, 0.2];
        let picked = select_epsilon_greedy(&q, 0.0, 2, &mut stream(&[2])).unwrap();
        assert_eq!(picked, vec![1, 3]);
        let tied = [0.5, 0.5, 0.5];
        assert_eq!(
            select_epsilon_greedy(&tied, 0.0, 2, &mut stream(&[2])).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn epsilon_one_is_near_uniform() {
        let q = [9.0, 0.0, 0.0, 0.0];
        let mut counts = [0usize; 4];
        let mut rng = stream(&[23]);
        let trials = 4000;
        for _ in 0..trials {
            for i in select_epsilon_greedy(&q, 1.0, 2, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        // Each id should appear in about half the draws.
        for (i, &c) in counts.iter().enumerate() {
            let rate = c as f64 / trials as f64;
            assert!((rate - 0.5).abs() < 0.05, "id {i} rate {rate}");
        }
    }

    #[test]
    fn select_k_equals_n_returns_everyone() {
        let q = [0.3, 0.1, 0.2];
        assert_eq!(
            select_epsilon_greedy(&q, 0.7, 3, &mut stream(&[3])).unwrap(),
            vec![0, 1, 2]
        );
        assert!(select_epsilon_greedy(&q, 0.5, 4, &mut stream(&[3])).is_err());
        assert!(select_epsilon_greedy(&q, 1.5, 1, &mut stream(&[3])).is_err());
    }

    #[test]
    fn nb_combine_worked_example() {
        // Uniform prior, two members: likelihoods (0.8, 0.4) and
        // (0.6, 0.2) give posterior (6/7, 1/7).
        let post = nb_combine(&[0.5, 0.5], &[vec![0.8, 0.4], vec![0.6, 0.2]]).unwrap();
        assert!((post[0] - 6.0 / 7.0).abs() < 1e-9);
        assert!((post[1] - 1.0 / 7.0).abs() < 1e-9);
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nb_combine_is_scale_invariant() {
        let base = nb_combine(&[0.25; 4], &[vec![0.1, 0.4, 0.3, 0.2]]).unwrap();
        let scaled = nb_combine(&[0.25; 4], &[vec![1.0, 4.0, 3.0, 2.0]]).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nb_combine_zero_everywhere_is_degenerate() {
        let r = nb_combine(&[0.5, 0.5], &[vec![0.0, 0.0]]);
        assert!(matches!(r, Err(Error::DegenerateVote)));
        // A single zeroed class just loses its mass.
        let post = nb_combine(&[0.5, 0.5], &[vec![0.0, 1.0]]).unwrap();
        assert_eq!(post, vec![0.0, 1.0]);
        assert!(nb_combine(&[0.5, 0.5], &[vec![-0.1, 1.0]]).is_err());
    }

    #[test]
    fn reward_signal_cases() {
        assert_eq!(reward_signal(0.5, 0.6, 0.9), (0.1, false));
        assert_eq!(reward_signal(0.6, 0.5, 0.9), (-0.1, false));
        assert_eq!(reward_signal(0.6, 0.6, 0.9), (-0.1, false));
        let (r, crossed) = reward_signal(0.84, 0.86, 0.85);
        assert!((r - 1.1).abs() < 1e-15);
        assert!(crossed);
        // Already above target: no second bonus.
        assert_eq!(reward_signal(0.86, 0.87, 0.85), (0.1, false));
    }

    #[test]
    fn replay_ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(Transition {
                state: vec![i as f64],
                reward: 0.0,
                next_states: vec![],
                terminal: true,
            });
        }
        assert_eq!(buf.len(), 3);
        let stored: Vec<f64> = buf.buf.iter().map(|t| t.state[0]).collect();
        // Slots hold 3, 4, 2 after wrapping twice.
        assert_eq!(stored, vec![3.0, 4.0, 2.0]);
        assert!(buf.sample(4, &mut stream(&[1])).is_err());
        let s = buf.sample(3, &mut stream(&[1])).unwrap();
        let mut got: Vec<f64> = s.iter().map(|t| t.state[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn embedding_preserves_planar_distances() {
        // Five deltas living in a 2-D plane inside 40-D; PCA coordinates
        // must reproduce their pairwise distances.
        let p = 40;
        let mut rng = stream(&[29]);
        let mut e1 = vec![0.0; p];
        let mut e2 = vec![0.0; p];
        for i in 0..p {
            e1[i] = rng.random_range(-1.0..1.0);
            e2[i] = rng.random_range(-1.0..1.0);
        }
        // Orthonormalize the pair.
        let n1 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in e1.iter_mut() {
            *v /= n1;
        }
        let d: f64 = e1.iter().zip(&e2).map(|(a, b)| a * b).sum();
        for (v2, &v1) in e2.iter_mut().zip(&e1) {
            *v2 -= d * v1;
        }
        let n2 = e2.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in e2.iter_mut() {
            *v /= n2;
        }
        let coords = [(0.0, 0.0), (1.0, 0.5), (-2.0, 1.0), (0.5, -1.5), (3.0, 2.0)];
        let deltas: Vec<Vec<f64>> = coords
            .iter()
            .map(|&(a, b)| (0..p).map(|i| a * e1[i] + b * e2[i]).collect())
            .collect();
        let emb = embed_weights(&deltas, &vec![0.0; p]).unwrap();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let want = ((coords[i].0 - coords[j].0).powi(2)
                    + (coords[i].1 - coords[j].1).powi(2))
                .sqrt();
                let got = ((emb.clients[i][0] - emb.clients[j][0]).powi(2)
                    + (emb.clients[i][1] - emb.clients[j][1]).powi(2))
                .sqrt();
                assert!((want - got).abs() < 1e-9, "pair ({i},{j}): {want} vs {got}");
            }
        }
    }

    #[test]
    fn embedding_of_identical_deltas_is_zero() {
        let deltas = vec![vec![0.5, -1.0, 2.0]; 4];
        let emb = embed_weights(&deltas, &[0.0, 0.0, 0.0]).unwrap();
        for c in emb.clients {
            assert_eq!(c, [0.0, 0.0]);
        }
    }

    #[test]
    fn embedding_mirrors_symmetric_deltas() {
        // Two clients moving in exactly opposite directions sit at
        // mirrored coordinates on the first axis.
        let deltas = vec![vec![1.0, 2.0, 0.0], vec![-1.0, -2.0, 0.0]];
        let emb = embed_weights(&deltas, &[0.0; 3]).unwrap();
        assert!((emb.clients[0][0] + emb.clients[1][0]).abs() < 1e-12);
        assert!(emb.clients[0][0].abs() > 1.0);
        assert_eq!(emb.clients[0][1], 0.0);
        assert_eq!(emb.clients[1][1], 0.0);
    }

    #[test]
    fn embedding_rejects_ragged_deltas() {
        let deltas = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(embed_weights(&deltas, &[0.0, 0.0]).is_err());
    }
}
