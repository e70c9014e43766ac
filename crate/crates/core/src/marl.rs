//! Offline multi-agent training: per-switch actors with a centralized critic,
//! replay buffer, Ornstein-Uhlenbeck exploration, critic regression to
//! bootstrapped targets, counterfactual difference-reward advantages via
//! Monte Carlo marginalization, and soft target updates. Ablation modes cover
//! a shared-TD-advantage variant and a single-agent variant.

use crate::env::{split_concatenated, ActorSet, Env, EnvError, RewardMode};
use crate::nn::{
    self, commit_running_stats, soft_update, Head, MlpGrads, MlpParams, MlpSpec, NnError, OptState,
    Phase,
};
use crate::routing::{JointAction, SplitAction};
use crate::topology::{AdmissibleSets, DistanceTable, Topology};
use crate::traffic::TmSeries;
use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

const POLICY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MarlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("no SDN nodes in topology")]
    NoAgents,
    #[error("empty traffic series")]
    NoTraffic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    #[default]
    Cmrl,
    /// Shared TD advantage instead of the counterfactual baseline.
    Marl,
    /// One agent observing the full state, acting for every switch.
    Single,
}

/// How the actor gradient is formed from the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorGradMode {
    /// Advantage-weighted log-likelihood with the counterfactual baseline.
    Cmrl,
    /// Advantage-weighted log-likelihood with the shared TD advantage.
    Marl,
    /// Deterministic policy gradient through the critic's action inputs.
    DdpgChain,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub minibatch: usize,
    pub capacity: usize,
    /// Episodes per traffic matrix (N).
    pub episodes_per_tm: usize,
    /// Steps per episode (T).
    pub steps_per_episode: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Monte Carlo samples for the counterfactual baseline (K).
    pub cf_samples: usize,
    pub mode: TrainMode,
    /// Replaces the log-likelihood actor gradient with the deterministic
    /// chain through the critic. Ignored when `mode` is `Marl`.
    pub ddpg_chain: bool,
    pub reward_mode: RewardMode,
    pub hidden_width: usize,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_mu: f64,
    pub ou_eta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            tau: 0.001,
            minibatch: 32,
            capacity: 8000,
            episodes_per_tm: 160,
            steps_per_episode: 2,
            lr_actor: 1e-3,
            lr_critic: 2e-3,
            cf_samples: 8,
            mode: TrainMode::Cmrl,
            ddpg_chain: false,
            reward_mode: RewardMode::Improvement,
            hidden_width: 128,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_mu: 0.0,
            ou_eta: 0.999,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn actor_grad(&self) -> ActorGradMode {
        match self.mode {
            TrainMode::Marl => ActorGradMode::Marl,
            _ if self.ddpg_chain => ActorGradMode::DdpgChain,
            _ => ActorGradMode::Cmrl,
        }
    }
}

/// Temporally correlated exploration noise,
/// x ← x + θ(μ − x) + σ·ξ with ξ ~ N(0,1) per dimension; the returned noise
/// is ε·x and ε decays by η after every call.
#[derive(Debug, Clone)]
pub struct OuState {
    pub x: Vec<f64>,
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub eta: f64,
}

impl OuState {
    pub fn new(dims: usize, theta: f64, sigma: f64, mu: f64, eta: f64) -> Self {
        OuState { x: vec![0.0; dims], theta, sigma, mu, epsilon: 1.0, eta }
    }
}

pub fn ou_next(ou: &mut OuState, rng: &mut impl Rng) -> Vec<f64> {
    let noise: Vec<f64> = ou
        .x
        .iter_mut()
        .map(|x| {
            let xi: f64 = rng.sample(StandardNormal);
            *x += ou.theta * (ou.mu - *x) + ou.sigma * xi;
            ou.epsilon * *x
        })
        .collect();
    ou.epsilon *= ou.eta;
    noise
}

/// Clamps to ≥ 0 and renormalizes each block to the simplex; a block whose
/// mass clamps below 1e-12 falls back to uniform.
pub fn project_to_simplex(raw: &[f64], blocks: &[usize]) -> Vec<f64> {
    let mut out = raw.to_vec();
    let mut start = 0;
    for &b in blocks {
        let block = &mut out[start..start + b];
        let mut sum = 0.0;
        for v in block.iter_mut() {
            *v = v.max(0.0);
            sum += *v;
        }
        if sum < POLICY_FLOOR {
            for v in block.iter_mut() {
                *v = 1.0 / b as f64;
            }
        } else {
            for v in block.iter_mut() {
                *v /= sum;
            }
        }
        start += b;
    }
    out
}

/// Noisy exploration action: eval-phase actor output plus scaled OU noise,
/// projected back onto the per-block simplex.
pub fn act_explore(
    actor: &MlpParams,
    obs: &[f64],
    blocks: &[usize],
    ou: &mut OuState,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, NnError> {
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).unwrap();
    let cache = nn::forward(actor, &x, Phase::Eval)?;
    let noise = ou_next(ou, rng);
    let raw: Vec<f64> = cache
        .output()
        .row(0)
        .iter()
        .zip(&noise)
        .map(|(a, n)| a + n)
        .collect();
    Ok(project_to_simplex(&raw, blocks))
}

/// One replay-buffer record. Observations and actions are stored per agent in
/// a fixed order (ascending switch id, or the single agent).
#[derive(Debug, Clone)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    pub done: bool,
}

/// Circular buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    store: Vec<Transition>,
    capacity: usize,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { store: Vec::with_capacity(capacity.min(4096)), capacity, next: 0, inserted: 0 }
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.store.len() < self.capacity {
            self.store.push(t);
        } else {
            self.store[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.store[idx]
    }

    pub fn sample_indices(&self, count: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..count).map(|_| rng.random_range(0..self.store.len())).collect()
    }
}

/// Fixed description of the agents derived from topology and mode.
#[derive(Debug, Clone)]
pub struct AgentLayout {
    /// Per agent: switch node id (None for the single full-state agent).
    pub nodes: Vec<Option<usize>>,
    pub obs_dims: Vec<usize>,
    pub act_dims: Vec<usize>,
    /// Softmax blocks of each agent's head.
    pub blocks: Vec<Vec<usize>>,
    pub state_dim: usize,
}

impl AgentLayout {
    pub fn new(topo: &Topology, mode: TrainMode) -> Result<Self, MarlError> {
        let sdn = topo.sdn_nodes();
        if sdn.is_empty() {
            return Err(MarlError::NoAgents);
        }
        let state_dim = topo.link_count();
        match mode {
            TrainMode::Single => {
                let blocks: Vec<usize> = sdn.iter().map(|&h| topo.out_degree(h)).collect();
                let total = blocks.iter().sum();
                Ok(AgentLayout {
                    nodes: vec![None],
                    obs_dims: vec![state_dim],
                    act_dims: vec![total],
                    blocks: vec![blocks],
                    state_dim,
                })
            }
            _ => Ok(AgentLayout {
                nodes: sdn.iter().map(|&h| Some(h)).collect(),
                obs_dims: sdn.iter().map(|&h| 2 * topo.out_degree(h)).collect(),
                act_dims: sdn.iter().map(|&h| topo.out_degree(h)).collect(),
                blocks: sdn.iter().map(|&h| vec![topo.out_degree(h)]).collect(),
                state_dim,
            }),
        }
    }

    pub fn agent_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_act_dim(&self) -> usize {
        self.act_dims.iter().sum()
    }

    /// Column range of agent `i`'s action inside the critic input.
    pub fn action_slice(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.state_dim + self.act_dims[..i].iter().sum::<usize>();
        start..start + self.act_dims[i]
    }

    pub fn actor_spec(&self, i: usize, width: usize) -> MlpSpec {
        MlpSpec::new(
            self.obs_dims[i],
            vec![width, width],
            self.act_dims[i],
            true,
            Head::Softmax { blocks: self.blocks[i].clone() },
        )
    }

    pub fn critic_spec(&self, width: usize) -> MlpSpec {
        MlpSpec::new(
            self.state_dim + self.total_act_dim(),
            vec![width, width, width],
            1,
            false,
            Head::Linear,
        )
    }
}

/// Critic input rows: global state concatenated with all agents' actions.
pub fn critic_inputs(layout: &AgentLayout, states: &[&[f64]], actions: &[Vec<Vec<f64>>]) -> Array2<f64> {
    let rows = states.len();
    let cols = layout.state_dim + layout.total_act_dim();
    let mut x = Array2::zeros((rows, cols));
    for (r, (s, acts)) in states.iter().zip(actions).enumerate() {
        for (c, &v) in s.iter().enumerate() {
            x[[r, c]] = v;
        }
        let mut c = layout.state_dim;
        for a in acts {
            for &v in a {
                x[[r, c]] = v;
                c += 1;
            }
        }
    }
    x
}

fn critic_q(critic: &MlpParams, inputs: &Array2<f64>) -> Result<Array1<f64>, NnError> {
    let cache = nn::forward(critic, inputs, Phase::Eval)?;
    Ok(cache.output().index_axis(Axis(1), 0).to_owned())
}

/// Bootstrapped regression targets
/// y_j = r_j + γ(1 − done_j)·Q'(s_{j+1}, {μ'_h(o^h_{j+1})}).
pub fn critic_target(
    layout: &AgentLayout,
    batch: &[&Transition],
    critic_target_net: &MlpParams,
    actor_targets: &[&MlpParams],
    gamma: f64,
) -> Result<Vec<f64>, NnError> {
    let m = batch.len();
    // target actors act on next observations, in batch per agent
    let mut next_actions: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(layout.agent_count()); m];
    for (i, actor) in actor_targets.iter().enumerate() {
        let obs_dim = layout.obs_dims[i];
        let mut x = Array2::zeros((m, obs_dim));
        for (r, t) in batch.iter().enumerate() {
            for (c, &v) in t.next_observations[i].iter().enumerate() {
                x[[r, c]] = v;
            }
        }
        let cache = nn::forward(actor, &x, Phase::Eval)?;
        for (r, row) in cache.output().rows().into_iter().enumerate() {
            next_actions[r].push(row.to_vec());
        }
    }
    let next_states: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
    let inputs = critic_inputs(layout, &next_states, &next_actions);
    let q_next = critic_q(critic_target_net, &inputs)?;
    Ok(batch
        .iter()
        .zip(q_next.iter())
        .map(|(t, &q)| t.reward + gamma * if t.done { 0.0 } else { q })
        .collect())
}

/// One optimizer step on the mean squared error to the targets; returns the
/// pre-step loss.
pub fn critic_update(
    critic: &mut MlpParams,
    opt: &mut OptState,
    inputs: &Array2<f64>,
    targets: &[f64],
) -> Result<f64, MarlError> {
    let m = inputs.nrows();
    assert_eq!(m, targets.len());
    let cache = nn::forward(critic, inputs, Phase::Train)?;
    let pred = cache.output();
    let mut loss = 0.0;
    let mut grad = Array2::zeros((m, 1));
    for (r, &y) in targets.iter().enumerate() {
        let diff = pred[[r, 0]] - y;
        loss += diff * diff;
        grad[[r, 0]] = 2.0 * diff / m as f64;
    }
    loss /= m as f64;
    let (grads, _) = nn::backward(critic, &cache, &grad)?;
    nn::opt_step(critic, &grads, opt)?;
    commit_running_stats(critic, &cache);
    Ok(loss)
}

/// Uniform simplex sample (Dirichlet with unit concentration) per block.
fn sample_simplex(blocks: &[usize], rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(blocks.iter().sum());
    for &b in blocks {
        let draws: Vec<f64> = (0..b)
            .map(|_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                -u.ln()
            })
            .collect();
        let sum: f64 = draws.iter().sum();
        out.extend(draws.into_iter().map(|d| d / sum));
    }
    out
}

/// Counterfactual difference reward for each batch row:
/// A^h = Q(s,u) − (1/K)·Σ_k Q(s, (a'_k, u^{−h})) with a'_k uniform on the
/// agent's simplex and the other agents' actions held fixed.
pub fn counterfactual_advantages(
    layout: &AgentLayout,
    critic: &MlpParams,
    base_inputs: &Array2<f64>,
    agent: usize,
    k_samples: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, NnError> {
    assert!(k_samples >= 1);
    let m = base_inputs.nrows();
    let q_base = critic_q(critic, base_inputs)?;
    let slice = layout.action_slice(agent);
    let mut stacked = Array2::zeros((m * k_samples, base_inputs.ncols()));
    for r in 0..m {
        for k in 0..k_samples {
            let alt = sample_simplex(&layout.blocks[agent], rng);
            let out_row = r * k_samples + k;
            for c in 0..base_inputs.ncols() {
                stacked[[out_row, c]] = base_inputs[[r, c]];
            }
            for (j, &v) in alt.iter().enumerate() {
                stacked[[out_row, slice.start + j]] = v;
            }
        }
    }
    let q_alt = critic_q(critic, &stacked)?;
    Ok((0..m)
        .map(|r| {
            let mean: f64 =
                (0..k_samples).map(|k| q_alt[r * k_samples + k]).sum::<f64>() / k_samples as f64;
            q_base[r] - mean
        })
        .collect())
}

/// Single-sample counterfactual advantage for agent `agent` at `(state, u)`.
pub fn counterfactual_advantage(
    layout: &AgentLayout,
    critic: &MlpParams,
    state: &[f64],
    joint_actions: &[Vec<f64>],
    agent: usize,
    k_samples: usize,
    rng: &mut impl Rng,
) -> Result<f64, NnError> {
    let inputs = critic_inputs(layout, &[state], &[joint_actions.to_vec()]);
    Ok(counterfactual_advantages(layout, critic, &inputs, agent, k_samples, rng)?[0])
}

/// Actor gradient for one agent on a minibatch, without applying it.
/// Returns (gradients, per-sample advantages, loss, train-phase cache).
pub fn actor_gradients(
    layout: &AgentLayout,
    agent: usize,
    actor: &MlpParams,
    critic: &MlpParams,
    batch: &[&Transition],
    base_inputs: &Array2<f64>,
    targets: &[f64],
    mode: ActorGradMode,
    k_samples: usize,
    rng: &mut impl Rng,
) -> Result<(MlpGrads, Vec<f64>, f64, nn::Cache), MarlError> {
    let m = batch.len();
    let obs_dim = layout.obs_dims[agent];
    let mut obs = Array2::zeros((m, obs_dim));
    for (r, t) in batch.iter().enumerate() {
        for (c, &v) in t.observations[agent].iter().enumerate() {
            obs[[r, c]] = v;
        }
    }
    let cache = nn::forward(actor, &obs, Phase::Train)?;
    match mode {
        ActorGradMode::Cmrl | ActorGradMode::Marl => {
            let advantages = match mode {
                ActorGradMode::Cmrl => {
                    counterfactual_advantages(layout, critic, base_inputs, agent, k_samples, rng)?
                }
                _ => {
                    let q = critic_q(critic, base_inputs)?;
                    targets.iter().zip(q.iter()).map(|(y, q)| y - q).collect()
                }
            };
            // loss = −(1/M)·Σ_j A_j · Σ_d a_jd·log μ_jd
            let mu = cache.output();
            let mut loss = 0.0;
            let mut grad = Array2::zeros(mu.raw_dim());
            for (r, t) in batch.iter().enumerate() {
                let a = &t.actions[agent];
                for (d, &ad) in a.iter().enumerate() {
                    let p = mu[[r, d]].max(POLICY_FLOOR);
                    loss -= advantages[r] * ad * p.ln();
                    grad[[r, d]] = -advantages[r] * ad / p;
                }
            }
            loss /= m as f64;
            grad.mapv_inplace(|g| g / m as f64);
            let (grads, _) = nn::backward(actor, &cache, &grad)?;
            Ok((grads, advantages, loss, cache))
        }
        ActorGradMode::DdpgChain => {
            // replace this agent's stored action with the fresh actor output
            let slice = layout.action_slice(agent);
            let mut inputs = base_inputs.clone();
            for (r, row) in cache.output().rows().into_iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    inputs[[r, slice.start + j]] = v;
                }
            }
            let q_cache = nn::forward(critic, &inputs, Phase::Eval)?;
            let q_mean = q_cache.output().mean().unwrap();
            let out_grad = Array2::from_elem((m, 1), -1.0 / m as f64);
            let (_, input_grads) = nn::backward(critic, &q_cache, &out_grad)?;
            let action_grads = input_grads.slice(ndarray::s![.., slice.clone()]).to_owned();
            let (grads, _) = nn::backward(actor, &cache, &action_grads)?;
            let q_rows: Vec<f64> = q_cache.output().index_axis(Axis(1), 0).to_vec();
            Ok((grads, q_rows, -q_mean, cache))
        }
    }
}

/// One optimizer step on the actor; returns (mean advantage, loss).
pub fn actor_update(
    layout: &AgentLayout,
    agent: usize,
    actor: &mut MlpParams,
    opt: &mut OptState,
    critic: &MlpParams,
    batch: &[&Transition],
    base_inputs: &Array2<f64>,
    targets: &[f64],
    mode: ActorGradMode,
    k_samples: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64), MarlError> {
    let (grads, advantages, loss, cache) = actor_gradients(
        layout, agent, actor, critic, batch, base_inputs, targets, mode, k_samples, rng,
    )?;
    nn::opt_step(actor, &grads, opt)?;
    commit_running_stats(actor, &cache);
    let mean_adv = advantages.iter().sum::<f64>() / advantages.len() as f64;
    Ok((mean_adv, loss))
}

/// One CSV row of the training log.
#[derive(Debug, Clone)]
pub struct LogRow {
    pub step: u64,
    pub tm_index: usize,
    pub episode: usize,
    pub t: usize,
    pub reward: f64,
    pub mlu: f64,
    pub critic_loss: Option<f64>,
    pub mean_advantages: Vec<Option<f64>>,
}

pub fn log_to_csv(rows: &[LogRow], agent_count: usize) -> String {
    let mut out = String::from("step,tm_index,episode,t,reward,mlu,critic_loss");
    for i in 0..agent_count {
        out.push_str(&format!(",mean_advantage_{i}"));
    }
    out.push('\n');
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.step,
            r.tm_index,
            r.episode,
            r.t,
            r.reward,
            r.mlu,
            fmt(r.critic_loss)
        ));
        for a in &r.mean_advantages {
            out.push(',');
            out.push_str(&fmt(*a));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub actors: ActorSet,
    pub critic: MlpParams,
    pub layout: AgentLayout,
    pub log: Vec<LogRow>,
}

/// Offline training: for each TM, N episodes of T steps; every step stores a
/// transition and, once the buffer holds a minibatch, performs one critic
/// update, one actor update per agent, and soft target updates.
pub fn train(
    topo: &Topology,
    dists: &DistanceTable,
    admissible: &AdmissibleSets,
    tms: &TmSeries,
    config: &TrainConfig,
) -> Result<TrainResult, MarlError> {
    if tms.is_empty() {
        return Err(MarlError::NoTraffic);
    }
    let layout = AgentLayout::new(topo, config.mode)?;
    let n_agents = layout.agent_count();
    let width = config.hidden_width;

    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sub_seed = || seed_rng.random::<u64>();

    let mut actors: Vec<MlpParams> = (0..n_agents)
        .map(|i| nn::init(&layout.actor_spec(i, width), sub_seed()))
        .collect();
    let mut actor_targets = actors.clone();
    let mut critic = nn::init(&layout.critic_spec(width), sub_seed());
    let mut critic_target_net = critic.clone();
    let mut actor_opts: Vec<OptState> =
        actors.iter().map(|a| OptState::new(a, config.lr_actor)).collect();
    let mut critic_opt = OptState::new(&critic, config.lr_critic);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(sub_seed());
    let mut sample_rng = ChaCha8Rng::seed_from_u64(sub_seed());
    let mut cf_rng = ChaCha8Rng::seed_from_u64(sub_seed());

    let mut buffer = ReplayBuffer::new(config.capacity);
    let mut log = Vec::new();
    let mut step_counter: u64 = 0;

    for (tm_index, tm) in tms.tms.iter().enumerate() {
        let mut ou: Vec<OuState> = layout
            .act_dims
            .iter()
            .map(|&d| OuState::new(d, config.ou_theta, config.ou_sigma, config.ou_mu, config.ou_eta))
            .collect();
        for episode in 0..config.episodes_per_tm {
            let mut env = Env::reset(
                topo,
                dists,
                admissible,
                tm,
                config.steps_per_episode,
                config.reward_mode,
            );
            let mut state: Vec<f64> = env.state().to_vec();
            let mut obs = extract_observations(&layout, &env, &state);
            for t in 0..config.steps_per_episode {
                let mut actions = Vec::with_capacity(n_agents);
                for i in 0..n_agents {
                    let a = act_explore(
                        &actors[i],
                        &obs[i],
                        &layout.blocks[i],
                        &mut ou[i],
                        &mut noise_rng,
                    )?;
                    actions.push(a);
                }
                let joint = assemble_joint(topo, &layout, &actions);
                let result = env.step(&joint)?;
                let next_state = result.state.clone();
                let next_obs = extract_observations(&layout, &env, &next_state);
                buffer.push(Transition {
                    observations: obs.clone(),
                    actions: actions.clone(),
                    state: state.clone(),
                    reward: result.reward,
                    next_state: next_state.clone(),
                    next_observations: next_obs.clone(),
                    done: result.done,
                });

                let mut critic_loss = None;
                let mut mean_advantages = vec![None; n_agents];
                if buffer.len() >= config.minibatch {
                    let idx = buffer.sample_indices(config.minibatch, &mut sample_rng);
                    let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
                    let target_refs: Vec<&MlpParams> = actor_targets.iter().collect();
                    let y = critic_target(&layout, &batch, &critic_target_net, &target_refs, config.gamma)?;
                    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
                    let batch_actions: Vec<Vec<Vec<f64>>> =
                        batch.iter().map(|t| t.actions.clone()).collect();
                    let inputs = critic_inputs(&layout, &states, &batch_actions);
                    critic_loss = Some(critic_update(&mut critic, &mut critic_opt, &inputs, &y)?);
                    let grad_mode = config.actor_grad();
                    for i in 0..n_agents {
                        let (adv, _) = actor_update(
                            &layout,
                            i,
                            &mut actors[i],
                            &mut actor_opts[i],
                            &critic,
                            &batch,
                            &inputs,
                            &y,
                            grad_mode,
                            config.cf_samples,
                            &mut cf_rng,
                        )?;
                        mean_advantages[i] = Some(adv);
                    }
                    soft_update(&mut critic_target_net, &critic, config.tau);
                    for i in 0..n_agents {
                        soft_update(&mut actor_targets[i], &actors[i], config.tau);
                    }
                }

                step_counter += 1;
                log.push(LogRow {
                    step: step_counter,
                    tm_index,
                    episode,
                    t,
                    reward: result.reward,
                    mlu: result.mlu,
                    critic_loss,
                    mean_advantages,
                });
                state = next_state;
                obs = next_obs;
            }
        }
    }

    let actors = match config.mode {
        TrainMode::Single => ActorSet::Single(actors.into_iter().next().unwrap()),
        _ => ActorSet::PerSwitch(
            layout
                .nodes
                .iter()
                .zip(actors)
                .map(|(node, a)| (node.unwrap(), a))
                .collect(),
        ),
    };
    Ok(TrainResult { actors, critic, layout, log })
}

fn extract_observations(layout: &AgentLayout, env: &Env, state: &[f64]) -> Vec<Vec<f64>> {
    match layout.nodes[0] {
        None => vec![state.to_vec()],
        Some(_) => {
            let per_node = env.observations();
            layout
                .nodes
                .iter()
                .map(|node| per_node[&node.unwrap()].clone())
                .collect()
        }
    }
}

fn assemble_joint(topo: &Topology, layout: &AgentLayout, actions: &[Vec<f64>]) -> JointAction {
    match layout.nodes[0] {
        None => split_concatenated(topo, &actions[0]),
        Some(_) => JointAction::new(layout.nodes.iter().zip(actions).map(|(node, a)| SplitAction {
            node: node.unwrap(),
            ratios: a.clone(),
        })),
    }
}
