use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Observation;
use crate::error::{arg, Error, Result};
use crate::nn::{soft_update, Adam, AdamConfig, Loss, Network, NetworkSpec, Tensor};
use crate::replay::{PerConfig, PrioritizedBuffer, ReplayBuffer, Transition, UniformBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Baseline TD3 on the downsampled raw coverage map.
    Td3,
    /// TD3 on a single PCA score frame.
    #[serde(rename = "td3pca")]
    Td3Pca,
    /// PCA frame stack, prioritized replay and Huber critic loss.
    Etd3,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Td3, AgentKind::Td3Pca, AgentKind::Etd3];

    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Td3 => "td3",
            AgentKind::Td3Pca => "td3pca",
            AgentKind::Etd3 => "etd3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "td3" => Ok(AgentKind::Td3),
            "td3pca" | "td3_pca" => Ok(AgentKind::Td3Pca),
            "etd3" | "e_td3" => Ok(AgentKind::Etd3),
            other => arg(format!("unknown agent `{other}`, expected one of td3, td3pca, etd3")),
        }
    }

    pub fn uses_pca(&self) -> bool {
        !matches!(self, AgentKind::Td3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub tau: f64,
    /// Critic updates per actor update.
    pub policy_delay: u64,
    /// Target-policy smoothing noise std, in normalized action units.
    pub target_noise: f64,
    pub target_noise_clip: f64,
    /// Exploration std at episode 0, normalized action units.
    pub explore_sigma0: f64,
    /// Per-episode multiplicative decay of the exploration std.
    pub explore_decay: f64,
    pub loss: Loss,
    pub prioritized: bool,
    pub per: PerConfig,
    pub replay_capacity: usize,
    /// Transitions collected before the first update.
    pub learning_starts: usize,
    /// Take uniform random actions until `learning_starts` transitions are stored.
    pub random_warmup: bool,
    /// Half-width of the uniform init of the actor's output layer; 0 keeps the default init.
    pub output_init: f64,
    /// Weight of the mean squared pre-tanh actor output added to the actor loss.
    pub preact_penalty: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Hyper {
    /// Learning rates, discount, batch size and soft-update factor per agent
    /// column of the reference parameter table; the remaining values are
    /// standard TD3 choices shared by every kind.
    pub fn reference(kind: AgentKind) -> Self {
        let (actor_lr, critic_lr, gamma) = match kind {
            AgentKind::Td3 => (1e-3, 4.0e-4, 0.99),
            AgentKind::Td3Pca => (1e-3, 5e-4, 0.95),
            AgentKind::Etd3 => (1e-5, 6.4e-4, 0.95),
        };
        let etd3 = kind == AgentKind::Etd3;
        Self {
            actor_lr,
            critic_lr,
            gamma,
            batch_size: 100,
            tau: 0.005,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            explore_sigma0: 0.3,
            explore_decay: 0.995,
            loss: if etd3 { Loss::Huber { delta: 1.0 } } else { Loss::Mse },
            prioritized: etd3,
            per: PerConfig::default(),
            replay_capacity: 100_000,
            learning_starts: 100,
            random_warmup: true,
            output_init: 3e-3,
            preact_penalty: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.actor_lr > 0.0
            && self.critic_lr > 0.0
            && (0.0..=1.0).contains(&self.gamma)
            && self.batch_size > 0
            && (0.0..=1.0).contains(&self.tau)
            && self.policy_delay > 0
            && self.target_noise >= 0.0
            && self.target_noise_clip >= 0.0
            && self.explore_sigma0 >= 0.0
            && self.explore_decay > 0.0
            && self.output_init >= 0.0
            && self.preact_penalty >= 0.0
            && self.replay_capacity >= self.batch_size;
        if !ok {
            return arg(format!("invalid hyperparameters: {self:?}"));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn apply(&mut self, o: &HyperOverride) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f.clone() { self.$f = v; })* };
        }
        set!(
            actor_lr, critic_lr, gamma, batch_size, tau, policy_delay, target_noise, target_noise_clip,
            explore_sigma0, explore_decay, loss, prioritized, per, replay_capacity, learning_starts,
            random_warmup, output_init, preact_penalty
        );
    }
}

/// Partial hyperparameter override layered on top of [`Hyper::reference`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actor_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_delay: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_noise_clip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explore_sigma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explore_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<Loss>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prioritized: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per: Option<PerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_starts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_warmup: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preact_penalty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainDiagnostics {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    /// Present on steps that updated the actor.
    pub actor_loss: Option<f64>,
    pub mean_abs_td: f64,
}

/// Actor, twin critics, their targets and optimizer state.
///
/// Actions are produced in normalized units `[-1, 1]^3` by a tanh head and
/// scaled by `action_scale` (the per-axis step limit in meters).
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub kind: AgentKind,
    pub hyper: Hyper,
    pub action_scale: f64,
    pub actor: Network,
    pub actor_target: Network,
    pub critic1: Network,
    pub critic2: Network,
    pub critic1_target: Network,
    pub critic2_target: Network,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    rng: ChaCha8Rng,
    critic_updates: u64,
    actor_updates: u64,
}

pub const ACTION_DIM: usize = 3;

impl Td3Agent {
    /// `actor_spec` must emit [`ACTION_DIM`] values; `critic_spec` must take the
    /// observation aux vector plus the action as its auxiliary input and emit
    /// one value.
    pub fn new(
        kind: AgentKind,
        hyper: Hyper,
        actor_spec: NetworkSpec,
        critic_spec: NetworkSpec,
        action_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if actor_spec.output_len()? != ACTION_DIM {
            return Err(Error::Shape(format!("actor must output {ACTION_DIM} values")));
        }
        if critic_spec.output_len()? != 1 {
            return Err(Error::Shape("critic must output a single value".into()));
        }
        if critic_spec.aux_len() != actor_spec.aux_len() + ACTION_DIM || critic_spec.input != actor_spec.input {
            return Err(Error::Shape("critic input must be the actor input plus the action".into()));
        }
        if !(action_scale > 0.0) {
            return arg("action scale must be positive");
        }
        let mut actor = Network::new(actor_spec, seed.wrapping_mul(4).wrapping_add(1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7d3a);
        if hyper.output_init > 0.0 {
            let n = actor.params().len();
            let w = &mut actor.params_mut()[n - 2];
            for v in w.data_mut() {
                *v = rng.gen_range(-hyper.output_init..=hyper.output_init);
            }
        }
        let critic1 = Network::new(critic_spec.clone(), seed.wrapping_mul(4).wrapping_add(2))?;
        let critic2 = Network::new(critic_spec, seed.wrapping_mul(4).wrapping_add(3))?;
        Ok(Self {
            kind,
            actor_opt: Adam::for_network(hyper.adam(hyper.actor_lr), &actor),
            critic1_opt: Adam::for_network(hyper.adam(hyper.critic_lr), &critic1),
            critic2_opt: Adam::for_network(hyper.adam(hyper.critic_lr), &critic2),
            hyper,
            action_scale,
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            rng,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn new_buffer(&self) -> Result<ReplayBuffer> {
        Ok(if self.hyper.prioritized {
            ReplayBuffer::Prioritized(PrioritizedBuffer::new(self.hyper.replay_capacity, self.hyper.per)?)
        } else {
            ReplayBuffer::Uniform(UniformBuffer::new(self.hyper.replay_capacity)?)
        })
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    /// Exploration std at `episode`: `sigma0 * decay^episode`.
    pub fn exploration_sigma(&self, episode: usize) -> f64 {
        self.hyper.explore_sigma0 * self.hyper.explore_decay.powi(episode as i32)
    }

    fn batch_inputs(&self, obs: &[&Observation]) -> Result<(Tensor, Tensor)> {
        let [c, h, w] = self.actor.spec().input;
        let image: Vec<f64> = obs.iter().flat_map(|o| o.image.iter().copied()).collect();
        let aux: Vec<f64> = obs.iter().flat_map(|o| o.aux.iter().copied()).collect();
        let n = obs.len();
        Ok((Tensor::new(vec![n, c, h, w], image)?, Tensor::new(vec![n, self.actor.spec().aux_len()], aux)?))
    }

    fn critic_aux(aux: &Tensor, actions: &[[f64; ACTION_DIM]]) -> Result<Tensor> {
        let n = aux.rows();
        let mut out = Vec::with_capacity(n * (aux.row_len() + ACTION_DIM));
        for (b, a) in actions.iter().enumerate() {
            out.extend_from_slice(aux.row(b));
            out.extend_from_slice(a);
        }
        Tensor::new(vec![n, aux.row_len() + ACTION_DIM], out)
    }

    fn policy(net: &Network, image: &Tensor, aux: &Tensor) -> Result<Vec<[f64; ACTION_DIM]>> {
        let raw = net.forward(image, aux)?;
        Ok((0..raw.rows()).map(|b| std::array::from_fn(|i| raw.row(b)[i].tanh())).collect())
    }

    /// Deterministic normalized action `tanh(actor(obs))`.
    pub fn act_normalized(&self, obs: &Observation) -> Result<[f64; ACTION_DIM]> {
        let (image, aux) = self.batch_inputs(&[obs])?;
        Ok(Self::policy(&self.actor, &image, &aux)?[0])
    }

    /// Displacement in meters; with `explore`, Gaussian noise of the episode's
    /// exploration std is added before clamping to the action box.
    pub fn select_action(&mut self, obs: &Observation, explore: bool, episode: usize) -> Result<[f64; ACTION_DIM]> {
        let mut a = self.act_normalized(obs)?;
        let sigma = self.exploration_sigma(episode);
        if explore && sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
            for v in &mut a {
                *v = (*v + normal.sample(&mut self.rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a.map(|v| v * self.action_scale))
    }

    /// Uniform random action in meters.
    pub fn random_action(&mut self) -> [f64; ACTION_DIM] {
        let s = self.action_scale;
        [(); ACTION_DIM].map(|_| self.rng.gen_range(-s..=s))
    }

    fn normalized_action(&self, meters: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        meters.map(|m| (m / self.action_scale).clamp(-1.0, 1.0))
    }

    fn q_values(net: &Network, image: &Tensor, aux: &Tensor, actions: &[[f64; ACTION_DIM]]) -> Result<Vec<f64>> {
        Ok(net.forward(image, &Self::critic_aux(aux, actions)?)?.into_data())
    }

    /// Clipped double-Q targets `r + γ (1 - done) min(Q1', Q2')(s', π'(s') + ε)`.
    pub fn td_targets(&mut self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next: Vec<&Observation> = batch.iter().map(|t| &t.next_state).collect();
        let (image, aux) = self.batch_inputs(&next)?;
        let mut actions = Self::policy(&self.actor_target, &image, &aux)?;
        if self.hyper.target_noise > 0.0 {
            let normal = Normal::new(0.0, self.hyper.target_noise).map_err(|e| Error::Argument(e.to_string()))?;
            let c = self.hyper.target_noise_clip;
            for a in &mut actions {
                for v in a.iter_mut() {
                    *v = (*v + normal.sample(&mut self.rng).clamp(-c, c)).clamp(-1.0, 1.0);
                }
            }
        }
        let q1 = Self::q_values(&self.critic1_target, &image, &aux, &actions)?;
        let q2 = Self::q_values(&self.critic2_target, &image, &aux, &actions)?;
        Ok(batch
            .iter()
            .zip(q1.iter().zip(&q2))
            .map(|(t, (a, b))| {
                if t.done {
                    t.reward
                } else {
                    t.reward + self.hyper.gamma * a.min(*b)
                }
            })
            .collect())
    }

    /// Loss of critic 1 on a fixed batch against fixed targets (diagnostic).
    pub fn critic1_loss(&self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        let states: Vec<&Observation> = batch.iter().map(|t| &t.state).collect();
        let (image, aux) = self.batch_inputs(&states)?;
        let actions: Vec<_> = batch.iter().map(|t| self.normalized_action(&t.action)).collect();
        let q = Self::q_values(&self.critic1, &image, &aux, &actions)?;
        let n = q.len();
        let (loss, _) = self.hyper.loss.evaluate(
            &Tensor::new(vec![n, 1], q)?,
            &Tensor::new(vec![n, 1], targets.to_vec())?,
            None,
        )?;
        Ok(loss)
    }

    /// One critic step per critic on fixed targets; returns the two losses
    /// and critic 1's TD errors before the update.
    pub fn update_critics(&mut self, batch: &[&Transition], targets: &[f64], weights: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let states: Vec<&Observation> = batch.iter().map(|t| &t.state).collect();
        let (image, aux) = self.batch_inputs(&states)?;
        let actions: Vec<_> = batch.iter().map(|t| self.normalized_action(&t.action)).collect();
        let caux = Self::critic_aux(&aux, &actions)?;
        let n = batch.len();
        let target = Tensor::new(vec![n, 1], targets.to_vec())?;
        let w = if weights.iter().all(|&w| w == 1.0) { None } else { Some(weights) };

        let (q1, cache1) = self.critic1.forward_train(&image, &caux)?;
        let td: Vec<f64> = targets.iter().zip(q1.data()).map(|(y, q)| y - q).collect();
        let (loss1, g1) = self.hyper.loss.evaluate(&q1, &target, w)?;
        let grads1 = self.critic1.backward(&cache1, &g1)?;
        self.critic1.apply_gradients(&mut self.critic1_opt, &grads1.params)?;

        let (q2, cache2) = self.critic2.forward_train(&image, &caux)?;
        let (loss2, g2) = self.hyper.loss.evaluate(&q2, &target, w)?;
        let grads2 = self.critic2.backward(&cache2, &g2)?;
        self.critic2.apply_gradients(&mut self.critic2_opt, &grads2.params)?;
        Ok((loss1, loss2, td))
    }

    /// Deterministic policy gradient step on `-mean Q1(s, π(s))`.
    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64> {
        let states: Vec<&Observation> = batch.iter().map(|t| &t.state).collect();
        let (image, aux) = self.batch_inputs(&states)?;
        let (raw, actor_cache) = self.actor.forward_train(&image, &aux)?;
        let n = raw.rows();
        let actions: Vec<[f64; ACTION_DIM]> =
            (0..n).map(|b| std::array::from_fn(|i| raw.row(b)[i].tanh())).collect();
        let caux = Self::critic_aux(&aux, &actions)?;
        let (q, critic_cache) = self.critic1.forward_train(&image, &caux)?;
        let lambda = self.hyper.preact_penalty;
        let loss = (lambda * raw.data().iter().map(|v| v * v).sum::<f64>() - q.data().iter().sum::<f64>()) / n as f64;
        let grads = self.critic1.backward(&critic_cache, &Tensor::filled(&[n, 1], -1.0 / n as f64))?;
        let aux_len = aux.row_len();
        let mut graw = Vec::with_capacity(n * ACTION_DIM);
        for (b, a) in actions.iter().enumerate() {
            let ga = &grads.aux.row(b)[aux_len..];
            for i in 0..ACTION_DIM {
                graw.push(ga[i] * (1.0 - a[i] * a[i]) + 2.0 * lambda * raw.row(b)[i] / n as f64);
            }
        }
        let agrads = self.actor.backward(&actor_cache, &Tensor::new(vec![n, ACTION_DIM], graw)?)?;
        self.actor.apply_gradients(&mut self.actor_opt, &agrads.params)?;
        Ok(loss)
    }

    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.hyper.tau;
        soft_update(&mut self.actor_target, &self.actor, tau)?;
        soft_update(&mut self.critic1_target, &self.critic1, tau)?;
        soft_update(&mut self.critic2_target, &self.critic2, tau)
    }

    /// Samples a batch and performs one TD3 iteration: critic updates every
    /// call, actor and target updates every `policy_delay` calls.
    pub fn train_step(&mut self, buffer: &mut ReplayBuffer, beta: f64) -> Result<TrainDiagnostics> {
        let batch_size = self.hyper.batch_size;
        if buffer.len() < batch_size {
            return Err(Error::Usage(format!("buffer holds {} transitions, batch needs {batch_size}", buffer.len())));
        }
        let sample = buffer.sample(batch_size, beta, &mut self.rng)?;
        let batch: Vec<&Transition> = sample.indices.iter().map(|&i| buffer.get(i)).collect();
        let targets = self.td_targets(&batch)?;
        let (critic1_loss, critic2_loss, td) = self.update_critics(&batch, &targets, &sample.weights)?;
        self.critic_updates += 1;
        let actor_loss = if self.critic_updates % self.hyper.policy_delay == 0 {
            let loss = self.update_actor(&batch)?;
            self.update_targets()?;
            self.actor_updates += 1;
            Some(loss)
        } else {
            None
        };
        let mean_abs_td = td.iter().map(|v| v.abs()).sum::<f64>() / td.len() as f64;
        drop(batch);
        buffer.update_priorities(&sample.indices, &td)?;
        Ok(TrainDiagnostics { critic1_loss, critic2_loss, actor_loss, mean_abs_td })
    }
}
