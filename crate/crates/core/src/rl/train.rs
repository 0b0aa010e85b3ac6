use super::agent::Td3Agent;
use super::env::RelayEnv;
use crate::error::Result;
use crate::replay::Transition;

/// Per-episode training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub run_id: usize,
    pub episode: usize,
    pub mean_step_reward: f64,
    pub r1_mean: f64,
    pub r2_mean: f64,
    pub r3_mean: f64,
    /// Mean losses over the episode's updates; `None` before learning starts.
    pub critic1_loss: Option<f64>,
    pub critic2_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub epsilon_sigma: f64,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str =
        "run_id,episode,mean_step_reward,r1_mean,r2_mean,r3_mean,critic1_loss,critic2_loss,actor_loss,epsilon_sigma";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.episode,
            self.mean_step_reward,
            self.r1_mean,
            self.r2_mean,
            self.r3_mean,
            opt(self.critic1_loss),
            opt(self.critic2_loss),
            opt(self.actor_loss),
            self.epsilon_sigma
        )
    }
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Runs `episodes` exploratory episodes, storing every transition and
/// performing one TD3 iteration per environment step once the buffer holds
/// `max(batch_size, learning_starts)` transitions; with `random_warmup` the
/// actions before that point are uniform. The importance exponent
/// anneals linearly over the planned number of steps.
pub fn train_agent(env: &RelayEnv, agent: &mut Td3Agent, episodes: usize, run_id: usize) -> Result<Vec<EpisodeLog>> {
    let mut buffer = agent.new_buffer()?;
    let warmup = agent.hyper.batch_size.max(agent.hyper.learning_starts);
    let planned = (episodes * env.config().episode_len).max(1) as f64;
    let mut steps = 0usize;
    let mut logs = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut state = env.reset()?;
        let mut obs = env.observation(&state);
        let (mut reward, mut r1, mut r2, mut r3) = (Mean::default(), Mean::default(), Mean::default(), Mean::default());
        let (mut c1, mut c2, mut actor) = (Mean::default(), Mean::default(), Mean::default());
        loop {
            let action = if agent.hyper.random_warmup && buffer.len() < warmup {
                agent.random_action()
            } else {
                agent.select_action(&obs, true, episode)?
            };
            let step = env.step(&state, action)?;
            let next_obs = env.observation(&step.state);
            reward.add(step.reward);
            r1.add(step.info.r1);
            r2.add(step.info.r2);
            r3.add(step.info.r3);
            buffer.push(Transition {
                state: obs,
                action,
                reward: step.reward,
                next_state: next_obs.clone(),
                done: step.done,
            });
            steps += 1;
            if buffer.len() >= warmup {
                let beta = agent.hyper.per.beta_at(steps as f64 / planned);
                let diag = agent.train_step(&mut buffer, beta)?;
                c1.add(diag.critic1_loss);
                c2.add(diag.critic2_loss);
                if let Some(a) = diag.actor_loss {
                    actor.add(a);
                }
            }
            obs = next_obs;
            state = step.state;
            if step.done {
                break;
            }
        }
        logs.push(EpisodeLog {
            run_id,
            episode,
            mean_step_reward: reward.get().unwrap_or(0.0),
            r1_mean: r1.get().unwrap_or(0.0),
            r2_mean: r2.get().unwrap_or(0.0),
            r3_mean: r3.get().unwrap_or(0.0),
            critic1_loss: c1.get(),
            critic2_loss: c2.get(),
            actor_loss: actor.get(),
            epsilon_sigma: agent.exploration_sigma(episode),
        });
    }
    Ok(logs)
}
