use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::json;

use super::config::ExperimentConfig;
use super::convergence::{episodes_to_threshold, Threshold};
use super::fidelity::sample_maps;
use super::{REFERENCE_EPISODES, REFERENCE_PCA};
use crate::error::{Error, Result};
use crate::pca::{self, PcaModel};
use crate::rl::{
    train_agent, AgentKind, EpisodeLog, ObservationEncoder, RelayEnv, StateEncoding, Td3Agent,
};
use crate::world::{generate_terrain, place_scenario, Bounds, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub kind: AgentKind,
    pub run: usize,
    pub seed: u64,
    pub logs: Vec<EpisodeLog>,
    /// Retained PCA components, for PCA agents.
    pub pca_k: Option<usize>,
}

impl RunResult {
    pub fn rewards(&self) -> Vec<f64> {
        self.logs.iter().map(|l| l.mean_step_reward).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub kind: AgentKind,
    /// Mean episode reward across runs.
    pub curve: Vec<f64>,
    /// Population standard deviation across runs.
    pub std: Vec<f64>,
    pub convergence: Threshold,
    pub per_run: Vec<Threshold>,
    /// Mean reward over the trailing `final_window` episodes, averaged over runs.
    pub final_mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config_hash: String,
    pub agents: Vec<AgentSummary>,
    pub runs: Vec<RunResult>,
}

impl CampaignResult {
    pub fn agent(&self, kind: AgentKind) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.kind == kind)
    }

    pub fn runs_of(&self, kind: AgentKind) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.kind == kind)
    }
}

fn run_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    if cfg.fixed_scenario {
        cfg.seed_base
    } else {
        cfg.seed_base.wrapping_add(run as u64)
    }
}

/// Terrain, bounds and placement for one seed.
pub fn build_scenario(cfg: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    let terrain = generate_terrain(seed, &cfg.terrain)?;
    let bounds = Bounds::over_terrain(&terrain, cfg.z_range.0, cfg.z_range.1);
    place_scenario(seed, &terrain, bounds, &cfg.placement)
}

/// Fits the state basis on `pca.warmup_maps` relay poses sampled in bounds.
pub fn fit_scenario_pca(cfg: &ExperimentConfig, scenario: &Scenario, seed: u64) -> Result<PcaModel> {
    let maps = sample_maps(scenario, &cfg.channel, cfg.pca.warmup_maps, seed ^ 0x9ca0_f17)?;
    pca::fit(&maps, cfg.pca.variance_target)
}

/// Environment and agent for one kind on one scenario.
pub fn build_agent(
    cfg: &ExperimentConfig,
    kind: AgentKind,
    scenario: Arc<Scenario>,
    pca: Option<Arc<PcaModel>>,
    seed: u64,
) -> Result<(RelayEnv, Td3Agent)> {
    let encoding = match kind {
        AgentKind::Td3 => StateEncoding::RawMap { height: cfg.network.raw_map.0, width: cfg.network.raw_map.1 },
        AgentKind::Td3Pca => StateEncoding::Pca { frames: 1 },
        AgentKind::Etd3 => StateEncoding::Pca { frames: cfg.pca.frames },
    };
    let encoder = ObservationEncoder::new(encoding, pca, cfg.network.min_input())?;
    let image = encoder.image_shape();
    let env = RelayEnv::new(scenario, cfg.env.clone(), cfg.channel, encoder)?;
    let aux = env.aux_len();
    let agent = Td3Agent::new(
        kind,
        cfg.hyper.hyper(kind),
        cfg.network.spec(image, aux, 3),
        cfg.network.spec(image, aux + 3, 1),
        cfg.env.max_step,
        seed,
    )?;
    Ok((env, agent))
}

/// Trains one agent kind on the scenario of run `run`.
pub fn run_single(cfg: &ExperimentConfig, kind: AgentKind, run: usize) -> Result<RunResult> {
    let seed = run_seed(cfg, run);
    let inner = || -> Result<RunResult> {
        let scenario = Arc::new(build_scenario(cfg, seed)?);
        let pca = if kind.uses_pca() { Some(Arc::new(fit_scenario_pca(cfg, &scenario, seed)?)) } else { None };
        let pca_k = pca.as_ref().map(|m| m.k);
        let agent_seed = cfg.seed_base.wrapping_mul(1_000_003).wrapping_add(run as u64);
        let (env, mut agent) = build_agent(cfg, kind, scenario, pca, agent_seed)?;
        let logs = train_agent(&env, &mut agent, cfg.episodes, run)?;
        Ok(RunResult { kind, run, seed, logs, pca_k })
    };
    inner().map_err(|e| Error::Run { agent: kind.name().into(), run, seed, source: Box::new(e) })
}

fn summarize(cfg: &ExperimentConfig, kind: AgentKind, runs: &[&RunResult]) -> Result<AgentSummary> {
    let episodes = cfg.episodes;
    let n = runs.len() as f64;
    let mut curve = vec![0.0; episodes];
    for r in runs {
        for (c, v) in curve.iter_mut().zip(r.rewards()) {
            *c += v;
        }
    }
    curve.iter_mut().for_each(|c| *c /= n);
    let std = (0..episodes)
        .map(|e| (runs.iter().map(|r| (r.logs[e].mean_step_reward - curve[e]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let cc = cfg.convergence;
    let convergence = episodes_to_threshold(&curve, cc.window, cc.theta)?;
    let per_run = runs.iter().map(|r| episodes_to_threshold(&r.rewards(), cc.window, cc.theta)).collect::<Result<_>>()?;
    let tail = cc.final_window.min(episodes);
    let final_mean_reward = curve[episodes - tail..].iter().sum::<f64>() / tail as f64;
    Ok(AgentSummary { kind, curve, std, convergence, per_run, final_mean_reward })
}

/// Trains every configured agent for every run and aggregates the curves.
///
/// Runs are distributed over `cfg.parallel` worker threads; results are
/// collected by job index so the output does not depend on scheduling.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    let jobs: Vec<(AgentKind, usize)> =
        cfg.agents.iter().flat_map(|&k| (0..cfg.runs).map(move |r| (k, r))).collect();
    let slots: Vec<Mutex<Option<Result<RunResult>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(kind, run)) = jobs.get(i) else { break };
        let out = run_single(cfg, kind, run);
        *slots[i].lock().unwrap() = Some(out);
    };
    let workers = cfg.parallel.clamp(1, jobs.len());
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    let runs = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;
    let agents = cfg
        .agents
        .iter()
        .map(|&k| summarize(cfg, k, &runs.iter().filter(|r| r.kind == k).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(CampaignResult { config_hash: cfg.hash(), agents, runs })
}

/// Writes `curves_<agent>.csv`, `episodes_<agent>.csv` and `report.json`.
pub fn write_campaign(result: &CampaignResult, cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut agents = serde_json::Map::new();
    for a in &result.agents {
        let name = a.kind.name();
        let mut curves = String::from("episode,mean_reward,std_reward\n");
        for (e, (m, s)) in a.curve.iter().zip(&a.std).enumerate() {
            writeln!(curves, "{e},{m},{s}").unwrap();
        }
        std::fs::write(dir.join(format!("curves_{name}.csv")), curves)?;
        let mut episodes = format!("{}\n", EpisodeLog::CSV_HEADER);
        for r in result.runs_of(a.kind) {
            for l in &r.logs {
                writeln!(episodes, "{}", l.csv_line()).unwrap();
            }
        }
        std::fs::write(dir.join(format!("episodes_{name}.csv")), episodes)?;
        let pca_k: Vec<Option<usize>> = result.runs_of(a.kind).map(|r| r.pca_k).collect();
        agents.insert(
            name.into(),
            json!({
                "episodes_to_threshold": a.convergence.episode,
                "threshold": a.convergence.threshold,
                "plateau": a.convergence.plateau,
                "per_run_episodes_to_threshold": a.per_run.iter().map(|t| t.episode).collect::<Vec<_>>(),
                "final_mean_reward": a.final_mean_reward,
                "runs": cfg.runs,
                "episodes": cfg.episodes,
                "pca_components": pca_k,
            }),
        );
    }
    let reference: serde_json::Map<String, serde_json::Value> =
        REFERENCE_EPISODES.iter().map(|(k, v)| ((*k).to_string(), json!(v))).collect();
    let report = json!({
        "config_hash": result.config_hash,
        "config": cfg,
        "agents": agents,
        "reference": {
            "episodes_to_convergence": reference,
            "pca_variance_target": REFERENCE_PCA.0,
            "pca_feature_fraction": REFERENCE_PCA.1,
            "pca_mean_mae_db": REFERENCE_PCA.2,
        },
    });
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}
