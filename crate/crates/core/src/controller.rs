//! Per-frame orchestration: camera choice, server choice, environment step,
//! (possibly delayed) feedback and learning.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disruption::{DisruptionParams, Traces};
use crate::environment::{Environment, FrameOutcome, LatencyModel, QualityConfig, QualityModel};
use crate::error::{Error, Result};
use crate::metrics::{self, RewardWeights, RunStats, Thresholds};
pub use crate::metrics::FrameRecord;
use crate::policies::{
    ActionSpace, AgentParams, CameraPolicy, CameraPolicyKind, QTable, ServerPolicy, ServerPolicyKind, ServerState,
};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSet {
    pub camera_fixed: AgentParams,
    pub camera_adaptive: AgentParams,
    pub server_fixed: AgentParams,
    pub server_adaptive: AgentParams,
}

impl Default for AgentSet {
    fn default() -> Self {
        Self {
            camera_fixed: AgentParams::fixed(),
            camera_adaptive: AgentParams::adaptive_camera(),
            server_fixed: AgentParams::fixed(),
            server_adaptive: AgentParams::adaptive_server(),
        }
    }
}

/// Externally supplied traces; when set they replace generation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracePaths {
    pub cameras: Option<PathBuf>,
    pub servers: Option<PathBuf>,
}

/// Policy lists swept by `compare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparePolicies {
    pub camera_policies: Vec<CameraPolicyKind>,
    pub server_policies: Vec<ServerPolicyKind>,
}

impl Default for ComparePolicies {
    fn default() -> Self {
        Self {
            camera_policies: CameraPolicyKind::ALL.to_vec(),
            server_policies: ServerPolicyKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the policies' random streams.
    pub seed: u64,
    pub n_frames: usize,
    pub n_cameras: usize,
    pub n_servers: usize,
    pub k_min: u32,
    pub k_max: u32,
    pub camera_policy: CameraPolicyKind,
    pub server_policy: ServerPolicyKind,
    pub feedback_delay_frames: usize,
    pub bandit_epsilon: f64,
    pub ewma_beta: f64,
    pub thresholds: Thresholds,
    pub weights: RewardWeights,
    pub agents: AgentSet,
    /// `seed` here drives traces and quality noise; it defaults to the
    /// top-level seed when the file omits it.
    pub disruption: DisruptionParams,
    pub traces: TracePaths,
    pub quality: QualityConfig,
    pub latency: LatencyModel,
    pub compare: ComparePolicies,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 4000,
            n_cameras: 5,
            n_servers: 4,
            k_min: 2,
            k_max: 5,
            camera_policy: CameraPolicyKind::QLearning,
            server_policy: ServerPolicyKind::RoundRobin,
            feedback_delay_frames: 0,
            bandit_epsilon: 0.1,
            ewma_beta: 0.3,
            thresholds: Thresholds::default(),
            weights: RewardWeights::default(),
            agents: AgentSet::default(),
            disruption: DisruptionParams::default(),
            traces: TracePaths::default(),
            quality: QualityConfig::default(),
            latency: LatencyModel::default(),
            compare: ComparePolicies::default(),
        }
    }
}

impl ExperimentConfig {
    /// Camera-comparison preset: round-robin servers, 400-point quality bar.
    pub fn camera_comparison() -> Self {
        Self {
            server_policy: ServerPolicyKind::RoundRobin,
            thresholds: Thresholds {
                theta: 400.0,
                phi_total_s: 3.0,
                phi_recon_s: 1.0,
            },
            ..Self::default()
        }
    }

    /// Server-comparison preset: Greedy-3 cameras, 500-point quality bar.
    pub fn server_comparison() -> Self {
        Self {
            camera_policy: CameraPolicyKind::Greedy3,
            thresholds: Thresholds {
                theta: 500.0,
                phi_total_s: 3.0,
                phi_recon_s: 1.0,
            },
            ..Self::default()
        }
    }

    /// Server axis under recurring latency spikes on a pool where half the
    /// servers reconstruct 40% slower.
    pub fn server_spike_scenario() -> Self {
        let mut cfg = Self::server_comparison();
        cfg.disruption.n_spike_events = 30;
        cfg.latency.server_speed_factor = vec![1.0, 1.4, 1.0, 1.4];
        cfg
    }

    /// Sets both the policy seed and the scenario seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.disruption.seed = seed;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim_end()))?;
        // A top-level seed also drives the scenario unless one is given.
        let scenario_seed = table
            .get("disruption")
            .and_then(|d| d.as_table())
            .is_some_and(|d| d.contains_key("seed"));
        if table.contains_key("seed") && !scenario_seed {
            cfg.disruption.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative trace paths resolve against the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut cfg.traces.cameras);
        fix(&mut cfg.traces.servers);
        fix(&mut cfg.quality.trace);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::config("n_frames", "must be > 0"));
        }
        if self.n_servers == 0 {
            return Err(Error::config("n_servers", "must be > 0"));
        }
        ActionSpace::enumerate(self.n_cameras, self.k_min, self.k_max)?;
        self.thresholds.validate()?;
        self.weights.validate()?;
        self.agents.camera_fixed.validate("agents.camera_fixed")?;
        self.agents.camera_adaptive.validate("agents.camera_adaptive")?;
        self.agents.server_fixed.validate("agents.server_fixed")?;
        self.agents.server_adaptive.validate("agents.server_adaptive")?;
        if !(0.0..=1.0).contains(&self.bandit_epsilon) {
            return Err(Error::config("bandit_epsilon", "must lie in [0, 1]"));
        }
        if !(self.ewma_beta > 0.0 && self.ewma_beta <= 1.0) {
            return Err(Error::config("ewma_beta", "must lie in (0, 1]"));
        }
        if self.traces.cameras.is_some() != self.traces.servers.is_some() {
            return Err(Error::config("traces", "give both camera and server trace paths or neither"));
        }
        self.latency.validate(self.n_servers)?;
        if self.traces.cameras.is_none() {
            self.disruption_params().validate()?;
        }
        Ok(())
    }

    /// Disruption parameters with the run's frame, camera and server counts.
    pub fn disruption_params(&self) -> DisruptionParams {
        DisruptionParams {
            n_frames: self.n_frames,
            n_cameras: self.n_cameras,
            n_servers: self.n_servers,
            ..self.disruption.clone()
        }
    }

    pub fn action_space(&self) -> Result<ActionSpace> {
        ActionSpace::enumerate(self.n_cameras, self.k_min, self.k_max)
    }

    pub fn load_or_generate_traces(&self) -> Result<Traces> {
        match (&self.traces.cameras, &self.traces.servers) {
            (Some(c), Some(s)) => Traces::load_files(c, s),
            _ => Traces::generate(&self.disruption_params()),
        }
    }

    pub fn build_environment(&self) -> Result<Environment> {
        self.validate()?;
        let traces = self.load_or_generate_traces()?;
        self.environment_with(traces)
    }

    /// Environment over already-built traces (lets many runs share them).
    pub fn environment_with(&self, traces: Traces) -> Result<Environment> {
        if traces.cameras.n_cameras() != self.n_cameras {
            return Err(Error::config(
                "n_cameras",
                format!("config says {} but the camera trace has {}", self.n_cameras, traces.cameras.n_cameras()),
            ));
        }
        if traces.servers.n_servers() != self.n_servers {
            return Err(Error::config(
                "n_servers",
                format!("config says {} but the server trace has {}", self.n_servers, traces.servers.n_servers()),
            ));
        }
        if traces.n_frames() < self.n_frames {
            return Err(Error::config(
                "n_frames",
                format!("{} frames requested but traces hold {}", self.n_frames, traces.n_frames()),
            ));
        }
        let quality = match &self.quality.trace {
            Some(path) => {
                let q = QualityModel::load_trace(path, self.n_cameras, self.k_max)?;
                if let QualityModel::Trace(t) = &q {
                    if t.n_frames() < self.n_frames {
                        return Err(Error::config(
                            "quality.trace",
                            format!("{} frames requested but the quality trace holds {}", self.n_frames, t.n_frames()),
                        ));
                    }
                }
                q
            }
            None => QualityModel::synthetic(&self.quality, self.n_cameras, self.disruption.seed)?,
        };
        Ok(Environment {
            traces,
            quality,
            latency: self.latency.clone(),
            thresholds: self.thresholds,
            k_min: self.k_min,
            k_max: self.k_max,
        })
    }

    pub fn camera_policy(&self) -> Result<CameraPolicy> {
        CameraPolicy::build(
            self.camera_policy,
            self.action_space()?,
            &self.agents.camera_fixed,
            &self.agents.camera_adaptive,
            self.bandit_epsilon,
        )
    }

    pub fn server_policy(&self) -> ServerPolicy {
        ServerPolicy::build(
            self.server_policy,
            self.n_servers,
            &self.agents.server_fixed,
            &self.agents.server_adaptive,
            self.ewma_beta,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Camera,
    Server,
}

/// When a learn call for `frame` happened (loop step `step`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnEvent {
    pub role: Role,
    pub frame: usize,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub records: Vec<FrameRecord>,
    pub stats: RunStats,
    pub learn_log: Vec<LearnEvent>,
    pub camera_q: Option<QTable>,
    pub server_q: Option<QTable>,
}

impl Episode {
    pub fn frame_log_csv(&self) -> String {
        metrics::frame_log_csv(&self.records)
    }
}

struct Feedback {
    frame: usize,
    action: usize,
    server: usize,
    state: ServerState,
    outcome: FrameOutcome,
    reward_camera: f64,
    reward_server: f64,
}

pub fn run_episode(config: &ExperimentConfig) -> Result<Episode> {
    let env = config.build_environment()?;
    run_episode_in(config, &env)
}

/// Runs one episode against a prepared environment.
pub fn run_episode_in(config: &ExperimentConfig, env: &Environment) -> Result<Episode> {
    config.validate()?;
    if env.n_frames() < config.n_frames {
        return Err(Error::config("n_frames", "trace shorter than the episode"));
    }
    let mut camera = config.camera_policy()?;
    let mut server = config.server_policy();
    let mut camera_rng = rng::seeded(config.seed, rng::stream::CAMERA_POLICY);
    let mut server_rng = rng::seeded(config.seed, rng::stream::SERVER_POLICY);
    let delay = config.feedback_delay_frames;

    let mut records = Vec::with_capacity(config.n_frames);
    let mut states: Vec<ServerState> = Vec::with_capacity(config.n_frames);
    let mut in_flight: VecDeque<Feedback> = VecDeque::new();
    let mut awaiting_next_state: VecDeque<Feedback> = VecDeque::new();
    let mut learn_log = Vec::new();
    let mut prev_server = 0;

    for t in 0..config.n_frames {
        let (camera_epsilon, camera_alpha) = camera.rates();
        let action = camera.select(&mut camera_rng);
        let mask = camera.space().actions[action];
        let state = ServerState {
            n_selected: mask.count(),
            prev_server,
        };
        states.push(state);

        // Server updates held back until their next state existed.
        while let Some(fb) = awaiting_next_state.pop_front() {
            server.learn(&fb.state, fb.server, &fb.outcome, fb.reward_server, &states[fb.frame + 1])?;
            learn_log.push(LearnEvent {
                role: Role::Server,
                frame: fb.frame,
                step: t,
            });
        }

        let (server_epsilon, server_alpha) = server.rates();
        let chosen = server.select(t, &state, &mut server_rng);
        let outcome = env.step(t, &mask, chosen)?;
        let reward_camera = metrics::camera_reward(&outcome, &config.thresholds, &config.weights);
        let reward_server = metrics::server_reward(&outcome, &config.thresholds);
        records.push(FrameRecord {
            frame: t,
            mask,
            server: chosen,
            outcome: outcome.clone(),
            reward_camera,
            reward_server,
            camera_epsilon,
            camera_alpha,
            server_epsilon,
            server_alpha,
        });
        prev_server = chosen;
        in_flight.push_back(Feedback {
            frame: t,
            action,
            server: chosen,
            state,
            outcome,
            reward_camera,
            reward_server,
        });

        while in_flight.front().is_some_and(|fb| fb.frame + delay <= t) {
            let fb = in_flight.pop_front().expect("front checked");
            camera.learn(fb.action, &fb.outcome, fb.reward_camera)?;
            learn_log.push(LearnEvent {
                role: Role::Camera,
                frame: fb.frame,
                step: t,
            });
            if fb.frame + 1 < states.len() {
                server.learn(&fb.state, fb.server, &fb.outcome, fb.reward_server, &states[fb.frame + 1])?;
                learn_log.push(LearnEvent {
                    role: Role::Server,
                    frame: fb.frame,
                    step: t,
                });
            } else {
                awaiting_next_state.push_back(fb);
            }
        }
    }

    let stats = RunStats::from_records(&records);
    Ok(Episode {
        records,
        stats,
        learn_log,
        camera_q: camera.q_table().cloned(),
        server_q: server.q_table().cloned(),
    })
}

#[derive(Debug)]
pub struct GridResult {
    pub id: String,
    pub result: Result<Episode>,
}

/// Runs independent episodes in parallel. Episode `i` uses policy seed
/// `config.seed + i`; scenario seeds are left as given so runs that share a
/// scenario see identical traces.
pub fn run_grid(configs: &[(String, ExperimentConfig)]) -> Vec<GridResult> {
    configs
        .par_iter()
        .enumerate()
        .map(|(i, (id, cfg))| {
            let mut cfg = cfg.clone();
            cfg.seed = cfg.seed.wrapping_add(i as u64);
            GridResult {
                id: id.clone(),
                result: run_episode(&cfg),
            }
        })
        .collect()
}

/// Grid over `configs` returning only the statistics.
pub fn run_grid_stats(configs: &[(String, ExperimentConfig)]) -> Vec<(String, Result<RunStats>)> {
    run_grid(configs)
        .into_iter()
        .map(|g| (g.id, g.result.map(|e| e.stats)))
        .collect()
}
