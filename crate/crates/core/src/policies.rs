//! Decision makers: tabular Q-learning (fixed and adaptive) for camera and
//! server selection, and the baseline policies they are compared against.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{CameraMask, FrameOutcome};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Valid camera subsets: every mask with `k_min..=k_max` cameras.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    pub n_cameras: usize,
    pub k_min: u32,
    pub k_max: u32,
    pub actions: Vec<CameraMask>,
}

impl ActionSpace {
    pub fn enumerate(n_cameras: usize, k_min: u32, k_max: u32) -> Result<Self> {
        if n_cameras == 0 || n_cameras > crate::environment::MAX_CAMERAS {
            return Err(Error::config("n_cameras", "out of range"));
        }
        if k_min < 1 {
            return Err(Error::config("k_min", "must be >= 1"));
        }
        if k_min > k_max {
            return Err(Error::config("k_min", "must not exceed k_max"));
        }
        if k_max as usize > n_cameras {
            return Err(Error::config("k_max", "must not exceed n_cameras"));
        }
        Ok(Self {
            n_cameras,
            k_min,
            k_max,
            actions: CameraMask::all_with_count(n_cameras, k_min, k_max),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn index_of(&self, mask: &CameraMask) -> Option<usize> {
        self.actions.binary_search(mask).ok()
    }
}

/// Zero-initialized action-value table keyed by state string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_actions: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        Self {
            n_actions,
            rows: BTreeMap::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: &str, action: usize) -> f64 {
        self.rows.get(state).map_or(0.0, |r| r[action])
    }

    /// The row for `state`; all zeros if never written.
    pub fn row(&self, state: &str) -> Vec<f64> {
        self.rows
            .get(state)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    pub fn max(&self, state: &str) -> f64 {
        self.rows
            .get(state)
            .map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn set(&mut self, state: &str, action: usize, value: f64) {
        let n = self.n_actions;
        self.rows
            .entry(state.to_string())
            .or_insert_with(|| vec![0.0; n])[action] = value;
    }

    pub fn states(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Snapshot as `{state: [values...]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("finite table serializes")
    }

    pub fn from_json(json: &str, n_actions: usize) -> Result<Self> {
        let rows: BTreeMap<String, Vec<f64>> = serde_json::from_str(json)?;
        if let Some((k, r)) = rows.iter().find(|(_, r)| r.len() != n_actions) {
            return Err(Error::Schema(format!(
                "q-table row `{k}` has {} values, expected {n_actions}",
                r.len()
            )));
        }
        Ok(Self { n_actions, rows })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Random index with probability `epsilon`, else the first maximizer.
pub fn epsilon_greedy(q_values: &[f64], epsilon: f64, rng: &mut SimRng) -> usize {
    assert!(!q_values.is_empty(), "epsilon_greedy over an empty row");
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Temporal-difference update of `Q(state, action)`.
pub fn q_update(
    table: &mut QTable,
    state: &str,
    action: usize,
    reward: f64,
    next_state: &str,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    if !reward.is_finite() {
        return Err(Error::Contract(format!("non-finite reward {reward}")));
    }
    if action >= table.n_actions() {
        return Err(Error::Bounds {
            what: "actions",
            index: action,
            len: table.n_actions(),
        });
    }
    let current = table.get(state, action);
    let target = reward + gamma * table.max(next_state);
    table.set(state, action, current + alpha * (target - current));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub adaptive: bool,
    pub eta_inc: f64,
    pub eta_dec: f64,
    pub lambda_inc: f64,
    pub lambda_dec: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub degradation_window: usize,
    pub degradation_drop: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self::fixed()
    }
}

impl AgentParams {
    /// Fixed-rate agent (both roles): alpha 0.9, gamma 0.1, epsilon 0.1.
    pub fn fixed() -> Self {
        Self {
            alpha: 0.9,
            gamma: 0.1,
            epsilon: 0.1,
            adaptive: false,
            eta_inc: 1.5,
            eta_dec: 0.995,
            lambda_inc: 1.5,
            lambda_dec: 0.995,
            eps_min: 0.05,
            eps_max: 1.0,
            alpha_min: 0.05,
            alpha_max: 0.9,
            degradation_window: 20,
            degradation_drop: 0.1,
        }
    }

    pub fn adaptive_camera() -> Self {
        Self {
            alpha: 0.5,
            epsilon: 1.0,
            adaptive: true,
            ..Self::fixed()
        }
    }

    pub fn adaptive_server() -> Self {
        Self {
            alpha: 0.3,
            gamma: 0.95,
            epsilon: 0.2,
            adaptive: true,
            ..Self::fixed()
        }
    }

    pub fn validate(&self, role: &str) -> Result<()> {
        let field = |f: &str| format!("{role}.{f}");
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(field("alpha"), "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(field("gamma"), "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(field("epsilon"), "must lie in [0, 1]"));
        }
        if self.adaptive {
            if !(self.eta_inc > 1.0) {
                return Err(Error::config(field("eta_inc"), "must be > 1"));
            }
            if !(self.lambda_inc > 1.0) {
                return Err(Error::config(field("lambda_inc"), "must be > 1"));
            }
            if !(self.eta_dec > 0.0 && self.eta_dec < 1.0) {
                return Err(Error::config(field("eta_dec"), "must lie in (0, 1)"));
            }
            if !(self.lambda_dec > 0.0 && self.lambda_dec < 1.0) {
                return Err(Error::config(field("lambda_dec"), "must lie in (0, 1)"));
            }
            if !(0.0 <= self.eps_min && self.eps_min <= self.eps_max && self.eps_max <= 1.0) {
                return Err(Error::config(field("eps_min"), "need 0 <= eps_min <= eps_max <= 1"));
            }
            if !(0.0 < self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
                return Err(Error::config(
                    field("alpha_min"),
                    "need 0 < alpha_min <= alpha_max <= 1",
                ));
            }
            if self.degradation_window == 0 {
                return Err(Error::config(field("degradation_window"), "must be > 0"));
            }
        }
        Ok(())
    }
}

/// True when the mean of the last `window` rewards sits more than `drop`
/// below the mean of the `window` before it.
pub fn degradation_detected(history: &[f64], window: usize, drop: f64) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let n = history.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let recent = mean(&history[n - window..]);
    let before = mean(&history[n - 2 * window..n - window]);
    before - recent > drop
}

/// One adaptation step. Returns the new `(alpha, epsilon)` and whether the
/// increase branch fired.
pub fn adapt_params(alpha: f64, epsilon: f64, params: &AgentParams, history: &[f64]) -> (f64, f64, bool) {
    if degradation_detected(history, params.degradation_window, params.degradation_drop) {
        (
            (alpha * params.lambda_inc).min(params.alpha_max),
            (epsilon * params.eta_inc).min(params.eps_max),
            true,
        )
    } else {
        (
            (alpha * params.lambda_dec).max(params.alpha_min),
            (epsilon * params.eta_dec).max(params.eps_min),
            false,
        )
    }
}

/// Tabular Q-learner shared by both roles.
#[derive(Clone, Debug)]
pub struct QLearner {
    pub table: QTable,
    pub params: AgentParams,
    alpha: f64,
    epsilon: f64,
    history: VecDeque<f64>,
}

impl QLearner {
    pub fn new(n_actions: usize, params: AgentParams) -> Self {
        Self {
            table: QTable::new(n_actions),
            alpha: params.alpha,
            epsilon: params.epsilon,
            params,
            history: VecDeque::new(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn select(&self, state: &str, rng: &mut SimRng) -> usize {
        epsilon_greedy(&self.table.row(state), self.epsilon, rng)
    }

    pub fn learn(&mut self, state: &str, action: usize, reward: f64, next_state: &str) -> Result<()> {
        q_update(
            &mut self.table,
            state,
            action,
            reward,
            next_state,
            self.alpha,
            self.params.gamma,
        )?;
        if self.params.adaptive {
            self.history.push_back(reward);
            let keep = 2 * self.params.degradation_window;
            while self.history.len() > keep {
                self.history.pop_front();
            }
            let (alpha, epsilon, fired) =
                adapt_params(self.alpha, self.epsilon, &self.params, self.history.make_contiguous());
            self.alpha = alpha;
            self.epsilon = epsilon;
            if fired {
                // One degradation episode triggers one boost.
                self.history.clear();
            }
        }
        Ok(())
    }
}

pub const CAMERA_STATE: &str = "stateless";

/// Camera agent over a single abstract state, so the bootstrap term is
/// `gamma * max_a Q(a)`.
#[derive(Clone, Debug)]
pub struct CameraAgent {
    pub space: ActionSpace,
    pub learner: QLearner,
    has_selected: bool,
}

impl CameraAgent {
    pub fn new(space: ActionSpace, params: AgentParams) -> Self {
        Self {
            learner: QLearner::new(space.len(), params),
            space,
            has_selected: false,
        }
    }

    pub fn select(&mut self, rng: &mut SimRng) -> usize {
        self.has_selected = true;
        self.learner.select(CAMERA_STATE, rng)
    }

    pub fn select_mask(&mut self, rng: &mut SimRng) -> CameraMask {
        let i = self.select(rng);
        self.space.actions[i]
    }

    pub fn learn(&mut self, action: usize, reward: f64) -> Result<()> {
        if !self.has_selected {
            return Err(Error::Contract("camera agent learned before selecting".into()));
        }
        self.learner.learn(CAMERA_STATE, action, reward, CAMERA_STATE)
    }
}

/// Server agent state: cameras selected now and the previous server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServerState {
    pub n_selected: u32,
    pub prev_server: usize,
}

impl ServerState {
    pub fn key(&self) -> String {
        format!("n{}_prev{}", self.n_selected, self.prev_server)
    }
}

#[derive(Clone, Debug)]
pub struct ServerAgent {
    pub n_servers: usize,
    pub learner: QLearner,
    has_selected: bool,
}

impl ServerAgent {
    pub fn new(n_servers: usize, params: AgentParams) -> Self {
        Self {
            n_servers,
            learner: QLearner::new(n_servers, params),
            has_selected: false,
        }
    }

    pub fn select(&mut self, state: &ServerState, rng: &mut SimRng) -> usize {
        self.has_selected = true;
        self.learner.select(&state.key(), rng)
    }

    pub fn learn(&mut self, state: &ServerState, action: usize, reward: f64, next: &ServerState) -> Result<()> {
        if !self.has_selected {
            return Err(Error::Contract("server agent learned before selecting".into()));
        }
        self.learner.learn(&state.key(), action, reward, &next.key())
    }
}

/// Uniform over the valid subsets.
pub fn baseline_random(space: &ActionSpace, rng: &mut SimRng) -> usize {
    rng.random_range(0..space.len())
}

/// Greedy-3: the 3-camera subset with the best running-mean observed quality.
/// Cold start visits each 3-camera subset once in canonical order.
#[derive(Clone, Debug)]
pub struct Greedy3 {
    /// Action indices of the 3-camera masks.
    candidates: Vec<usize>,
    visited: Vec<bool>,
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl Greedy3 {
    pub fn new(space: &ActionSpace) -> Result<Self> {
        let candidates: Vec<usize> = space
            .actions
            .iter()
            .enumerate()
            .filter(|(_, m)| m.count() == 3)
            .map(|(i, _)| i)
            .collect();
        if candidates.is_empty() {
            return Err(Error::config(
                "camera_policy",
                "greedy3 needs 3-camera subsets in the action space",
            ));
        }
        let n = candidates.len();
        Ok(Self {
            candidates,
            visited: vec![false; n],
            sum: vec![0.0; n],
            count: vec![0; n],
        })
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    pub fn select(&mut self) -> usize {
        let slot = match self.visited.iter().position(|v| !v) {
            Some(i) => i,
            None => greedy3_choice(&self.means()),
        };
        self.visited[slot] = true;
        self.candidates[slot]
    }

    pub fn learn(&mut self, action: usize, quality: f64) {
        if let Some(slot) = self.candidates.iter().position(|&c| c == action) {
            self.sum[slot] += quality;
            self.count[slot] += 1;
        }
    }
}

/// Best estimate among candidates, ties to the lowest index; unsampled
/// candidates are skipped unless nothing has been sampled.
pub fn greedy3_choice(estimates: &[Option<f64>]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in estimates.iter().enumerate() {
        if let Some(v) = *e {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Epsilon-greedy multi-armed bandit over subsets (running-mean rewards, no
/// bootstrap).
#[derive(Clone, Debug)]
pub struct Bandit {
    pub epsilon: f64,
    means: Vec<f64>,
    counts: Vec<u64>,
}

impl Bandit {
    pub fn new(n_arms: usize, epsilon: f64) -> Self {
        Self {
            epsilon,
            means: vec![0.0; n_arms],
            counts: vec![0; n_arms],
        }
    }

    pub fn with_means(means: Vec<f64>, epsilon: f64) -> Self {
        let n = means.len();
        Self {
            epsilon,
            means,
            counts: vec![1; n],
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn select(&self, rng: &mut SimRng) -> usize {
        epsilon_greedy(&self.means, self.epsilon, rng)
    }

    pub fn learn(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm] as f64;
    }
}

pub fn baseline_round_robin(frame: usize, n_servers: usize) -> usize {
    frame % n_servers
}

/// Latency-Greedy: lowest EWMA of observed transmission latency. Servers
/// never observed count as zero, so each is tried once first.
#[derive(Clone, Debug)]
pub struct LatencyGreedy {
    pub beta: f64,
    ewma: Vec<Option<f64>>,
}

impl LatencyGreedy {
    pub fn new(n_servers: usize, beta: f64) -> Self {
        Self {
            beta,
            ewma: vec![None; n_servers],
        }
    }

    pub fn estimates(&self) -> &[Option<f64>] {
        &self.ewma
    }

    pub fn set_estimate(&mut self, server: usize, value: f64) {
        self.ewma[server] = Some(value);
    }

    pub fn select(&self) -> usize {
        let mut best = 0;
        let est = |i: usize| self.ewma[i].unwrap_or(0.0);
        for i in 1..self.ewma.len() {
            if est(i) < est(best) {
                best = i;
            }
        }
        best
    }

    pub fn observe(&mut self, server: usize, latency: f64) {
        self.ewma[server] = Some(match self.ewma[server] {
            Some(e) => self.beta * latency + (1.0 - self.beta) * e,
            None => latency,
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CameraPolicyKind {
    #[serde(rename = "qlearning")]
    QLearning,
    #[serde(rename = "adaptive_q")]
    AdaptiveQ,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "greedy3")]
    Greedy3,
    #[serde(rename = "bandit")]
    Bandit,
}

impl CameraPolicyKind {
    /// Comparison order used in reports.
    pub const ALL: [CameraPolicyKind; 5] = [
        CameraPolicyKind::QLearning,
        CameraPolicyKind::Greedy3,
        CameraPolicyKind::Bandit,
        CameraPolicyKind::AdaptiveQ,
        CameraPolicyKind::Random,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            CameraPolicyKind::QLearning => "qlearning",
            CameraPolicyKind::AdaptiveQ => "adaptive_q",
            CameraPolicyKind::Random => "random",
            CameraPolicyKind::Greedy3 => "greedy3",
            CameraPolicyKind::Bandit => "bandit",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CameraPolicyKind::QLearning => "Q-learning",
            CameraPolicyKind::AdaptiveQ => "Adaptive Q-learning",
            CameraPolicyKind::Random => "Random",
            CameraPolicyKind::Greedy3 => "Greedy-3",
            CameraPolicyKind::Bandit => "Epsilon-Greedy Bandit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ServerPolicyKind {
    #[serde(rename = "qlearning")]
    QLearning,
    #[serde(rename = "adaptive_q")]
    AdaptiveQ,
    #[serde(rename = "round_robin")]
    RoundRobin,
    #[serde(rename = "latency_greedy")]
    LatencyGreedy,
}

impl ServerPolicyKind {
    pub const ALL: [ServerPolicyKind; 4] = [
        ServerPolicyKind::RoundRobin,
        ServerPolicyKind::LatencyGreedy,
        ServerPolicyKind::QLearning,
        ServerPolicyKind::AdaptiveQ,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ServerPolicyKind::QLearning => "qlearning",
            ServerPolicyKind::AdaptiveQ => "adaptive_q",
            ServerPolicyKind::RoundRobin => "round_robin",
            ServerPolicyKind::LatencyGreedy => "latency_greedy",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ServerPolicyKind::QLearning => "Q-Learning",
            ServerPolicyKind::AdaptiveQ => "Adaptive Q-Learning",
            ServerPolicyKind::RoundRobin => "Round-Robin",
            ServerPolicyKind::LatencyGreedy => "Latency-Greedy",
        }
    }
}

/// A camera policy instance.
#[derive(Clone, Debug)]
pub enum CameraPolicy {
    Agent(CameraAgent),
    Random(ActionSpace),
    Greedy3(ActionSpace, Greedy3),
    Bandit(ActionSpace, Bandit),
}

impl CameraPolicy {
    pub fn build(
        kind: CameraPolicyKind,
        space: ActionSpace,
        fixed: &AgentParams,
        adaptive: &AgentParams,
        bandit_epsilon: f64,
    ) -> Result<Self> {
        Ok(match kind {
            CameraPolicyKind::QLearning => CameraPolicy::Agent(CameraAgent::new(space, fixed.clone())),
            CameraPolicyKind::AdaptiveQ => CameraPolicy::Agent(CameraAgent::new(space, adaptive.clone())),
            CameraPolicyKind::Random => CameraPolicy::Random(space),
            CameraPolicyKind::Greedy3 => {
                let g = Greedy3::new(&space)?;
                CameraPolicy::Greedy3(space, g)
            }
            CameraPolicyKind::Bandit => {
                let b = Bandit::new(space.len(), bandit_epsilon);
                CameraPolicy::Bandit(space, b)
            }
        })
    }

    pub fn space(&self) -> &ActionSpace {
        match self {
            CameraPolicy::Agent(a) => &a.space,
            CameraPolicy::Random(s) | CameraPolicy::Greedy3(s, _) | CameraPolicy::Bandit(s, _) => s,
        }
    }

    /// Chosen action index into `space().actions`.
    pub fn select(&mut self, rng: &mut SimRng) -> usize {
        match self {
            CameraPolicy::Agent(a) => a.select(rng),
            CameraPolicy::Random(s) => baseline_random(s, rng),
            CameraPolicy::Greedy3(_, g) => g.select(),
            CameraPolicy::Bandit(_, b) => b.select(rng),
        }
    }

    pub fn learn(&mut self, action: usize, outcome: &FrameOutcome, reward: f64) -> Result<()> {
        match self {
            CameraPolicy::Agent(a) => a.learn(action, reward),
            CameraPolicy::Random(_) => Ok(()),
            CameraPolicy::Greedy3(_, g) => {
                g.learn(action, outcome.quality);
                Ok(())
            }
            CameraPolicy::Bandit(_, b) => {
                b.learn(action, reward);
                Ok(())
            }
        }
    }

    /// `(epsilon, alpha)` currently in effect.
    pub fn rates(&self) -> (Option<f64>, Option<f64>) {
        match self {
            CameraPolicy::Agent(a) => (Some(a.learner.epsilon()), Some(a.learner.alpha())),
            CameraPolicy::Bandit(_, b) => (Some(b.epsilon), None),
            _ => (None, None),
        }
    }

    pub fn q_table(&self) -> Option<&QTable> {
        match self {
            CameraPolicy::Agent(a) => Some(&a.learner.table),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum ServerPolicy {
    Agent(ServerAgent),
    RoundRobin(usize),
    LatencyGreedy(LatencyGreedy),
}

impl ServerPolicy {
    pub fn build(
        kind: ServerPolicyKind,
        n_servers: usize,
        fixed: &AgentParams,
        adaptive: &AgentParams,
        ewma_beta: f64,
    ) -> Self {
        match kind {
            ServerPolicyKind::QLearning => ServerPolicy::Agent(ServerAgent::new(n_servers, fixed.clone())),
            ServerPolicyKind::AdaptiveQ => ServerPolicy::Agent(ServerAgent::new(n_servers, adaptive.clone())),
            ServerPolicyKind::RoundRobin => ServerPolicy::RoundRobin(n_servers),
            ServerPolicyKind::LatencyGreedy => ServerPolicy::LatencyGreedy(LatencyGreedy::new(n_servers, ewma_beta)),
        }
    }

    pub fn select(&mut self, frame: usize, state: &ServerState, rng: &mut SimRng) -> usize {
        match self {
            ServerPolicy::Agent(a) => a.select(state, rng),
            ServerPolicy::RoundRobin(m) => baseline_round_robin(frame, *m),
            ServerPolicy::LatencyGreedy(g) => g.select(),
        }
    }

    pub fn learn(
        &mut self,
        state: &ServerState,
        action: usize,
        outcome: &FrameOutcome,
        reward: f64,
        next: &ServerState,
    ) -> Result<()> {
        match self {
            ServerPolicy::Agent(a) => a.learn(state, action, reward, next),
            ServerPolicy::RoundRobin(_) => Ok(()),
            ServerPolicy::LatencyGreedy(g) => {
                g.observe(action, outcome.tx_latency_s * 1000.0);
                Ok(())
            }
        }
    }

    /// Whether `learn` needs the next state (only bootstrapping agents do).
    pub fn needs_next_state(&self) -> bool {
        matches!(self, ServerPolicy::Agent(_))
    }

    pub fn rates(&self) -> (Option<f64>, Option<f64>) {
        match self {
            ServerPolicy::Agent(a) => (Some(a.learner.epsilon()), Some(a.learner.alpha())),
            _ => (None, None),
        }
    }

    pub fn q_table(&self) -> Option<&QTable> {
        match self {
            ServerPolicy::Agent(a) => Some(&a.learner.table),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn rng() -> SimRng {
        rng::seeded(42, 0)
    }

    #[test]
    fn action_space_sizes() {
        assert_eq!(ActionSpace::enumerate(5, 2, 5).unwrap().len(), 26);
        let one = ActionSpace::enumerate(5, 5, 5).unwrap();
        assert_eq!(one.actions, vec![CameraMask::full(5)]);
        assert_eq!(ActionSpace::enumerate(3, 1, 1).unwrap().len(), 3);
        assert!(ActionSpace::enumerate(5, 3, 2).is_err());
        assert!(ActionSpace::enumerate(5, 0, 2).is_err());
        assert!(ActionSpace::enumerate(5, 2, 6).is_err());
    }

    #[test]
    fn greedy_tie_break_and_cold_start() {
        let mut r = rng();
        assert_eq!(epsilon_greedy(&[0.1, 0.9, 0.9], 0.0, &mut r), 1);
        assert_eq!(epsilon_greedy(&[0.0; 26], 0.0, &mut r), 0);
    }

    #[test]
    fn q_update_hand_arithmetic() {
        let mut t = QTable::new(3);
        q_update(&mut t, "s", 1, 1.0, "s2", 0.9, 0.1).unwrap();
        assert!((t.get("s", 1) - 0.9).abs() < 1e-15);
        assert_eq!(t.get("s", 0), 0.0);
        assert_eq!(t.get("never", 2), 0.0);
    }

    #[test]
    fn zero_td_error_leaves_value() {
        let mut t = QTable::new(2);
        t.set("s", 0, 0.37);
        q_update(&mut t, "s", 0, 0.37, "s", 0.6, 0.0).unwrap();
        assert_eq!(t.get("s", 0), 0.37);
    }

    #[test]
    fn non_finite_reward_rejected() {
        let mut t = QTable::new(2);
        assert!(matches!(
            q_update(&mut t, "s", 0, f64::NAN, "s", 0.5, 0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn q_table_snapshot_round_trip() {
        let mut t = QTable::new(4);
        t.set("n3_prev1", 2, 0.25);
        t.set("n4_prev1", 0, -1.5);
        let back = QTable::from_json(&t.to_json(), 4).unwrap();
        assert_eq!(back, t);
        assert!(QTable::from_json(&t.to_json(), 3).is_err());
    }

    #[test]
    fn camera_agent_prefers_known_good_action() {
        let space = ActionSpace::enumerate(5, 2, 5).unwrap();
        let mut agent = CameraAgent::new(space, AgentParams { epsilon: 0.0, ..AgentParams::fixed() });
        agent.learner.table.set(CAMERA_STATE, 7, 0.5);
        let mut r = rng();
        for _ in 0..20 {
            assert_eq!(agent.select(&mut r), 7);
        }
    }

    #[test]
    fn learn_before_select_is_contract_violation() {
        let space = ActionSpace::enumerate(3, 2, 3).unwrap();
        let mut agent = CameraAgent::new(space, AgentParams::fixed());
        assert!(matches!(agent.learn(0, 1.0), Err(Error::Contract(_))));
        let mut s = ServerAgent::new(2, AgentParams::fixed());
        let st = ServerState { n_selected: 2, prev_server: 0 };
        assert!(matches!(s.learn(&st, 0, 1.0, &st), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_reward_reaches_fixed_point() {
        let space = ActionSpace::enumerate(5, 5, 5).unwrap();
        let mut agent = CameraAgent::new(space, AgentParams::fixed());
        let mut r = rng();
        for _ in 0..200 {
            let a = agent.select(&mut r);
            agent.learn(a, 1.0).unwrap();
        }
        let fixed_point = 1.0 / (1.0 - 0.1);
        assert!((agent.learner.table.get(CAMERA_STATE, 0) - fixed_point).abs() < 1e-3);
    }

    #[test]
    fn server_state_keys_are_distinct() {
        let a = ServerState { n_selected: 3, prev_server: 1 };
        let b = ServerState { n_selected: 4, prev_server: 1 };
        assert_ne!(a.key(), b.key());
        let mut agent = ServerAgent::new(4, AgentParams { epsilon: 0.0, ..AgentParams::fixed() });
        assert_eq!(agent.select(&a, &mut rng()), 0);
    }

    #[test]
    fn adapt_increase_and_clamp() {
        let p = AgentParams {
            eta_inc: 2.0,
            eps_max: 0.5,
            ..AgentParams::adaptive_server()
        };
        let mut hist = vec![1.0; 20];
        hist.extend(vec![0.0; 20]);
        let (_, eps, fired) = adapt_params(0.3, 0.2, &p, &hist);
        assert!(fired);
        assert!((eps - 0.4).abs() < 1e-15);
        let (_, eps, _) = adapt_params(0.3, 0.4, &p, &hist);
        assert_eq!(eps, 0.5);
    }

    #[test]
    fn adapt_decay_holds_at_floor() {
        let p = AgentParams::adaptive_server();
        let flat = vec![0.5; 40];
        let (alpha, eps, fired) = adapt_params(p.alpha_min, p.eps_min, &p, &flat);
        assert!(!fired);
        assert_eq!(eps, p.eps_min);
        assert_eq!(alpha, p.alpha_min);
        let mut eps = 0.9;
        for _ in 0..100 {
            let (_, next, _) = adapt_params(0.3, eps, &p, &flat);
            assert!(next <= eps);
            eps = next;
        }
    }

    #[test]
    fn greedy3_cold_start_then_exploit() {
        let space = ActionSpace::enumerate(5, 2, 5).unwrap();
        let mut g = Greedy3::new(&space).unwrap();
        let mut seen = Vec::new();
        for _ in 0..10 {
            let a = g.select();
            assert_eq!(space.actions[a].count(), 3);
            seen.push(a);
            g.learn(a, if seen.len() == 4 { 700.0 } else { 500.0 });
        }
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
        let best = g.select();
        assert_eq!(best, g.candidates[3]);
    }

    #[test]
    fn greedy3_choice_cases() {
        assert_eq!(greedy3_choice(&[None, Some(3.0), None]), 1);
        assert_eq!(greedy3_choice(&[Some(600.0), Some(700.0), Some(550.0)]), 1);
        assert_eq!(greedy3_choice(&[Some(1.0), Some(1.0)]), 0);
    }

    #[test]
    fn bandit_running_mean_and_greedy_arm() {
        let b = Bandit::with_means(vec![0.9, 0.1], 0.0);
        assert_eq!(b.select(&mut rng()), 0);
        let mut b = Bandit::new(1, 0.1);
        b.learn(0, 1.0);
        b.learn(0, 0.0);
        assert_eq!(b.means()[0], 0.5);
    }

    #[test]
    fn round_robin_cycles() {
        let seq: Vec<_> = (0..8).map(|f| baseline_round_robin(f, 4)).collect();
        assert_eq!(seq, vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn latency_greedy_ewma() {
        let mut g = LatencyGreedy::new(3, 0.5);
        assert_eq!(g.select(), 0);
        g.set_estimate(0, 200.0);
        g.observe(0, 400.0);
        assert_eq!(g.estimates()[0], Some(300.0));
        g.set_estimate(1, 100.0);
        g.set_estimate(2, 100.0);
        assert_eq!(g.select(), 1);
    }

    #[test]
    fn policy_ids_match_serde_names() {
        for k in CameraPolicyKind::ALL {
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.id()));
        }
        for k in ServerPolicyKind::ALL {
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.id()));
        }
    }
}
