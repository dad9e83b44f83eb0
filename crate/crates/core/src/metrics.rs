//! Score functions, the per-frame reliability predicate, and run statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::environment::{CameraMask, FrameOutcome};
use crate::error::{Error, Result};

/// Reliability thresholds. `phi_recon_s == phi_total_s` gives the
/// single-bound form (quality plus end-to-end latency only).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum matching points per view.
    pub theta: f64,
    pub phi_total_s: f64,
    pub phi_recon_s: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            theta: 400.0,
            phi_total_s: 3.0,
            phi_recon_s: 1.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::config("thresholds.theta", "must be > 0"));
        }
        if !(self.phi_total_s > 0.0) {
            return Err(Error::config("thresholds.phi_total_s", "must be > 0"));
        }
        if !(self.phi_recon_s > 0.0 && self.phi_recon_s <= self.phi_total_s) {
            return Err(Error::config(
                "thresholds.phi_recon_s",
                "must lie in (0, phi_total_s]",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { w1: 0.5, w2: 0.5 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w1) || !(0.0..=1.0).contains(&self.w2) {
            return Err(Error::config("weights", "w1 and w2 must lie in [0, 1]"));
        }
        if (self.w1 + self.w2 - 1.0).abs() > 1e-9 {
            return Err(Error::config("weights", "w1 + w2 must equal 1"));
        }
        Ok(())
    }
}

/// `min(1, q / theta)`.
pub fn quality_score(q: f64, theta: f64) -> f64 {
    assert!(theta > 0.0, "quality_score: theta must be > 0, got {theta}");
    (q.max(0.0) / theta).min(1.0)
}

/// `max(0, 1 - l / phi)`.
pub fn latency_score(l: f64, phi: f64) -> f64 {
    assert!(phi > 0.0, "latency_score: phi must be > 0, got {phi}");
    (1.0 - l / phi).clamp(0.0, 1.0)
}

/// Camera agent reward. The latency term sees reconstruction latency only;
/// transmission is deliberately excluded.
pub fn camera_reward(outcome: &FrameOutcome, thresholds: &Thresholds, weights: &RewardWeights) -> f64 {
    weights.w1 * quality_score(outcome.quality, thresholds.theta)
        + weights.w2 * latency_score(outcome.recon_latency_s, thresholds.phi_recon_s)
}

/// Server agent reward: latency score of the end-to-end latency.
pub fn server_reward(outcome: &FrameOutcome, thresholds: &Thresholds) -> f64 {
    latency_score(outcome.total_latency_s, thresholds.phi_total_s)
}

pub fn is_reliable(quality: f64, total_s: f64, recon_s: f64, thresholds: &Thresholds) -> bool {
    quality >= thresholds.theta && total_s <= thresholds.phi_total_s && recon_s <= thresholds.phi_recon_s
}

pub fn reliability(outcome: &FrameOutcome, thresholds: &Thresholds) -> bool {
    is_reliable(
        outcome.quality,
        outcome.total_latency_s,
        outcome.recon_latency_s,
        thresholds,
    )
}

/// Everything logged for one controller step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub mask: CameraMask,
    pub server: usize,
    pub outcome: FrameOutcome,
    pub reward_camera: f64,
    pub reward_server: f64,
    /// Exploration and learning rates in effect when the choice was made;
    /// `None` for policies without them.
    pub camera_epsilon: Option<f64>,
    pub camera_alpha: Option<f64>,
    pub server_epsilon: Option<f64>,
    pub server_alpha: Option<f64>,
}

pub const FRAME_LOG_HEADER: &str =
    "frame,mask,server,quality,tx_s,recon_s,total_s,reward_cam,reward_srv,reliable";

pub fn frame_log_row(r: &FrameRecord) -> String {
    let o = &r.outcome;
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.frame,
        r.mask,
        r.server,
        o.quality,
        o.tx_latency_s,
        o.recon_latency_s,
        o.total_latency_s,
        r.reward_camera,
        r.reward_server,
        u8::from(o.reliable)
    )
}

pub fn frame_log_csv(records: &[FrameRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96);
    out.push_str(FRAME_LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", frame_log_row(r));
    }
    out
}

/// Aggregate statistics over a run (or several merged runs).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub frames: u64,
    pub reliable_frames: u64,
    pub sum_quality: f64,
    pub sum_tx_s: f64,
    pub sum_recon_s: f64,
    pub sum_total_s: f64,
    /// Keyed by mask bitstring.
    pub camera_subset_histogram: BTreeMap<String, u64>,
    pub server_histogram: BTreeMap<usize, u64>,
    /// `(camera reward, server reward)` per frame.
    pub reward_series: Vec<(f64, f64)>,
}

impl RunStats {
    pub fn accumulate(&mut self, record: &FrameRecord) {
        let o = &record.outcome;
        self.frames += 1;
        self.reliable_frames += u64::from(o.reliable);
        self.sum_quality += o.quality;
        self.sum_tx_s += o.tx_latency_s;
        self.sum_recon_s += o.recon_latency_s;
        self.sum_total_s += o.total_latency_s;
        *self
            .camera_subset_histogram
            .entry(record.mask.to_string())
            .or_default() += 1;
        *self.server_histogram.entry(record.server).or_default() += 1;
        self.reward_series
            .push((record.reward_camera, record.reward_server));
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a FrameRecord>) -> Self {
        let mut stats = Self::default();
        for r in records {
            stats.accumulate(r);
        }
        stats
    }

    /// Combines statistics of two disjoint record streams.
    pub fn merge(mut self, other: &RunStats) -> Self {
        self.frames += other.frames;
        self.reliable_frames += other.reliable_frames;
        self.sum_quality += other.sum_quality;
        self.sum_tx_s += other.sum_tx_s;
        self.sum_recon_s += other.sum_recon_s;
        self.sum_total_s += other.sum_total_s;
        for (k, v) in &other.camera_subset_histogram {
            *self.camera_subset_histogram.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.server_histogram {
            *self.server_histogram.entry(*k).or_default() += v;
        }
        self.reward_series.extend_from_slice(&other.reward_series);
        self
    }

    fn mean(&self, sum: f64) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            sum / self.frames as f64
        }
    }

    pub fn reliability_pct(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            100.0 * self.reliable_frames as f64 / self.frames as f64
        }
    }

    pub fn avg_quality(&self) -> f64 {
        self.mean(self.sum_quality)
    }

    pub fn avg_tx_s(&self) -> f64 {
        self.mean(self.sum_tx_s)
    }

    pub fn avg_recon_s(&self) -> f64 {
        self.mean(self.sum_recon_s)
    }

    pub fn avg_total_s(&self) -> f64 {
        self.mean(self.sum_total_s)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            frames: self.frames,
            reliable_frames: self.reliable_frames,
            reliability_pct: self.reliability_pct(),
            avg_pq: self.avg_quality(),
            avg_recon_s: self.avg_recon_s(),
            avg_total_s: self.avg_total_s(),
            camera_subset_histogram: self.camera_subset_histogram.clone(),
            server_histogram: self.server_histogram.clone(),
        }
    }
}

/// Serialized run summary; mirrors the columns of the comparison tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: u64,
    pub reliable_frames: u64,
    pub reliability_pct: f64,
    pub avg_pq: f64,
    pub avg_recon_s: f64,
    pub avg_total_s: f64,
    pub camera_subset_histogram: BTreeMap<String, u64>,
    pub server_histogram: BTreeMap<usize, u64>,
}
