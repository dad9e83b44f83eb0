//! Comparison tables and plot-ready data, plus the file layouts written by
//! the command-line tool.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{run_grid, Episode, ExperimentConfig};
use crate::disruption::{self, write_file, EVENT_FILE};
use crate::error::{Error, Result};
use crate::policies::{CameraPolicyKind, ServerPolicyKind};

pub const FRAMES_FILE: &str = "frames.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const QTABLE_CAMERA_FILE: &str = "qtable_camera.json";
pub const QTABLE_SERVER_FILE: &str = "qtable_server.json";
pub const TABLE_FILE: &str = "table.txt";
pub const REPORT_FILE: &str = "report.json";
pub const QUARTILES_FILE: &str = "latency_quartiles.csv";

/// Which policy family a comparison sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Camera,
    Server,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "camera" => Ok(Axis::Camera),
            "server" => Ok(Axis::Server),
            _ => Err(format!("unknown axis `{s}` (expected camera or server)")),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Camera => "camera",
            Axis::Server => "server",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub frames: u64,
    pub reliable_frames: u64,
    pub avg_pq: f64,
    pub avg_recon_s: f64,
    pub avg_total_s: f64,
    pub reliability_pct: f64,
}

/// Selection counts and their percentage shares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub policy: String,
    pub counts: BTreeMap<String, u64>,
    pub shares_pct: BTreeMap<String, f64>,
}

impl Distribution {
    pub fn from_counts(policy: &str, counts: BTreeMap<String, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let shares_pct = counts
            .iter()
            .map(|(k, &v)| {
                let share = if total == 0 { 0.0 } else { 100.0 * v as f64 / total as f64 };
                (k.clone(), share)
            })
            .collect();
        Self {
            policy: policy.to_string(),
            counts,
            shares_pct,
        }
    }

    pub fn csv(&self, key_header: &str) -> String {
        let mut out = format!("{key_header},count,share_pct\n");
        for (k, count) in &self.counts {
            let _ = writeln!(out, "{k},{count},{}", self.shares_pct[k]);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    /// Quartiles by linear interpolation between order statistics. `None`
    /// for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyQuartiles {
    pub policy: String,
    pub total_s: FiveNumber,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub axis: Axis,
    pub seed: u64,
    pub summary_table: Vec<SummaryRow>,
    pub subset_distribution: Vec<Distribution>,
    pub server_distribution: Vec<Distribution>,
    pub latency_quartiles: Vec<LatencyQuartiles>,
}

impl ReportBundle {
    /// Builds the report from `(policy label, episode)` pairs, keeping order.
    pub fn from_episodes(axis: Axis, seed: u64, runs: &[(String, &Episode)]) -> Self {
        let mut bundle = Self {
            axis,
            seed,
            summary_table: Vec::new(),
            subset_distribution: Vec::new(),
            server_distribution: Vec::new(),
            latency_quartiles: Vec::new(),
        };
        for (label, ep) in runs {
            let s = &ep.stats;
            bundle.summary_table.push(SummaryRow {
                policy: label.clone(),
                frames: s.frames,
                reliable_frames: s.reliable_frames,
                avg_pq: s.avg_quality(),
                avg_recon_s: s.avg_recon_s(),
                avg_total_s: s.avg_total_s(),
                reliability_pct: s.reliability_pct(),
            });
            bundle.subset_distribution.push(Distribution::from_counts(
                label,
                s.camera_subset_histogram.clone(),
            ));
            bundle.server_distribution.push(Distribution::from_counts(
                label,
                s.server_histogram
                    .iter()
                    .map(|(k, &v)| (k.to_string(), v))
                    .collect(),
            ));
            let totals: Vec<f64> = ep.records.iter().map(|r| r.outcome.total_latency_s).collect();
            if let Some(q) = FiveNumber::of(&totals) {
                bundle.latency_quartiles.push(LatencyQuartiles {
                    policy: label.clone(),
                    total_s: q,
                });
            }
        }
        bundle
    }

    /// Fixed-precision aligned table: quality 0 decimals, latency and
    /// reliability 2.
    pub fn render_table(&self) -> String {
        let header = ["Policy", "Avg PQ", "Avg Recon (s)", "Avg Total (s)", "Reliability (%)"];
        let rows: Vec<[String; 5]> = self
            .summary_table
            .iter()
            .map(|r| {
                [
                    r.policy.clone(),
                    format!("{:.0}", r.avg_pq),
                    format!("{:.2}", r.avg_recon_s),
                    format!("{:.2}", r.avg_total_s),
                    format!("{:.2}", r.reliability_pct),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for row in &rows {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: [&str; 5]| {
            let _ = write!(out, "{:<w$}", cells[0], w = width[0]);
            for (cell, w) in cells[1..].iter().zip(&width[1..]) {
                let _ = write!(out, "  {cell:>w$}");
            }
            out.push('\n');
        };
        line(&mut out, header);
        let rule: usize = width.iter().sum::<usize>() + 2 * (width.len() - 1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for row in &rows {
            line(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]]);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn quartiles_csv(&self) -> String {
        let mut out = String::from("policy,min,q1,median,q3,max\n");
        for q in &self.latency_quartiles {
            let t = &q.total_s;
            let _ = writeln!(out, "{},{},{},{},{},{}", q.policy, t.min, t.q1, t.median, t.q3, t.max);
        }
        out
    }
}

/// The comparison sweep for `axis`: the other role is pinned to its
/// reference baseline (Round-Robin servers, Greedy-3 cameras).
pub fn compare_grid(config: &ExperimentConfig, axis: Axis) -> Vec<(String, ExperimentConfig)> {
    match axis {
        Axis::Camera => config
            .compare
            .camera_policies
            .iter()
            .map(|&k| {
                let cfg = ExperimentConfig {
                    camera_policy: k,
                    server_policy: ServerPolicyKind::RoundRobin,
                    ..config.clone()
                };
                (k.id().to_string(), cfg)
            })
            .collect(),
        Axis::Server => config
            .compare
            .server_policies
            .iter()
            .map(|&k| {
                let cfg = ExperimentConfig {
                    camera_policy: CameraPolicyKind::Greedy3,
                    server_policy: k,
                    ..config.clone()
                };
                (k.id().to_string(), cfg)
            })
            .collect(),
    }
}

fn policy_label(axis: Axis, cfg: &ExperimentConfig) -> &'static str {
    match axis {
        Axis::Camera => cfg.camera_policy.label(),
        Axis::Server => cfg.server_policy.label(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generates traces for `config` and writes them with the event log.
pub fn write_traces(config: &ExperimentConfig, out: &Path) -> Result<disruption::Traces> {
    config.validate()?;
    let params = config.disruption_params();
    let traces = disruption::Traces::generate(&params)?;
    ensure_dir(out)?;
    traces.save(out)?;
    let log = serde_json::to_string_pretty(&traces.event_log(params.seed))?;
    write_file(&out.join(EVENT_FILE), &log)?;
    Ok(traces)
}

/// Writes the per-frame log, summary and Q-table snapshots of one episode.
/// Non-learning policies get an empty JSON object as their snapshot.
pub fn write_run(episode: &Episode, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    write_file(&out.join(FRAMES_FILE), &episode.frame_log_csv())?;
    let summary = serde_json::to_string_pretty(&episode.stats.summary())?;
    write_file(&out.join(SUMMARY_FILE), &summary)?;
    let snapshot = |q: &Option<crate::policies::QTable>| match q {
        Some(t) => t.to_json(),
        None => "{}".to_string(),
    };
    write_file(&out.join(QTABLE_CAMERA_FILE), &snapshot(&episode.camera_q))?;
    write_file(&out.join(QTABLE_SERVER_FILE), &snapshot(&episode.server_q))?;
    Ok(())
}

/// Runs the comparison grid for `axis` and writes `table.txt`,
/// `report.json`, the histogram CSVs and one run directory per policy.
pub fn compare(config: &ExperimentConfig, axis: Axis, out: &Path) -> Result<ReportBundle> {
    config.validate()?;
    let grid = compare_grid(config, axis);
    if grid.is_empty() {
        return Err(Error::config(
            match axis {
                Axis::Camera => "compare.camera_policies",
                Axis::Server => "compare.server_policies",
            },
            "no policies to compare",
        ));
    }
    let results = run_grid(&grid);
    let mut episodes = Vec::with_capacity(results.len());
    for (res, (_, cfg)) in results.into_iter().zip(&grid) {
        let ep = res.result?;
        episodes.push((res.id, policy_label(axis, cfg).to_string(), ep));
    }
    ensure_dir(out)?;
    for (id, _, ep) in &episodes {
        write_run(ep, &out.join(id))?;
    }
    let labelled: Vec<(String, &Episode)> =
        episodes.iter().map(|(_, label, ep)| (label.clone(), ep)).collect();
    let bundle = ReportBundle::from_episodes(axis, config.seed, &labelled);
    write_file(&out.join(TABLE_FILE), &bundle.render_table())?;
    write_file(&out.join(REPORT_FILE), &bundle.to_json())?;
    write_file(&out.join(QUARTILES_FILE), &bundle.quartiles_csv())?;
    for ((id, _, _), (subsets, servers)) in episodes
        .iter()
        .zip(bundle.subset_distribution.iter().zip(&bundle.server_distribution))
    {
        write_file(&out.join(format!("subsets_{id}.csv")), &subsets.csv("mask"))?;
        write_file(&out.join(format!("servers_{id}.csv")), &servers.csv("server"))?;
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_number_interpolates() {
        let q = FiveNumber::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let q = FiveNumber::of(&[1.0, 2.0]).unwrap();
        assert_eq!(q.median, 1.5);
        assert_eq!(q.q1, 1.25);
        assert!(FiveNumber::of(&[]).is_none());
    }

    #[test]
    fn shares_sum_to_hundred() {
        let counts: BTreeMap<String, u64> =
            [("a", 1u64), ("b", 2), ("c", 4)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let d = Distribution::from_counts("p", counts);
        let sum: f64 = d.shares_pct.values().sum();
        assert!((sum - 100.0).abs() < 1e-9);
        let csv = d.csv("key");
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("\nc,4,"));
    }

    #[test]
    fn grids_pin_the_other_role() {
        let cfg = ExperimentConfig::default();
        let cam = compare_grid(&cfg, Axis::Camera);
        assert_eq!(cam.len(), 5);
        assert!(cam.iter().all(|(_, c)| c.server_policy == ServerPolicyKind::RoundRobin));
        let srv = compare_grid(&cfg, Axis::Server);
        assert_eq!(srv.len(), 4);
        assert!(srv.iter().all(|(_, c)| c.camera_policy == CameraPolicyKind::Greedy3));
        assert_eq!(srv[0].0, "round_robin");
    }

    #[test]
    fn table_has_fixed_precision() {
        let cfg = ExperimentConfig {
            n_frames: 50,
            ..ExperimentConfig::camera_comparison()
        };
        let ep = crate::run_episode(&cfg).unwrap();
        let b = ReportBundle::from_episodes(Axis::Camera, 0, &[("Q-learning".into(), &ep)]);
        let table = b.render_table();
        let row = table.lines().nth(2).unwrap();
        let cells: Vec<&str> = row.split_whitespace().collect();
        assert!(!cells[1].contains('.'));
        assert_eq!(cells[2].split('.').nth(1).unwrap().len(), 2);
        assert_eq!(cells[4].split('.').nth(1).unwrap().len(), 2);
    }
}
