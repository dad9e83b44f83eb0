//! Correlated camera-disruption and server-latency trace generation.
//!
//! Camera traces are produced by thresholding a per-camera disruption
//! propensity series. The series sits at a low baseline, is raised to
//! `bump_prob` for every member of a correlation group while a bump event
//! targets that group, and is raised for single frames by background glitches
//! (also drawn per group, so correlated cameras fail together). A camera is
//! disrupted (bit 0) wherever its propensity exceeds `disruption_threshold`.
//!
//! Server traces are a baseline latency with uniform jitter plus additive
//! spike events, each event touching exactly one server.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

pub const CAMERA_FILE: &str = "cameras.csv";
pub const SERVER_FILE: &str = "servers.csv";
pub const EVENT_FILE: &str = "events.json";

/// Random placement attempts per event before falling back to a scan.
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisruptionParams {
    pub n_frames: usize,
    pub n_cameras: usize,
    pub n_servers: usize,
    /// Sets of 1-based camera ids that fail together.
    pub correlation_groups: Vec<Vec<usize>>,
    pub n_bump_events: usize,
    pub mean_bump_len: f64,
    pub disruption_threshold: f64,
    /// Per-frame, per-group chance of a one-frame background glitch.
    pub baseline_disruption_prob: f64,
    /// Propensity level inside a bump or glitch.
    pub bump_prob: f64,
    pub server_baseline_ms: f64,
    pub server_jitter_ms: f64,
    pub n_spike_events: usize,
    pub spike_range_ms: [f64; 2],
    pub mean_spike_len: f64,
    pub seed: u64,
}

impl Default for DisruptionParams {
    fn default() -> Self {
        Self {
            n_frames: 4000,
            n_cameras: 5,
            n_servers: 4,
            correlation_groups: vec![vec![1, 2], vec![3, 5], vec![4]],
            n_bump_events: 10,
            mean_bump_len: 50.0,
            disruption_threshold: 0.6,
            baseline_disruption_prob: 0.01,
            bump_prob: 0.9,
            server_baseline_ms: 150.0,
            server_jitter_ms: 10.0,
            n_spike_events: 10,
            spike_range_ms: [400.0, 1200.0],
            mean_spike_len: 50.0,
            seed: 0,
        }
    }
}

impl DisruptionParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::config("n_frames", "must be > 0"));
        }
        if self.n_cameras == 0 || self.n_cameras > crate::environment::MAX_CAMERAS {
            return Err(Error::config(
                "n_cameras",
                format!("must be in 1..={}", crate::environment::MAX_CAMERAS),
            ));
        }
        if self.n_servers == 0 {
            return Err(Error::config("n_servers", "must be > 0"));
        }
        let mut seen = vec![false; self.n_cameras + 1];
        for group in &self.correlation_groups {
            if group.is_empty() {
                return Err(Error::config("correlation_groups", "empty group"));
            }
            for &cam in group {
                if cam == 0 || cam > self.n_cameras {
                    return Err(Error::config(
                        "correlation_groups",
                        format!("camera id {cam} outside 1..={}", self.n_cameras),
                    ));
                }
                if seen[cam] {
                    return Err(Error::config(
                        "correlation_groups",
                        format!("camera id {cam} appears in more than one group"),
                    ));
                }
                seen[cam] = true;
            }
        }
        if self.n_bump_events > 0 && self.correlation_groups.is_empty() {
            return Err(Error::config(
                "correlation_groups",
                "bump events need at least one group",
            ));
        }
        if !(self.disruption_threshold > 0.0 && self.disruption_threshold < 1.0) {
            return Err(Error::config("disruption_threshold", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.baseline_disruption_prob) {
            return Err(Error::config("baseline_disruption_prob", "must lie in [0, 1]"));
        }
        if !(self.bump_prob > self.disruption_threshold && self.bump_prob <= 1.0) {
            return Err(Error::config(
                "bump_prob",
                "must exceed disruption_threshold and be <= 1",
            ));
        }
        if !(self.mean_bump_len >= 1.0) {
            return Err(Error::config("mean_bump_len", "must be >= 1"));
        }
        if !(self.mean_spike_len >= 1.0) {
            return Err(Error::config("mean_spike_len", "must be >= 1"));
        }
        if !(self.server_baseline_ms >= 0.0) {
            return Err(Error::config("server_baseline_ms", "must be >= 0"));
        }
        if !(self.server_jitter_ms >= 0.0 && self.server_jitter_ms <= self.server_baseline_ms) {
            return Err(Error::config(
                "server_jitter_ms",
                "must lie in [0, server_baseline_ms]",
            ));
        }
        let [lo, hi] = self.spike_range_ms;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::config(
                "spike_range_ms",
                "lower bound must be >= 0 and below the upper bound",
            ));
        }
        Ok(())
    }
}

/// One injected camera bump. `cameras` are 1-based ids; `[start, start+len)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpEvent {
    pub group: usize,
    pub cameras: Vec<usize>,
    pub start: usize,
    pub len: usize,
}

/// One injected server spike. `server` is 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub server: usize,
    pub start: usize,
    pub len: usize,
    pub magnitude_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraTrace {
    n_frames: usize,
    n_cameras: usize,
    /// Row-major `[frame][camera]`, 1 = available.
    availability: Vec<u8>,
    /// Events that produced this trace; empty for loaded traces.
    pub events: Vec<BumpEvent>,
}

impl CameraTrace {
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let n_cameras = rows.first().map_or(0, Vec::len);
        let mut availability = Vec::with_capacity(rows.len() * n_cameras);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cameras {
                return Err(Error::Schema(format!(
                    "camera row {i} has {} columns, expected {n_cameras}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|&&b| b > 1) {
                return Err(Error::Schema(format!(
                    "camera row {i} holds non-binary value {bad}"
                )));
            }
            availability.extend_from_slice(row);
        }
        Ok(Self {
            n_frames: rows.len(),
            n_cameras,
            availability,
            events: Vec::new(),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_cameras(&self) -> usize {
        self.n_cameras
    }

    pub fn is_available(&self, frame: usize, camera: usize) -> bool {
        self.availability[frame * self.n_cameras + camera] == 1
    }

    pub fn row(&self, frame: usize) -> &[u8] {
        &self.availability[frame * self.n_cameras..(frame + 1) * self.n_cameras]
    }

    /// Availability of a frame as a bitmask (bit i = camera i).
    pub fn row_mask(&self, frame: usize) -> u32 {
        self.row(frame)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    pub fn matrix(&self) -> &[u8] {
        &self.availability
    }

    /// Fraction of disrupted frames for one camera.
    pub fn disrupted_fraction(&self, camera: usize) -> f64 {
        let down = (0..self.n_frames)
            .filter(|&f| !self.is_available(f, camera))
            .count();
        down as f64 / self.n_frames as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerLatencyTrace {
    n_frames: usize,
    n_servers: usize,
    latency_ms: Vec<f64>,
    pub events: Vec<SpikeEvent>,
}

impl ServerLatencyTrace {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_servers = rows.first().map_or(0, Vec::len);
        let mut latency_ms = Vec::with_capacity(rows.len() * n_servers);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_servers {
                return Err(Error::Schema(format!(
                    "server row {i} has {} columns, expected {n_servers}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::Schema(format!(
                    "server row {i} holds invalid latency {bad}"
                )));
            }
            latency_ms.extend_from_slice(row);
        }
        Ok(Self {
            n_frames: rows.len(),
            n_servers,
            latency_ms,
            events: Vec::new(),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn latency_ms(&self, frame: usize, server: usize) -> f64 {
        self.latency_ms[frame * self.n_servers + server]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.latency_ms[frame * self.n_servers..(frame + 1) * self.n_servers]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.latency_ms
    }
}

/// Draws a duration with the given mean (geometric on 1, 2, ...), capped.
fn draw_len(rng: &mut SimRng, mean: f64, cap: usize) -> usize {
    let p = (1.0 / mean).clamp(f64::MIN_POSITIVE, 1.0);
    let extra = Geometric::new(p).expect("p in (0, 1]").sample(rng);
    (1 + extra as usize).min(cap.max(1))
}

/// Picks a start for `[start, start+len)` that does not overlap `taken`.
fn place(rng: &mut SimRng, n_frames: usize, len: usize, taken: &[(usize, usize)]) -> Option<usize> {
    let free = |start: usize| {
        taken
            .iter()
            .all(|&(s, l)| start + len <= s || s + l <= start)
    };
    let last = n_frames - len;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let start = rng.random_range(0..=last);
        if free(start) {
            return Some(start);
        }
    }
    (0..=last).find(|&s| free(s))
}

pub fn generate_camera_trace(params: &DisruptionParams) -> Result<CameraTrace> {
    params.validate()?;
    let n_frames = params.n_frames;
    let n_cameras = params.n_cameras;
    let mut rng = rng::seeded(params.seed, rng::stream::CAMERA_TRACE);

    let cap = n_frames / params.n_bump_events.max(1);
    let mut taken: Vec<Vec<(usize, usize)>> = vec![Vec::new(); params.correlation_groups.len()];
    let mut events = Vec::with_capacity(params.n_bump_events);
    for _ in 0..params.n_bump_events {
        let group = rng.random_range(0..params.correlation_groups.len());
        let len = draw_len(&mut rng, params.mean_bump_len, cap);
        let start = place(&mut rng, n_frames, len, &taken[group]).ok_or_else(|| {
            Error::config(
                "n_bump_events",
                format!("cannot place {} non-overlapping bumps in {n_frames} frames", params.n_bump_events),
            )
        })?;
        taken[group].push((start, len));
        events.push(BumpEvent {
            group,
            cameras: params.correlation_groups[group].clone(),
            start,
            len,
        });
    }

    // Cameras outside every group glitch on their own.
    let mut glitch_units = params.correlation_groups.clone();
    for cam in 1..=n_cameras {
        if !params.correlation_groups.iter().any(|g| g.contains(&cam)) {
            glitch_units.push(vec![cam]);
        }
    }

    let mut propensity = vec![params.baseline_disruption_prob; n_frames * n_cameras];
    for frame in 0..n_frames {
        for unit in &glitch_units {
            if rng.random::<f64>() < params.baseline_disruption_prob {
                for &cam in unit {
                    propensity[frame * n_cameras + cam - 1] = params.bump_prob;
                }
            }
        }
    }
    for ev in &events {
        for frame in ev.start..ev.start + ev.len {
            for &cam in &ev.cameras {
                propensity[frame * n_cameras + cam - 1] = params.bump_prob;
            }
        }
    }

    let availability = propensity
        .iter()
        .map(|&p| u8::from(p <= params.disruption_threshold))
        .collect();
    Ok(CameraTrace {
        n_frames,
        n_cameras,
        availability,
        events,
    })
}

pub fn generate_server_trace(params: &DisruptionParams) -> Result<ServerLatencyTrace> {
    params.validate()?;
    let n_frames = params.n_frames;
    let n_servers = params.n_servers;
    let mut rng = rng::seeded(params.seed, rng::stream::SERVER_TRACE);

    let cap = n_frames / params.n_spike_events.max(1);
    let mut taken: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_servers];
    let mut events = Vec::with_capacity(params.n_spike_events);
    let [lo, hi] = params.spike_range_ms;
    for _ in 0..params.n_spike_events {
        let server = rng.random_range(0..n_servers);
        let magnitude_ms = rng.random_range(lo..=hi);
        let len = draw_len(&mut rng, params.mean_spike_len, cap);
        let start = place(&mut rng, n_frames, len, &taken[server]).ok_or_else(|| {
            Error::config(
                "n_spike_events",
                format!("cannot place {} non-overlapping spikes in {n_frames} frames", params.n_spike_events),
            )
        })?;
        taken[server].push((start, len));
        events.push(SpikeEvent {
            server,
            start,
            len,
            magnitude_ms,
        });
    }

    let jitter = params.server_jitter_ms;
    let mut latency_ms: Vec<f64> = (0..n_frames * n_servers)
        .map(|_| {
            let j = if jitter > 0.0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            params.server_baseline_ms + j
        })
        .collect();
    for ev in &events {
        for frame in ev.start..ev.start + ev.len {
            latency_ms[frame * n_servers + ev.server] += ev.magnitude_ms;
        }
    }

    Ok(ServerLatencyTrace {
        n_frames,
        n_servers,
        latency_ms,
        events,
    })
}

/// A matched pair of camera and server traces over one timeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Traces {
    pub cameras: CameraTrace,
    pub servers: ServerLatencyTrace,
}

/// Serialized form of the event log written next to generated traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub seed: u64,
    pub bumps: Vec<BumpEvent>,
    pub spikes: Vec<SpikeEvent>,
}

impl Traces {
    pub fn generate(params: &DisruptionParams) -> Result<Self> {
        Ok(Self {
            cameras: generate_camera_trace(params)?,
            servers: generate_server_trace(params)?,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.cameras.n_frames()
    }

    pub fn event_log(&self, seed: u64) -> EventLog {
        EventLog {
            seed,
            bumps: self.cameras.events.clone(),
            spikes: self.servers.events.clone(),
        }
    }

    /// Writes `cameras.csv` and `servers.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(CAMERA_FILE), &camera_csv(&self.cameras))?;
        write_file(&dir.join(SERVER_FILE), &server_csv(&self.servers))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::load_files(&dir.join(CAMERA_FILE), &dir.join(SERVER_FILE))
    }

    pub fn load_files(cameras: &Path, servers: &Path) -> Result<Self> {
        let cameras = load_camera_trace(cameras)?;
        let servers = load_server_trace(servers)?;
        if cameras.n_frames() != servers.n_frames() {
            return Err(Error::Schema(format!(
                "camera trace has {} frames but server trace has {}",
                cameras.n_frames(),
                servers.n_frames()
            )));
        }
        Ok(Self { cameras, servers })
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn camera_csv(trace: &CameraTrace) -> String {
    let mut out = String::from("frame");
    for c in 1..=trace.n_cameras() {
        out.push_str(&format!(",cam_{c}"));
    }
    out.push('\n');
    for f in 0..trace.n_frames() {
        out.push_str(&f.to_string());
        for &b in trace.row(f) {
            out.push(',');
            out.push(if b == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn server_csv(trace: &ServerLatencyTrace) -> String {
    let mut out = String::from("frame");
    for s in 1..=trace.n_servers() {
        out.push_str(&format!(",srv_{s}_ms"));
    }
    out.push('\n');
    for f in 0..trace.n_frames() {
        out.push_str(&f.to_string());
        for v in trace.row(f) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Reads a headered CSV whose first column is a 0-based frame index and whose
/// remaining column names follow `name(i)` for i = 1.. .
fn read_indexed_csv<T>(
    path: &Path,
    name: impl Fn(usize) -> String,
    cell: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<Vec<Vec<T>>> {
    let pb = PathBuf::from(path);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(&pb, e))?;
    let headers = reader.headers().map_err(|e| csv_error(&pb, e))?.clone();
    if headers.get(0) != Some("frame") {
        return Err(Error::parse(&pb, 1, "first column must be `frame`"));
    }
    for (i, h) in headers.iter().enumerate().skip(1) {
        if h != name(i) {
            return Err(Error::parse(&pb, 1, format!("column {i} is `{h}`, expected `{}`", name(i))));
        }
    }
    let width = headers.len() - 1;
    if width == 0 {
        return Err(Error::Schema(format!("{} has no data columns", pb.display())));
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(&pb, e))?;
        let line = record.position().map_or(idx + 2, |p| p.line() as usize);
        let frame: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&pb, line, format!("bad frame index `{}`", &record[0])))?;
        if frame != idx {
            return Err(Error::Schema(format!(
                "{}:{line}: frame index {frame} but this is row {idx}",
                pb.display()
            )));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|c| cell(c.trim()).map_err(|m| Error::parse(&pb, line, m)))
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Schema(format!("{} has no frames", pb.display())));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::TraceIo {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        },
        csv::ErrorKind::UnequalLengths { .. } => {
            Error::Schema(format!("{}:{line}: {e}", path.display()))
        }
        _ => Error::parse(path, line, e.to_string()),
    }
}

pub fn load_camera_trace(path: &Path) -> Result<CameraTrace> {
    let rows = read_indexed_csv(path, |i| format!("cam_{i}"), |c| match c {
        "0" => Ok(0u8),
        "1" => Ok(1u8),
        other => Err(format!("availability cell `{other}` is not 0 or 1")),
    })?;
    CameraTrace::from_rows(rows)
}

pub fn load_server_trace(path: &Path) -> Result<ServerLatencyTrace> {
    let rows = read_indexed_csv(path, |i| format!("srv_{i}_ms"), |c| {
        let v: f64 = c.parse().map_err(|_| format!("latency cell `{c}` is not a number"))?;
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("latency cell `{c}` must be a nonnegative finite number"))
        }
    })?;
    ServerLatencyTrace::from_rows(rows)
}
