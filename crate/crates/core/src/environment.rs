//! One controller timestep: camera subset + server choice under the current
//! disruption state produce quality and latency.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::disruption::Traces;
use crate::error::{Error, Result};
use crate::metrics::{self, Thresholds};
use crate::rng;

pub const MAX_CAMERAS: usize = 16;

/// Fewest effective views that still yield a reconstruction.
pub const MIN_VIEWS: u32 = 2;

/// Binary camera selection vector. Bit `i` is camera `i` (0-based); the
/// string form lists camera 1 first, e.g. `11100` selects cameras 1..=3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CameraMask {
    bits: u32,
    n: u8,
}

impl CameraMask {
    pub fn new(bits: u32, n: usize) -> Self {
        assert!(n <= MAX_CAMERAS, "at most {MAX_CAMERAS} cameras");
        let keep = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        Self {
            bits: bits & keep,
            n: n as u8,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::new(0, n)
    }

    pub fn full(n: usize) -> Self {
        Self::new(u32::MAX, n)
    }

    pub fn from_indices(indices: &[usize], n: usize) -> Self {
        Self::new(indices.iter().fold(0, |m, &i| m | (1 << i)), n)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n_cameras(&self) -> usize {
        self.n as usize
    }

    pub fn count(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn contains(&self, camera: usize) -> bool {
        self.bits & (1 << camera) != 0
    }

    pub fn with(&self, camera: usize) -> Self {
        Self::new(self.bits | (1 << camera), self.n())
    }

    pub fn and(&self, other_bits: u32) -> Self {
        Self::new(self.bits & other_bits, self.n())
    }

    pub fn is_subset_of(&self, other: &CameraMask) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn cameras(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| self.contains(i))
    }

    fn n(&self) -> usize {
        self.n as usize
    }

    /// The bitstring read with camera 1 as the most significant digit.
    fn lex_key(&self) -> u32 {
        if self.n == 0 {
            0
        } else {
            self.bits.reverse_bits() >> (32 - self.n as u32)
        }
    }

    /// All masks over `n` cameras with popcount in `[lo, hi]`, in canonical
    /// (lexicographic bitstring) order.
    pub fn all_with_count(n: usize, lo: u32, hi: u32) -> Vec<CameraMask> {
        let mut out: Vec<_> = (0u32..(1 << n))
            .map(|b| CameraMask::new(b, n))
            .filter(|m| (lo..=hi).contains(&m.count()))
            .collect();
        out.sort();
        out
    }
}

impl Ord for CameraMask {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then(self.lex_key().cmp(&other.lex_key()))
    }
}

impl PartialOrd for CameraMask {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CameraMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n() {
            f.write_str(if self.contains(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for CameraMask {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.is_empty() || s.len() > MAX_CAMERAS {
            return Err(format!("mask `{s}` must have 1..={MAX_CAMERAS} digits"));
        }
        let mut bits = 0;
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << i,
                '0' => {}
                _ => return Err(format!("mask `{s}` must contain only 0 and 1")),
            }
        }
        Ok(CameraMask::new(bits, s.len()))
    }
}

impl Serialize for CameraMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CameraMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of the synthetic quality table: `base(mask) =
/// view_curve[|mask|] + sum of camera offsets`, with explicit per-mask
/// overrides on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    /// Mean matching points per view, indexed by number of views
    /// (`n_cameras + 1` entries).
    pub view_curve: Vec<f64>,
    /// One offset per camera; empty means all zero.
    pub camera_offsets: Vec<f64>,
    /// Bitstring → base value; replaces the formula for that mask.
    pub overrides: BTreeMap<String, f64>,
    pub noise_sd: f64,
    /// When set, quality is replayed from this CSV instead.
    pub trace: Option<PathBuf>,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            view_curve: vec![0.0, 0.0, 290.0, 490.0, 580.0, 650.0],
            camera_offsets: vec![20.0, 10.0, 0.0, -10.0, -20.0],
            overrides: BTreeMap::new(),
            noise_sd: 25.0,
            trace: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QualityModel {
    Synthetic {
        base: BTreeMap<CameraMask, f64>,
        noise_sd: f64,
        noise_seed: u64,
    },
    Trace(QualityTrace),
}

/// Measured quality per frame and mask.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityTrace {
    n_frames: usize,
    masks: Vec<CameraMask>,
    column: HashMap<CameraMask, usize>,
    values: Vec<f64>,
}

impl QualityTrace {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn masks(&self) -> &[CameraMask] {
        &self.masks
    }

    pub fn get(&self, frame: usize, mask: &CameraMask) -> Option<f64> {
        let col = *self.column.get(mask)?;
        self.values.get(frame * self.masks.len() + col).copied()
    }
}

impl QualityModel {
    /// Builds the synthetic table for every mask with at least two views.
    pub fn synthetic(cfg: &QualityConfig, n_cameras: usize, noise_seed: u64) -> Result<Self> {
        let offsets = if cfg.camera_offsets.is_empty() {
            vec![0.0; n_cameras]
        } else if cfg.camera_offsets.len() == n_cameras {
            cfg.camera_offsets.clone()
        } else {
            return Err(Error::config(
                "quality.camera_offsets",
                format!("expected {n_cameras} entries, got {}", cfg.camera_offsets.len()),
            ));
        };
        if cfg.view_curve.len() != n_cameras + 1 {
            return Err(Error::config(
                "quality.view_curve",
                format!("expected {} entries, got {}", n_cameras + 1, cfg.view_curve.len()),
            ));
        }
        if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
            return Err(Error::config("quality.noise_sd", "must be >= 0"));
        }
        let mut base = BTreeMap::new();
        for mask in CameraMask::all_with_count(n_cameras, MIN_VIEWS, n_cameras as u32) {
            let v = cfg.view_curve[mask.count() as usize]
                + mask.cameras().map(|c| offsets[c]).sum::<f64>();
            base.insert(mask, v);
        }
        for (key, &v) in &cfg.overrides {
            let mask: CameraMask = key
                .parse()
                .map_err(|e| Error::config("quality.overrides", e))?;
            if mask.n_cameras() != n_cameras || mask.count() < MIN_VIEWS {
                return Err(Error::config(
                    "quality.overrides",
                    format!("`{key}` is not a {n_cameras}-camera mask with >= {MIN_VIEWS} views"),
                ));
            }
            base.insert(mask, v);
        }
        check_monotone(&base, n_cameras)?;
        Ok(QualityModel::Synthetic {
            base,
            noise_sd: cfg.noise_sd,
            noise_seed,
        })
    }

    /// Loads a quality trace (`frame,<mask>,<mask>,...`) and checks it covers
    /// every mask with two to `k_max` views.
    pub fn load_trace(path: &Path, n_cameras: usize, k_max: u32) -> Result<Self> {
        let pb = path.to_path_buf();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::TraceIo {
                path: pb.clone(),
                source: std::io::Error::other(e.to_string()),
            })?;
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(&pb, 1, e.to_string()))?
            .clone();
        if headers.get(0) != Some("frame") {
            return Err(Error::parse(&pb, 1, "first column must be `frame`"));
        }
        let mut masks = Vec::new();
        for h in headers.iter().skip(1) {
            let m: CameraMask = h.parse().map_err(|e| Error::parse(&pb, 1, e))?;
            if m.n_cameras() != n_cameras {
                return Err(Error::parse(&pb, 1, format!("column `{h}` is not a {n_cameras}-camera mask")));
            }
            masks.push(m);
        }
        let missing: Vec<String> = CameraMask::all_with_count(n_cameras, MIN_VIEWS, k_max)
            .into_iter()
            .filter(|m| !masks.contains(m))
            .map(|m| m.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!(
                "{} lacks columns for masks: {}",
                pb.display(),
                missing.join(", ")
            )));
        }
        let mut values = Vec::new();
        let mut n_frames = 0;
        for (idx, rec) in reader.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::parse(&pb, line, e.to_string()))?;
            if rec.len() != masks.len() + 1 {
                return Err(Error::Schema(format!("{}:{line}: wrong column count", pb.display())));
            }
            let frame: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(&pb, line, "bad frame index"))?;
            if frame != idx {
                return Err(Error::Schema(format!(
                    "{}:{line}: frame index {frame} but this is row {idx}",
                    pb.display()
                )));
            }
            for cell in rec.iter().skip(1) {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(&pb, line, format!("quality `{cell}` is not a number")))?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::parse(&pb, line, format!("quality `{cell}` must be >= 0")));
                }
                values.push(v);
            }
            n_frames += 1;
        }
        let column = masks.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        Ok(QualityModel::Trace(QualityTrace {
            n_frames,
            masks,
            column,
            values,
        }))
    }

    /// Quality of a reconstruction from `effective` views at `frame`.
    pub fn quality(&self, frame: usize, effective: &CameraMask) -> Result<f64> {
        if effective.count() < MIN_VIEWS {
            return Ok(0.0);
        }
        match self {
            QualityModel::Synthetic {
                base,
                noise_sd,
                noise_seed,
            } => {
                let b = *base.get(effective).ok_or_else(|| {
                    Error::Contract(format!("no base quality for mask {effective}"))
                })?;
                if *noise_sd == 0.0 {
                    return Ok(b.max(0.0));
                }
                let mut r = rng::cell_rng(*noise_seed, frame as u64, u64::from(effective.bits()));
                let noise = Normal::new(0.0, *noise_sd).expect("sd >= 0").sample(&mut r);
                Ok((b + noise).max(0.0))
            }
            QualityModel::Trace(t) => {
                if frame >= t.n_frames {
                    return Err(Error::Bounds {
                        what: "quality trace",
                        index: frame,
                        len: t.n_frames,
                    });
                }
                t.get(frame, effective).ok_or_else(|| {
                    Error::Contract(format!("quality trace has no column for {effective}"))
                })
            }
        }
    }

    /// Noise-free base value, for synthetic models.
    pub fn base(&self, mask: &CameraMask) -> Option<f64> {
        match self {
            QualityModel::Synthetic { base, .. } => base.get(mask).copied(),
            QualityModel::Trace(_) => None,
        }
    }

    /// Renders `n_frames` of this model as a quality-trace CSV over `masks`.
    pub fn to_trace_csv(&self, n_frames: usize, masks: &[CameraMask]) -> Result<String> {
        let mut out = String::from("frame");
        for m in masks {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
        for f in 0..n_frames {
            out.push_str(&f.to_string());
            for m in masks {
                out.push_str(&format!(",{}", self.quality(f, m)?));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn check_monotone(base: &BTreeMap<CameraMask, f64>, n_cameras: usize) -> Result<()> {
    for (mask, &v) in base {
        if v < 0.0 {
            return Err(Error::config("quality", format!("base for {mask} is negative")));
        }
        for c in (0..n_cameras).filter(|&c| !mask.contains(c)) {
            let bigger = mask.with(c);
            if let Some(&w) = base.get(&bigger) {
                if w < v {
                    return Err(Error::config(
                        "quality",
                        format!("base table not monotone: {bigger} ({w}) < {mask} ({v})"),
                    ));
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub per_image_tx_ms: f64,
    pub recon_base_ms: f64,
    pub recon_per_image_ms: f64,
    /// Per-server multiplier on reconstruction time; empty means all 1.
    pub server_speed_factor: Vec<f64>,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            per_image_tx_ms: 350.0,
            recon_base_ms: 400.0,
            recon_per_image_ms: 120.0,
            server_speed_factor: Vec::new(),
        }
    }
}

impl LatencyModel {
    pub fn validate(&self, n_servers: usize) -> Result<()> {
        let coeffs = [
            ("latency.per_image_tx_ms", self.per_image_tx_ms),
            ("latency.recon_base_ms", self.recon_base_ms),
            ("latency.recon_per_image_ms", self.recon_per_image_ms),
        ];
        for (name, v) in coeffs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be >= 0"));
            }
        }
        if !self.server_speed_factor.is_empty() && self.server_speed_factor.len() != n_servers {
            return Err(Error::config(
                "latency.server_speed_factor",
                format!("expected {n_servers} entries"),
            ));
        }
        if self.server_speed_factor.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::config("latency.server_speed_factor", "must be >= 0"));
        }
        Ok(())
    }

    pub fn speed_factor(&self, server: usize) -> f64 {
        self.server_speed_factor.get(server).copied().unwrap_or(1.0)
    }

    pub fn tx_ms(&self, images: u32, network_ms: f64) -> f64 {
        self.per_image_tx_ms * f64::from(images) + network_ms
    }

    pub fn recon_ms(&self, images: u32, server: usize) -> f64 {
        (self.recon_base_ms + self.recon_per_image_ms * f64::from(images)) * self.speed_factor(server)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    /// Matching points per view.
    pub quality: f64,
    pub tx_latency_s: f64,
    pub recon_latency_s: f64,
    pub total_latency_s: f64,
    /// Selected cameras that were actually available.
    pub effective_mask: CameraMask,
    pub reliable: bool,
}

/// Traces plus models: everything needed to evaluate a frame.
#[derive(Clone, Debug)]
pub struct Environment {
    pub traces: Traces,
    pub quality: QualityModel,
    pub latency: LatencyModel,
    pub thresholds: Thresholds,
    pub k_min: u32,
    pub k_max: u32,
}

impl Environment {
    pub fn n_frames(&self) -> usize {
        self.traces.n_frames()
    }

    pub fn n_cameras(&self) -> usize {
        self.traces.cameras.n_cameras()
    }

    pub fn n_servers(&self) -> usize {
        self.traces.servers.n_servers()
    }

    pub fn step(&self, frame: usize, selected: &CameraMask, server: usize) -> Result<FrameOutcome> {
        if frame >= self.n_frames() {
            return Err(Error::Bounds {
                what: "trace",
                index: frame,
                len: self.n_frames(),
            });
        }
        if server >= self.n_servers() {
            return Err(Error::Bounds {
                what: "servers",
                index: server,
                len: self.n_servers(),
            });
        }
        if selected.n_cameras() != self.n_cameras() || !(self.k_min..=self.k_max).contains(&selected.count()) {
            return Err(Error::Contract(format!(
                "mask {selected} violates {}..={} cameras of {}",
                self.k_min,
                self.k_max,
                self.n_cameras()
            )));
        }
        let effective = selected.and(self.traces.cameras.row_mask(frame));
        let images = effective.count();
        let quality = self.quality.quality(frame, &effective)?;
        let network_ms = self.traces.servers.latency_ms(frame, server);
        let tx_latency_s = self.latency.tx_ms(images, network_ms) / 1000.0;
        let recon_latency_s = self.latency.recon_ms(images, server) / 1000.0;
        let total_latency_s = tx_latency_s + recon_latency_s;
        let reliable = metrics::is_reliable(quality, total_latency_s, recon_latency_s, &self.thresholds);
        Ok(FrameOutcome {
            quality,
            tx_latency_s,
            recon_latency_s,
            total_latency_s,
            effective_mask: effective,
            reliable,
        })
    }
}
