//! Multi-seed pilot of the comparison presets. Prints per-policy reliability
//! percentiles next to the per-frame brute-force optimum.
//!
//! cargo run --release -p reconsim --example calibrate -- [seeds] [config.toml]

use reconsim::controller::{run_episode_in, ExperimentConfig};
use reconsim::policies::{ActionSpace, CameraPolicyKind, ServerPolicyKind};
use reconsim::Environment;

fn oracle_pct(env: &Environment, space: &ActionSpace, frames: usize) -> f64 {
    let mut hit = 0;
    for f in 0..frames {
        let ok = space.actions.iter().any(|m| {
            (0..env.n_servers()).any(|s| env.step(f, m, s).map(|o| o.reliable).unwrap_or(false))
        });
        hit += usize::from(ok);
    }
    100.0 * hit as f64 / frames as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let base_cam = match args.get(2) {
        Some(p) => ExperimentConfig::from_file(p.as_ref()).expect("config"),
        None => ExperimentConfig::camera_comparison(),
    };
    let base_srv = match args.get(3) {
        Some(p) => ExperimentConfig::from_file(p.as_ref()).expect("config"),
        None => ExperimentConfig::server_spike_scenario(),
    };

    let mut cam: Vec<(CameraPolicyKind, Vec<f64>)> =
        CameraPolicyKind::ALL.iter().map(|&k| (k, Vec::new())).collect();
    let mut srv: Vec<(ServerPolicyKind, Vec<f64>)> =
        ServerPolicyKind::ALL.iter().map(|&k| (k, Vec::new())).collect();
    let mut oracle_cam = Vec::new();
    let mut oracle_srv = Vec::new();
    for seed in 0..seeds {
        let c = base_cam.clone().with_seed(seed);
        let env = c.build_environment().unwrap();
        oracle_cam.push(oracle_pct(&env, &c.action_space().unwrap(), c.n_frames));
        for (k, v) in cam.iter_mut() {
            let cfg = ExperimentConfig { camera_policy: *k, ..c.clone() };
            v.push(run_episode_in(&cfg, &env).unwrap().stats.reliability_pct());
        }
        let s = base_srv.clone().with_seed(seed);
        let env = s.build_environment().unwrap();
        oracle_srv.push(oracle_pct(&env, &s.action_space().unwrap(), s.n_frames));
        for (k, v) in srv.iter_mut() {
            let cfg = ExperimentConfig { server_policy: *k, ..s.clone() };
            v.push(run_episode_in(&cfg, &env).unwrap().stats.reliability_pct());
        }
    }
    let show = |name: &str, v: &Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("  {name:<24} median {:6.2}  min {lo:6.2}  max {hi:6.2}", median(v.clone()));
    };
    println!("camera axis ({} seeds)", seeds);
    show("per-frame optimum", &oracle_cam);
    for (k, v) in &cam {
        show(k.label(), v);
    }
    println!("server axis ({} seeds)", seeds);
    show("per-frame optimum", &oracle_srv);
    for (k, v) in &srv {
        show(k.label(), v);
    }
}
