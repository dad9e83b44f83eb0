use std::sync::OnceLock;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use reconsim::controller::ExperimentConfig;
use reconsim::environment::CameraMask;
use reconsim::metrics::{self, RunStats, Thresholds};
use reconsim::policies::{adapt_params, argmax, epsilon_greedy, q_update, AgentParams, QTable};
use reconsim::{run_episode, Environment};

fn noise_free_env() -> &'static Environment {
    static ENV: OnceLock<Environment> = OnceLock::new();
    ENV.get_or_init(|| {
        let mut cfg = ExperimentConfig {
            n_frames: 300,
            ..ExperimentConfig::default()
        };
        cfg.quality.noise_sd = 0.0;
        cfg.disruption.n_bump_events = 4;
        cfg.disruption.n_spike_events = 4;
        cfg.build_environment().unwrap()
    })
}

fn mask_strategy() -> impl Strategy<Value = CameraMask> {
    (0u32..32).prop_filter_map("2..=5 cameras", |b| {
        let m = CameraMask::new(b, 5);
        (m.count() >= 2).then_some(m)
    })
}

proptest! {
    #[test]
    fn quality_score_monotone_and_clamped(a in 0.0f64..2000.0, b in 0.0f64..2000.0, theta in 1.0f64..1000.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (metrics::quality_score(lo, theta), metrics::quality_score(hi, theta));
        prop_assert!(s_lo <= s_hi);
        prop_assert!((0.0..=1.0).contains(&s_lo) && (0.0..=1.0).contains(&s_hi));
        if hi >= theta {
            prop_assert_eq!(s_hi, 1.0);
        }
    }

    #[test]
    fn latency_score_non_increasing_and_clamped(a in 0.0f64..10.0, b in 0.0f64..10.0, phi in 0.01f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (metrics::latency_score(lo, phi), metrics::latency_score(hi, phi));
        prop_assert!(s_lo >= s_hi);
        prop_assert!((0.0..=1.0).contains(&s_lo) && (0.0..=1.0).contains(&s_hi));
    }

    #[test]
    fn step_outcome_invariants(frame in 0usize..300, mask in mask_strategy(), server in 0usize..4) {
        let env = noise_free_env();
        let o = env.step(frame, &mask, server).unwrap();
        prop_assert!(o.effective_mask.is_subset_of(&mask));
        prop_assert_eq!(o.total_latency_s, o.tx_latency_s + o.recon_latency_s);
        prop_assert!(o.quality >= 0.0);
        let t = Thresholds::default();
        let w = Default::default();
        let r = metrics::camera_reward(&o, &t, &w);
        prop_assert!((0.0..=1.0).contains(&r));
        if o.reliable {
            prop_assert_eq!(metrics::quality_score(o.quality, t.theta), 1.0);
        }
    }

    #[test]
    fn adding_a_camera_never_hurts_quality_or_saves_latency(
        frame in 0usize..300,
        mask in mask_strategy(),
        extra in 0usize..5,
        server in 0usize..4,
    ) {
        prop_assume!(!mask.contains(extra));
        let env = noise_free_env();
        let small = env.step(frame, &mask, server).unwrap();
        let big = env.step(frame, &mask.with(extra), server).unwrap();
        prop_assert!(small.quality <= big.quality);
        prop_assert!(small.tx_latency_s <= big.tx_latency_s);
        prop_assert!(small.recon_latency_s <= big.recon_latency_s);
        prop_assert!(small.effective_mask.is_subset_of(&big.effective_mask));
    }

    #[test]
    fn argmax_is_scale_invariant(values in prop::collection::vec(-10.0f64..10.0, 1..30), c in 0.001f64..1000.0) {
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        prop_assert_eq!(argmax(&values), argmax(&scaled));
        let mut rng = reconsim::rng::seeded(1, 0);
        prop_assert_eq!(epsilon_greedy(&scaled, 0.0, &mut rng), argmax(&values));
    }

    #[test]
    fn adaptive_rates_stay_clamped(
        rewards in prop::collection::vec(0.0f64..1.0, 1..400),
        eps0 in 0.05f64..1.0,
        alpha0 in 0.05f64..0.9,
    ) {
        let p = AgentParams::adaptive_camera();
        let (mut alpha, mut eps) = (alpha0, eps0);
        let mut history = Vec::new();
        for r in rewards {
            history.push(r);
            let (a, e, fired) = adapt_params(alpha, eps, &p, &history);
            if fired {
                history.clear();
            }
            alpha = a;
            eps = e;
            prop_assert!((p.alpha_min..=p.alpha_max).contains(&alpha));
            prop_assert!((p.eps_min..=p.eps_max).contains(&eps));
        }
    }

    #[test]
    fn two_updates_match_closed_form(
        q0 in -1.0f64..1.0,
        r1 in -1.0f64..1.0,
        r2 in -1.0f64..1.0,
        alpha in 0.01f64..1.0,
        gamma in 0.0f64..0.99,
    ) {
        // Single state, single action: Q <- Q + a(r + g Q - Q).
        let mut t = QTable::new(1);
        t.set("s", 0, q0);
        q_update(&mut t, "s", 0, r1, "s", alpha, gamma).unwrap();
        q_update(&mut t, "s", 0, r2, "s", alpha, gamma).unwrap();
        let k = 1.0 - alpha + alpha * gamma;
        let expected = k * k * q0 + alpha * k * r1 + alpha * r2;
        prop_assert!((t.get("s", 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn unread_entries_are_zero(state in "[a-z0-9_]{1,12}", action in 0usize..26) {
        let t = QTable::new(26);
        prop_assert_eq!(t.get(&state, action), 0.0);
        prop_assert_eq!(t.max(&state), 0.0);
    }

    #[test]
    fn mask_string_round_trip(bits in 0u32..(1 << 16), n in 1usize..=16) {
        let m = CameraMask::new(bits, n);
        let back: CameraMask = m.to_string().parse().unwrap();
        prop_assert_eq!(m, back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn accumulation_ignores_record_order(seed in 0u64..1000) {
        let cfg = ExperimentConfig { n_frames: 200, ..ExperimentConfig::default() }.with_seed(seed);
        let ep = run_episode(&cfg).unwrap();
        let mut shuffled = ep.records.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = RunStats::from_records(&ep.records);
        let b = RunStats::from_records(&shuffled);
        prop_assert_eq!(a.frames, b.frames);
        prop_assert_eq!(a.reliable_frames, b.reliable_frames);
        prop_assert_eq!(&a.camera_subset_histogram, &b.camera_subset_histogram);
        prop_assert_eq!(&a.server_histogram, &b.server_histogram);
        prop_assert!((a.avg_quality() - b.avg_quality()).abs() < 1e-9);
        prop_assert!((a.avg_total_s() - b.avg_total_s()).abs() < 1e-9);
        let (head, tail) = ep.records.split_at(77);
        let merged = RunStats::from_records(head).merge(&RunStats::from_records(tail));
        prop_assert_eq!(merged.reliable_frames, a.reliable_frames);
        prop_assert_eq!(a.camera_subset_histogram.values().sum::<u64>(), a.frames);
        prop_assert_eq!(a.server_histogram.values().sum::<u64>(), a.frames);
    }
}
