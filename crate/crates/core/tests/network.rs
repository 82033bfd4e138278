use qswap::codec::MessageType;
use qswap::delay::levels;
use qswap::protocols::Notification;
use qswap::sim::network::{run_network, NetworkOptions, SwapScript};
use qswap::sim::SimSetup;
use qswap::topology::LinkParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn link() -> LinkParams {
    LinkParams {
        d_km: 10.0,
        rb: 1e9,
        rq: 1e6,
        pb: 0.0,
        pq: 0.0,
        tproc: 1e-6,
        tbo: 1e-6,
        pcol: 0.0,
        ..LinkParams::default()
    }
}

fn opts(script: SwapScript) -> NetworkOptions {
    NetworkOptions {
        script,
        ..NetworkOptions::default()
    }
}

#[test]
fn failure_free_runs_reach_the_top_level() {
    for s in 0..=12usize {
        let setup = SimSetup::chain(s, link()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(s as u64);
        let run = run_network(&setup, &mut rng, &opts(SwapScript::AlwaysSucceed)).unwrap();
        assert!(
            run.completed,
            "S={s} did not complete: {:?}",
            run.notifications
        );
        assert!(run.faults.is_empty(), "S={s}: {:?}", run.faults);
        let want = if s >= 2 { levels(s as u32) as u8 } else { 0 };
        assert_eq!(run.max_level, want, "S={s}");
        if s >= 2 {
            assert_eq!(run.swap_attempts, s as u64, "one swap per switch, S={s}");
            assert_eq!(run.frames_of(MessageType::TokenTransfer), s as u64 - 1);
        }
        assert_eq!(run.frames_of(MessageType::SwappingError), 0);
    }
}

#[test]
fn injected_failure_fans_out_to_v_plus_one() {
    for s in [4usize, 6, 8] {
        let v_max = levels(s as u32) as u8;
        for v in 1..v_max {
            let setup = SimSetup::chain(s, link()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let run = run_network(&setup, &mut rng, &opts(SwapScript::FailFirstAt(v))).unwrap();
            assert!(run.completed, "S={s} v={v}");
            assert_eq!(run.swap_failures, 1);
            assert_eq!(
                run.frames_of(MessageType::SwappingError),
                v as u64 + 1,
                "S={s} v={v}"
            );
            assert_eq!(
                run.frames_of(MessageType::ErrorAck),
                v as u64 + 1,
                "S={s} v={v}"
            );
        }
    }
}

#[test]
fn random_swaps_and_noisy_links_terminate() {
    let noisy = LinkParams {
        pb: 1e-3,
        pcol: 0.2,
        pq: 0.5,
        ..link()
    };
    for s in [0usize, 1, 2, 3, 5, 8] {
        for seed in 0..20 {
            let setup = SimSetup::chain(s, noisy)
                .unwrap()
                .with_p_swap(0.3)
                .with_qubits(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let run = run_network(&setup, &mut rng, &NetworkOptions::default()).unwrap();
            assert!(run.completed, "S={s} seed={seed}");
            assert!(run.faults.is_empty(), "S={s} seed={seed}: {:?}", run.faults);
            assert!(run
                .notified("alice", Notification::EntanglementReady)
                .is_some());
            assert!(run
                .notified("bob", Notification::EntanglementReady)
                .is_some());
        }
    }
}

#[test]
fn killed_link_interrupts_both_users() {
    let setup = SimSetup::chain(2, link()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kill_at = 0.01;
    let o = NetworkOptions {
        script: SwapScript::AlwaysSucceed,
        stop_when_ready: false,
        kill_link: Some((kill_at, setup.path_links[1])),
        horizon: Some(1.0),
        ..NetworkOptions::default()
    };
    let run = run_network(&setup, &mut rng, &o).unwrap();
    let k = setup.protocol;
    let bound = kill_at + (k.k_miss + 1) as f64 * k.t_keepalive + 1e-3;
    for user in ["alice", "bob"] {
        let t = run
            .notified(user, Notification::EstablishmentInterrupted)
            .unwrap_or_else(|| panic!("{user} never interrupted"));
        assert!(t > kill_at && t <= bound, "{user} at {t}");
    }
}

#[test]
fn trace_lines_follow_the_documented_shape() {
    let setup = SimSetup::chain(2, link()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let run = run_network(
        &setup,
        &mut rng,
        &NetworkOptions {
            trace: true,
            ..NetworkOptions::default()
        },
    )
    .unwrap();
    let frames: Vec<&String> = run.trace.iter().filter(|l| l.starts_with("t=")).collect();
    assert!(!frames.is_empty());
    for l in &frames {
        let keys: Vec<&str> = l
            .split(' ')
            .take(9)
            .map(|kv| kv.split('=').next().unwrap())
            .collect();
        assert_eq!(
            keys,
            ["t", "node", "ev", "port", "seq", "msg", "e2e", "level", "token"],
            "{l}"
        );
    }
    if std::env::var_os("SHOW_TRACE").is_some() {
        run.trace.iter().for_each(|l| println!("{l}"));
    }
}
