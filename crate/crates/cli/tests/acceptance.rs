//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints one PASS/FAIL line. Failures are reported, not fatal, unless
//! `QSWAP_ACCEPTANCE_STRICT=1` is set.

use std::collections::BTreeSet;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use qswap::codec::{
    crc32, decode_frame, encode_frame, EthernetHeader, MacAddr, MessageType, QpFrame, QpHeader,
    FRAME_BITS, QUANTUM_ETHERTYPE,
};
use qswap::delay::{
    levels, p_sb, p_sq, swap_delay, switches_for, t_ack, t_disc, t_er, t_error, t_prop, t_ptp,
    t_req, t_tb, t_tq, Medium, PacketParams,
};
use qswap::sim::network::{run_network, NetworkOptions, SwapScript};
use qswap::sim::{monte_carlo, Mode, SimOptions, SimReport, SimSetup};
use qswap::topology::{fiber_loss, link_cost, run_qstp, LinkParams, NetworkTopology, NodeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REPS: u64 = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn link(l_km: f64) -> LinkParams {
    LinkParams {
        d_km: l_km,
        rb: 1e9,
        rq: 1e9,
        pb: 1e-6,
        pq: fiber_loss(l_km, 0.2),
        tproc: 5e-6,
        tbo: 1e-6,
        pcol: 0.0,
        ..LinkParams::default()
    }
}

fn chain(s: usize, l: LinkParams, nq: u32, p_swap: f64) -> SimSetup {
    SimSetup::chain(s, l)
        .unwrap()
        .with_medium(Medium::FIBER)
        .with_qubits(nq)
        .with_p_swap(p_swap)
}

fn mc(setup: &SimSetup, mode: Mode, seed: u64) -> SimReport {
    monte_carlo(setup, mode, REPS, seed, SimOptions::default()).unwrap()
}

fn analytical_identities() -> Outcome {
    let start = Instant::now();
    let m = Medium::FIBER;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &nq in &[1, 100] {
        for &l_km in &[1.0, 10.0, 50.0, 100.0] {
            for &pcol in &[0.0, 0.1, 0.3] {
                let l = LinkParams {
                    pcol,
                    pb: 1e-4,
                    ..link(l_km)
                };
                let pkt = PacketParams {
                    bits: 320,
                    qubits: nq,
                };
                for hops in 1..=12usize {
                    let links = vec![l; hops];
                    let r = t_req(&l, pkt, m).unwrap();
                    let v_max = levels(hops as u32 - 1);
                    let mut pairs = vec![
                        (t_disc(&links, pkt, m).unwrap(), 2.0 * hops as f64 * r),
                        (t_er(&links, pkt, m).unwrap(), 2.0 * r),
                        (
                            t_ptp(&links, pkt, m).unwrap(),
                            t_tq(&l, nq, m).unwrap() + t_ack(&l, pkt, m).unwrap(),
                        ),
                    ];
                    for v in 1..=v_max.min(hops as u32) {
                        pairs.push((
                            t_error(v, v_max, &links, pkt, m).unwrap(),
                            2.0 * v as f64 * r,
                        ));
                    }
                    for (a, b) in pairs {
                        worst = worst.max((a - b).abs() / b);
                        cases += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("{cases} identities, worst rel. error {worst:.1e}, {elapsed:.2?}"),
    )
}

fn pinned_swap_values() -> Outcome {
    let (tr, tq) = (3.7e-4, 1.9e-3);
    let s2 = swap_delay(2, 1.0, tr, tq).unwrap().total;
    // S=5, P_swap=0.5: V=3, N=2 gives 8 t_tq + (56 + 16 + 8) t_req.
    let s5 = swap_delay(5, 0.5, tr, tq).unwrap().total;
    let ok2 = rel_close(s2, tq + 11.0 * tr, 1e-12);
    let ok5 = rel_close(s5, 8.0 * tq + 80.0 * tr, 1e-12);
    outcome(
        ok2 && ok5,
        format!(
            "S=2: {s2:.6e} vs {:.6e}; S=5: {s5:.6e} vs {:.6e}",
            tq + 11.0 * tr,
            8.0 * tq + 80.0 * tr
        ),
    )
}

fn monte_carlo_matches_closed_forms() -> Outcome {
    let start = Instant::now();
    // (S, P_swap, P_col, N_q)
    let scenarios = [
        (0, 1.0, 0.0, 1),
        (0, 1.0, 0.3, 100),
        (1, 1.0, 0.1, 1),
        (1, 0.8, 0.3, 100),
        (1, 0.5, 0.0, 1),
        (2, 1.0, 0.1, 1),
        (2, 0.8, 0.0, 100),
        (2, 0.5, 0.3, 1),
        (4, 1.0, 0.3, 100),
        (4, 0.8, 0.1, 1),
        (4, 0.5, 0.0, 100),
        (6, 1.0, 0.0, 1),
        (6, 0.8, 0.3, 100),
        (6, 0.5, 0.1, 1),
    ];
    let mut misses = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, &(s, p_swap, pcol, nq)) in scenarios.iter().enumerate() {
        let l = LinkParams {
            pcol,
            pb: 1e-4,
            ..link(50.0)
        };
        let setup = chain(s, l, nq, p_swap);
        let r = mc(&setup, Mode::Proposed, 1_000 + i as u64 * REPS);
        let pkt = setup.pkt;
        let tr = t_req(&l, pkt, Medium::FIBER).unwrap();
        let tq = t_tq(&l, nq, Medium::FIBER).unwrap();
        let m = Medium::FIBER;
        // Exact standard error of a geometric retransmission mean; used only when
        // every sampled message succeeded first time and the sample variance is 0.
        let geometric_se =
            |attempt: f64, p: f64, n: u64| attempt * (1.0 - p).sqrt() / p / (n as f64).sqrt();
        let req_se = geometric_se(
            l.tbo + t_tb(pkt.bits, l.rb) + t_prop(l.d_km, m),
            p_sb(l.pcol, l.pb, pkt.bits),
            r.messages.classical.n,
        );
        let tq_se = geometric_se(
            nq as f64 / l.rq + t_prop(l.d_km, m),
            p_sq(l.pq, nq),
            r.messages.quantum.n,
        );
        let checks = [
            ("t_req", &r.messages.classical, tr, req_se),
            ("t_tq", &r.messages.quantum, tq, tq_se),
            (
                "t_disc",
                &r.discovery,
                t_disc(&setup.links(), pkt, m).unwrap(),
                0.0,
            ),
            (
                "t_swap",
                &r.swap,
                swap_delay(s as u32, p_swap, tr, tq).unwrap().total,
                0.0,
            ),
        ];
        for (name, est, target, model_se) in checks {
            let se = if est.se() > 0.0 { est.se() } else { model_se };
            let z = (est.mean - target).abs() / se;
            worst = worst.max(z);
            if z > 3.0 || !z.is_finite() {
                misses.push(format!(
                    "S={s} p={p_swap} pcol={pcol} nq={nq} {name} z={z:.2}"
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{} scenarios x 4 phases x {REPS} reps, worst |z| = {worst:.2}, {elapsed:.2?}",
        scenarios.len()
    );
    if !misses.is_empty() {
        detail.push_str(&format!("; outside 3 SE: {}", misses.join(", ")));
    }
    outcome(
        misses.is_empty() && elapsed < Duration::from_secs(300),
        detail,
    )
}

const LENGTHS: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

fn handshake_beats_wrapper() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut bad = Vec::new();
    for (j, &pcol) in [0.1, 0.3].iter().enumerate() {
        for (i, &l_km) in LENGTHS.iter().enumerate() {
            // Slow qubit source: the quantum transmission time dominates.
            let l = LinkParams {
                pcol,
                rq: 100.0,
                ..link(l_km)
            };
            let setup = chain(0, l, 1, 1.0);
            let seed = 50_000 + (j * LENGTHS.len() + i) as u64 * REPS;
            let p = mc(&setup, Mode::Proposed, seed).swap.mean;
            let b = mc(&setup, Mode::Baseline, seed).swap.mean;
            worst = worst.min(b / p);
            if p >= b {
                bad.push(format!("l={l_km} pcol={pcol}"));
            }
        }
    }
    let mut detail = format!("20 points, smallest wrapper/handshake ratio {worst:.3}");
    if !bad.is_empty() {
        detail.push_str(&format!("; not faster at {}", bad.join(", ")));
    }
    outcome(bad.is_empty(), detail)
}

/// Mean swap delay and quantum fraction along the D = 400 km sweep.
fn distance_sweep() -> Vec<(f64, [SimReport; 2])> {
    LENGTHS
        .iter()
        .enumerate()
        .map(|(i, &l_km)| {
            let s = switches_for(400.0, l_km) as usize;
            let run = |nq| {
                let setup = chain(s, link(l_km), nq, 0.9);
                mc(&setup, Mode::Proposed, 200_000 + i as u64 * REPS)
            };
            (l_km, [run(1), run(100)])
        })
        .collect()
}

fn bigger_packets_help_long_links(sweep: &[(f64, [SimReport; 2])]) -> Outcome {
    let mut bad = Vec::new();
    let mut detail = Vec::new();
    for (l, [one, hundred]) in sweep.iter().filter(|(l, _)| *l >= 70.0) {
        detail.push(format!(
            "l={l}: {:.3}/{:.3} ms",
            hundred.swap.mean * 1e3,
            one.swap.mean * 1e3
        ));
        if hundred.swap.mean > one.swap.mean {
            bad.push(*l);
        }
    }
    outcome(
        bad.is_empty(),
        format!("N_q=100 / N_q=1: {}", detail.join(", ")),
    )
}

fn quantum_share_trend(sweep: &[(f64, [SimReport; 2])]) -> Outcome {
    let f1: Vec<f64> = sweep
        .iter()
        .map(|(_, r)| r[0].quantum_fraction.ratio())
        .collect();
    let f100: Vec<f64> = sweep
        .iter()
        .map(|(_, r)| r[1].quantum_fraction.ratio())
        .collect();
    let below = f1.iter().zip(&f100).all(|(a, b)| b < a);
    let monotone = f1.windows(2).all(|w| w[1] >= w[0]);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        below && monotone,
        format!(
            "N_q=1 [{}] N_q=100 [{}]{}{}",
            fmt(&f1),
            fmt(&f100),
            if below {
                ""
            } else {
                "; N_q=100 not always lower"
            },
            if monotone { "" } else { "; N_q=1 not monotone" }
        ),
    )
}

fn quiet_link() -> LinkParams {
    LinkParams {
        d_km: 10.0,
        pq: 0.0,
        pb: 0.0,
        tproc: 1e-6,
        tbo: 1e-6,
        ..LinkParams::default()
    }
}

fn level_formula() -> Outcome {
    let mut bad = Vec::new();
    for s in 2..=12usize {
        let setup = SimSetup::chain(s, quiet_link()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(s as u64);
        let o = NetworkOptions {
            script: SwapScript::AlwaysSucceed,
            ..NetworkOptions::default()
        };
        let run = run_network(&setup, &mut rng, &o).unwrap();
        if !run.completed || u32::from(run.max_level) != s as u32 / 2 + 1 {
            bad.push(format!("S={s}: level {}", run.max_level));
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "S = 2..12".into()
        } else {
            bad.join(", ")
        },
    )
}

fn failure_fan_out() -> Outcome {
    let mut bad = Vec::new();
    let mut cases = 0;
    for s in [4usize, 6, 8] {
        for v in 1..levels(s as u32) as u8 {
            let setup = SimSetup::chain(s, quiet_link()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let o = NetworkOptions {
                script: SwapScript::FailFirstAt(v),
                ..NetworkOptions::default()
            };
            let run = run_network(&setup, &mut rng, &o).unwrap();
            let n = run.frames_of(MessageType::SwappingError);
            cases += 1;
            if n != v as u64 + 1 {
                bad.push(format!("S={s} v={v}: {n}"));
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{cases} (S, v) cases")
        } else {
            bad.join(", ")
        },
    )
}

fn random_frame(rng: &mut ChaCha8Rng) -> QpFrame {
    QpFrame {
        eth: EthernetHeader {
            dst: MacAddr(rng.random()),
            src: MacAddr(rng.random()),
            ether_type: QUANTUM_ETHERTYPE,
            payload_len: rng.random(),
        },
        qp: QpHeader {
            seq: rng.random(),
            ack_seq: rng.random(),
            msg_type: MessageType::ALL[rng.random_range(0..16)],
            ack: rng.random(),
            e2e_id: rng.random(),
            level: rng.random(),
            token_id: rng.random(),
        },
    }
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let round_trips = (0..10_000)
        .filter(|_| {
            let f = random_frame(&mut rng);
            decode_frame(&encode_frame(&f)) == Ok(f)
        })
        .count();
    let good = encode_frame(&random_frame(&mut rng));
    let detected = (0..FRAME_BITS as usize)
        .filter(|&bit| {
            let mut bad = good;
            bad[bit / 8] ^= 1 << (bit % 8);
            decode_frame(&bad).is_err()
        })
        .count();
    let check = crc32(b"123456789");
    outcome(
        round_trips == 10_000 && detected == FRAME_BITS as usize && check == 0xCBF4_3926,
        format!("{round_trips}/10000 round trips, {detected}/{FRAME_BITS} bit flips caught, check value {check:#010x}"),
    )
}

fn random_graph(rng: &mut ChaCha8Rng) -> NetworkTopology {
    let n = rng.random_range(2..=8usize);
    let mut t = NetworkTopology::default();
    for i in 0..n {
        t.add_node(
            NodeKind::Switch,
            &format!("s{i}"),
            MacAddr::local(rng.random_range(1..1 << 40)),
        );
    }
    let cost = |rng: &mut ChaCha8Rng| LinkParams {
        cc: rng.random_range(1..=4) as f64,
        cq: rng.random_range(1..=4) as f64,
        ..LinkParams::default()
    };
    let mut used = BTreeSet::new();
    for b in 1..n {
        let a = rng.random_range(0..b);
        used.insert((a, b));
        let p = cost(rng);
        t.add_link(a, b, true, p);
    }
    for _ in 0..rng.random_range(0..=2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && used.insert((a.min(b), a.max(b))) {
            let p = cost(rng);
            t.add_link(a.min(b), a.max(b), rng.random_bool(0.8), p);
        }
    }
    t
}

fn spans(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut root: Vec<usize> = (0..n).collect();
    fn find(r: &mut [usize], x: usize) -> usize {
        if r[x] != x {
            r[x] = find(r, r[x]);
        }
        r[x]
    }
    let mut joined = 0;
    for &(a, b) in edges {
        let (x, y) = (find(&mut root, a), find(&mut root, b));
        if x != y {
            root[x] = y;
            joined += 1;
        }
    }
    joined == n - 1
}

fn qstp_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    for _ in 0..200 {
        let t = random_graph(&mut rng);
        let n = t.nodes.len();
        let paired: Vec<_> = t.links.iter().filter(|l| l.is_paired()).collect();
        let mut best = f64::INFINITY;
        for mask in 0u32..1 << paired.len() {
            if mask.count_ones() as usize + 1 != n {
                continue;
            }
            let chosen: Vec<_> = (0..paired.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| paired[i])
                .collect();
            let edges: Vec<_> = chosen.iter().map(|l| (l.a, l.b)).collect();
            if spans(n, &edges) {
                best = best.min(chosen.iter().map(|l| link_cost(&l.params)).sum());
            }
        }
        if run_qstp(&t).map(|tree| tree.total_cost) != Ok(best) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("200 graphs, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("det.qs");
    fs::write(
        &sc,
        "[chain]\nswitches = 6\nl = 30\npq = auto\npb = 1e-4\npcol = 0.2\ntbo = 1e-6\ntproc = 5e-6\n\
         [defaults]\npswap = 0.6\nnq = 5\n[experiment]\nn_reps = 200\n",
    )
    .unwrap();
    let mut outs = Vec::new();
    for i in 0..2 {
        let (csv, trace) = (
            dir.path().join(format!("{i}.csv")),
            dir.path().join(format!("{i}.trace")),
        );
        let status = Command::new(env!("CARGO_BIN_EXE_qswap"))
            .arg("simulate")
            .arg(&sc)
            .args(["--seed", "42", "--out"])
            .arg(&csv)
            .arg("--trace")
            .arg(&trace)
            .env("QSWAP_THREADS", if i == 0 { "1" } else { "4" })
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return outcome(false, format!("run {i} exited with {status}"));
        }
        outs.push((fs::read(&csv).unwrap(), fs::read(&trace).unwrap()));
    }
    outcome(
        outs[0] == outs[1],
        format!(
            "CSV {} bytes, trace {} bytes, 1 vs 4 threads",
            outs[0].0.len(),
            outs[0].1.len()
        ),
    )
}

fn liveness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut failed = Vec::new();
    for run_id in 0..1_000u64 {
        let s = rng.random_range(1..=10usize);
        let p_swap = [0.3, 0.5, 0.7, 0.9, 1.0][rng.random_range(0..5)];
        let pb = [0.0, 1e-5, 1e-4, 1e-3][rng.random_range(0..4)];
        let l = LinkParams {
            pb,
            pcol: rng.random_range(0.0..0.5),
            pq: rng.random_range(0.0..0.9),
            ..quiet_link()
        };
        let setup = SimSetup::chain(s, l)
            .unwrap()
            .with_p_swap(p_swap)
            .with_qubits(rng.random_range(1..=4));
        let mut run_rng = ChaCha8Rng::seed_from_u64(run_id);
        let o = NetworkOptions {
            trace: true,
            ..NetworkOptions::default()
        };
        let delivered = |run: &qswap::sim::network::NetworkRun, user: &str| {
            let pat = format!("node={user} ev=rx");
            run.trace
                .iter()
                .any(|t| t.contains(&pat) && t.contains("msg=SwappingComplete"))
        };
        match run_network(&setup, &mut run_rng, &o) {
            Ok(run)
                if run.completed
                    && run.faults.is_empty()
                    && delivered(&run, "alice")
                    && delivered(&run, "bob") => {}
            Ok(_) => failed.push(format!("#{run_id} S={s}")),
            Err(e) => failed.push(format!("#{run_id} S={s}: {e}")),
        }
    }
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            "1000/1000 runs delivered SwappingComplete to both users".into()
        } else {
            failed.join(", ")
        },
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name, f: &dyn Fn() -> Outcome| {
        let o = f();
        let n = results.len() + 1;
        println!(
            "{:>2} {} {name}: {}",
            n,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((name, o));
    };
    run("analytical identities", &analytical_identities);
    run("pinned swap delays", &pinned_swap_values);
    run(
        "Monte Carlo vs closed forms",
        &monte_carlo_matches_closed_forms,
    );
    run("handshake faster than wrapper", &handshake_beats_wrapper);
    let sweep = distance_sweep();
    run("N_q=100 no slower for l >= 70 km", &|| {
        bigger_packets_help_long_links(&sweep)
    });
    run("quantum share trend", &|| quantum_share_trend(&sweep));
    run("failure-free level count", &level_formula);
    run("failure fan-out", &failure_fan_out);
    run("codec", &codec);
    run("Q-STP optimality", &qstp_optimality);
    run("determinism", &determinism);
    run("liveness", &liveness);
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    let strict = std::env::var("QSWAP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
