use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qswap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qswap"))
        .args(args)
        .env_remove("QSWAP_THREADS")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "\
[chain]
switches = 4
l = 20
pq = auto
pb = 1e-5
pcol = 0.1
tbo = 1e-6
tproc = 5e-6
[defaults]
pswap = 0.7
nq = 10
[experiment]
n_reps = 40
seed = 3
";

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "small.qs", SMALL);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let csv = dir.path().join(format!("out{run}.csv"));
        let trace = dir.path().join(format!("trace{run}.txt"));
        let o = qswap(&[
            "simulate",
            sc.to_str().unwrap(),
            "--seed",
            "11",
            "--reps",
            "25",
            "--out",
            csv.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((fs::read(csv).unwrap(), fs::read(trace).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(csv.starts_with("scenario_id,mode,n_reps,mean_delay_s,stderr_s,"));
    assert!(csv.contains("\nsmall,proposed,25,"));
    let trace = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(trace
        .lines()
        .next()
        .unwrap()
        .starts_with("t=0.000000000 node=alice ev=tx"));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "small.qs", SMALL);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_qswap"))
            .args(["compare", sc.to_str().unwrap()])
            .env("QSWAP_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn decode_round_trips_a_trace_line() {
    let o = qswap(&[
        "decode",
        "02000000000202000000000188b5000052eba3e90000000100000000000000515700000001000000",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("msg_type     DiscoveryRequest"));
    assert!(text.contains("e2e_id       0000515700000001"));

    let o = qswap(&[
        "decode",
        "02000000000202000000000188b5000052eba3e90000000100000000000000515700000001000001",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        qswap(&["validate", "/definitely/missing.qs"]).status.code(),
        Some(1)
    );

    let bad = write(dir.path(), "bad.qs", "[chain]\nl = 10\nbogus = 1\n");
    let o = qswap(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    // A link that never delivers a packet is a runtime fault, not a scenario error.
    let dead = write(
        dir.path(),
        "dead.qs",
        "[chain]\nswitches = 2\nl = 10\npcol = 1\n",
    );
    assert_eq!(
        qswap(&["validate", dead.to_str().unwrap()]).status.code(),
        Some(0)
    );
    assert_eq!(
        qswap(&["analyze", dead.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(
        qswap(&["simulate", dead.to_str().unwrap(), "--reps", "2"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn shipped_scenarios_validate() {
    for name in ["diamond.qs", "chain_sweep.qs", "collisions.qs"] {
        let o = qswap(&["validate", &scenario(name)]);
        assert!(
            o.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = qswap(&["qstp", &scenario("diamond.qs")]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("root alice"));
    assert_eq!(text.lines().filter(|l| l.starts_with("active")).count(), 5);
}

#[test]
fn sweep_writes_one_row_per_point_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "sw.qs",
        "[chain]\nD = 100\nl = 50\npq = auto\n[experiment]\nmode = sweep\nn_reps = 5\nl = 25, 50\nnq = 1, 10\n",
    );
    let out = dir.path().join("sweep.csv");
    let o = qswap(&[
        "sweep",
        sc.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
}
