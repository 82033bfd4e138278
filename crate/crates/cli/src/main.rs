use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qswap::codec::decode_hex_line;
use qswap::experiment::{
    analysis_csv, analyze, results_csv, run_sweep, simulate, sweep_csv, ExperimentError,
};
use qswap::scenario::{parse_scenario_named, GridPoint, NetworkSpec, Scenario, DEFAULTS_HELP};
use qswap::sim::{traced_run, Mode, SimOptions};
use qswap::topology::{link_cost, run_qstp, PortState};

const AFTER_HELP: &str = "\
Exit codes: 0 ok, 1 scenario or input error, 2 runtime fault.
QSWAP_THREADS caps the number of worker threads.

Scenario defaults:
";

#[derive(Parser)]
#[command(
    name = "qswap",
    version,
    about = "Entanglement distribution protocols: analysis and simulation"
)]
#[command(after_help = format!("{AFTER_HELP}{DEFAULTS_HELP}"))]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Base seed; replication i uses seed + i. Defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per point. Defaults to the scenario's n_reps.
    #[arg(long)]
    reps: Option<u64>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a scenario and check its topology.
    Validate { scenario: PathBuf },
    /// Print the spanning tree over paired links.
    Qstp { scenario: PathBuf },
    /// Closed-form delays for every grid point.
    Analyze {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo run of the proposed protocol stack.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Protocol trace of the first replication, with hex frame dumps.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Proposed stack against the reference wrapper.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Every grid point and mode of the scenario's sweep.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode one hex-encoded frame.
    Decode { hexline: String },
}

enum Failure {
    Input(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    parse_scenario_named(&text, stem)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => {
            fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        return report(f);
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    match f {
        Failure::Input(m) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Failure::Runtime(m) => {
            eprintln!("fault: {m}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("QSWAP_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure::Input(format!("QSWAP_THREADS={v} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Validate { scenario } => {
            let s = load(&scenario)?;
            let setup = s
                .setup(&GridPoint::default())
                .map_err(|e| Failure::Input(e.to_string()))?;
            let (users, switches) = setup.topology.counts();
            println!(
                "ok: {} users, {} switches, {} paired links; path {} with S={} (V={}); {} grid point(s)",
                users,
                switches,
                setup.topology.paired_count(),
                setup.path.iter().map(|&n| setup.topology.name(n)).collect::<Vec<_>>().join("-"),
                setup.switches(),
                qswap::delay::levels(setup.switches() as u32),
                s.grid().len()
            );
            Ok(())
        }
        Cmd::Qstp { scenario } => {
            let s = load(&scenario)?;
            let t = match &s.network {
                NetworkSpec::Explicit { topology, .. } => topology.clone(),
                NetworkSpec::Chain(_) => {
                    s.setup(&GridPoint::default())
                        .map_err(|e| Failure::Input(e.to_string()))?
                        .topology
                }
            };
            let tree = run_qstp(&t).map_err(|e| Failure::Input(e.to_string()))?;
            println!("root {} ({})", t.name(tree.root), t.nodes[tree.root].mac);
            for &l in &tree.active_links {
                let k = &t.links[l];
                println!(
                    "active {}-{} cost={}",
                    t.name(k.a),
                    t.name(k.b),
                    link_cost(&k.params)
                );
            }
            for ((node, port), state) in &tree.port_states {
                if *state == PortState::Blocked {
                    println!("blocked {} port {}", t.name(*node), port);
                }
            }
            println!("total cost {}", tree.total_cost);
            Ok(())
        }
        Cmd::Analyze { scenario, out } => {
            let s = load(&scenario)?;
            let rows = analyze(&s)?;
            emit(out.as_deref(), &analysis_csv(&rows)?)
        }
        Cmd::Simulate { run, trace } => {
            let s = load(&run.scenario)?;
            let (reps, seed) = (
                run.reps.unwrap_or(s.experiment.n_reps),
                run.seed.unwrap_or(s.experiment.seed),
            );
            if reps == 0 {
                return Err(Failure::Input("--reps must be at least 1".into()));
            }
            let rows = simulate(
                &s,
                &[Mode::Proposed],
                reps,
                seed,
                SimOptions { network: true },
            )?;
            for r in &rows {
                let rep = &r.report;
                eprintln!(
                    "{}: discovery {} | establishment {} | ptp {} | swap {}",
                    r.scenario_id, rep.discovery, rep.establishment, rep.ptp, rep.swap
                );
                if let Some(n) = &rep.network {
                    eprintln!(
                        "{}: {} frames, {} retransmissions, {}/{} runs complete, max level {}",
                        r.scenario_id,
                        n.total_frames(),
                        n.retransmissions,
                        n.completed,
                        n.runs,
                        n.max_level
                    );
                }
            }
            if let Some(path) = trace {
                let setup = s
                    .setup(&s.grid()[0])
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
                let t = traced_run(&setup, seed).map_err(|e| Failure::Runtime(e.to_string()))?;
                let mut text = t.trace.join("\n");
                text.push('\n');
                fs::write(&path, text)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            }
            emit(run.out.as_deref(), &results_csv(&rows)?)
        }
        Cmd::Compare { run } => {
            let s = load(&run.scenario)?;
            let (reps, seed) = (
                run.reps.unwrap_or(s.experiment.n_reps),
                run.seed.unwrap_or(s.experiment.seed),
            );
            if reps == 0 {
                return Err(Failure::Input("--reps must be at least 1".into()));
            }
            let rows = simulate(
                &s,
                &[Mode::Proposed, Mode::Baseline],
                reps,
                seed,
                SimOptions::default(),
            )?;
            emit(run.out.as_deref(), &results_csv(&rows)?)
        }
        Cmd::Sweep { scenario, out } => {
            let s = load(&scenario)?;
            let rows = run_sweep(&s);
            emit(out.as_deref(), &sweep_csv(&rows)?)?;
            let failed: Vec<_> = rows
                .iter()
                .filter_map(|r| r.outcome.as_ref().err().map(|e| (r, e)))
                .collect();
            for (r, e) in &failed {
                eprintln!("fault: {} ({}): {e}", r.scenario_id, r.mode);
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Runtime(format!(
                    "{} of {} sweep rows failed",
                    failed.len(),
                    rows.len()
                )))
            }
        }
        Cmd::Decode { hexline } => {
            let f = decode_hex_line(&hexline).map_err(|e| Failure::Input(e.to_string()))?;
            println!("dst          {}", f.eth.dst);
            println!("src          {}", f.eth.src);
            println!("ether_type   0x{:04x}", f.eth.ether_type);
            println!("payload_len  {}", f.eth.payload_len);
            println!("seq          {}", f.qp.seq);
            println!("ack_seq      {}", f.qp.ack_seq);
            println!("msg_type     {} ({})", f.qp.msg_type, f.qp.msg_type.code());
            println!("ack          {}", f.qp.ack);
            println!("e2e_id       {:016x}", f.qp.e2e_id);
            println!("level        {}", f.qp.level);
            println!("token_id     {}", f.qp.token_id);
            Ok(())
        }
    }
}
