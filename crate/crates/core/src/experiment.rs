//! Experiment runners and their CSV output.

use rayon::prelude::*;
use thiserror::Error;

use crate::delay::{
    baseline_swap_delay, levels, swap_delay, t_baseline_packet, t_disc, t_er, t_ptp, t_req, t_tq,
    DelayError,
};
use crate::scenario::{GridPoint, NetworkSpec, Scenario};
use crate::sim::{monte_carlo, Mode, SimError, SimOptions, SimReport, SimSetup};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{point}: {source}")]
    Point { point: String, source: SimError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Closed-form delays of one setup. Explicit topologies use their path links
/// for the per-link phases and the slowest link for swapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Analysis {
    pub switches: u32,
    pub levels: u32,
    pub t_req: f64,
    pub t_tq: f64,
    pub t_disc: f64,
    /// Lower bound; equal to `t_disc`.
    pub t_est: f64,
    pub t_er: f64,
    pub t_ptp: f64,
    pub t_swap: f64,
    pub t_swap_baseline: f64,
    pub quantum_fraction: f64,
}

impl Analysis {
    pub fn total(&self) -> f64 {
        self.t_disc + self.t_est + self.t_swap
    }
}

pub fn analyze_setup(setup: &SimSetup) -> Result<Analysis, DelayError> {
    let links = setup.links();
    let (pkt, m) = (setup.pkt, setup.medium);
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
    for l in &links {
        let (tr, tq) = (t_req(l, pkt, m)?, t_tq(l, pkt.qubits, m)?);
        if tq + 7.0 * tr > worst.0 {
            worst = (tq + 7.0 * tr, tr, tq, t_baseline_packet(l, pkt, m)?);
        }
    }
    let (_, tr, tq, tb) = worst;
    let s = setup.switches() as u32;
    let swap = swap_delay(s, setup.p_swap, tr, tq)?;
    let disc = t_disc(&links, pkt, m)?;
    Ok(Analysis {
        switches: s,
        levels: levels(s),
        t_req: tr,
        t_tq: tq,
        t_disc: disc,
        t_est: disc,
        t_er: t_er(&links, pkt, m)?,
        t_ptp: t_ptp(&links, pkt, m)?,
        t_swap: swap.total,
        t_swap_baseline: baseline_swap_delay(s, setup.p_swap, tr, tq, tb)?.total,
        quantum_fraction: swap.quantum / swap.total,
    })
}

pub fn point_id(s: &Scenario, p: &GridPoint) -> String {
    let label = p.label();
    if label.is_empty() {
        s.experiment.id.clone()
    } else {
        format!("{}[{}]", s.experiment.id, label)
    }
}

fn point_setup(s: &Scenario, p: &GridPoint) -> Result<SimSetup, ExperimentError> {
    s.setup(p).map_err(|source| ExperimentError::Point {
        point: point_id(s, p),
        source,
    })
}

pub fn analyze(s: &Scenario) -> Result<Vec<(String, Analysis)>, ExperimentError> {
    s.grid()
        .iter()
        .map(|p| {
            let setup = point_setup(s, p)?;
            let a = analyze_setup(&setup).map_err(|e| ExperimentError::Point {
                point: point_id(s, p),
                source: e.into(),
            })?;
            Ok((point_id(s, p), a))
        })
        .collect()
}

pub fn analysis_csv(rows: &[(String, Analysis)]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario_id",
        "switches",
        "levels",
        "t_req_s",
        "t_tq_s",
        "t_disc_s",
        "t_est_s",
        "t_er_s",
        "t_ptp_s",
        "t_swap_s",
        "t_swap_baseline_s",
        "quantum_fraction",
    ])?;
    for (id, a) in rows {
        w.write_record([
            id.clone(),
            a.switches.to_string(),
            a.levels.to_string(),
            a.t_req.to_string(),
            a.t_tq.to_string(),
            a.t_disc.to_string(),
            a.t_est.to_string(),
            a.t_er.to_string(),
            a.t_ptp.to_string(),
            a.t_swap.to_string(),
            a.t_swap_baseline.to_string(),
            a.quantum_fraction.to_string(),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ExperimentError> {
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub scenario_id: String,
    pub report: SimReport,
}

/// Monte-Carlo runs of every grid point and mode; the first failure aborts.
pub fn simulate(
    s: &Scenario,
    modes: &[Mode],
    n_reps: u64,
    seed: u64,
    opts: SimOptions,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut rows = Vec::new();
    for p in s.grid() {
        let setup = point_setup(s, &p)?;
        for &mode in modes {
            let report = monte_carlo(&setup, mode, n_reps, seed, opts).map_err(|source| {
                ExperimentError::Point {
                    point: point_id(s, &p),
                    source,
                }
            })?;
            rows.push(ResultRow {
                scenario_id: point_id(s, &p),
                report,
            });
        }
    }
    Ok(rows)
}

/// The swap phase is the headline delay: distribution plus swapping.
pub fn results_csv(rows: &[ResultRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario_id",
        "mode",
        "n_reps",
        "mean_delay_s",
        "stderr_s",
        "quantum_fraction",
        "decoherence_violations",
    ])?;
    for r in rows {
        let rep = &r.report;
        w.write_record([
            r.scenario_id.clone(),
            rep.mode.to_string(),
            rep.n_reps.to_string(),
            rep.swap.mean.to_string(),
            rep.swap.se().to_string(),
            rep.quantum_fraction.ratio().to_string(),
            rep.decoherence_violations.to_string(),
        ])?;
    }
    finish(w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: GridPoint,
    pub scenario_id: String,
    pub mode: Mode,
    pub distance_km: Option<f64>,
    pub link_km: Option<f64>,
    pub switches: Option<usize>,
    pub nq: u32,
    pub pcol: Option<f64>,
    pub pswap: f64,
    pub outcome: Result<(SimReport, f64), String>,
}

/// Every grid point × mode. Points run in parallel; a failing point becomes a
/// row with its error and the others continue.
pub fn run_sweep(s: &Scenario) -> Vec<SweepRow> {
    let mut modes = s.experiment.modes.clone();
    modes.sort();
    modes.dedup();
    let grid = s.grid();
    let per_point: Vec<Vec<SweepRow>> =
        grid.par_iter().map(|p| sweep_point(s, p, &modes)).collect();
    per_point.into_iter().flatten().collect()
}

fn sweep_point(s: &Scenario, p: &GridPoint, modes: &[Mode]) -> Vec<SweepRow> {
    let id = point_id(s, p);
    let setup = s.setup(p);
    let (distance_km, link_km, pcol) = match &s.network {
        NetworkSpec::Chain(c) => (
            p.distance
                .or(c.distance_km)
                .filter(|_| p.switches.is_none()),
            Some(p.link_km.unwrap_or(c.link.d_km)),
            Some(p.pcol.unwrap_or(c.link.pcol)),
        ),
        NetworkSpec::Explicit { .. } => (None, None, p.pcol),
    };
    modes
        .iter()
        .map(|&mode| {
            let outcome = setup.as_ref().map_err(|e| e.to_string()).and_then(|setup| {
                let analytic = analyze_setup(setup).map_err(|e| e.to_string())?;
                let want = match mode {
                    Mode::Proposed => analytic.t_swap,
                    Mode::Baseline => analytic.t_swap_baseline,
                };
                monte_carlo(
                    setup,
                    mode,
                    s.experiment.n_reps,
                    s.experiment.seed,
                    SimOptions::default(),
                )
                .map(|r| (r, want))
                .map_err(|e| e.to_string())
            });
            SweepRow {
                point: *p,
                scenario_id: id.clone(),
                mode,
                distance_km,
                link_km,
                switches: setup.as_ref().ok().map(|x| x.switches()),
                nq: p.nq.unwrap_or(s.defaults.nq),
                pcol,
                pswap: p.pswap.unwrap_or(s.defaults.pswap),
                outcome,
            }
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per grid point and mode, in grid order; blank cells where a value
/// does not apply.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "D_km",
        "l_km",
        "switches",
        "nq",
        "pcol",
        "pswap",
        "scenario_id",
        "mode",
        "n_reps",
        "mean_delay_s",
        "stderr_s",
        "analytic_delay_s",
        "quantum_fraction",
        "decoherence_violations",
        "error",
    ])?;
    for r in rows {
        let mut rec = vec![
            opt(r.distance_km),
            opt(r.link_km),
            opt(r.switches),
            r.nq.to_string(),
            opt(r.pcol),
            r.pswap.to_string(),
            r.scenario_id.clone(),
            r.mode.to_string(),
        ];
        match &r.outcome {
            Ok((rep, want)) => rec.extend([
                rep.n_reps.to_string(),
                rep.swap.mean.to_string(),
                rep.swap.se().to_string(),
                want.to_string(),
                rep.quantum_fraction.ratio().to_string(),
                rep.decoherence_violations.to_string(),
                String::new(),
            ]),
            Err(e) => rec.extend([
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ]),
        }
        w.write_record(&rec)?;
    }
    finish(w)
}
