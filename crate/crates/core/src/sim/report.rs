use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::network::{run_network, NetworkOptions, NetworkRun};
use super::timing::{MessageStats, TimingModel, TimingSample};
use super::{SimError, SimSetup};
use crate::codec::MessageType;

/// Running mean and variance (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Estimate {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Estimate) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let tol = k * self.se();
        (self.mean - target).abs() <= tol.max(1e-12 * target.abs())
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} ± {:.2e}", self.mean, self.se())
    }
}

/// Ratio of two per-replication means, Σx/Σy, with a delta-method error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RatioEstimate {
    pub n: u64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl RatioEstimate {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    pub fn merge(&mut self, o: &RatioEstimate) {
        self.n += o.n;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
    }

    pub fn ratio(&self) -> f64 {
        if self.sy == 0.0 {
            0.0
        } else {
            self.sx / self.sy
        }
    }

    pub fn se(&self) -> f64 {
        if self.n < 2 || self.sy == 0.0 {
            return 0.0;
        }
        let n = self.n as f64;
        let r = self.ratio();
        let ybar = self.sy / n;
        // Residual variance of x - r y.
        let ss = self.sxx - 2.0 * r * self.sxy + r * r * self.syy;
        let var = (ss / (n - 1.0)).max(0.0);
        (var / n).sqrt() / ybar
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Proposed,
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Also run the protocol state machines (proposed mode only).
    pub network: bool,
}

/// Aggregate of the event-driven protocol runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkSummary {
    pub runs: u64,
    pub completed: u64,
    pub protocol_time: Estimate,
    pub frames: BTreeMap<MessageType, u64>,
    pub retransmissions: u64,
    pub corrupted: u64,
    pub collisions: u64,
    pub max_level: u8,
    pub steps: u64,
}

impl NetworkSummary {
    fn add(&mut self, r: &NetworkRun) {
        self.runs += 1;
        if r.completed {
            self.completed += 1;
            self.protocol_time.push(r.protocol_time);
        }
        for (k, v) in &r.frames {
            *self.frames.entry(*k).or_default() += v;
        }
        self.retransmissions += r.retransmissions;
        self.corrupted += r.corrupted;
        self.collisions += r.collisions;
        self.max_level = self.max_level.max(r.max_level);
        self.steps += r.steps;
    }

    pub fn total_frames(&self) -> u64 {
        self.frames.values().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub mode: Mode,
    pub n_reps: u64,
    pub discovery: Estimate,
    pub establishment: Estimate,
    pub ptp: Estimate,
    pub swap: Estimate,
    pub swap_quantum: Estimate,
    pub total: Estimate,
    pub quantum_fraction: RatioEstimate,
    pub messages: MessageStats,
    pub swap_attempts: u64,
    pub swap_failures: u64,
    pub t_coherence: f64,
    pub decoherence_violations: u64,
    /// End-to-end swap delay of every replication, in replication order.
    pub swap_samples: Vec<f64>,
    pub network: Option<NetworkSummary>,
}

impl SimReport {
    fn empty(mode: Mode, t_coherence: f64) -> Self {
        SimReport {
            mode,
            n_reps: 0,
            discovery: Estimate::default(),
            establishment: Estimate::default(),
            ptp: Estimate::default(),
            swap: Estimate::default(),
            swap_quantum: Estimate::default(),
            total: Estimate::default(),
            quantum_fraction: RatioEstimate::default(),
            messages: MessageStats::default(),
            swap_attempts: 0,
            swap_failures: 0,
            t_coherence,
            decoherence_violations: 0,
            swap_samples: Vec::new(),
            network: None,
        }
    }

    fn add(&mut self, rep: &Replication) {
        let s = &rep.timing;
        self.n_reps += 1;
        self.discovery.push(s.discovery);
        self.establishment.push(s.establishment);
        self.ptp.push(s.ptp);
        self.swap.push(s.swap);
        self.swap_quantum.push(s.swap_quantum);
        self.total.push(s.total());
        self.quantum_fraction.push(s.swap_quantum, s.swap);
        self.messages.classical.merge(&rep.messages.classical);
        self.messages.quantum.merge(&rep.messages.quantum);
        self.messages.baseline.merge(&rep.messages.baseline);
        self.messages.retransmissions += rep.messages.retransmissions;
        self.swap_attempts += u64::from(s.swap_attempts);
        self.swap_failures += u64::from(s.swap_failures);
        if s.swap > self.t_coherence {
            self.decoherence_violations += 1;
        }
        self.swap_samples.push(s.swap);
        if let Some(n) = &rep.network {
            self.network
                .get_or_insert_with(NetworkSummary::default)
                .add(n);
        }
    }
}

struct Replication {
    timing: TimingSample,
    messages: MessageStats,
    network: Option<NetworkRun>,
}

fn replicate(
    setup: &SimSetup,
    model: &TimingModel,
    mode: Mode,
    seed: u64,
    opts: SimOptions,
) -> Result<Replication, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut messages = MessageStats::default();
    let timing = match mode {
        Mode::Proposed => model.sample_proposed(&mut rng, &mut messages),
        Mode::Baseline => model.sample_baseline(&mut rng, &mut messages),
    };
    let network = if opts.network && mode == Mode::Proposed {
        let run = run_network(setup, &mut rng, &NetworkOptions::default())?;
        Some(run)
    } else {
        None
    };
    Ok(Replication {
        timing,
        messages,
        network,
    })
}

/// Replays replication `seed` of the proposed stack with the protocol trace on.
pub fn traced_run(setup: &SimSetup, seed: u64) -> Result<NetworkRun, SimError> {
    let model = TimingModel::new(setup)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.sample_proposed(&mut rng, &mut MessageStats::default());
    let opts = NetworkOptions {
        trace: true,
        ..NetworkOptions::default()
    };
    run_network(setup, &mut rng, &opts)
}

/// One replication of the proposed stack.
pub fn run_proposed(setup: &SimSetup, seed: u64) -> Result<SimReport, SimError> {
    monte_carlo(setup, Mode::Proposed, 1, seed, SimOptions { network: true })
}

/// One replication of the reference wrapper.
pub fn run_baseline(setup: &SimSetup, seed: u64) -> Result<SimReport, SimError> {
    monte_carlo(setup, Mode::Baseline, 1, seed, SimOptions::default())
}

/// `n_reps` replications seeded `base_seed + i`, run in parallel and folded in
/// replication order so the report does not depend on scheduling.
pub fn monte_carlo(
    setup: &SimSetup,
    mode: Mode,
    n_reps: u64,
    base_seed: u64,
    opts: SimOptions,
) -> Result<SimReport, SimError> {
    if n_reps == 0 {
        return Err(SimError::Invalid("n_reps must be at least 1".into()));
    }
    let model = TimingModel::new(setup)?;
    let reps: Vec<Result<Replication, SimError>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            replicate(setup, &model, mode, base_seed.wrapping_add(i), opts).map_err(|e| {
                SimError::Replication {
                    index: i,
                    source: Box::new(e),
                }
            })
        })
        .collect();
    let mut report = SimReport::empty(mode, setup.t_coherence);
    for r in reps {
        report.add(&r?);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoherenceSummary {
    pub runs: u64,
    pub violations: u64,
}

impl DecoherenceSummary {
    pub fn fraction(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.violations as f64 / self.runs as f64
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Counts replications whose end-to-end swap delay exceeds `t_coherence`.
pub fn check_decoherence(report: &SimReport, t_coherence: f64) -> DecoherenceSummary {
    DecoherenceSummary {
        runs: report.swap_samples.len() as u64,
        violations: report
            .swap_samples
            .iter()
            .filter(|&&s| s > t_coherence)
            .count() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Estimate::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Estimate::default(), Estimate::default());
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-13);
    }

    #[test]
    fn ratio_of_proportional_series_has_no_error() {
        let mut r = RatioEstimate::default();
        for i in 1..50 {
            r.push(0.25 * i as f64, i as f64);
        }
        assert!((r.ratio() - 0.25).abs() < 1e-15);
        assert!(r.se() < 1e-12);
    }
}
