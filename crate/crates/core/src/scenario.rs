//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! [topology]
//! user alice 02:00:00:00:00:01
//! switch sw1 02:00:00:00:01:01
//! link alice sw1 classical quantum d=10 rb=1e9 rq=1e6 pb=1e-6 pq=auto tproc=5e-6 tbo=1e-6 pcol=0.1 cc=1 cq=1
//!
//! [defaults]
//! nq = 1
//! pswap = 0.9
//!
//! [experiment]
//! id = demo
//! mode = simulate
//! n_reps = 1000
//! ```
//!
//! `[chain]` replaces `[topology]` with a homogeneous chain: `l` (link length,
//! km) plus either `D` (end-to-end distance, `S = ceil(D / l)`) or `switches`,
//! and any link key. Sweep axes are comma lists in `[experiment]`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{MacAddr, FRAME_BITS};
use crate::delay::{switches_for, Medium, PacketParams};
use crate::protocols::ProtocolConfig;
use crate::sim::{Mode, SimError, SimSetup};
use crate::topology::{fiber_loss, validate_topology, LinkParams, NetworkTopology, NodeKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}, column {col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{0}")]
    Semantic(String),
}

fn sem<T>(m: String) -> Result<T, ScenarioError> {
    Err(ScenarioError::Semantic(m))
}

fn err<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Parse {
        line,
        col,
        msg: msg.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentMode {
    Analyze,
    Simulate,
    Compare,
    Sweep,
}

impl FromStr for ExperimentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analyze" => Ok(Self::Analyze),
            "simulate" => Ok(Self::Simulate),
            "compare" => Ok(Self::Compare),
            "sweep" => Ok(Self::Sweep),
            _ => Err(format!(
                "unknown mode '{s}' (analyze, simulate, compare, sweep)"
            )),
        }
    }
}

/// The `[defaults]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct Defaults {
    pub nb: u32,
    pub nq: u32,
    pub pswap: f64,
    pub t_coherence: f64,
    pub refractive_index: f64,
    /// Fiber attenuation, dB/km, used by `pq=auto`.
    pub alpha: f64,
    pub t_keepalive: f64,
    pub k_miss: u32,
    pub max_q_retries: u32,
    pub max_steps: u64,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            nb: FRAME_BITS,
            nq: 1,
            pswap: 1.0,
            t_coherence: f64::INFINITY,
            refractive_index: Medium::FIBER.refractive_index,
            alpha: 0.2,
            t_keepalive: 0.1,
            k_miss: 3,
            max_q_retries: 10_000,
            max_steps: 1_000_000,
        }
    }
}

/// Documented defaults, one per line, for `--help`.
pub const DEFAULTS_HELP: &str = "\
[defaults]  nb=320 nq=1 pswap=1 t_coherence=inf n=1.468 alpha=0.2 t_keepalive=0.1 k_miss=3 max_q_retries=10000 max_steps=1000000
[experiment] id=<file stem> mode=simulate n_reps=1000 seed=0 modes=proposed,baseline
link keys   d=<km, required> rb=1e9 rq=1e9 pb=0 pq=0 (or auto) tproc=0 tbo=0 pcol=0 cc=1 cq=1";

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub distance_km: Option<f64>,
    pub switches: Option<usize>,
    /// Link template; `d_km` is the link length `l`.
    pub link: LinkParams,
    pub pq_auto: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSpec {
    Explicit {
        topology: NetworkTopology,
        initiator: usize,
        responder: usize,
    },
    Chain(ChainSpec),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Axes {
    pub distance: Vec<f64>,
    pub link_km: Vec<f64>,
    pub nq: Vec<u32>,
    pub pcol: Vec<f64>,
    pub pswap: Vec<f64>,
    pub switches: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub id: String,
    pub mode: ExperimentMode,
    pub n_reps: u64,
    pub seed: u64,
    pub modes: Vec<Mode>,
    pub axes: Axes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub network: NetworkSpec,
    pub defaults: Defaults,
    pub experiment: Experiment,
}

/// One point of the sweep grid; `None` keeps the scenario's own value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GridPoint {
    pub distance: Option<f64>,
    pub link_km: Option<f64>,
    pub nq: Option<u32>,
    pub pcol: Option<f64>,
    pub pswap: Option<f64>,
    pub switches: Option<usize>,
}

impl GridPoint {
    /// `key=value` pairs of the set axes, in axis order.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.distance {
            parts.push(format!("D={v}"));
        }
        if let Some(v) = self.link_km {
            parts.push(format!("l={v}"));
        }
        if let Some(v) = self.nq {
            parts.push(format!("nq={v}"));
        }
        if let Some(v) = self.pcol {
            parts.push(format!("pcol={v}"));
        }
        if let Some(v) = self.pswap {
            parts.push(format!("pswap={v}"));
        }
        if let Some(v) = self.switches {
            parts.push(format!("switches={v}"));
        }
        parts.join(";")
    }
}

/// Whitespace-separated tokens with 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn num<T: FromStr>(line: usize, col: usize, key: &str, v: &str) -> Result<T, ScenarioError> {
    v.parse()
        .or_else(|_| err(line, col, format!("bad value '{v}' for {key}")))
}

fn real(line: usize, col: usize, key: &str, v: &str) -> Result<f64, ScenarioError> {
    match v {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => num(line, col, key, v),
    }
}

fn list<T>(
    line: usize,
    col: usize,
    key: &str,
    v: &str,
    f: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>, ScenarioError> {
    let items: Vec<&str> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return err(line, col, format!("sweep axis {key} is empty"));
    }
    items
        .into_iter()
        .map(|s| {
            f(s).ok_or(())
                .or_else(|_| err(line, col, format!("bad value '{s}' for {key}")))
        })
        .collect()
}

/// Applies one `key=value` link setting; returns false for unknown keys.
fn set_link_key(
    p: &mut LinkParams,
    pq_auto: &mut bool,
    key: &str,
    v: &str,
    line: usize,
    col: usize,
) -> Result<bool, ScenarioError> {
    let x = || real(line, col, key, v);
    match key {
        "rb" => p.rb = x()?,
        "rq" => p.rq = x()?,
        "pb" => p.pb = x()?,
        "pq" if v == "auto" => *pq_auto = true,
        "pq" => p.pq = x()?,
        "tproc" => p.tproc = x()?,
        "tbo" => p.tbo = x()?,
        "pcol" => p.pcol = x()?,
        "cc" => p.cc = x()?,
        "cq" => p.cq = x()?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// A link whose `pq=auto` waits for the attenuation from `[defaults]`.
struct AutoLoss {
    a: usize,
    b: usize,
    d_km: f64,
}

#[derive(Default)]
struct Builder {
    topology: Option<NetworkTopology>,
    auto_loss: Vec<AutoLoss>,
    chain: Option<(ChainSpec, bool)>,
    defaults: Defaults,
    id: Option<String>,
    mode: Option<ExperimentMode>,
    n_reps: Option<u64>,
    seed: Option<u64>,
    modes: Option<Vec<Mode>>,
    initiator: Option<(usize, usize, String)>,
    responder: Option<(usize, usize, String)>,
    axes: Axes,
    seen: BTreeSet<(String, String)>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Topology,
    Chain,
    Defaults,
    Experiment,
}

/// Parses and checks a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_named(text, "scenario")
}

/// As [`parse_scenario`], with `default_id` used when `[experiment]` names no id.
pub fn parse_scenario_named(text: &str, default_id: &str) -> Result<Scenario, ScenarioError> {
    let mut b = Builder::default();
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let trimmed = content.trim();
        if trimmed.starts_with('[') {
            let col = content.find('[').unwrap() + 1;
            let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) else {
                return err(line, col, "malformed section header");
            };
            section = match name.trim() {
                "topology" => {
                    if b.chain.is_some() {
                        return err(line, col, "[topology] and [chain] are exclusive");
                    }
                    b.topology.get_or_insert_with(NetworkTopology::default);
                    Section::Topology
                }
                "chain" => {
                    if b.topology.is_some() {
                        return err(line, col, "[topology] and [chain] are exclusive");
                    }
                    if b.chain.is_none() {
                        let spec = ChainSpec {
                            distance_km: None,
                            switches: None,
                            link: LinkParams::default(),
                            pq_auto: false,
                        };
                        b.chain = Some((spec, false));
                    }
                    Section::Chain
                }
                "defaults" => Section::Defaults,
                "experiment" => Section::Experiment,
                other => return err(line, col, format!("unknown section [{other}]")),
            };
            continue;
        }
        match section {
            Section::None => return err(line, 1, "content before any section"),
            Section::Topology => b.topology_line(line, content)?,
            _ => {
                let Some(eq) = content.find('=') else {
                    let col = content.len() - content.trim_start().len() + 1;
                    return err(line, col, "expected key = value");
                };
                let key = content[..eq].trim();
                let kcol = content.len() - content.trim_start().len() + 1;
                let vstart =
                    eq + 1 + (content[eq + 1..].len() - content[eq + 1..].trim_start().len());
                let value = content[eq + 1..].trim();
                let sec = match section {
                    Section::Chain => "chain",
                    Section::Defaults => "defaults",
                    _ => "experiment",
                };
                if !b.seen.insert((sec.to_owned(), key.to_owned())) {
                    return err(line, kcol, format!("duplicate key {key}"));
                }
                match section {
                    Section::Chain => b.chain_key(line, kcol, vstart + 1, key, value)?,
                    Section::Defaults => b.defaults_key(line, kcol, vstart + 1, key, value)?,
                    _ => b.experiment_key(line, kcol, vstart + 1, key, value)?,
                }
            }
        }
    }
    b.id.get_or_insert_with(|| default_id.to_owned());
    b.finish()
}

impl Builder {
    fn topology_line(&mut self, line: usize, content: &str) -> Result<(), ScenarioError> {
        let toks = tokens(content);
        let t = self.topology.as_mut().expect("inside [topology]");
        let (kcol, kw) = toks[0];
        match kw {
            "user" | "switch" => {
                if toks.len() != 3 {
                    return err(line, kcol, format!("expected '{kw} <name> <mac>'"));
                }
                let (ncol, name) = toks[1];
                let (mcol, mac) = toks[2];
                let mac: MacAddr = mac.parse().or_else(|e| err(line, mcol, format!("{e}")))?;
                if t.node_by_name(name).is_some() {
                    return err(line, ncol, format!("duplicate node name {name}"));
                }
                if let Some(n) = t.nodes.iter().find(|n| n.mac == mac) {
                    return err(line, mcol, format!("MAC {mac} already used by {}", n.name));
                }
                let kind = if kw == "user" {
                    NodeKind::User
                } else {
                    NodeKind::Switch
                };
                t.add_node(kind, name, mac);
            }
            "link" => {
                if toks.len() < 4 {
                    return err(
                        line,
                        kcol,
                        "expected 'link <a> <b> classical [quantum] key=value...'",
                    );
                }
                let mut ends = [0usize; 2];
                for (k, &(col, name)) in toks[1..3].iter().enumerate() {
                    ends[k] = t
                        .node_by_name(name)
                        .map_or_else(|| err(line, col, format!("unknown node {name}")), Ok)?;
                }
                let [a, b] = ends;
                if a == b {
                    return err(line, toks[2].0, "link from a node to itself");
                }
                if t.is_user(a) && t.is_user(b) {
                    return err(
                        line,
                        toks[1].0,
                        format!("user-user link {}-{} is not allowed", toks[1].1, toks[2].1),
                    );
                }
                let (ccol, c) = toks[3];
                if c != "classical" {
                    return err(
                        line,
                        ccol,
                        "every link carries a classical channel: expected 'classical'",
                    );
                }
                let mut rest = &toks[4..];
                let quantum = rest.first().is_some_and(|&(_, w)| w == "quantum");
                if quantum {
                    rest = &rest[1..];
                }
                let mut params = LinkParams::default();
                let mut pq_auto = false;
                let mut have_d = false;
                let mut keys = BTreeSet::new();
                for &(col, kv) in rest {
                    let Some((k, v)) = kv.split_once('=') else {
                        return err(line, col, format!("expected key=value, got '{kv}'"));
                    };
                    if !keys.insert(k) {
                        return err(line, col, format!("duplicate key {k}"));
                    }
                    let vcol = col + k.len() + 1;
                    if k == "d" {
                        params.d_km = real(line, vcol, k, v)?;
                        have_d = true;
                    } else if !set_link_key(&mut params, &mut pq_auto, k, v, line, vcol)? {
                        return err(line, col, format!("unknown link key {k}"));
                    }
                }
                if !have_d {
                    return err(line, kcol, "link needs d=<km>");
                }
                if let Err(m) = params.check() {
                    return err(line, kcol, m);
                }
                if t.links
                    .iter()
                    .any(|l| (l.a, l.b) == (a, b) || (l.a, l.b) == (b, a))
                {
                    return err(line, kcol, "duplicate link");
                }
                t.add_link(a, b, quantum, params);
                if pq_auto {
                    self.auto_loss.push(AutoLoss {
                        a,
                        b,
                        d_km: params.d_km,
                    });
                }
            }
            other => {
                return err(
                    line,
                    kcol,
                    format!("unknown declaration '{other}' (user, switch, link)"),
                )
            }
        }
        Ok(())
    }

    fn chain_key(
        &mut self,
        line: usize,
        kcol: usize,
        vcol: usize,
        key: &str,
        v: &str,
    ) -> Result<(), ScenarioError> {
        let (spec, have_l) = self.chain.as_mut().expect("inside [chain]");
        match key {
            "D" => spec.distance_km = Some(real(line, vcol, key, v)?),
            "l" => {
                spec.link.d_km = real(line, vcol, key, v)?;
                *have_l = true;
            }
            "switches" => spec.switches = Some(num(line, vcol, key, v)?),
            _ => {
                if !set_link_key(&mut spec.link, &mut spec.pq_auto, key, v, line, vcol)? {
                    return err(line, kcol, format!("unknown [chain] key {key}"));
                }
            }
        }
        Ok(())
    }

    fn defaults_key(
        &mut self,
        line: usize,
        kcol: usize,
        vcol: usize,
        key: &str,
        v: &str,
    ) -> Result<(), ScenarioError> {
        let d = &mut self.defaults;
        match key {
            "nb" => d.nb = num(line, vcol, key, v)?,
            "nq" => d.nq = num(line, vcol, key, v)?,
            "pswap" => d.pswap = real(line, vcol, key, v)?,
            "t_coherence" => d.t_coherence = real(line, vcol, key, v)?,
            "n" => d.refractive_index = real(line, vcol, key, v)?,
            "alpha" => d.alpha = real(line, vcol, key, v)?,
            "t_keepalive" => d.t_keepalive = real(line, vcol, key, v)?,
            "k_miss" => d.k_miss = num(line, vcol, key, v)?,
            "max_q_retries" => d.max_q_retries = num(line, vcol, key, v)?,
            "max_steps" => d.max_steps = num(line, vcol, key, v)?,
            _ => return err(line, kcol, format!("unknown [defaults] key {key}")),
        }
        Ok(())
    }

    fn experiment_key(
        &mut self,
        line: usize,
        kcol: usize,
        vcol: usize,
        key: &str,
        v: &str,
    ) -> Result<(), ScenarioError> {
        let real_of = |s: &str| match s {
            "inf" => Some(f64::INFINITY),
            _ => s.parse().ok(),
        };
        match key {
            "id" => {
                if v.is_empty() || v.contains(|c: char| c.is_whitespace() || c == ',') {
                    return err(line, vcol, "id must be a non-empty word without commas");
                }
                self.id = Some(v.to_owned());
            }
            "mode" => self.mode = Some(v.parse().or_else(|m: String| err(line, vcol, m))?),
            "n_reps" => {
                let n: u64 = num(line, vcol, key, v)?;
                if n == 0 {
                    return err(line, vcol, "n_reps must be at least 1");
                }
                self.n_reps = Some(n);
            }
            "seed" => self.seed = Some(num(line, vcol, key, v)?),
            "modes" => {
                let m = list(line, vcol, key, v, |s| match s {
                    "proposed" => Some(Mode::Proposed),
                    "baseline" => Some(Mode::Baseline),
                    _ => None,
                })?;
                self.modes = Some(m);
            }
            "initiator" => self.initiator = Some((line, vcol, v.to_owned())),
            "responder" => self.responder = Some((line, vcol, v.to_owned())),
            "D" => self.axes.distance = list(line, vcol, key, v, real_of)?,
            "l" => self.axes.link_km = list(line, vcol, key, v, real_of)?,
            "nq" => self.axes.nq = list(line, vcol, key, v, |s| s.parse().ok())?,
            "pcol" => self.axes.pcol = list(line, vcol, key, v, real_of)?,
            "pswap" => self.axes.pswap = list(line, vcol, key, v, real_of)?,
            "switches" => self.axes.switches = list(line, vcol, key, v, |s| s.parse().ok())?,
            _ => return err(line, kcol, format!("unknown [experiment] key {key}")),
        }
        Ok(())
    }

    fn finish(self) -> Result<Scenario, ScenarioError> {
        let d = self.defaults;
        if !(d.pswap > 0.0 && d.pswap <= 1.0) {
            return sem(format!("pswap={} must lie in (0, 1]", d.pswap));
        }
        if d.nq == 0 || d.nb == 0 {
            return sem("nb and nq must be at least 1".into());
        }
        if d.t_coherence.is_nan() || d.t_coherence <= 0.0 {
            return sem("t_coherence must be positive".into());
        }
        if d.refractive_index.is_nan()
            || d.refractive_index < 1.0
            || d.alpha.is_nan()
            || d.alpha < 0.0
        {
            return sem("n must be >= 1 and alpha >= 0".into());
        }
        if d.t_keepalive.is_nan()
            || d.t_keepalive <= 0.0
            || d.k_miss == 0
            || d.max_q_retries == 0
            || d.max_steps == 0
        {
            return sem("t_keepalive, k_miss, max_q_retries and max_steps must be positive".into());
        }
        let axes = self.axes;
        for &p in &axes.pswap {
            if !(p > 0.0 && p <= 1.0) {
                return sem(format!("pswap axis value {p} must lie in (0, 1]"));
            }
        }
        if axes.pcol.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return sem("pcol axis values must lie in [0, 1]".into());
        }
        if axes.nq.contains(&0) {
            return sem("nq axis values must be at least 1".into());
        }

        let network = match (self.topology, self.chain) {
            (Some(mut t), None) => {
                for l in &self.auto_loss {
                    let idx = t
                        .links
                        .iter()
                        .position(|k| (k.a, k.b) == (l.a, l.b))
                        .expect("link recorded");
                    t.links[idx].params.pq = fiber_loss(l.d_km, d.alpha);
                }
                if let Some(v) = validate_topology(&t).into_iter().next() {
                    return sem(format!("invalid topology: {v}"));
                }
                if !axes.distance.is_empty()
                    || !axes.link_km.is_empty()
                    || !axes.switches.is_empty()
                {
                    return sem("axes D, l and switches need a [chain] section".into());
                }
                let users: Vec<usize> = (0..t.nodes.len()).filter(|&n| t.is_user(n)).collect();
                let pick = |which: &Option<(usize, usize, String)>,
                            fallback: Option<usize>,
                            role: &str| match which {
                    Some((line, col, name)) => match t.node_by_name(name) {
                        Some(n) if t.is_user(n) => Ok(n),
                        Some(_) => err(*line, *col, format!("{role} {name} is not a user")),
                        None => err(*line, *col, format!("unknown node {name}")),
                    },
                    None => fallback.map_or_else(
                        || {
                            sem(format!(
                                "{role} must be named when there are not exactly two users"
                            ))
                        },
                        Ok,
                    ),
                };
                let two = users.len() == 2;
                let initiator = pick(&self.initiator, two.then(|| users[0]), "initiator")?;
                let responder = pick(&self.responder, two.then(|| users[1]), "responder")?;
                if initiator == responder {
                    return sem("initiator and responder must differ".into());
                }
                NetworkSpec::Explicit {
                    topology: t,
                    initiator,
                    responder,
                }
            }
            (None, Some((mut spec, have_l))) => {
                if !have_l {
                    return sem("[chain] needs l (link length, km)".into());
                }
                if spec.distance_km.is_some() && spec.switches.is_some() {
                    return sem("[chain] takes D or switches, not both".into());
                }
                if spec.distance_km.is_none()
                    && spec.switches.is_none()
                    && axes.distance.is_empty()
                    && axes.switches.is_empty()
                {
                    return sem("[chain] needs D or switches".into());
                }
                if let Err(m) = spec.link.check() {
                    return sem(format!("[chain]: {m}"));
                }
                if self.initiator.is_some() || self.responder.is_some() {
                    return sem(
                        "initiator/responder apply to [topology] only; a chain runs alice to bob"
                            .into(),
                    );
                }
                if spec.pq_auto {
                    spec.link.pq = fiber_loss(spec.link.d_km, d.alpha);
                }
                NetworkSpec::Chain(spec)
            }
            (None, None) => return sem("a scenario needs a [topology] or [chain] section".into()),
            (Some(_), Some(_)) => unreachable!("rejected while parsing"),
        };

        let mode = self.mode.unwrap_or(ExperimentMode::Simulate);
        let has_axes = !(axes.distance.is_empty()
            && axes.link_km.is_empty()
            && axes.nq.is_empty()
            && axes.pcol.is_empty()
            && axes.pswap.is_empty()
            && axes.switches.is_empty());
        if mode == ExperimentMode::Sweep && !has_axes {
            return sem(
                "mode = sweep needs at least one axis (D, l, nq, pcol, pswap, switches)".into(),
            );
        }
        Ok(Scenario {
            network,
            defaults: d,
            experiment: Experiment {
                id: self.id.unwrap_or_else(|| "scenario".to_owned()),
                mode,
                n_reps: self.n_reps.unwrap_or(1000),
                seed: self.seed.unwrap_or(0),
                modes: self
                    .modes
                    .unwrap_or_else(|| vec![Mode::Proposed, Mode::Baseline]),
                axes,
            },
        })
    }
}

fn sorted<T: Copy + PartialOrd>(v: &[T]) -> Vec<Option<T>> {
    if v.is_empty() {
        return vec![None];
    }
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("axis values are comparable"));
    v.dedup_by(|a, b| a == b);
    v.into_iter().map(Some).collect()
}

impl Scenario {
    /// Cartesian product of the axes, in lexicographic axis order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let a = &self.experiment.axes;
        let mut out = Vec::new();
        for &distance in &sorted(&a.distance) {
            for &link_km in &sorted(&a.link_km) {
                for &nq in &sorted(&a.nq) {
                    for &pcol in &sorted(&a.pcol) {
                        for &pswap in &sorted(&a.pswap) {
                            for &switches in &sorted(&a.switches) {
                                out.push(GridPoint {
                                    distance,
                                    link_km,
                                    nq,
                                    pcol,
                                    pswap,
                                    switches,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn medium(&self) -> Medium {
        Medium {
            refractive_index: self.defaults.refractive_index,
        }
    }

    /// The concrete network and run settings at one grid point.
    pub fn setup(&self, p: &GridPoint) -> Result<SimSetup, SimError> {
        let d = &self.defaults;
        let nq = p.nq.unwrap_or(d.nq);
        let mut setup = match &self.network {
            NetworkSpec::Explicit {
                topology,
                initiator,
                responder,
            } => {
                let mut t = topology.clone();
                if let Some(pcol) = p.pcol {
                    t.links.iter_mut().for_each(|l| l.params.pcol = pcol);
                }
                SimSetup::new(t, *initiator, *responder)?
            }
            NetworkSpec::Chain(spec) => {
                let mut link = spec.link;
                if let Some(l) = p.link_km {
                    link.d_km = l;
                }
                if spec.pq_auto {
                    link.pq = fiber_loss(link.d_km, d.alpha);
                }
                if let Some(pcol) = p.pcol {
                    link.pcol = pcol;
                }
                let switches = match (p.switches, p.distance.or(spec.distance_km)) {
                    (Some(s), _) => s,
                    (None, Some(dist)) => {
                        if link.d_km.is_nan() || link.d_km <= 0.0 {
                            return Err(SimError::Invalid("link length must be positive".into()));
                        }
                        switches_for(dist, link.d_km) as usize
                    }
                    (None, None) => spec.switches.expect("checked at parse time"),
                };
                SimSetup::chain(switches, link)?
            }
        };
        setup.pkt = PacketParams {
            bits: d.nb,
            qubits: nq,
        };
        setup.medium = self.medium();
        setup.p_swap = p.pswap.unwrap_or(d.pswap);
        setup.protocol = ProtocolConfig {
            qubits: nq,
            t_keepalive: d.t_keepalive,
            k_miss: d.k_miss,
            ..ProtocolConfig::default()
        };
        setup.t_coherence = d.t_coherence;
        setup.max_steps = d.max_steps;
        setup.max_q_retries = d.max_q_retries;
        Ok(setup)
    }
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Analyze => "analyze",
            Self::Simulate => "simulate",
            Self::Compare => "compare",
            Self::Sweep => "sweep",
        })
    }
}
