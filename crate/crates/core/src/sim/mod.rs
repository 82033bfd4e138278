//! Seeded Monte-Carlo simulation.
//!
//! Two layers share one random stream per replication:
//!
//! * [`timing`] walks the critical path of a circuit (discovery, establishment,
//!   then the swap levels with restart-on-failure) sampling every classical and
//!   quantum transfer from the channel model. Its phase delays are the ones
//!   compared against the closed forms.
//! * [`network`] is an event-driven run of the real protocol state machines over
//!   the topology, with bit-level frame corruption and per-link FIFO delivery. It
//!   supplies frame and retransmission counts, traces, liveness and level checks.

use thiserror::Error;

use crate::delay::{DelayError, Medium, PacketParams};
use crate::protocols::ProtocolConfig;
use crate::topology::{
    run_qstp, tree_path, ActiveTree, LinkParams, NetworkTopology, TopologyError,
};

pub mod channel;
pub mod network;
pub mod queue;
pub mod report;
pub mod timing;

pub use report::{
    check_decoherence, monte_carlo, run_baseline, run_proposed, traced_run, DecoherenceSummary,
    Estimate, Mode, RatioEstimate, SimOptions, SimReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("event cap of {0} steps exceeded")]
    MaxStepsExceeded(u64),
    #[error("replication {index}: {source}")]
    Replication { index: u64, source: Box<SimError> },
}

/// Everything one replication needs.
#[derive(Clone, Debug)]
pub struct SimSetup {
    pub topology: NetworkTopology,
    pub tree: ActiveTree,
    pub initiator: usize,
    pub responder: usize,
    /// Node indices from initiator to responder.
    pub path: Vec<usize>,
    /// Link indices along `path`.
    pub path_links: Vec<usize>,
    pub pkt: PacketParams,
    pub medium: Medium,
    pub p_swap: f64,
    pub protocol: ProtocolConfig,
    pub t_coherence: f64,
    pub max_steps: u64,
    pub max_q_retries: u32,
}

impl SimSetup {
    pub fn new(
        topology: NetworkTopology,
        initiator: usize,
        responder: usize,
    ) -> Result<Self, SimError> {
        let tree = run_qstp(&topology)?;
        let path = tree_path(&topology, &tree, initiator, responder)?;
        if path.len() < 2 {
            return Err(SimError::Invalid("initiator and responder coincide".into()));
        }
        if let Some(&u) = path[1..path.len() - 1]
            .iter()
            .find(|&&n| topology.is_user(n))
        {
            return Err(SimError::Invalid(format!(
                "path transits user {}",
                topology.name(u)
            )));
        }
        let path_links = path
            .windows(2)
            .map(|w| {
                tree.active_links
                    .iter()
                    .copied()
                    .find(|&l| {
                        let k = &topology.links[l];
                        (k.a, k.b) == (w[0], w[1]) || (k.a, k.b) == (w[1], w[0])
                    })
                    .expect("tree path follows active links")
            })
            .collect();
        Ok(SimSetup {
            topology,
            tree,
            initiator,
            responder,
            path,
            path_links,
            pkt: PacketParams::default(),
            medium: Medium::default(),
            p_swap: 1.0,
            protocol: ProtocolConfig::default(),
            t_coherence: f64::INFINITY,
            max_steps: 1_000_000,
            max_q_retries: 10_000,
        })
    }

    /// Homogeneous chain of `switches` switches between `alice` and `bob`.
    pub fn chain(switches: usize, link: LinkParams) -> Result<Self, SimError> {
        let t = NetworkTopology::chain(switches, link);
        let a = t.node_by_name("alice").expect("chain has alice");
        let b = t.node_by_name("bob").expect("chain has bob");
        Self::new(t, a, b)
    }

    pub fn switches(&self) -> usize {
        self.path.len() - 2
    }

    pub fn links(&self) -> Vec<LinkParams> {
        self.path_links
            .iter()
            .map(|&l| self.topology.links[l].params)
            .collect()
    }

    pub fn with_p_swap(mut self, p: f64) -> Self {
        self.p_swap = p;
        self
    }

    pub fn with_qubits(mut self, n: u32) -> Self {
        self.pkt.qubits = n;
        self.protocol.qubits = n;
        self
    }

    pub fn with_medium(mut self, m: Medium) -> Self {
        self.medium = m;
        self
    }

    pub fn check(&self) -> Result<(), SimError> {
        if !(self.p_swap > 0.0 && self.p_swap <= 1.0) {
            return Err(SimError::Delay(DelayError::InvalidPSwap(self.p_swap)));
        }
        if self.pkt.qubits == 0 {
            return Err(SimError::Invalid("at least one qubit per packet".into()));
        }
        Ok(())
    }
}
