//! Per-node state machines for Discovery, Path Establishment, point-to-point
//! entanglement and sequential swapping.
//!
//! A [`Node`] consumes one [`Input`] at a time and returns the [`Output`]s it
//! produces. Nodes hold no randomness and no clock: the current time is part of
//! every input, and swap outcomes come back as [`Input::SwapAttemptResult`].

use std::collections::BTreeMap;
use std::fmt;

use crate::codec::{MacAddr, MessageType, QpFrame};
use crate::topology::{ActiveTree, NetworkTopology, NodeKind};

mod discovery;
mod establish;
mod swap;

pub type PortId = u16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    /// Qubits per quantum packet.
    pub qubits: u32,
    pub t_keepalive: f64,
    pub k_miss: u32,
    pub discovery_timeout: f64,
    pub establishment_timeout: f64,
    /// How many times the initiator restarts after an interrupted circuit.
    pub max_restarts: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            qubits: 1,
            t_keepalive: 0.1,
            k_miss: 3,
            discovery_timeout: 1.0,
            establishment_timeout: 1.0,
            max_restarts: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    Discovery(u64),
    Establishment(u64),
    KeepAlive,
    /// The quantum packet on `port` exhausted its retries.
    QuantumTimeout(PortId),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    /// Ask a user to build end-to-end entanglement with `dst`.
    Connect {
        dst: MacAddr,
        e2e_id: u64,
    },
    FrameIn {
        port: PortId,
        frame: QpFrame,
    },
    QubitPacketIn {
        port: PortId,
        received: u32,
    },
    SwapAttemptResult {
        e2e_id: u64,
        success: bool,
    },
    TimerExpired(TimerKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Notification {
    DiscoveryComplete,
    DiscoveryFailed,
    EstablishmentComplete,
    EstablishmentTimeout,
    EstablishmentInterrupted,
    EntanglementReady,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolFault {
    TokenConflict { e2e_id: u64, token_id: u16 },
    LevelOverflow { e2e_id: u64, level: u8, max: u8 },
    StaleCircuit { e2e_id: u64 },
    NoRoute { e2e_id: u64, dst: MacAddr },
}

impl fmt::Display for ProtocolFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolFault::TokenConflict { e2e_id, token_id } => {
                write!(
                    f,
                    "token conflict on circuit {e2e_id:016x}, token {token_id}"
                )
            }
            ProtocolFault::LevelOverflow { e2e_id, level, max } => {
                write!(f, "level {level} exceeds {max} on circuit {e2e_id:016x}")
            }
            ProtocolFault::StaleCircuit { e2e_id } => {
                write!(f, "circuit {e2e_id:016x} already exists")
            }
            ProtocolFault::NoRoute { e2e_id, dst } => {
                write!(f, "no route to {dst} for circuit {e2e_id:016x}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    FrameOut {
        port: PortId,
        frame: QpFrame,
    },
    QubitPacketOut {
        port: PortId,
        qubits: u32,
    },
    /// The node wants to attempt a Bell-state measurement; the driver answers
    /// with [`Input::SwapAttemptResult`].
    SwapAttempt {
        e2e_id: u64,
        level: u8,
    },
    NotifyUser(Notification),
    SetTimer {
        kind: TimerKind,
        after: f64,
    },
    Fault(ProtocolFault),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortKind {
    Eth,
    Qeth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacEntry {
    pub port: PortId,
    pub kind: PortKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PortInfo {
    pub id: PortId,
    /// Classical link with a quantum twin.
    pub paired: bool,
    pub forwarding: bool,
}

/// Which edge switch created a token and which way it travels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    /// Created next to the initiator, moves downstream.
    FromLeft,
    /// Created next to the responder, moves upstream.
    FromRight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token {
    pub token_id: u16,
    pub direction: Direction,
    pub level: u8,
}

/// Token ids of a circuit: left is even, right is odd.
pub fn token_ids(e2e_id: u64) -> (u16, u16) {
    let base = (e2e_id as u16) << 1;
    (base, base | 1)
}

fn token_direction(token_id: u16) -> Direction {
    if token_id & 1 == 0 {
        Direction::FromLeft
    } else {
        Direction::FromRight
    }
}

/// State of the point-to-point entanglement on one adjacent link, as seen by
/// this node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkState {
    Idle,
    /// Initiator: request sent.
    AwaitReply {
        seq: u32,
    },
    /// Responder: handshake acknowledged, qubits expected.
    AwaitQubits {
        seq: u32,
    },
    /// Initiator: qubits sent, confirmation expected.
    AwaitConfirm {
        seq: u32,
    },
    Entangled,
    /// Used up by a successful swap.
    Consumed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapLock {
    Idle,
    /// SwappingRequest sent toward `toward`.
    Requested {
        toward: Side,
        seq: u32,
        level: u8,
    },
    /// Neighbor on `side` was allowed to consume the shared link.
    GrantedTo {
        side: Side,
    },
    Swapping {
        toward: Option<Side>,
        level: u8,
    },
    AwaitTokenAck,
    AwaitErrorAcks {
        pending: u8,
    },
    AwaitCompleteAcks {
        pending: u8,
    },
}

/// One entanglement-table entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub e2e_id: u64,
    pub upstream: Option<PortId>,
    pub downstream: Option<PortId>,
    pub up_mac: Option<MacAddr>,
    pub down_mac: Option<MacAddr>,
    /// 0 for the initiator, 1..=S for switches, S+1 for the responder.
    pub position: u8,
    /// Number of switches, known once the reply has been seen.
    pub switches: Option<u8>,
    pub established: bool,
    pub up_link: LinkState,
    pub down_link: LinkState,
    pub tokens: Vec<Token>,
    pub lock: SwapLock,
    /// SwappingRequest that arrived while the lock was busy.
    pub deferred: Option<(PortId, QpFrame)>,
    /// Final swap done (switch) or entanglement ready (user).
    pub finished: bool,
}

impl Circuit {
    fn new(e2e_id: u64, position: u8) -> Self {
        Circuit {
            e2e_id,
            upstream: None,
            downstream: None,
            up_mac: None,
            down_mac: None,
            position,
            switches: None,
            established: false,
            up_link: LinkState::Idle,
            down_link: LinkState::Idle,
            tokens: Vec::new(),
            lock: SwapLock::Idle,
            deferred: None,
            finished: false,
        }
    }

    fn port(&self, side: Side) -> Option<PortId> {
        match side {
            Side::Up => self.upstream,
            Side::Down => self.downstream,
        }
    }

    fn side_of(&self, port: PortId) -> Option<Side> {
        if self.upstream == Some(port) {
            Some(Side::Up)
        } else if self.downstream == Some(port) {
            Some(Side::Down)
        } else {
            None
        }
    }

    fn link(&self, side: Side) -> LinkState {
        match side {
            Side::Up => self.up_link,
            Side::Down => self.down_link,
        }
    }

    fn link_mut(&mut self, side: Side) -> &mut LinkState {
        match side {
            Side::Up => &mut self.up_link,
            Side::Down => &mut self.down_link,
        }
    }

    fn max_level(&self) -> u8 {
        self.switches.map(|s| s / 2 + 1).unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SessionPhase {
    Discovering,
    Establishing,
    Established,
    Failed,
}

/// Initiator-side bookkeeping of a user.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Session {
    peer: MacAddr,
    e2e_id: u64,
    phase: SessionPhase,
    restarts: u32,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub mac: MacAddr,
    pub kind: NodeKind,
    ports: Vec<PortInfo>,
    config: ProtocolConfig,
    seq: u32,
    pub mac_table: BTreeMap<MacAddr, MacEntry>,
    pub entanglement_table: BTreeMap<u64, Circuit>,
    /// Sequence numbers of requests still waiting for their reply, with send time.
    pub pending_acks: BTreeMap<u32, f64>,
    pub neighbor_liveness: BTreeMap<PortId, f64>,
    /// Peer learned from a DiscoveryRequest addressed to this user, per circuit.
    responder_peers: BTreeMap<u64, MacAddr>,
    session: Option<Session>,
    keepalive_armed: bool,
}

impl Node {
    pub fn new(
        name: &str,
        mac: MacAddr,
        kind: NodeKind,
        ports: Vec<PortInfo>,
        config: ProtocolConfig,
    ) -> Self {
        Node {
            name: name.to_owned(),
            mac,
            kind,
            ports,
            config,
            seq: 0,
            mac_table: BTreeMap::new(),
            entanglement_table: BTreeMap::new(),
            pending_acks: BTreeMap::new(),
            neighbor_liveness: BTreeMap::new(),
            responder_peers: BTreeMap::new(),
            session: None,
            keepalive_armed: false,
        }
    }

    /// Builds the state machine of `node`, with port states taken from the
    /// active tree.
    pub fn from_topology(
        t: &NetworkTopology,
        tree: &ActiveTree,
        node: usize,
        config: ProtocolConfig,
    ) -> Self {
        let ports = t
            .ports(node)
            .into_iter()
            .map(|p| {
                let paired = t.links[p.link].is_paired();
                PortInfo {
                    id: p.id,
                    paired,
                    forwarding: !paired || tree.is_forwarding(node, p.id),
                }
            })
            .collect();
        let n = &t.nodes[node];
        Node::new(&n.name, n.mac, n.kind, ports, config)
    }

    pub fn is_user(&self) -> bool {
        self.kind == NodeKind::User
    }

    pub fn ports(&self) -> &[PortInfo] {
        &self.ports
    }

    pub fn circuit(&self, e2e_id: u64) -> Option<&Circuit> {
        self.entanglement_table.get(&e2e_id)
    }

    pub fn held_tokens(&self, e2e_id: u64) -> &[Token] {
        self.circuit(e2e_id)
            .map(|c| c.tokens.as_slice())
            .unwrap_or(&[])
    }

    /// Applies one input at time `now`.
    pub fn step(&mut self, now: f64, input: &Input) -> Vec<Output> {
        let mut out = Vec::new();
        match input {
            Input::Connect { .. } => self.discovery_step(now, input, &mut out),
            Input::FrameIn { port, frame } => {
                self.note_alive(now, *port, frame);
                if frame.qp.ack {
                    self.pending_acks.remove(&frame.qp.ack_seq);
                }
                match frame.msg_type() {
                    MessageType::DiscoveryRequest | MessageType::DiscoveryReply => {
                        self.discovery_step(now, input, &mut out)
                    }
                    MessageType::EstablishmentRequest
                    | MessageType::EstablishmentReply
                    | MessageType::EstablishmentInterrupted
                    | MessageType::KeepAlive => self.establish_step(now, input, &mut out),
                    MessageType::PtpEntanglementRequest | MessageType::PtpEntanglementReply => {
                        self.ptp_step(now, input, &mut out)
                    }
                    _ => self.swap_step(now, input, &mut out),
                }
            }
            Input::QubitPacketIn { .. } => self.ptp_step(now, input, &mut out),
            Input::SwapAttemptResult { .. } => self.swap_step(now, input, &mut out),
            Input::TimerExpired(TimerKind::KeepAlive) => self.establish_step(now, input, &mut out),
            Input::TimerExpired(TimerKind::Discovery(_)) => {
                self.discovery_step(now, input, &mut out)
            }
            Input::TimerExpired(TimerKind::Establishment(_) | TimerKind::QuantumTimeout(_)) => {
                self.establish_step(now, input, &mut out)
            }
        }
        out
    }

    fn next_seq(&mut self) -> u32 {
        self.seq = self.seq.wrapping_add(1);
        self.seq
    }

    fn frame(&mut self, dst: MacAddr, msg: MessageType, e2e_id: u64) -> QpFrame {
        let seq = self.next_seq();
        QpFrame::new(dst, self.mac, msg, seq, e2e_id)
    }

    /// Sends a request-like frame and records it as awaiting a reply.
    fn send_request(
        &mut self,
        now: f64,
        out: &mut Vec<Output>,
        port: PortId,
        frame: QpFrame,
    ) -> u32 {
        self.pending_acks.insert(frame.qp.seq, now);
        out.push(Output::FrameOut { port, frame });
        frame.qp.seq
    }

    /// Sends a reply acknowledging `to`.
    fn send_reply(
        &mut self,
        out: &mut Vec<Output>,
        port: PortId,
        to: &QpFrame,
        msg: MessageType,
        edit: impl FnOnce(&mut QpFrame),
    ) {
        let mut f = self.frame(to.eth.src, msg, to.qp.e2e_id);
        f.qp.ack = true;
        f.qp.ack_seq = to.qp.seq;
        f.qp.level = to.qp.level;
        f.qp.token_id = to.qp.token_id;
        edit(&mut f);
        out.push(Output::FrameOut { port, frame: f });
    }

    fn note_alive(&mut self, now: f64, port: PortId, _frame: &QpFrame) {
        if let Some(t) = self.neighbor_liveness.get_mut(&port) {
            *t = now;
        }
    }

    fn port_kind(&self, port: PortId) -> PortKind {
        match self.ports.iter().find(|p| p.id == port) {
            Some(p) if p.paired => PortKind::Qeth,
            _ => PortKind::Eth,
        }
    }

    fn learn(&mut self, mac: MacAddr, port: PortId) {
        let kind = self.port_kind(port);
        self.mac_table.insert(mac, MacEntry { port, kind });
    }

    fn quantum_ports(&self) -> impl Iterator<Item = PortId> + '_ {
        self.ports
            .iter()
            .filter(|p| p.paired && p.forwarding)
            .map(|p| p.id)
    }
}

/// One line of the protocol trace:
/// `t=<s> node=<name> ev=<kind> port=<id> seq=<n> msg=<type> e2e=<hex> level=<v> token=<id>`,
/// with `-` for fields that do not apply and an optional trailing `note=`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceRecord<'a> {
    pub t: f64,
    pub node: &'a str,
    pub ev: &'a str,
    pub port: Option<PortId>,
    pub seq: Option<u32>,
    pub msg: Option<MessageType>,
    pub e2e_id: Option<u64>,
    pub level: Option<u8>,
    pub token_id: Option<u16>,
    pub note: Option<String>,
}

impl<'a> TraceRecord<'a> {
    pub fn frame(t: f64, node: &'a str, ev: &'a str, port: PortId, f: &QpFrame) -> Self {
        TraceRecord {
            t,
            node,
            ev,
            port: Some(port),
            seq: Some(f.qp.seq),
            msg: Some(f.qp.msg_type),
            e2e_id: Some(f.qp.e2e_id),
            level: Some(f.qp.level),
            token_id: Some(f.qp.token_id),
            note: None,
        }
    }
}

fn dash<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_owned(), |x| x.to_string())
}

impl fmt::Display for TraceRecord<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={:.9} node={} ev={} port={} seq={} msg={} e2e={} level={} token={}",
            self.t,
            self.node,
            self.ev,
            dash(&self.port),
            dash(&self.seq),
            dash(&self.msg),
            self.e2e_id
                .map_or_else(|| "-".to_owned(), |e| format!("{e:016x}")),
            dash(&self.level),
            dash(&self.token_id),
        )?;
        if let Some(n) = &self.note {
            write!(f, " note={n}")?;
        }
        Ok(())
    }
}
