//! Event-driven execution of the protocol state machines over a topology.

use std::collections::BTreeMap;

use rand::Rng;

use super::channel::{Attempt, Channel};
use super::queue::EventQueue;
use super::{SimError, SimSetup};
use crate::codec::{decode_frame, encode_frame, to_hex_line, MessageType, QpFrame};
use crate::protocols::{
    Input, Node, Notification, Output, PortId, ProtocolFault, TimerKind, TraceRecord,
};

/// How swap attempts are decided.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum SwapScript {
    /// Bernoulli with the setup's swap probability.
    #[default]
    Random,
    AlwaysSucceed,
    /// The first attempt at this level fails; every other attempt succeeds.
    FailFirstAt(u8),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOptions {
    pub trace: bool,
    pub script: SwapScript,
    /// Cut link `.1` (both channels) at time `.0`.
    pub kill_link: Option<(f64, usize)>,
    /// Stop as soon as both users hold the end-to-end pair.
    pub stop_when_ready: bool,
    /// Stop, without error, once the clock passes this time.
    pub horizon: Option<f64>,
    pub e2e_id: u64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            trace: false,
            script: SwapScript::Random,
            kill_link: None,
            stop_when_ready: true,
            horizon: None,
            e2e_id: 0x0000_5157_0000_0001,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkRun {
    /// Both users were told the end-to-end pair is ready.
    pub completed: bool,
    /// Time at which the second user was notified.
    pub protocol_time: f64,
    /// Frames handed to the link layer, by type (first attempts only).
    pub frames: BTreeMap<MessageType, u64>,
    pub retransmissions: u64,
    /// Attempts rejected by the receiver's frame check.
    pub corrupted: u64,
    pub collisions: u64,
    pub qubit_retransmissions: u64,
    pub swap_attempts: u64,
    pub swap_failures: u64,
    pub max_level: u8,
    pub steps: u64,
    pub notifications: Vec<(f64, String, Notification)>,
    pub faults: Vec<(String, ProtocolFault)>,
    pub trace: Vec<String>,
}

impl NetworkRun {
    pub fn frames_of(&self, t: MessageType) -> u64 {
        self.frames.get(&t).copied().unwrap_or(0)
    }

    pub fn notified(&self, node: &str, n: Notification) -> Option<f64> {
        self.notifications
            .iter()
            .find(|(_, who, k)| who == node && *k == n)
            .map(|(t, _, _)| *t)
    }
}

#[derive(Clone, Debug)]
enum Event {
    Input { node: usize, input: Input },
    KillLink(usize),
}

#[derive(Clone, Copy)]
struct Attachment {
    link: usize,
    peer: usize,
    peer_port: PortId,
}

struct Engine<'a, R: Rng + ?Sized> {
    setup: &'a SimSetup,
    opts: &'a NetworkOptions,
    rng: &'a mut R,
    nodes: Vec<Node>,
    attach: Vec<Vec<Attachment>>,
    channels: Vec<Channel>,
    dead: Vec<bool>,
    /// Last delivery time per (link, direction, quantum).
    fifo: BTreeMap<(usize, bool, bool), f64>,
    queue: EventQueue<Event>,
    swap_fail_used: bool,
    ready: [bool; 2],
    run: NetworkRun,
}

/// Runs one circuit set-up between the setup's users.
pub fn run_network<R: Rng + ?Sized>(
    setup: &SimSetup,
    rng: &mut R,
    opts: &NetworkOptions,
) -> Result<NetworkRun, SimError> {
    setup.check()?;
    let t = &setup.topology;
    let nodes = (0..t.nodes.len())
        .map(|i| Node::from_topology(t, &setup.tree, i, setup.protocol))
        .collect();
    let attach = (0..t.nodes.len())
        .map(|i| {
            t.ports(i)
                .into_iter()
                .map(|p| Attachment {
                    link: p.link,
                    peer: p.peer,
                    peer_port: t.port_on_link(p.peer, p.link).expect("link has two ends"),
                })
                .collect()
        })
        .collect();
    let channels = t
        .links
        .iter()
        .map(|l| Channel::with_bits(l.params, setup.medium, setup.pkt.bits))
        .collect();
    let mut e = Engine {
        setup,
        opts,
        rng,
        nodes,
        attach,
        channels,
        dead: vec![false; t.links.len()],
        fifo: BTreeMap::new(),
        queue: EventQueue::new(),
        swap_fail_used: false,
        ready: [false; 2],
        run: NetworkRun::default(),
    };
    let dst = t.nodes[setup.responder].mac;
    e.queue.push(
        0.0,
        Event::Input {
            node: setup.initiator,
            input: Input::Connect {
                dst,
                e2e_id: opts.e2e_id,
            },
        },
    );
    if let Some((at, link)) = opts.kill_link {
        e.queue.push(at, Event::KillLink(link));
    }
    e.run()?;
    Ok(e.run)
}

impl<R: Rng + ?Sized> Engine<'_, R> {
    fn run(&mut self) -> Result<(), SimError> {
        while let Some((now, ev)) = self.queue.pop() {
            if self.opts.horizon.is_some_and(|h| now > h) {
                break;
            }
            self.run.steps += 1;
            if self.run.steps > self.setup.max_steps {
                return Err(SimError::MaxStepsExceeded(self.setup.max_steps));
            }
            match ev {
                Event::KillLink(l) => {
                    self.dead[l] = true;
                    self.trace(TraceRecord {
                        t: now,
                        node: "-",
                        ev: "kill",
                        note: Some(format!("link{l}")),
                        ..Default::default()
                    });
                }
                Event::Input { node, input } => {
                    match &input {
                        Input::FrameIn { port, frame } => {
                            self.trace_frame(now, node, "rx", *port, frame)
                        }
                        Input::QubitPacketIn { port, received } => {
                            let name = self.nodes[node].name.clone();
                            self.trace(TraceRecord {
                                t: now,
                                node: &name,
                                ev: "qrx",
                                port: Some(*port),
                                note: Some(format!("qubits{received}")),
                                ..Default::default()
                            });
                        }
                        _ => {}
                    }
                    let outs = self.nodes[node].step(now, &input);
                    for o in outs {
                        self.apply(now, node, o);
                    }
                }
            }
            if self.run.completed && self.opts.stop_when_ready {
                break;
            }
        }
        Ok(())
    }

    fn apply(&mut self, now: f64, node: usize, out: Output) {
        match out {
            Output::FrameOut { port, frame } => self.send_frame(now, node, port, frame),
            Output::QubitPacketOut { port, qubits } => self.send_qubits(now, node, port, qubits),
            Output::SwapAttempt { e2e_id, level } => {
                self.run.swap_attempts += 1;
                self.run.max_level = self.run.max_level.max(level);
                let success = match self.opts.script {
                    SwapScript::Random => self.rng.random_bool(self.setup.p_swap),
                    SwapScript::AlwaysSucceed => true,
                    SwapScript::FailFirstAt(v) => {
                        let fail = v == level && !self.swap_fail_used;
                        self.swap_fail_used |= fail;
                        !fail
                    }
                };
                if !success {
                    self.run.swap_failures += 1;
                }
                let name = self.nodes[node].name.clone();
                let ev = if success { "swap_ok" } else { "swap_fail" };
                self.trace(TraceRecord {
                    t: now,
                    node: &name,
                    ev,
                    e2e_id: Some(e2e_id),
                    level: Some(level),
                    ..Default::default()
                });
                self.queue.push(
                    now,
                    Event::Input {
                        node,
                        input: Input::SwapAttemptResult { e2e_id, success },
                    },
                );
            }
            Output::NotifyUser(n) => {
                let name = self.nodes[node].name.clone();
                self.trace(TraceRecord {
                    t: now,
                    node: &name,
                    ev: "notify",
                    note: Some(format!("{n:?}")),
                    ..Default::default()
                });
                self.run.notifications.push((now, name, n));
                if n == Notification::EntanglementReady {
                    if node == self.setup.initiator {
                        self.ready[0] = true;
                    } else if node == self.setup.responder {
                        self.ready[1] = true;
                    }
                    if self.ready == [true, true] && !self.run.completed {
                        self.run.completed = true;
                        self.run.protocol_time = now;
                    }
                }
            }
            Output::SetTimer { kind, after } => {
                self.queue.push(
                    now + after,
                    Event::Input {
                        node,
                        input: Input::TimerExpired(kind),
                    },
                );
            }
            Output::Fault(f) => {
                let name = self.nodes[node].name.clone();
                self.trace(TraceRecord {
                    t: now,
                    node: &name,
                    ev: "fault",
                    note: Some(format!("{f:?}").replace(' ', "")),
                    ..Default::default()
                });
                self.run.faults.push((name, f));
            }
        }
    }

    /// Arrival time respecting FIFO order on one direction of one channel.
    fn fifo_arrival(&mut self, link: usize, from: usize, quantum: bool, arrival: f64) -> f64 {
        let dir = self.setup.topology.links[link].a == from;
        let last = self.fifo.entry((link, dir, quantum)).or_insert(0.0);
        let t = arrival.max(*last);
        *last = t;
        t
    }

    fn send_frame(&mut self, now: f64, node: usize, port: PortId, frame: QpFrame) {
        *self.run.frames.entry(frame.msg_type()).or_default() += 1;
        self.trace_frame(now, node, "tx", port, &frame);
        if self.opts.trace {
            self.run.trace.push(to_hex_line(&frame));
        }
        let at = self.attach[node][port as usize];
        if self.dead[at.link] {
            return;
        }
        let ch = &self.channels[at.link];
        let attempt = ch.classical_attempt_time();
        let bytes = encode_frame(&frame);
        let mut attempts: u64 = 0;
        let delivered = loop {
            attempts += 1;
            if attempts > self.setup.max_steps {
                // Practically unreachable; treat the link as unusable.
                return;
            }
            let mut wire = bytes;
            match ch.corrupt(&mut *self.rng, &mut wire) {
                Attempt::Collided => self.run.collisions += 1,
                Attempt::Flipped(_) => match decode_frame(&wire) {
                    Ok(f) => break f,
                    Err(_) => self.run.corrupted += 1,
                },
            }
        };
        self.run.retransmissions += attempts - 1;
        let arrival = now + attempts as f64 * attempt + ch.params.tproc;
        let t = self.fifo_arrival(at.link, node, false, arrival);
        self.queue.push(
            t,
            Event::Input {
                node: at.peer,
                input: Input::FrameIn {
                    port: at.peer_port,
                    frame: delivered,
                },
            },
        );
    }

    fn send_qubits(&mut self, now: f64, node: usize, port: PortId, qubits: u32) {
        let at = self.attach[node][port as usize];
        let name = self.nodes[node].name.clone();
        self.trace(TraceRecord {
            t: now,
            node: &name,
            ev: "qtx",
            port: Some(port),
            note: Some(format!("qubits{qubits}")),
            ..Default::default()
        });
        if self.dead[at.link] || !self.setup.topology.links[at.link].quantum {
            return;
        }
        let ch = &self.channels[at.link];
        let attempt = ch.quantum_attempt_time(qubits);
        let mut attempts = 0u32;
        let received = loop {
            attempts += 1;
            let k = ch.survivors(&mut *self.rng, qubits);
            if k > 0 {
                break Some(k);
            }
            if attempts >= self.setup.max_q_retries {
                break None;
            }
        };
        self.run.qubit_retransmissions += u64::from(attempts - 1);
        let elapsed = attempts as f64 * attempt + ch.params.tproc;
        match received {
            Some(k) => {
                let t = self.fifo_arrival(at.link, node, true, now + elapsed);
                self.queue.push(
                    t,
                    Event::Input {
                        node: at.peer,
                        input: Input::QubitPacketIn {
                            port: at.peer_port,
                            received: k,
                        },
                    },
                );
            }
            None => self.queue.push(
                now + elapsed,
                Event::Input {
                    node,
                    input: Input::TimerExpired(TimerKind::QuantumTimeout(port)),
                },
            ),
        }
    }

    fn trace_frame(&mut self, now: f64, node: usize, ev: &str, port: PortId, frame: &QpFrame) {
        if self.opts.trace {
            let line = TraceRecord::frame(now, &self.nodes[node].name, ev, port, frame).to_string();
            self.run.trace.push(line);
        }
    }

    fn trace(&mut self, r: TraceRecord<'_>) {
        if self.opts.trace {
            self.run.trace.push(r.to_string());
        }
    }
}
