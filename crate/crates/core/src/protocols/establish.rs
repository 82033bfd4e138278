use super::*;

impl Node {
    pub(super) fn establish_step(&mut self, now: f64, input: &Input, out: &mut Vec<Output>) {
        match input {
            Input::FrameIn { port, frame } => match frame.msg_type() {
                MessageType::EstablishmentRequest => {
                    self.on_establishment_request(now, *port, frame, out)
                }
                MessageType::EstablishmentReply => {
                    self.on_establishment_reply(now, *port, frame, out)
                }
                MessageType::EstablishmentInterrupted => {
                    self.on_interrupted(now, *port, frame, out)
                }
                _ => {}
            },
            Input::TimerExpired(TimerKind::KeepAlive) => self.on_keepalive_timer(now, out),
            Input::TimerExpired(TimerKind::QuantumTimeout(port)) => {
                let stuck = self.entanglement_table.values().find_map(|c| {
                    let side = c.side_of(*port)?;
                    matches!(c.link(side), LinkState::AwaitConfirm { .. }).then_some(c.e2e_id)
                });
                if let Some(id) = stuck {
                    self.interrupt(now, id, PortId::MAX, out);
                }
            }
            Input::TimerExpired(TimerKind::Establishment(id)) => {
                if let Some(s) = &mut self.session {
                    if s.e2e_id == *id && s.phase == SessionPhase::Establishing {
                        s.phase = SessionPhase::Failed;
                        self.entanglement_table.remove(id);
                        out.push(Output::NotifyUser(Notification::EstablishmentTimeout));
                    }
                }
            }
            _ => {}
        }
    }

    pub(super) fn start_establishment(
        &mut self,
        now: f64,
        port: PortId,
        peer: MacAddr,
        e2e_id: u64,
        out: &mut Vec<Output>,
    ) {
        let mut c = Circuit::new(e2e_id, 0);
        c.downstream = Some(port);
        self.entanglement_table.insert(e2e_id, c);
        let f = self.frame(peer, MessageType::EstablishmentRequest, e2e_id);
        self.send_request(now, out, port, f);
        out.push(Output::SetTimer {
            kind: TimerKind::Establishment(e2e_id),
            after: self.config.establishment_timeout,
        });
    }

    fn reject(
        &mut self,
        port: PortId,
        frame: &QpFrame,
        fault: ProtocolFault,
        out: &mut Vec<Output>,
    ) {
        out.push(Output::Fault(fault));
        self.send_reply(
            out,
            port,
            frame,
            MessageType::EstablishmentInterrupted,
            |_| {},
        );
    }

    fn on_establishment_request(
        &mut self,
        now: f64,
        port: PortId,
        frame: &QpFrame,
        out: &mut Vec<Output>,
    ) {
        let e2e_id = frame.qp.e2e_id;
        if self.entanglement_table.contains_key(&e2e_id) {
            return self.reject(port, frame, ProtocolFault::StaleCircuit { e2e_id }, out);
        }
        let position = frame.qp.level.saturating_add(1);
        let mut c = Circuit::new(e2e_id, position);
        c.upstream = Some(port);
        c.up_mac = Some(frame.eth.src);

        if self.is_user() {
            if frame.eth.dst != self.mac {
                return;
            }
            c.switches = Some(frame.qp.level);
            c.established = true;
            self.entanglement_table.insert(e2e_id, c);
            let initiator = self
                .responder_peers
                .get(&e2e_id)
                .copied()
                .unwrap_or(frame.eth.src);
            self.send_reply(out, port, frame, MessageType::EstablishmentReply, |f| {
                f.eth.dst = initiator;
                f.qp.level = frame.qp.level;
            });
            self.start_keepalive(now, &[port], out);
            out.push(Output::NotifyUser(Notification::EstablishmentComplete));
            return;
        }

        let egress = match self.mac_table.get(&frame.eth.dst) {
            Some(e) if e.port != port => e.port,
            _ => {
                let dst = frame.eth.dst;
                return self.reject(port, frame, ProtocolFault::NoRoute { e2e_id, dst }, out);
            }
        };
        c.downstream = Some(egress);
        self.entanglement_table.insert(e2e_id, c);
        let mut f = *frame;
        f.eth.src = self.mac;
        f.qp.seq = self.next_seq();
        f.qp.level = position;
        self.send_request(now, out, egress, f);
    }

    fn on_establishment_reply(
        &mut self,
        now: f64,
        port: PortId,
        frame: &QpFrame,
        out: &mut Vec<Output>,
    ) {
        let e2e_id = frame.qp.e2e_id;
        let switches = frame.qp.level;
        let Some(c) = self.entanglement_table.get_mut(&e2e_id) else {
            return;
        };
        if c.downstream != Some(port) || c.established {
            return;
        }
        c.switches = Some(switches);
        c.down_mac = Some(frame.eth.src);
        c.established = true;
        let position = c.position;
        let upstream = c.upstream;

        if self.is_user() {
            if let Some(s) = &mut self.session {
                if s.e2e_id == e2e_id {
                    s.phase = SessionPhase::Established;
                }
            }
            out.push(Output::NotifyUser(Notification::EstablishmentComplete));
            self.start_keepalive(now, &[port], out);
            if switches != 1 {
                self.start_ptp(now, e2e_id, Side::Down, out);
            }
            return;
        }

        let Some(up) = upstream else { return };
        let mut f = *frame;
        f.eth.src = self.mac;
        f.qp.seq = self.next_seq();
        out.push(Output::FrameOut { port: up, frame: f });

        let (left, right) = token_ids(e2e_id);
        let c = self
            .entanglement_table
            .get_mut(&e2e_id)
            .expect("circuit present");
        if position == 1 {
            c.tokens.push(Token {
                token_id: left,
                direction: Direction::FromLeft,
                level: 0,
            });
        }
        if position == switches {
            c.tokens.push(Token {
                token_id: right,
                direction: Direction::FromRight,
                level: 0,
            });
        }
        self.start_keepalive(now, &[up, port], out);
        if switches == 1 {
            self.start_ptp(now, e2e_id, Side::Up, out);
        }
        self.start_ptp(now, e2e_id, Side::Down, out);
    }

    fn start_keepalive(&mut self, now: f64, ports: &[PortId], out: &mut Vec<Output>) {
        for &p in ports {
            self.neighbor_liveness.insert(p, now);
        }
        if !self.keepalive_armed {
            self.keepalive_armed = true;
            out.push(Output::SetTimer {
                kind: TimerKind::KeepAlive,
                after: self.config.t_keepalive,
            });
        }
    }

    fn on_keepalive_timer(&mut self, now: f64, out: &mut Vec<Output>) {
        self.keepalive_armed = false;
        let limit = self.config.k_miss as f64 * self.config.t_keepalive;
        let ids: Vec<u64> = self.entanglement_table.keys().copied().collect();
        for id in ids {
            let c = &self.entanglement_table[&id];
            if !c.established {
                continue;
            }
            let sides = [(c.upstream, c.up_mac), (c.downstream, c.down_mac)];
            let dead = sides.iter().filter_map(|&(p, _)| p).find(|p| {
                self.neighbor_liveness
                    .get(p)
                    .is_some_and(|&t| now - t > limit)
            });
            if let Some(p) = dead {
                self.interrupt(now, id, p, out);
                continue;
            }
            for (p, mac) in sides {
                if let (Some(p), Some(mac)) = (p, mac) {
                    let f = self.frame(mac, MessageType::KeepAlive, id);
                    out.push(Output::FrameOut { port: p, frame: f });
                }
            }
        }
        if self.entanglement_table.values().any(|c| c.established) {
            self.keepalive_armed = true;
            out.push(Output::SetTimer {
                kind: TimerKind::KeepAlive,
                after: self.config.t_keepalive,
            });
        }
    }

    /// Tears down circuit `e2e_id`, telling everyone except the neighbor on `from`.
    fn interrupt(&mut self, now: f64, e2e_id: u64, from: PortId, out: &mut Vec<Output>) {
        let Some(c) = self.entanglement_table.remove(&e2e_id) else {
            return;
        };
        for (p, mac) in [(c.upstream, c.up_mac), (c.downstream, c.down_mac)] {
            if let Some(p) = p {
                self.neighbor_liveness.remove(&p);
                if p != from {
                    let dst = mac.unwrap_or(MacAddr::BROADCAST);
                    let f = self.frame(dst, MessageType::EstablishmentInterrupted, e2e_id);
                    out.push(Output::FrameOut { port: p, frame: f });
                }
            }
        }
        if self.is_user() {
            out.push(Output::NotifyUser(Notification::EstablishmentInterrupted));
            self.maybe_restart(now, e2e_id, out);
        }
    }

    fn on_interrupted(&mut self, now: f64, port: PortId, frame: &QpFrame, out: &mut Vec<Output>) {
        let e2e_id = frame.qp.e2e_id;
        if self.entanglement_table.contains_key(&e2e_id) {
            return self.interrupt(now, e2e_id, port, out);
        }
        // Rejected before the circuit existed here.
        if let Some(s) = self.session {
            if s.e2e_id == e2e_id && s.phase == SessionPhase::Establishing {
                out.push(Output::NotifyUser(Notification::EstablishmentInterrupted));
                self.maybe_restart(now, e2e_id, out);
            }
        }
    }

    fn maybe_restart(&mut self, now: f64, e2e_id: u64, out: &mut Vec<Output>) {
        let Some(s) = self.session else { return };
        if s.e2e_id != e2e_id {
            return;
        }
        if s.restarts < self.config.max_restarts {
            self.connect(now, s.peer, e2e_id.wrapping_add(1), s.restarts + 1, out);
        } else if let Some(s) = &mut self.session {
            s.phase = SessionPhase::Failed;
        }
    }
}
