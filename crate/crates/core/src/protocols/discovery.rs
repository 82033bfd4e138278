use super::*;

impl Node {
    pub(super) fn discovery_step(&mut self, now: f64, input: &Input, out: &mut Vec<Output>) {
        match input {
            Input::Connect { dst, e2e_id } => self.connect(now, *dst, *e2e_id, 0, out),
            Input::TimerExpired(TimerKind::Discovery(id)) => {
                if let Some(s) = &mut self.session {
                    if s.e2e_id == *id && s.phase == SessionPhase::Discovering {
                        s.phase = SessionPhase::Failed;
                        out.push(Output::NotifyUser(Notification::DiscoveryFailed));
                    }
                }
            }
            Input::FrameIn { port, frame } => {
                if self.is_user() {
                    self.user_discovery_frame(now, *port, frame, out)
                } else {
                    self.switch_discovery_frame(*port, frame, out)
                }
            }
            _ => {}
        }
    }

    /// Starts (or restarts) discovery toward `dst`.
    pub(super) fn connect(
        &mut self,
        now: f64,
        dst: MacAddr,
        e2e_id: u64,
        restarts: u32,
        out: &mut Vec<Output>,
    ) {
        self.session = Some(Session {
            peer: dst,
            e2e_id,
            phase: SessionPhase::Discovering,
            restarts,
        });
        let ports: Vec<PortId> = self.quantum_ports().collect();
        for port in ports {
            let f = self.frame(dst, MessageType::DiscoveryRequest, e2e_id);
            self.send_request(now, out, port, f);
        }
        out.push(Output::SetTimer {
            kind: TimerKind::Discovery(e2e_id),
            after: self.config.discovery_timeout,
        });
    }

    fn user_discovery_frame(
        &mut self,
        now: f64,
        port: PortId,
        frame: &QpFrame,
        out: &mut Vec<Output>,
    ) {
        if frame.eth.dst != self.mac {
            return;
        }
        self.learn(frame.eth.src, port);
        match frame.msg_type() {
            MessageType::DiscoveryRequest => {
                self.responder_peers.insert(frame.qp.e2e_id, frame.eth.src);
                self.send_reply(out, port, frame, MessageType::DiscoveryReply, |_| {});
            }
            MessageType::DiscoveryReply => {
                let Some(s) = &mut self.session else { return };
                if s.e2e_id != frame.qp.e2e_id || s.phase != SessionPhase::Discovering {
                    return;
                }
                s.phase = SessionPhase::Establishing;
                let (peer, e2e_id) = (s.peer, s.e2e_id);
                out.push(Output::NotifyUser(Notification::DiscoveryComplete));
                self.start_establishment(now, port, peer, e2e_id, out);
            }
            _ => {}
        }
    }

    fn switch_discovery_frame(&mut self, port: PortId, frame: &QpFrame, out: &mut Vec<Output>) {
        self.learn(frame.eth.src, port);
        match self.mac_table.get(&frame.eth.dst) {
            Some(e) if e.port == port => {}
            Some(e) => out.push(Output::FrameOut {
                port: e.port,
                frame: *frame,
            }),
            None => {
                for p in self.quantum_ports().filter(|&p| p != port) {
                    out.push(Output::FrameOut {
                        port: p,
                        frame: *frame,
                    });
                }
            }
        }
    }
}
