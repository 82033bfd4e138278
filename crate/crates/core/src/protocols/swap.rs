use super::*;

impl Node {
    pub(super) fn ptp_step(&mut self, now: f64, input: &Input, out: &mut Vec<Output>) {
        match input {
            Input::FrameIn { port, frame } => {
                let e2e_id = frame.qp.e2e_id;
                let Some(c) = self.entanglement_table.get_mut(&e2e_id) else {
                    return;
                };
                let Some(side) = c.side_of(*port) else { return };
                match frame.msg_type() {
                    MessageType::PtpEntanglementRequest => {
                        // A fresh request always replaces whatever the link held.
                        *c.link_mut(side) = LinkState::AwaitQubits { seq: frame.qp.seq };
                        if c.deferred.is_some_and(|(p, _)| p == *port) {
                            c.deferred = None;
                        }
                        let qubits = self.config.qubits as u16;
                        self.send_reply(
                            out,
                            *port,
                            frame,
                            MessageType::PtpEntanglementReply,
                            |f| {
                                f.eth.payload_len = qubits;
                            },
                        );
                    }
                    MessageType::PtpEntanglementReply => match c.link(side) {
                        LinkState::AwaitReply { seq } if frame.qp.ack_seq == seq => {
                            *c.link_mut(side) = LinkState::AwaitConfirm { seq };
                            out.push(Output::QubitPacketOut {
                                port: *port,
                                qubits: self.config.qubits,
                            });
                        }
                        LinkState::AwaitConfirm { seq } if frame.qp.ack_seq == seq => {
                            *c.link_mut(side) = LinkState::Entangled;
                            self.on_link_entangled(now, e2e_id, out);
                        }
                        _ => {}
                    },
                    _ => {}
                }
            }
            Input::QubitPacketIn { port, received } => {
                if *received == 0 {
                    return;
                }
                let found = self.entanglement_table.values().find_map(|c| {
                    let side = c.side_of(*port)?;
                    match c.link(side) {
                        LinkState::AwaitQubits { seq } => Some((c.e2e_id, side, seq)),
                        _ => None,
                    }
                });
                let Some((e2e_id, side, seq)) = found else {
                    return;
                };
                let c = self
                    .entanglement_table
                    .get_mut(&e2e_id)
                    .expect("circuit present");
                *c.link_mut(side) = LinkState::Entangled;
                let dst = match side {
                    Side::Up => c.up_mac,
                    Side::Down => c.down_mac,
                }
                .unwrap_or(MacAddr::BROADCAST);
                let mut f = self.frame(dst, MessageType::PtpEntanglementReply, e2e_id);
                f.qp.ack = true;
                f.qp.ack_seq = seq;
                f.eth.payload_len = (*received).min(u16::MAX as u32) as u16;
                out.push(Output::FrameOut {
                    port: *port,
                    frame: f,
                });
                self.on_link_entangled(now, e2e_id, out);
            }
            _ => {}
        }
    }

    pub(super) fn start_ptp(&mut self, now: f64, e2e_id: u64, side: Side, out: &mut Vec<Output>) {
        let Some(c) = self.entanglement_table.get(&e2e_id) else {
            return;
        };
        let (Some(port), Some(mac)) = (
            c.port(side),
            if side == Side::Up {
                c.up_mac
            } else {
                c.down_mac
            },
        ) else {
            return;
        };
        let mut f = self.frame(mac, MessageType::PtpEntanglementRequest, e2e_id);
        f.eth.payload_len = self.config.qubits as u16;
        let seq = self.send_request(now, out, port, f);
        let c = self
            .entanglement_table
            .get_mut(&e2e_id)
            .expect("circuit present");
        *c.link_mut(side) = LinkState::AwaitReply { seq };
    }

    /// Whether this node starts the point-to-point exchange on its `side` link.
    fn initiates(&self, c: &Circuit, side: Side) -> bool {
        let s = c.switches.unwrap_or(0);
        match side {
            Side::Down => c.downstream.is_some() && !(self.is_user() && s == 1),
            Side::Up => !self.is_user() && s == 1,
        }
    }

    fn on_link_entangled(&mut self, now: f64, e2e_id: u64, out: &mut Vec<Output>) {
        if self.is_user() {
            let c = self
                .entanglement_table
                .get_mut(&e2e_id)
                .expect("circuit present");
            if c.switches == Some(0) && !c.finished {
                c.finished = true;
                out.push(Output::NotifyUser(Notification::EntanglementReady));
            }
            return;
        }
        self.try_progress(now, e2e_id, out);
    }

    fn token_valid(c: &Circuit, t: &Token) -> bool {
        t.level > 0
            || match t.direction {
                Direction::FromLeft => c.up_link == LinkState::Entangled,
                Direction::FromRight => c.down_link == LinkState::Entangled,
            }
    }

    fn neighbor_mac(c: &Circuit, side: Side) -> MacAddr {
        match side {
            Side::Up => c.up_mac,
            Side::Down => c.down_mac,
        }
        .unwrap_or(MacAddr::BROADCAST)
    }

    /// Moves a held token forward, or attempts the final swap, if possible.
    fn try_progress(&mut self, now: f64, e2e_id: u64, out: &mut Vec<Output>) {
        let Some(c) = self.entanglement_table.get(&e2e_id) else {
            return;
        };
        if !c.established || c.finished || c.lock != SwapLock::Idle || self.is_user() {
            return;
        }
        let s = c.switches.unwrap_or(0);
        match c.tokens.as_slice() {
            [a, b] => {
                if !(Self::token_valid(c, a) && Self::token_valid(c, b)) {
                    return;
                }
                if s <= 1 {
                    // Lone switch: the two link pairs are handed to the users directly.
                    self.finish(now, e2e_id, 1, out);
                } else {
                    let level = a.level.max(b.level) + 1;
                    let c = self
                        .entanglement_table
                        .get_mut(&e2e_id)
                        .expect("circuit present");
                    c.lock = SwapLock::Swapping {
                        toward: None,
                        level,
                    };
                    out.push(Output::SwapAttempt { e2e_id, level });
                }
            }
            [t] => {
                let t = *t;
                if !Self::token_valid(c, &t) {
                    return;
                }
                let side = match t.direction {
                    Direction::FromLeft => Side::Down,
                    Direction::FromRight => Side::Up,
                };
                if c.link(side) != LinkState::Entangled || t.level + 1 > s / 2 {
                    return;
                }
                let Some(port) = c.port(side) else { return };
                let level = t.level + 1;
                let mut f = self.frame(
                    Self::neighbor_mac(c, side),
                    MessageType::SwappingRequest,
                    e2e_id,
                );
                f.qp.level = level;
                f.qp.token_id = t.token_id;
                let seq = self.send_request(now, out, port, f);
                let c = self
                    .entanglement_table
                    .get_mut(&e2e_id)
                    .expect("circuit present");
                c.lock = SwapLock::Requested {
                    toward: side,
                    seq,
                    level,
                };
            }
            _ => {}
        }
    }

    /// Lock back to idle, then serve a deferred request or try to advance.
    fn release(&mut self, now: f64, e2e_id: u64, out: &mut Vec<Output>) {
        let Some(c) = self.entanglement_table.get_mut(&e2e_id) else {
            return;
        };
        c.lock = SwapLock::Idle;
        if let Some((port, frame)) = c.deferred.take() {
            if let Some(side) = c.side_of(port) {
                if c.link(side) == LinkState::Entangled {
                    c.lock = SwapLock::GrantedTo { side };
                    self.send_reply(out, port, &frame, MessageType::SwappingReply, |_| {});
                    return;
                }
            }
        }
        self.try_progress(now, e2e_id, out);
    }

    fn finish(&mut self, now: f64, e2e_id: u64, level: u8, out: &mut Vec<Output>) {
        let c = self
            .entanglement_table
            .get_mut(&e2e_id)
            .expect("circuit present");
        c.finished = true;
        c.tokens.clear();
        c.up_link = LinkState::Consumed;
        c.down_link = LinkState::Consumed;
        let targets: Vec<(PortId, MacAddr)> = [Side::Up, Side::Down]
            .into_iter()
            .filter_map(|s| Some((c.port(s)?, Self::neighbor_mac(c, s))))
            .collect();
        c.lock = SwapLock::AwaitCompleteAcks {
            pending: targets.len() as u8,
        };
        for (port, mac) in targets {
            let mut f = self.frame(mac, MessageType::SwappingComplete, e2e_id);
            f.qp.level = level;
            self.send_request(now, out, port, f);
        }
    }

    pub(super) fn swap_step(&mut self, now: f64, input: &Input, out: &mut Vec<Output>) {
        match input {
            Input::SwapAttemptResult { e2e_id, success } => {
                self.on_swap_result(now, *e2e_id, *success, out)
            }
            Input::FrameIn { port, frame } => {
                let e2e_id = frame.qp.e2e_id;
                let Some(c) = self.entanglement_table.get(&e2e_id) else {
                    return;
                };
                let Some(side) = c.side_of(*port) else { return };
                match frame.msg_type() {
                    MessageType::SwappingRequest => self.on_swap_request(*port, side, frame, out),
                    MessageType::SwappingReply => {
                        let c = self
                            .entanglement_table
                            .get_mut(&e2e_id)
                            .expect("circuit present");
                        if let SwapLock::Requested { toward, seq, level } = c.lock {
                            if toward == side && frame.qp.ack_seq == seq {
                                c.lock = SwapLock::Swapping {
                                    toward: Some(side),
                                    level,
                                };
                                out.push(Output::SwapAttempt { e2e_id, level });
                            }
                        }
                    }
                    MessageType::TokenTransfer => self.on_token(now, *port, side, frame, out),
                    MessageType::TokenAck => {
                        if c.lock == SwapLock::AwaitTokenAck {
                            self.release(now, e2e_id, out);
                        }
                    }
                    MessageType::SwappingError => self.on_swap_error(now, *port, side, frame, out),
                    MessageType::ErrorAck => {
                        if let SwapLock::AwaitErrorAcks { pending } = c.lock {
                            if pending > 1 {
                                let c = self
                                    .entanglement_table
                                    .get_mut(&e2e_id)
                                    .expect("circuit present");
                                c.lock = SwapLock::AwaitErrorAcks {
                                    pending: pending - 1,
                                };
                            } else {
                                self.after_error_acks(now, e2e_id, out);
                            }
                        }
                    }
                    MessageType::SwappingComplete => self.on_complete(now, *port, side, frame, out),
                    MessageType::CompleteAck => {
                        let c = self
                            .entanglement_table
                            .get_mut(&e2e_id)
                            .expect("circuit present");
                        if let SwapLock::AwaitCompleteAcks { pending } = c.lock {
                            c.lock = if pending > 1 {
                                SwapLock::AwaitCompleteAcks {
                                    pending: pending - 1,
                                }
                            } else {
                                SwapLock::Idle
                            };
                        }
                    }
                    _ => {}
                }
            }
            _ => {}
        }
    }

    fn on_swap_request(
        &mut self,
        port: PortId,
        side: Side,
        frame: &QpFrame,
        out: &mut Vec<Output>,
    ) {
        let c = self
            .entanglement_table
            .get_mut(&frame.qp.e2e_id)
            .expect("circuit present");
        if c.link(side) != LinkState::Entangled || c.finished {
            return;
        }
        let grant = match c.lock {
            SwapLock::Idle => true,
            // Crossing requests: the lower address yields.
            SwapLock::Requested { toward, .. } if toward == side => self.mac < frame.eth.src,
            _ => {
                c.deferred = Some((port, *frame));
                false
            }
        };
        if grant {
            c.lock = SwapLock::GrantedTo { side };
            self.send_reply(out, port, frame, MessageType::SwappingReply, |_| {});
        }
    }

    fn on_swap_result(&mut self, now: f64, e2e_id: u64, success: bool, out: &mut Vec<Output>) {
        let Some(c) = self.entanglement_table.get_mut(&e2e_id) else {
            return;
        };
        let SwapLock::Swapping { toward, level } = c.lock else {
            return;
        };
        match (toward, success) {
            (None, true) => self.finish(now, e2e_id, level, out),
            (Some(side), true) => {
                let mut t = c.tokens.pop().expect("token held while swapping");
                t.level = level;
                c.up_link = LinkState::Consumed;
                c.down_link = LinkState::Consumed;
                c.lock = SwapLock::AwaitTokenAck;
                let port = c.port(side).expect("swap toward a circuit port");
                let mac = Self::neighbor_mac(c, side);
                let mut f = self.frame(mac, MessageType::TokenTransfer, e2e_id);
                f.qp.level = level;
                f.qp.token_id = t.token_id;
                self.send_request(now, out, port, f);
            }
            (toward, false) => {
                // Errors go both ways; each carries the token whose segment it resets.
                let mut notices: Vec<(Side, u16)> = Vec::new();
                for t in &c.tokens {
                    match (toward, t.direction) {
                        (Some(_), _) => {
                            notices.push((Side::Up, t.token_id));
                            notices.push((Side::Down, t.token_id));
                        }
                        (None, Direction::FromLeft) => notices.push((Side::Up, t.token_id)),
                        (None, Direction::FromRight) => notices.push((Side::Down, t.token_id)),
                    }
                }
                let lost: Vec<Token> = std::mem::take(&mut c.tokens);
                c.up_link = LinkState::Idle;
                c.down_link = LinkState::Idle;
                c.deferred = None;
                let s = c.switches.unwrap_or(0);
                for t in lost {
                    let edge = match t.direction {
                        Direction::FromLeft => c.position == 1,
                        Direction::FromRight => c.position == s,
                    };
                    if edge {
                        c.tokens.push(Token { level: 0, ..t });
                    }
                }
                let targets: Vec<(PortId, MacAddr, u16)> = notices
                    .into_iter()
                    .filter_map(|(sd, id)| Some((c.port(sd)?, Self::neighbor_mac(c, sd), id)))
                    .collect();
                c.lock = SwapLock::AwaitErrorAcks {
                    pending: targets.len() as u8,
                };
                for (port, mac, token_id) in targets {
                    let mut f = self.frame(mac, MessageType::SwappingError, e2e_id);
                    f.qp.level = level;
                    f.qp.token_id = token_id;
                    self.send_request(now, out, port, f);
                }
            }
        }
    }

    fn on_token(
        &mut self,
        now: f64,
        port: PortId,
        side: Side,
        frame: &QpFrame,
        out: &mut Vec<Output>,
    ) {
        let e2e_id = frame.qp.e2e_id;
        let c = self
            .entanglement_table
            .get_mut(&e2e_id)
            .expect("circuit present");
        let direction = token_direction(frame.qp.token_id);
        if c.tokens.iter().any(|t| t.direction == direction) {
            out.push(Output::Fault(ProtocolFault::TokenConflict {
                e2e_id,
                token_id: frame.qp.token_id,
            }));
            return;
        }
        let max = c.max_level();
        if frame.qp.level > max {
            out.push(Output::Fault(ProtocolFault::LevelOverflow {
                e2e_id,
                level: frame.qp.level,
                max,
            }));
            return;
        }
        c.tokens.push(Token {
            token_id: frame.qp.token_id,
            direction,
            level: frame.qp.level,
        });
        *c.link_mut(side) = LinkState::Consumed;
        let granted = c.lock == SwapLock::GrantedTo { side };
        self.send_reply(out, port, frame, MessageType::TokenAck, |_| {});
        if granted {
            self.release(now, e2e_id, out);
        }
    }

    fn on_swap_error(
        &mut self,
        now: f64,
        port: PortId,
        side: Side,
        frame: &QpFrame,
        out: &mut Vec<Output>,
    ) {
        let e2e_id = frame.qp.e2e_id;
        self.send_reply(out, port, frame, MessageType::ErrorAck, |_| {});
        let direction = token_direction(frame.qp.token_id);
        let backward = matches!(
            (direction, side),
            (Direction::FromLeft, Side::Down) | (Direction::FromRight, Side::Up)
        );
        let is_user = self.is_user();
        let c = self
            .entanglement_table
            .get_mut(&e2e_id)
            .expect("circuit present");
        match c.lock {
            SwapLock::GrantedTo { side: s } | SwapLock::Requested { toward: s, .. }
                if s == side =>
            {
                c.lock = SwapLock::Idle
            }
            _ => {}
        }
        if !backward {
            *c.link_mut(side) = LinkState::Idle;
            if c.deferred.is_some_and(|(p, _)| p == port) {
                c.deferred = None;
            }
            let c = c.clone();
            if self.initiates(&c, side) {
                self.start_ptp(now, e2e_id, side, out);
            }
            return self.try_progress(now, e2e_id, out);
        }

        c.up_link = LinkState::Idle;
        c.down_link = LinkState::Idle;
        c.deferred = None;
        let onward = match direction {
            Direction::FromLeft => Side::Up,
            Direction::FromRight => Side::Down,
        };
        if is_user {
            let c = c.clone();
            if self.initiates(&c, Side::Down) {
                self.start_ptp(now, e2e_id, Side::Down, out);
            }
            return;
        }
        let s = c.switches.unwrap_or(0);
        let edge = match direction {
            Direction::FromLeft => c.position == 1,
            Direction::FromRight => c.position == s,
        };
        if edge && !c.tokens.iter().any(|t| t.direction == direction) {
            c.tokens.push(Token {
                token_id: frame.qp.token_id,
                direction,
                level: 0,
            });
        }
        let Some(next) = c.port(onward) else { return };
        c.lock = SwapLock::AwaitErrorAcks { pending: 1 };
        let mac = Self::neighbor_mac(c, onward);
        let mut f = self.frame(mac, MessageType::SwappingError, e2e_id);
        f.qp.level = frame.qp.level;
        f.qp.token_id = frame.qp.token_id;
        self.send_request(now, out, next, f);
    }

    fn after_error_acks(&mut self, now: f64, e2e_id: u64, out: &mut Vec<Output>) {
        let c = self
            .entanglement_table
            .get_mut(&e2e_id)
            .expect("circuit present");
        c.lock = SwapLock::Idle;
        let c = c.clone();
        for side in [Side::Up, Side::Down] {
            if self.initiates(&c, side) && c.link(side) == LinkState::Idle {
                self.start_ptp(now, e2e_id, side, out);
            }
        }
        self.release(now, e2e_id, out);
    }

    fn on_complete(
        &mut self,
        now: f64,
        port: PortId,
        side: Side,
        frame: &QpFrame,
        out: &mut Vec<Output>,
    ) {
        let e2e_id = frame.qp.e2e_id;
        self.send_reply(out, port, frame, MessageType::CompleteAck, |_| {});
        let is_user = self.is_user();
        let c = self
            .entanglement_table
            .get_mut(&e2e_id)
            .expect("circuit present");
        if c.finished {
            return;
        }
        c.finished = true;
        c.up_link = LinkState::Consumed;
        c.down_link = LinkState::Consumed;
        if is_user {
            out.push(Output::NotifyUser(Notification::EntanglementReady));
            return;
        }
        let onward = if side == Side::Up {
            Side::Down
        } else {
            Side::Up
        };
        let Some(next) = c.port(onward) else { return };
        c.lock = SwapLock::AwaitCompleteAcks { pending: 1 };
        let mac = Self::neighbor_mac(c, onward);
        let mut f = self.frame(mac, MessageType::SwappingComplete, e2e_id);
        f.qp.level = frame.qp.level;
        self.send_request(now, out, next, f);
    }
}
