//! Critical-path sampling of one circuit.
//!
//! The swap phase is walked level by level. Every attempt at level `k` costs
//!
//! * `k = 1`: point-to-point handshake (request, reply), the quantum packet and
//!   its ack, the swap request/reply pair, and two outcome messages;
//! * `k = 2`: swap request/reply plus two outcome messages;
//! * `k >= 3`: swap request/reply plus `2 (k - 2)` relayed outcome messages.
//!
//! A failure restarts the walk at level 1, so level `k` is visited `N^(V-k+1)`
//! times on average and the mean reproduces the closed form exactly.

use rand::Rng;

use super::channel::Channel;
use super::report::Estimate;
use super::{SimError, SimSetup};
use crate::delay::{levels, t_req, t_tq};

/// Per-message delays observed during a replication.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageStats {
    pub classical: Estimate,
    pub quantum: Estimate,
    pub baseline: Estimate,
    pub retransmissions: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingSample {
    pub discovery: f64,
    pub establishment: f64,
    /// First point-to-point exchange on the critical path.
    pub ptp: f64,
    /// Point-to-point plus swapping, until both users are entangled.
    pub swap: f64,
    /// Part of `swap` spent on quantum packets.
    pub swap_quantum: f64,
    pub swap_attempts: u32,
    pub swap_failures: u32,
}

impl TimingSample {
    pub fn total(&self) -> f64 {
        self.discovery + self.establishment + self.swap
    }
}

#[derive(Clone, Debug)]
pub struct TimingModel {
    path: Vec<Channel>,
    /// Link whose per-level cost is largest; it sets the pace of swapping.
    bottleneck: usize,
    switches: u32,
    levels: u32,
    p_swap: f64,
    qubits: u32,
}

#[derive(Clone, Copy)]
enum Transmission {
    Handshake,
    Wrapper,
}

impl TimingModel {
    pub fn new(setup: &SimSetup) -> Result<Self, SimError> {
        setup.check()?;
        let links = setup.links();
        let mut bottleneck = 0;
        let mut worst = f64::NEG_INFINITY;
        for (i, l) in links.iter().enumerate() {
            let cost =
                t_tq(l, setup.pkt.qubits, setup.medium)? + 7.0 * t_req(l, setup.pkt, setup.medium)?;
            if cost > worst {
                worst = cost;
                bottleneck = i;
            }
        }
        let switches = setup.switches() as u32;
        Ok(TimingModel {
            path: links
                .into_iter()
                .map(|l| Channel::with_bits(l, setup.medium, setup.pkt.bits))
                .collect(),
            bottleneck,
            switches,
            levels: levels(switches),
            p_swap: setup.p_swap,
            qubits: setup.pkt.qubits,
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn sample_proposed<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        msgs: &mut MessageStats,
    ) -> TimingSample {
        self.sample(rng, msgs, Transmission::Handshake)
    }

    pub fn sample_baseline<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        msgs: &mut MessageStats,
    ) -> TimingSample {
        self.sample(rng, msgs, Transmission::Wrapper)
    }

    fn classical<R: Rng + ?Sized>(&self, link: usize, rng: &mut R, msgs: &mut MessageStats) -> f64 {
        let t = self.path[link].classical(rng);
        msgs.classical.push(t.time);
        msgs.retransmissions += u64::from(t.attempts - 1);
        t.time
    }

    /// Delivers qubits to the far end; returns (elapsed, quantum part).
    fn distribute<R: Rng + ?Sized>(
        &self,
        mode: Transmission,
        rng: &mut R,
        msgs: &mut MessageStats,
    ) -> (f64, f64) {
        let link = self.bottleneck;
        match mode {
            Transmission::Handshake => {
                let req = self.classical(link, rng, msgs);
                let rep = self.classical(link, rng, msgs);
                let q = self.path[link].quantum(rng, self.qubits);
                msgs.quantum.push(q.time);
                msgs.retransmissions += u64::from(q.attempts - 1);
                let ack = self.classical(link, rng, msgs);
                (req + rep + q.time + ack, q.time)
            }
            Transmission::Wrapper => {
                let b = self.path[link].baseline(rng, self.qubits);
                msgs.baseline.push(b.time);
                msgs.retransmissions += u64::from(b.attempts - 1);
                (b.time, b.time)
            }
        }
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        msgs: &mut MessageStats,
        mode: Transmission,
    ) -> TimingSample {
        let mut s = TimingSample::default();
        for i in 0..self.path.len() {
            s.discovery += self.classical(i, rng, msgs) + self.classical(i, rng, msgs);
        }
        for i in 0..self.path.len() {
            s.establishment += self.classical(i, rng, msgs) + self.classical(i, rng, msgs);
        }

        if self.switches <= 1 {
            let (t, q) = self.distribute(mode, rng, msgs);
            s.ptp = t;
            s.swap = t;
            s.swap_quantum = q;
            return s;
        }

        let link = self.bottleneck;
        let mut level = 1;
        let mut first = true;
        loop {
            if level == 1 {
                let (t, q) = self.distribute(mode, rng, msgs);
                if first {
                    s.ptp = t;
                    first = false;
                }
                s.swap += t;
                s.swap_quantum += q;
            }
            let relays = if level <= 2 { 1 } else { level - 2 };
            for _ in 0..2 + 2 * relays {
                s.swap += self.classical(link, rng, msgs);
            }
            s.swap_attempts += 1;
            if rng.random_bool(self.p_swap) {
                if level == self.levels {
                    break;
                }
                level += 1;
            } else {
                s.swap_failures += 1;
                level = 1;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{swap_delay, Medium, PacketParams};
    use crate::topology::LinkParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clean() -> LinkParams {
        LinkParams {
            d_km: 20.0,
            rb: 1e9,
            rq: 1e6,
            pb: 0.0,
            pq: 0.0,
            tproc: 1e-6,
            tbo: 1e-6,
            pcol: 0.0,
            ..LinkParams::default()
        }
    }

    #[test]
    fn deterministic_chain_matches_closed_form() {
        let link = clean();
        let pkt = PacketParams::default();
        let tr = t_req(&link, pkt, Medium::default()).unwrap();
        let tq = t_tq(&link, 1, Medium::default()).unwrap();
        for s in [0usize, 1, 2, 3, 6] {
            let setup = SimSetup::chain(s, link).unwrap();
            let m = TimingModel::new(&setup).unwrap();
            let mut msgs = MessageStats::default();
            let x = m.sample_proposed(&mut ChaCha8Rng::seed_from_u64(0), &mut msgs);
            let want = swap_delay(s as u32, 1.0, tr, tq).unwrap().total;
            assert!(
                (x.swap - want).abs() <= 1e-12 * want,
                "S={s}: {} vs {want}",
                x.swap
            );
            assert!((x.discovery - 2.0 * (s + 1) as f64 * tr).abs() < 1e-15);
        }
    }
}
