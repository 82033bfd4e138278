//! Per-link samplers of the handshake transmission mode.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::codec::FRAME_BITS;
use crate::delay::{t_prop, Medium};
use crate::topology::LinkParams;

/// Time spent delivering one packet, and how many attempts it took.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transfer {
    pub time: f64,
    pub attempts: u32,
}

/// Outcome of one classical frame attempt at the bit level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attempt {
    Collided,
    /// Delivered with this many flipped bits (possibly zero).
    Flipped(usize),
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub params: LinkParams,
    pub medium: Medium,
    pub bits: u32,
    t_prop: f64,
    bit_errors: Binomial,
}

impl Channel {
    pub fn new(params: LinkParams, medium: Medium) -> Self {
        Self::with_bits(params, medium, FRAME_BITS)
    }

    pub fn with_bits(params: LinkParams, medium: Medium, bits: u32) -> Self {
        Channel {
            params,
            medium,
            bits,
            t_prop: t_prop(params.d_km, medium),
            bit_errors: Binomial::new(bits as u64, params.pb).expect("pb validated in [0, 1]"),
        }
    }

    pub fn t_prop(&self) -> f64 {
        self.t_prop
    }

    /// Duration of one classical attempt, successful or not.
    pub fn classical_attempt_time(&self) -> f64 {
        self.params.tbo + self.bits as f64 / self.params.rb + self.t_prop
    }

    pub fn quantum_attempt_time(&self, qubits: u32) -> f64 {
        qubits as f64 / self.params.rq + self.t_prop
    }

    fn classical_ok<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        !rng.random_bool(self.params.pcol) && self.bit_errors.sample(rng) == 0
    }

    fn quantum_ok<R: Rng + ?Sized>(&self, rng: &mut R, qubits: u32) -> bool {
        self.survivors(rng, qubits) > 0
    }

    /// Qubits of one packet that survive the channel.
    pub fn survivors<R: Rng + ?Sized>(&self, rng: &mut R, qubits: u32) -> u32 {
        Binomial::new(qubits as u64, 1.0 - self.params.pq)
            .expect("pq validated in [0, 1]")
            .sample(rng) as u32
    }

    /// One classical request or ack, retransmitted until intact.
    pub fn classical<R: Rng + ?Sized>(&self, rng: &mut R) -> Transfer {
        self.repeat(rng, self.classical_attempt_time(), |r| self.classical_ok(r))
    }

    /// One quantum packet, resent until at least one qubit survives.
    pub fn quantum<R: Rng + ?Sized>(&self, rng: &mut R, qubits: u32) -> Transfer {
        self.repeat(rng, self.quantum_attempt_time(qubits), |r| {
            self.quantum_ok(r, qubits)
        })
    }

    /// Header and qubits sent together; any failure resends both.
    pub fn baseline<R: Rng + ?Sized>(&self, rng: &mut R, qubits: u32) -> Transfer {
        let attempt = self.params.tbo
            + (self.bits as f64 / self.params.rb).max(qubits as f64 / self.params.rq)
            + self.t_prop;
        self.repeat(rng, attempt, |r| {
            // Both draws always happen so the stream does not depend on order.
            let c = self.classical_ok(r);
            let q = self.quantum_ok(r, qubits);
            c && q
        })
    }

    fn repeat<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        attempt: f64,
        mut ok: impl FnMut(&mut R) -> bool,
    ) -> Transfer {
        let mut attempts = 1;
        while !ok(rng) {
            attempts += 1;
        }
        Transfer {
            time: attempts as f64 * attempt + self.params.tproc,
            attempts,
        }
    }

    /// Sends `bytes` once: either the frame is lost to a collision or each bit
    /// is flipped independently with probability `pb`.
    pub fn corrupt<R: Rng + ?Sized>(&self, rng: &mut R, bytes: &mut [u8]) -> Attempt {
        if rng.random_bool(self.params.pcol) {
            return Attempt::Collided;
        }
        let nbits = bytes.len() * 8;
        let flips = if nbits == self.bits as usize {
            self.bit_errors.sample(rng) as usize
        } else {
            Binomial::new(nbits as u64, self.params.pb)
                .expect("pb validated in [0, 1]")
                .sample(rng) as usize
        };
        if flips > 0 {
            for bit in index::sample(rng, nbits, flips) {
                bytes[bit / 8] ^= 0x80 >> (bit % 8);
            }
        }
        Attempt::Flipped(flips)
    }
}
