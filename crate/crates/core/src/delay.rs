//! Closed-form mean delays of the handshake transmission mode and of the
//! control protocols built on top of it.
//!
//! Every value here is the mean of a geometric retransmission process; the
//! simulator checks them as means.

use thiserror::Error;

use crate::codec::FRAME_BITS;
use crate::topology::LinkParams;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("success probability is zero; expected delay is infinite")]
    ZeroSuccessProbability,
    #[error("swap success probability {0} must lie in (0, 1]")]
    InvalidPSwap(f64),
    #[error("level {level} outside 1..={max}")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("at least one link is required")]
    NoLinks,
}

/// Propagation medium of every link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Medium {
    pub refractive_index: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Medium {
            refractive_index: 1.0,
        }
    }
}

impl Medium {
    pub const FIBER: Medium = Medium {
        refractive_index: 1.468,
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketParams {
    /// Bits per classical packet (N_b).
    pub bits: u32,
    /// Qubits per quantum packet (N_q).
    pub qubits: u32,
}

impl Default for PacketParams {
    fn default() -> Self {
        PacketParams {
            bits: FRAME_BITS,
            qubits: 1,
        }
    }
}

/// Transmission time of `bits` at `rate` bits/s.
pub fn t_tb(bits: u32, rate: f64) -> f64 {
    bits as f64 / rate
}

pub fn t_prop(d_km: f64, medium: Medium) -> f64 {
    d_km * 1000.0 * medium.refractive_index / SPEED_OF_LIGHT
}

/// Probability that one uncoded classical packet arrives intact.
pub fn p_sb(pcol: f64, pb: f64, bits: u32) -> f64 {
    (1.0 - pcol) * (1.0 - pb).powi(bits as i32)
}

/// Probability that at least one of `qubits` survives.
pub fn p_sq(pq: f64, qubits: u32) -> f64 {
    1.0 - pq.powi(qubits as i32)
}

/// Mean delay of one classical request (or ack) over a link. The processing
/// time is charged once, outside the retransmission factor.
pub fn t_req(link: &LinkParams, pkt: PacketParams, medium: Medium) -> Result<f64, DelayError> {
    let ps = p_sb(link.pcol, link.pb, pkt.bits);
    if ps <= 0.0 {
        return Err(DelayError::ZeroSuccessProbability);
    }
    Ok((link.tbo + t_tb(pkt.bits, link.rb) + t_prop(link.d_km, medium)) / ps + link.tproc)
}

pub fn t_ack(link: &LinkParams, pkt: PacketParams, medium: Medium) -> Result<f64, DelayError> {
    t_req(link, pkt, medium)
}

/// Mean delay of one quantum packet; a packet succeeds when any qubit survives.
pub fn t_tq(link: &LinkParams, qubits: u32, medium: Medium) -> Result<f64, DelayError> {
    let ps = p_sq(link.pq, qubits);
    if ps <= 0.0 {
        return Err(DelayError::ZeroSuccessProbability);
    }
    Ok((qubits as f64 / link.rq + t_prop(link.d_km, medium)) / ps + link.tproc)
}

/// Mean delay of one combined header + qubit transmission of the reference
/// wrapper: both go out together, the receiver waits for the later arrival, and
/// any failure resends both.
pub fn t_baseline_packet(
    link: &LinkParams,
    pkt: PacketParams,
    medium: Medium,
) -> Result<f64, DelayError> {
    let ps = p_sb(link.pcol, link.pb, pkt.bits) * p_sq(link.pq, pkt.qubits);
    if ps <= 0.0 {
        return Err(DelayError::ZeroSuccessProbability);
    }
    let attempt = link.tbo
        + t_tb(pkt.bits, link.rb).max(pkt.qubits as f64 / link.rq)
        + t_prop(link.d_km, medium);
    Ok(attempt / ps + link.tproc)
}

fn each_req(
    links: &[LinkParams],
    pkt: PacketParams,
    medium: Medium,
) -> Result<Vec<f64>, DelayError> {
    if links.is_empty() {
        return Err(DelayError::NoLinks);
    }
    links.iter().map(|l| t_req(l, pkt, medium)).collect()
}

/// Discovery: one request and one reply over every link.
pub fn t_disc(links: &[LinkParams], pkt: PacketParams, medium: Medium) -> Result<f64, DelayError> {
    Ok(each_req(links, pkt, medium)?.iter().map(|t| 2.0 * t).sum())
}

/// Path establishment is at least as slow as discovery; no tighter model exists.
pub fn t_est_lower_bound(
    links: &[LinkParams],
    pkt: PacketParams,
    medium: Medium,
) -> Result<f64, DelayError> {
    t_disc(links, pkt, medium)
}

/// Entanglement request phase: all links in parallel, the slowest dominates.
pub fn t_er(links: &[LinkParams], pkt: PacketParams, medium: Medium) -> Result<f64, DelayError> {
    Ok(each_req(links, pkt, medium)?
        .into_iter()
        .map(|t| 2.0 * t)
        .fold(0.0, f64::max))
}

/// Point-to-point qubit distribution: quantum packet plus its ack, slowest link.
pub fn t_ptp(links: &[LinkParams], pkt: PacketParams, medium: Medium) -> Result<f64, DelayError> {
    if links.is_empty() {
        return Err(DelayError::NoLinks);
    }
    let mut worst: f64 = 0.0;
    for l in links {
        worst = worst.max(t_tq(l, pkt.qubits, medium)? + t_ack(l, pkt, medium)?);
    }
    Ok(worst)
}

/// Swap-failure notification at `level`, over the first `level` hops of `links`.
pub fn t_error(
    level: u32,
    max_level: u32,
    links: &[LinkParams],
    pkt: PacketParams,
    medium: Medium,
) -> Result<f64, DelayError> {
    if level == 0 || level > max_level || level as usize > links.len() {
        return Err(DelayError::LevelOutOfRange {
            level,
            max: max_level,
        });
    }
    t_disc(&links[..level as usize], pkt, medium)
}

/// Highest swap level of a circuit with `switches` switches: ⌊S/2⌋ + 1.
pub fn levels(switches: u32) -> u32 {
    switches / 2 + 1
}

/// Number of switches needed to span `distance_km` with links of `link_km`.
pub fn switches_for(distance_km: f64, link_km: f64) -> u32 {
    // Guard against 400/40 landing a hair above 10.
    ((distance_km / link_km) - 1e-9).ceil().max(0.0) as u32
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainParams {
    pub switches: u32,
    pub p_swap: f64,
    pub distance_km: Option<f64>,
    pub link_km: Option<f64>,
}

impl ChainParams {
    pub fn new(switches: u32, p_swap: f64) -> Self {
        ChainParams {
            switches,
            p_swap,
            distance_km: None,
            link_km: None,
        }
    }

    pub fn from_distance(distance_km: f64, link_km: f64, p_swap: f64) -> Self {
        ChainParams {
            switches: switches_for(distance_km, link_km),
            p_swap,
            distance_km: Some(distance_km),
            link_km: Some(link_km),
        }
    }

    pub fn levels(&self) -> u32 {
        levels(self.switches)
    }

    /// Mean number of attempts per successful swap.
    pub fn trials(&self) -> Result<f64, DelayError> {
        if !(self.p_swap > 0.0 && self.p_swap <= 1.0) {
            return Err(DelayError::InvalidPSwap(self.p_swap));
        }
        Ok(1.0 / self.p_swap)
    }
}

/// Split of the end-to-end swap delay into its quantum-channel share and total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwapDelay {
    pub quantum: f64,
    pub total: f64,
}

/// Total swap delay from the per-message means.
///
/// `S <= 1`: `3 T_req + T_tq`. Otherwise
/// `T_tq N^V + T_req (7 N^V + 4 N^(V-1)) + 2 T_req Σ_{v=1}^{V-2} (v+1) N^(V-v-1)`.
pub fn swap_delay(
    switches: u32,
    p_swap: f64,
    t_req: f64,
    t_tq: f64,
) -> Result<SwapDelay, DelayError> {
    if switches <= 1 {
        return Ok(SwapDelay {
            quantum: t_tq,
            total: 3.0 * t_req + t_tq,
        });
    }
    let n = ChainParams::new(switches, p_swap).trials()?;
    let v_max = levels(switches) as i32;
    let quantum = t_tq * n.powi(v_max);
    let notify: f64 = (1..=v_max - 2)
        .map(|v| (v + 1) as f64 * n.powi(v_max - v - 1))
        .sum();
    let total =
        quantum + t_req * (7.0 * n.powi(v_max) + 4.0 * n.powi(v_max - 1)) + 2.0 * t_req * notify;
    Ok(SwapDelay { quantum, total })
}

/// Swap delay of the reference wrapper: each point-to-point distribution
/// (handshake, quantum packet, ack) is replaced by one combined packet of mean
/// `t_baseline`; the swapping messages are unchanged.
pub fn baseline_swap_delay(
    switches: u32,
    p_swap: f64,
    t_req: f64,
    t_tq: f64,
    t_baseline: f64,
) -> Result<SwapDelay, DelayError> {
    if switches <= 1 {
        return Ok(SwapDelay {
            quantum: t_baseline,
            total: t_baseline,
        });
    }
    let n = ChainParams::new(switches, p_swap).trials()?;
    let visits = n.powi(levels(switches) as i32);
    let proposed = swap_delay(switches, p_swap, t_req, t_tq)?;
    Ok(SwapDelay {
        quantum: t_baseline * visits,
        total: proposed.total - visits * (t_tq + 3.0 * t_req - t_baseline),
    })
}

/// Every analytical delay of one homogeneous chain.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayBreakdown {
    pub t_req: f64,
    pub t_ack: f64,
    pub t_tb: f64,
    pub t_prop: f64,
    pub t_tq: f64,
    pub t_disc: f64,
    pub t_est_lower_bound: f64,
    pub t_er: f64,
    pub t_ptp: f64,
    /// Index `v - 1` holds the notification delay at level `v`.
    pub t_error_by_level: Vec<f64>,
    pub t_comp: f64,
    pub t_swap: f64,
    pub quantum_fraction: f64,
}

/// Closed-form delays of a chain of `S` switches and `S + 1` identical links.
pub fn t_swap(
    chain: &ChainParams,
    link: &LinkParams,
    pkt: PacketParams,
    medium: Medium,
) -> Result<DelayBreakdown, DelayError> {
    if chain.switches >= 2 {
        chain.trials()?;
    }
    let t_req = t_req(link, pkt, medium)?;
    let t_tq = t_tq(link, pkt.qubits, medium)?;
    let hops = chain.switches as f64 + 1.0;
    let v_max = chain.levels();
    let swap = swap_delay(chain.switches, chain.p_swap, t_req, t_tq)?;
    let t_error_by_level: Vec<f64> = (1..=v_max).map(|v| 2.0 * v as f64 * t_req).collect();
    Ok(DelayBreakdown {
        t_req,
        t_ack: t_req,
        t_tb: t_tb(pkt.bits, link.rb),
        t_prop: t_prop(link.d_km, medium),
        t_tq,
        t_disc: 2.0 * hops * t_req,
        t_est_lower_bound: 2.0 * hops * t_req,
        t_er: 2.0 * t_req,
        t_ptp: t_tq + t_req,
        t_comp: *t_error_by_level.last().expect("V >= 1"),
        t_error_by_level,
        t_swap: swap.total,
        quantum_fraction: swap.quantum / swap.total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_swaps_one_packet_per_distribution() {
        // S=2, one attempt per level: packet + 4 + 4 requests.
        let b = baseline_swap_delay(2, 1.0, 1.0, 10.0, 12.0).unwrap();
        assert_eq!(b.total, 20.0);
        assert_eq!(
            baseline_swap_delay(1, 0.5, 1.0, 10.0, 12.0).unwrap().total,
            12.0
        );
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    fn link() -> LinkParams {
        LinkParams {
            d_km: 10.0,
            rb: 1e9,
            rq: 1e6,
            pb: 1e-6,
            pq: 0.3,
            tproc: 5e-6,
            tbo: 1e-6,
            pcol: 0.1,
            cc: 1.0,
            cq: 1.0,
        }
    }

    #[test]
    fn transmission_time() {
        assert_eq!(t_tb(320, 1e9), 3.2e-7);
        assert_eq!(t_tb(0, 1e9), 0.0);
        assert!(close(t_tb(1500 * 8, 1e8), 1.2e-4, 1e-15));
    }

    #[test]
    fn propagation_time() {
        assert_eq!(t_prop(0.0, Medium::default()), 0.0);
        assert!(close(t_prop(299_792.458, Medium::default()), 1.0, 1e-15));
        // 50 000 m * 1.468 / c
        assert!(close(
            t_prop(50.0, Medium::FIBER),
            2.448_360_458_754_436e-4,
            1e-12
        ));
    }

    #[test]
    fn packet_success() {
        assert_eq!(p_sb(0.0, 0.0, 320), 1.0);
        assert!(close(p_sb(0.1, 0.0, 320), 0.9, 1e-15));
        // 0.9 * 0.999^320, evaluated with mpmath at 30 digits
        assert!(close(p_sb(0.1, 0.001, 320), 0.653_429_506_518_306_7, 1e-12));
    }

    #[test]
    fn request_delay() {
        let ideal = LinkParams {
            tbo: 0.0,
            tproc: 0.0,
            pcol: 0.0,
            pb: 0.0,
            ..link()
        };
        let pkt = PacketParams::default();
        let m = Medium::default();
        assert!(close(
            t_req(&ideal, pkt, m).unwrap(),
            t_tb(320, 1e9) + t_prop(10.0, m),
            1e-15
        ));

        // halving P_sb doubles the retransmission term
        let a = LinkParams {
            tproc: 0.0,
            pb: 0.0,
            pcol: 0.0,
            ..link()
        };
        let b = LinkParams { pcol: 0.5, ..a };
        assert!(close(
            t_req(&b, pkt, m).unwrap(),
            2.0 * t_req(&a, pkt, m).unwrap(),
            1e-14
        ));

        // (1e-6 + 3.2e-7 + 1e4/c) / (0.9 * (1 - 1e-6)^320) + 5e-6, via mpmath
        assert!(close(
            t_req(&link(), pkt, m).unwrap(),
            4.354_167_528_003_679e-5,
            1e-10
        ));

        let dead = LinkParams {
            pcol: 1.0,
            ..link()
        };
        assert_eq!(
            t_req(&dead, pkt, m),
            Err(DelayError::ZeroSuccessProbability)
        );
    }

    #[test]
    fn quantum_delay() {
        let m = Medium::default();
        let base = LinkParams { pq: 0.0, ..link() };
        let expect = 1.0 / 1e6 + t_prop(10.0, m) + 5e-6;
        assert!(close(t_tq(&base, 1, m).unwrap(), expect, 1e-15));

        let half = LinkParams {
            pq: 0.5,
            tproc: 0.0,
            ..link()
        };
        let none = LinkParams {
            pq: 0.0,
            tproc: 0.0,
            ..link()
        };
        assert!(close(
            t_tq(&half, 1, m).unwrap(),
            2.0 * t_tq(&none, 1, m).unwrap(),
            1e-15
        ));

        assert!(close(p_sq(0.9, 100), 0.999_973_438_601_112_4, 1e-14));
        let dead = LinkParams { pq: 1.0, ..link() };
        assert_eq!(t_tq(&dead, 100, m), Err(DelayError::ZeroSuccessProbability));
    }

    #[test]
    fn discovery_sums_links() {
        let m = Medium::default();
        let pkt = PacketParams::default();
        let r = t_req(&link(), pkt, m).unwrap();
        assert!(close(t_disc(&[link(); 4], pkt, m).unwrap(), 8.0 * r, 1e-14));
        assert!(close(t_disc(&[link()], pkt, m).unwrap(), 2.0 * r, 1e-15));

        let hetero = [
            link(),
            LinkParams {
                d_km: 40.0,
                ..link()
            },
            LinkParams {
                pcol: 0.3,
                ..link()
            },
        ];
        let expect: f64 = hetero.iter().map(|l| 2.0 * t_req(l, pkt, m).unwrap()).sum();
        assert!(close(t_disc(&hetero, pkt, m).unwrap(), expect, 1e-15));
        assert_eq!(t_disc(&[], pkt, m), Err(DelayError::NoLinks));
        assert_eq!(
            t_est_lower_bound(&[link(); 6], pkt, m).unwrap(),
            t_disc(&[link(); 6], pkt, m).unwrap()
        );
    }

    #[test]
    fn parallel_phases_take_the_slowest() {
        let m = Medium::default();
        let pkt = PacketParams::default();
        let fast = LinkParams {
            tbo: 0.0,
            pb: 0.0,
            pcol: 0.0,
            tproc: 1e-3,
            d_km: 0.0,
            ..link()
        };
        let slow = LinkParams {
            tproc: 3e-3,
            ..fast
        };
        let er = t_er(&[fast, slow], pkt, m).unwrap();
        let req_slow = t_req(&slow, pkt, m).unwrap();
        assert!(close(er, 2.0 * req_slow, 1e-15));
        let hom = t_ptp(&[link(); 3], pkt, m).unwrap();
        assert!(close(
            hom,
            t_tq(&link(), 1, m).unwrap() + t_ack(&link(), pkt, m).unwrap(),
            1e-15
        ));
    }

    #[test]
    fn error_notification() {
        let m = Medium::default();
        let pkt = PacketParams::default();
        let r = t_req(&link(), pkt, m).unwrap();
        let links = [link(); 5];
        assert!(close(
            t_error(1, 3, &links, pkt, m).unwrap(),
            2.0 * r,
            1e-15
        ));
        assert!(close(
            t_error(3, 3, &links, pkt, m).unwrap(),
            6.0 * r,
            1e-15
        ));
        assert_eq!(
            t_error(4, 3, &links, pkt, m),
            Err(DelayError::LevelOutOfRange { level: 4, max: 3 })
        );
        let b = t_swap(&ChainParams::new(4, 1.0), &link(), pkt, m).unwrap();
        assert_eq!(b.t_comp, b.t_error_by_level[2]);
    }

    #[test]
    fn level_count() {
        let v: Vec<u32> = (0..=6).map(levels).collect();
        assert_eq!(v, [1, 1, 2, 2, 3, 3, 4]);
        assert_eq!(switches_for(400.0, 40.0), 10);
        assert_eq!(switches_for(400.0, 70.0), 6);
        assert_eq!(switches_for(400.0, 50.0), 8);
        assert_eq!(switches_for(400.0, 100.0), 4);
    }

    #[test]
    fn swap_small_chains() {
        let s0 = swap_delay(0, 0.5, 1.0, 10.0).unwrap();
        assert_eq!(s0.total, 13.0);
        assert_eq!(s0, swap_delay(1, 0.5, 1.0, 10.0).unwrap());
        // S=2, P_swap=1: t_tq + 11 t_req
        assert_eq!(swap_delay(2, 1.0, 1.0, 10.0).unwrap().total, 21.0);
        // S=5, P_swap=0.5: 8 t_tq + 80 t_req (sympy)
        let s5 = swap_delay(5, 0.5, 1.0, 10.0).unwrap();
        assert_eq!(s5.total, 160.0);
        assert_eq!(s5.quantum, 80.0);
        assert_eq!(
            swap_delay(4, 0.0, 1.0, 1.0),
            Err(DelayError::InvalidPSwap(0.0))
        );
    }

    #[test]
    fn breakdown_is_consistent() {
        let m = Medium::FIBER;
        let pkt = PacketParams {
            bits: 320,
            qubits: 100,
        };
        let b = t_swap(&ChainParams::new(6, 0.8), &link(), pkt, m).unwrap();
        assert!(close(b.t_disc, 14.0 * b.t_req, 1e-14));
        assert_eq!(b.t_error_by_level.len(), 4);
        assert!(b.quantum_fraction > 0.0 && b.quantum_fraction < 1.0);
        let sd = swap_delay(6, 0.8, b.t_req, b.t_tq).unwrap();
        assert_eq!(b.t_swap, sd.total);
    }

    #[test]
    fn baseline_failure_free() {
        let m = Medium::default();
        let l = LinkParams {
            pb: 0.0,
            pq: 0.0,
            pcol: 0.0,
            tbo: 0.0,
            ..link()
        };
        let pkt = PacketParams {
            bits: 320,
            qubits: 100,
        };
        let expect =
            (t_tb(320, l.rb) + t_prop(l.d_km, m)).max(100.0 / l.rq + t_prop(l.d_km, m)) + l.tproc;
        assert!(close(t_baseline_packet(&l, pkt, m).unwrap(), expect, 1e-15));
    }
}
