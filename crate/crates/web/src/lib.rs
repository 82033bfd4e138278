//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export is a thin wrapper over a plain Rust function so the same
//! logic is exercised by native tests.

use qswap::codec::{decode_hex_line, to_hex_line, MacAddr, MessageType, QpFrame};
use qswap::delay::{switches_for, Medium};
use qswap::experiment::analyze_setup;
use qswap::sim::{monte_carlo, Mode, SimOptions, SimSetup};
use qswap::topology::{fiber_loss, LinkParams};
use wasm_bindgen::prelude::*;

/// Link lengths (km) plotted by [`delay_curve`].
pub const LINK_LENGTHS: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

fn link(l_km: f64, pcol: f64, rq: f64) -> LinkParams {
    LinkParams {
        rq,
        pcol,
        pb: 1e-6,
        tbo: 1e-6,
        tproc: 5e-6,
        pq: fiber_loss(l_km, 0.2),
        d_km: l_km,
        ..LinkParams::default()
    }
}

fn chain(
    distance_km: f64,
    l_km: f64,
    pcol: f64,
    rq: f64,
    qubits: u32,
    p_swap: f64,
) -> Result<SimSetup, String> {
    let s = switches_for(distance_km, l_km) as usize;
    Ok(SimSetup::chain(s, link(l_km, pcol, rq))
        .map_err(|e| e.to_string())?
        .with_medium(Medium::FIBER)
        .with_qubits(qubits)
        .with_p_swap(p_swap))
}

#[wasm_bindgen]
pub fn link_lengths() -> Vec<f64> {
    LINK_LENGTHS.to_vec()
}

/// Closed-form swap delay (seconds) of a `distance_km` chain for each entry of
/// [`LINK_LENGTHS`]; `NaN` where the delay is undefined.
#[wasm_bindgen]
pub fn delay_curve(distance_km: f64, p_swap: f64, qubits: u32, pcol: f64) -> Vec<f64> {
    LINK_LENGTHS
        .iter()
        .map(|&l| {
            chain(distance_km, l, pcol, 1e9, qubits, p_swap)
                .ok()
                .and_then(|s| analyze_setup(&s).ok())
                .map_or(f64::NAN, |a| a.t_swap)
        })
        .collect()
}

/// Proposed stack against the reference wrapper on one chain.
///
/// Returns `[proposed mean, proposed se, baseline mean, baseline se,
/// proposed analytic, baseline analytic]`, all swap-phase delays in seconds.
#[allow(clippy::too_many_arguments)]
pub fn compare_modes(
    switches: u32,
    l_km: f64,
    pcol: f64,
    rq: f64,
    qubits: u32,
    p_swap: f64,
    reps: u32,
    seed: u64,
) -> Result<[f64; 6], String> {
    let setup = SimSetup::chain(switches as usize, link(l_km, pcol, rq))
        .map_err(|e| e.to_string())?
        .with_medium(Medium::FIBER)
        .with_qubits(qubits)
        .with_p_swap(p_swap);
    let a = analyze_setup(&setup).map_err(|e| e.to_string())?;
    let run = |mode| {
        monte_carlo(
            &setup,
            mode,
            reps.max(1) as u64,
            seed,
            SimOptions::default(),
        )
        .map_err(|e| e.to_string())
    };
    let (p, b) = (run(Mode::Proposed)?, run(Mode::Baseline)?);
    Ok([
        p.swap.mean,
        p.swap.se(),
        b.swap.mean,
        b.swap.se(),
        a.t_swap,
        a.t_swap_baseline,
    ])
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn compare(
    switches: u32,
    l_km: f64,
    pcol: f64,
    rq: f64,
    qubits: u32,
    p_swap: f64,
    reps: u32,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    compare_modes(switches, l_km, pcol, rq, qubits, p_swap, reps, seed)
        .map(|r| r.to_vec())
        .map_err(|e| JsError::new(&e))
}

/// Hex line of a frame between two locally administered addresses.
pub fn encode_hex(
    msg_type: u8,
    seq: u32,
    e2e_id: u64,
    level: u8,
    token_id: u16,
) -> Result<String, String> {
    let t = MessageType::try_from(msg_type).map_err(|e| e.to_string())?;
    let mut f = QpFrame::new(MacAddr::local(2), MacAddr::local(1), t, seq, e2e_id);
    f.qp.level = level;
    f.qp.token_id = token_id;
    Ok(to_hex_line(&f))
}

/// One `field value` pair per line.
pub fn describe_hex(line: &str) -> Result<String, String> {
    let f = decode_hex_line(line).map_err(|e| e.to_string())?;
    Ok(format!(
        "dst         {}\nsrc         {}\nether_type  0x{:04x}\npayload_len {}\nseq         {}\nack_seq     {}\nmsg_type    {} ({})\nack         {}\ne2e_id      {:016x}\nlevel       {}\ntoken_id    {}",
        f.eth.dst,
        f.eth.src,
        f.eth.ether_type,
        f.eth.payload_len,
        f.qp.seq,
        f.qp.ack_seq,
        f.qp.msg_type,
        f.qp.msg_type.code(),
        f.qp.ack,
        f.qp.e2e_id,
        f.qp.level,
        f.qp.token_id
    ))
}

#[wasm_bindgen]
pub fn encode_frame(
    msg_type: u8,
    seq: u32,
    e2e_id: u64,
    level: u8,
    token_id: u16,
) -> Result<String, JsError> {
    encode_hex(msg_type, seq, e2e_id, level, token_id).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn decode_frame(line: &str) -> Result<String, JsError> {
    describe_hex(line).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn message_types() -> Vec<String> {
    MessageType::ALL
        .iter()
        .map(|t| t.name().to_owned())
        .collect()
}
