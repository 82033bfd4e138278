//! Quantum-network entanglement distribution: topology and spanning tree,
//! the 40-byte control frame, analytical delay models, per-node protocol
//! state machines and a Monte-Carlo simulator.

pub mod codec;
pub mod delay;
pub mod experiment;
pub mod protocols;
pub mod scenario;
pub mod sim;
pub mod topology;
