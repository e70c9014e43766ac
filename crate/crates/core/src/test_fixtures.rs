//! Small shared topologies used by unit tests, integration tests, and benches.

/// Diamond with one SDN switch at node 0 (see `fixtures/square.topo`).
pub const SQUARE: &str = include_str!("../../../fixtures/square.topo");

/// 12-node / 15-edge topology with four SDN switches
/// (see `fixtures/abilene.topo`).
pub const ABILENE_LIKE: &str = include_str!("../../../fixtures/abilene.topo");
