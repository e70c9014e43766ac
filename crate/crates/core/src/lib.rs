//! Hybrid-SDN traffic engineering: an OSPF/ECMP flow simulator, a
//! multi-agent DDPG trainer with counterfactual credit assignment for
//! learning per-switch traffic-splitting ratios that minimize maximum link
//! utilization, and brute-force oracles for verification.

pub mod env;
pub mod marl;
pub mod nn;
pub mod oracle;
pub mod routing;
pub mod test_fixtures;
pub mod topology;
pub mod traffic;

pub use routing::{JointAction, LinkLoads, RoutingPolicy, SplitAction, UtilizationState};
pub use topology::{AdmissibleSets, DistanceTable, DirectedLink, NodeKind, Topology};
pub use traffic::{TmSeries, TrafficMatrix};
