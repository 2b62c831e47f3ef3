//! Flow attention for graph neural networks.
//!
//! Standard graph attention normalizes scores over a node's incoming edges.
//! Flow attention normalizes over the sender's outgoing edges instead, so each
//! node distributes one unit of attention among its successors and the weights
//! induce a flow that obeys Kirchhoff's first law.
//!
//! The crate contains a small reverse-mode differentiation engine
//! ([`tensor`]), graph types ([`graph`]), general message-passing layers
//! ([`attention`]), sequential DAG encoders including FlowDAGNN ([`dag`]),
//! flow extraction ([`flow`]), expressivity experiments ([`expressivity`]),
//! training utilities ([`training`]), dataset handling ([`data`]) and
//! gradient checks on fixed instances ([`checks`]).

pub mod attention;
pub mod checks;
pub mod dag;
pub mod data;
pub mod error;
pub mod expressivity;
pub mod flow;
pub mod graph;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
