pub mod corpus;
pub mod ensemble;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod scorers;
