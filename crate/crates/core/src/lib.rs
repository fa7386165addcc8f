//! Prefix scans over approximately associative operators: reference
//! executors, explicit circuits, distributed strategies, a discrete-event
//! simulator, cost formulas and a rigid image registration operator.

pub mod cost;
pub mod global;
pub mod network;
pub mod operator;
pub mod partition;
pub mod registration;
pub mod runtime;
pub mod scaling;
pub mod scan;
pub mod sim;
pub mod strategy;

pub use network::ScanKind;
pub use operator::Operator;
pub use strategy::StrategyVariant;
