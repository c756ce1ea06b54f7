//! Planning and analysis for public EV charging networks.
//!
//! - [`geo`], [`ingest`], [`road`]: coordinates and input data
//! - [`charging`]: CCCV charge times and EV ranges
//! - [`congestion`]: demand assignment and waiting times
//! - [`robustness`]: centrality and percolation on the charger graph
//! - [`siting`]: coverage and k-means site proposals
//! - [`router`]: congestion-aware charging-stop planning
//! - [`export`]: CSV and GeoJSON output

pub mod charging;
pub mod congestion;
pub mod export;
pub mod geo;
pub mod ingest;
pub mod road;
pub mod robustness;
pub mod router;
pub mod siting;
