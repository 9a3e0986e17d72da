//! Capacity, ε-capacity and second-order rates of mixed discrete memoryless
//! channels with input costs, plus finite-blocklength bounds.
//!
//! All information quantities are in nats.

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod channel;
pub mod error;
pub mod extended;
pub mod fbl;
pub mod first_order;
pub mod gaussian;
pub mod optimizer;
pub mod search;
pub mod second_order;
pub mod types;
pub mod well_ordered;

pub use channel::{
    channel_dispersion, divergence, mutual_information, output_distribution, Atom, Budget, CostSpec,
    Dmc, InfoStats, InputDist, MixedChannel, SlackParams,
};
pub use error::{Error, Result};
pub use extended::{ExtendedReal, Method};
pub use fbl::{
    crossing_rate, feinstein_bound, hayashi_nagaoka_bound, mc_tail, mixed_converse_bound, normal_approx, spectrum_tail,
    BoundEstimate, BoundKind, CodeParams, InputLaw, McConfig, QFamily, SpectrumCdf,
};
pub use first_order::{eps_capacity, eps_capacity_well_ordered, rate_quantile, EpsCapacityResult, QuantileCurve};
pub use optimizer::{
    capacity_achieving_set, constrained_capacity, kt_verify, CapacityAchievingSet, CapacityResult, KtReport,
};
pub use search::SearchConfig;
pub use second_order::{canonical_solution, gw, second_order_lb, second_order_well_ordered, solve_s, Boundary, SecondOrderResult};
pub use types::{decomposition_check, enumerate_types, expurgated_space, quantized_type, TypeClass};
pub use well_ordered::{capacity_spectrum, check_well_ordered, more_capable, WellOrderReport};
