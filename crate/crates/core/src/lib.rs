//! Layered construction of differentially private mechanisms over finite
//! metric spaces of datasets and query values.
//!
//! A mechanism is described by a layer sequence: for every dataset `x` the
//! value support is partitioned into layers `R_0^x, R_1^x, …`, and a point
//! in layer `i` gets probability `exp(−iε) / α^x`. Layer sequences are
//! regenerated from small sets of initial values by a construction rule
//! driven by the dataset metric.

pub mod baselines;
pub mod builders;
pub mod distribution;
pub mod error;
pub mod graphs;
pub mod interval;
pub mod io;
pub mod layers;
pub mod metric;
pub mod rng;
pub mod verify;

pub use builders::{
    approximate_via, build_atomic, build_delta_neighborhood, build_purest, compose, migrate,
    predict_utility_change, Migration, ProductMechanism, UtilityChange,
};
pub use distribution::{
    expected_utility, sample, sample_many, to_distribution, DenseMechanism, LayeredDistribution,
    Mechanism, Prior,
};
pub use error::{Error, Result};
pub use graphs::{enumerate_graphs, GraphClass, GraphUniverse};
pub use interval::{layers_linear, IntervalUnion, LinearLayers, LinearQuerySpec};
pub use layers::{
    discretize, extract_initial_values, reconstruct, validate_membership_c, DatasetInit,
    DiscretizationContext, Extra, InitialValues, LayerSequence, Normalization, ValueSet, Verdict,
    Violation,
};
pub use metric::{DatasetSpace, MetricSpacePair, QueryFunction, ValueSpace};
pub use rng::SplitMix64;
pub use verify::{
    check_basic, check_discretization_bounds, check_group_privacy, check_layer_adjacency,
    effective_epsilon, AuditReport,
};
