//! Shared fixtures for the benchmarks.

use hawkes_core::experiments::canonical_truth;
use hawkes_core::priors::{HistPriorSpec, KernelPriorSpec, NuPriorSpec, PriorSpec, SizePriorSpec};
use hawkes_core::sim::simulate_cluster;
use hawkes_core::{EventData, NetworkParams, Priors, Seed};

/// The ten-component reference network and one path of it on `[-1, horizon]`.
pub fn network_and_events(horizon: f64) -> (NetworkParams, EventData) {
    let f = canonical_truth(10).expect("canonical network").params;
    let (events, _) = simulate_cluster(&f, horizon, Seed::new(42, 0)).expect("simulation");
    (f, events)
}

pub fn histogram_priors(dimension: usize) -> Priors {
    let spec = PriorSpec {
        horizon: 1.0,
        size: SizePriorSpec::TruncatedPoisson {
            mean: 2.0,
            cap: dimension,
        },
        kernel: KernelPriorSpec::Histogram(HistPriorSpec {
            mean: 2.0,
            alpha: 1.0,
            max_bins: 64,
            sup_cap: None,
        }),
        nu: NuPriorSpec::with_mean(0.5),
    };
    Priors::new(spec, dimension).expect("valid prior")
}
