//! Fixtures shared by the benchmarks.

use cace_core::design::sample_cre;
use cace_core::rng::stream;
use cace_core::simulation::{generate_population, DgpConfig};
use cace_core::{FinitePopulation, ObservedDataset};

pub fn population(n: usize, k: usize) -> FinitePopulation {
    let cfg = DgpConfig {
        dgp: 1,
        n,
        k,
        p_co: 0.5,
        error_case: 2,
        seed: 17,
    };
    generate_population(&cfg).expect("fixture settings are feasible")
}

pub fn dataset(n: usize, k: usize) -> ObservedDataset {
    let pop = population(n, k);
    let a = sample_cre(n, n / 2, &mut stream(17, &[1])).expect("valid margins");
    pop.reveal(&a).expect("assignment matches population")
}
