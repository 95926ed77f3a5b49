//! Fixtures shared by the criterion benches.

use spf_core::experiment::{Instance, Scenario, SineParams};
use spf_core::{Purpose, RngStream, StateVector};

/// `n` standard normal states of dimension `d`.
pub fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<StateVector> {
    let mut rng = RngStream::new(seed);
    (0..n).map(|_| rng.standard_normal_vector(d)).collect()
}

/// Sine-bank instance with `n_fns` functions over `horizon` steps.
pub fn sine_instance(n_fns: usize, horizon: usize, seed: u64) -> Instance {
    let scenario = Scenario::SineBank(SineParams {
        n_fns,
        ..SineParams::default()
    });
    let rep = RngStream::new(seed).child(0, Purpose::Repeat);
    Instance::simulate(
        &scenario,
        horizon,
        &mut rep.child(0, Purpose::Truth),
        &mut rep.child(0, Purpose::Observation),
    )
    .expect("sine-bank scenario is valid")
}
