use super::config::Algorithm;
use super::resample::low_variance_resample;
use super::{Diagnostics, FilterState};
use crate::error::Result;
use crate::metrics::effective_sample_size;
use crate::models::{ObservationModel, TransitionModel};
use crate::particles::{ControlInput, Observation, ParticleSet};
use crate::rng::RngStream;

/// Bootstrap step: propagate, weight by the likelihood, resample.
///
/// With resampling disabled the weights carry over and multiply, which is
/// sequential importance sampling. If every weight underflows the set is
/// reset to uniform weights and the event is counted.
pub fn pf_step(
    state: &mut FilterState,
    u: &ControlInput,
    z: Option<&Observation>,
    transition: &dyn TransitionModel,
    obs: &dyn ObservationModel,
    rng: &mut RngStream,
) -> Result<()> {
    let resample = !matches!(state.config.algorithm, Algorithm::Particle { resample: false });
    let n = state.particles.len();
    let prior_log_w: Vec<f64> = (0..n).map(|j| state.particles.weight(j).ln()).collect();
    let states: Vec<_> = state
        .particles
        .states()
        .iter()
        .map(|x| transition.propagate(x, u, rng))
        .collect();
    state.step += 1;
    state.diagnostics = Diagnostics::default();

    let Some(z) = z else {
        state.particles = match state.particles.weights() {
            Some(w) => ParticleSet::with_weights(states, w.to_vec())?,
            None => ParticleSet::new(states)?,
        };
        return Ok(());
    };

    let evals: Vec<_> = states.iter().map(|x| obs.evaluate(x, z)).collect();
    state.log_likelihoods = evals.iter().map(|e| e.log_likelihood).collect();
    state.log_densities = state.log_likelihoods.clone();
    state.diagnostics.out_of_bounds = evals.iter().map(|e| e.out_of_bounds).sum();
    state.diagnostics.updated = true;

    let log_w: Vec<f64> = prior_log_w
        .iter()
        .zip(&state.log_likelihoods)
        .map(|(a, b)| a + b)
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = if max.is_finite() {
        let raw: Vec<f64> = log_w
            .iter()
            .map(|l| if l.is_nan() { 0.0 } else { (l - max).exp() })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    } else {
        state.zero_weight_resets += 1;
        log::warn!("{}: all particle weights vanished at step {}; reset to uniform", state.config.name, state.step);
        vec![1.0 / n as f64; n]
    };
    state.diagnostics.ess = Some(effective_sample_size(&weights));

    state.particles = if resample {
        let idx = low_variance_resample(&weights, rng);
        state.log_likelihoods = idx.iter().map(|&i| state.log_likelihoods[i]).collect();
        state.log_densities = state.log_likelihoods.clone();
        ParticleSet::new(idx.into_iter().map(|i| states[i].clone()).collect())?
    } else {
        ParticleSet::with_weights(states, weights)?
    };
    Ok(())
}
