//! Time-dependent functionals `u(t, X_t)`: Fukushima decomposition, energy, CAF integrals,
//! Laplace transforms, Revuz pairing and the semimartingale dichotomy.

pub mod battery;
mod energy;
mod fukushima;
mod revuz;
mod semimartingale;

pub use energy::{energy, squared_weight_mass, EnergyEstimate, EnergyVerdict};
pub use fukushima::{
    additive_functional, caf_integral, compose_functional, fukushima_decompose, realized_drift_variation,
    time_integral, Fukushima,
};
pub use revuz::{laplace_transform, revuz_check, stieltjes_mean, RevuzMeasure};
pub use semimartingale::{
    rough_vector_field, semimartingale_test, solution_norm, sup_moment_check, weighted_sup_moment,
    SemimartingaleReport, SemimartingaleVerdict, GROWTH_SLOPE, PLATEAU_SLOPE, QV_DECAY_SLOPE,
};
