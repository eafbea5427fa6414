//! Shared benchmark fixtures: canonical models and prepared instances.

use grfx_core::{
    CovarianceSpec, Domain, FieldModel, Instance, MeanSpec, MeasureParams, Tuning,
};

/// Zero-mean unit-variance field with the standardized Gaussian kernel on
/// `[0, 1]^d`.
pub fn standard_model(d: usize, sigma: f64) -> FieldModel {
    FieldModel::new(
        Domain::new(vec![0.0; d], vec![1.0; d]).unwrap(),
        sigma,
        CovarianceSpec::squared_exponential(d),
        MeanSpec::Zero,
    )
    .unwrap()
}

/// Instance of the standard model at the given lattice density.
pub fn prepared(d: usize, sigma: f64, n_per_unit: u32) -> Instance {
    Instance::prepare(standard_model(d, sigma), n_per_unit).unwrap()
}

/// Change-of-measure parameters at threshold `b` under the default tuning.
pub fn measured(inst: &Instance, b: f64) -> MeasureParams {
    inst.measure(b, Tuning::default_for(b).unwrap()).unwrap()
}
