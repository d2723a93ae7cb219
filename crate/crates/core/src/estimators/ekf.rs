use nalgebra::DMatrix;

use crate::graph::Representation;
use crate::linalg::symmetrize;

use super::{EstimationError, GaussianBelief, ProcessModel};

/// State Jacobian at the current mean. Only the reciprocal representation is
/// accepted: with `p = RC` the parameter sensitivity scales as `1/p^2` and
/// blows up on poor initial estimates.
pub fn ekf_jacobian<M: ProcessModel>(
    belief: &GaussianBelief,
    model: &M,
    input: &[f64],
    dt: f64,
) -> Result<DMatrix<f64>, EstimationError> {
    if model.representation() != Representation::RcReciprocal {
        return Err(EstimationError::RepresentationMismatch);
    }
    model.jacobian(belief.mean(), input, dt)
}

/// `x <- f(x)`, `P <- F P F^T + Q`.
pub fn ekf_predict<M: ProcessModel>(
    belief: &mut GaussianBelief,
    model: &M,
    input: &[f64],
    q: &DMatrix<f64>,
    dt: f64,
) -> Result<(), EstimationError> {
    let f = ekf_jacobian(belief, model, input, dt)?;
    let mean = model.propagate(belief.mean(), input, dt)?;
    let mut p = &f * &belief.covariance * f.transpose() + q;
    symmetrize(&mut p);
    belief.state.mean = mean;
    belief.covariance = p;
    belief.check_finite()
}
