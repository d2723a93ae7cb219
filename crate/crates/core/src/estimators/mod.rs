//! Kalman filtering over the augmented state.
//!
//! The state stacks zone temperatures, RC parameters and disturbance biases.
//! Measurements are the zone temperatures, so every filter shares the same
//! linear update; EKF and UKF differ only in how they predict.

mod ekf;
mod model;
mod ukf;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, Representation};
use crate::linalg::{is_psd, symmetrize};

pub use ekf::{ekf_jacobian, ekf_predict};
pub use model::{LinearModel, ProcessModel, ThermalModel};
pub use ukf::{ukf_predict, ukf_sigma_points, SigmaPoints};

/// Innovation covariances with a larger condition number are singular.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("EKF requires the reciprocal (1/RC) representation")]
    RepresentationMismatch,
    #[error("innovation covariance is singular")]
    SingularUpdate,
    #[error("non-finite value in state or covariance")]
    NonFinite,
    #[error("covariance square root failed after jitter escalation")]
    SquareRootFailed,
    #[error("covariance is not positive semi-definite")]
    Indefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl EstimationError {
    /// Numerical breakdowns that abort a run, as opposed to caller mistakes.
    pub fn is_instability(&self) -> bool {
        matches!(
            self,
            EstimationError::SingularUpdate
                | EstimationError::NonFinite
                | EstimationError::SquareRootFailed
                | EstimationError::Indefinite
                | EstimationError::Graph(GraphError::ZeroDenominator { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ekf,
    Ukf,
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterKind::Ekf => "EKF",
            FilterKind::Ukf => "UKF",
        })
    }
}

/// Segment sizes of the augmented state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub temps: usize,
    pub params: usize,
    pub biases: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.temps + self.params + self.biases
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn temp_range(&self) -> Range<usize> {
        0..self.temps
    }

    pub fn param_range(&self) -> Range<usize> {
        self.temps..self.temps + self.params
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.temps + self.params..self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub layout: StateLayout,
    pub mean: DVector<f64>,
    pub representation: Representation,
}

impl AugmentedState {
    pub fn temps(&self) -> &[f64] {
        &self.mean.as_slice()[self.layout.temp_range()]
    }

    pub fn params(&self) -> &[f64] {
        &self.mean.as_slice()[self.layout.param_range()]
    }

    pub fn biases(&self) -> &[f64] {
        &self.mean.as_slice()[self.layout.bias_range()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub state: AugmentedState,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(layout: StateLayout, representation: Representation, mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        assert_eq!(mean.len(), layout.len());
        assert_eq!(covariance.shape(), (layout.len(), layout.len()));
        Self {
            state: AugmentedState {
                layout,
                mean,
                representation,
            },
            covariance,
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.state.mean
    }

    pub fn layout(&self) -> StateLayout {
        self.state.layout
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[(i, i)]
    }

    fn check_finite(&self) -> Result<(), EstimationError> {
        if self.state.mean.iter().chain(self.covariance.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(EstimationError::NonFinite)
        }
    }
}

/// Process (`q`, full state) and measurement (`r`, temperatures) covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl NoiseModel {
    /// Block-diagonal noise: one variance per segment.
    pub fn block_diagonal(layout: StateLayout, temp_q: f64, param_q: f64, bias_q: f64, meas_r: f64) -> Self {
        let mut q = DMatrix::zeros(layout.len(), layout.len());
        for i in layout.temp_range() {
            q[(i, i)] = temp_q;
        }
        for i in layout.param_range() {
            q[(i, i)] = param_q;
        }
        for i in layout.bias_range() {
            q[(i, i)] = bias_q;
        }
        Self {
            q,
            r: DMatrix::identity(layout.temps, layout.temps) * meas_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPointConfig {
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
}

impl Default for SigmaPointConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            kappa: 0.0,
            beta: 2.0,
        }
    }
}

impl SigmaPointConfig {
    /// `lambda = alpha^2 (L + kappa) - L`.
    pub fn lambda(&self, l: usize) -> f64 {
        let l = l as f64;
        self.alpha * self.alpha * (l + self.kappa) - l
    }

    /// Mean and covariance weights, index 0 first.
    pub fn weights(&self, l: usize) -> (Vec<f64>, Vec<f64>) {
        let lambda = self.lambda(l);
        let s = l as f64 + lambda;
        let wi = 1.0 / (2.0 * s);
        let mut wm = vec![wi; 2 * l + 1];
        let mut wc = wm.clone();
        wm[0] = lambda / s;
        wc[0] = lambda / s + (1.0 - self.alpha * self.alpha + self.beta);
        (wm, wc)
    }
}

/// Linear Kalman update with `H = [I_n | 0]`.
///
/// States flagged in `frozen` get a zero gain row, so their means are left
/// untouched.
pub fn kf_update(
    belief: &mut GaussianBelief,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    frozen: Option<&[bool]>,
) -> Result<(), EstimationError> {
    let n = belief.layout().temps;
    let len = belief.layout().len();
    if z.len() != n || r.shape() != (n, n) {
        return Err(EstimationError::Dimension(format!(
            "measurement has {} entries for {n} temperatures",
            z.len()
        )));
    }
    let p = &belief.covariance;
    let innovation = z - belief.state.mean.rows(0, n);
    let mut s = p.view((0, 0), (n, n)) + r;
    symmetrize(&mut s);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(EstimationError::NonFinite);
    }
    let (lo, hi) = crate::linalg::eigen_range(&s);
    if !(lo > 0.0) || hi / lo > MAX_INNOVATION_CONDITION {
        return Err(EstimationError::SingularUpdate);
    }
    let s_inv = s.cholesky().ok_or(EstimationError::SingularUpdate)?.inverse();
    let pht = p.columns(0, n).into_owned();
    let mut k = &pht * s_inv;
    if let Some(mask) = frozen {
        for (i, &f) in mask.iter().enumerate().take(len) {
            if f {
                k.row_mut(i).fill(0.0);
            }
        }
    }
    belief.state.mean += &k * innovation;
    let hp = p.rows(0, n).into_owned();
    belief.covariance -= &k * hp;
    symmetrize(&mut belief.covariance);
    belief.check_finite()
}

/// One predict plus one update. Any error marks the step unstable.
#[allow(clippy::too_many_arguments)]
pub fn filter_step<M: ProcessModel>(
    kind: FilterKind,
    belief: &mut GaussianBelief,
    model: &M,
    input: &[f64],
    z: Option<&DVector<f64>>,
    noise: &NoiseModel,
    dt: f64,
    cfg: &SigmaPointConfig,
    frozen: Option<&[bool]>,
) -> Result<(), EstimationError> {
    match kind {
        FilterKind::Ekf => ekf_predict(belief, model, input, &noise.q, dt)?,
        FilterKind::Ukf => ukf_predict(belief, model, input, &noise.q, dt, cfg)?,
    }
    if let Some(z) = z {
        kf_update(belief, z, &noise.r, frozen)?;
    }
    if !is_psd(&belief.covariance) {
        return Err(EstimationError::Indefinite);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_belief(mean: f64, var: f64) -> GaussianBelief {
        GaussianBelief::new(
            StateLayout {
                temps: 1,
                params: 0,
                biases: 0,
            },
            Representation::RcReciprocal,
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )
    }

    #[test]
    fn scalar_update_by_hand() {
        let mut b = scalar_belief(0.0, 1.0);
        kf_update(&mut b, &DVector::from_element(1, 1.0), &DMatrix::from_element(1, 1, 1.0), None).unwrap();
        assert_relative_eq!(b.mean()[0], 0.5);
        assert_relative_eq!(b.variance(0), 0.5);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let layout = StateLayout {
            temps: 2,
            params: 1,
            biases: 0,
        };
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 0.5]);
        let mean = DVector::from_vec(vec![4.0, 5.0, 6.0]);
        let mut b = GaussianBelief::new(layout, Representation::Rc, mean.clone(), p.clone());
        kf_update(&mut b, &DVector::from_vec(vec![4.0, 5.0]), &DMatrix::identity(2, 2), None).unwrap();
        assert_eq!(b.mean(), &mean);
        for i in 0..3 {
            assert!(b.variance(i) <= p[(i, i)]);
        }
    }

    #[test]
    fn uninformative_measurement() {
        let mut b = scalar_belief(2.0, 3.0);
        kf_update(&mut b, &DVector::from_element(1, 50.0), &DMatrix::from_element(1, 1, 1e12), None).unwrap();
        assert_relative_eq!(b.mean()[0], 2.0, max_relative = 1e-6 * 100.0);
        assert!((b.mean()[0] - 2.0).abs() / 2.0 < 1e-6 * 100.0);
        assert_relative_eq!(b.variance(0), 3.0, max_relative = 1e-6);
    }

    #[test]
    fn singular_innovation_rejected() {
        let mut b = scalar_belief(0.0, 0.0);
        let err = kf_update(&mut b, &DVector::from_element(1, 1.0), &DMatrix::zeros(1, 1), None).unwrap_err();
        assert_eq!(err, EstimationError::SingularUpdate);
        assert!(err.is_instability());
    }

    #[test]
    fn frozen_rows_do_not_move() {
        let layout = StateLayout {
            temps: 1,
            params: 0,
            biases: 1,
        };
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let mut b = GaussianBelief::new(layout, Representation::Rc, DVector::from_vec(vec![0.0, 0.3]), p);
        kf_update(&mut b, &DVector::from_element(1, 1.0), &DMatrix::identity(1, 1), Some(&[false, true])).unwrap();
        assert_eq!(b.mean()[1], 0.3);
        assert!(b.mean()[0] > 0.0);
    }

    #[test]
    fn default_weights() {
        let cfg = SigmaPointConfig::default();
        let lambda = cfg.lambda(3);
        assert_eq!(lambda, 1e-3 * 1e-3 * 3.0 - 3.0);
        let (wm, wc) = cfg.weights(3);
        assert_relative_eq!(wm[0], lambda / (3.0 + lambda), max_relative = 1e-12);
        assert!((wm[0] + 999_999.0).abs() < 1.0);
        assert!((wm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_relative_eq!(wc[0] - wm[0], 3.0 - 1e-6, max_relative = 1e-9);
    }
}
