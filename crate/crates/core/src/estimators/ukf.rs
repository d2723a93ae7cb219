use nalgebra::{DMatrix, DVector};

use crate::linalg::{sqrt_with_jitter, symmetrize};

use super::{EstimationError, GaussianBelief, ProcessModel, SigmaPointConfig};

#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: Vec<DVector<f64>>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
    pub lambda: f64,
}

/// `2L + 1` points: the mean, then the mean plus and minus each column of
/// `sqrt((L + lambda) P)`.
pub fn ukf_sigma_points(belief: &GaussianBelief, cfg: &SigmaPointConfig) -> Result<SigmaPoints, EstimationError> {
    let l = belief.layout().len();
    let lambda = cfg.lambda(l);
    let scale = l as f64 + lambda;
    if !(scale > 0.0) {
        return Err(EstimationError::Dimension(format!("L + lambda = {scale} must be positive")));
    }
    let root = sqrt_with_jitter(&belief.covariance).ok_or(EstimationError::SquareRootFailed)? * scale.sqrt();
    let mean = belief.mean();
    let mut points = Vec::with_capacity(2 * l + 1);
    points.push(mean.clone());
    for i in 0..l {
        points.push(mean + root.column(i));
    }
    for i in 0..l {
        points.push(mean - root.column(i));
    }
    let (wm, wc) = cfg.weights(l);
    Ok(SigmaPoints {
        points,
        wm,
        wc,
        lambda,
    })
}

/// Unscented prediction with additive process noise.
pub fn ukf_predict<M: ProcessModel>(
    belief: &mut GaussianBelief,
    model: &M,
    input: &[f64],
    q: &DMatrix<f64>,
    dt: f64,
    cfg: &SigmaPointConfig,
) -> Result<(), EstimationError> {
    let sp = ukf_sigma_points(belief, cfg)?;
    let propagated = sp
        .points
        .iter()
        .map(|x| model.propagate(x, input, dt))
        .collect::<Result<Vec<_>, _>>()?;
    // The weights sum to one, so the mean is accumulated as offsets from the
    // central point; W0 is of order -1/alpha^2.
    let center = &propagated[0];
    let mut mean = center.clone();
    for (x, w) in propagated.iter().zip(&sp.wm).skip(1) {
        mean.axpy(*w, &(x - center), 1.0);
    }
    let l = mean.len();
    let mut p = q.clone();
    let mut d = DVector::zeros(l);
    for (x, w) in propagated.iter().zip(&sp.wc) {
        d.copy_from(x);
        d -= &mean;
        p.ger(*w, &d, &d, 1.0);
    }
    symmetrize(&mut p);
    belief.state.mean = mean;
    belief.covariance = p;
    belief.check_finite()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{LinearModel, StateLayout};
    use crate::graph::Representation;
    use approx::assert_relative_eq;

    fn belief(mean: Vec<f64>, p: DMatrix<f64>) -> GaussianBelief {
        let n = mean.len();
        GaussianBelief::new(
            StateLayout {
                temps: n,
                params: 0,
                biases: 0,
            },
            Representation::Rc,
            DVector::from_vec(mean),
            p,
        )
    }

    #[test]
    fn identity_covariance_spread() {
        let b = belief(vec![1.0, 2.0, 3.0], DMatrix::identity(3, 3));
        let cfg = SigmaPointConfig {
            alpha: 1.0,
            kappa: 1.0,
            beta: 2.0,
        };
        let sp = ukf_sigma_points(&b, &cfg).unwrap();
        let c = 3.0 + sp.lambda;
        assert_eq!(sp.points.len(), 7);
        for i in 0..3 {
            let plus = &sp.points[1 + i] - b.mean();
            let minus = &sp.points[4 + i] - b.mean();
            assert_relative_eq!(plus[i], c.sqrt(), epsilon = 1e-12);
            assert_relative_eq!(minus[i], -c.sqrt(), epsilon = 1e-12);
            assert_relative_eq!(plus.norm(), c.sqrt(), epsilon = 1e-12);
        }
        assert!((sp.wm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_state_gains_process_noise() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        let mut b = belief(vec![10.0, -2.0], p.clone());
        let model = LinearModel {
            transition: DMatrix::identity(2, 2),
            layout: b.layout(),
        };
        ukf_predict(&mut b, &model, &[], &q, 1.0, &SigmaPointConfig::default()).unwrap();
        // sigma weights of order 1/alpha^2 amplify last-ulp rounding
        assert_relative_eq!(b.mean()[0], 10.0, epsilon = 1e-9);
        assert_relative_eq!(b.mean()[1], -2.0, epsilon = 1e-9);
        assert_relative_eq!(b.covariance, p + q, epsilon = 1e-8);
    }

    #[test]
    fn zero_variance_state_is_bit_stable() {
        let mut p = DMatrix::identity(3, 3);
        p[(2, 2)] = 0.0;
        let mut b = belief(vec![1.0, 2.0, 0.123456789], p);
        let model = LinearModel {
            transition: DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            layout: b.layout(),
        };
        for _ in 0..50 {
            ukf_predict(&mut b, &model, &[], &DMatrix::zeros(3, 3), 1.0, &SigmaPointConfig::default()).unwrap();
        }
        assert_eq!(b.mean()[2], 0.123456789);
    }
}
