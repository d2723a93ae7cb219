//! Process models for the augmented state `[temperatures, parameters, biases]`.

use nalgebra::{DMatrix, DVector};

use crate::graph::{GraphError, ParameterMap, Representation, Source, ThermalNetwork};

use super::{EstimationError, StateLayout};

/// Discrete-time process model `x(k+1) = f(x(k), u(k))`.
pub trait ProcessModel {
    fn layout(&self) -> StateLayout;

    fn representation(&self) -> Representation;

    /// Propagate a state one step. `input` carries exogenous temperatures.
    fn propagate(&self, x: &DVector<f64>, input: &[f64], dt: f64) -> Result<DVector<f64>, EstimationError>;

    /// `df/dx` at `x`.
    fn jacobian(&self, x: &DVector<f64>, input: &[f64], dt: f64) -> Result<DMatrix<f64>, EstimationError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Neighbor {
    Zone(usize),
    External(usize),
}

#[derive(Debug, Clone, Copy)]
struct Path {
    zone: usize,
    neighbor: Neighbor,
    source: Source,
}

/// Thermal-network dynamics over the minimal parameter set.
///
/// Temperatures are the finite nodes in ascending index order; external
/// node temperatures arrive as the input vector (one entry per external node,
/// ascending). Biases, when present, are one per zone in degrees per step
/// unit time.
#[derive(Debug, Clone)]
pub struct ThermalModel {
    pm: ParameterMap,
    paths: Vec<Path>,
    zones: usize,
    externals: usize,
    with_biases: bool,
}

impl ThermalModel {
    pub fn new(net: &ThermalNetwork, pm: ParameterMap, with_biases: bool) -> Self {
        let finite = net.finite_nodes();
        let external = net.external_nodes();
        let locate = |node: usize| -> Neighbor {
            match finite.binary_search(&node) {
                Ok(z) => Neighbor::Zone(z),
                Err(_) => Neighbor::External(external.binary_search(&node).expect("node is external")),
            }
        };
        let paths = pm
            .paths()
            .iter()
            .map(|p| Path {
                zone: finite.binary_search(&p.node).expect("paths start at finite nodes"),
                neighbor: locate(p.neighbor),
                source: p.source,
            })
            .collect();
        Self {
            pm,
            paths,
            zones: finite.len(),
            externals: external.len(),
            with_biases,
        }
    }

    pub fn parameter_map(&self) -> &ParameterMap {
        &self.pm
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    pub fn externals(&self) -> usize {
        self.externals
    }

    pub fn has_biases(&self) -> bool {
        self.with_biases
    }

    /// Value of every directed product: estimated then eliminated.
    fn product_values(&self, params: &[f64]) -> Result<(Vec<f64>, Vec<f64>), GraphError> {
        let eliminated = crate::graph::reconstruct_eliminated(&self.pm, params)?;
        Ok((params.to_vec(), eliminated))
    }

    fn neighbor_temp(&self, nb: Neighbor, temps: &[f64], input: &[f64]) -> f64 {
        match nb {
            Neighbor::Zone(z) => temps[z],
            Neighbor::External(x) => input[x],
        }
    }

    /// Euler step of zone temperatures with explicit parameters and biases.
    pub fn step_temperatures(
        &self,
        temps: &[f64],
        params: &[f64],
        biases: &[f64],
        input: &[f64],
        dt: f64,
    ) -> Result<Vec<f64>, EstimationError> {
        let (est, elim) = self.product_values(params)?;
        let rep = self.pm.representation;
        let mut rate = vec![0.0; self.zones];
        for p in &self.paths {
            let v = match p.source {
                Source::Estimated(k) => est[k],
                Source::Eliminated(k) => elim[k],
            };
            let tn = self.neighbor_temp(p.neighbor, temps, input);
            rate[p.zone] += rep.rate(v) * (tn - temps[p.zone]);
        }
        Ok((0..self.zones)
            .map(|z| temps[z] + dt * (rate[z] + biases.get(z).copied().unwrap_or(0.0)))
            .collect())
    }
}

impl ProcessModel for ThermalModel {
    fn layout(&self) -> StateLayout {
        StateLayout {
            temps: self.zones,
            params: self.pm.len(),
            biases: if self.with_biases { self.zones } else { 0 },
        }
    }

    fn representation(&self) -> Representation {
        self.pm.representation
    }

    fn propagate(&self, x: &DVector<f64>, input: &[f64], dt: f64) -> Result<DVector<f64>, EstimationError> {
        let layout = self.layout();
        check_input(input, self.externals)?;
        let xs = x.as_slice();
        let temps = &xs[layout.temp_range()];
        let params = &xs[layout.param_range()];
        let biases = &xs[layout.bias_range()];
        let next = self.step_temperatures(temps, params, biases, input, dt)?;
        let mut out = x.clone();
        for (z, v) in next.into_iter().enumerate() {
            out[z] = v;
        }
        Ok(out)
    }

    fn jacobian(&self, x: &DVector<f64>, input: &[f64], dt: f64) -> Result<DMatrix<f64>, EstimationError> {
        let layout = self.layout();
        check_input(input, self.externals)?;
        let xs = x.as_slice();
        let temps = &xs[layout.temp_range()];
        let params = &xs[layout.param_range()];
        let (est, elim) = self.product_values(params)?;
        let rep = self.pm.representation;
        let p0 = layout.temps;
        let mut f = DMatrix::identity(layout.len(), layout.len());
        for p in &self.paths {
            let z = p.zone;
            let v = match p.source {
                Source::Estimated(k) => est[k],
                Source::Eliminated(k) => elim[k],
            };
            let r = rep.rate(v);
            let diff = self.neighbor_temp(p.neighbor, temps, input) - temps[z];
            f[(z, z)] -= dt * r;
            if let Neighbor::Zone(j) = p.neighbor {
                f[(z, j)] += dt * r;
            }
            let dr = rep.rate_derivative(v) * dt * diff;
            match p.source {
                Source::Estimated(k) => f[(z, p0 + k)] += dr,
                Source::Eliminated(m) => {
                    // v = prod(num) / prod(den), so dv/dp_k = v * (n_k - d_k) / p_k
                    let el = &self.pm.eliminated[m];
                    for &k in &el.numerator {
                        f[(z, p0 + k)] += dr * v / params[k];
                    }
                    for &k in &el.denominator {
                        f[(z, p0 + k)] -= dr * v / params[k];
                    }
                }
            }
        }
        if self.with_biases {
            let b0 = layout.bias_range().start;
            for z in 0..self.zones {
                f[(z, b0 + z)] = dt;
            }
        }
        Ok(f)
    }
}

fn check_input(input: &[f64], expected: usize) -> Result<(), EstimationError> {
    if input.len() != expected {
        return Err(EstimationError::Dimension(format!(
            "expected {expected} external inputs, got {}",
            input.len()
        )));
    }
    Ok(())
}

/// `x(k+1) = F x(k)`; used as a linear reference system.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub transition: DMatrix<f64>,
    pub layout: StateLayout,
}

impl ProcessModel for LinearModel {
    fn layout(&self) -> StateLayout {
        self.layout
    }

    fn representation(&self) -> Representation {
        Representation::RcReciprocal
    }

    fn propagate(&self, x: &DVector<f64>, _input: &[f64], _dt: f64) -> Result<DVector<f64>, EstimationError> {
        Ok(&self.transition * x)
    }

    fn jacobian(&self, _x: &DVector<f64>, _input: &[f64], _dt: f64) -> Result<DMatrix<f64>, EstimationError> {
        Ok(self.transition.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::presets::{five_room, pair, triangle};
    use crate::graph::{minimal_parameter_set, Capacitance, ThermalNetwork};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reciprocal_model(net: &ThermalNetwork, biases: bool) -> ThermalModel {
        let pm = minimal_parameter_set(net)
            .unwrap()
            .with_representation(Representation::RcReciprocal);
        ThermalModel::new(net, pm, biases)
    }

    #[test]
    fn equal_temperatures_are_fixed() {
        let net = five_room();
        let m = reciprocal_model(&net, true);
        let l = m.layout();
        let mut x = DVector::from_element(l.len(), 0.002);
        for z in 0..5 {
            x[z] = 20.0;
        }
        for b in l.bias_range() {
            x[b] = 0.0;
        }
        assert_eq!(m.propagate(&x, &[20.0], 1.0).unwrap(), x);
    }

    #[test]
    fn pair_hand_step() {
        let net = pair(1.0, 10.0, Capacitance::Infinite);
        let m = reciprocal_model(&net, false);
        let x = DVector::from_vec(vec![10.0, 0.1]);
        let out = m.propagate(&x, &[20.0], 1.0).unwrap();
        assert_relative_eq!(out[0], 11.0, epsilon = 1e-12);
        assert_eq!(out[1], 0.1);
    }

    #[test]
    fn isolated_node_integrates_bias() {
        let mut net = ThermalNetwork::new();
        net.add_node("solo", Capacitance::Finite(1.0));
        let m = reciprocal_model(&net, true);
        let x = DVector::from_vec(vec![3.0, 0.25]);
        let out = m.propagate(&x, &[], 2.0).unwrap();
        assert_eq!(out[0], 3.5);
        assert_eq!(out[1], 0.25);
    }

    #[test]
    fn parameter_column_is_temperature_difference() {
        let net = pair(1.0, 10.0, Capacitance::Infinite);
        let m = reciprocal_model(&net, false);
        let x = DVector::from_vec(vec![10.0, 0.1]);
        let f = m.jacobian(&x, &[25.0], 1.0).unwrap();
        assert_relative_eq!(f[(0, 1)], 15.0, epsilon = 1e-12);
        let f0 = m.jacobian(&x, &[10.0], 1.0).unwrap();
        assert_eq!(f0[(0, 1)], 0.0);
    }

    fn central_difference<M: ProcessModel>(m: &M, x: &DVector<f64>, input: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let d = (m.propagate(&xp, input, 1.0).unwrap() - m.propagate(&xm, input, 1.0).unwrap()) / (2.0 * h);
            out.set_column(j, &d);
        }
        out
    }

    #[test]
    fn jacobian_matches_finite_differences_on_triangle() {
        let net = triangle(3.0, 5.0, 7.0, [20.0, 30.0, 40.0]);
        for rep in [Representation::Rc, Representation::RcReciprocal] {
            let pm = minimal_parameter_set(&net).unwrap().with_representation(rep);
            let m = ThermalModel::new(&net, pm, true);
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            for _ in 0..20 {
                let l = m.layout();
                let mut x = DVector::zeros(l.len());
                for i in l.temp_range() {
                    x[i] = rng.random_range(0.0..100.0);
                }
                for i in l.param_range() {
                    let rc: f64 = rng.random_range(50.0..500.0);
                    x[i] = rep.from_rc(rc);
                }
                for i in l.bias_range() {
                    x[i] = rng.random_range(-0.1..0.1);
                }
                let f = m.jacobian(&x, &[], 1.0).unwrap();
                let fd = central_difference(&m, &x, &[]);
                for (a, b) in f.iter().zip(fd.iter()) {
                    assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }
}
