//! Vector fields and their time-`t` flow maps.
//!
//! Every flow is integrated with fixed-step classical RK4. A horizon `t` is
//! split into `ceil(t / h)` equal steps, so [`advance`] and
//! [`sample_trajectory`] walk exactly the same step sequence whenever the
//! sample spacing is a whole number of steps.

use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the phase space `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Self {
        StateVector(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        euclidean(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(coords: Vec<f64>) -> Self {
        StateVector(coords)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    LinearDiagonal,
    Lorenz,
    QuadraticGeneric,
}

/// `dx_i/dt = sum_j L_ij x_j + sum_jk Q_ijk x_j x_k + f_i`.
///
/// Galerkin truncations of quadratic PDEs land in this form, as does any
/// linear system (`Q = 0`, `f = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticField {
    dim: usize,
    // row-major d x d
    linear: Vec<f64>,
    // row-major d x d x d
    quadratic: Vec<f64>,
    forcing: Vec<f64>,
}

impl QuadraticField {
    pub fn new(linear: Vec<Vec<f64>>, quadratic: Vec<Vec<Vec<f64>>>, forcing: Vec<f64>) -> Result<Self> {
        let dim = linear.len();
        if dim == 0 {
            return Err(Error::invalid("quadratic model needs dimension >= 1"));
        }
        if linear.iter().any(|row| row.len() != dim) {
            return Err(Error::invalid("linear part must be a d x d matrix"));
        }
        if quadratic.len() != dim
            || quadratic
                .iter()
                .any(|m| m.len() != dim || m.iter().any(|row| row.len() != dim))
        {
            return Err(Error::invalid("quadratic part must be a d x d x d tensor"));
        }
        if forcing.len() != dim {
            return Err(Error::invalid("forcing must have length d"));
        }
        let field = QuadraticField {
            dim,
            linear: linear.into_iter().flatten().collect(),
            quadratic: quadratic.into_iter().flatten().flatten().collect(),
            forcing,
        };
        if field
            .linear
            .iter()
            .chain(&field.quadratic)
            .chain(&field.forcing)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("quadratic model coefficients must be finite"));
        }
        Ok(field)
    }

    /// Purely linear field `dx/dt = L x`.
    pub fn linear(linear: Vec<Vec<f64>>) -> Result<Self> {
        let d = linear.len();
        Self::new(linear, vec![vec![vec![0.0; d]; d]; d], vec![0.0; d])
    }

    /// The zero vector field; every point is an equilibrium.
    pub fn zero(dim: usize) -> Self {
        QuadraticField {
            dim,
            linear: vec![0.0; dim * dim],
            quadratic: vec![0.0; dim * dim * dim],
            forcing: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn linear_coeff(&self, i: usize, j: usize) -> f64 {
        self.linear[i * self.dim + j]
    }

    pub fn quadratic_coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        self.quadratic[(i * self.dim + j) * self.dim + k]
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let lrow = &self.linear[i * d..(i + 1) * d];
            let mut acc = self.forcing[i];
            for (l, xj) in lrow.iter().zip(x) {
                acc += l * xj;
            }
            let qblock = &self.quadratic[i * d * d..(i + 1) * d * d];
            for (j, xj) in x.iter().enumerate() {
                if *xj == 0.0 {
                    continue;
                }
                let qrow = &qblock[j * d..(j + 1) * d];
                let mut inner = 0.0;
                for (q, xk) in qrow.iter().zip(x) {
                    inner += q * xk;
                }
                acc += xj * inner;
            }
            *o = acc;
        }
    }

    fn to_nested(&self) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
        let d = self.dim;
        let linear = self.linear.chunks(d).map(<[f64]>::to_vec).collect();
        let quadratic = self
            .quadratic
            .chunks(d * d)
            .map(|block| block.chunks(d).map(<[f64]>::to_vec).collect())
            .collect();
        (linear, quadratic)
    }
}

/// An autonomous ODE model generating the flow `F^t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub enum FlowModel {
    /// `dx_i/dt = -rates_i * x_i`.
    LinearDiagonal {
        rates: Vec<f64>,
    },
    Lorenz {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
    QuadraticGeneric(QuadraticField),
}

impl FlowModel {
    /// Lorenz system with the classical chaotic parameters.
    pub fn lorenz() -> Self {
        FlowModel::Lorenz {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn linear_diagonal(rates: Vec<f64>) -> Self {
        FlowModel::LinearDiagonal { rates }
    }

    pub fn model_id(&self) -> ModelId {
        match self {
            FlowModel::LinearDiagonal { .. } => ModelId::LinearDiagonal,
            FlowModel::Lorenz { .. } => ModelId::Lorenz,
            FlowModel::QuadraticGeneric(_) => ModelId::QuadraticGeneric,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            FlowModel::LinearDiagonal { rates } => rates.len(),
            FlowModel::Lorenz { .. } => 3,
            FlowModel::QuadraticGeneric(q) => q.dim,
        }
    }

    /// Evaluates the vector field at `x` into `out`.
    pub fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FlowModel::LinearDiagonal { rates } => {
                for ((o, xi), r) in out.iter_mut().zip(x).zip(rates) {
                    *o = -r * xi;
                }
            }
            FlowModel::Lorenz { sigma, rho, beta } => {
                let (a, b, c) = (x[0], x[1], x[2]);
                out[0] = sigma * (b - a);
                out[1] = a * (rho - c) - b;
                out[2] = a * b - beta * c;
            }
            FlowModel::QuadraticGeneric(q) => q.eval(x, out),
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite state {x:?}")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    model_id: ModelId,
    dimension: usize,
    parameters: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearDiagonalParams {
    rates: Vec<f64>,
}

fn default_sigma() -> f64 {
    10.0
}
fn default_rho() -> f64 {
    28.0
}
fn default_beta() -> f64 {
    8.0 / 3.0
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LorenzParams {
    #[serde(default = "default_sigma")]
    sigma: f64,
    #[serde(default = "default_rho")]
    rho: f64,
    #[serde(default = "default_beta")]
    beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    linear: Vec<Vec<f64>>,
    #[serde(default)]
    quadratic: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    forcing: Option<Vec<f64>>,
}

impl TryFrom<ModelDocument> for FlowModel {
    type Error = String;

    fn try_from(doc: ModelDocument) -> std::result::Result<Self, String> {
        let parse_err = |e: serde_json::Error| format!("{:?} parameters: {e}", doc.model_id);
        let model = match doc.model_id {
            ModelId::LinearDiagonal => {
                let p: LinearDiagonalParams = serde_json::from_value(doc.parameters.clone()).map_err(parse_err)?;
                if p.rates.iter().any(|r| !r.is_finite()) {
                    return Err("LinearDiagonal rates must be finite".into());
                }
                FlowModel::LinearDiagonal { rates: p.rates }
            }
            ModelId::Lorenz => {
                let p: LorenzParams = serde_json::from_value(doc.parameters.clone()).map_err(parse_err)?;
                FlowModel::Lorenz {
                    sigma: p.sigma,
                    rho: p.rho,
                    beta: p.beta,
                }
            }
            ModelId::QuadraticGeneric => {
                let p: QuadraticParams = serde_json::from_value(doc.parameters.clone()).map_err(parse_err)?;
                let d = p.linear.len();
                let quadratic = p.quadratic.unwrap_or_else(|| vec![vec![vec![0.0; d]; d]; d]);
                let forcing = p.forcing.unwrap_or_else(|| vec![0.0; d]);
                FlowModel::QuadraticGeneric(
                    QuadraticField::new(p.linear, quadratic, forcing).map_err(|e| e.to_string())?,
                )
            }
        };
        if model.dimension() != doc.dimension {
            return Err(format!(
                "declared dimension {} does not match parameter shapes (dimension {})",
                doc.dimension,
                model.dimension()
            ));
        }
        if model.dimension() == 0 {
            return Err("model dimension must be positive".into());
        }
        Ok(model)
    }
}

impl From<FlowModel> for ModelDocument {
    fn from(model: FlowModel) -> Self {
        let model_id = model.model_id();
        let dimension = model.dimension();
        let parameters = match model {
            FlowModel::LinearDiagonal { rates } => serde_json::to_value(LinearDiagonalParams { rates }),
            FlowModel::Lorenz { sigma, rho, beta } => serde_json::to_value(LorenzParams { sigma, rho, beta }),
            FlowModel::QuadraticGeneric(q) => {
                let (linear, quadratic) = q.to_nested();
                serde_json::to_value(QuadraticParams {
                    linear,
                    quadratic: Some(quadratic),
                    forcing: Some(q.forcing),
                })
            }
        }
        .expect("model parameters serialize");
        ModelDocument {
            model_id,
            dimension,
            parameters,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    #[serde(rename = "RK4")]
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub step: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            step,
            scheme: Scheme::Rk4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(format!(
                "integrator step must be positive, got {}",
                self.step
            )));
        }
        Ok(())
    }

    /// Number of equal steps used to cover `horizon`.
    pub fn steps_for(&self, horizon: f64) -> usize {
        if horizon <= 0.0 {
            return 0;
        }
        // tolerate horizons that are a whole number of steps up to rounding
        ((horizon / self.step) - 1e-9).ceil().max(1.0) as usize
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::rk4(1e-3)
    }
}

/// Sampled orbit on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl TrajectorySample {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVector {
        &self.states[self.states.len() - 1]
    }
}

struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(d: usize) -> Self {
        Rk4Workspace {
            k1: vec![0.0; d],
            k2: vec![0.0; d],
            k3: vec![0.0; d],
            k4: vec![0.0; d],
            tmp: vec![0.0; d],
        }
    }

    fn step(&mut self, model: &FlowModel, x: &mut [f64], dt: f64) {
        let half = 0.5 * dt;
        model.vector_field(x, &mut self.k1);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *t = xi + half * k;
        }
        model.vector_field(&self.tmp, &mut self.k2);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *t = xi + half * k;
        }
        model.vector_field(&self.tmp, &mut self.k3);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *t = xi + dt * k;
        }
        model.vector_field(&self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Runs `n_steps` RK4 steps of size `dt`, calling `record` after every
/// `every`-th step.
fn integrate(
    model: &FlowModel,
    x: &mut [f64],
    n_steps: usize,
    dt: f64,
    every: usize,
    mut record: impl FnMut(&[f64]),
) -> Result<()> {
    let mut ws = Rk4Workspace::new(x.len());
    for i in 1..=n_steps {
        ws.step(model, x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: i as f64 * dt });
        }
        if every > 0 && i % every == 0 {
            record(x);
        }
    }
    Ok(())
}

/// Numerical `F^t(x)`. `t = 0` returns `x` unchanged.
pub fn advance(model: &FlowModel, x: &StateVector, t: f64, cfg: &IntegratorConfig) -> Result<StateVector> {
    cfg.validate()?;
    model.check_state(x)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("flow time must be >= 0, got {t}")));
    }
    let n = cfg.steps_for(t);
    let mut y = x.0.clone();
    if n > 0 {
        integrate(model, &mut y, n, t / n as f64, 0, |_| {})?;
    }
    Ok(StateVector(y))
}

/// Samples `F^t(x)` at `n_samples` uniformly spaced times over `[0, horizon]`
/// in a single integration pass.
pub fn sample_trajectory(
    model: &FlowModel,
    x: &StateVector,
    horizon: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<TrajectorySample> {
    cfg.validate()?;
    model.check_state(x)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
    }
    if n_samples < 2 {
        return Err(Error::invalid("a trajectory needs at least 2 samples"));
    }
    let intervals = n_samples - 1;
    let sub = cfg.steps_for(horizon / intervals as f64);
    let total = sub * intervals;
    let dt = horizon / total as f64;

    let mut states = Vec::with_capacity(n_samples);
    states.push(x.clone());
    let mut y = x.0.clone();
    integrate(model, &mut y, total, dt, sub, |s| states.push(StateVector(s.to_vec())))?;
    let times = (0..n_samples)
        .map(|k| {
            if k == intervals {
                horizon
            } else {
                horizon * k as f64 / intervals as f64
            }
        })
        .collect();
    Ok(TrajectorySample { times, states })
}

/// Central-difference Jacobian of `y -> F^T(y)` at `x`.
pub fn jacobian(
    model: &FlowModel,
    x: &StateVector,
    horizon: f64,
    cfg: &IntegratorConfig,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::invalid(format!("fd_step must be > 0, got {fd_step}")));
    }
    let d = x.dim();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut plus = x.clone();
        plus.0[j] += fd_step;
        let mut minus = x.clone();
        minus.0[j] -= fd_step;
        let fp = advance(model, &plus, horizon, cfg)?;
        let fm = advance(model, &minus, horizon, cfg)?;
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * fd_step);
        }
    }
    Ok(jac)
}

/// Operator 2-norm of the finite-difference Jacobian of `F^T` at `x`.
pub fn jacobian_norm(
    model: &FlowModel,
    x: &StateVector,
    horizon: f64,
    cfg: &IntegratorConfig,
    fd_step: f64,
) -> Result<f64> {
    let jac = jacobian(model, x, horizon, cfg, fd_step)?;
    Ok(jac.singular_values().max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn decay() -> FlowModel {
        FlowModel::linear_diagonal(vec![1.0])
    }

    fn rotation() -> FlowModel {
        FlowModel::QuadraticGeneric(QuadraticField::linear(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap())
    }

    #[test]
    fn linear_decay_matches_closed_form() {
        let cfg = IntegratorConfig::rk4(1e-3);
        let y = advance(&decay(), &vec![1.0].into(), 1.0, &cfg).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
        // halved step agrees too
        let y2 = advance(&decay(), &vec![1.0].into(), 1.0, &IntegratorConfig::rk4(5e-4)).unwrap();
        assert!((y[0] - y2[0]).abs() < 1e-8);
    }

    #[test]
    fn zero_time_is_identity() {
        let x: StateVector = vec![1.5, -2.0, 3.25].into();
        let y = advance(&FlowModel::lorenz(), &x, 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn lorenz_origin_is_fixed() {
        let y = advance(
            &FlowModel::lorenz(),
            &StateVector::zeros(3),
            5.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(y.coords(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn sampled_decay_matches_closed_form() {
        let cfg = IntegratorConfig::rk4(1e-3);
        let tr = sample_trajectory(&decay(), &vec![1.0].into(), 1.0, 3, &cfg).unwrap();
        let want = [1.0, (-0.5f64).exp(), (-1.0f64).exp()];
        for (s, w) in tr.states.iter().zip(want) {
            assert!((s[0] - w).abs() < 1e-8);
        }
        assert_eq!(tr.times, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn two_samples_are_the_endpoints() {
        let cfg = IntegratorConfig::rk4(1e-3);
        let x: StateVector = vec![1.0, 1.0, 1.0].into();
        let tr = sample_trajectory(&FlowModel::lorenz(), &x, 0.3, 2, &cfg).unwrap();
        assert_eq!(tr.states[0], x);
        assert_eq!(tr.states[1], advance(&FlowModel::lorenz(), &x, 0.3, &cfg).unwrap());
    }

    #[test]
    fn sample_trajectory_is_consistent_with_advance() {
        let cfg = IntegratorConfig::rk4(1e-3);
        let x: StateVector = vec![1.0, 1.0, 1.0].into();
        let m = FlowModel::lorenz();
        let tr = sample_trajectory(&m, &x, 0.5, 51, &cfg).unwrap();
        let end = advance(&m, &x, 0.5, &cfg).unwrap();
        assert!(tr.last().distance(&end) <= 1e-12);
        // grid not aligned with the step: different step sequence, same to integrator accuracy
        let tr = sample_trajectory(&m, &x, 0.5, 7, &cfg).unwrap();
        assert!(tr.last().distance(&end) <= 1e-8);
        let mid = advance(&m, &x, tr.times[3], &cfg).unwrap();
        assert!(tr.states[3].distance(&mid) <= 1e-8);
    }

    #[test]
    fn jacobian_norm_cases() {
        let cfg = IntegratorConfig::rk4(1e-3);
        let rho = jacobian_norm(&decay(), &vec![0.3].into(), 1.0, &cfg, 1e-5).unwrap();
        assert!((rho - (-1.0f64).exp()).abs() < 1e-5);

        let x: StateVector = vec![2.0, -3.0, 20.0].into();
        let id = jacobian_norm(&FlowModel::lorenz(), &x, 0.0, &cfg, 1e-5).unwrap();
        assert!((id - 1.0).abs() < 1e-9);

        let rot = jacobian_norm(&rotation(), &vec![0.7, 0.2].into(), 1.0, &cfg, 1e-5).unwrap();
        assert!((rot - 1.0).abs() < 1e-5);
    }

    #[test]
    fn blow_up_reports_time() {
        // dx/dt = x^2 overflows within the first step from a huge state
        let field = QuadraticField::new(vec![vec![0.0]], vec![vec![vec![1.0]]], vec![0.0]).unwrap();
        let m = FlowModel::QuadraticGeneric(field);
        let err = advance(&m, &vec![1e200].into(), 1.0, &IntegratorConfig::default()).unwrap_err();
        match err {
            Error::BlowUp { time } => assert!(time > 0.0 && time <= 1.0),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = IntegratorConfig::default();
        assert!(advance(&decay(), &vec![1.0, 2.0].into(), 1.0, &cfg).is_err());
        assert!(advance(&decay(), &vec![f64::NAN].into(), 1.0, &cfg).is_err());
        assert!(advance(&decay(), &vec![1.0].into(), -1.0, &cfg).is_err());
        assert!(sample_trajectory(&decay(), &vec![1.0].into(), 1.0, 1, &cfg).is_err());
        assert!(jacobian_norm(&decay(), &vec![1.0].into(), 1.0, &cfg, 0.0).is_err());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let x: StateVector = vec![1.0].into();
        let exact = (-2.0f64).exp();
        let err = |h: f64| (advance(&decay(), &x, 2.0, &IntegratorConfig::rk4(h)).unwrap()[0] - exact).abs();
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 8.0 && ratio < 32.0, "ratio {ratio}");
    }

    #[test]
    fn advance_is_bitwise_deterministic() {
        let x: StateVector = vec![-3.0, 4.0, 21.0].into();
        let cfg = IntegratorConfig::default();
        let a = advance(&FlowModel::lorenz(), &x, 1.3, &cfg).unwrap();
        let b = advance(&FlowModel::lorenz(), &x, 1.3, &cfg).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn model_json_round_trip() {
        let doc = r#"{"model_id":"QuadraticGeneric","dimension":2,
            "parameters":{"linear":[[0,-1],[1,0]],"quadratic":[[[0,0],[0,0]],[[0,0],[0,1]]],"forcing":[0.5,0]}}"#;
        let m: FlowModel = serde_json::from_str(doc).unwrap();
        let FlowModel::QuadraticGeneric(q) = &m else {
            panic!("wrong model")
        };
        assert_eq!(q.linear_coeff(0, 1), -1.0);
        assert_eq!(q.quadratic_coeff(1, 1, 1), 1.0);
        let back: FlowModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);

        let lorenz: FlowModel = serde_json::from_str(r#"{"model_id":"Lorenz","dimension":3,"parameters":{}}"#).unwrap();
        assert_eq!(lorenz, FlowModel::lorenz());

        let bad = r#"{"model_id":"LinearDiagonal","dimension":2,"parameters":{"rates":[1.0]}}"#;
        assert!(serde_json::from_str::<FlowModel>(bad).is_err());
    }

    proptest! {
        #[test]
        fn semigroup_linear(x in -5.0f64..5.0, s in 0.01f64..1.0, t in 0.01f64..1.0) {
            let cfg = IntegratorConfig::rk4(1e-3);
            let m = FlowModel::linear_diagonal(vec![1.0, 0.5]);
            let p: StateVector = vec![x, -x / 2.0].into();
            let two = advance(&m, &advance(&m, &p, s, &cfg).unwrap(), t, &cfg).unwrap();
            let one = advance(&m, &p, s + t, &cfg).unwrap();
            prop_assert!(two.distance(&one) <= 1e-8);
        }

        #[test]
        fn semigroup_lorenz(
            x in -15.0f64..15.0, y in -20.0f64..20.0, z in 5.0f64..40.0,
            s in 0.01f64..0.5, t in 0.01f64..0.5,
        ) {
            let cfg = IntegratorConfig::rk4(1e-3);
            let m = FlowModel::lorenz();
            let p: StateVector = vec![x, y, z].into();
            let two = advance(&m, &advance(&m, &p, s, &cfg).unwrap(), t, &cfg).unwrap();
            let one = advance(&m, &p, s + t, &cfg).unwrap();
            prop_assert!(two.distance(&one) <= 1e-6, "gap {}", two.distance(&one));
        }
    }
}
