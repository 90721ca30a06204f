//! Closed-loop simulation of a plant and its observer, plus the two-link
//! manipulator used as the reference benchmark.
//!
//! Plant and observer states are integrated together with classical RK4.
//! The observer only ever sees the input and the (noisy) measurement; see
//! [`ObserverRuntime`].

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{true_performance_signals, AugmentedSystem, FaultReconstructor};
use crate::error::{dim_err, Error, Result};
use crate::matlib::{Mat, Vector, DEFAULT_RANK_TOL};
use crate::model::{Nonlinearity, PlantModel, TransformedPlant};
use crate::synth::ObserverDesign;

/// Time signal `t -> vector`.
pub type Signal = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManipulatorParams {
    pub m1: f64,
    pub m2: f64,
    pub i1: f64,
    pub i2: f64,
    pub l1: f64,
    pub l2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub d1: f64,
    pub d2: f64,
    pub g: f64,
}

impl Default for ManipulatorParams {
    fn default() -> Self {
        Self {
            m1: 0.263,
            m2: 0.1306,
            i1: 0.002,
            i2: 0.00098,
            l1: 0.3,
            l2: 0.3,
            lc1: 0.15,
            lc2: 0.15,
            d1: 0.03,
            d2: 0.005,
            g: 9.81,
        }
    }
}

impl ManipulatorParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("I1", self.i1),
            ("I2", self.i2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("d1", self.d1),
            ("d2", self.d2),
            ("g", self.g),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "manipulator parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn mass_matrix(&self, phi: f64) -> Matrix2<f64> {
        let h = self.m2 * self.l1 * self.lc2;
        let m22 = self.m2 * self.lc2 * self.lc2 + self.i2;
        let m12 = m22 + h * phi.cos();
        let m11 = self.m1 * self.lc1 * self.lc1
            + self.m2 * self.l1 * self.l1
            + self.m2 * self.lc2 * self.lc2
            + 2.0 * h * phi.cos()
            + self.i1
            + self.i2;
        Matrix2::new(m11, m12, m12, m22)
    }

    pub fn coriolis(&self, phi: f64, theta_dot: f64, phi_dot: f64) -> Matrix2<f64> {
        let h = self.m2 * self.l1 * self.lc2 * phi.sin();
        Matrix2::new(-2.0 * h * phi_dot, -h * phi_dot, h * theta_dot, 0.0)
    }

    pub fn gravity(&self, theta: f64, phi: f64) -> Vector2<f64> {
        let g2 = self.m2 * self.lc2 * self.g * (theta + phi).sin();
        let g1 = (self.m1 * self.lc1 + self.m2 * self.l1) * self.g * theta.sin() + g2;
        Vector2::new(g1, g2)
    }

    pub fn damping(&self) -> Matrix2<f64> {
        Matrix2::new(self.d1, 0.0, 0.0, self.d2)
    }

    /// Kinetic plus potential energy, zero potential at the pivot height.
    pub fn energy(&self, x: &Vector) -> f64 {
        let qd = Vector2::new(x[2], x[3]);
        let kinetic = 0.5 * qd.dot(&(self.mass_matrix(x[1]) * qd));
        let potential = -(self.m1 * self.lc1 + self.m2 * self.l1) * self.g * x[0].cos()
            - self.m2 * self.lc2 * self.g * (x[0] + x[1]).cos();
        kinetic + potential
    }
}

fn inv2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    m.try_inverse().ok_or(Error::SingularMassMatrix)
}

/// `[q'; M(q)^-1 (tau + tau_f - D q' - C(q, q') q' - G(q))]` for `x = [q; q']`.
pub fn manipulator_derivative(p: &ManipulatorParams, x: &Vector, u: &Vector, tau_f: &Vector) -> Result<Vector> {
    for (name, v, len) in [("x", x, 4), ("u", u, 2), ("tau_f", tau_f, 2)] {
        if v.len() != len {
            return Err(dim_err(name, len, v.len()));
        }
    }
    let qd = Vector2::new(x[2], x[3]);
    let torque = Vector2::new(u[0] + tau_f[0], u[1] + tau_f[1]);
    let rhs = torque - p.damping() * qd - p.coriolis(x[1], x[2], x[3]) * qd - p.gravity(x[0], x[1]);
    let qdd = inv2(&p.mass_matrix(x[1]))? * rhs;
    Ok(Vector::from_vec(vec![x[2], x[3], qdd[0], qdd[1]]))
}

/// The manipulator written in plant form with `x = [q; q']`, `y = q`,
/// `S = Fx = [0; I]`, `V = I` and the linear part damped by `M(0)^-1 D`.
pub fn manipulator_plant(p: &ManipulatorParams) -> Result<PlantModel> {
    p.validate()?;
    let ml_inv_d = inv2(&p.mass_matrix(0.0))? * p.damping();
    let mut a = Mat::zeros(4, 4);
    a.view_mut((0, 2), (2, 2)).fill_with_identity();
    for i in 0..2 {
        for j in 0..2 {
            a[(2 + i, 2 + j)] = -ml_inv_d[(i, j)];
        }
    }
    let mut s = Mat::zeros(4, 2);
    s.view_mut((2, 0), (2, 2)).fill_with_identity();
    let mut c = Mat::zeros(2, 4);
    c.view_mut((0, 0), (2, 2)).fill_with_identity();

    let params = *p;
    let g: Nonlinearity = Arc::new(move |vx: &Vector, u: &Vector, _t: f64| {
        let qd = Vector2::new(vx[2], vx[3]);
        let rhs = Vector2::new(u[0], u[1])
            - params.damping() * qd
            - params.coriolis(vx[1], vx[2], vx[3]) * qd
            - params.gravity(vx[0], vx[1]);
        match inv2(&params.mass_matrix(vx[1])) {
            Ok(minv) => {
                let out = minv * rhs + ml_inv_d * qd;
                Vector::from_vec(vec![out[0], out[1]])
            }
            Err(_) => Vector::from_element(2, f64::NAN),
        }
    });
    PlantModel::new(
        a,
        Mat::zeros(4, 2),
        s.clone(),
        Mat::identity(4, 4),
        c,
        s,
        Mat::zeros(2, 0),
        Mat::zeros(4, 0),
        g,
    )
}

/// Reference torque `[0.5 sin(2 pi t / 40), 0]`.
pub fn manipulator_input() -> Signal {
    Arc::new(|t: f64| {
        Vector::from_vec(vec![0.5 * (2.0 * std::f64::consts::PI * t / 40.0).sin(), 0.0])
    })
}

/// Fault signal that is zero before `onset`.
#[derive(Clone)]
pub struct FaultScenario {
    pub onset: f64,
    fault_fn: Signal,
    dim: usize,
}

impl std::fmt::Debug for FaultScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FaultScenario")
            .field("onset", &self.onset)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl FaultScenario {
    /// `fault_fn` is only consulted for `t >= onset`.
    pub fn new(onset: f64, dim: usize, fault_fn: Signal) -> Self {
        Self { onset, fault_fn, dim }
    }

    pub fn none(dim: usize) -> Self {
        Self::new(f64::INFINITY, dim, Arc::new(move |_| Vector::zeros(dim)))
    }

    /// Actuator faults `[0.2 sin(2 pi (t - onset) / 10), -0.05]` from `onset`.
    pub fn manipulator(onset: f64) -> Self {
        Self::new(
            onset,
            2,
            Arc::new(move |t: f64| {
                Vector::from_vec(vec![
                    0.2 * (2.0 * std::f64::consts::PI * (t - onset) / 10.0).sin(),
                    -0.05,
                ])
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, t: f64) -> Vector {
        self.eval_in_step(t, t)
    }

    /// Value at stage time `t` of an integration step that starts at
    /// `step_start`. Activity is decided once per step so that an onset on
    /// the time grid does not leak into the preceding step.
    pub fn eval_in_step(&self, t: f64, step_start: f64) -> Vector {
        if step_start < self.onset {
            Vector::zeros(self.dim)
        } else {
            (self.fault_fn)(t)
        }
    }
}

/// Uniform measurement noise on `[-amplitude, amplitude]`, redrawn every
/// `sample_period` seconds and held in between. Draws come from ChaCha8
/// seeded with `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub amplitude: f64,
    pub sample_period: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn off() -> Self {
        Self {
            amplitude: 0.0,
            sample_period: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise amplitude must be >= 0, got {}",
                self.amplitude
            )));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sample period must be > 0, got {}",
                self.sample_period
            )));
        }
        Ok(())
    }
}

/// Plant that produces the data the observer runs on.
pub trait TruePlant: Send + Sync {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Length of the raw fault vector the scenario must supply.
    fn fault_dim(&self) -> usize;
    fn input(&self, t: f64) -> Vector;
    /// State derivative under the raw fault vector from the scenario.
    fn derivative(&self, x: &Vector, u: &Vector, fault: &Vector, t: f64) -> Result<Vector>;
    /// Noise-free measurement.
    fn output(&self, x: &Vector, fault: &Vector, t: f64) -> Vector;
    /// `(fx, fy)` in plant-form coordinates for the raw fault vector.
    fn plant_faults(&self, x: &Vector, fault: &Vector) -> Result<(Vector, Vector)>;
}

pub struct ManipulatorSystem {
    pub params: ManipulatorParams,
    pub input: Signal,
}

impl ManipulatorSystem {
    pub fn new(params: ManipulatorParams) -> Self {
        Self {
            params,
            input: manipulator_input(),
        }
    }
}

impl TruePlant for ManipulatorSystem {
    fn state_dim(&self) -> usize {
        4
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn fault_dim(&self) -> usize {
        2
    }
    fn input(&self, t: f64) -> Vector {
        (self.input)(t)
    }
    fn derivative(&self, x: &Vector, u: &Vector, fault: &Vector, _t: f64) -> Result<Vector> {
        manipulator_derivative(&self.params, x, u, fault)
    }
    fn output(&self, x: &Vector, _fault: &Vector, _t: f64) -> Vector {
        x.rows(0, 2).into_owned()
    }
    fn plant_faults(&self, x: &Vector, fault: &Vector) -> Result<(Vector, Vector)> {
        let minv = inv2(&self.params.mass_matrix(x[1]))?;
        let fx = minv * Vector2::new(fault[0], fault[1]);
        Ok((Vector::from_vec(vec![fx[0], fx[1]]), Vector::zeros(0)))
    }
}

/// A [`PlantModel`] simulated as written; the raw fault vector is `[fx; fy]`.
pub struct ModelPlant {
    pub model: PlantModel,
    pub input: Signal,
    /// Disturbance `w(t)`; zero when `None`.
    pub disturbance: Option<Signal>,
}

impl TruePlant for ModelPlant {
    fn state_dim(&self) -> usize {
        self.model.n()
    }
    fn output_dim(&self) -> usize {
        self.model.m()
    }
    fn fault_dim(&self) -> usize {
        self.model.n_fx() + self.model.n_fy()
    }
    fn input(&self, t: f64) -> Vector {
        (self.input)(t)
    }
    fn derivative(&self, x: &Vector, u: &Vector, fault: &Vector, t: f64) -> Result<Vector> {
        let p = &self.model;
        let (fx, _) = self.plant_faults(x, fault)?;
        let g = p.eval_g_projected(&(&p.v * x), u, t)?;
        let mut dx = &p.a * x + &p.b * u + &p.s * g + &p.fx * fx;
        if let Some(w) = &self.disturbance {
            dx += &p.d * w(t);
        }
        Ok(dx)
    }
    fn output(&self, x: &Vector, fault: &Vector, _t: f64) -> Vector {
        let n_fx = self.model.n_fx();
        let fy = fault.rows(n_fx, fault.len() - n_fx);
        &self.model.c * x + &self.model.fy * fy
    }
    fn plant_faults(&self, _x: &Vector, fault: &Vector) -> Result<(Vector, Vector)> {
        let (n_fx, n_fy) = (self.model.n_fx(), self.model.n_fy());
        if fault.len() != n_fx + n_fy {
            return Err(dim_err("fault vector", n_fx + n_fy, fault.len()));
        }
        Ok((
            fault.rows(0, n_fx).into_owned(),
            fault.rows(n_fx, n_fy).into_owned(),
        ))
    }
}

/// The observer as it runs online: it is driven by `(u, y)` only.
pub struct ObserverRuntime<'a> {
    n: &'a Mat,
    g: &'a Mat,
    l: &'a Mat,
    e: &'a Mat,
    reconstructor: FaultReconstructor,
    tp: &'a TransformedPlant,
}

impl<'a> ObserverRuntime<'a> {
    pub fn new(design: &'a ObserverDesign, aug: &AugmentedSystem, tp: &'a TransformedPlant) -> Result<Self> {
        Ok(Self {
            n: &design.n,
            g: &design.g,
            l: &design.l,
            e: &design.e,
            reconstructor: FaultReconstructor::new(aug, tp, DEFAULT_RANK_TOL)?,
            tp,
        })
    }

    /// `z' = N z + G u + L y`.
    pub fn derivative(&self, z: &Vector, u: &Vector, y: &Vector) -> Vector {
        self.n * z + self.g * u + self.l * y
    }

    /// `xhat_a = z - E y`.
    pub fn estimate(&self, z: &Vector, y: &Vector) -> Vector {
        z - self.e * y
    }

    pub fn faults(&self, xhat_a: &Vector, u: &Vector, t: f64) -> Result<(Vector, Vector)> {
        self.reconstructor.estimate(self.tp, xhat_a, u, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { t_end: 100.0, dt: 1e-3 }
    }
}

/// Number of whole `dt` steps in `span`, rejecting spans that are not a
/// multiple of `dt`.
fn whole_steps(span: f64, dt: f64, what: &str) -> Result<usize> {
    let k = (span / dt).round();
    if (k * dt - span).abs() > 1e-9 * span.max(1.0) || k < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "{what} ({span}) must be a positive integer multiple of dt ({dt})"
        )));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, Default)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    /// Noisy measurement.
    pub y: Vec<Vector>,
    pub xhat_a: Vec<Vector>,
    pub fx_hat: Vec<Vector>,
    pub fy_hat: Vec<Vector>,
    pub fx_true: Vec<Vector>,
    pub fy_true: Vec<Vector>,
    /// `Cbar_a xhat_a` minus its true value.
    pub e_d: Vec<Vector>,
    pub onset: f64,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Fault estimation error `[fx_hat - fx; fy_hat - fy]` at sample `k`.
    pub fn fault_error(&self, k: usize) -> Vector {
        let ex = &self.fx_hat[k] - &self.fx_true[k];
        let ey = &self.fy_hat[k] - &self.fy_true[k];
        Vector::from_iterator(ex.len() + ey.len(), ex.iter().chain(ey.iter()).copied())
    }

    pub fn fault_estimate(&self, k: usize) -> Vector {
        let (a, b) = (&self.fx_hat[k], &self.fy_hat[k]);
        Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
    }

    /// CSV with header `t, x.., y.., fn_true.., fn_hat.., ed..`; output-fault
    /// columns `fy{i}_true` and `fy{i}_hat` follow their process-fault
    /// counterparts when present. Values use 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        let mut header = vec!["t".to_string()];
        fn names(prefix: &'static str, suffix: &'static str, count: usize) -> impl Iterator<Item = String> {
            (1..=count).map(move |i| format!("{prefix}{i}{suffix}"))
        }
        header.extend(names("x", "", self.x[0].len()));
        header.extend(names("y", "", self.y[0].len()));
        header.extend(names("fn", "_true", self.fx_true[0].len()));
        header.extend(names("fy", "_true", self.fy_true[0].len()));
        header.extend(names("fn", "_hat", self.fx_hat[0].len()));
        header.extend(names("fy", "_hat", self.fy_hat[0].len()));
        header.extend(names("ed_", "", self.e_d[0].len()));
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            line.push_str(&format!("{:.16e}", self.t[k]));
            for v in [
                &self.x[k],
                &self.y[k],
                &self.fx_true[k],
                &self.fy_true[k],
                &self.fx_hat[k],
                &self.fy_hat[k],
                &self.e_d[k],
            ] {
                for val in v.iter() {
                    line.push_str(&format!(",{val:.16e}"));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn check_state(v: &Vector, t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t })
    }
}

/// Fixed-step RK4 of plant and observer together.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    plant: &dyn TruePlant,
    design: &ObserverDesign,
    aug: &AugmentedSystem,
    tp: &TransformedPlant,
    scenario: &FaultScenario,
    noise: &NoiseModel,
    opts: &SimOptions,
    x0: &Vector,
    z0: &Vector,
) -> Result<SimulationTrace> {
    noise.validate()?;
    if !(opts.dt > 0.0) || !(opts.t_end > opts.dt) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t_end > dt, got dt = {}, t_end = {}",
            opts.dt, opts.t_end
        )));
    }
    let steps = whole_steps(opts.t_end, opts.dt, "t_end")?;
    let hold = if noise.amplitude > 0.0 {
        whole_steps(noise.sample_period, opts.dt, "noise sample period")?
    } else {
        usize::MAX
    };
    if x0.len() != plant.state_dim() {
        return Err(dim_err("x0", plant.state_dim(), x0.len()));
    }
    if z0.len() != aug.n_z() {
        return Err(dim_err("z0", aug.n_z(), z0.len()));
    }
    if scenario.dim() != plant.fault_dim() {
        return Err(dim_err("fault scenario", plant.fault_dim(), scenario.dim()));
    }
    if plant.output_dim() != aug.m() {
        return Err(dim_err("plant outputs", aug.m(), plant.output_dim()));
    }

    let obs = ObserverRuntime::new(design, aug, tp)?;
    let m = aug.m();
    let dt = opts.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vector {
        if noise.amplitude > 0.0 {
            Vector::from_fn(m, |_, _| rng.random_range(-noise.amplitude..=noise.amplitude))
        } else {
            Vector::zeros(m)
        }
    };

    let mut trace = SimulationTrace {
        onset: scenario.onset,
        ..Default::default()
    };
    trace.t.reserve(steps + 1);

    let mut x = x0.clone();
    let mut z = z0.clone();
    let mut nu = draw(&mut rng);

    // joint right-hand side; the noise sample is constant over each step
    let rhs = |t: f64, t0: f64, x: &Vector, z: &Vector, nu: &Vector| -> Result<(Vector, Vector)> {
        let u = plant.input(t);
        let fault = scenario.eval_in_step(t, t0);
        let dx = plant.derivative(x, &u, &fault, t)?;
        let y = plant.output(x, &fault, t) + nu;
        let dz = obs.derivative(z, &u, &y);
        Ok((dx, dz))
    };

    let record = |k: usize, x: &Vector, z: &Vector, nu: &Vector, trace: &mut SimulationTrace| -> Result<()> {
        let t = k as f64 * dt;
        let u = plant.input(t);
        let fault = scenario.eval(t);
        let y = plant.output(x, &fault, t) + nu;
        let xhat = obs.estimate(z, &y);
        let (fx_hat, fy_hat) = obs.faults(&xhat, &u, t)?;
        let (fx, fy) = plant.plant_faults(x, &fault)?;
        let truth = true_performance_signals(tp, x, &u, t, &fx, &fy)?;
        trace.e_d.push(&aug.cbar_a * &xhat - truth);
        trace.t.push(t);
        trace.x.push(x.clone());
        trace.y.push(y);
        trace.xhat_a.push(xhat);
        trace.fx_hat.push(fx_hat);
        trace.fy_hat.push(fy_hat);
        trace.fx_true.push(fx);
        trace.fy_true.push(fy);
        Ok(())
    };

    record(0, &x, &z, &nu, &mut trace)?;
    for k in 0..steps {
        let t = k as f64 * dt;
        let (k1x, k1z) = rhs(t, t, &x, &z, &nu)?;
        let (k2x, k2z) = rhs(t + 0.5 * dt, t, &(&x + &k1x * (0.5 * dt)), &(&z + &k1z * (0.5 * dt)), &nu)?;
        let (k3x, k3z) = rhs(t + 0.5 * dt, t, &(&x + &k2x * (0.5 * dt)), &(&z + &k2z * (0.5 * dt)), &nu)?;
        let (k4x, k4z) = rhs(t + dt, t, &(&x + &k3x * dt), &(&z + &k3z * dt), &nu)?;
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
        z += (k1z + k2z * 2.0 + k3z * 2.0 + k4z) * (dt / 6.0);
        let t_next = (k + 1) as f64 * dt;
        check_state(&x, t_next)?;
        check_state(&z, t_next)?;
        if (k + 1) % hold == 0 {
            nu = draw(&mut rng);
        }
        record(k + 1, &x, &z, &nu, &mut trace)?;
    }
    Ok(trace)
}

/// Plant-only RK4 run; returns the final state.
pub fn integrate_plant(
    plant: &dyn TruePlant,
    scenario: &FaultScenario,
    x0: &Vector,
    opts: &SimOptions,
) -> Result<Vector> {
    let steps = whole_steps(opts.t_end, opts.dt, "t_end")?;
    if scenario.dim() != plant.fault_dim() {
        return Err(dim_err("fault scenario", plant.fault_dim(), scenario.dim()));
    }
    let dt = opts.dt;
    let f = |s: f64, t0: f64, x: &Vector| plant.derivative(x, &plant.input(s), &scenario.eval_in_step(s, t0), s);
    let mut x = x0.clone();
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = f(t, t, &x)?;
        let k2 = f(t + 0.5 * dt, t, &(&x + &k1 * (0.5 * dt)))?;
        let k3 = f(t + 0.5 * dt, t, &(&x + &k2 * (0.5 * dt)))?;
        let k4 = f(t + dt, t, &(&x + &k3 * dt))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        check_state(&x, t + dt)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Per fault channel (`fx` then `fy`) over `[transient_cut, t_end]`.
    pub rmse: Vec<f64>,
    /// Per channel over `[max(onset, transient_cut), t_end]`; empty when the
    /// fault never starts inside the run.
    pub post_onset_rmse: Vec<f64>,
    /// Standard deviation of each estimate over `[transient_cut, onset)`.
    pub noise_sensitivity: Vec<f64>,
    pub peak_error: Vec<f64>,
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

impl RunMetrics {
    /// Root mean square over channels of [`RunMetrics::rmse`].
    pub fn rmse_total(&self) -> f64 {
        rms(&self.rmse)
    }
    pub fn post_onset_rmse_total(&self) -> f64 {
        rms(&self.post_onset_rmse)
    }
    pub fn noise_sensitivity_total(&self) -> f64 {
        rms(&self.noise_sensitivity)
    }
}

pub fn run_metrics(trace: &SimulationTrace, transient_cut: f64) -> Result<RunMetrics> {
    let Some(&t_end) = trace.t.last() else {
        return Err(Error::InvalidArgument("empty trace".into()));
    };
    if !(transient_cut < t_end) {
        return Err(Error::InvalidArgument(format!(
            "transient cut {transient_cut} must precede the end of the run {t_end}"
        )));
    }
    let channels = trace.fault_error(0).len();
    let window = |lo: f64, hi: f64, closed: bool| -> Vec<usize> {
        (0..trace.len())
            .filter(|&k| trace.t[k] >= lo && (trace.t[k] < hi || (closed && trace.t[k] <= hi)))
            .collect()
    };
    let all = window(transient_cut, t_end, true);
    let post = if trace.onset <= t_end {
        window(trace.onset.max(transient_cut), t_end, true)
    } else {
        Vec::new()
    };
    let pre = window(transient_cut, trace.onset.min(t_end), trace.onset > t_end);

    let errors: Vec<Vector> = (0..trace.len()).map(|k| trace.fault_error(k)).collect();
    let channel_rms = |idx: &[usize], c: usize| rms(&idx.iter().map(|&k| errors[k][c]).collect::<Vec<_>>());

    let rmse = (0..channels).map(|c| channel_rms(&all, c)).collect();
    let post_onset_rmse = if post.is_empty() {
        Vec::new()
    } else {
        (0..channels).map(|c| channel_rms(&post, c)).collect()
    };
    let noise_sensitivity = (0..channels)
        .map(|c| {
            let vals: Vec<f64> = pre.iter().map(|&k| trace.fault_estimate(k)[c]).collect();
            if vals.is_empty() {
                return f64::NAN;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
        })
        .collect();
    let peak_error = (0..channels)
        .map(|c| all.iter().map(|&k| errors[k][c].abs()).fold(0.0, f64::max))
        .collect();
    Ok(RunMetrics {
        rmse,
        post_onset_rmse,
        noise_sensitivity,
        peak_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{build_augmented, UltraLocalOrders};
    use crate::model::transform;
    use crate::synth::{solve_iss, DEFAULT_EPSILON};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn rk4(f: impl Fn(&Vector) -> Vector, x: &Vector, dt: f64) -> Vector {
        let k1 = f(x);
        let k2 = f(&(x + &k1 * (0.5 * dt)));
        let k3 = f(&(x + &k2 * (0.5 * dt)));
        let k4 = f(&(x + &k3 * dt));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    #[test]
    fn undamped_arm_conserves_energy() {
        let p = ManipulatorParams {
            d1: 0.0,
            d2: 0.0,
            ..Default::default()
        };
        let zero = Vector::zeros(2);
        let mut x = Vector::from_vec(vec![0.8, -0.4, 0.5, -1.0]);
        let e0 = p.energy(&x);
        for _ in 0..10_000 {
            x = rk4(|s| manipulator_derivative(&p, s, &zero, &zero).unwrap(), &x, 1e-4);
        }
        assert!((p.energy(&x) - e0).abs() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order_on_the_arm() {
        let sys = ManipulatorSystem::new(ManipulatorParams::default());
        let scenario = FaultScenario::manipulator(0.5);
        let x0 = Vector::from_vec(vec![0.2, 0.1, 0.0, 0.0]);
        let run = |dt: f64| integrate_plant(&sys, &scenario, &x0, &SimOptions { t_end: 2.0, dt }).unwrap();
        let reference = run(0.02 / 16.0);
        let e1 = (run(0.02) - &reference).norm();
        let e2 = (run(0.01) - &reference).norm();
        let ratio = e1 / e2;
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn nonpositive_parameters_are_rejected() {
        let p = ManipulatorParams {
            m2: 0.0,
            ..Default::default()
        };
        assert!(matches!(manipulator_plant(&p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn time_grid_must_be_whole() {
        assert_eq!(whole_steps(1.0, 1e-3, "t").unwrap(), 1000);
        assert!(whole_steps(1.0005, 1e-3, "t").is_err());
        assert!(whole_steps(0.0, 1e-3, "t").is_err());
    }

    #[test]
    fn fault_scenario_starts_at_onset() {
        let s = FaultScenario::manipulator(50.0);
        assert_eq!(s.eval(49.999), Vector::zeros(2));
        assert_eq!(s.eval(50.0), Vector::from_vec(vec![0.0, -0.05]));
    }

    fn short_run(noise: NoiseModel) -> SimulationTrace {
        let params = ManipulatorParams::default();
        let tp = transform(manipulator_plant(&params).unwrap(), DEFAULT_RANK_TOL).unwrap();
        let aug = build_augmented(&tp, UltraLocalOrders::uniform(4).unwrap()).unwrap();
        let design = solve_iss(&aug, DEFAULT_EPSILON).unwrap();
        simulate(
            &ManipulatorSystem::new(params),
            &design,
            &aug,
            &tp,
            &FaultScenario::manipulator(1.0),
            &noise,
            &SimOptions { t_end: 2.0, dt: 1e-3 },
            &Vector::zeros(4),
            &Vector::zeros(aug.n_z()),
        )
        .unwrap()
    }

    fn csv(trace: &SimulationTrace) -> Vec<u8> {
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        out
    }

    #[test]
    fn simulation_is_deterministic() {
        let noise = NoiseModel {
            amplitude: 0.1,
            sample_period: 0.1,
            seed: 7,
        };
        let a = csv(&short_run(noise));
        assert_eq!(a, csv(&short_run(noise)));
        assert_ne!(a, csv(&short_run(NoiseModel { seed: 8, ..noise })));
    }

    #[test]
    fn seed_is_irrelevant_without_noise() {
        let quiet = |seed| NoiseModel {
            amplitude: 0.0,
            sample_period: 0.1,
            seed,
        };
        assert_eq!(csv(&short_run(quiet(1))), csv(&short_run(quiet(2))));
    }

    #[test]
    fn csv_header_lists_every_channel() {
        let trace = short_run(NoiseModel::off());
        let text = String::from_utf8(csv(&trace)).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "t,x1,x2,x3,x4,y1,y2,fn1_true,fn2_true,fn1_hat,fn2_hat,ed_1,ed_2,ed_3,ed_4,ed_5,ed_6"
        );
        assert_eq!(text.lines().count(), trace.len() + 1);
    }

    fn synthetic_trace(err: f64, wobble: f64) -> SimulationTrace {
        let n = 101;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let fx_true: Vec<Vector> = t.iter().map(|&s| Vector::from_element(1, if s >= 5.0 { 1.0 } else { 0.0 })).collect();
        let fx_hat = t
            .iter()
            .enumerate()
            .map(|(k, _)| &fx_true[k] + Vector::from_element(1, err + if k % 2 == 0 { wobble } else { -wobble }))
            .collect();
        SimulationTrace {
            fx_hat,
            fy_hat: vec![Vector::zeros(0); n],
            fx_true,
            fy_true: vec![Vector::zeros(0); n],
            t,
            onset: 5.0,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_estimates_have_zero_metrics() {
        let m = run_metrics(&synthetic_trace(0.0, 0.0), 1.0).unwrap();
        assert_eq!(m.rmse, vec![0.0]);
        assert_eq!(m.post_onset_rmse, vec![0.0]);
        assert_eq!(m.noise_sensitivity, vec![0.0]);
        assert_eq!(m.peak_error, vec![0.0]);
    }

    #[test]
    fn constant_bias_shows_in_rmse_not_in_noise_sensitivity() {
        let m = run_metrics(&synthetic_trace(0.25, 0.0), 1.0).unwrap();
        assert!((m.rmse_total() - 0.25).abs() < 1e-12);
        assert!((m.post_onset_rmse_total() - 0.25).abs() < 1e-12);
        assert!(m.noise_sensitivity_total() < 1e-12);
        let m = run_metrics(&synthetic_trace(0.0, 0.1), 1.0).unwrap();
        assert!((m.noise_sensitivity_total() - 0.1).abs() < 1e-3);
    }

    #[test]
    fn metrics_reject_bad_windows() {
        assert!(run_metrics(&SimulationTrace::default(), 0.0).is_err());
        assert!(run_metrics(&synthetic_trace(0.0, 0.0), 20.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mass_matrix_is_symmetric_positive_definite(phi in -10.0f64..10.0) {
            let m = ManipulatorParams::default().mass_matrix(phi);
            prop_assert!(m[(0, 1)] == m[(1, 0)]);
            prop_assert!(m[(0, 0)] > 0.0 && m.determinant() > 0.0);
        }
    }
}
