//! Run configuration, read from a TOML file. See `configs/manipulator.toml`
//! for an annotated example.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ultralocal::augment::UltraLocalOrders;
use ultralocal::matlib::{self, Mat, Vector};
use ultralocal::model::PlantModel;
use ultralocal::sim::{
    manipulator_input, manipulator_plant, FaultScenario, ManipulatorParams, ManipulatorSystem, ModelPlant,
    NoiseModel, Signal, SimOptions, TruePlant,
};
use ultralocal::synth::{DesignMode, SynthOptions};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub orders: OrdersConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    TwoLinkManipulator {
        #[serde(default)]
        params: ManipulatorOverrides,
    },
    /// Linear plant (`g = 0`). Omitted matrices have no columns (`v`: no rows).
    Matrices {
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        #[serde(default)]
        b: Vec<Vec<f64>>,
        #[serde(default)]
        s: Vec<Vec<f64>>,
        #[serde(default)]
        v: Vec<Vec<f64>>,
        #[serde(default)]
        fx: Vec<Vec<f64>>,
        #[serde(default)]
        fy: Vec<Vec<f64>>,
        #[serde(default)]
        d: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorOverrides {
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub i1: Option<f64>,
    pub i2: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub lc1: Option<f64>,
    pub lc2: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub g: Option<f64>,
}

impl ManipulatorOverrides {
    pub fn params(&self) -> ManipulatorParams {
        let base = ManipulatorParams::default();
        ManipulatorParams {
            m1: self.m1.unwrap_or(base.m1),
            m2: self.m2.unwrap_or(base.m2),
            i1: self.i1.unwrap_or(base.i1),
            i2: self.i2.unwrap_or(base.i2),
            l1: self.l1.unwrap_or(base.l1),
            l2: self.l2.unwrap_or(base.l2),
            lc1: self.lc1.unwrap_or(base.lc1),
            lc2: self.lc2.unwrap_or(base.lc2),
            d1: self.d1.unwrap_or(base.d1),
            d2: self.d2.unwrap_or(base.d2),
            g: self.g.unwrap_or(base.g),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrdersConfig {
    pub uniform: Option<usize>,
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    pub r3: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Iss,
    Hinf,
    H2,
    MixedHinf,
    MixedH2,
}

impl ModeName {
    pub const COMPARED: [ModeName; 4] = [ModeName::Hinf, ModeName::H2, ModeName::MixedHinf, ModeName::MixedH2];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeName::Iss => "iss",
            ModeName::Hinf => "hinf",
            ModeName::H2 => "h2",
            ModeName::MixedHinf => "mixed-hinf",
            ModeName::MixedH2 => "mixed-h2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Iss, Self::Hinf, Self::H2, Self::MixedHinf, Self::MixedH2]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

fn default_epsilon() -> f64 {
    ultralocal::synth::DEFAULT_EPSILON
}

fn default_rank_tol() -> f64 {
    matlib::DEFAULT_RANK_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub mode: ModeName,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub gamma_max: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Confine the observer poles to the disk of this radius.
    pub pole_radius: Option<f64>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Start of the window used for the error metrics.
    pub transient_cut: f64,
    pub noise_amplitude: f64,
    pub noise_period: f64,
    pub x0: Option<Vec<f64>>,
    pub z0: Option<Vec<f64>>,
    pub input: InputConfig,
    pub fault: FaultConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            dt: 1e-3,
            seed: 0,
            transient_cut: 10.0,
            noise_amplitude: 0.0,
            noise_period: 0.1,
            x0: None,
            z0: None,
            input: InputConfig::Default,
            fault: FaultConfig::None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// The manipulator's reference torque, zero for matrix plants.
    #[default]
    Default,
    Zero,
    /// `amplitude sin(2 pi t / period)` on every input channel.
    Sine { amplitude: f64, period: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultConfig {
    #[default]
    None,
    /// Actuator faults `[0.2 sin(2 pi (t - onset) / 10), -0.05]`.
    Manipulator { onset: f64 },
    /// One polynomial in `t - onset` per raw fault channel (`fx` then `fy`),
    /// coefficients in increasing degree.
    Polynomial { onset: f64, coefficients: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// SHA-256 of the normalised config, so overrides are part of the hash.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        let d = &self.design;
        positive("design.epsilon", d.epsilon)?;
        positive("design.rank_tol", d.rank_tol)?;
        if let Some(v) = d.gamma_max {
            positive("design.gamma_max", v)?;
        }
        if let Some(v) = d.lambda_max {
            positive("design.lambda_max", v)?;
        }
        if let Some(v) = d.pole_radius {
            positive("design.pole_radius", v)?;
        }
        match d.mode {
            ModeName::MixedHinf if d.gamma_max.is_none() => {
                return Err(invalid("design.gamma_max", "required for mode mixed-hinf"))
            }
            ModeName::MixedH2 if d.lambda_max.is_none() => {
                return Err(invalid("design.lambda_max", "required for mode mixed-h2"))
            }
            _ => {}
        }
        self.orders.orders()?;

        let s = &self.simulation;
        positive("simulation.t_end", s.t_end)?;
        positive("simulation.dt", s.dt)?;
        positive("simulation.noise_period", s.noise_period)?;
        if !(s.noise_amplitude >= 0.0 && s.noise_amplitude.is_finite()) {
            return Err(invalid("simulation.noise_amplitude", "must be >= 0"));
        }
        if !(s.transient_cut >= 0.0 && s.transient_cut < s.t_end) {
            return Err(invalid("simulation.transient_cut", "must lie in [0, t_end)"));
        }
        if let InputConfig::Sine { amplitude, period } = s.input {
            if !amplitude.is_finite() {
                return Err(invalid("simulation.input.amplitude", "must be finite"));
            }
            positive("simulation.input.period", period)?;
        }
        match &s.fault {
            FaultConfig::Manipulator { onset } | FaultConfig::Polynomial { onset, .. } if !onset.is_finite() => {
                return Err(invalid("simulation.fault.onset", "must be finite"))
            }
            FaultConfig::Manipulator { .. } if !matches!(self.plant, PlantConfig::TwoLinkManipulator { .. }) => {
                return Err(invalid(
                    "simulation.fault.kind",
                    "the manipulator scenario needs the two_link_manipulator plant",
                ))
            }
            _ => {}
        }
        if let PlantConfig::TwoLinkManipulator { params } = &self.plant {
            params
                .params()
                .validate()
                .map_err(|e| invalid("plant.params", e.to_string()))?;
        }
        Ok(())
    }

    pub fn mode(&self) -> DesignMode {
        let d = &self.design;
        match d.mode {
            ModeName::Iss => DesignMode::Iss,
            ModeName::Hinf => DesignMode::Hinf,
            ModeName::H2 => DesignMode::H2,
            ModeName::MixedHinf => DesignMode::MixedHinf {
                gamma_max: d.gamma_max.unwrap_or(f64::NAN),
            },
            ModeName::MixedH2 => DesignMode::MixedH2 {
                lambda_max: d.lambda_max.unwrap_or(f64::NAN),
            },
        }
    }

    pub fn synth_options(&self) -> SynthOptions {
        SynthOptions {
            pole_radius: self.design.pole_radius,
            ..SynthOptions::with_epsilon(self.design.epsilon)
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            t_end: self.simulation.t_end,
            dt: self.simulation.dt,
        }
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            amplitude: self.simulation.noise_amplitude,
            sample_period: self.simulation.noise_period,
            seed: self.simulation.seed,
        }
    }

    /// Design model and the plant the simulator integrates.
    pub fn build_plant(&self) -> Result<(PlantModel, Box<dyn TruePlant>), ConfigError> {
        match &self.plant {
            PlantConfig::TwoLinkManipulator { params } => {
                let p = params.params();
                let model = manipulator_plant(&p).map_err(|e| invalid("plant.params", e.to_string()))?;
                let mut sys = ManipulatorSystem::new(p);
                sys.input = self.input_signal(2, true);
                Ok((model, Box::new(sys)))
            }
            PlantConfig::Matrices { a, c, b, s, v, fx, fy, d } => {
                let a = matrix("plant.a", a, None)?;
                let n = a.nrows();
                if a.ncols() != n {
                    return Err(invalid("plant.a", format!("must be square, got {}x{}", n, a.ncols())));
                }
                let c = matrix("plant.c", c, Some(n))?;
                let tall = |field: &str, rows: &Vec<Vec<f64>>, height: usize| -> Result<Mat, ConfigError> {
                    if rows.is_empty() {
                        return Ok(Mat::zeros(height, 0));
                    }
                    let m = matrix(field, rows, None)?;
                    if m.nrows() != height {
                        return Err(invalid(field, format!("needs {height} rows, got {}", m.nrows())));
                    }
                    Ok(m)
                };
                let b = tall("plant.b", b, n)?;
                let s = tall("plant.s", s, n)?;
                let v = if v.is_empty() {
                    Mat::zeros(0, n)
                } else {
                    matrix("plant.v", v, Some(n))?
                };
                let fx = tall("plant.fx", fx, n)?;
                let fy = tall("plant.fy", fy, c.nrows())?;
                let d = tall("plant.d", d, n)?;
                let l = b.ncols();
                let model = PlantModel::linear(a, b, s, v, c, fx, fy, d).map_err(|e| invalid("plant", e.to_string()))?;
                let sys = ModelPlant {
                    model: model.clone(),
                    input: self.input_signal(l, false),
                    disturbance: None,
                };
                Ok((model, Box::new(sys)))
            }
        }
    }

    fn input_signal(&self, channels: usize, manipulator: bool) -> Signal {
        match self.simulation.input {
            InputConfig::Default if manipulator => manipulator_input(),
            InputConfig::Default | InputConfig::Zero => Arc::new(move |_| Vector::zeros(channels)),
            InputConfig::Sine { amplitude, period } => Arc::new(move |t: f64| {
                Vector::from_element(channels, amplitude * (2.0 * std::f64::consts::PI * t / period).sin())
            }),
        }
    }

    /// Fault scenario for a plant whose raw fault vector has `dim` entries.
    pub fn scenario(&self, dim: usize) -> Result<FaultScenario, ConfigError> {
        Ok(match &self.simulation.fault {
            FaultConfig::None => FaultScenario::none(dim),
            FaultConfig::Manipulator { onset } => FaultScenario::manipulator(*onset),
            FaultConfig::Polynomial { onset, coefficients } => {
                if coefficients.len() != dim {
                    return Err(invalid(
                        "simulation.fault.coefficients",
                        format!("needs one polynomial per fault channel ({dim}), got {}", coefficients.len()),
                    ));
                }
                let coefficients = coefficients.clone();
                let onset = *onset;
                FaultScenario::new(
                    onset,
                    dim,
                    Arc::new(move |t: f64| {
                        let s = t - onset;
                        Vector::from_iterator(
                            coefficients.len(),
                            coefficients.iter().map(|c| c.iter().rev().fold(0.0, |acc, k| acc * s + k)),
                        )
                    }),
                )
            }
        })
    }

    /// `given`, or `len` copies of `fill` when absent.
    pub fn initial_state(
        &self,
        field: &str,
        given: &Option<Vec<f64>>,
        len: usize,
        fill: f64,
    ) -> Result<Vector, ConfigError> {
        match given {
            None => Ok(Vector::from_element(len, fill)),
            Some(v) if v.len() == len => Ok(Vector::from_column_slice(v)),
            Some(v) => Err(invalid(field, format!("needs {len} entries, got {}", v.len()))),
        }
    }
}

impl OrdersConfig {
    pub fn orders(&self) -> Result<UltraLocalOrders, ConfigError> {
        let result = match (self.uniform, self.r1, self.r2, self.r3) {
            (Some(r), None, None, None) => UltraLocalOrders::uniform(r),
            (None, Some(r1), Some(r2), Some(r3)) => UltraLocalOrders::new(r1, r2, r3),
            _ => return Err(invalid("orders", "give either `uniform` or all of `r1`, `r2`, `r3`")),
        };
        result.map_err(|e| invalid("orders", e.to_string()))
    }
}

fn matrix(field: &str, rows: &[Vec<f64>], cols: Option<usize>) -> Result<Mat, ConfigError> {
    let width = rows.first().map_or(0, |r| r.len());
    let width = cols.unwrap_or(width);
    if rows.is_empty() || width == 0 {
        return Err(invalid(field, "must be a non-empty array of rows"));
    }
    matlib::from_rows(rows, width).map_err(|e| invalid(field, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[plant]
kind = "two_link_manipulator"

[orders]
uniform = 4

[design]
mode = "mixed-hinf"
gamma_max = 20.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.design.epsilon, 1e-3);
        assert_eq!(cfg.simulation.dt, 1e-3);
        assert_eq!(cfg.simulation.fault, FaultConfig::None);
        assert_eq!(cfg.mode(), DesignMode::MixedHinf { gamma_max: 20.0 });
    }

    #[test]
    fn missing_bound_names_the_field() {
        let text = MINIMAL.replace("gamma_max = 20.0", "");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "design.gamma_max"), "{err}");
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let text = MINIMAL.replace("uniform = 4", "uniform = \"four\"");
        let msg = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("line 6"), "{msg}");
        assert!(msg.contains("uniform"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("uniform = 4", "uniform = 4\nr9 = 1");
        assert!(RunConfig::from_toml(&text).unwrap_err().to_string().contains("r9"));
    }

    #[test]
    fn round_trip_preserves_config_and_hash() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        let mut other = cfg.clone();
        other.simulation.seed = 1;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn nonpositive_tolerances_are_rejected() {
        let text = MINIMAL.replace("gamma_max = 20.0", "gamma_max = 20.0\nepsilon = 0.0");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "design.epsilon"));
    }

    #[test]
    fn matrix_plant_checks_shapes() {
        let text = r#"
[plant]
kind = "matrices"
a = [[0.0, 1.0], [-2.0, -1.0]]
c = [[1.0, 0.0]]
fx = [[0.0], [1.0], [2.0]]

[orders]
uniform = 2

[design]
mode = "iss"
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let err = cfg.build_plant().err().unwrap();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "plant.fx"), "{err}");
    }
}
