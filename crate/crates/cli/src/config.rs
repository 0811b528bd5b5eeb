//! TOML scenario documents.
//!
//! Every table rejects unknown keys. The schema is documented in the README.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use eqsadj::excitation::{Excitation, Waveform};
use eqsadj::forward::{InitialCondition, NewtonOptions};
use eqsadj::materials::{FgmParams, MaterialLaw, MaterialMap, MaterialModel, ParamSelector};
use eqsadj::mesh::JointGeometry;
use eqsadj::qoi::{QoiKind, QoiSpec};
use eqsadj::scenarios::{MeshSource, Scenario};
use eqsadj::sensitivity::{Parameter, ParameterSpec};
use eqsadj::timegrid::DEFAULT_REFINE_RATIO;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub mesh: MeshConfig,
    pub materials: Vec<MaterialConfig>,
    pub excitation: BTreeMap<String, WaveformConfig>,
    pub timegrid: TimeGridConfig,
    #[serde(default)]
    pub qois: Vec<QoiConfig>,
    #[serde(default)]
    pub parameters: Vec<ParameterConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshConfig {
    LayeredRect {
        width: f64,
        layer_thickness: f64,
        nx: usize,
        ny_per_layer: usize,
    },
    Joint(JointConfig),
    /// Relative paths are resolved against the config file's directory.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub r_conductor: f64,
    pub r_fgm_inner: f64,
    pub r_fgm_outer: f64,
    pub r_outer: f64,
    pub length: f64,
    pub cells_inner: usize,
    pub cells_fgm: usize,
    pub cells_outer: usize,
    pub cells_z: usize,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointGeometry::<f64>::default().into()
    }
}

impl From<JointGeometry<f64>> for JointConfig {
    fn from(g: JointGeometry<f64>) -> Self {
        Self {
            r_conductor: g.r_conductor,
            r_fgm_inner: g.r_fgm_inner,
            r_fgm_outer: g.r_fgm_outer,
            r_outer: g.r_outer,
            length: g.length,
            cells_inner: g.cells_inner,
            cells_fgm: g.cells_fgm,
            cells_outer: g.cells_outer,
            cells_z: g.cells_z,
        }
    }
}

impl From<&JointConfig> for JointGeometry<f64> {
    fn from(c: &JointConfig) -> Self {
        Self {
            r_conductor: c.r_conductor,
            r_fgm_inner: c.r_fgm_inner,
            r_fgm_outer: c.r_fgm_outer,
            r_outer: c.r_outer,
            length: c.length,
            cells_inner: c.cells_inner,
            cells_fgm: c.cells_fgm,
            cells_outer: c.cells_outer,
            cells_z: c.cells_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialConfig {
    Linear {
        region: u32,
        sigma: f64,
        eps: f64,
    },
    Fgm {
        region: u32,
        a1: f64,
        a2: f64,
        a3: f64,
        a4: f64,
        eps: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveformConfig {
    Dc { value: f64 },
    Sine { amplitude: f64, frequency: f64 },
    Impulse { peak: f64, tau1: f64, tau2: f64 },
    Sum { terms: Vec<WaveformConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridConfig {
    pub t_end: f64,
    pub n_main: usize,
    #[serde(default = "default_refine_ratio")]
    pub refine_ratio: f64,
}

fn default_refine_ratio() -> f64 {
    DEFAULT_REFINE_RATIO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoiConfig {
    pub name: String,
    pub quantity: QuantityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuantityConfig {
    Energy {
        t_a: f64,
        t_b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regions: Option<Vec<u32>>,
    },
    Potential {
        point: [f64; 2],
        t_ref: f64,
    },
    FieldMagnitude {
        point: [f64; 2],
        t_ref: f64,
    },
    Combination {
        terms: Vec<WeightedQuantity>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedQuantity {
    pub weight: f64,
    pub quantity: QuantityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterConfig {
    Material { name: String, region: u32, param: String },
    InitialScale { name: String, profile: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Zero,
    DcSteady,
    Prescribed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub initial: InitialKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_values: Option<Vec<f64>>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub newton_max_halvings: usize,
    /// Relative central-difference step of the FD oracle.
    pub fd_step: f64,
    /// Relative AVM/oracle disagreement accepted by `check`.
    pub tolerance: f64,
    pub convergence_sweep: Vec<usize>,
    /// Largest RK4 step of the lumped oracle; `t_end·1e-5` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_dt: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let newton = NewtonOptions::<f64>::default();
        Self {
            initial: InitialKind::Zero,
            initial_values: None,
            newton_tol: newton.tol,
            newton_max_iter: newton.max_iter,
            newton_max_halvings: newton.max_halvings,
            fd_step: 1e-3,
            tolerance: 0.01,
            convergence_sweep: vec![],
            oracle_dt: None,
        }
    }
}

/// Configuration problems found before any numerics.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn oracle_dt(&self) -> f64 {
        self.run.oracle_dt.unwrap_or(self.timegrid.t_end * 1e-5)
    }

    /// Builds the scenario; `base` resolves relative mesh paths.
    pub fn to_scenario(&self, base: &Path) -> Result<Scenario<f64>, ConfigError> {
        let err = |e: eqsadj::Error| ConfigError(e.to_string());
        let mesh = match &self.mesh {
            MeshConfig::LayeredRect {
                width,
                layer_thickness,
                nx,
                ny_per_layer,
            } => MeshSource::LayeredRect {
                width: *width,
                layer_thickness: *layer_thickness,
                nx: *nx,
                ny_per_layer: *ny_per_layer,
            },
            MeshConfig::Joint(j) => MeshSource::Joint(j.into()),
            MeshConfig::File { path } => MeshSource::File(base.join(path)),
        };
        let materials = MaterialMap::new(
            self.materials
                .iter()
                .map(|m| match *m {
                    MaterialConfig::Linear { region, sigma, eps } => MaterialModel::linear(region, sigma, eps),
                    MaterialConfig::Fgm {
                        region,
                        a1,
                        a2,
                        a3,
                        a4,
                        eps,
                    } => MaterialModel::fgm(region, FgmParams { a1, a2, a3, a4 }, eps),
                })
                .collect::<eqsadj::Result<Vec<_>>>()
                .map_err(err)?,
        )
        .map_err(err)?;
        let excitation = Excitation::new(self.excitation.iter().map(|(k, w)| (k.clone(), waveform(w)))).map_err(err)?;
        let initial = match (self.run.initial, &self.run.initial_values) {
            (InitialKind::Zero, None) => InitialCondition::Zero,
            (InitialKind::DcSteady, None) => InitialCondition::DcSteady,
            (InitialKind::Prescribed, Some(v)) => InitialCondition::Prescribed(v.clone()),
            (InitialKind::Prescribed, None) => {
                return Err(ConfigError("run.initial = \"prescribed\" requires run.initial_values".into()))
            }
            (_, Some(_)) => {
                return Err(ConfigError("run.initial_values is only allowed with run.initial = \"prescribed\"".into()))
            }
        };
        let parameters = self
            .parameters
            .iter()
            .map(|p| match p {
                ParameterConfig::Material { name, region, param } => Ok(ParameterSpec::material(
                    name.clone(),
                    *region,
                    ParamSelector::parse(param).map_err(err)?,
                )),
                ParameterConfig::InitialScale { name, profile } => Ok(ParameterSpec {
                    name: name.clone(),
                    parameter: Parameter::InitialScale {
                        profile: profile.clone(),
                    },
                }),
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        if !(self.run.fd_step > 0.0) || !(self.run.tolerance > 0.0) {
            return Err(ConfigError("run.fd_step and run.tolerance must be positive".into()));
        }
        Ok(Scenario {
            name: self.name.clone(),
            mesh,
            materials,
            excitation,
            initial,
            t_end: self.timegrid.t_end,
            n_main: self.timegrid.n_main,
            refine_ratio: self.timegrid.refine_ratio,
            newton: NewtonOptions {
                tol: self.run.newton_tol,
                max_iter: self.run.newton_max_iter,
                max_halvings: self.run.newton_max_halvings,
            },
            qois: self
                .qois
                .iter()
                .map(|q| QoiSpec {
                    name: q.name.clone(),
                    kind: quantity(&q.quantity),
                })
                .collect(),
            parameters,
            convergence_sweep: self.run.convergence_sweep.clone(),
        })
    }

    /// Document describing a built-in scenario.
    pub fn from_scenario(s: &Scenario<f64>) -> Self {
        let mesh = match &s.mesh {
            MeshSource::LayeredRect {
                width,
                layer_thickness,
                nx,
                ny_per_layer,
            } => MeshConfig::LayeredRect {
                width: *width,
                layer_thickness: *layer_thickness,
                nx: *nx,
                ny_per_layer: *ny_per_layer,
            },
            MeshSource::Joint(g) => MeshConfig::Joint(g.clone().into()),
            MeshSource::File(p) => MeshConfig::File { path: p.clone() },
        };
        let materials = s
            .materials
            .iter()
            .map(|m| match m.law {
                MaterialLaw::Linear { sigma, eps } => MaterialConfig::Linear {
                    region: m.region,
                    sigma,
                    eps,
                },
                MaterialLaw::Fgm { params, eps } => MaterialConfig::Fgm {
                    region: m.region,
                    a1: params.a1,
                    a2: params.a2,
                    a3: params.a3,
                    a4: params.a4,
                    eps,
                },
            })
            .collect();
        let (initial, initial_values) = match &s.initial {
            InitialCondition::Zero => (InitialKind::Zero, None),
            InitialCondition::DcSteady => (InitialKind::DcSteady, None),
            InitialCondition::Prescribed(v) => (InitialKind::Prescribed, Some(v.clone())),
        };
        let parameters = s
            .parameters
            .iter()
            .map(|p| match &p.parameter {
                Parameter::Material { region, selector } => ParameterConfig::Material {
                    name: p.name.clone(),
                    region: *region,
                    param: selector.as_str().to_string(),
                },
                Parameter::InitialScale { profile } => ParameterConfig::InitialScale {
                    name: p.name.clone(),
                    profile: profile.clone(),
                },
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            name: s.name.clone(),
            mesh,
            materials,
            excitation: s
                .excitation
                .electrodes
                .iter()
                .map(|(k, w)| (k.clone(), waveform_config(w)))
                .collect(),
            timegrid: TimeGridConfig {
                t_end: s.t_end,
                n_main: s.n_main,
                refine_ratio: s.refine_ratio,
            },
            qois: s
                .qois
                .iter()
                .map(|q| QoiConfig {
                    name: q.name.clone(),
                    quantity: quantity_config(&q.kind),
                })
                .collect(),
            parameters,
            run: RunConfig {
                initial,
                initial_values,
                newton_tol: s.newton.tol,
                newton_max_iter: s.newton.max_iter,
                newton_max_halvings: s.newton.max_halvings,
                convergence_sweep: s.convergence_sweep.clone(),
                ..RunConfig::default()
            },
        }
    }
}

fn waveform(w: &WaveformConfig) -> Waveform<f64> {
    match w {
        WaveformConfig::Dc { value } => Waveform::Dc(*value),
        WaveformConfig::Sine { amplitude, frequency } => Waveform::Sine {
            amplitude: *amplitude,
            frequency: *frequency,
        },
        WaveformConfig::Impulse { peak, tau1, tau2 } => Waveform::Impulse {
            peak: *peak,
            tau1: *tau1,
            tau2: *tau2,
        },
        WaveformConfig::Sum { terms } => Waveform::Sum(terms.iter().map(waveform).collect()),
    }
}

fn waveform_config(w: &Waveform<f64>) -> WaveformConfig {
    match w {
        Waveform::Dc(value) => WaveformConfig::Dc { value: *value },
        Waveform::Sine { amplitude, frequency } => WaveformConfig::Sine {
            amplitude: *amplitude,
            frequency: *frequency,
        },
        Waveform::Impulse { peak, tau1, tau2 } => WaveformConfig::Impulse {
            peak: *peak,
            tau1: *tau1,
            tau2: *tau2,
        },
        Waveform::Sum(terms) => WaveformConfig::Sum {
            terms: terms.iter().map(waveform_config).collect(),
        },
    }
}

fn quantity(q: &QuantityConfig) -> QoiKind<f64> {
    match q {
        QuantityConfig::Energy { t_a, t_b, regions } => QoiKind::Energy {
            t_a: *t_a,
            t_b: *t_b,
            regions: regions.clone(),
        },
        QuantityConfig::Potential { point, t_ref } => QoiKind::Potential {
            point: *point,
            t_ref: *t_ref,
        },
        QuantityConfig::FieldMagnitude { point, t_ref } => QoiKind::FieldMagnitude {
            point: *point,
            t_ref: *t_ref,
        },
        QuantityConfig::Combination { terms } => {
            QoiKind::Combination(terms.iter().map(|t| (t.weight, quantity(&t.quantity))).collect())
        }
    }
}

fn quantity_config(q: &QoiKind<f64>) -> QuantityConfig {
    match q {
        QoiKind::Energy { t_a, t_b, regions } => QuantityConfig::Energy {
            t_a: *t_a,
            t_b: *t_b,
            regions: regions.clone(),
        },
        QoiKind::Potential { point, t_ref } => QuantityConfig::Potential {
            point: *point,
            t_ref: *t_ref,
        },
        QoiKind::FieldMagnitude { point, t_ref } => QuantityConfig::FieldMagnitude {
            point: *point,
            t_ref: *t_ref,
        },
        QoiKind::Combination(terms) => QuantityConfig::Combination {
            terms: terms
                .iter()
                .map(|(w, k)| WeightedQuantity {
                    weight: *w,
                    quantity: quantity_config(k),
                })
                .collect(),
        },
    }
}
