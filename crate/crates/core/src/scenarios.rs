//! Ready-made validation setups and the end-to-end pipeline
//! (forward → adjoint → sensitivities, plus the FD cross-check).

use std::path::PathBuf;
use std::sync::Arc;

use crate::adjoint::solve_adjoints;
use crate::error::{Error, Result};
use crate::excitation::{impulse_peak_time, Excitation, Waveform};
use crate::forward::{solve_forward, EqsModel, InitialCondition, NewtonOptions, SolveOptions, TransientSolution};
use crate::materials::{FgmParams, MaterialLaw, MaterialMap, MaterialModel, ParamSelector};
use crate::mesh::{
    build_joint, build_layered_rect, joint_regions, load_mesh, JointGeometry, Mesh, BOTTOM_ELECTRODE, GROUND,
    HV_ELECTRODE, TOP_ELECTRODE,
};
use crate::oracle::{fd_derivatives, report, LumpedParam, LumpedTwoLayer, OracleReport};
use crate::qoi::{QoiKind, QoiSpec, ResolvedQoi};
use crate::sensitivity::{compute_sensitivities, Parameter, ParameterSpec, SensitivityResult};
use crate::timegrid::{TimeGrid, TimeGridSpec, DEFAULT_REFINE_RATIO};
use crate::Scalar;

pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Lightning impulse front and tail constants.
pub const IMPULSE_TAU1: f64 = 1.2e-6 / 2.96;
pub const IMPULSE_TAU2: f64 = 50e-6 / 0.73;

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource<T> {
    LayeredRect {
        width: T,
        layer_thickness: T,
        nx: usize,
        ny_per_layer: usize,
    },
    Joint(JointGeometry<T>),
    File(PathBuf),
}

impl<T: Scalar> MeshSource<T> {
    pub fn build(&self) -> Result<Mesh<T>> {
        match self {
            MeshSource::LayeredRect {
                width,
                layer_thickness,
                nx,
                ny_per_layer,
            } => build_layered_rect(*width, *layer_thickness, *nx, *ny_per_layer),
            MeshSource::Joint(g) => build_joint(g),
            MeshSource::File(p) => load_mesh(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub name: String,
    pub mesh: MeshSource<T>,
    pub materials: MaterialMap<T>,
    pub excitation: Excitation<T>,
    pub initial: InitialCondition<T>,
    pub t_end: T,
    pub n_main: usize,
    pub refine_ratio: T,
    pub newton: NewtonOptions<T>,
    pub qois: Vec<QoiSpec<T>>,
    pub parameters: Vec<ParameterSpec<T>>,
    /// `N_main` values of the default convergence study.
    pub convergence_sweep: Vec<usize>,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput<T> {
    pub model: EqsModel<T>,
    pub solution: TransientSolution<T>,
    pub qois: Vec<ResolvedQoi<T>>,
    pub qoi_values: Vec<T>,
    pub sensitivities: SensitivityResult<T>,
}

impl<T: Scalar> RunOutput<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        self.solution.grid()
    }
}

impl<T: Scalar> Scenario<T> {
    pub fn build_mesh(&self) -> Result<Arc<Mesh<T>>> {
        Ok(Arc::new(self.mesh.build()?))
    }

    pub fn model(&self) -> Result<EqsModel<T>> {
        let mesh = self.build_mesh()?;
        let present = mesh.regions();
        if let Some(m) = self.materials.iter().find(|m| !present.contains(&m.region)) {
            return Err(Error::invalid(format!("material region {} does not exist in the mesh", m.region)));
        }
        EqsModel::new(mesh, self.materials.clone(), self.excitation.clone())
    }

    pub fn grid_spec(&self, n_main: Option<usize>) -> TimeGridSpec<T> {
        let mut refine_at: Vec<T> = self.qois.iter().flat_map(|q| q.kind.refine_instants()).collect();
        refine_at.sort_by(|a, b| a.partial_cmp(b).expect("finite instants"));
        refine_at.dedup();
        let breakpoints = self.qois.iter().flat_map(|q| q.kind.breakpoints()).collect();
        TimeGridSpec {
            t_end: self.t_end,
            n_main: n_main.unwrap_or(self.n_main),
            refine_at,
            ratio: self.refine_ratio,
            breakpoints,
        }
    }

    pub fn grid(&self, n_main: Option<usize>) -> Result<TimeGrid<T>> {
        self.grid_spec(n_main).build()
    }

    pub fn solve_options(&self, spill_dir: Option<PathBuf>) -> SolveOptions<T> {
        SolveOptions {
            newton: self.newton,
            initial: self.initial.clone(),
            spill_dir,
        }
    }

    /// Validates the scenario against its own mesh and grid without solving.
    pub fn check(&self) -> Result<(EqsModel<T>, TimeGrid<T>)> {
        if self.qois.iter().map(|q| &q.name).collect::<std::collections::BTreeSet<_>>().len() != self.qois.len() {
            return Err(Error::invalid("quantity names must be unique"));
        }
        if self.parameters.iter().map(|p| &p.name).collect::<std::collections::BTreeSet<_>>().len()
            != self.parameters.len()
        {
            return Err(Error::invalid("parameter names must be unique"));
        }
        let model = self.model()?;
        let grid = self.grid(None)?;
        for q in &self.qois {
            ResolvedQoi::new(q, &model, &grid)?;
        }
        for p in &self.parameters {
            p.validate(&model)?;
        }
        if let InitialCondition::Prescribed(v) = &self.initial {
            if v.len() != model.num_nodes() {
                return Err(Error::invalid("prescribed initial condition does not match the mesh"));
            }
        }
        Ok((model, grid))
    }

    /// Forward solve, adjoint sweep and sensitivities at `N_main = n_main`.
    pub fn run(&self, n_main: Option<usize>, spill_dir: Option<PathBuf>) -> Result<RunOutput<T>> {
        let model = self.model()?;
        let grid = self.grid(n_main)?;
        let opts = self.solve_options(spill_dir);
        let solution = solve_forward(&model, &grid, &opts)?;
        let qois = self
            .qois
            .iter()
            .map(|q| ResolvedQoi::new(q, &model, &grid))
            .collect::<Result<Vec<_>>>()?;
        let qoi_values = qois
            .iter()
            .map(|q| q.evaluate(&model, &solution))
            .collect::<Result<Vec<_>>>()?;
        let rhs = qois
            .iter()
            .map(|q| q.adjoint_rhs(&model, &solution))
            .collect::<Result<Vec<_>>>()?;
        let adjoints = solve_adjoints(&model, &solution, &rhs)?;
        let sensitivities = compute_sensitivities(
            &model,
            &self.initial,
            &solution,
            &qois,
            &rhs,
            &adjoints,
            &self.parameters,
        )?;
        Ok(RunOutput {
            model,
            solution,
            qois,
            qoi_values,
            sensitivities,
        })
    }

    /// All quantity values for a model variant (forward solve only).
    pub fn evaluate_qois(&self, model: &EqsModel<T>, grid: &TimeGrid<T>, initial: &InitialCondition<T>) -> Result<Vec<T>> {
        let opts = SolveOptions {
            initial: initial.clone(),
            ..self.solve_options(None)
        };
        let solution = solve_forward(model, grid, &opts)?;
        self.qois
            .iter()
            .map(|q| ResolvedQoi::new(q, model, grid)?.evaluate(model, &solution))
            .collect()
    }

    /// Central-difference derivatives of every quantity with respect to
    /// parameter `j`, one report per quantity.
    ///
    /// An initial-scale parameter is perturbed around the scenario's own
    /// initial state, `φ₀ ± h·ψ`, with nominal value 1.
    pub fn fd_reports(&self, j: usize, n_main: Option<usize>, h_rel: T) -> Result<Vec<OracleReport<T>>> {
        let spec = self
            .parameters
            .get(j)
            .ok_or_else(|| Error::invalid(format!("no parameter with index {j}")))?;
        let model = self.model()?;
        spec.validate(&model)?;
        let grid = self.grid(n_main)?;
        let (p0, h, fd, fd_half) = match &spec.parameter {
            Parameter::Material { region, selector } => {
                let (region, selector) = (*region, *selector);
                let p0 = self.materials.param(region, selector)?;
                let (h, fd, fd_half) = fd_derivatives(
                    |p| {
                        let variant = model.with_materials(self.materials.with_param(region, selector, p)?)?;
                        self.evaluate_qois(&variant, &grid, &self.initial)
                    },
                    p0,
                    h_rel,
                )?;
                (p0, h, fd, fd_half)
            }
            Parameter::InitialScale { profile } => {
                let u0 = model.initial_state(&self.initial, grid.samples()[0], &self.newton)?;
                let (h, fd, fd_half) = fd_derivatives(
                    |p| {
                        let shifted = u0.iter().zip(profile).map(|(&u, &psi)| u + (p - T::one()) * psi).collect();
                        self.evaluate_qois(&model, &grid, &InitialCondition::Prescribed(shifted))
                    },
                    T::one(),
                    h_rel,
                )?;
                (T::one(), h, fd, fd_half)
            }
        };
        Ok(self
            .qois
            .iter()
            .enumerate()
            .map(|(k, q)| report(&spec.name, &q.name, p0, h, fd[k], fd_half[k]))
            .collect())
    }

    /// The lumped two-layer model matching this scenario, if it is a
    /// linear two-layer resistor driven from the top electrode.
    pub fn lumped_oracle(&self) -> Option<LumpedTwoLayer<T>> {
        let MeshSource::LayeredRect {
            width, layer_thickness, ..
        } = &self.mesh
        else {
            return None;
        };
        let linear = |region: u32| match self.materials.get(region)?.law {
            MaterialLaw::Linear { sigma, eps } => Some((sigma, eps)),
            MaterialLaw::Fgm { .. } => None,
        };
        let (sigma1, eps1) = linear(1)?;
        let (sigma2, eps2) = linear(2)?;
        if !matches!(self.initial, InitialCondition::Zero) {
            return None;
        }
        let bottom = self.excitation.electrodes.get(BOTTOM_ELECTRODE)?;
        if bottom.value(T::zero()) != T::zero() || !matches!(bottom, Waveform::Dc(_)) || self.excitation.electrodes.len() != 2 {
            return None;
        }
        let voltage = self.excitation.electrodes.get(TOP_ELECTRODE)?.clone();
        if voltage.value(T::zero()) != T::zero() {
            return None;
        }
        Some(LumpedTwoLayer {
            sigma1,
            sigma2,
            eps1,
            eps2,
            d: *layer_thickness,
            width: *width,
            voltage,
        })
    }

    /// Analytic `dG_k/dp_j` from the lumped model, when this scenario has
    /// one and the pair is expressible in it.
    pub fn analytic_sensitivity(&self, k: usize, j: usize, dt_max: T) -> Option<Result<T>> {
        let oracle = self.lumped_oracle()?;
        let Parameter::Material { region, selector } = self.parameters.get(j)?.parameter else {
            return None;
        };
        let p = match (region, selector) {
            (1, ParamSelector::Eps) => LumpedParam::Eps1,
            (1, ParamSelector::Sigma) => LumpedParam::Sigma1,
            (2, ParamSelector::Eps) => LumpedParam::Eps2,
            (2, ParamSelector::Sigma) => LumpedParam::Sigma2,
            _ => return None,
        };
        lumped_derivative(&oracle, &self.qois.get(k)?.kind, p, dt_max)
    }
}

/// Derivative of a layered-resistor quantity from the lumped model.
fn lumped_derivative<T: Scalar>(
    oracle: &LumpedTwoLayer<T>,
    kind: &QoiKind<T>,
    p: LumpedParam,
    dt_max: T,
) -> Option<Result<T>> {
    let d = oracle.d;
    match kind {
        QoiKind::Potential { point, t_ref } => {
            let y = point[1];
            if !(y >= T::zero() && y <= d + d) {
                return None;
            }
            Some(oracle.evaluate(*t_ref, dt_max).map(|s| {
                let ds = LumpedTwoLayer::derivative(&s.dphi_m, p);
                if y <= d {
                    ds * y / d
                } else {
                    ds * (d + d - y) / d
                }
            }))
        }
        QoiKind::Energy { t_a, t_b, regions } => {
            let all = regions.as_ref().is_none_or(|r| r.contains(&1) && r.contains(&2));
            if !all {
                return None;
            }
            Some(oracle.trace(&[*t_a, *t_b], dt_max).map(|s| {
                LumpedTwoLayer::derivative(&s[1].denergy, p) - LumpedTwoLayer::derivative(&s[0].denergy, p)
            }))
        }
        QoiKind::FieldMagnitude { .. } => None,
        QoiKind::Combination(parts) => {
            let mut total = T::zero();
            for (a, k) in parts {
                match lumped_derivative(oracle, k, p, dt_max)? {
                    Ok(v) => total += *a * v,
                    Err(e) => return Some(Err(e)),
                }
            }
            Some(Ok(total))
        }
    }
}

pub const LAYERED_RESISTOR: &str = "layered_resistor";
pub const FGM_JOINT: &str = "fgm_joint_simplified";

/// Two-layer resistor under a 50 Hz sine on the top electrode.
pub fn scenario_layered_resistor<T: Scalar>() -> Scenario<T> {
    let d = T::lit(0.01);
    let omega = T::lit(std::f64::consts::TAU * 50.0);
    let t_end = T::lit(std::f64::consts::TAU) / omega;
    let t_qoi = T::lit(std::f64::consts::FRAC_PI_2) / omega;
    let materials = MaterialMap::new([
        MaterialModel::linear(1, T::lit(10.0), T::lit(40.0)).expect("valid constants"),
        MaterialModel::linear(2, T::lit(20.0), T::lit(60.0)).expect("valid constants"),
    ])
    .expect("distinct regions");
    let excitation = Excitation::new([
        (
            TOP_ELECTRODE.to_string(),
            Waveform::Sine {
                amplitude: T::one(),
                frequency: T::lit(50.0),
            },
        ),
        (BOTTOM_ELECTRODE.to_string(), Waveform::Dc(T::zero())),
    ])
    .expect("valid waveforms");
    Scenario {
        name: LAYERED_RESISTOR.to_string(),
        mesh: MeshSource::LayeredRect {
            width: d,
            layer_thickness: d,
            nx: 2,
            ny_per_layer: 4,
        },
        materials,
        excitation,
        initial: InitialCondition::Zero,
        t_end,
        n_main: 800,
        refine_ratio: T::lit(DEFAULT_REFINE_RATIO),
        newton: NewtonOptions::default(),
        qois: vec![
            QoiSpec {
                name: "W_el".to_string(),
                kind: QoiKind::Energy {
                    t_a: T::zero(),
                    t_b: t_end,
                    regions: None,
                },
            },
            QoiSpec {
                name: "phi_ref".to_string(),
                kind: QoiKind::Potential {
                    point: [T::zero(), d / T::lit(2.0)],
                    t_ref: t_qoi,
                },
            },
        ],
        parameters: vec![
            ParameterSpec::material("eps1", 1, ParamSelector::Eps),
            ParameterSpec::material("sigma1", 1, ParamSelector::Sigma),
        ],
        convergence_sweep: vec![100, 200, 400, 800],
    }
}

/// Axisymmetric graded joint stand-in under 320 kV DC plus a 100 kV
/// lightning impulse.
pub fn scenario_fgm_joint_simplified<T: Scalar>() -> Scenario<T> {
    let geometry = JointGeometry::<T>::default();
    let eps0 = T::lit(EPS0);
    let fgm = FgmParams {
        a1: T::lit(1e-10),
        a2: T::lit(0.7e6),
        a3: T::lit(2.4e6),
        a4: T::lit(1864.0),
    };
    let materials = MaterialMap::new([
        MaterialModel::linear(joint_regions::INNER_INSULATION, T::lit(1e-15), T::lit(2.3) * eps0).expect("valid"),
        MaterialModel::linear(joint_regions::OUTER_INSULATION, T::lit(1e-14), T::lit(2.9) * eps0).expect("valid"),
        MaterialModel::fgm(joint_regions::FGM, fgm, T::lit(10.0) * eps0).expect("valid"),
    ])
    .expect("distinct regions");
    let (tau1, tau2) = (T::lit(IMPULSE_TAU1), T::lit(IMPULSE_TAU2));
    let excitation = Excitation::new([
        (
            HV_ELECTRODE.to_string(),
            Waveform::Sum(vec![
                Waveform::Dc(T::lit(320e3)),
                Waveform::Impulse {
                    peak: T::lit(100e3),
                    tau1,
                    tau2,
                },
            ]),
        ),
        (GROUND.to_string(), Waveform::Dc(T::zero())),
    ])
    .expect("valid waveforms");
    let t_rise = impulse_peak_time(tau1, tau2).expect("ordered time constants");
    let probe = geometry.triple_point_probe();
    Scenario {
        name: FGM_JOINT.to_string(),
        mesh: MeshSource::Joint(geometry),
        materials,
        excitation,
        initial: InitialCondition::DcSteady,
        t_end: T::lit(100e-6),
        n_main: 200,
        refine_ratio: T::lit(DEFAULT_REFINE_RATIO),
        newton: NewtonOptions::default(),
        qois: vec![
            QoiSpec {
                name: "W_el".to_string(),
                kind: QoiKind::Energy {
                    t_a: T::zero(),
                    t_b: t_rise,
                    regions: None,
                },
            },
            QoiSpec {
                name: "E_c".to_string(),
                kind: QoiKind::FieldMagnitude { point: probe, t_ref: t_rise },
            },
        ],
        parameters: vec![ParameterSpec::material("a2", joint_regions::FGM, ParamSelector::A2)],
        convergence_sweep: vec![50, 100, 200],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scenarios_validate() {
        let layered = scenario_layered_resistor::<f64>();
        let (_, grid) = layered.check().unwrap();
        assert!(grid.index_of(0.005).is_some());
        assert!(grid.index_of(0.02).is_some());
        let joint = scenario_fgm_joint_simplified::<f64>();
        let (model, grid) = joint.check().unwrap();
        assert!(!model.is_linear());
        let t_rise = impulse_peak_time(IMPULSE_TAU1, IMPULSE_TAU2).unwrap();
        assert!(grid.index_of(t_rise).is_some());
        let mut single = scenario_layered_resistor::<f32>();
        assert!(single.check().is_err());
        single.refine_ratio = 1e-2;
        assert!(single.check().is_ok());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = scenario_layered_resistor::<f64>();
        s.qois[1].name = s.qois[0].name.clone();
        assert!(s.check().is_err());
        let mut s = scenario_layered_resistor::<f64>();
        s.parameters[1].name = s.parameters[0].name.clone();
        assert!(s.check().is_err());
    }

    #[test]
    fn unknown_material_region_is_rejected() {
        let mut s = scenario_layered_resistor::<f64>();
        s.materials = MaterialMap::new([
            MaterialModel::linear(1, 1.0, 1.0).unwrap(),
            MaterialModel::linear(2, 1.0, 1.0).unwrap(),
            MaterialModel::linear(3, 1.0, 1.0).unwrap(),
        ])
        .unwrap();
        assert!(s.check().is_err());
    }

    #[test]
    fn lumped_oracle_only_for_the_layered_case() {
        let s = scenario_layered_resistor::<f64>();
        let oracle = s.lumped_oracle().unwrap();
        assert_eq!((oracle.sigma1, oracle.eps2), (10.0, 60.0));
        assert!(scenario_fgm_joint_simplified::<f64>().lumped_oracle().is_none());
        let mut dc = s.clone();
        dc.initial = InitialCondition::DcSteady;
        assert!(dc.lumped_oracle().is_none());
    }

    #[test]
    fn coarse_layered_run_tracks_the_lumped_model() {
        let s = scenario_layered_resistor::<f64>();
        let out = s.run(Some(100), None).unwrap();
        assert_eq!(out.sensitivities.qoi_names, ["W_el", "phi_ref"]);
        for k in 0..2 {
            for j in 0..2 {
                let exact = s.analytic_sensitivity(k, j, 1e-6).unwrap().unwrap();
                let rel = ((out.sensitivities.total(k, j) - exact) / exact).abs();
                assert!(rel < 0.05, "({k}, {j}): {rel}");
            }
        }
    }

    #[test]
    fn initial_scale_finite_differences_match_the_adjoint() {
        let mut s = scenario_layered_resistor::<f64>();
        let n = s.build_mesh().unwrap().num_nodes();
        s.parameters.push(ParameterSpec {
            name: "scale".to_string(),
            parameter: Parameter::InitialScale { profile: vec![] },
        });
        assert!(s.fd_reports(2, Some(20), 1e-3).is_err());
        assert!(s.fd_reports(9, Some(20), 1e-3).is_err());
        s.parameters[2].parameter = Parameter::InitialScale {
            profile: (0..n).map(|i| (i % 5) as f64 * 0.1).collect(),
        };
        let out = s.run(Some(40), None).unwrap();
        for (k, r) in s.fd_reports(2, Some(40), 1e-3).unwrap().iter().enumerate() {
            let avm = out.sensitivities.total(k, 2);
            assert!((avm - r.richardson).abs() <= 1e-6 * avm.abs(), "{avm} vs {}", r.richardson);
        }
    }

    #[test]
    fn mesh_file_source_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mesh");
        let mesh = build_layered_rect(0.01f64, 0.01, 2, 4).unwrap();
        crate::mesh::save_mesh(&mesh, &path).unwrap();
        assert_eq!(MeshSource::File(path).build().unwrap(), mesh);
    }
}
