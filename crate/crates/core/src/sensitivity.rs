//! Parameter sensitivities from forward and adjoint trajectories.
//!
//! For a material parameter `p`,
//!
//! ```text
//! dG/dp = Σ_n ω_n·∂g_n/∂p
//!       − Σ_{n≥1} Δ_n·u_nᵀ·K_σp(u_n)·w_{n−1}
//!       + Σ_{n≥1} u_nᵀ·K_εp·(w_n − w_{n−1})
//!       + u_0ᵀ·K_εp·w_0 + (c_0·q_0 + K_ε·w_0)ᵀ·u_0′
//! ```
//!
//! The last line collects the `t = 0` terms; `u_0′ = du_0/dp` is zero for a
//! zero initial state and solves `K_σd·u_0′ = −K_σp·u_0` for a stationary one.

use rayon::prelude::*;

use crate::adjoint::AdjointSolution;
use crate::error::{Error, Result};
use crate::forward::{EqsModel, InitialCondition, TransientSolution};
use crate::materials::ParamSelector;
use crate::qoi::{AdjointRhs, ResolvedQoi};
use crate::scalar::dot;
use crate::Scalar;

/// Design parameter `p_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum Parameter<T> {
    Material { region: u32, selector: ParamSelector },
    /// Scale `p` of a prescribed initial potential `φ₀ = p·ψ`; holds `ψ`.
    InitialScale { profile: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec<T> {
    pub name: String,
    pub parameter: Parameter<T>,
}

impl<T: Scalar> ParameterSpec<T> {
    pub fn material(name: impl Into<String>, region: u32, selector: ParamSelector) -> Self {
        Self {
            name: name.into(),
            parameter: Parameter::Material { region, selector },
        }
    }

    pub fn validate(&self, model: &EqsModel<T>) -> Result<()> {
        match &self.parameter {
            Parameter::Material { region, selector } => model.materials().param(*region, *selector).map(|_| ()),
            Parameter::InitialScale { profile } if profile.len() != model.num_nodes() => Err(Error::invalid(format!(
                "initial profile of '{}' has {} entries for {} nodes",
                self.name,
                profile.len(),
                model.num_nodes()
            ))),
            Parameter::InitialScale { .. } => Ok(()),
        }
    }
}

/// One `dG_k/dp_j` with its additive parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensitivityEntry<T> {
    pub total: T,
    /// Explicit `∂G/∂p` at fixed potentials.
    pub explicit: T,
    /// Time-stepped `K_σp`/`K_εp` coupling.
    pub volume: T,
    /// Terms at `t = 0`.
    pub initial: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult<T> {
    pub qoi_names: Vec<String>,
    pub parameter_names: Vec<String>,
    /// `entries[k][j] = dG_k/dp_j`.
    pub entries: Vec<Vec<SensitivityEntry<T>>>,
    pub num_samples: usize,
    pub dt_main: T,
}

impl<T: Scalar> SensitivityResult<T> {
    pub fn total(&self, k: usize, j: usize) -> T {
        self.entries[k][j].total
    }

    /// Looks up an entry by names.
    pub fn get(&self, qoi: &str, parameter: &str) -> Option<&SensitivityEntry<T>> {
        let k = self.qoi_names.iter().position(|n| n == qoi)?;
        let j = self.parameter_names.iter().position(|n| n == parameter)?;
        Some(&self.entries[k][j])
    }
}

/// `du_0/dp` for the model's initial condition.
pub fn initial_state_derivative<T: Scalar>(
    model: &EqsModel<T>,
    initial: &InitialCondition<T>,
    u0: &[T],
    parameter: &Parameter<T>,
) -> Result<Vec<T>> {
    let n = model.num_nodes();
    match (parameter, initial) {
        (Parameter::InitialScale { profile }, _) => {
            let mut d = profile.clone();
            model.dofs().zero_fixed(&mut d);
            Ok(d)
        }
        (Parameter::Material { region, selector }, InitialCondition::DcSteady) => {
            model.dc_steady_derivative(u0, *region, *selector)
        }
        (Parameter::Material { .. }, _) => Ok(vec![T::zero(); n]),
    }
}

/// Assembles `dG_k/dp_j` for every quantity and parameter.
pub fn compute_sensitivities<T: Scalar>(
    model: &EqsModel<T>,
    initial: &InitialCondition<T>,
    solution: &TransientSolution<T>,
    qois: &[ResolvedQoi<T>],
    rhs: &[AdjointRhs<T>],
    adjoints: &[AdjointSolution<T>],
    params: &[ParameterSpec<T>],
) -> Result<SensitivityResult<T>> {
    let grid = solution.grid();
    if qois.len() != adjoints.len() || rhs.len() != adjoints.len() {
        return Err(Error::invalid("one adjoint solution and load per quantity of interest required"));
    }
    if adjoints.iter().any(|a| a.grid() != grid) {
        return Err(Error::invalid("adjoint and forward solutions live on different time grids"));
    }
    for p in params {
        p.validate(model)?;
    }
    let u0 = solution.state(0)?.into_owned();
    let per_param: Vec<Result<Vec<SensitivityEntry<T>>>> = params
        .par_iter()
        .map(|p| {
            let du0 = initial_state_derivative(model, initial, &u0, &p.parameter)?;
            let kew0: Vec<Vec<T>> = adjoints.iter().map(|a| model.k_eps().mul_vec(a.state(0))).collect();
            let mut entries = Vec::with_capacity(qois.len());
            for k in 0..qois.len() {
                let mut load0 = rhs[k].weighted(0).unwrap_or_else(|| vec![T::zero(); model.num_nodes()]);
                for (a, &b) in load0.iter_mut().zip(&kew0[k]) {
                    *a += b;
                }
                entries.push(SensitivityEntry {
                    initial: dot(&load0, &du0),
                    ..Default::default()
                });
            }
            if let Parameter::Material { region, selector } = p.parameter {
                let asm = model.assembler();
                let eps_coeff = model.eps_param_coefficients(region, selector)?;
                let has_eps = eps_coeff.iter().any(|&c| c != T::zero());
                for (k, entry) in entries.iter_mut().enumerate() {
                    entry.explicit = qois[k].explicit_partial(model, solution, region, selector)?;
                    if has_eps {
                        entry.initial += asm.bilinear_scalar(|e| eps_coeff[e], &u0, adjoints[k].state(0));
                    }
                }
                for n in 1..grid.len() {
                    let u = solution.state(n)?;
                    let dt = grid.dt(n);
                    let sig_coeff = model.sigma_param_coefficients(&u, region, selector)?;
                    let has_sigma = sig_coeff.iter().any(|&c| c != T::zero());
                    for (k, entry) in entries.iter_mut().enumerate() {
                        let w_prev = adjoints[k].state(n - 1);
                        if has_sigma {
                            entry.volume -= dt * asm.bilinear_scalar(|e| sig_coeff[e], &u, w_prev);
                        }
                        if has_eps {
                            let dw: Vec<T> = adjoints[k]
                                .state(n)
                                .iter()
                                .zip(w_prev)
                                .map(|(&a, &b)| a - b)
                                .collect();
                            entry.volume += asm.bilinear_scalar(|e| eps_coeff[e], &u, &dw);
                        }
                    }
                }
            }
            for entry in &mut entries {
                entry.total = entry.explicit + entry.volume + entry.initial;
            }
            Ok(entries)
        })
        .collect();
    let mut entries = vec![Vec::with_capacity(params.len()); qois.len()];
    for column in per_param {
        for (k, entry) in column?.into_iter().enumerate() {
            entries[k].push(entry);
        }
    }
    Ok(SensitivityResult {
        qoi_names: qois.iter().map(|q| q.name.clone()).collect(),
        parameter_names: params.iter().map(|p| p.name.clone()).collect(),
        entries,
        num_samples: grid.len(),
        dt_main: grid.dt_main(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::solve_adjoints;
    use crate::forward::{solve_forward, SolveOptions};
    use crate::qoi::{QoiKind, QoiSpec};
    use crate::test_support::fgm_model;
    use crate::timegrid::{build_timegrid, TimeGrid};
    use proptest::prelude::*;

    const T_REF: f64 = 0.25;

    fn energy() -> QoiKind<f64> {
        QoiKind::Energy {
            t_a: 0.0625,
            t_b: 0.375,
            regions: None,
        }
    }

    fn field() -> QoiKind<f64> {
        QoiKind::FieldMagnitude {
            point: [0.004, 0.016],
            t_ref: T_REF,
        }
    }

    fn potential() -> QoiKind<f64> {
        QoiKind::Potential {
            point: [0.006, 0.012],
            t_ref: T_REF,
        }
    }

    fn grid() -> TimeGrid<f64> {
        build_timegrid(0.5, 16, &[T_REF]).unwrap()
    }

    fn specs(kinds: &[QoiKind<f64>]) -> Vec<QoiSpec<f64>> {
        kinds
            .iter()
            .enumerate()
            .map(|(k, kind)| QoiSpec {
                name: format!("g{k}"),
                kind: kind.clone(),
            })
            .collect()
    }

    fn values(model: &EqsModel<f64>, initial: &InitialCondition<f64>, kinds: &[QoiKind<f64>]) -> Vec<f64> {
        let grid = grid();
        let opts = SolveOptions {
            initial: initial.clone(),
            ..SolveOptions::default()
        };
        let sol = solve_forward(model, &grid, &opts).unwrap();
        specs(kinds)
            .iter()
            .map(|s| crate::qoi::eval_qoi(s, model, &sol).unwrap())
            .collect()
    }

    fn sensitivities(
        model: &EqsModel<f64>,
        initial: &InitialCondition<f64>,
        kinds: &[QoiKind<f64>],
        params: &[ParameterSpec<f64>],
    ) -> SensitivityResult<f64> {
        let grid = grid();
        let opts = SolveOptions {
            initial: initial.clone(),
            ..SolveOptions::default()
        };
        let sol = solve_forward(model, &grid, &opts).unwrap();
        let qois: Vec<_> = specs(kinds).iter().map(|s| ResolvedQoi::new(s, model, &grid).unwrap()).collect();
        let rhs: Vec<_> = qois.iter().map(|q| q.adjoint_rhs(model, &sol).unwrap()).collect();
        let adj = solve_adjoints(model, &sol, &rhs).unwrap();
        compute_sensitivities(model, initial, &sol, &qois, &rhs, &adj, params).unwrap()
    }

    fn central(f: impl Fn(f64) -> Vec<f64>, p0: f64, h: f64) -> Vec<f64> {
        let (a, b) = (f(p0 + h), f(p0 - h));
        a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
    }

    fn assert_close(avm: f64, fd: f64, tol: f64, what: &str) {
        assert!((avm - fd).abs() <= tol * fd.abs(), "{what}: adjoint {avm:e} vs fd {fd:e}");
    }

    #[test]
    fn material_sensitivities_match_finite_differences() {
        let model = fgm_model::<f64>();
        let kinds = [energy(), field(), potential()];
        for initial in [InitialCondition::Zero, InitialCondition::DcSteady] {
            let params = [
                ParameterSpec::material("a2", 2, ParamSelector::A2),
                ParameterSpec::material("eps2", 2, ParamSelector::Eps),
                ParameterSpec::material("sigma1", 1, ParamSelector::Sigma),
                ParameterSpec::material("eps1", 1, ParamSelector::Eps),
            ];
            let result = sensitivities(&model, &initial, &kinds, &params);
            for (j, p) in params.iter().enumerate() {
                let Parameter::Material { region, selector } = p.parameter else {
                    unreachable!()
                };
                let p0 = model.materials().param(region, selector).unwrap();
                let fd = central(
                    |v| {
                        let m = model
                            .with_materials(model.materials().with_param(region, selector, v).unwrap())
                            .unwrap();
                        values(&m, &initial, &kinds)
                    },
                    p0,
                    1e-5 * p0,
                );
                for k in 0..kinds.len() {
                    assert_close(result.total(k, j), fd[k], 1e-5, &format!("{initial:?} {} g{k}", p.name));
                }
            }
        }
    }

    #[test]
    fn initial_scale_term_matches_finite_differences() {
        let model = fgm_model::<f64>();
        let profile: Vec<f64> = model.mesh().nodes().iter().map(|x| 3e3 * (1.0 + 50.0 * x[0] - 30.0 * x[1])).collect();
        let p0 = 1.3;
        let ic = |p: f64| InitialCondition::Prescribed(profile.iter().map(|v| p * v).collect());
        let kinds = [energy(), field()];
        let params = [ParameterSpec {
            name: "scale".to_string(),
            parameter: Parameter::InitialScale {
                profile: profile.clone(),
            },
        }];
        let result = sensitivities(&model, &ic(p0), &kinds, &params);
        let fd = central(|p| values(&model, &ic(p), &kinds), p0, 1e-4);
        for k in 0..kinds.len() {
            assert_eq!(result.entries[k][0].explicit, 0.0);
            assert_eq!(result.entries[k][0].volume, 0.0);
            assert_close(result.total(k, 0), fd[k], 1e-3, &format!("g{k}"));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn sensitivities_are_linear_in_the_quantity(alpha in -5.0f64..5.0, beta in -5.0f64..5.0) {
            let model = fgm_model::<f64>();
            let combo = QoiKind::Combination(vec![(alpha, energy()), (beta, field())]);
            let params = [
                ParameterSpec::material("a2", 2, ParamSelector::A2),
                ParameterSpec::material("eps1", 1, ParamSelector::Eps),
            ];
            let r = sensitivities(&model, &InitialCondition::DcSteady, &[energy(), field(), combo], &params);
            for j in 0..params.len() {
                let expected = alpha * r.total(0, j) + beta * r.total(1, j);
                let scale = (alpha * r.total(0, j)).abs() + (beta * r.total(1, j)).abs();
                prop_assert!((r.total(2, j) - expected).abs() <= 1e-10 * scale,
                    "{} vs {}", r.total(2, j), expected);
            }
        }
    }

    #[test]
    fn lookup_by_name() {
        let model = fgm_model::<f64>();
        let params = [ParameterSpec::material("a2", 2, ParamSelector::A2)];
        let r = sensitivities(&model, &InitialCondition::Zero, &[energy()], &params);
        assert_eq!(r.get("g0", "a2").unwrap().total, r.total(0, 0));
        assert!(r.get("g1", "a2").is_none());
        assert_eq!(r.num_samples, grid().len());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let model = fgm_model::<f64>();
        let bad = [
            ParameterSpec::material("x", 1, ParamSelector::A2),
            ParameterSpec::material("y", 7, ParamSelector::Sigma),
            ParameterSpec {
                name: "z".to_string(),
                parameter: Parameter::InitialScale { profile: vec![1.0; 2] },
            },
        ];
        for p in &bad {
            assert!(p.validate(&model).is_err(), "{}", p.name);
        }
    }
}
