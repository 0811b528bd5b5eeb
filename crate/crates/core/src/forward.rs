//! Implicit Euler time stepping of the semi-discrete EQS system with a
//! damped Newton iteration per step.
//!
//! Step `n` solves, on the free nodes,
//!
//! ```text
//! Δ_n·K_σ(u_n)·u_n + K_ε·(u_n − u_{n−1}) = 0
//! ```
//!
//! with Dirichlet values taken from the excitation at `t_n`. The Newton
//! Jacobian is `Δ_n·K_σd(u_n) + K_εd`.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::assembly::{dirichlet_nodes, Assembler};
use crate::error::{Error, Result};
use crate::excitation::Excitation;
use crate::materials::{MaterialMap, MaterialModel, ParamSelector, Tensor2};
use crate::mesh::Mesh;
use crate::scalar::norm2;
use crate::sparse::{CsrMatrix, DofMap, SkylineCholesky, SkylinePlan};
use crate::timegrid::TimeGrid;
use crate::Scalar;

/// Environment variable naming a directory for on-disk trajectory storage.
pub const SCRATCH_ENV: &str = "EQSADJ_SCRATCH";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iter: 25,
            max_halvings: 8,
        }
    }
}

/// Potential at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition<T> {
    Zero,
    /// Stationary solution of `K_σ(u)·u = 0` for the excitation at `t = 0`.
    DcSteady,
    /// Full nodal vector; Dirichlet entries are overwritten by the excitation.
    Prescribed(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    pub newton: NewtonOptions<T>,
    pub initial: InitialCondition<T>,
    /// Spill the trajectory to this directory instead of keeping it in memory.
    pub spill_dir: Option<PathBuf>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            initial: InitialCondition::Zero,
            spill_dir: None,
        }
    }
}

impl<T: Scalar> SolveOptions<T> {
    /// Defaults, with `spill_dir` taken from `EQSADJ_SCRATCH` when set.
    pub fn from_env() -> Self {
        Self {
            spill_dir: std::env::var_os(SCRATCH_ENV).map(PathBuf::from),
            ..Self::default()
        }
    }
}

/// Mesh, materials and excitation bound together with the precomputed
/// assembly data every solve needs.
#[derive(Debug, Clone)]
pub struct EqsModel<T> {
    mesh: Arc<Mesh<T>>,
    materials: MaterialMap<T>,
    excitation: Excitation<T>,
    asm: Arc<Assembler<T>>,
    dofs: Arc<DofMap>,
    plan: Arc<SkylinePlan>,
    dirichlet: Arc<Vec<(usize, String)>>,
    models: Vec<MaterialModel<T>>,
    k_eps: CsrMatrix<T>,
}

impl<T: Scalar> EqsModel<T> {
    pub fn new(mesh: Arc<Mesh<T>>, materials: MaterialMap<T>, excitation: Excitation<T>) -> Result<Self> {
        let names: BTreeMap<String, &str> = excitation
            .electrodes
            .keys()
            .map(|k| (k.clone(), k.as_str()))
            .collect();
        let dirichlet: Vec<(usize, String)> = dirichlet_nodes(&mesh, &names)?
            .into_iter()
            .map(|(i, name)| (i, name.to_string()))
            .collect();
        let dofs = DofMap::new(mesh.num_nodes(), dirichlet.iter().map(|&(i, _)| i));
        let asm = Assembler::new(&mesh);
        let plan = SkylinePlan::new(asm.pattern(), &dofs);
        Self::assemble_parts(
            mesh,
            materials,
            excitation,
            Arc::new(asm),
            Arc::new(dofs),
            Arc::new(plan),
            Arc::new(dirichlet),
        )
    }

    fn assemble_parts(
        mesh: Arc<Mesh<T>>,
        materials: MaterialMap<T>,
        excitation: Excitation<T>,
        asm: Arc<Assembler<T>>,
        dofs: Arc<DofMap>,
        plan: Arc<SkylinePlan>,
        dirichlet: Arc<Vec<(usize, String)>>,
    ) -> Result<Self> {
        let models = mesh
            .triangles()
            .iter()
            .map(|t| materials.require(t.region).cloned())
            .collect::<Result<Vec<_>>>()?;
        let k_eps = asm.assemble_with(|e| models[e].differential_permittivity([T::zero(); 2]));
        Ok(Self {
            mesh,
            materials,
            excitation,
            asm,
            dofs,
            plan,
            dirichlet,
            models,
            k_eps,
        })
    }

    /// Same mesh and electrodes with a different material map.
    pub fn with_materials(&self, materials: MaterialMap<T>) -> Result<Self> {
        Self::assemble_parts(
            self.mesh.clone(),
            materials,
            self.excitation.clone(),
            self.asm.clone(),
            self.dofs.clone(),
            self.plan.clone(),
            self.dirichlet.clone(),
        )
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn materials(&self) -> &MaterialMap<T> {
        &self.materials
    }

    pub fn excitation(&self) -> &Excitation<T> {
        &self.excitation
    }

    pub fn assembler(&self) -> &Assembler<T> {
        &self.asm
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn element_model(&self, e: usize) -> &MaterialModel<T> {
        &self.models[e]
    }

    pub fn is_linear(&self) -> bool {
        self.models.iter().all(|m| m.is_linear())
    }

    /// Writes the electrode voltages at time `t` into `u`.
    pub fn apply_dirichlet(&self, t: T, u: &mut [T]) {
        let values = self.excitation.values_at(t);
        for (i, name) in self.dirichlet.iter() {
            u[*i] = values[name];
        }
    }

    fn field_norm(&self, e: usize, u: &[T]) -> ([T; 2], T) {
        let f = self.asm.field(e, u);
        (f, f[0].hypot(f[1]))
    }

    /// `|E|` on every element.
    pub fn field_magnitudes(&self, u: &[T]) -> Vec<T> {
        (0..self.models.len()).map(|e| self.field_norm(e, u).1).collect()
    }

    /// Element conductivities `σ(|E_e|)`.
    pub fn conductivities(&self, u: &[T]) -> Vec<T> {
        (0..self.models.len())
            .map(|e| self.models[e].sigma(self.field_norm(e, u).1))
            .collect()
    }

    pub fn k_eps(&self) -> &CsrMatrix<T> {
        &self.k_eps
    }

    pub fn k_sigma(&self, u: &[T]) -> CsrMatrix<T> {
        let sigma = self.conductivities(u);
        self.asm.assemble_with(|e| Tensor2::isotropic(sigma[e]))
    }

    pub fn k_sigma_d(&self, u: &[T]) -> CsrMatrix<T> {
        let fields = self.asm.fields(u);
        self.asm
            .assemble_with(|e| self.models[e].differential_conductivity(fields[e]))
    }

    /// `Δ·K_σd(u) + K_εd(u)`.
    pub fn step_matrix(&self, u: &[T], dt: T) -> CsrMatrix<T> {
        let fields = self.asm.fields(u);
        self.asm.assemble_with(|e| {
            let m = &self.models[e];
            let s = m.differential_conductivity(fields[e]);
            let p = m.differential_permittivity(fields[e]);
            Tensor2 {
                xx: dt * s.xx + p.xx,
                xy: dt * s.xy + p.xy,
                yy: dt * s.yy + p.yy,
            }
        })
    }

    /// `K_σ(u)·u`, element by element.
    pub fn conduction_current(&self, u: &[T]) -> Vec<T> {
        let sigma = self.conductivities(u);
        self.asm.apply_scalar(|e| sigma[e], u)
    }

    /// Free-node residual `Δ·K_σ(u)·u + K_ε·(u − u_prev)`.
    pub fn step_residual(&self, u: &[T], u_prev: &[T], dt: T) -> Vec<T> {
        let jc = self.conduction_current(u);
        let diff: Vec<T> = u.iter().zip(u_prev).map(|(&a, &b)| a - b).collect();
        let jd = self.k_eps.mul_vec(&diff);
        self.dofs
            .free_nodes()
            .iter()
            .map(|&i| dt * jc[i] + jd[i])
            .collect()
    }

    /// Cholesky factor of the free–free block.
    pub fn factor(&self, m: &CsrMatrix<T>, step: usize) -> Result<SkylineCholesky<T>> {
        SkylineCholesky::factor(self.plan.clone(), m, step)
    }

    /// Per-element `∂σ/∂p` at the field of `u`; zero outside `region`.
    pub fn sigma_param_coefficients(&self, u: &[T], region: u32, sel: ParamSelector) -> Result<Vec<T>> {
        let model = self.materials.require(region)?;
        let mut out = vec![T::zero(); self.models.len()];
        if sel == ParamSelector::Eps {
            return Ok(out);
        }
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            if tri.region == region {
                out[e] = model.sigma_dparam(self.field_norm(e, u).1, sel)?;
            }
        }
        Ok(out)
    }

    /// Per-element `∂ε/∂p`; zero outside `region`.
    pub fn eps_param_coefficients(&self, region: u32, sel: ParamSelector) -> Result<Vec<T>> {
        let model = self.materials.require(region)?;
        let d = model.eps_dparam(sel)?;
        Ok(self
            .mesh
            .triangles()
            .iter()
            .map(|t| if t.region == region { d } else { T::zero() })
            .collect())
    }

    /// Global scale of a step matrix used to nondimensionalize residuals.
    fn diag_scale(&self, m: &CsrMatrix<T>) -> T {
        let s = self
            .dofs
            .free_nodes()
            .iter()
            .map(|&i| m.get(i, i).abs())
            .fold(T::zero(), T::max);
        if s > T::zero() {
            s
        } else {
            T::one()
        }
    }

    /// Free-node right-hand side of the linearized step: `K_ε·u_prev` minus
    /// the Dirichlet lift through `m`.
    fn step_load(&self, m: &CsrMatrix<T>, u: &[T], u_prev: Option<&[T]>) -> Vec<T> {
        let mut lift = u.to_vec();
        self.dofs.zero_fixed(&mut lift);
        for (l, &v) in lift.iter_mut().zip(u) {
            *l = v - *l;
        }
        let lifted = m.mul_vec(&lift);
        let hist = u_prev.map(|p| self.k_eps.mul_vec(p));
        self.dofs
            .free_nodes()
            .iter()
            .map(|&i| hist.as_ref().map_or(T::zero(), |h| h[i]) - lifted[i])
            .collect()
    }

    /// Damped Newton on `residual(u) = 0` over the free nodes, starting at `u`.
    ///
    /// Converged when `‖R‖ ≤ tol·(1 + ‖b‖)` with both sides divided by the
    /// largest Jacobian diagonal entry, `b` being the load of the first
    /// linearized system. A cached factorization is reused as long as the
    /// key matches, which is only sound for linear materials.
    #[allow(clippy::too_many_arguments)]
    fn newton<R, J, L>(
        &self,
        u: &mut Vec<T>,
        residual: R,
        jacobian: J,
        load: L,
        opts: &NewtonOptions<T>,
        step: usize,
        cache: &mut Option<FactorCache<T>>,
        cache_key: Option<T>,
    ) -> Result<(usize, T)>
    where
        R: Fn(&[T]) -> Vec<T>,
        J: Fn(&[T]) -> CsrMatrix<T>,
        L: Fn(&CsrMatrix<T>, &[T]) -> Vec<T>,
    {
        let mut r = residual(u);
        let mut rnorm = norm2(&r);
        if rnorm == T::zero() {
            return Ok((0, rnorm));
        }
        let (mut matrix, mut chol) = match (cache.as_ref(), cache_key) {
            (Some(c), Some(key)) if c.key == key => (c.matrix.clone(), c.chol.clone()),
            _ => {
                let m = Arc::new(jacobian(u));
                let f = Arc::new(self.factor(&m, step)?);
                if let Some(key) = cache_key {
                    *cache = Some(FactorCache {
                        key,
                        matrix: m.clone(),
                        chol: f.clone(),
                    });
                }
                (m, f)
            }
        };
        let scale = self.diag_scale(&matrix);
        let threshold = opts.tol * (T::one() + norm2(&load(&matrix, u)) / scale);
        let mut iterations = 0;
        loop {
            if rnorm / scale <= threshold {
                return Ok((iterations, rnorm / scale));
            }
            if iterations == opts.max_iter {
                return Err(Error::NewtonDiverged {
                    step,
                    iterations,
                    residual: (rnorm / scale).as_f64(),
                });
            }
            if iterations > 0 && cache_key.is_none() {
                matrix = Arc::new(jacobian(u));
                chol = Arc::new(self.factor(&matrix, step)?);
            }
            let neg: Vec<T> = r.iter().map(|&v| -v).collect();
            let delta = chol.solve(&neg);
            let mut alpha = T::one();
            let mut h = 0;
            let (trial, rt, nt) = loop {
                let mut trial = u.clone();
                for (k, &i) in self.dofs.free_nodes().iter().enumerate() {
                    trial[i] += alpha * delta[k];
                }
                let rt = residual(&trial);
                let nt = norm2(&rt);
                if nt < rnorm || h == opts.max_halvings {
                    break (trial, rt, nt);
                }
                alpha *= T::lit(0.5);
                h += 1;
            };
            iterations += 1;
            if !nt.is_finite() {
                return Err(Error::NewtonDiverged {
                    step,
                    iterations,
                    residual: f64::INFINITY,
                });
            }
            *u = trial;
            r = rt;
            rnorm = nt;
        }
    }

    /// One implicit Euler step from `u_prev` to time `t` with step `dt`.
    pub fn step(
        &self,
        u_prev: &[T],
        t: T,
        dt: T,
        opts: &NewtonOptions<T>,
        step: usize,
        cache: &mut Option<FactorCache<T>>,
    ) -> Result<(Vec<T>, usize, T)> {
        let mut u = u_prev.to_vec();
        self.apply_dirichlet(t, &mut u);
        let key = self.is_linear().then_some(dt);
        let (iters, res) = self.newton(
            &mut u,
            |v| self.step_residual(v, u_prev, dt),
            |v| self.step_matrix(v, dt),
            |m, v| self.step_load(m, v, Some(u_prev)),
            opts,
            step,
            cache,
            key,
        )?;
        Ok((u, iters, res))
    }

    /// Stationary conduction problem `K_σ(u)·u = 0` with the electrode
    /// voltages at time `t`.
    pub fn dc_steady_state(&self, t: T, opts: &NewtonOptions<T>) -> Result<Vec<T>> {
        let mut target = vec![T::zero(); self.num_nodes()];
        self.apply_dirichlet(t, &mut target);
        let residual = |v: &[T]| {
            let jc = self.conduction_current(v);
            self.dofs.free_nodes().iter().map(|&i| jc[i]).collect::<Vec<_>>()
        };
        // linear start with the zero-field conductivity, then Newton
        let sigma0: Vec<T> = self.models.iter().map(|m| m.sigma(T::zero())).collect();
        let k0 = self.asm.assemble_with(|e| Tensor2::isotropic(sigma0[e]));
        let mut u = target.clone();
        let f = self.factor(&k0, 0)?;
        let b = self.step_load(&k0, &u, None);
        self.dofs.scatter(&f.solve(&b), &mut u);
        if self.is_linear() {
            return Ok(u);
        }
        let mut none = None;
        let mut trial = u.clone();
        let direct = self.newton(
            &mut trial,
            residual,
            |v| self.k_sigma_d(v),
            |m, v| self.step_load(m, v, None),
            opts,
            0,
            &mut none,
            None,
        );
        if direct.is_ok() {
            return Ok(trial);
        }
        // ramp the electrode voltages up to the target
        let stages = 16;
        let mut previous = T::one();
        for k in 1..=stages {
            let lambda = T::from_count(k) / T::from_count(stages);
            let predictor = lambda / previous;
            for v in u.iter_mut() {
                *v *= predictor;
            }
            for &i in self.dofs.fixed_nodes() {
                u[i] = lambda * target[i];
            }
            previous = lambda;
            self.newton(&mut u, residual, |v| self.k_sigma_d(v), |m, v| self.step_load(m, v, None), opts, 0, &mut none, None)?;
        }
        Ok(u)
    }

    /// Stationary initial potential and its derivative with respect to a
    /// material parameter: `K_σd·u′ = −K_σp·u₀` on the free nodes.
    pub fn dc_steady_derivative(&self, u0: &[T], region: u32, sel: ParamSelector) -> Result<Vec<T>> {
        let coeff = self.sigma_param_coefficients(u0, region, sel)?;
        let rhs_full = self.asm.apply_scalar(|e| coeff[e], u0);
        let rhs: Vec<T> = self.dofs.free_nodes().iter().map(|&i| -rhs_full[i]).collect();
        let f = self.factor(&self.k_sigma_d(u0), 0)?;
        let mut out = vec![T::zero(); self.num_nodes()];
        self.dofs.scatter(&f.solve(&rhs), &mut out);
        Ok(out)
    }

    pub fn initial_state(&self, ic: &InitialCondition<T>, t0: T, opts: &NewtonOptions<T>) -> Result<Vec<T>> {
        let n = self.num_nodes();
        let mut u = match ic {
            InitialCondition::Zero => vec![T::zero(); n],
            InitialCondition::DcSteady => return self.dc_steady_state(t0, opts),
            InitialCondition::Prescribed(v) => {
                if v.len() != n {
                    return Err(Error::invalid(format!(
                        "initial condition has {} entries for {} nodes",
                        v.len(),
                        n
                    )));
                }
                v.clone()
            }
        };
        self.apply_dirichlet(t0, &mut u);
        Ok(u)
    }
}

/// Factorization reused across steps of equal length (linear materials).
#[derive(Debug, Clone)]
pub struct FactorCache<T> {
    key: T,
    matrix: Arc<CsrMatrix<T>>,
    chol: Arc<SkylineCholesky<T>>,
}

static SPILL_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Stored nodal trajectory, in memory or spilled to per-step files.
#[derive(Debug)]
enum Trajectory<T> {
    Memory(Vec<Vec<T>>),
    Disk { dir: PathBuf, len: usize, dim: usize },
}

impl<T> Drop for Trajectory<T> {
    fn drop(&mut self) {
        if let Trajectory::Disk { dir, .. } = self {
            let _ = fs::remove_dir_all(dir);
        }
    }
}

fn step_file(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("u{n:07}.bin"))
}

impl<T: Scalar> Trajectory<T> {
    fn new(spill: Option<&Path>) -> Result<Self> {
        match spill {
            None => Ok(Trajectory::Memory(Vec::new())),
            Some(root) => {
                let id = SPILL_COUNTER.fetch_add(1, Ordering::Relaxed);
                let dir = root.join(format!("eqsadj-{}-{id}", std::process::id()));
                fs::create_dir_all(&dir).map_err(|source| Error::Io {
                    path: dir.clone(),
                    source,
                })?;
                Ok(Trajectory::Disk { dir, len: 0, dim: 0 })
            }
        }
    }

    fn push(&mut self, u: Vec<T>) -> Result<()> {
        match self {
            Trajectory::Memory(v) => v.push(u),
            Trajectory::Disk { dir, len, dim } => {
                let path = step_file(dir, *len);
                let mut bytes = Vec::with_capacity(8 * u.len());
                for x in &u {
                    bytes.extend_from_slice(&x.as_f64().to_le_bytes());
                }
                fs::File::create(&path)
                    .and_then(|mut f| f.write_all(&bytes))
                    .map_err(|source| Error::Io { path, source })?;
                *len += 1;
                *dim = u.len();
            }
        }
        Ok(())
    }

    fn len(&self) -> usize {
        match self {
            Trajectory::Memory(v) => v.len(),
            Trajectory::Disk { len, .. } => *len,
        }
    }

    fn get(&self, n: usize) -> Result<Cow<'_, [T]>> {
        match self {
            Trajectory::Memory(v) => Ok(Cow::Borrowed(&v[n])),
            Trajectory::Disk { dir, dim, .. } => {
                let path = step_file(dir, n);
                let mut bytes = Vec::with_capacity(8 * dim);
                fs::File::open(&path)
                    .and_then(|mut f| f.read_to_end(&mut bytes))
                    .map_err(|source| Error::Io { path, source })?;
                Ok(Cow::Owned(
                    bytes
                        .chunks_exact(8)
                        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                        .collect(),
                ))
            }
        }
    }
}

/// Forward trajectory with per-step Newton statistics.
#[derive(Debug)]
pub struct TransientSolution<T> {
    grid: TimeGrid<T>,
    states: Trajectory<T>,
    /// Newton iterations of step `n` (entry 0 belongs to the initial state).
    pub newton_iterations: Vec<usize>,
    /// Final scaled residual norm of each step.
    pub residual_norms: Vec<T>,
}

impl<T: Scalar> TransientSolution<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.len() == 0
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self.states, Trajectory::Disk { .. })
    }

    /// Nodal potential at sample `n`.
    pub fn state(&self, n: usize) -> Result<Cow<'_, [T]>> {
        self.states.get(n)
    }

    /// Potential of `node` at every sample.
    pub fn node_trace(&self, node: usize) -> Result<Vec<T>> {
        (0..self.len()).map(|n| Ok(self.state(n)?[node])).collect()
    }
}

/// Integrates the model over `grid`.
pub fn solve_forward<T: Scalar>(
    model: &EqsModel<T>,
    grid: &TimeGrid<T>,
    opts: &SolveOptions<T>,
) -> Result<TransientSolution<T>> {
    let samples = grid.samples();
    let mut states = Trajectory::new(opts.spill_dir.as_deref())?;
    let mut u = model.initial_state(&opts.initial, samples[0], &opts.newton)?;
    let mut iterations = vec![0];
    let mut residuals = vec![T::zero()];
    let mut cache = None;
    states.push(u.clone())?;
    for n in 1..samples.len() {
        let (next, it, res) = model.step(&u, samples[n], grid.dt(n), &opts.newton, n, &mut cache)?;
        iterations.push(it);
        residuals.push(res);
        u = next;
        states.push(u.clone())?;
    }
    Ok(TransientSolution {
        grid: grid.clone(),
        states,
        newton_iterations: iterations,
        residual_norms: residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitation::Waveform;
    use crate::test_support::{fgm_model, linear_model, sine};
    use crate::timegrid::build_timegrid;

    fn interface_nodes<T: Scalar>(model: &EqsModel<T>) -> Vec<usize> {
        let d = T::lit(0.01);
        (0..model.num_nodes())
            .filter(|&i| (model.mesh().nodes()[i][1] - d).abs() < T::lit(1e-12))
            .collect()
    }

    #[test]
    fn zero_excitation_stays_zero() {
        let model = linear_model::<f64>(10.0, 40.0, 20.0, 60.0, Waveform::Dc(0.0));
        let grid = build_timegrid(1.0, 20, &[]).unwrap();
        let sol = solve_forward(&model, &grid, &SolveOptions::default()).unwrap();
        for n in 0..sol.len() {
            assert!(sol.state(n).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_steps_take_one_iteration() {
        let model = linear_model::<f64>(10.0, 40.0, 20.0, 60.0, sine(1.0, 50.0));
        let grid = build_timegrid(0.02, 50, &[0.005]).unwrap();
        let sol = solve_forward(&model, &grid, &SolveOptions::default()).unwrap();
        // steps of length Δ_imp may already start inside the tolerance
        assert!(sol.newton_iterations[1..].iter().all(|&k| k <= 1), "{:?}", sol.newton_iterations);
        assert!(sol.newton_iterations.iter().filter(|&&k| k == 1).count() >= 50);
    }

    #[test]
    fn dc_steady_state_is_the_conductive_divider() {
        let model = linear_model::<f64>(10.0, 40.0, 20.0, 60.0, Waveform::Dc(1.0));
        let u = model.dc_steady_state(0.0, &NewtonOptions::default()).unwrap();
        for i in interface_nodes(&model) {
            assert!((u[i] - 1.0 / 3.0).abs() <= 1e-10 / 3.0, "{}", u[i]);
        }
    }

    #[test]
    fn weak_conduction_gives_the_capacitive_divider() {
        let model = linear_model::<f64>(1e-9, 40.0, 2e-9, 60.0, sine(1.0, 50.0));
        let grid = build_timegrid(0.02, 40, &[]).unwrap();
        let sol = solve_forward(&model, &grid, &SolveOptions::default()).unwrap();
        for (n, &t) in grid.samples().iter().enumerate() {
            let u = sol.state(n).unwrap();
            let expected = 0.4 * (std::f64::consts::TAU * 50.0 * t).sin();
            for i in interface_nodes(&model) {
                assert!((u[i] - expected).abs() < 1e-9, "{} {expected}", u[i]);
            }
        }
    }

    #[test]
    fn converged_steps_satisfy_the_residual() {
        let model = fgm_model::<f64>();
        let grid = build_timegrid(0.5, 40, &[]).unwrap();
        let sol = solve_forward(&model, &grid, &SolveOptions::default()).unwrap();
        assert!(sol.newton_iterations[1..].iter().any(|&k| k > 1));
        for n in 1..sol.len() {
            let r = model.step_residual(&sol.state(n).unwrap(), &sol.state(n - 1).unwrap(), grid.dt(n));
            let scale = model.step_matrix(&sol.state(n).unwrap(), grid.dt(n)).max_abs() * 6e3;
            assert!(norm2(&r) <= 1e-8 * scale, "step {n}: {}", norm2(&r));
        }
    }

    #[test]
    fn joule_heating_is_nonnegative() {
        let model = fgm_model::<f64>();
        let grid = build_timegrid(0.5, 40, &[]).unwrap();
        let sol = solve_forward(&model, &grid, &SolveOptions::default()).unwrap();
        for n in 0..sol.len() {
            let u = sol.state(n).unwrap();
            let jc = model.conduction_current(&u);
            let power: f64 = jc.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            assert!(power >= 0.0, "step {n}: {power}");
        }
    }

    #[test]
    fn dirichlet_values_follow_the_excitation() {
        let model = fgm_model::<f64>();
        let grid = build_timegrid(0.5, 10, &[]).unwrap();
        let sol = solve_forward(&model, &grid, &SolveOptions::default()).unwrap();
        for (n, &t) in grid.samples().iter().enumerate() {
            let mut expected = vec![0.0; model.num_nodes()];
            model.apply_dirichlet(t, &mut expected);
            let u = sol.state(n).unwrap();
            for &i in model.dofs().fixed_nodes() {
                assert_eq!(u[i], expected[i]);
            }
        }
    }

    #[test]
    fn spilled_trajectory_round_trips() {
        let model = fgm_model::<f64>();
        let grid = build_timegrid(0.5, 12, &[]).unwrap();
        let memory = solve_forward(&model, &grid, &SolveOptions::default()).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let opts = SolveOptions {
            spill_dir: Some(tmp.path().to_path_buf()),
            ..SolveOptions::default()
        };
        let disk = solve_forward(&model, &grid, &opts).unwrap();
        assert!(disk.is_spilled() && !memory.is_spilled());
        for n in 0..memory.len() {
            assert_eq!(memory.state(n).unwrap(), disk.state(n).unwrap());
        }
        assert!(disk.state(memory.len()).is_err());
        drop(disk);
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn prescribed_initial_state_must_match_the_mesh() {
        let model = linear_model::<f64>(10.0, 40.0, 20.0, 60.0, Waveform::Dc(1.0));
        let ic = InitialCondition::Prescribed(vec![0.0; 3]);
        assert!(model.initial_state(&ic, 0.0, &NewtonOptions::default()).is_err());
    }

    #[test]
    fn newton_reports_divergence() {
        let model = fgm_model::<f64>();
        let grid = build_timegrid(0.5, 4, &[]).unwrap();
        let opts = SolveOptions {
            newton: NewtonOptions {
                tol: 1e-14,
                max_iter: 1,
                max_halvings: 0,
            },
            ..SolveOptions::default()
        };
        match solve_forward(&model, &grid, &opts) {
            Err(Error::NewtonDiverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn single_precision_tracks_double() {
        let m64 = fgm_model::<f64>();
        let m32 = fgm_model::<f32>();
        let g64 = build_timegrid(0.5, 10, &[]).unwrap();
        let g32 = build_timegrid(0.5f32, 10, &[]).unwrap();
        let opts = SolveOptions {
            newton: NewtonOptions {
                tol: 1e-5,
                ..NewtonOptions::default()
            },
            ..SolveOptions::default()
        };
        let s64 = solve_forward(&m64, &g64, &SolveOptions::default()).unwrap();
        let s32 = solve_forward(&m32, &g32, &opts).unwrap();
        let a = s64.state(10).unwrap();
        let b = s32.state(10).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - *y as f64).abs() < 1e-3 * 1.8e4, "{x} {y}");
        }
    }
}
