//! Quantities of interest `G = ∫ g(φ, t) dt` and their adjoint loads.
//!
//! Every quantity is a weighted sum `G = Σ_n ω_n·g(u_n)` over grid samples.
//! Energy integrals use trapezoid weights on their window. Pointwise
//! quantities put a hat of unit area on `t_ref`, so `ω_ref = 1`.
//!
//! The adjoint load of sample `n` is stored as `q_n = (ω_n / c_n)·∂g/∂u`,
//! with `c_n` the trapezoid weight of the full grid, which makes
//! `Σ_n c_n·q_n` the discrete time integral of the load.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forward::{EqsModel, TransientSolution};
use crate::materials::ParamSelector;
use crate::timegrid::TimeGrid;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum QoiKind<T> {
    /// `∫_{t_a}^{t_b} ∫ σ(|E|)·|E|² dΩ dt` over `regions` (all when `None`).
    Energy {
        t_a: T,
        t_b: T,
        regions: Option<Vec<u32>>,
    },
    /// `φ(point, t_ref)`, linearly interpolated in the containing triangle.
    Potential { point: [T; 2], t_ref: T },
    /// `|E|` on the triangle containing `point` at `t_ref`.
    FieldMagnitude { point: [T; 2], t_ref: T },
    /// `Σ α_i·G_i`.
    Combination(Vec<(T, QoiKind<T>)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QoiSpec<T> {
    pub name: String,
    pub kind: QoiKind<T>,
}

impl<T: Scalar> QoiKind<T> {
    /// Instants that need hat refinement in the time grid.
    pub fn refine_instants(&self) -> Vec<T> {
        match self {
            QoiKind::Energy { .. } => vec![],
            QoiKind::Potential { t_ref, .. } | QoiKind::FieldMagnitude { t_ref, .. } => vec![*t_ref],
            QoiKind::Combination(parts) => parts.iter().flat_map(|(_, k)| k.refine_instants()).collect(),
        }
    }

    /// Window ends that must be grid samples.
    pub fn breakpoints(&self) -> Vec<T> {
        match self {
            QoiKind::Energy { t_a, t_b, .. } => vec![*t_a, *t_b],
            QoiKind::Potential { .. } | QoiKind::FieldMagnitude { .. } => vec![],
            QoiKind::Combination(parts) => parts.iter().flat_map(|(_, k)| k.breakpoints()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
enum Leaf<T> {
    Energy { in_domain: Vec<bool> },
    Potential { nodes: [usize; 3], lambda: [T; 3] },
    Field { element: usize },
}

/// A quantity bound to a model and grid: leaves with their time weights.
#[derive(Debug, Clone)]
pub struct ResolvedQoi<T> {
    pub name: String,
    terms: Vec<(T, Leaf<T>, Vec<(usize, T)>)>,
}

fn check_probe<T: Scalar>(model: &EqsModel<T>, point: [T; 2]) -> Result<(usize, [T; 3])> {
    let mesh = model.mesh();
    let node = mesh.nearest_node(point);
    if model.dofs().is_fixed(node) {
        return Err(Error::invalid(format!(
            "probe ({}, {}) snaps to Dirichlet node {node}; the adjoint vanishes there",
            point[0], point[1]
        )));
    }
    mesh.locate(point)
        .ok_or_else(|| Error::invalid(format!("probe ({}, {}) lies outside the mesh", point[0], point[1])))
}

fn pointwise_weight<T: Scalar>(grid: &TimeGrid<T>, t_ref: T) -> Result<Vec<(usize, T)>> {
    let n = grid.require_index(t_ref)?;
    if n == 0 || n == grid.num_steps() {
        return Err(Error::invalid(format!("pointwise instant {t_ref} must lie strictly inside the time window")));
    }
    Ok(vec![(n, T::one())])
}

fn resolve_into<T: Scalar>(
    kind: &QoiKind<T>,
    alpha: T,
    model: &EqsModel<T>,
    grid: &TimeGrid<T>,
    out: &mut Vec<(T, Leaf<T>, Vec<(usize, T)>)>,
) -> Result<()> {
    match kind {
        QoiKind::Energy { t_a, t_b, regions } => {
            if !(*t_a >= T::zero() && *t_b <= grid.t_end()) {
                return Err(Error::invalid(format!("energy window [{t_a}, {t_b}] outside the simulated time")));
            }
            let weights = grid
                .window_weights(*t_a, *t_b)?
                .into_iter()
                .enumerate()
                .filter(|(_, w)| *w != T::zero())
                .collect();
            let in_domain = model
                .mesh()
                .triangles()
                .iter()
                .map(|t| regions.as_ref().is_none_or(|r| r.contains(&t.region)))
                .collect();
            if let Some(r) = regions {
                let present = model.mesh().regions();
                if let Some(missing) = r.iter().find(|id| !present.contains(id)) {
                    return Err(Error::invalid(format!("energy region {missing} does not exist in the mesh")));
                }
            }
            out.push((alpha, Leaf::Energy { in_domain }, weights));
        }
        QoiKind::Potential { point, t_ref } => {
            let (e, lambda) = check_probe(model, *point)?;
            let nodes = model.mesh().triangles()[e].nodes;
            out.push((alpha, Leaf::Potential { nodes, lambda }, pointwise_weight(grid, *t_ref)?));
        }
        QoiKind::FieldMagnitude { point, t_ref } => {
            let (element, _) = check_probe(model, *point)?;
            out.push((alpha, Leaf::Field { element }, pointwise_weight(grid, *t_ref)?));
        }
        QoiKind::Combination(parts) => {
            for (a, k) in parts {
                resolve_into(k, alpha * *a, model, grid, out)?;
            }
        }
    }
    Ok(())
}

impl<T: Scalar> ResolvedQoi<T> {
    pub fn new(spec: &QoiSpec<T>, model: &EqsModel<T>, grid: &TimeGrid<T>) -> Result<Self> {
        let mut terms = Vec::new();
        resolve_into(&spec.kind, T::one(), model, grid, &mut terms)?;
        Ok(Self {
            name: spec.name.clone(),
            terms,
        })
    }

    /// Samples with a nonzero weight, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.terms.iter().flat_map(|(_, _, w)| w.iter().map(|&(n, _)| n)).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    fn leaf_value(model: &EqsModel<T>, leaf: &Leaf<T>, u: &[T]) -> T {
        match leaf {
            Leaf::Energy { in_domain } => {
                let asm = model.assembler();
                (0..in_domain.len())
                    .filter(|&e| in_domain[e])
                    .map(|e| {
                        let f = asm.field(e, u);
                        let m2 = f[0] * f[0] + f[1] * f[1];
                        model.element_model(e).sigma(m2.sqrt()) * m2 * asm.elements()[e].measure
                    })
                    .sum()
            }
            Leaf::Potential { nodes, lambda } => (0..3).map(|a| lambda[a] * u[nodes[a]]).sum(),
            Leaf::Field { element } => {
                let f = model.assembler().field(*element, u);
                f[0].hypot(f[1])
            }
        }
    }

    fn leaf_gradient(model: &EqsModel<T>, leaf: &Leaf<T>, u: &[T], scale: T, out: &mut [T]) {
        match leaf {
            Leaf::Energy { in_domain } => {
                let asm = model.assembler();
                let coeff = |e: usize| {
                    if !in_domain[e] {
                        return T::zero();
                    }
                    let f = asm.field(e, u);
                    let m = f[0].hypot(f[1]);
                    let law = model.element_model(e);
                    scale * (T::lit(2.0) * law.sigma(m) + law.sigma_de(m) * m)
                };
                for (o, v) in out.iter_mut().zip(asm.apply_scalar(coeff, u)) {
                    *o += v;
                }
            }
            Leaf::Potential { nodes, lambda } => {
                for a in 0..3 {
                    out[nodes[a]] += scale * lambda[a];
                }
            }
            Leaf::Field { element } => {
                let asm = model.assembler();
                let f = asm.field(*element, u);
                let m = f[0].hypot(f[1]);
                if m > T::zero() {
                    let el = &asm.elements()[*element];
                    for a in 0..3 {
                        let g = el.grads[a];
                        out[el.nodes[a]] -= scale * (f[0] * g[0] + f[1] * g[1]) / m;
                    }
                }
            }
        }
    }

    fn leaf_dparam(model: &EqsModel<T>, leaf: &Leaf<T>, u: &[T], region: u32, sel: ParamSelector) -> Result<T> {
        match leaf {
            Leaf::Energy { in_domain } => {
                let asm = model.assembler();
                let mut total = T::zero();
                for (e, tri) in model.mesh().triangles().iter().enumerate() {
                    if tri.region != region || !in_domain[e] || sel == ParamSelector::Eps {
                        continue;
                    }
                    let f = asm.field(e, u);
                    let m2 = f[0] * f[0] + f[1] * f[1];
                    total += model.element_model(e).sigma_dparam(m2.sqrt(), sel)? * m2 * asm.elements()[e].measure;
                }
                Ok(total)
            }
            Leaf::Potential { .. } | Leaf::Field { .. } => Ok(T::zero()),
        }
    }

    /// `G` on a forward solution.
    pub fn evaluate(&self, model: &EqsModel<T>, solution: &TransientSolution<T>) -> Result<T> {
        let mut total = T::zero();
        for (alpha, leaf, weights) in &self.terms {
            for &(n, w) in weights {
                total += *alpha * w * Self::leaf_value(model, leaf, &solution.state(n)?);
            }
        }
        Ok(total)
    }

    /// Instantaneous integrand `Σ α·g(u_n)` at every sample.
    pub fn trace(&self, model: &EqsModel<T>, solution: &TransientSolution<T>) -> Result<Vec<T>> {
        (0..solution.len())
            .map(|n| {
                let u = solution.state(n)?;
                Ok(self
                    .terms
                    .iter()
                    .map(|(alpha, leaf, _)| *alpha * Self::leaf_value(model, leaf, &u))
                    .sum())
            })
            .collect()
    }

    /// Adjoint loads `q_n` on the solution's grid.
    pub fn adjoint_rhs(&self, model: &EqsModel<T>, solution: &TransientSolution<T>) -> Result<AdjointRhs<T>> {
        let grid = solution.grid();
        let c = grid.trapezoid_weights();
        let mut q: BTreeMap<usize, Vec<T>> = BTreeMap::new();
        for (alpha, leaf, weights) in &self.terms {
            for &(n, w) in weights {
                let u = solution.state(n)?;
                let slot = q.entry(n).or_insert_with(|| vec![T::zero(); u.len()]);
                Self::leaf_gradient(model, leaf, &u, *alpha * w / c[n], slot);
            }
        }
        for v in q.values_mut() {
            model.dofs().zero_fixed(v);
        }
        Ok(AdjointRhs {
            num_samples: grid.len(),
            trapezoid: c,
            q,
        })
    }

    /// Explicit partial `∂G/∂p` at fixed potentials.
    pub fn explicit_partial(
        &self,
        model: &EqsModel<T>,
        solution: &TransientSolution<T>,
        region: u32,
        sel: ParamSelector,
    ) -> Result<T> {
        let mut total = T::zero();
        for (alpha, leaf, weights) in &self.terms {
            if !matches!(leaf, Leaf::Energy { .. }) {
                continue;
            }
            for &(n, w) in weights {
                total += *alpha * w * Self::leaf_dparam(model, leaf, &solution.state(n)?, region, sel)?;
            }
        }
        Ok(total)
    }
}

/// Adjoint loads `q_n`, stored only where nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointRhs<T> {
    pub num_samples: usize,
    /// Trapezoid weights `c_n` of the grid the loads live on.
    pub trapezoid: Vec<T>,
    pub q: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> AdjointRhs<T> {
    pub fn zero(grid: &TimeGrid<T>) -> Self {
        Self {
            num_samples: grid.len(),
            trapezoid: grid.trapezoid_weights(),
            q: BTreeMap::new(),
        }
    }

    /// `c_n·q_n`, or `None` when the load vanishes at `n`.
    pub fn weighted(&self, n: usize) -> Option<Vec<T>> {
        self.q.get(&n).map(|v| v.iter().map(|&x| self.trapezoid[n] * x).collect())
    }

    /// Discrete time integral `Σ_n c_n·q_n`.
    pub fn time_integral(&self, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); dim];
        for (&n, v) in &self.q {
            for (o, &x) in out.iter_mut().zip(v) {
                *o += self.trapezoid[n] * x;
            }
        }
        out
    }
}

pub fn eval_qoi<T: Scalar>(spec: &QoiSpec<T>, model: &EqsModel<T>, solution: &TransientSolution<T>) -> Result<T> {
    ResolvedQoi::new(spec, model, solution.grid())?.evaluate(model, solution)
}

pub fn adjoint_rhs<T: Scalar>(
    spec: &QoiSpec<T>,
    model: &EqsModel<T>,
    solution: &TransientSolution<T>,
) -> Result<AdjointRhs<T>> {
    ResolvedQoi::new(spec, model, solution.grid())?.adjoint_rhs(model, solution)
}
