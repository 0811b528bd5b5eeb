//! Linear-triangle FE assembly of `∫ ∇N_r · C · ∇N_s dΩ` matrices, element
//! fields, and Dirichlet elimination.
//!
//! Axisymmetric meshes weight every element by `2πρ` at the centroid
//! (one-point quadrature). Element matrices are computed on the upper
//! triangle and mirrored, so assembled matrices are exactly symmetric.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::materials::Tensor2;
use crate::mesh::{doubled_signed_area, Mesh, Symmetry};
use crate::sparse::{CsrMatrix, CsrPattern, DofMap, SkylineCholesky, SkylinePlan, SparseSymMatrix};
use crate::Scalar;

/// Coefficient entering one element integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementCoefficient<T> {
    Scalar(T),
    Tensor(Tensor2<T>),
}

impl<T: Scalar> ElementCoefficient<T> {
    pub fn as_tensor(&self) -> Tensor2<T> {
        match *self {
            ElementCoefficient::Scalar(c) => Tensor2::isotropic(c),
            ElementCoefficient::Tensor(t) => t,
        }
    }
}

/// Shape-function gradients and integration measure of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry<T> {
    pub nodes: [usize; 3],
    pub region: u32,
    pub grads: [[T; 2]; 3],
    /// Area, times `2πρ_centroid` in axisymmetric mode.
    pub measure: T,
}

/// Precomputed element data and CSR slots for repeated assembly on one mesh.
#[derive(Debug)]
pub struct Assembler<T> {
    pattern: Arc<CsrPattern>,
    elements: Vec<ElementGeometry<T>>,
    slots: Vec<[usize; 9]>,
    num_nodes: usize,
}

impl<T: Scalar> Assembler<T> {
    pub fn new(mesh: &Mesh<T>) -> Self {
        let pattern = Arc::new(CsrPattern::from_triangles(
            mesh.num_nodes(),
            mesh.triangles().iter().map(|t| t.nodes),
        ));
        let two = T::lit(2.0);
        let two_pi = T::lit(std::f64::consts::TAU);
        let elements: Vec<_> = mesh
            .triangles()
            .iter()
            .enumerate()
            .map(|(e, tri)| {
                let [p0, p1, p2] = mesh.triangle_coords(e);
                let area2 = doubled_signed_area(p0, p1, p2);
                let g = |a: [T; 2], b: [T; 2]| [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2];
                let grads = [g(p1, p2), g(p2, p0), g(p0, p1)];
                let area = area2 / two;
                let measure = match mesh.symmetry() {
                    Symmetry::Cartesian => area,
                    Symmetry::Axisymmetric => area * two_pi * mesh.centroid(e)[0],
                };
                ElementGeometry {
                    nodes: tri.nodes,
                    region: tri.region,
                    grads,
                    measure,
                }
            })
            .collect();
        let slots = elements
            .iter()
            .map(|el| {
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[a * 3 + b] = pattern
                            .slot(el.nodes[a], el.nodes[b])
                            .expect("element pair in adjacency pattern");
                    }
                }
                s
            })
            .collect();
        Self {
            pattern,
            elements,
            slots,
            num_nodes: mesh.num_nodes(),
        }
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn elements(&self) -> &[ElementGeometry<T>] {
        &self.elements
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// `K_e[a][b] = measure · ∇N_a · C · ∇N_b`, upper triangle mirrored.
    pub fn element_matrix(&self, e: usize, c: &Tensor2<T>) -> [[T; 3]; 3] {
        let el = &self.elements[e];
        let mut k = [[T::zero(); 3]; 3];
        for a in 0..3 {
            for b in a..3 {
                let v = el.measure * c.bilinear(el.grads[a], el.grads[b]);
                k[a][b] = v;
                k[b][a] = v;
            }
        }
        k
    }

    /// Assembles with a per-element tensor coefficient.
    pub fn assemble_with<F>(&self, coeff: F) -> SparseSymMatrix<T>
    where
        F: Fn(usize) -> Tensor2<T> + Sync,
    {
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        if rayon::current_num_threads() > 1 {
            let local: Vec<[[T; 3]; 3]> = (0..self.elements.len())
                .into_par_iter()
                .map(|e| self.element_matrix(e, &coeff(e)))
                .collect();
            for (e, k) in local.iter().enumerate() {
                self.scatter(&mut m, e, k);
            }
        } else {
            for e in 0..self.elements.len() {
                let k = self.element_matrix(e, &coeff(e));
                self.scatter(&mut m, e, &k);
            }
        }
        m
    }

    fn scatter(&self, m: &mut CsrMatrix<T>, e: usize, k: &[[T; 3]; 3]) {
        let vals = m.values_mut();
        for a in 0..3 {
            for b in 0..3 {
                vals[self.slots[e][a * 3 + b]] += k[a][b];
            }
        }
    }

    pub fn assemble(&self, coeff: &[ElementCoefficient<T>]) -> Result<SparseSymMatrix<T>> {
        if coeff.len() != self.elements.len() {
            return Err(Error::invalid(format!(
                "coefficient given for {} of {} elements",
                coeff.len(),
                self.elements.len()
            )));
        }
        if let Some(e) = coeff.iter().position(|c| !c.as_tensor().is_finite()) {
            return Err(Error::invalid(format!("coefficient of element {e} is not finite")));
        }
        Ok(self.assemble_with(|e| coeff[e].as_tensor()))
    }

    /// Constant gradient of the linear interpolant of `u` on element `e`.
    pub fn gradient(&self, e: usize, u: &[T]) -> [T; 2] {
        let el = &self.elements[e];
        let mut g = [T::zero(); 2];
        for a in 0..3 {
            let v = u[el.nodes[a]];
            g[0] += v * el.grads[a][0];
            g[1] += v * el.grads[a][1];
        }
        g
    }

    /// `E = −∇φ` on element `e`.
    pub fn field(&self, e: usize, u: &[T]) -> [T; 2] {
        let g = self.gradient(e, u);
        [-g[0], -g[1]]
    }

    pub fn fields(&self, u: &[T]) -> Vec<[T; 2]> {
        (0..self.elements.len()).map(|e| self.field(e, u)).collect()
    }

    /// `Σ_e c_e · measure_e · ∇u·∇w`, i.e. `uᵀ·K_c·w` for a scalar coefficient.
    pub fn bilinear_scalar<F>(&self, coeff: F, u: &[T], w: &[T]) -> T
    where
        F: Fn(usize) -> T,
    {
        (0..self.elements.len())
            .map(|e| {
                let c = coeff(e);
                if c == T::zero() {
                    return T::zero();
                }
                let gu = self.gradient(e, u);
                let gw = self.gradient(e, w);
                c * self.elements[e].measure * (gu[0] * gw[0] + gu[1] * gw[1])
            })
            .sum()
    }

    /// `K_c·u` for a scalar coefficient, computed element by element.
    pub fn apply_scalar<F>(&self, coeff: F, u: &[T]) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        let mut out = vec![T::zero(); self.num_nodes];
        for (e, el) in self.elements.iter().enumerate() {
            let c = coeff(e);
            if c == T::zero() {
                continue;
            }
            let g = self.gradient(e, u);
            for a in 0..3 {
                out[el.nodes[a]] += c * el.measure * (el.grads[a][0] * g[0] + el.grads[a][1] * g[1]);
            }
        }
        out
    }
}

/// Assembles `∫ ∇N_r · C · ∇N_s dΩ` for per-element coefficients.
pub fn assemble<T: Scalar>(
    mesh: &Mesh<T>,
    coeff: &[ElementCoefficient<T>],
) -> Result<SparseSymMatrix<T>> {
    Assembler::new(mesh).assemble(coeff)
}

pub fn element_gradient<T: Scalar>(mesh: &Mesh<T>, u: &[T], e: usize) -> [T; 2] {
    let [p0, p1, p2] = mesh.triangle_coords(e);
    let [a, b, c] = mesh.triangles()[e].nodes;
    let area2 = doubled_signed_area(p0, p1, p2);
    let gx = (u[a] * (p1[1] - p2[1]) + u[b] * (p2[1] - p0[1]) + u[c] * (p0[1] - p1[1])) / area2;
    let gy = (u[a] * (p2[0] - p1[0]) + u[b] * (p0[0] - p2[0]) + u[c] * (p1[0] - p0[0])) / area2;
    [gx, gy]
}

pub fn element_field<T: Scalar>(mesh: &Mesh<T>, u: &[T], e: usize) -> [T; 2] {
    let g = element_gradient(mesh, u, e);
    [-g[0], -g[1]]
}

/// Resolves marker names to node indices; later markers win on shared nodes.
pub fn dirichlet_nodes<T: Scalar, V: Copy>(
    mesh: &Mesh<T>,
    values: &BTreeMap<String, V>,
) -> Result<Vec<(usize, V)>> {
    let mut out: BTreeMap<usize, V> = BTreeMap::new();
    for (name, &v) in values {
        let nodes = mesh
            .marker(name)
            .ok_or_else(|| Error::invalid(format!("unknown boundary marker '{name}'")))?;
        for &i in nodes {
            out.insert(i, v);
        }
    }
    Ok(out.into_iter().collect())
}

/// Linear system with Dirichlet rows and columns eliminated symmetrically.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem<T> {
    pub dofs: DofMap,
    /// Free–free block.
    pub matrix: CsrMatrix<T>,
    /// `b_f − A_fd·g`.
    pub rhs: Vec<T>,
    /// Full-length vector holding the prescribed values.
    pub prescribed: Vec<T>,
}

impl<T: Scalar> ConstrainedSystem<T> {
    /// Re-expands a free-dof solution to all nodes.
    pub fn expand(&self, free: &[T]) -> Vec<T> {
        let mut full = self.prescribed.clone();
        self.dofs.scatter(free, &mut full);
        full
    }

    pub fn solve(&self) -> Result<Vec<T>> {
        if self.dofs.num_free() == 0 {
            return Ok(self.prescribed.clone());
        }
        let plan = Arc::new(SkylinePlan::new(
            self.matrix.pattern(),
            &DofMap::new(self.dofs.num_free(), []),
        ));
        let chol = SkylineCholesky::factor(plan, &self.matrix, 0)?;
        Ok(self.expand(&chol.solve(&self.rhs)))
    }
}

pub fn apply_dirichlet<T: Scalar>(
    mesh: &Mesh<T>,
    matrix: &CsrMatrix<T>,
    rhs: &[T],
    values: &BTreeMap<String, T>,
) -> Result<ConstrainedSystem<T>> {
    let n = matrix.dim();
    if rhs.len() != n || mesh.num_nodes() != n {
        return Err(Error::invalid("matrix, rhs and mesh sizes differ"));
    }
    let fixed = dirichlet_nodes(mesh, values)?;
    let mut prescribed = vec![T::zero(); n];
    for &(i, v) in &fixed {
        prescribed[i] = v;
    }
    let dofs = DofMap::new(n, fixed.iter().map(|&(i, _)| i));
    let pattern = matrix.pattern();
    let lift = matrix.mul_vec(&{
        let mut g = prescribed.clone();
        for &i in dofs.free_nodes() {
            g[i] = T::zero();
        }
        g
    });
    let mut rows = Vec::with_capacity(dofs.num_free());
    let mut vals = Vec::new();
    for &node in dofs.free_nodes() {
        let mut row = Vec::new();
        for s in pattern.row_range(node) {
            if let Some(fj) = dofs.free_index(pattern.row(node)[s - pattern.row_range(node).start]) {
                row.push(fj);
                vals.push(matrix.values()[s]);
            }
        }
        rows.push(row);
    }
    let reduced = Arc::new(CsrPattern::from_rows(rows));
    let matrix_ff = CsrMatrix::from_values(reduced, vals);
    let rhs_f = dofs
        .free_nodes()
        .iter()
        .map(|&i| rhs[i] - lift[i])
        .collect();
    Ok(ConstrainedSystem {
        dofs,
        matrix: matrix_ff,
        rhs: rhs_f,
        prescribed,
    })
}
