//! Compressed sparse row storage and an envelope (skyline) Cholesky solver
//! with reverse Cuthill–McKee ordering.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::Scalar;

/// Sorted CSR sparsity pattern including the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self { row_ptr, col_idx }
    }

    /// Node adjacency of a triangle list.
    pub fn from_triangles(n: usize, triangles: impl Iterator<Item = [usize; 3]>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in triangles {
            for &a in &tri {
                rows[a].extend_from_slice(&tri);
            }
        }
        Self::from_rows(rows)
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Storage slot of entry `(i, j)` if it is in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let row = self.row(i);
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }
}

/// Sparse matrix on a shared pattern. Assembled FE matrices are symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pattern: Arc<CsrPattern>,
    values: Vec<T>,
}

/// Symmetric sparse matrix produced by FE assembly.
pub type SparseSymMatrix<T> = CsrMatrix<T>;

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_values(pattern: Arc<CsrPattern>, values: Vec<T>) -> Self {
        assert_eq!(pattern.nnz(), values.len());
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern
            .slot(i, j)
            .map_or(T::zero(), |s| self.values[s])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.pattern.row_range(i);
            *yi = self.pattern.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    /// `xᵀ·A·y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        (0..self.dim())
            .map(|i| {
                let r = self.pattern.row_range(i);
                let row: T = self.pattern.col_idx[r.clone()]
                    .iter()
                    .zip(&self.values[r])
                    .map(|(&j, &v)| v * y[j])
                    .sum();
                x[i] * row
            })
            .sum()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `self += alpha·other` (same pattern).
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        debug_assert!(Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim() {
            for s in self.pattern.row_range(i) {
                let j = self.pattern.col_idx[s];
                worst = worst.max((self.values[s] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut out = vec![vec![T::zero(); n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for s in self.pattern.row_range(i) {
                row[self.pattern.col_idx[s]] = self.values[s];
            }
        }
        out
    }
}

/// Reverse Cuthill–McKee ordering of an undirected graph given as adjacency
/// lists. Returns `order[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_last_level = |start: usize| -> (usize, usize) {
        let mut level = vec![usize::MAX; n];
        level[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut far = start;
        while let Some(v) = q.pop_front() {
            if level[v] > level[far] || (level[v] == level[far] && degree[v] < degree[far]) {
                far = v;
            }
            for &w in &adj[v] {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (far, level[far])
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node within this component
        let mut start = seed;
        let (mut far, mut ecc) = bfs_last_level(start);
        for _ in 0..4 {
            let (next, e) = bfs_last_level(far);
            if e <= ecc {
                break;
            }
            start = far;
            far = next;
            ecc = e;
        }
        if bfs_last_level(far).1 >= ecc {
            start = far;
        }

        visited[start] = true;
        let begin = order.len();
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

/// Node classification into free and Dirichlet-constrained degrees of freedom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    free_of: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
    fixed_nodes: Vec<usize>,
}

impl DofMap {
    pub fn new(n: usize, fixed: impl IntoIterator<Item = usize>) -> Self {
        let mut is_fixed = vec![false; n];
        for i in fixed {
            is_fixed[i] = true;
        }
        let mut free_of = vec![None; n];
        let mut free_nodes = Vec::new();
        let mut fixed_nodes = Vec::new();
        for i in 0..n {
            if is_fixed[i] {
                fixed_nodes.push(i);
            } else {
                free_of[i] = Some(free_nodes.len());
                free_nodes.push(i);
            }
        }
        Self {
            free_of,
            free_nodes,
            fixed_nodes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.free_of.len()
    }

    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_of[node]
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.free_of[node].is_none()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn fixed_nodes(&self) -> &[usize] {
        &self.fixed_nodes
    }

    pub fn restrict<T: Scalar>(&self, full: &[T]) -> Vec<T> {
        self.free_nodes.iter().map(|&i| full[i]).collect()
    }

    /// Writes free values into a full-length vector.
    pub fn scatter<T: Scalar>(&self, free: &[T], full: &mut [T]) {
        for (&i, &v) in self.free_nodes.iter().zip(free) {
            full[i] = v;
        }
    }

    /// Zeroes the constrained entries of a full-length vector.
    pub fn zero_fixed<T: Scalar>(&self, full: &mut [T]) {
        for &i in &self.fixed_nodes {
            full[i] = T::zero();
        }
    }
}

/// Symbolic analysis for factorizing the free–free block of matrices that
/// share one CSR pattern.
#[derive(Debug)]
pub struct SkylinePlan {
    dim: usize,
    /// `perm[new] = free index`.
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    /// CSR slot → skyline slot for free–free entries in the lower triangle.
    slot_map: Vec<usize>,
}

const NO_SLOT: usize = usize::MAX;

impl SkylinePlan {
    pub fn new(pattern: &CsrPattern, dofs: &DofMap) -> Self {
        let nf = dofs.num_free();
        let mut adj = vec![Vec::new(); nf];
        for (fi, &node) in dofs.free_nodes().iter().enumerate() {
            for &j in pattern.row(node) {
                if let Some(fj) = dofs.free_index(j) {
                    if fj != fi {
                        adj[fi].push(fj);
                    }
                }
            }
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; nf];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..nf).collect();
        for (fi, nbrs) in adj.iter().enumerate() {
            let r = inv[fi];
            for &fj in nbrs {
                let c = inv[fj];
                if c < r {
                    first[r] = first[r].min(c);
                }
            }
        }
        let mut offset = Vec::with_capacity(nf + 1);
        offset.push(0);
        for r in 0..nf {
            offset.push(offset[r] + (r - first[r] + 1));
        }
        let mut slot_map = vec![NO_SLOT; pattern.nnz()];
        for (fi, &node) in dofs.free_nodes().iter().enumerate() {
            let r = inv[fi];
            for s in pattern.row_range(node) {
                let j = pattern.col_idx[s];
                if let Some(fj) = dofs.free_index(j) {
                    let c = inv[fj];
                    if c <= r {
                        slot_map[s] = offset[r] + (c - first[r]);
                    }
                }
            }
        }
        Self {
            dim: nf,
            perm,
            first,
            offset,
            slot_map,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored envelope entries.
    pub fn envelope_size(&self) -> usize {
        self.offset[self.dim]
    }
}

/// `A_ff = L·Lᵀ` on the envelope of the permuted free–free block.
#[derive(Debug, Clone)]
pub struct SkylineCholesky<T> {
    plan: Arc<SkylinePlan>,
    data: Vec<T>,
}

impl<T: Scalar> SkylineCholesky<T> {
    /// Factorizes the free–free block of `matrix`. `step` labels errors.
    pub fn factor(plan: Arc<SkylinePlan>, matrix: &CsrMatrix<T>, step: usize) -> Result<Self> {
        let mut data = vec![T::zero(); plan.envelope_size()];
        for (s, &m) in plan.slot_map.iter().enumerate() {
            if m != NO_SLOT {
                data[m] = matrix.values[s];
            }
        }
        for r in 0..plan.dim {
            let fr = plan.first[r];
            let row_start = plan.offset[r];
            for c in fr..r {
                let fc = plan.first[c];
                let k0 = fr.max(fc);
                let (head, tail) = data.split_at_mut(row_start);
                let row_c = &head[plan.offset[c] + (k0 - fc)..plan.offset[c] + (c - fc)];
                let row_r = &tail[k0 - fr..c - fr];
                let dot: T = row_r.iter().zip(row_c).map(|(&a, &b)| a * b).sum();
                let diag_c = head[plan.offset[c + 1] - 1];
                tail[c - fr] = (tail[c - fr] - dot) / diag_c;
            }
            let row = &data[row_start..plan.offset[r + 1]];
            let (off, diag) = row.split_at(row.len() - 1);
            let d = diag[0] - off.iter().map(|&v| v * v).sum::<T>();
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::Solver {
                    step,
                    message: format!(
                        "matrix not positive definite (pivot {:e} at free dof {})",
                        d.as_f64(),
                        plan.perm[r]
                    ),
                });
            }
            data[plan.offset[r + 1] - 1] = d.sqrt();
        }
        Ok(Self { plan, data })
    }

    /// Solves `A_ff·x = b` with `b` indexed by free dof.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let p = &self.plan;
        let mut y: Vec<T> = p.perm.iter().map(|&old| b[old]).collect();
        for r in 0..p.dim {
            let fr = p.first[r];
            let row = &self.data[p.offset[r]..p.offset[r + 1]];
            let (off, diag) = row.split_at(row.len() - 1);
            let dot: T = off.iter().zip(&y[fr..r]).map(|(&a, &b)| a * b).sum();
            y[r] = (y[r] - dot) / diag[0];
        }
        for r in (0..p.dim).rev() {
            let fr = p.first[r];
            let row = &self.data[p.offset[r]..p.offset[r + 1]];
            let (off, diag) = row.split_at(row.len() - 1);
            let xr = y[r] / diag[0];
            y[r] = xr;
            for (yk, &l) in y[fr..r].iter_mut().zip(off) {
                *yk -= l * xr;
            }
        }
        let mut x = vec![T::zero(); p.dim];
        for (new, &v) in y.iter().enumerate() {
            x[p.perm[new]] = v;
        }
        x
    }

    pub fn plan(&self) -> &Arc<SkylinePlan> {
        &self.plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize) -> CsrMatrix<f64> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let pattern = Arc::new(CsrPattern::from_rows(rows));
        let mut m = CsrMatrix::zeros(pattern.clone());
        for i in 0..n {
            for s in pattern.row_range(i) {
                let j = pattern.col_idx[s];
                m.values[s] = if i == j { 2.0 } else { -1.0 };
            }
        }
        m
    }

    #[test]
    fn rcm_is_a_permutation() {
        let adj = vec![vec![3], vec![2, 4], vec![1], vec![0], vec![1]];
        let mut order = reverse_cuthill_mckee(&adj);
        order.sort_unstable();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let a = laplacian_1d(20);
        let dofs = DofMap::new(20, []);
        let plan = Arc::new(SkylinePlan::new(a.pattern(), &dofs));
        let chol = SkylineCholesky::factor(plan, &a, 0).unwrap();
        let x_true: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = chol.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_reports_step() {
        let mut a = laplacian_1d(4);
        for v in a.values_mut() {
            *v = -*v;
        }
        let dofs = DofMap::new(4, []);
        let plan = Arc::new(SkylinePlan::new(a.pattern(), &dofs));
        match SkylineCholesky::factor(plan, &a, 17) {
            Err(Error::Solver { step, .. }) => assert_eq!(step, 17),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn free_block_factorization_skips_fixed_dofs() {
        let a = laplacian_1d(6);
        let dofs = DofMap::new(6, [0, 5]);
        let plan = Arc::new(SkylinePlan::new(a.pattern(), &dofs));
        assert_eq!(plan.dim(), 4);
        let chol = SkylineCholesky::factor(plan, &a, 0).unwrap();
        // 1-D Laplace with u0 = 0, u5 = 5 has the linear solution u = i
        let b = vec![0.0, 0.0, 0.0, 5.0];
        let x = chol.solve(&b);
        for (k, v) in x.iter().enumerate() {
            assert!((v - (k + 1) as f64).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cholesky_matches_dense_solution(n in 2usize..25, seed in 0u64..1000) {
            // random sparse SPD: graph Laplacian + positive diagonal shift
            let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut rnd = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (state >> 33) as usize };
            let mut edges = Vec::new();
            for _ in 0..2 * n {
                let (i, j) = (rnd() % n, rnd() % n);
                if i != j { rows[i].push(j); rows[j].push(i); edges.push((i, j, 1.0 + (rnd() % 7) as f64)); }
            }
            let pattern = Arc::new(CsrPattern::from_rows(rows));
            let mut a = CsrMatrix::zeros(pattern.clone());
            for i in 0..n { let s = pattern.slot(i, i).unwrap(); a.values[s] += 0.5; }
            for (i, j, w) in edges {
                let (sii, sjj) = (pattern.slot(i, i).unwrap(), pattern.slot(j, j).unwrap());
                let (sij, sji) = (pattern.slot(i, j).unwrap(), pattern.slot(j, i).unwrap());
                a.values[sii] += w; a.values[sjj] += w; a.values[sij] -= w; a.values[sji] -= w;
            }
            let dofs = DofMap::new(n, []);
            let plan = Arc::new(SkylinePlan::new(&pattern, &dofs));
            let chol = SkylineCholesky::factor(plan, &a, 0).unwrap();
            let x_true: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.3).collect();
            let x = chol.solve(&a.mul_vec(&x_true));
            for (u, v) in x.iter().zip(&x_true) {
                prop_assert!((u - v).abs() < 1e-9 * v.abs().max(1.0));
            }
        }
    }
}
