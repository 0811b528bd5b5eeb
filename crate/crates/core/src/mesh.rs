//! Conforming linear-triangle meshes with region ids and boundary markers.
//!
//! Coordinates are `(x, y)` for Cartesian meshes and `(ρ, z)` for
//! axisymmetric ones; assembly reads the symmetry flag from the mesh.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Scalar;

/// Marker name of the excited electrode of the layered resistor.
pub const TOP_ELECTRODE: &str = "top_electrode";
/// Marker name of the grounded electrode of the layered resistor.
pub const BOTTOM_ELECTRODE: &str = "bottom_electrode";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symmetry {
    Cartesian,
    Axisymmetric,
}

impl Symmetry {
    pub fn as_str(self) -> &'static str {
        match self {
            Symmetry::Cartesian => "cartesian",
            Symmetry::Axisymmetric => "axisymmetric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    pub region: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    nodes: Vec<[T; 2]>,
    triangles: Vec<Triangle>,
    boundary: BTreeMap<String, Vec<usize>>,
    symmetry: Symmetry,
}

/// Twice the signed area of the triangle `(a, b, c)`.
pub(crate) fn doubled_signed_area<T: Scalar>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

impl<T: Scalar> Mesh<T> {
    /// Validates the raw data and normalizes triangle orientation to CCW.
    pub fn new(
        nodes: Vec<[T; 2]>,
        mut triangles: Vec<Triangle>,
        boundary: BTreeMap<String, Vec<usize>>,
        symmetry: Symmetry,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::invalid("mesh has no nodes"));
        }
        if nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::invalid("non-finite node coordinate"));
        }
        if symmetry == Symmetry::Axisymmetric {
            if let Some(i) = nodes.iter().position(|p| p[0] < T::zero()) {
                return Err(Error::invalid(format!(
                    "node {i} has negative radius in an axisymmetric mesh"
                )));
            }
        }
        let mut seen = HashSet::with_capacity(triangles.len());
        for (e, tri) in triangles.iter_mut().enumerate() {
            if let Some(&bad) = tri.nodes.iter().find(|&&i| i >= n) {
                return Err(Error::invalid(format!(
                    "triangle {e} references node {bad} but the mesh has {n} nodes"
                )));
            }
            let [a, b, c] = tri.nodes;
            if a == b || b == c || a == c {
                return Err(Error::invalid(format!("triangle {e} repeats a node")));
            }
            let mut key = tri.nodes;
            key.sort_unstable();
            if !seen.insert(key) {
                return Err(Error::invalid(format!("triangle {e} is a duplicate")));
            }
            let area2 = doubled_signed_area(nodes[a], nodes[b], nodes[c]);
            if area2 == T::zero() {
                return Err(Error::invalid(format!("triangle {e} is degenerate")));
            }
            if area2 < T::zero() {
                tri.nodes.swap(1, 2);
            }
        }

        let on_boundary = boundary_node_set(n, &triangles);
        let mut cleaned = BTreeMap::new();
        for (name, mut set) in boundary {
            set.sort_unstable();
            set.dedup();
            if let Some(&bad) = set.iter().find(|&&i| i >= n) {
                return Err(Error::invalid(format!(
                    "boundary marker '{name}' references node {bad} beyond node count {n}"
                )));
            }
            if let Some(&bad) = set.iter().find(|&&i| !on_boundary[i]) {
                return Err(Error::invalid(format!(
                    "boundary marker '{name}' contains interior node {bad}"
                )));
            }
            cleaned.insert(name, set);
        }

        Ok(Self {
            nodes,
            triangles,
            boundary: cleaned,
            symmetry,
        })
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn boundary(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.boundary
    }

    pub fn marker(&self, name: &str) -> Option<&[usize]> {
        self.boundary.get(name).map(Vec::as_slice)
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Region ids present in the mesh, sorted.
    pub fn regions(&self) -> BTreeSet<u32> {
        self.triangles.iter().map(|t| t.region).collect()
    }

    pub fn triangle_coords(&self, e: usize) -> [[T; 2]; 3] {
        let [a, b, c] = self.triangles[e].nodes;
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Planar area of triangle `e` (positive after construction).
    pub fn triangle_area(&self, e: usize) -> T {
        let [a, b, c] = self.triangle_coords(e);
        doubled_signed_area(a, b, c) / T::lit(2.0)
    }

    pub fn centroid(&self, e: usize) -> [T; 2] {
        let [a, b, c] = self.triangle_coords(e);
        let three = T::lit(3.0);
        [(a[0] + b[0] + c[0]) / three, (a[1] + b[1] + c[1]) / three]
    }

    /// Nodes on edges that belong to exactly one triangle.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        boundary_node_set(self.nodes.len(), &self.triangles)
            .into_iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
            .collect()
    }

    /// Index of the node closest to `point`; ties go to the lowest index.
    pub fn nearest_node(&self, point: [T; 2]) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, p) in self.nodes.iter().enumerate() {
            let dx = p[0] - point[0];
            let dy = p[1] - point[1];
            let d = dx * dx + dy * dy;
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Finds the triangle containing `point` and its barycentric coordinates.
    ///
    /// Points on shared edges resolve to the lowest-numbered triangle.
    pub fn locate(&self, point: [T; 2]) -> Option<(usize, [T; 3])> {
        let tol = T::lit(-1e-10);
        for (e, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = tri.nodes.map(|i| self.nodes[i]);
            let total = doubled_signed_area(a, b, c);
            let l0 = doubled_signed_area(point, b, c) / total;
            let l1 = doubled_signed_area(a, point, c) / total;
            let l2 = doubled_signed_area(a, b, point) / total;
            if l0 >= tol && l1 >= tol && l2 >= tol {
                return Some((e, [l0, l1, l2]));
            }
        }
        None
    }

    /// Serializes the mesh in the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "symmetry {}", self.symmetry.as_str());
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let [i, j, k] = t.nodes;
            let _ = writeln!(s, "{i} {j} {k} {}", t.region);
        }
        for (name, set) in &self.boundary {
            let _ = writeln!(s, "boundary {name} {}", set.len());
            for i in set {
                let _ = writeln!(s, "{i}");
            }
        }
        s
    }

    /// Parses the text format. `origin` only labels error messages.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        Parser::new(text, origin).parse()
    }
}

fn boundary_node_set(n: usize, triangles: &[Triangle]) -> Vec<bool> {
    let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        let [a, b, c] = t.nodes;
        for (p, q) in [(a, b), (b, c), (c, a)] {
            *edge_count.entry((p.min(q), p.max(q))).or_insert(0) += 1;
        }
    }
    let mut flags = vec![false; n];
    for ((p, q), count) in edge_count {
        if count == 1 {
            flags[p] = true;
            flags[q] = true;
        }
    }
    flags
}

pub fn save_mesh<T: Scalar>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh.to_text()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_mesh<T: Scalar>(path: impl AsRef<Path>) -> Result<Mesh<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Mesh::from_text(&text, path)
}

struct Parser<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
    origin: &'a Path,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, origin: &'a Path) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, raw)| {
                let body = raw.split('#').next().unwrap_or("");
                let toks: Vec<&str> = body.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Self {
            lines,
            pos: 0,
            origin,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(0, |l| l.0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let out = self
            .lines
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err(self.last_line(), format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(out)
    }

    fn header(&mut self, keyword: &str) -> Result<(usize, usize)> {
        let (line, toks) = self.next(keyword)?;
        if toks.len() != 2 || toks[0] != keyword {
            return Err(self.err(line, format!("expected '{keyword} <count>'")));
        }
        let count = toks[1]
            .parse()
            .map_err(|_| self.err(line, format!("invalid {keyword} count '{}'", toks[1])))?;
        Ok((line, count))
    }

    fn number<V: std::str::FromStr>(&self, line: usize, tok: &str) -> Result<V> {
        tok.parse()
            .map_err(|_| self.err(line, format!("cannot parse '{tok}' as a number")))
    }

    fn parse<T: Scalar>(mut self) -> Result<Mesh<T>> {
        let (line, toks) = self.next("symmetry")?;
        let symmetry = match toks.as_slice() {
            ["symmetry", "cartesian"] => Symmetry::Cartesian,
            ["symmetry", "axisymmetric"] => Symmetry::Axisymmetric,
            _ => return Err(self.err(line, "expected 'symmetry cartesian|axisymmetric'")),
        };

        let (_, n) = self.header("nodes")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, toks) = self.next("node coordinates")?;
            if toks.len() != 2 {
                return Err(self.err(line, "node line must be 'x y'"));
            }
            let x: T = self.number(line, toks[0])?;
            let y: T = self.number(line, toks[1])?;
            if symmetry == Symmetry::Axisymmetric && x < T::zero() {
                return Err(self.err(line, "negative radius in axisymmetric mesh"));
            }
            nodes.push([x, y]);
        }

        let (_, m) = self.header("triangles")?;
        let mut triangles = Vec::with_capacity(m);
        let mut seen = HashSet::with_capacity(m);
        for _ in 0..m {
            let (line, toks) = self.next("triangle")?;
            if toks.len() != 4 {
                return Err(self.err(line, "triangle line must be 'i j k region_id'"));
            }
            let mut idx = [0usize; 3];
            for (slot, tok) in idx.iter_mut().zip(&toks[..3]) {
                *slot = self.number(line, tok)?;
                if *slot >= n {
                    return Err(self.err(
                        line,
                        format!("node index {} out of range (mesh has {n} nodes)", *slot),
                    ));
                }
            }
            let mut key = idx;
            key.sort_unstable();
            if !seen.insert(key) {
                return Err(self.err(line, "duplicate triangle"));
            }
            let region = self.number(line, toks[3])?;
            triangles.push(Triangle { nodes: idx, region });
        }

        let mut boundary = BTreeMap::new();
        while self.pos < self.lines.len() {
            let (line, toks) = self.next("boundary block")?;
            if toks.len() != 3 || toks[0] != "boundary" {
                return Err(self.err(line, "expected 'boundary <marker> <count>'"));
            }
            let name = toks[1].to_string();
            let k: usize = self.number(line, toks[2])?;
            let mut set = Vec::with_capacity(k);
            while set.len() < k {
                let (line, toks) = self.next("boundary node index")?;
                for tok in toks {
                    let i: usize = self.number(line, tok)?;
                    if i >= n {
                        return Err(self.err(line, format!("node index {i} out of range")));
                    }
                    set.push(i);
                }
                if set.len() > k {
                    return Err(self.err(line, format!("boundary '{name}' has more than {k} entries")));
                }
            }
            if boundary.insert(name.clone(), set).is_some() {
                return Err(self.err(line, format!("boundary marker '{name}' defined twice")));
            }
        }

        Mesh::new(nodes, triangles, boundary, symmetry).map_err(|e| match e {
            Error::InvalidArgument(msg) => self.err(self.last_line(), msg),
            other => other,
        })
    }
}

/// Tensor-product grid split into right triangles, regions chosen per cell.
fn structured<T: Scalar>(
    xs: &[T],
    ys: &[T],
    symmetry: Symmetry,
    region_of: impl Fn(T, T) -> u32,
    markers: impl Fn(T, T) -> Vec<&'static str>,
) -> Result<Mesh<T>> {
    let nxp = xs.len();
    let mut nodes = Vec::with_capacity(xs.len() * ys.len());
    let mut boundary: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            let idx = j * nxp + i;
            nodes.push([x, y]);
            let on_edge = i == 0 || j == 0 || i + 1 == nxp || j + 1 == ys.len();
            if on_edge {
                for m in markers(x, y) {
                    boundary.entry(m.to_string()).or_default().push(idx);
                }
            }
        }
    }
    let half = T::lit(0.5);
    let mut triangles = Vec::with_capacity(2 * (xs.len() - 1) * (ys.len() - 1));
    for j in 0..ys.len() - 1 {
        for i in 0..nxp - 1 {
            let a = j * nxp + i;
            let b = a + 1;
            let c = a + 1 + nxp;
            let d = a + nxp;
            let region = region_of(half * (xs[i] + xs[i + 1]), half * (ys[j] + ys[j + 1]));
            triangles.push(Triangle { nodes: [a, b, c], region });
            triangles.push(Triangle { nodes: [a, c, d], region });
        }
    }
    Mesh::new(nodes, triangles, boundary, symmetry)
}

fn linspace<T: Scalar>(start: T, end: T, cells: usize) -> Vec<T> {
    let n = T::from_count(cells);
    (0..=cells)
        .map(|k| {
            if k == cells {
                end
            } else {
                start + (end - start) * T::from_count(k) / n
            }
        })
        .collect()
}

/// Joins consecutive coordinate bands, dropping the duplicated seam values.
fn bands<T: Scalar>(breaks: &[T], cells: &[usize]) -> Vec<T> {
    let mut out = vec![breaks[0]];
    for (w, &c) in breaks.windows(2).zip(cells) {
        out.extend(linspace(w[0], w[1], c).into_iter().skip(1));
    }
    out
}

/// Two-layer resistor: region 1 on top, region 2 below.
///
/// The `y` axis measures depth below the excited electrode, so the
/// `top_electrode` row is `y = 0`, the material interface is `y = d` and
/// `bottom_electrode` is `y = 2d`. The point `(0, d/2)` lies in the middle
/// of the upper layer.
pub fn build_layered_rect<T: Scalar>(
    width: T,
    layer_thickness: T,
    nx: usize,
    ny_per_layer: usize,
) -> Result<Mesh<T>> {
    if nx == 0 || ny_per_layer == 0 {
        return Err(Error::invalid("nx and ny_per_layer must be at least 1"));
    }
    if !(width > T::zero()) || !(layer_thickness > T::zero()) {
        return Err(Error::invalid("width and layer thickness must be positive"));
    }
    let d = layer_thickness;
    let xs = linspace(T::zero(), width, nx);
    let ys = bands(&[T::zero(), d, d + d], &[ny_per_layer, ny_per_layer]);
    let two_d = ys[ys.len() - 1];
    structured(
        &xs,
        &ys,
        Symmetry::Cartesian,
        |_, y| if y < d { 1 } else { 2 },
        |_, y| {
            if y == T::zero() {
                vec![TOP_ELECTRODE]
            } else if y == two_d {
                vec![BOTTOM_ELECTRODE]
            } else {
                vec![]
            }
        },
    )
}

/// Region ids of the simplified graded joint.
pub mod joint_regions {
    pub const INNER_INSULATION: u32 = 4;
    pub const OUTER_INSULATION: u32 = 5;
    pub const FGM: u32 = 6;
}

pub const HV_ELECTRODE: &str = "hv_electrode";
pub const GROUND: &str = "ground";

/// Axisymmetric stand-in for a resistively graded cable joint.
///
/// Radial bands: inner insulation `[r_conductor, r_fgm_inner]`, FGM sheet
/// `[r_fgm_inner, r_fgm_outer]`, outer insulation `[r_fgm_outer, r_outer]`,
/// all spanning `z ∈ [0, length]`. The conductor surface and the cap
/// `z = length, ρ ≤ r_fgm_outer` form the high-voltage electrode; the cable
/// screen end `z = 0, ρ ≥ r_fgm_inner` and the sheath `ρ = r_outer` are
/// grounded. The two triple points sit at `(r_fgm_inner, 0)` and
/// `(r_fgm_outer, length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGeometry<T> {
    pub r_conductor: T,
    pub r_fgm_inner: T,
    pub r_fgm_outer: T,
    pub r_outer: T,
    pub length: T,
    pub cells_inner: usize,
    pub cells_fgm: usize,
    pub cells_outer: usize,
    pub cells_z: usize,
}

impl<T: Scalar> Default for JointGeometry<T> {
    fn default() -> Self {
        Self {
            r_conductor: T::lit(0.02),
            r_fgm_inner: T::lit(0.04),
            r_fgm_outer: T::lit(0.042),
            r_outer: T::lit(0.07),
            length: T::lit(0.25),
            cells_inner: 12,
            cells_fgm: 3,
            cells_outer: 12,
            cells_z: 100,
        }
    }
}

impl<T: Scalar> JointGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        let ordered = T::zero() <= self.r_conductor
            && self.r_conductor < self.r_fgm_inner
            && self.r_fgm_inner < self.r_fgm_outer
            && self.r_fgm_outer < self.r_outer
            && self.length > T::zero();
        if !ordered {
            return Err(Error::invalid(
                "joint radii must satisfy 0 <= r_conductor < r_fgm_inner < r_fgm_outer < r_outer and length > 0",
            ));
        }
        if [self.cells_inner, self.cells_fgm, self.cells_outer, self.cells_z].contains(&0) {
            return Err(Error::invalid("joint cell counts must be at least 1"));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        (self.cells_inner + self.cells_fgm + self.cells_outer + 1) * (self.cells_z + 1)
    }

    /// A point inside the FGM sheet just below the high-voltage triple point.
    pub fn triple_point_probe(&self) -> [T; 2] {
        let dr = (self.r_fgm_outer - self.r_fgm_inner) / T::from_count(self.cells_fgm);
        let dz = self.length / T::from_count(self.cells_z);
        [self.r_fgm_outer - T::lit(0.2) * dr, self.length - T::lit(0.6) * dz]
    }
}

pub fn build_joint<T: Scalar>(geom: &JointGeometry<T>) -> Result<Mesh<T>> {
    geom.validate()?;
    let g = geom.clone();
    let xs = bands(
        &[g.r_conductor, g.r_fgm_inner, g.r_fgm_outer, g.r_outer],
        &[g.cells_inner, g.cells_fgm, g.cells_outer],
    );
    let ys = linspace(T::zero(), g.length, g.cells_z);
    structured(
        &xs,
        &ys,
        Symmetry::Axisymmetric,
        |r, _| {
            if r < g.r_fgm_inner {
                joint_regions::INNER_INSULATION
            } else if r < g.r_fgm_outer {
                joint_regions::FGM
            } else {
                joint_regions::OUTER_INSULATION
            }
        },
        |r, z| {
            let hv = r == g.r_conductor || (z == g.length && r <= g.r_fgm_outer);
            let ground = r == g.r_outer || (z == T::zero() && r >= g.r_fgm_inner);
            match (hv, ground) {
                (true, _) => vec![HV_ELECTRODE],
                (false, true) => vec![GROUND],
                _ => vec![],
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_triangle_text() -> &'static str {
        "# minimal\nsymmetry cartesian\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2 7\nboundary left 2\n0\n2\n"
    }

    #[test]
    fn layered_counts() {
        let m = build_layered_rect(0.01, 0.01, 1, 1).unwrap();
        assert_eq!((m.num_nodes(), m.num_triangles()), (6, 4));
        let m = build_layered_rect(0.01, 0.01, 4, 8).unwrap();
        assert_eq!((m.num_nodes(), m.num_triangles()), (85, 128));
        for e in 0..m.num_triangles() {
            assert!(m.triangle_area(e) > 0.0);
        }
        assert_eq!(m.marker(TOP_ELECTRODE).unwrap().len(), 5);
        assert_eq!(m.marker(BOTTOM_ELECTRODE).unwrap().len(), 5);
    }

    #[test]
    fn layered_interface_row_and_area() {
        let d = 0.01;
        let m = build_layered_rect(0.03, d, 3, 4).unwrap();
        let on_interface = m.nodes().iter().filter(|p| p[1] == d).count();
        assert_eq!(on_interface, 4);
        let area: f64 = (0..m.num_triangles()).map(|e| m.triangle_area(e)).sum();
        assert!((area - 0.03 * 2.0 * d).abs() <= 1e-12 * area);
        for t in m.triangles() {
            let c = m.centroid(m.triangles().iter().position(|x| x == t).unwrap());
            assert_eq!(t.region, if c[1] < d { 1 } else { 2 });
        }
    }

    #[test]
    fn layered_rejects_bad_arguments() {
        assert!(build_layered_rect(0.0, 0.01, 1, 1).is_err());
        assert!(build_layered_rect(0.01, -1.0, 1, 1).is_err());
        assert!(build_layered_rect(0.01, 0.01, 0, 1).is_err());
        assert!(build_layered_rect(0.01, 0.01, 1, 0).is_err());
    }

    #[test]
    fn nearest_node_rules() {
        let d = 0.01;
        let m = build_layered_rect(0.01, d, 4, 8).unwrap();
        for k in [0, 17, 84] {
            assert_eq!(m.nearest_node(m.nodes()[k]), k);
        }
        let k = m.nearest_node([0.0, d / 2.0]);
        assert_eq!(m.nodes()[k], [0.0, d / 2.0]);

        // nodes 3 and 7 are equidistant from the origin, everything else is farther
        let mut nodes: Vec<[f64; 2]> = (0..8).map(|i| [10.0 + i as f64, 10.0]).collect();
        nodes[3] = [-1.0, 0.0];
        nodes[7] = [1.0, 0.0];
        nodes[2] = [0.0, -5.0];
        let tris = vec![Triangle { nodes: [3, 2, 7], region: 1 }];
        let m = Mesh::new(nodes, tris, BTreeMap::new(), Symmetry::Cartesian).unwrap();
        assert_eq!(m.nearest_node([0.0, 0.0]), 3);
    }

    #[test]
    fn minimal_file_and_round_trip() {
        let m: Mesh<f64> = Mesh::from_text(single_triangle_text(), Path::new("mem")).unwrap();
        assert_eq!(m.num_triangles(), 1);
        assert_eq!(m.triangles()[0].region, 7);
        let again: Mesh<f64> = Mesh::from_text(&m.to_text(), Path::new("mem")).unwrap();
        assert_eq!(again, m);

        let m = build_joint(&JointGeometry::<f64>::default()).unwrap();
        let again: Mesh<f64> = Mesh::from_text(&m.to_text(), Path::new("mem")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = "symmetry cartesian\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 5 1\n";
        match Mesh::<f64>::from_text(bad, Path::new("m.txt")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 7);
                assert!(message.contains("out of range"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let neg = "symmetry axisymmetric\nnodes 3\n-1 0\n1 0\n0 1\ntriangles 1\n0 1 2 1\n";
        assert!(matches!(
            Mesh::<f64>::from_text(neg, Path::new("m.txt")),
            Err(Error::Parse { line: 3, .. })
        ));
        let garbage = "symmetry cartesian\nnodes 2\n0 zero\n";
        assert!(matches!(
            Mesh::<f64>::from_text(garbage, Path::new("m.txt")),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            load_mesh::<f64>("/nonexistent/mesh.txt"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn clockwise_triangles_are_reoriented() {
        let text = "symmetry cartesian\nnodes 3\n0 0\n0 1\n1 0\ntriangles 1\n0 1 2 1\n";
        let m: Mesh<f64> = Mesh::from_text(text, Path::new("cw")).unwrap();
        assert!(m.triangle_area(0) > 0.0);
    }

    #[test]
    fn interior_marker_is_rejected() {
        let m = build_layered_rect(0.01, 0.01, 2, 2).unwrap();
        let interior = (0..m.num_nodes())
            .find(|i| !m.boundary_nodes().contains(i))
            .unwrap();
        let mut b = m.boundary().clone();
        b.insert("bad".into(), vec![interior]);
        let r = Mesh::new(m.nodes().to_vec(), m.triangles().to_vec(), b, Symmetry::Cartesian);
        assert!(r.is_err());
    }

    #[test]
    fn joint_layout() {
        let g = JointGeometry::<f64>::default();
        let m = build_joint(&g).unwrap();
        assert_eq!(m.num_nodes(), g.node_count());
        assert!(m.num_nodes() <= 5000);
        assert_eq!(m.symmetry(), Symmetry::Axisymmetric);
        let hv = m.marker(HV_ELECTRODE).unwrap();
        let gnd = m.marker(GROUND).unwrap();
        assert!(hv.iter().all(|i| !gnd.contains(i)));
        let regions = m.regions();
        assert!(regions.contains(&joint_regions::FGM));
        let (e, _) = m.locate(g.triple_point_probe()).unwrap();
        assert_eq!(m.triangles()[e].region, joint_regions::FGM);
        let k = m.nearest_node(g.triple_point_probe());
        assert!(!hv.contains(&k) && !gnd.contains(&k));
    }

    #[test]
    fn locate_returns_barycentrics() {
        let m = build_layered_rect(1.0f64, 1.0, 2, 2).unwrap();
        let p = [0.3, 0.9];
        let (e, l) = m.locate(p).unwrap();
        let c = m.triangle_coords(e);
        let x = l[0] * c[0][0] + l[1] * c[1][0] + l[2] * c[2][0];
        let y = l[0] * c[0][1] + l[1] * c[1][1] + l[2] * c[2][1];
        assert!((x - p[0]).abs() < 1e-14 && (y - p[1]).abs() < 1e-14);
        assert!(m.locate([5.0, 5.0]).is_none());
    }
}
