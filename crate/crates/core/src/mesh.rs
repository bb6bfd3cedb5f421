//! Conforming triangle meshes with boundary tags and newest-vertex bisection.
//!
//! Every triangle is stored newest-vertex first: for `[a, b, c]` the refinement edge is
//! `(b, c)`. Orientation is counterclockwise. Local edge `k` of a triangle is the edge opposite
//! its local vertex `k`, running from vertex `k+1` to vertex `k+2` (mod 3).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Boundary condition class of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// Prescribed displacement.
    Gamma0,
    /// Prescribed traction.
    Gamma1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, lower index first.
    pub vertices: [usize; 2],
    /// Lower-indexed incident triangle.
    pub left: usize,
    /// Higher-indexed incident triangle; `None` on the boundary.
    pub right: Option<usize>,
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    tri_edges: Vec<[usize; 3]>,
    boundary_tags: BTreeMap<[usize; 2], BoundaryTag>,
    generation: usize,
}

fn key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn dist2(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// Rotates a counterclockwise triangle so the vertex opposite its longest edge comes first.
fn longest_edge_first(t: [usize; 3], v: &[[f64; 2]]) -> [usize; 3] {
    let len = |k: usize| dist2(v[t[(k + 1) % 3]], v[t[(k + 2) % 3]]);
    let mut best = 0;
    for k in 1..3 {
        if len(k) > len(best) * (1.0 + 1e-12) {
            best = k;
        }
    }
    [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
}

impl Mesh {
    /// Builds a mesh from raw parts. Clockwise triangles are reoriented keeping their first
    /// vertex; every boundary edge must carry a tag and only boundary edges may carry one.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: BTreeMap<[usize; 2], BoundaryTag>,
    ) -> Result<Self> {
        Self::assemble(vertices, triangles, boundary_tags, 0)
    }

    fn assemble(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        boundary_tags: BTreeMap<[usize; 2], BoundaryTag>,
        generation: usize,
    ) -> Result<Self> {
        for (k, t) in triangles.iter_mut().enumerate() {
            if t.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidInput(format!("triangle {k} references a missing vertex")));
            }
            let a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if a == 0.0 || !a.is_finite() {
                return Err(Error::InvalidInput(format!("triangle {k} is degenerate")));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
        }
        let mut lookup: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for (l, slot) in te.iter_mut().enumerate() {
                let kk = key(t[(l + 1) % 3], t[(l + 2) % 3]);
                let id = match lookup.get(&kk) {
                    Some(&id) => {
                        let e = &mut edges[id];
                        if e.right.is_some() {
                            return Err(Error::InvalidInput(format!(
                                "edge {:?} has more than two incident triangles",
                                kk
                            )));
                        }
                        e.right = Some(k);
                        id
                    }
                    None => {
                        let id = edges.len();
                        edges.push(Edge { vertices: kk, left: k, right: None, tag: None });
                        lookup.insert(kk, id);
                        id
                    }
                };
                *slot = id;
            }
            tri_edges.push(te);
        }
        for e in edges.iter_mut().filter(|e| e.right.is_none()) {
            match boundary_tags.get(&e.vertices) {
                Some(&tag) => e.tag = Some(tag),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "boundary edge {:?} has no boundary tag",
                        e.vertices
                    )))
                }
            }
        }
        for k in boundary_tags.keys() {
            match lookup.get(k) {
                Some(&id) if edges[id].right.is_none() => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "tagged edge {:?} is not a boundary edge",
                        k
                    )))
                }
            }
        }
        Ok(Self { vertices, triangles, edges, tri_edges, boundary_tags, generation })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Global edge ids of the local edges of triangle `k`.
    pub fn triangle_edges(&self, k: usize) -> [usize; 3] {
        self.tri_edges[k]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn boundary_tags(&self) -> &BTreeMap<[usize; 2], BoundaryTag> {
        &self.boundary_tags
    }

    pub fn coords(&self, k: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.coords(k);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|k| self.area(k)).sum()
    }

    pub fn centroid(&self, k: usize) -> [f64; 2] {
        let [a, b, c] = self.coords(k);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        dist2(self.vertices[a], self.vertices[b]).sqrt()
    }

    /// Whether local edge `l` of triangle `k` runs from the lower to the higher vertex index.
    pub fn local_edge_aligned(&self, k: usize, l: usize) -> bool {
        let t = self.triangles[k];
        t[(l + 1) % 3] < t[(l + 2) % 3]
    }

    /// Whether triangle `k` owns the fixed normal of its local edge `l`.
    pub fn owns_edge_normal(&self, k: usize, l: usize) -> bool {
        self.edges[self.tri_edges[k][l]].left == k
    }

    /// Total length of boundary edges carrying `tag`.
    pub fn boundary_length(&self, tag: BoundaryTag) -> f64 {
        (0..self.num_edges())
            .filter(|&e| self.edges[e].tag == Some(tag))
            .map(|e| self.edge_length(e))
            .sum()
    }

    /// Returns a copy with every boundary edge retagged by `f(midpoint)`.
    pub fn retagged(&self, f: impl Fn([f64; 2]) -> BoundaryTag) -> Self {
        let mut tags = BTreeMap::new();
        for e in self.edges.iter().filter(|e| e.is_boundary()) {
            let [a, b] = e.vertices;
            let (p, q) = (self.vertices[a], self.vertices[b]);
            tags.insert(e.vertices, f([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]));
        }
        let mut m = Self::assemble(self.vertices.clone(), self.triangles.clone(), tags, self.generation)
            .expect("retagging keeps the mesh valid");
        m.generation = self.generation;
        m
    }

    /// Relabels vertices and triangles: new vertex `vperm[i]` is old vertex `i`, new triangle
    /// `tperm[k]` is old triangle `k`. Used to check numbering invariance.
    pub fn renumbered(&self, vperm: &[usize], tperm: &[usize]) -> Result<Self> {
        if vperm.len() != self.num_vertices() || tperm.len() != self.num_triangles() {
            return Err(Error::InvalidInput("permutation length mismatch".into()));
        }
        let mut vertices = vec![[0.0; 2]; self.num_vertices()];
        for (i, &j) in vperm.iter().enumerate() {
            vertices[j] = self.vertices[i];
        }
        let mut triangles = vec![[0; 3]; self.num_triangles()];
        for (k, &j) in tperm.iter().enumerate() {
            let t = self.triangles[k];
            triangles[j] = [vperm[t[0]], vperm[t[1]], vperm[t[2]]];
        }
        let tags = self
            .boundary_tags
            .iter()
            .map(|(k, &t)| (key(vperm[k[0]], vperm[k[1]]), t))
            .collect();
        Self::assemble(vertices, triangles, tags, self.generation)
    }

    pub fn skeleton(&self) -> Skeleton {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| {
                let t = self.triangles[e.left];
                let l = self.tri_edges[e.left].iter().position(|&x| x == id).unwrap();
                // outward normal of the left triangle along its local edge l
                let p = self.vertices[t[(l + 1) % 3]];
                let q = self.vertices[t[(l + 2) % 3]];
                let d = [q[0] - p[0], q[1] - p[1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                SkeletonEdge {
                    vertices: e.vertices,
                    normal: [d[1] / len, -d[0] / len],
                    length: len,
                    left: e.left,
                    right: e.right,
                    tag: e.tag,
                }
            })
            .collect();
        Skeleton { edges }
    }

    /// Newest-vertex bisection of the marked triangles plus the conforming closure.
    pub fn refine(&self, marked: &[usize]) -> Result<Self> {
        let mut edge_marks = vec![false; self.num_edges()];
        for &k in marked {
            if k >= self.num_triangles() {
                return Err(Error::InvalidInput(format!("marked triangle {k} does not exist")));
            }
            edge_marks[self.tri_edges[k][0]] = true;
        }
        self.bisect_marked_edges(edge_marks)
    }

    /// Bisects every edge once; each triangle becomes four.
    pub fn uniform_refine(&self) -> Self {
        self.bisect_marked_edges(vec![true; self.num_edges()])
            .expect("uniform refinement of a valid mesh")
    }

    fn bisect_marked_edges(&self, mut edge_marks: Vec<bool>) -> Result<Self> {
        if !edge_marks.iter().any(|&m| m) {
            let mut same = self.clone();
            same.generation += 1;
            return Ok(same);
        }
        // closure: a triangle with any marked edge must have its refinement edge marked
        loop {
            let mut changed = false;
            for te in &self.tri_edges {
                if !edge_marks[te[0]] && (edge_marks[te[1]] || edge_marks[te[2]]) {
                    edge_marks[te[0]] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut vertices = self.vertices.clone();
        let mut midpoint: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut tags = BTreeMap::new();
        for (id, e) in self.edges.iter().enumerate() {
            let [a, b] = e.vertices;
            if edge_marks[id] {
                let m = vertices.len();
                let (p, q) = (self.vertices[a], self.vertices[b]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                midpoint.insert(e.vertices, m);
                if let Some(tag) = e.tag {
                    tags.insert(key(a, m), tag);
                    tags.insert(key(m, b), tag);
                }
            } else if let Some(tag) = e.tag {
                tags.insert(e.vertices, tag);
            }
        }
        fn bisect(t: [usize; 3], mid: &BTreeMap<[usize; 2], usize>, out: &mut Vec<[usize; 3]>) {
            match mid.get(&key(t[1], t[2])) {
                Some(&m) => {
                    bisect([m, t[0], t[1]], mid, out);
                    bisect([m, t[2], t[0]], mid, out);
                }
                None => out.push(t),
            }
        }
        let mut triangles = Vec::with_capacity(2 * self.num_triangles());
        for &t in &self.triangles {
            bisect(t, &midpoint, &mut triangles);
        }
        Self::assemble(vertices, triangles, tags, self.generation + 1)
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..self.num_triangles() {
            let c = self.coords(k);
            for i in 0..3 {
                let (p, q, r) = (c[i], c[(i + 1) % 3], c[(i + 2) % 3]);
                let u = [q[0] - p[0], q[1] - p[1]];
                let v = [r[0] - p[0], r[1] - p[1]];
                let cos = (u[0] * v[0] + u[1] * v[1])
                    / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
                best = best.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    /// Brute-force audit: number of (vertex, edge) pairs where the vertex lies strictly inside
    /// the edge. Zero for a conforming mesh.
    pub fn hanging_vertex_count(&self) -> usize {
        let mut count = 0;
        for e in &self.edges {
            let [a, b] = e.vertices;
            let (p, q) = (self.vertices[a], self.vertices[b]);
            let d = [q[0] - p[0], q[1] - p[1]];
            let l2 = d[0] * d[0] + d[1] * d[1];
            for (i, &v) in self.vertices.iter().enumerate() {
                if i == a || i == b {
                    continue;
                }
                let w = [v[0] - p[0], v[1] - p[1]];
                let t = (w[0] * d[0] + w[1] * d[1]) / l2;
                let cross = w[0] * d[1] - w[1] * d[0];
                if t > 1e-12 && t < 1.0 - 1e-12 && cross.abs() <= 1e-12 * l2 {
                    count += 1;
                }
            }
        }
        count
    }

    /// Legacy VTK unstructured grid with optional per-cell scalar fields.
    pub fn to_vtk(&self, cell_data: &[(&str, &[f64])]) -> Result<String> {
        for (name, data) in cell_data {
            if data.len() != self.num_triangles() {
                return Err(Error::InvalidInput(format!(
                    "cell field {name} has {} values for {} cells",
                    data.len(),
                    self.num_triangles()
                )));
            }
        }
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0");
        let _ = writeln!(s, "elastodpg mesh generation {}", self.generation);
        let _ = writeln!(s, "ASCII");
        let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {} double", self.num_vertices());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e} 0", v[0], v[1]);
        }
        let nt = self.num_triangles();
        let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {nt}");
        for _ in 0..nt {
            let _ = writeln!(s, "5");
        }
        let _ = writeln!(s, "CELL_DATA {nt}");
        let _ = writeln!(s, "SCALARS generation int 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for _ in 0..nt {
            let _ = writeln!(s, "{}", self.generation);
        }
        for (name, data) in cell_data {
            let _ = writeln!(s, "SCALARS {name} double 1");
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for v in data.iter() {
                let _ = writeln!(s, "{v:.16e}");
            }
        }
        Ok(s)
    }

    pub fn write_vtk(&self, path: &Path, cell_data: &[(&str, &[f64])]) -> Result<()> {
        let text = self.to_vtk(cell_data)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Unit square split into `n × n` cells of two triangles each; the whole boundary is Γ0.
pub fn build_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidInput("square mesh needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let lower = [id(i, j), id(i + 1, j), id(i + 1, j + 1)];
            let upper = [id(i, j), id(i + 1, j + 1), id(i, j + 1)];
            triangles.push(longest_edge_first(lower, &vertices));
            triangles.push(longest_edge_first(upper, &vertices));
        }
    }
    let mut tags = BTreeMap::new();
    for i in 0..n {
        tags.insert(key(id(i, 0), id(i + 1, 0)), BoundaryTag::Gamma0);
        tags.insert(key(id(i, n), id(i + 1, n)), BoundaryTag::Gamma0);
        tags.insert(key(id(0, i), id(0, i + 1)), BoundaryTag::Gamma0);
        tags.insert(key(id(n, i), id(n, i + 1)), BoundaryTag::Gamma0);
    }
    Mesh::new(vertices, triangles, tags)
}

/// L-shape made of three unit squares with the re-entrant corner at the origin and the
/// re-entrant edges along θ = ±3π/4, each unit square cut into `n × n` cells.
///
/// The two re-entrant edges are Γ0; the rest of the boundary is Γ1.
pub fn build_lshape_mesh_with(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidInput("L-shape mesh needs n >= 1".into()));
    }
    // Built on [-1,1]² minus [-1,0)² in (a, b), then mapped by x = (a+b)/√2, y = (a−b)/√2.
    let m = 2 * n;
    let h = 1.0 / n as f64;
    let inside_cell = |i: usize, j: usize| !(i < n && j < n);
    let mut index = vec![usize::MAX; (m + 1) * (m + 1)];
    let mut ab = Vec::new();
    for j in 0..=m {
        for i in 0..=m {
            let touches = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))]
                .iter()
                .any(|&(ci, cj)| ci < m && cj < m && inside_cell(ci, cj));
            if touches {
                index[j * (m + 1) + i] = ab.len();
                ab.push([-1.0 + i as f64 * h, -1.0 + j as f64 * h]);
            }
        }
    }
    let id = |i: usize, j: usize| index[j * (m + 1) + i];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let vertices: Vec<[f64; 2]> = ab
        .iter()
        .map(|p| {
            let x = s * (p[0] + p[1]);
            let y = s * (p[0] - p[1]);
            [if x.abs() < 1e-15 { 0.0 } else { x }, if y.abs() < 1e-15 { 0.0 } else { y }]
        })
        .collect();
    let mut triangles = Vec::new();
    for j in 0..m {
        for i in 0..m {
            if !inside_cell(i, j) {
                continue;
            }
            // the map reverses orientation, so list clockwise in (a, b)
            let lower = [id(i, j), id(i + 1, j + 1), id(i + 1, j)];
            let upper = [id(i, j), id(i, j + 1), id(i + 1, j + 1)];
            triangles.push(longest_edge_first(lower, &vertices));
            triangles.push(longest_edge_first(upper, &vertices));
        }
    }
    let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for t in &triangles {
        for l in 0..3 {
            *count.entry(key(t[(l + 1) % 3], t[(l + 2) % 3])).or_default() += 1;
        }
    }
    let mut tags = BTreeMap::new();
    for (k, c) in count {
        if c != 1 {
            continue;
        }
        let (p, q) = (ab[k[0]], ab[k[1]]);
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let reentrant = (mid[0].abs() < 1e-12 && mid[1] < 0.0) || (mid[1].abs() < 1e-12 && mid[0] < 0.0);
        tags.insert(k, if reentrant { BoundaryTag::Gamma0 } else { BoundaryTag::Gamma1 });
    }
    Mesh::new(vertices, triangles, tags)
}

/// Coarsest L-shape mesh: six triangles.
pub fn build_lshape_mesh() -> Mesh {
    build_lshape_mesh_with(1).expect("coarse L-shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonEdge {
    pub vertices: [usize; 2],
    /// Unit normal pointing out of the lower-indexed incident triangle.
    pub normal: [f64; 2],
    pub length: f64,
    pub left: usize,
    pub right: Option<usize>,
    pub tag: Option<BoundaryTag>,
}

/// The unrepeated edges of a mesh with their fixed normals.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub edges: Vec<SkeletonEdge>,
}

impl Skeleton {
    pub fn num_interior(&self) -> usize {
        self.edges.iter().filter(|e| e.right.is_some()).count()
    }

    pub fn num_boundary(&self) -> usize {
        self.edges.len() - self.num_interior()
    }
}
