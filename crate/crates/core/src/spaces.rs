//! Discrete spaces on a mesh: element-to-global dof maps, orientation signs, essential
//! constraints and the reference bases behind them.
//!
//! Global dofs are laid out component-major: dof `c * n_scalar + s` is scalar dof `s` of
//! component `c`. Local element functions are ordered the same way, `c * n_local + s`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::poly::{self, ScalarBasis, VectorBasis};
use crate::quadrature::line_rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    H1,
    Hdiv,
    /// Discontinuous vector field (2 components).
    L2Vector,
    /// Discontinuous symmetric tensor (3 components: xx, yy, xy).
    L2Sym,
    /// Discontinuous skew tensor (1 component).
    L2Skew,
    /// Discontinuous full tensor (4 components, row-major).
    L2Full,
    TraceH12,
    TraceHm12,
    BrokenH1,
    BrokenHdiv,
}

impl SpaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpaceKind::H1 => "H1",
            SpaceKind::Hdiv => "Hdiv",
            SpaceKind::L2Vector => "L2vec",
            SpaceKind::L2Sym => "L2sym",
            SpaceKind::L2Skew => "L2skew",
            SpaceKind::L2Full => "L2full",
            SpaceKind::TraceH12 => "TraceH12",
            SpaceKind::TraceHm12 => "TraceHm12",
            SpaceKind::BrokenH1 => "BrokenH1",
            SpaceKind::BrokenHdiv => "BrokenHdiv",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            SpaceKind::H1,
            SpaceKind::Hdiv,
            SpaceKind::L2Vector,
            SpaceKind::L2Sym,
            SpaceKind::L2Skew,
            SpaceKind::L2Full,
            SpaceKind::TraceH12,
            SpaceKind::TraceHm12,
            SpaceKind::BrokenH1,
            SpaceKind::BrokenHdiv,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn components(&self) -> usize {
        match self {
            SpaceKind::H1 | SpaceKind::Hdiv | SpaceKind::L2Vector => 2,
            SpaceKind::L2Sym => 3,
            SpaceKind::L2Skew => 1,
            SpaceKind::L2Full | SpaceKind::BrokenHdiv => 4,
            SpaceKind::TraceH12 | SpaceKind::TraceHm12 | SpaceKind::BrokenH1 => 2,
        }
    }

    pub fn is_trace(&self) -> bool {
        matches!(self, SpaceKind::TraceH12 | SpaceKind::TraceHm12)
    }
}

/// Unit-norm tensors (row-major) for the components of [`SpaceKind::L2Sym`].
pub const SYM_TENSORS: [[f64; 4]; 3] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0],
];

/// Unit-norm skew tensor for [`SpaceKind::L2Skew`].
pub const SKEW_TENSOR: [f64; 4] =
    [0.0, std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2, 0.0];

/// Row-major unit tensor for component `c` of an [`SpaceKind::L2Full`] or broken H(div) field.
pub fn full_tensor(c: usize) -> [f64; 4] {
    let mut t = [0.0; 4];
    t[c] = 1.0;
    t
}

/// The reference basis behind a space.
#[derive(Debug, Clone)]
pub enum RefBasis {
    Lagrange(ScalarBasis),
    Ortho(ScalarBasis),
    RaviartThomas(VectorBasis),
    /// Per-edge orthonormal Legendre polynomials of the given degree.
    EdgeLegendre(usize),
}

/// Affine map from the reference triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub origin: [f64; 2],
    /// Columns are the edge vectors `b − a` and `c − a`.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// `J^{-T}`.
    pub jinv_t: [[f64; 2]; 2],
}

impl ElementGeometry {
    pub fn new(c: [[f64; 2]; 3]) -> Self {
        let jac = [[c[1][0] - c[0][0], c[2][0] - c[0][0]], [c[1][1] - c[0][1], c[2][1] - c[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jinv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        Self { origin: c[0], jac, det, jinv_t }
    }

    pub fn of(mesh: &Mesh, k: usize) -> Self {
        Self::new(mesh.coords(k))
    }

    pub fn map(&self, xh: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xh[0] + self.jac[0][1] * xh[1],
            self.origin[1] + self.jac[1][0] * xh[0] + self.jac[1][1] * xh[1],
        ]
    }

    /// Reference coordinates of a physical point.
    pub fn inverse_map(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // J^{-1} = (J^{-T})^T
        [
            self.jinv_t[0][0] * d[0] + self.jinv_t[1][0] * d[1],
            self.jinv_t[0][1] * d[0] + self.jinv_t[1][1] * d[1],
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jinv_t[0][0] * g[0] + self.jinv_t[0][1] * g[1],
            self.jinv_t[1][0] * g[0] + self.jinv_t[1][1] * g[1],
        ]
    }

    /// Contravariant Piola transform `J v̂ / det J`.
    pub fn piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            (self.jac[0][0] * v[0] + self.jac[0][1] * v[1]) / self.det,
            (self.jac[1][0] * v[0] + self.jac[1][1] * v[1]) / self.det,
        ]
    }

    /// Inverse Piola transform `det J · J^{-1} v`.
    pub fn inverse_piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.det * (self.jinv_t[0][0] * v[0] + self.jinv_t[1][0] * v[1]),
            self.det * (self.jinv_t[0][1] * v[0] + self.jinv_t[1][1] * v[1]),
        ]
    }
}

/// Physical values of one scalar or vector local basis function at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasisValue {
    /// Scalar value, or the vector value of a Raviart–Thomas function.
    pub v: [f64; 2],
    /// Gradient of a scalar function; unused for vector functions.
    pub g: [f64; 2],
    /// Divergence of a vector function.
    pub div: f64,
}

#[derive(Debug, Clone)]
pub struct DofSpace {
    pub kind: SpaceKind,
    /// Polynomial degree: H¹ and H(div) order `p` (H(div) is `RT_{p−1}`), L² degree, trace
    /// degree (`p` for H^{1/2}, `p − 1` for H^{−1/2}), broken test degree.
    pub order: usize,
    pub components: usize,
    pub basis: Arc<RefBasis>,
    n_scalar: usize,
    n_local: usize,
    element_dofs: Vec<Vec<usize>>,
    element_signs: Vec<Vec<f64>>,
    constrained: Vec<bool>,
    values: Vec<f64>,
}

impl DofSpace {
    pub fn ndofs(&self) -> usize {
        self.components * self.n_scalar
    }

    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    /// Local scalar functions per element (per component).
    pub fn n_local(&self) -> usize {
        self.n_local
    }

    /// Local functions per element over all components.
    pub fn local_dim(&self) -> usize {
        self.components * self.n_local
    }

    pub fn num_elements(&self) -> usize {
        self.element_dofs.len()
    }

    /// Scalar global dofs of element `k` in local order.
    pub fn element_dofs(&self, k: usize) -> &[usize] {
        &self.element_dofs[k]
    }

    pub fn element_signs(&self, k: usize) -> &[f64] {
        &self.element_signs[k]
    }

    /// Global dof and sign of local function `i` (component-major) of element `k`.
    pub fn local_to_global(&self, k: usize, i: usize) -> (usize, f64) {
        let (c, s) = (i / self.n_local, i % self.n_local);
        (c * self.n_scalar + self.element_dofs[k][s], self.element_signs[k][s])
    }

    pub fn is_constrained(&self, g: usize) -> bool {
        self.constrained[g]
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn num_constrained(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count()
    }

    /// Prescribed values (meaningful on constrained dofs only).
    pub fn prescribed(&self) -> &[f64] {
        &self.values
    }

    pub fn set_prescribed(&mut self, g: usize, value: f64) {
        self.values[g] = value;
    }

    /// Local coefficients of element `k` (signs applied) from a global vector.
    pub fn gather(&self, k: usize, global: &[f64]) -> Vec<f64> {
        (0..self.local_dim())
            .map(|i| {
                let (g, s) = self.local_to_global(k, i);
                s * global[g]
            })
            .collect()
    }

    /// Physical values of the local scalar (or vector) functions at reference point `xh`.
    /// Trace bases are not volume functions; use [`DofSpace::eval_edge`] for them.
    pub fn eval(&self, geo: &ElementGeometry, xh: [f64; 2]) -> Vec<BasisValue> {
        eval_basis(&self.basis, geo, xh)
    }

    /// Values of the local functions at parameter `t` of local edge `l` (reference direction).
    pub fn eval_edge(&self, mesh: &Mesh, k: usize, geo: &ElementGeometry, l: usize, t: f64) -> Vec<BasisValue> {
        match self.basis.as_ref() {
            RefBasis::EdgeLegendre(deg) => {
                let per = deg + 1;
                let len = mesh.edge_length(mesh.triangle_edges(k)[l]);
                let mut out = vec![BasisValue::default(); 3 * per];
                for j in 0..per {
                    out[l * per + j].v[0] = poly::legendre_q(j, t) / len.sqrt();
                }
                out
            }
            RefBasis::Lagrange(_) if self.kind == SpaceKind::TraceH12 => {
                let mut v = eval_basis(&self.basis, geo, poly::ref_edge_point(l, t));
                v.truncate(self.n_local);
                v
            }
            _ => eval_basis(&self.basis, geo, poly::ref_edge_point(l, t)),
        }
    }
}

/// Physical basis values for any volume reference basis.
pub fn eval_basis(basis: &RefBasis, geo: &ElementGeometry, xh: [f64; 2]) -> Vec<BasisValue> {
    match basis {
        RefBasis::Lagrange(b) => {
            let (v, g) = b.values_grads(xh[0], xh[1]);
            v.iter().zip(&g).map(|(&v, &g)| BasisValue { v: [v, 0.0], g: geo.grad(g), div: 0.0 }).collect()
        }
        RefBasis::Ortho(b) => {
            let s = 1.0 / geo.det.sqrt();
            let (v, g) = b.values_grads(xh[0], xh[1]);
            v.iter()
                .zip(&g)
                .map(|(&v, &g)| {
                    let pg = geo.grad(g);
                    BasisValue { v: [s * v, 0.0], g: [s * pg[0], s * pg[1]], div: 0.0 }
                })
                .collect()
        }
        RefBasis::RaviartThomas(b) => {
            let (vx, vy, div) = b.values_div(xh[0], xh[1]);
            (0..b.dim())
                .map(|i| BasisValue { v: geo.piola([vx[i], vy[i]]), g: [0.0; 2], div: div[i] / geo.det })
                .collect()
        }
        RefBasis::EdgeLegendre(_) => Vec::new(),
    }
}

fn edge_sign(mesh: &Mesh, k: usize, l: usize) -> (f64, f64) {
    let sn = if mesh.owns_edge_normal(k, l) { 1.0 } else { -1.0 };
    let sd = if mesh.local_edge_aligned(k, l) { 1.0 } else { -1.0 };
    (sn, sd)
}

fn tagged_edges(mesh: &Mesh, tag: BoundaryTag) -> Vec<bool> {
    mesh.edges().iter().map(|e| e.tag == Some(tag)).collect()
}

/// Continuous numbering of vertices and edge nodes shared by H¹ and H^{1/2} trace spaces.
fn continuous_numbering(mesh: &Mesh, p: usize, with_interior: bool) -> (usize, Vec<Vec<usize>>, Vec<bool>) {
    let nv = mesh.num_vertices();
    let ne = mesh.num_edges();
    let per_edge = p - 1;
    let n_int = if with_interior && p >= 3 { (p - 1) * (p - 2) / 2 } else { 0 };
    let n_scalar = nv + ne * per_edge + mesh.num_triangles() * n_int;
    let mut dofs = Vec::with_capacity(mesh.num_triangles());
    for k in 0..mesh.num_triangles() {
        let t = mesh.triangles()[k];
        let te = mesh.triangle_edges(k);
        let mut d: Vec<usize> = t.to_vec();
        for l in 0..3 {
            let aligned = mesh.local_edge_aligned(k, l);
            for i in 0..per_edge {
                let gi = if aligned { i } else { per_edge - 1 - i };
                d.push(nv + te[l] * per_edge + gi);
            }
        }
        for i in 0..n_int {
            d.push(nv + ne * per_edge + k * n_int + i);
        }
        dofs.push(d);
    }
    // scalar dofs lying on Γ0 edges
    let mut on_gamma0 = vec![false; n_scalar];
    for (id, e) in mesh.edges().iter().enumerate() {
        if e.tag == Some(BoundaryTag::Gamma0) {
            on_gamma0[e.vertices[0]] = true;
            on_gamma0[e.vertices[1]] = true;
            for i in 0..per_edge {
                on_gamma0[nv + id * per_edge + i] = true;
            }
        }
    }
    (n_scalar, dofs, on_gamma0)
}

fn expand(flags: &[bool], components: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(flags.len() * components);
    for _ in 0..components {
        out.extend_from_slice(flags);
    }
    out
}

/// Continuous Lagrange space of order `p` with two components.
pub fn h1_space(mesh: &Mesh, p: usize, gamma0_constrained: bool) -> Result<DofSpace> {
    if p == 0 {
        return Err(Error::InvalidInput("H1 space needs p >= 1".into()));
    }
    let (n_scalar, dofs, on_g0) = continuous_numbering(mesh, p, true);
    let flags = if gamma0_constrained { on_g0 } else { vec![false; n_scalar] };
    let n_local = (p + 1) * (p + 2) / 2;
    let signs = vec![vec![1.0; n_local]; dofs.len()];
    let constrained = expand(&flags, 2);
    Ok(DofSpace {
        kind: SpaceKind::H1,
        order: p,
        components: 2,
        basis: Arc::new(RefBasis::Lagrange(ScalarBasis::lagrange(p))),
        n_scalar,
        n_local,
        element_dofs: dofs,
        element_signs: signs,
        values: vec![0.0; constrained.len()],
        constrained,
    })
}

/// Raviart–Thomas space `RT_{p−1}` per row of a 2×2 tensor (normal traces of degree `p − 1`).
pub fn hdiv_space(mesh: &Mesh, p: usize, gamma1_constrained: bool) -> Result<DofSpace> {
    if p == 0 {
        return Err(Error::InvalidInput("H(div) space needs p >= 1".into()));
    }
    let k = p - 1;
    let (per_edge, n_int) = poly::rt_dof_layout(k);
    let ne = mesh.num_edges();
    let n_scalar = ne * per_edge + mesh.num_triangles() * n_int;
    let mut dofs = Vec::new();
    let mut signs = Vec::new();
    for t in 0..mesh.num_triangles() {
        let te = mesh.triangle_edges(t);
        let mut d = Vec::with_capacity(3 * per_edge + n_int);
        let mut s = Vec::with_capacity(3 * per_edge + n_int);
        for l in 0..3 {
            let (sn, sd) = edge_sign(mesh, t, l);
            for j in 0..per_edge {
                d.push(te[l] * per_edge + j);
                s.push(sn * sd.powi(j as i32));
            }
        }
        for i in 0..n_int {
            d.push(ne * per_edge + t * n_int + i);
            s.push(1.0);
        }
        dofs.push(d);
        signs.push(s);
    }
    let mut flags = vec![false; n_scalar];
    if gamma1_constrained {
        for (id, on) in tagged_edges(mesh, BoundaryTag::Gamma1).into_iter().enumerate() {
            if on {
                for j in 0..per_edge {
                    flags[id * per_edge + j] = true;
                }
            }
        }
    }
    let constrained = expand(&flags, 2);
    Ok(DofSpace {
        kind: SpaceKind::Hdiv,
        order: p,
        components: 2,
        basis: Arc::new(RefBasis::RaviartThomas(VectorBasis::raviart_thomas(k))),
        n_scalar,
        n_local: 3 * per_edge + n_int,
        element_dofs: dofs,
        element_signs: signs,
        values: vec![0.0; constrained.len()],
        constrained,
    })
}

fn discontinuous(mesh: &Mesh, kind: SpaceKind, degree: usize) -> DofSpace {
    let n_local = (degree + 1) * (degree + 2) / 2;
    let nt = mesh.num_triangles();
    let dofs = (0..nt).map(|k| (k * n_local..(k + 1) * n_local).collect()).collect();
    let components = kind.components();
    DofSpace {
        kind,
        order: degree,
        components,
        basis: Arc::new(RefBasis::Ortho(ScalarBasis::orthonormal(degree))),
        n_scalar: nt * n_local,
        n_local,
        element_dofs: dofs,
        element_signs: vec![vec![1.0; n_local]; nt],
        constrained: vec![false; nt * n_local * components],
        values: vec![0.0; nt * n_local * components],
    }
}

/// Element-wise polynomials of degree `degree`, physically orthonormal per element.
pub fn l2_space(mesh: &Mesh, degree: usize, kind: SpaceKind) -> Result<DofSpace> {
    match kind {
        SpaceKind::L2Vector | SpaceKind::L2Sym | SpaceKind::L2Skew | SpaceKind::L2Full => {
            Ok(discontinuous(mesh, kind, degree))
        }
        _ => Err(Error::InvalidInput(format!("{} is not an L2 kind", kind.name()))),
    }
}

/// Broken test space of degree `q`: vector-valued for [`SpaceKind::BrokenH1`], full
/// tensor-valued for [`SpaceKind::BrokenHdiv`].
pub fn broken_test_space(mesh: &Mesh, kind: SpaceKind, q: usize) -> Result<DofSpace> {
    if q == 0 {
        return Err(Error::InvalidInput("broken test space needs order >= 1".into()));
    }
    match kind {
        SpaceKind::BrokenH1 | SpaceKind::BrokenHdiv => Ok(discontinuous(mesh, kind, q)),
        _ => Err(Error::InvalidInput(format!("{} is not a broken kind", kind.name()))),
    }
}

/// The two interface spaces: continuous degree-`p` traces (Γ0 constrained) and per-edge
/// degree-`p − 1` normal-stress traces (Γ1 constrained).
pub fn trace_spaces(mesh: &Mesh, p: usize) -> Result<(DofSpace, DofSpace)> {
    if p == 0 {
        return Err(Error::InvalidInput("trace spaces need p >= 1".into()));
    }
    let (n_scalar, dofs, on_g0) = continuous_numbering(mesh, p, false);
    let n_local = 3 + 3 * (p - 1);
    let h12 = DofSpace {
        kind: SpaceKind::TraceH12,
        order: p,
        components: 2,
        basis: Arc::new(RefBasis::Lagrange(ScalarBasis::lagrange(p))),
        n_scalar,
        n_local,
        element_signs: vec![vec![1.0; n_local]; dofs.len()],
        element_dofs: dofs,
        constrained: expand(&on_g0, 2),
        values: vec![0.0; 2 * n_scalar],
    };

    let per = p;
    let ne = mesh.num_edges();
    let mut edofs = Vec::new();
    let mut esigns = Vec::new();
    for t in 0..mesh.num_triangles() {
        let te = mesh.triangle_edges(t);
        let mut d = Vec::new();
        let mut s = Vec::new();
        for l in 0..3 {
            let (sn, sd) = edge_sign(mesh, t, l);
            for j in 0..per {
                d.push(te[l] * per + j);
                s.push(sn * sd.powi(j as i32));
            }
        }
        edofs.push(d);
        esigns.push(s);
    }
    let mut flags = vec![false; ne * per];
    for (id, on) in tagged_edges(mesh, BoundaryTag::Gamma1).into_iter().enumerate() {
        if on {
            for j in 0..per {
                flags[id * per + j] = true;
            }
        }
    }
    let hm12 = DofSpace {
        kind: SpaceKind::TraceHm12,
        order: p - 1,
        components: 2,
        basis: Arc::new(RefBasis::EdgeLegendre(p - 1)),
        n_scalar: ne * per,
        n_local: 3 * per,
        element_dofs: edofs,
        element_signs: esigns,
        constrained: expand(&flags, 2),
        values: vec![0.0; 2 * ne * per],
    };
    Ok((h12, hm12))
}

/// Drops all essential constraints (for the unconstrained variants used in the inf-sup lab).
pub fn without_constraints(mut s: DofSpace) -> DofSpace {
    s.constrained.iter_mut().for_each(|c| *c = false);
    s.values.iter_mut().for_each(|v| *v = 0.0);
    s
}

/// Physical positions of the scalar nodes of an H¹ or H^{1/2} space.
pub fn node_positions(space: &DofSpace, mesh: &Mesh) -> Vec<[f64; 2]> {
    let nodes = poly::lagrange_nodes(space.order);
    let mut pos = vec![[f64::NAN; 2]; space.n_scalar()];
    for k in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, k);
        for (s, &g) in space.element_dofs(k).iter().enumerate() {
            pos[g] = geo.map(nodes[s]);
        }
    }
    pos
}

/// Nodal interpolation into an H¹ (or H^{1/2}) space.
pub fn interpolate_nodal(space: &DofSpace, mesh: &Mesh, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let pos = node_positions(space, mesh);
    let n = space.n_scalar();
    let mut out = vec![0.0; 2 * n];
    for (s, &x) in pos.iter().enumerate() {
        let v = f(x);
        out[s] = v[0];
        out[n + s] = v[1];
    }
    out
}

/// Prescribes constrained nodal dofs of an H¹ or H^{1/2} space from `u0`.
pub fn lift_nodal(space: &mut DofSpace, mesh: &Mesh, u0: impl Fn([f64; 2]) -> [f64; 2]) {
    let vals = interpolate_nodal(space, mesh, u0);
    for (g, v) in vals.into_iter().enumerate() {
        if space.constrained[g] {
            space.values[g] = v;
        }
    }
}

/// Flux moments `∫_E (σ_r · n_E) q_j(t_E) ds` of a tensor field against the fixed edge normal.
fn edge_flux_moments(
    mesh: &Mesh,
    sk: &crate::mesh::SkeletonEdge,
    per_edge: usize,
    flux: &dyn Fn([f64; 2], [f64; 2]) -> [f64; 2],
) -> Vec<[f64; 2]> {
    let (a, b) = (mesh.vertices()[sk.vertices[0]], mesh.vertices()[sk.vertices[1]]);
    let (tq, wq) = line_rule(2 * per_edge + 8);
    let mut m = vec![[0.0; 2]; per_edge];
    for (&t, &w) in tq.iter().zip(&wq) {
        let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let g = flux(x, sk.normal);
        for (j, mj) in m.iter_mut().enumerate() {
            let q = poly::legendre_q(j, t) * w * sk.length;
            mj[0] += g[0] * q;
            mj[1] += g[1] * q;
        }
    }
    m
}

/// Prescribes the Γ1 normal-trace dofs of an H(div) space from the traction `g(x, n)` with
/// `n` the outward normal.
pub fn lift_hdiv_traction(space: &mut DofSpace, mesh: &Mesh, g: impl Fn([f64; 2], [f64; 2]) -> [f64; 2]) {
    let per = space.order;
    let n = space.n_scalar();
    let skeleton = mesh.skeleton();
    for (e, sk) in skeleton.edges.iter().enumerate() {
        if sk.tag != Some(BoundaryTag::Gamma1) {
            continue;
        }
        let m = edge_flux_moments(mesh, sk, per, &g);
        for (j, mj) in m.iter().enumerate() {
            let d = e * per + j;
            space.values[d] = mj[0];
            space.values[n + d] = mj[1];
        }
    }
}

/// Canonical Raviart–Thomas interpolant of a tensor field (rows are the RT vector fields).
pub fn interpolate_hdiv(space: &DofSpace, mesh: &Mesh, sigma: impl Fn([f64; 2]) -> [f64; 4]) -> Vec<f64> {
    let per = space.order;
    let n = space.n_scalar();
    let mut out = vec![0.0; 2 * n];
    let flux = |x: [f64; 2], nn: [f64; 2]| {
        let s = sigma(x);
        [s[0] * nn[0] + s[1] * nn[1], s[2] * nn[0] + s[3] * nn[1]]
    };
    for (e, sk) in mesh.skeleton().edges.iter().enumerate() {
        for (j, mj) in edge_flux_moments(mesh, sk, per, &flux).iter().enumerate() {
            out[e * per + j] = mj[0];
            out[n + e * per + j] = mj[1];
        }
    }
    let k = per - 1;
    if k > 0 {
        let inner = ScalarBasis::orthonormal(k - 1);
        let rule = crate::quadrature::triangle_rule(2 * per + 6);
        let (per_edge, n_int) = poly::rt_dof_layout(k);
        for t in 0..mesh.num_triangles() {
            let geo = ElementGeometry::of(mesh, t);
            let dofs = space.element_dofs(t);
            let mut mom = vec![[0.0; 2]; n_int];
            for i in 0..rule.len() {
                let xh = rule.xy(i);
                let s = sigma(geo.map(xh));
                let psi = inner.values(xh[0], xh[1]);
                for r in 0..2 {
                    let vh = geo.inverse_piola([s[2 * r], s[2 * r + 1]]);
                    for (c, &vc) in vh.iter().enumerate() {
                        for (m, &pm) in psi.iter().enumerate() {
                            mom[c * inner.dim() + m][r] += rule.weights[i] * vc * pm;
                        }
                    }
                }
            }
            for (i, mi) in mom.iter().enumerate() {
                let d = dofs[3 * per_edge + i];
                out[d] = mi[0];
                out[n + d] = mi[1];
            }
        }
    }
    out
}

/// Evaluates the scalar components of a global field at reference point `xh` of element `k`:
/// for scalar bases returns `components` values, for H(div) the 2×2 tensor row-major.
pub fn eval_field(space: &DofSpace, mesh: &Mesh, k: usize, coeffs: &[f64], xh: [f64; 2]) -> FieldValue {
    let geo = ElementGeometry::of(mesh, k);
    let local = space.gather(k, coeffs);
    let vals = space.eval(&geo, xh);
    let nl = space.n_local();
    let mut fv = FieldValue::default();
    match space.basis.as_ref() {
        RefBasis::RaviartThomas(_) => {
            for r in 0..2 {
                for (s, b) in vals.iter().enumerate() {
                    let c = local[r * nl + s];
                    fv.tensor[2 * r] += c * b.v[0];
                    fv.tensor[2 * r + 1] += c * b.v[1];
                    fv.div[r] += c * b.div;
                }
            }
        }
        _ => {
            for comp in 0..space.components {
                for (s, b) in vals.iter().enumerate() {
                    let c = local[comp * nl + s];
                    fv.values[comp] += c * b.v[0];
                    fv.grads[comp][0] += c * b.g[0];
                    fv.grads[comp][1] += c * b.g[1];
                }
            }
            match space.kind {
                SpaceKind::L2Sym => {
                    for (comp, t) in SYM_TENSORS.iter().enumerate() {
                        for e in 0..4 {
                            fv.tensor[e] += fv.values[comp] * t[e];
                        }
                    }
                }
                SpaceKind::L2Skew => {
                    for e in 0..4 {
                        fv.tensor[e] = fv.values[0] * SKEW_TENSOR[e];
                    }
                }
                SpaceKind::L2Full | SpaceKind::BrokenHdiv => {
                    fv.tensor.copy_from_slice(&fv.values[..4]);
                }
                _ => {}
            }
        }
    }
    fv
}

/// Point values of a discrete field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldValue {
    pub values: [f64; 4],
    pub grads: [[f64; 2]; 4],
    pub tensor: [f64; 4],
    pub div: [f64; 2],
}

/// Element-wise L² projection of a field given as component values.
pub fn project_l2(space: &DofSpace, mesh: &Mesh, f: impl Fn([f64; 2]) -> Vec<f64>) -> Vec<f64> {
    let rule = crate::quadrature::triangle_rule(2 * space.order + 8);
    let nl = space.n_local();
    let n = space.n_scalar();
    let mut out = vec![0.0; space.ndofs()];
    for k in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, k);
        let dofs = space.element_dofs(k);
        for i in 0..rule.len() {
            let xh = rule.xy(i);
            let w = rule.weights[i] * geo.det;
            let fx = f(geo.map(xh));
            let vals = space.eval(&geo, xh);
            for c in 0..space.components {
                for s in 0..nl {
                    out[c * n + dofs[s]] += w * fx[c] * vals[s].v[0];
                }
            }
        }
    }
    out
}

/// Components of a full tensor in the [`SpaceKind::L2Sym`] / [`SpaceKind::L2Skew`] bases.
pub fn sym_components(t: &[f64; 4]) -> Vec<f64> {
    SYM_TENSORS.iter().map(|s| (0..4).map(|e| s[e] * t[e]).sum()).collect()
}

pub fn skew_component(t: &[f64; 4]) -> f64 {
    (0..4).map(|e| SKEW_TENSOR[e] * t[e]).sum()
}
