//! Formulation descriptors and per-element assembly.
//!
//! Every bilinear form here is written as `b(x, y) = Σ_points w · z(x) · t(y)` where `t(y)` is
//! a fixed feature vector of a test function and `z(x)` the dual features produced by a trial
//! function through the formulation's coupling. Folding `√w` into both sides turns the
//! element blocks into plain matrix products: `B = T Zᵀ`, `G = T Tᵀ`, `l = T L`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::material::{compliance_full, stiffness_full, MaterialParams};
use crate::mesh::{BoundaryTag, Mesh};
use crate::poly;
use crate::quadrature::{line_rule, triangle_rule, QuadratureRule};
use crate::spaces::{
    broken_test_space, h1_space, hdiv_space, l2_space, lift_hdiv_traction, lift_nodal, trace_spaces, DofSpace,
    ElementGeometry, RefBasis, SpaceKind, SKEW_TENSOR, SYM_TENSORS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formulation {
    Strong,
    Ultraweak,
    DualMixed,
    Mixed,
    Primal,
}

impl Formulation {
    pub const ALL: [Formulation; 5] =
        [Formulation::Strong, Formulation::Ultraweak, Formulation::DualMixed, Formulation::Mixed, Formulation::Primal];

    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Strong => "strong",
            Formulation::Ultraweak => "ultraweak",
            Formulation::DualMixed => "dualmixed",
            Formulation::Mixed => "mixed",
            Formulation::Primal => "primal",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Displacement error norm used in convergence studies.
    pub fn error_norm(&self) -> ErrorNorm {
        match self {
            Formulation::Ultraweak | Formulation::Mixed => ErrorNorm::L2,
            _ => ErrorNorm::H1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    L2,
    H1,
}

/// What a slot represents inside the bilinear forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    /// Stress in H(div) (two Raviart–Thomas rows).
    SigmaHdiv,
    /// Stress in L², symmetric.
    SigmaL2,
    /// Displacement in H¹.
    UH1,
    /// Displacement in L².
    UL2,
    /// Infinitesimal rotation (skew).
    Omega,
    /// Displacement trace û.
    UHat,
    /// Normal-stress trace σ̂ₙ.
    SigmaHatN,
    /// Vector test function with gradient (H¹-type).
    VH1,
    /// Tensor test function with divergence (H(div)-type).
    TauHdiv,
    /// Tensor L² test function (full, symmetric or skew per the space kind).
    TauL2,
    /// Vector L² test function.
    VL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestNorm {
    BrokenH1,
    BrokenHdiv,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSlot {
    pub name: &'static str,
    pub field: Field,
    pub kind: SpaceKind,
    /// Whether the slot carries essential boundary constraints.
    pub constrained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestSlot {
    pub name: &'static str,
    pub field: Field,
    pub kind: SpaceKind,
    pub norm: TestNorm,
}

impl TestSlot {
    pub fn is_l2(&self) -> bool {
        self.norm == TestNorm::L2
    }
}

/// Trial and test slots of a broken formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulationSpec {
    pub id: Formulation,
    pub trial_slots: Vec<TrialSlot>,
    pub test_slots: Vec<TestSlot>,
}

const fn trial(name: &'static str, field: Field, kind: SpaceKind, constrained: bool) -> TrialSlot {
    TrialSlot { name, field, kind, constrained }
}

const fn test(name: &'static str, field: Field, kind: SpaceKind, norm: TestNorm) -> TestSlot {
    TestSlot { name, field, kind, norm }
}

impl FormulationSpec {
    pub fn new(id: Formulation) -> Self {
        use Field::*;
        use SpaceKind as K;
        let sigma_hdiv = trial("sigma", SigmaHdiv, K::Hdiv, true);
        let sigma_l2 = trial("sigma", SigmaL2, K::L2Sym, false);
        let u_h1 = trial("u", UH1, K::H1, true);
        let u_l2 = trial("u", UL2, K::L2Vector, false);
        let omega = trial("omega", Omega, K::L2Skew, false);
        let u_hat = trial("u_hat", UHat, K::TraceH12, true);
        let s_hat = trial("sigma_hat_n", SigmaHatN, K::TraceHm12, true);
        let v_h1 = test("v", VH1, K::BrokenH1, TestNorm::BrokenH1);
        let tau_hdiv = test("tau", TauHdiv, K::BrokenHdiv, TestNorm::BrokenHdiv);
        let v_l2 = test("v", VL2, K::L2Vector, TestNorm::L2);
        let (trial_slots, test_slots) = match id {
            // τ and w are merged into one full-tensor L² slot
            Formulation::Strong => {
                (vec![sigma_hdiv, u_h1], vec![test("tau_w", TauL2, K::L2Full, TestNorm::L2), v_l2])
            }
            Formulation::Ultraweak => (vec![sigma_l2, u_l2, omega, u_hat, s_hat], vec![tau_hdiv, v_h1]),
            Formulation::DualMixed => {
                (vec![sigma_l2, u_h1, s_hat], vec![test("tau", TauL2, K::L2Sym, TestNorm::L2), v_h1])
            }
            Formulation::Mixed => (
                vec![sigma_hdiv, u_l2, omega, u_hat],
                vec![tau_hdiv, v_l2, test("w", TauL2, K::L2Skew, TestNorm::L2)],
            ),
            Formulation::Primal => (vec![u_h1, s_hat], vec![v_h1]),
        };
        Self { id, trial_slots, test_slots }
    }

    pub fn has_traces(&self) -> bool {
        self.trial_slots.iter().any(|s| s.kind.is_trace())
    }

    pub fn has_l2_tests(&self) -> bool {
        self.test_slots.iter().any(|s| s.is_l2())
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.trial_slots.iter().position(|s| s.name == name)
    }
}

/// Body force, boundary displacement (Γ0) and traction (Γ1) with the material.
#[derive(Clone)]
pub struct ProblemData {
    pub material: MaterialParams,
    pub body_force: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
    pub displacement: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
    /// Traction `g(x, n)` for the outward normal `n`.
    pub traction: Arc<dyn Fn([f64; 2], [f64; 2]) -> [f64; 2] + Send + Sync>,
}

impl ProblemData {
    /// Homogeneous data for the given body force.
    pub fn homogeneous(material: MaterialParams, f: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self {
            material,
            body_force: Arc::new(f),
            displacement: Arc::new(|_| [0.0; 2]),
            traction: Arc::new(|_, _| [0.0; 2]),
        }
    }
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData").field("material", &self.material).finish_non_exhaustive()
    }
}

/// Trial spaces of a formulation at order `p`, with boundary data lifted into the
/// constrained dofs. Normal-stress traces stay homogeneous on Γ1; the traction enters the load.
pub fn trial_spaces(spec: &FormulationSpec, mesh: &Mesh, p: usize, data: &ProblemData) -> Result<Vec<DofSpace>> {
    if p == 0 {
        return Err(Error::InvalidInput("order p must be >= 1".into()));
    }
    let (h12, hm12) = if spec.has_traces() { trace_spaces(mesh, p).map(|(a, b)| (Some(a), Some(b)))? } else { (None, None) };
    spec.trial_slots
        .iter()
        .map(|slot| {
            let s = match slot.field {
                Field::SigmaHdiv => {
                    let mut s = hdiv_space(mesh, p, true)?;
                    lift_hdiv_traction(&mut s, mesh, |x, n| (data.traction)(x, n));
                    s
                }
                Field::UH1 => {
                    let mut s = h1_space(mesh, p, true)?;
                    lift_nodal(&mut s, mesh, |x| (data.displacement)(x));
                    s
                }
                Field::UHat => {
                    let mut s = h12.clone().expect("trace space");
                    lift_nodal(&mut s, mesh, |x| (data.displacement)(x));
                    s
                }
                Field::SigmaHatN => hm12.clone().expect("trace space"),
                Field::SigmaL2 | Field::UL2 | Field::Omega => l2_space(mesh, p - 1, slot.kind)?,
                _ => return Err(Error::InvalidInput(format!("{:?} is not a trial field", slot.field))),
            };
            Ok(s)
        })
        .collect()
}

/// Broken test spaces: H¹/H(div)-type slots at degree `q`, L² slots at degree `q_l2`.
/// With `skip_l2` the L² slots are left out (they are then handled exactly).
pub fn test_spaces(spec: &FormulationSpec, mesh: &Mesh, q: usize, q_l2: usize, skip_l2: bool) -> Result<Vec<(TestSlot, DofSpace)>> {
    let mut out = Vec::new();
    for slot in &spec.test_slots {
        if slot.is_l2() {
            if !skip_l2 {
                out.push((*slot, l2_space(mesh, q_l2, slot.kind)?));
            }
        } else {
            out.push((*slot, broken_test_space(mesh, slot.kind, q)?));
        }
    }
    Ok(out)
}

// Raw trial features: u, ∇u (row-major), σ (row-major), div σ, ω.
pub const NY: usize = 16;
pub const YU: usize = 0;
pub const YGU: usize = 2;
pub const YS: usize = 6;
pub const YDS: usize = 10;
pub const YW: usize = 12;

// Test features: v, ∇v, τ (H(div)), div τ, τ (L²), v (L²).
pub const NT: usize = 18;
pub const TV: usize = 0;
pub const TGV: usize = 2;
pub const TTD: usize = 6;
pub const TDT: usize = 10;
pub const TTL: usize = 12;
pub const TVL: usize = 16;

// Edge features: v and τ·n (outward).
pub const NE: usize = 4;
const EV: usize = 0;
const EN: usize = 2;

fn sym(t: [f64; 4]) -> [f64; 4] {
    let o = 0.5 * (t[1] + t[2]);
    [t[0], o, o, t[3]]
}

fn skew(t: [f64; 4]) -> [f64; 4] {
    let o = 0.5 * (t[1] - t[2]);
    [0.0, o, -o, 0.0]
}

/// Dual test features `z(y)` of raw trial features under formulation `id`.
pub fn couple(id: Formulation, y: &[f64; NY], m: &MaterialParams) -> [f64; NT] {
    let mut z = [0.0; NT];
    let s: [f64; 4] = y[YS..YS + 4].try_into().unwrap();
    let gu: [f64; 4] = y[YGU..YGU + 4].try_into().unwrap();
    let cgu = stiffness_full(&gu, m);
    let constitutive = |z: &mut [f64; NT]| {
        let cs = compliance_full(&s, m);
        for e in 0..4 {
            z[TTD + e] = cs[e] + y[YW + e];
        }
        z[TDT] = y[YU];
        z[TDT + 1] = y[YU + 1];
    };
    match id {
        Formulation::Strong => {
            for e in 0..4 {
                z[TTL + e] = s[e] - cgu[e];
            }
            z[TVL] = -y[YDS];
            z[TVL + 1] = -y[YDS + 1];
        }
        Formulation::Ultraweak => {
            constitutive(&mut z);
            z[TGV..TGV + 4].copy_from_slice(&s);
        }
        Formulation::DualMixed => {
            let d = sym([s[0] - cgu[0], s[1] - cgu[1], s[2] - cgu[2], s[3] - cgu[3]]);
            z[TTL..TTL + 4].copy_from_slice(&d);
            z[TGV..TGV + 4].copy_from_slice(&s);
        }
        Formulation::Mixed => {
            constitutive(&mut z);
            z[TVL] = -y[YDS];
            z[TVL + 1] = -y[YDS + 1];
            z[TTL..TTL + 4].copy_from_slice(&skew(s));
        }
        Formulation::Primal => {
            z[TGV..TGV + 4].copy_from_slice(&cgu);
        }
    }
    z
}

/// Reference-element values of a basis function before the affine map.
#[derive(Debug, Clone, Copy, Default)]
struct RefValue {
    v: [f64; 2],
    g: [f64; 2],
    div: f64,
}

fn tabulate(basis: &RefBasis, pts: &[[f64; 2]]) -> Vec<Vec<RefValue>> {
    pts.iter()
        .map(|x| match basis {
            RefBasis::Lagrange(b) | RefBasis::Ortho(b) => {
                let (v, g) = b.values_grads(x[0], x[1]);
                v.into_iter().zip(g).map(|(v, g)| RefValue { v: [v, 0.0], g, div: 0.0 }).collect()
            }
            RefBasis::RaviartThomas(b) => {
                let (vx, vy, d) = b.values_div(x[0], x[1]);
                (0..b.dim()).map(|i| RefValue { v: [vx[i], vy[i]], g: [0.0; 2], div: d[i] }).collect()
            }
            RefBasis::EdgeLegendre(_) => Vec::new(),
        })
        .collect()
}

/// Quadrature points of an element assembly: volume points and per-edge points.
#[derive(Debug, Clone)]
pub struct AssemblyRules {
    pub volume: QuadratureRule,
    pub edge_t: Vec<f64>,
    pub edge_w: Vec<f64>,
}

impl AssemblyRules {
    pub fn new(degree: usize) -> Self {
        let (edge_t, edge_w) = line_rule(degree);
        Self { volume: triangle_rule(degree), edge_t, edge_w }
    }

    pub fn ncols(&self) -> usize {
        self.volume.len() * NT + 3 * self.edge_t.len() * NE
    }

    pub fn n_volume_cols(&self) -> usize {
        self.volume.len() * NT
    }

    fn edge_col(&self, l: usize, j: usize) -> usize {
        self.n_volume_cols() + (l * self.edge_t.len() + j) * NE
    }
}

/// A space with its role and reference tabulations at the assembly points.
#[derive(Debug, Clone)]
pub struct SlotTable {
    pub field: Field,
    pub space: DofSpace,
    vol: Vec<Vec<RefValue>>,
    edge: Vec<Vec<Vec<RefValue>>>,
}

impl SlotTable {
    pub fn new(field: Field, space: DofSpace, rules: &AssemblyRules) -> Self {
        let pts: Vec<[f64; 2]> = (0..rules.volume.len()).map(|i| rules.volume.xy(i)).collect();
        let vol = tabulate(&space.basis, &pts);
        let edge = (0..3)
            .map(|l| {
                let ep: Vec<[f64; 2]> = rules.edge_t.iter().map(|&t| poly::ref_edge_point(l, t)).collect();
                match space.basis.as_ref() {
                    RefBasis::EdgeLegendre(deg) => {
                        let per = deg + 1;
                        rules
                            .edge_t
                            .iter()
                            .map(|&t| {
                                let mut row = vec![RefValue::default(); 3 * per];
                                for j in 0..per {
                                    row[l * per + j].v[0] = poly::legendre_q(j, t);
                                }
                                row
                            })
                            .collect()
                    }
                    _ => {
                        let mut tab = tabulate(&space.basis, &ep);
                        for row in &mut tab {
                            row.truncate(space.n_local());
                        }
                        tab
                    }
                }
            })
            .collect();
        Self { field, space, vol, edge }
    }

    fn map(&self, geo: &ElementGeometry, r: &RefValue) -> (f64, [f64; 2], [f64; 2], f64) {
        match self.space.basis.as_ref() {
            RefBasis::Lagrange(_) => (r.v[0], geo.grad(r.g), [0.0; 2], 0.0),
            RefBasis::Ortho(_) => {
                let s = 1.0 / geo.det.sqrt();
                let g = geo.grad(r.g);
                (s * r.v[0], [s * g[0], s * g[1]], [0.0; 2], 0.0)
            }
            RefBasis::RaviartThomas(_) => (0.0, [0.0; 2], geo.piola(r.v), r.div / geo.det),
            RefBasis::EdgeLegendre(_) => (r.v[0], [0.0; 2], [0.0; 2], 0.0),
        }
    }
}

/// Per-element geometric data used in assembly.
#[derive(Debug, Clone)]
pub struct ElementFrame {
    pub element: usize,
    pub geo: ElementGeometry,
    pub edge_len: [f64; 3],
    pub normal: [[f64; 2]; 3],
    pub edge_tag: [Option<BoundaryTag>; 3],
}

impl ElementFrame {
    pub fn new(mesh: &Mesh, k: usize) -> Self {
        let c = mesh.coords(k);
        let te = mesh.triangle_edges(k);
        let mut edge_len = [0.0; 3];
        let mut normal = [[0.0; 2]; 3];
        let mut edge_tag = [None; 3];
        for l in 0..3 {
            let (a, b) = (c[(l + 1) % 3], c[(l + 2) % 3]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            edge_len[l] = len;
            normal[l] = [d[1] / len, -d[0] / len];
            edge_tag[l] = mesh.edges()[te[l]].tag;
        }
        Self { element: k, geo: ElementGeometry::new(c), edge_len, normal, edge_tag }
    }
}

/// Raw trial features (`NY` per volume point) for the rows of one trial slot.
pub fn raw_trial_matrix(slot: &SlotTable, frame: &ElementFrame, rules: &AssemblyRules) -> DMatrix<f64> {
    let nq = rules.volume.len();
    let nl = slot.space.n_local();
    let comps = slot.space.components;
    let mut y = DMatrix::zeros(comps * nl, nq * NY);
    if slot.space.kind.is_trace() {
        return y;
    }
    for i in 0..nq {
        let sw = (rules.volume.weights[i] * frame.geo.det).sqrt();
        for s in 0..nl {
            let (v, g, vec, div) = slot.map(&frame.geo, &slot.vol[i][s]);
            for c in 0..comps {
                let row = c * nl + s;
                let col = i * NY;
                match slot.field {
                    Field::UH1 | Field::UL2 => {
                        y[(row, col + YU + c)] = sw * v;
                        y[(row, col + YGU + 2 * c)] = sw * g[0];
                        y[(row, col + YGU + 2 * c + 1)] = sw * g[1];
                    }
                    Field::SigmaHdiv => {
                        y[(row, col + YS + 2 * c)] = sw * vec[0];
                        y[(row, col + YS + 2 * c + 1)] = sw * vec[1];
                        y[(row, col + YDS + c)] = sw * div;
                    }
                    Field::SigmaL2 => {
                        for e in 0..4 {
                            y[(row, col + YS + e)] = sw * v * SYM_TENSORS[c][e];
                        }
                    }
                    Field::Omega => {
                        for e in 0..4 {
                            y[(row, col + YW + e)] = sw * v * SKEW_TENSOR[e];
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    // an L² displacement has no gradient
    if slot.field == Field::UL2 {
        for r in 0..y.nrows() {
            for i in 0..nq {
                for e in 0..4 {
                    y[(r, i * NY + YGU + e)] = 0.0;
                }
            }
        }
    }
    y
}

/// Dual features `Z` (rows: local trial functions of one slot, columns: assembly columns).
pub fn trial_dual_matrix(
    id: Formulation,
    slot: &SlotTable,
    frame: &ElementFrame,
    rules: &AssemblyRules,
    m: &MaterialParams,
) -> DMatrix<f64> {
    let nq = rules.volume.len();
    let nl = slot.space.n_local();
    let comps = slot.space.components;
    let rows = comps * nl;
    let mut z = DMatrix::zeros(rows, rules.ncols());
    match slot.field {
        Field::UHat | Field::SigmaHatN => {
            for l in 0..3 {
                let len = frame.edge_len[l];
                for (j, &w) in rules.edge_w.iter().enumerate() {
                    let sw = (w * len).sqrt();
                    let col = rules.edge_col(l, j);
                    for s in 0..nl {
                        let r = &slot.edge[l][j][s];
                        if r.v[0] == 0.0 {
                            continue;
                        }
                        for c in 0..comps {
                            if slot.field == Field::UHat {
                                z[(c * nl + s, col + EN + c)] = -sw * r.v[0];
                            } else {
                                z[(c * nl + s, col + EV + c)] = -sw * r.v[0] / len.sqrt();
                            }
                        }
                    }
                }
            }
        }
        _ => {
            let y = raw_trial_matrix(slot, frame, rules);
            for r in 0..rows {
                for i in 0..nq {
                    let yi: [f64; NY] = std::array::from_fn(|f| y[(r, i * NY + f)]);
                    if yi.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let zi = couple(id, &yi, m);
                    for f in 0..NT {
                        z[(r, i * NT + f)] = zi[f];
                    }
                }
            }
        }
    }
    z
}

/// Test features `T` (rows: local test functions of one slot).
pub fn test_feature_matrix(slot: &SlotTable, frame: &ElementFrame, rules: &AssemblyRules) -> DMatrix<f64> {
    let nq = rules.volume.len();
    let nl = slot.space.n_local();
    let comps = slot.space.components;
    let mut t = DMatrix::zeros(comps * nl, rules.ncols());
    let kind = slot.space.kind;
    let is_rt = matches!(slot.space.basis.as_ref(), RefBasis::RaviartThomas(_));
    for i in 0..nq {
        let sw = (rules.volume.weights[i] * frame.geo.det).sqrt();
        for s in 0..nl {
            let (v, g, vec, div) = slot.map(&frame.geo, &slot.vol[i][s]);
            for c in 0..comps {
                let row = c * nl + s;
                let col = i * NT;
                match slot.field {
                    Field::VH1 | Field::UH1 => {
                        t[(row, col + TV + c)] = sw * v;
                        t[(row, col + TGV + 2 * c)] = sw * g[0];
                        t[(row, col + TGV + 2 * c + 1)] = sw * g[1];
                    }
                    Field::TauHdiv if is_rt => {
                        t[(row, col + TTD + 2 * c)] = sw * vec[0];
                        t[(row, col + TTD + 2 * c + 1)] = sw * vec[1];
                        t[(row, col + TDT + c)] = sw * div;
                    }
                    Field::TauHdiv => {
                        // component c = (row r, column j) of a full tensor
                        let (r, j) = (c / 2, c % 2);
                        t[(row, col + TTD + c)] = sw * v;
                        t[(row, col + TDT + r)] = sw * g[j];
                    }
                    Field::TauL2 => {
                        let tensor = match kind {
                            SpaceKind::L2Sym => SYM_TENSORS[c],
                            SpaceKind::L2Skew => SKEW_TENSOR,
                            _ => crate::spaces::full_tensor(c),
                        };
                        for e in 0..4 {
                            t[(row, col + TTL + e)] = sw * v * tensor[e];
                        }
                    }
                    Field::VL2 => t[(row, col + TVL + c)] = sw * v,
                    _ => {}
                }
            }
        }
    }
    if matches!(slot.field, Field::VH1 | Field::UH1 | Field::TauHdiv) {
        for l in 0..3 {
            let len = frame.edge_len[l];
            let n = frame.normal[l];
            for (j, &w) in rules.edge_w.iter().enumerate() {
                let sw = (w * len).sqrt();
                let col = rules.edge_col(l, j);
                for s in 0..nl {
                    let r = &slot.edge[l][j][s];
                    let (v, _, vec, _) = slot.map(&frame.geo, r);
                    for c in 0..comps {
                        let row = c * nl + s;
                        match slot.field {
                            Field::TauHdiv if is_rt => {
                                t[(row, col + EN + c)] = sw * (vec[0] * n[0] + vec[1] * n[1]);
                            }
                            Field::TauHdiv => t[(row, col + EN + c / 2)] = sw * v * n[c % 2],
                            _ => t[(row, col + EV + c)] = sw * v,
                        }
                    }
                }
            }
        }
    }
    t
}

/// Load features `L`: the body force in the slot the formulation tests it with, plus the
/// Γ1 traction for formulations carrying a normal-stress trace.
pub fn load_features(spec: &FormulationSpec, frame: &ElementFrame, rules: &AssemblyRules, data: &ProblemData) -> DVector<f64> {
    let mut l = DVector::zeros(rules.ncols());
    let f_slot = match spec.id {
        Formulation::Strong | Formulation::Mixed => TVL,
        _ => TV,
    };
    for i in 0..rules.volume.len() {
        let sw = (rules.volume.weights[i] * frame.geo.det).sqrt();
        let f = (data.body_force)(frame.geo.map(rules.volume.xy(i)));
        l[i * NT + f_slot] = sw * f[0];
        l[i * NT + f_slot + 1] = sw * f[1];
    }
    if spec.trial_slots.iter().any(|s| s.field == Field::SigmaHatN) {
        for e in 0..3 {
            if frame.edge_tag[e] != Some(BoundaryTag::Gamma1) {
                continue;
            }
            for (j, (&t, &w)) in rules.edge_t.iter().zip(&rules.edge_w).enumerate() {
                let sw = (w * frame.edge_len[e]).sqrt();
                let x = frame.geo.map(poly::ref_edge_point(e, t));
                let g = (data.traction)(x, frame.normal[e]);
                let col = rules.edge_col(e, j);
                l[col + EV] = sw * g[0];
                l[col + EV + 1] = sw * g[1];
            }
        }
    }
    l
}

/// Columns carrying L² test features (for exact L² Riesz identification).
pub fn l2_columns(rules: &AssemblyRules) -> Vec<usize> {
    (0..rules.volume.len()).flat_map(|i| (TTL..NT).map(move |f| i * NT + f)).collect()
}

/// Column mask of the volume test features.
pub fn volume_columns(rules: &AssemblyRules) -> std::ops::Range<usize> {
    0..rules.n_volume_cols()
}

/// Per-element blocks of a broken formulation.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub element: usize,
    /// Test × field-trial block.
    pub b: DMatrix<f64>,
    /// Test × trace-trial block.
    pub bhat: DMatrix<f64>,
    /// Test Gram matrix.
    pub g: DMatrix<f64>,
    pub l: DVector<f64>,
}

/// Builds everything needed to assemble one formulation element by element.
#[derive(Debug, Clone)]
pub struct Assembler {
    pub spec: FormulationSpec,
    pub p: usize,
    pub rules: AssemblyRules,
    pub trial: Vec<SlotTable>,
    pub tests: Vec<(TestSlot, SlotTable)>,
    pub data: ProblemData,
}

impl Assembler {
    /// `q` is the degree of the H¹/H(div) test slots, `q_l2` of the L² ones; with `skip_l2`
    /// the L² test slots are omitted.
    pub fn new(
        spec: &FormulationSpec,
        mesh: &Mesh,
        p: usize,
        q: usize,
        q_l2: usize,
        skip_l2: bool,
        data: &ProblemData,
    ) -> Result<Self> {
        let trial_spaces = trial_spaces(spec, mesh, p, data)?;
        Self::with_trial_spaces(spec, mesh, p, trial_spaces, q, q_l2, skip_l2, data)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_trial_spaces(
        spec: &FormulationSpec,
        mesh: &Mesh,
        p: usize,
        trial_spaces: Vec<DofSpace>,
        q: usize,
        q_l2: usize,
        skip_l2: bool,
        data: &ProblemData,
    ) -> Result<Self> {
        let rules = AssemblyRules::new(2 * q.max(p).max(q_l2) + 2);
        let trial = spec
            .trial_slots
            .iter()
            .zip(trial_spaces)
            .map(|(slot, space)| SlotTable::new(slot.field, space, &rules))
            .collect();
        let tests = test_spaces(spec, mesh, q, q_l2, skip_l2)?
            .into_iter()
            .map(|(slot, space)| (slot, SlotTable::new(slot.field, space, &rules)))
            .collect();
        Ok(Self { spec: spec.clone(), p, rules, trial, tests, data: data.clone() })
    }

    pub fn trial_dims(&self) -> Vec<usize> {
        self.trial.iter().map(|s| s.space.local_dim()).collect()
    }

    /// `Z` for all trial slots stacked in slot order.
    pub fn trial_duals(&self, frame: &ElementFrame) -> DMatrix<f64> {
        let blocks: Vec<DMatrix<f64>> = self
            .trial
            .iter()
            .map(|s| trial_dual_matrix(self.spec.id, s, frame, &self.rules, &self.data.material))
            .collect();
        stack_rows(&blocks, self.rules.ncols())
    }

    /// `T` for all test slots stacked in slot order.
    pub fn test_features(&self, frame: &ElementFrame) -> DMatrix<f64> {
        let blocks: Vec<DMatrix<f64>> =
            self.tests.iter().map(|(_, s)| test_feature_matrix(s, frame, &self.rules)).collect();
        stack_rows(&blocks, self.rules.ncols())
    }

    pub fn load(&self, frame: &ElementFrame) -> DVector<f64> {
        load_features(&self.spec, frame, &self.rules, &self.data)
    }

    pub fn local_system(&self, mesh: &Mesh, k: usize) -> LocalSystem {
        let frame = ElementFrame::new(mesh, k);
        let z = self.trial_duals(&frame);
        let t = self.test_features(&frame);
        let lf = self.load(&frame);
        let b_all = &t * z.transpose();
        let n_field: usize = self
            .trial
            .iter()
            .filter(|s| !s.space.kind.is_trace())
            .map(|s| s.space.local_dim())
            .sum();
        let field_cols: Vec<usize> = self.column_ranges(false);
        let trace_cols: Vec<usize> = self.column_ranges(true);
        debug_assert_eq!(field_cols.len(), n_field);
        let b = b_all.select_columns(&field_cols);
        let bhat = b_all.select_columns(&trace_cols);
        let tv = t.columns(0, self.rules.n_volume_cols());
        let g = tv * tv.transpose();
        let l = &t * lf;
        LocalSystem { element: k, b, bhat, g, l }
    }

    fn column_ranges(&self, traces: bool) -> Vec<usize> {
        let mut out = Vec::new();
        let mut off = 0;
        for s in &self.trial {
            let d = s.space.local_dim();
            if s.space.kind.is_trace() == traces {
                out.extend(off..off + d);
            }
            off += d;
        }
        out
    }
}

pub fn stack_rows(blocks: &[DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, ncols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Volume-term block (test × field trial) of element `k`.
pub fn local_field_block(spec: &FormulationSpec, mesh: &Mesh, k: usize, data: &ProblemData, p: usize, dp: usize) -> Result<DMatrix<f64>> {
    Ok(Assembler::new(spec, mesh, p, p + dp, p - 1 + dp, false, data)?.local_system(mesh, k).b)
}

/// Trace-coupling block (test × trace trial) of element `k`; zero width without traces.
pub fn local_trace_block(spec: &FormulationSpec, mesh: &Mesh, k: usize, data: &ProblemData, p: usize, dp: usize) -> Result<DMatrix<f64>> {
    Ok(Assembler::new(spec, mesh, p, p + dp, p - 1 + dp, false, data)?.local_system(mesh, k).bhat)
}

/// Load vector of element `k` against its test functions.
pub fn local_load(spec: &FormulationSpec, mesh: &Mesh, k: usize, data: &ProblemData, p: usize, dp: usize) -> Result<DVector<f64>> {
    Ok(Assembler::new(spec, mesh, p, p + dp, p - 1 + dp, false, data)?.local_system(mesh, k).l)
}

/// Test-norm Gram matrix of element `k`.
pub fn local_gram(spec: &FormulationSpec, mesh: &Mesh, k: usize, data: &ProblemData, p: usize, dp: usize) -> Result<DMatrix<f64>> {
    Ok(Assembler::new(spec, mesh, p, p + dp, p - 1 + dp, false, data)?.local_system(mesh, k).g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_square_mesh;

    fn data() -> ProblemData {
        ProblemData::homogeneous(MaterialParams::unit(), |_| [0.0; 2])
    }

    #[test]
    fn spec_slots_match_formulations() {
        let s = FormulationSpec::new(Formulation::Strong);
        assert!(!s.has_traces());
        assert_eq!(s.trial_slots.len(), 2);
        let u = FormulationSpec::new(Formulation::Ultraweak);
        assert_eq!(u.trial_slots.len(), 5);
        assert!(u.test_slots.iter().all(|t| !t.is_l2()));
        let m = FormulationSpec::new(Formulation::Mixed);
        assert_eq!(m.test_slots.iter().filter(|t| t.is_l2()).count(), 2);
        let p = FormulationSpec::new(Formulation::Primal);
        assert_eq!(p.trial_slots[1].kind, SpaceKind::TraceHm12);
        for f in Formulation::ALL {
            assert_eq!(Formulation::from_name(f.name()), Some(f));
        }
    }

    #[test]
    fn strong_has_zero_width_trace_block() {
        let m = build_square_mesh(1).unwrap();
        let spec = FormulationSpec::new(Formulation::Strong);
        let bh = local_trace_block(&spec, &m, 0, &data(), 1, 1).unwrap();
        assert_eq!(bh.ncols(), 0);
    }

    #[test]
    fn gram_is_symmetric_positive_definite() {
        let m = build_square_mesh(2).unwrap();
        for f in Formulation::ALL {
            let spec = FormulationSpec::new(f);
            for k in [0, 3] {
                let g = local_gram(&spec, &m, k, &data(), 2, 1).unwrap();
                assert!((&g - g.transpose()).amax() < 1e-13 * g.amax().max(1.0));
                let ev = g.clone().symmetric_eigenvalues();
                assert!(ev.min() > 0.0, "{f:?}");
            }
        }
    }

    #[test]
    fn l2_gram_is_identity() {
        let m = build_square_mesh(2).unwrap();
        let spec = FormulationSpec::new(Formulation::Strong);
        let g = local_gram(&spec, &m, 1, &data(), 2, 1).unwrap();
        let n = g.nrows();
        assert!((g - DMatrix::identity(n, n)).amax() < 1e-12);
    }

    #[test]
    fn broken_h1_gram_of_constant_is_area() {
        let m = build_square_mesh(2).unwrap();
        let spec = FormulationSpec::new(Formulation::Primal);
        let g = local_gram(&spec, &m, 2, &data(), 1, 1).unwrap();
        // the first orthonormal function is the constant 1/√|K|; undo the normalization
        let area = m.area(2);
        assert!((g[(0, 0)] * area - area).abs() < 1e-14);
    }

    #[test]
    fn primal_rigid_translation_column_vanishes() {
        let m = build_square_mesh(1).unwrap();
        let spec = FormulationSpec::new(Formulation::Primal);
        let b = local_field_block(&spec, &m, 0, &data(), 2, 1).unwrap();
        // sum of the Lagrange functions of component 0 is the constant (1, 0)
        let nl = 6;
        let col: DVector<f64> = (0..nl).map(|s| b.column(s).clone_owned()).fold(DVector::zeros(b.nrows()), |a, c| a + c);
        assert!(col.amax() < 1e-13);
    }

    #[test]
    fn ultraweak_omega_block_matches_analytic_pairing() {
        let m = build_square_mesh(1).unwrap();
        let spec = FormulationSpec::new(Formulation::Ultraweak);
        let b = local_field_block(&spec, &m, 0, &data(), 1, 1).unwrap();
        // trial order p=1: σ (3), u (2), ω (1) constants; ω is column 5
        let area = m.area(0);
        // the orthonormal constants of trial and test are both 1/√|K|
        let nl = 6;
        for c in 0..4 {
            let expected = area * SKEW_TENSOR[c] / area;
            assert!((b[(c * nl, 5)] - expected).abs() < 1e-13, "c={c}");
        }
    }

    #[test]
    fn unit_body_force_against_constant_test() {
        // an element of unit area
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            [([0, 1], BoundaryTag::Gamma0), ([1, 2], BoundaryTag::Gamma0), ([0, 2], BoundaryTag::Gamma0)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let d = ProblemData::homogeneous(MaterialParams::unit(), |_| [1.0, 0.0]);
        let spec = FormulationSpec::new(Formulation::Primal);
        let l = local_load(&spec, &mesh, 0, &d, 1, 1).unwrap();
        // orthonormal constant is 1/√|K| = 1; the unnormalized constant test gives ∫ f = 1
        assert!((l[0] - 1.0).abs() < 1e-14);
        let zero = local_load(&spec, &mesh, 0, &data(), 1, 1).unwrap();
        assert_eq!(zero.amax(), 0.0);
    }

    #[test]
    fn polynomial_load_is_integrated_exactly() {
        let m = build_square_mesh(2).unwrap();
        let f = |x: [f64; 2]| [x[0].powi(3) * x[1] - 2.0 * x[1] * x[1], 1.0 + x[0] * x[1].powi(4)];
        let d = ProblemData::homogeneous(MaterialParams::unit(), f);
        let spec = FormulationSpec::new(Formulation::Primal);
        let l = local_load(&spec, &m, 3, &d, 2, 1).unwrap();
        let geo = ElementGeometry::of(&m, 3);
        let basis = crate::spaces::broken_test_space(&m, SpaceKind::BrokenH1, 3).unwrap();
        let rule = triangle_rule(30);
        let nl = basis.n_local();
        for c in 0..2 {
            for s in 0..nl {
                let mut q = 0.0;
                for i in 0..rule.len() {
                    let xh = rule.xy(i);
                    let v = basis.eval(&geo, xh)[s].v[0];
                    q += rule.weights[i] * geo.det * f(geo.map(xh))[c] * v;
                }
                assert!((l[c * nl + s] - q).abs() < 1e-13);
            }
        }
    }
}
