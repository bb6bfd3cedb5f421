//! Discrete inf-sup constants of the unbroken formulations, the auxiliary Poincaré-type and
//! Brezzi-type constants, and checks of the zero-jump pairing characterization.
//!
//! Everything here is dense and meant for tiny meshes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forms::{
    raw_trial_matrix, test_feature_matrix, trial_dual_matrix, AssemblyRules, ElementFrame, Field, Formulation, SlotTable,
    NY, YGU, YU, YW,
};
use crate::material::MaterialParams;
use crate::mesh::{BoundaryTag, Mesh};
use crate::poly;
use crate::spaces::{h1_space, hdiv_space, l2_space, trace_spaces, DofSpace, RefBasis, SpaceKind};

#[derive(Debug, Clone, PartialEq)]
pub struct InfSupReport {
    pub formulation: Formulation,
    pub generation: usize,
    pub p: usize,
    pub test_order: usize,
    pub trial_dofs: usize,
    pub test_dofs: usize,
    pub gamma_h: f64,
}

/// Test order used for the unbroken form of a formulation: `p + 1` for the strong,
/// ultraweak and mixed forms, `p` for the others.
pub fn default_test_order(f: Formulation, p: usize) -> usize {
    match f {
        Formulation::Strong | Formulation::Ultraweak | Formulation::Mixed => p + 1,
        Formulation::DualMixed | Formulation::Primal => p,
    }
}

/// Conforming trial and test spaces of the unbroken formulation. Essential conditions follow
/// the mesh tags: trial displacements and test functions `v` vanish on Γ0, normal components
/// of trial stresses and test tensors vanish on Γ1.
fn unbroken_spaces(f: Formulation, mesh: &Mesh, p: usize, q: usize) -> Result<(Vec<(Field, DofSpace)>, Vec<(Field, DofSpace)>)> {
    use Field::*;
    let trial = match f {
        Formulation::Strong => vec![(SigmaHdiv, hdiv_space(mesh, p, true)?), (UH1, h1_space(mesh, p, true)?)],
        Formulation::Ultraweak => vec![
            (SigmaL2, l2_space(mesh, p - 1, SpaceKind::L2Sym)?),
            (UL2, l2_space(mesh, p - 1, SpaceKind::L2Vector)?),
            (Omega, l2_space(mesh, p - 1, SpaceKind::L2Skew)?),
        ],
        Formulation::DualMixed => {
            vec![(SigmaL2, l2_space(mesh, p - 1, SpaceKind::L2Sym)?), (UH1, h1_space(mesh, p, true)?)]
        }
        Formulation::Mixed => vec![
            (SigmaHdiv, hdiv_space(mesh, p, true)?),
            (UL2, l2_space(mesh, p - 1, SpaceKind::L2Vector)?),
            (Omega, l2_space(mesh, p - 1, SpaceKind::L2Skew)?),
        ],
        Formulation::Primal => vec![(UH1, h1_space(mesh, p, true)?)],
    };
    let test = match f {
        Formulation::Strong => {
            vec![(TauL2, l2_space(mesh, q - 1, SpaceKind::L2Full)?), (VL2, l2_space(mesh, q - 1, SpaceKind::L2Vector)?)]
        }
        Formulation::Ultraweak => vec![(TauHdiv, hdiv_space(mesh, q, true)?), (VH1, h1_space(mesh, q, true)?)],
        Formulation::DualMixed => {
            vec![(TauL2, l2_space(mesh, q - 1, SpaceKind::L2Sym)?), (VH1, h1_space(mesh, q, true)?)]
        }
        Formulation::Mixed => vec![
            (TauHdiv, hdiv_space(mesh, q, true)?),
            (VL2, l2_space(mesh, q - 1, SpaceKind::L2Vector)?),
            (TauL2, l2_space(mesh, q - 1, SpaceKind::L2Skew)?),
        ],
        Formulation::Primal => vec![(VH1, h1_space(mesh, q, true)?)],
    };
    Ok((trial, test))
}

/// Global numbering of the free dofs of a list of spaces.
struct Numbering {
    offsets: Vec<usize>,
    free: Vec<Option<usize>>,
    n: usize,
}

impl Numbering {
    fn new(spaces: &[&DofSpace]) -> Self {
        let mut offsets = vec![0];
        let mut free = Vec::new();
        let mut n = 0;
        for s in spaces {
            for g in 0..s.ndofs() {
                if s.is_constrained(g) {
                    free.push(None);
                } else {
                    free.push(Some(n));
                    n += 1;
                }
            }
            offsets.push(free.len());
        }
        Self { offsets, free, n }
    }

    fn element_map(&self, spaces: &[&DofSpace], k: usize) -> Vec<Option<(usize, f64)>> {
        let mut out = Vec::new();
        for (s, sp) in spaces.iter().enumerate() {
            for i in 0..sp.local_dim() {
                let (g, sign) = sp.local_to_global(k, i);
                out.push(self.free[self.offsets[s] + g].map(|f| (f, sign)));
            }
        }
        out
    }
}

fn scatter_dense(m: &mut DMatrix<f64>, rows: &[Option<(usize, f64)>], cols: &[Option<(usize, f64)>], local: &DMatrix<f64>) {
    for (i, r) in rows.iter().enumerate() {
        let Some((gi, si)) = r else { continue };
        for (j, c) in cols.iter().enumerate() {
            let Some((gj, sj)) = c else { continue };
            m[(*gi, *gj)] += si * sj * local[(i, j)];
        }
    }
}

fn stack(blocks: Vec<DMatrix<f64>>) -> DMatrix<f64> {
    let ncols = blocks.first().map_or(0, |b| b.ncols());
    crate::forms::stack_rows(&blocks, ncols)
}

fn inverse_cholesky_factor(g: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let l = g.clone().cholesky().ok_or_else(|| Error::Eigen(format!("{what} Gram is not positive definite")))?.l();
    l.try_inverse().ok_or_else(|| Error::Eigen(format!("{what} Gram factor is singular")))
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn lower_factor(g: &DMatrix<f64>, what: &str) -> Result<faer::Mat<f64>> {
    let llt = to_faer(g).llt(faer::Side::Lower).map_err(|_| Error::Eigen(format!("{what} Gram is not positive definite")))?;
    Ok(llt.L().to_owned())
}

/// Smallest singular value of `L_Y⁻¹ B L_X⁻ᵀ`.
fn min_singular(b: &DMatrix<f64>, gx: &DMatrix<f64>, gy: &DMatrix<f64>) -> Result<f64> {
    use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
    if b.ncols() == 0 {
        return Err(Error::Eigen("empty trial space".into()));
    }
    if b.nrows() < b.ncols() {
        return Ok(0.0);
    }
    let lx = lower_factor(gx, "trial")?;
    let ly = lower_factor(gy, "test")?;
    let mut a = to_faer(b);
    solve_lower_triangular_in_place(ly.as_ref(), a.as_mut(), faer::Par::rayon(0));
    let mut at = a.transpose().to_owned();
    solve_lower_triangular_in_place(lx.as_ref(), at.as_mut(), faer::Par::rayon(0));
    let sv = at.singular_values().map_err(|_| Error::Eigen("SVD did not converge".into()))?;
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min).max(0.0))
}

/// Discrete inf-sup constant of the unbroken formulation at trial order `p` and test order `q`.
pub fn discrete_infsup_with(f: Formulation, mesh: &Mesh, material: &MaterialParams, p: usize, q: usize) -> Result<InfSupReport> {
    let (trial, test) = unbroken_spaces(f, mesh, p, q)?;
    let rules = AssemblyRules::new(2 * p.max(q) + 2);
    let trial: Vec<SlotTable> = trial.into_iter().map(|(fl, s)| SlotTable::new(fl, s, &rules)).collect();
    let test: Vec<SlotTable> = test.into_iter().map(|(fl, s)| SlotTable::new(fl, s, &rules)).collect();
    let xs: Vec<&DofSpace> = trial.iter().map(|s| &s.space).collect();
    let ys: Vec<&DofSpace> = test.iter().map(|s| &s.space).collect();
    let (nx, ny) = (Numbering::new(&xs), Numbering::new(&ys));
    let mut b = DMatrix::zeros(ny.n, nx.n);
    let mut gx = DMatrix::zeros(nx.n, nx.n);
    let mut gy = DMatrix::zeros(ny.n, ny.n);
    let nv = rules.n_volume_cols();
    for k in 0..mesh.num_triangles() {
        let frame = ElementFrame::new(mesh, k);
        let z = stack(trial.iter().map(|s| trial_dual_matrix(f, s, &frame, &rules, material)).collect());
        let y = stack(trial.iter().map(|s| raw_trial_matrix(s, &frame, &rules)).collect());
        let t = stack(test.iter().map(|s| test_feature_matrix(s, &frame, &rules)).collect());
        let tv = t.columns(0, nv);
        let zv = z.columns(0, nv);
        let (mx, my) = (nx.element_map(&xs, k), ny.element_map(&ys, k));
        scatter_dense(&mut b, &my, &mx, &(tv * zv.transpose()));
        scatter_dense(&mut gx, &mx, &mx, &(&y * y.transpose()));
        scatter_dense(&mut gy, &my, &my, &(tv * tv.transpose()));
    }
    let gamma_h = min_singular(&b, &gx, &gy)?;
    Ok(InfSupReport {
        formulation: f,
        generation: mesh.generation(),
        p,
        test_order: q,
        trial_dofs: nx.n,
        test_dofs: ny.n,
        gamma_h,
    })
}

pub fn discrete_infsup(f: Formulation, mesh: &Mesh, material: &MaterialParams, p: usize) -> Result<InfSupReport> {
    discrete_infsup_with(f, mesh, material, p, default_test_order(f, p))
}

/// Discrete estimates of the constants of the two auxiliary inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxiliaryConstants {
    /// `sup √(‖u‖² + ‖ω‖²) / ‖−∇u + ω‖` over `u ∈ H¹_{Γ0}` of order `p`, skew `ω` of degree `p − 1`.
    pub c_p: f64,
    /// The same with `ω = 0` (a discrete Poincaré–Friedrichs constant).
    pub c_p_no_rotation: f64,
    /// Inf-sup of `(u, div τ) + (ω, τ)` over L² pairs of degree `p − 1` against
    /// `τ ∈ H_{Γ1}(div)` of order `p + 1`.
    pub c_b: f64,
}

fn poincare_constant(mesh: &Mesh, p: usize, with_rotation: bool) -> Result<f64> {
    let rules = AssemblyRules::new(2 * p + 2);
    let mut slots = vec![SlotTable::new(Field::UH1, h1_space(mesh, p, true)?, &rules)];
    if with_rotation {
        slots.push(SlotTable::new(Field::Omega, l2_space(mesh, p - 1, SpaceKind::L2Skew)?, &rules));
    }
    let spaces: Vec<&DofSpace> = slots.iter().map(|s| &s.space).collect();
    let num = Numbering::new(&spaces);
    let mut a = DMatrix::zeros(num.n, num.n);
    let mut m = DMatrix::zeros(num.n, num.n);
    let nq = rules.volume.len();
    for k in 0..mesh.num_triangles() {
        let frame = ElementFrame::new(mesh, k);
        let y = stack(slots.iter().map(|s| raw_trial_matrix(s, &frame, &rules)).collect());
        let mut op = DMatrix::zeros(y.nrows(), 4 * nq);
        let mut l2 = DMatrix::zeros(y.nrows(), 6 * nq);
        for r in 0..y.nrows() {
            for i in 0..nq {
                for e in 0..4 {
                    op[(r, 4 * i + e)] = -y[(r, i * NY + YGU + e)] + y[(r, i * NY + YW + e)];
                    l2[(r, 6 * i + 2 + e)] = y[(r, i * NY + YW + e)];
                }
                l2[(r, 6 * i)] = y[(r, i * NY + YU)];
                l2[(r, 6 * i + 1)] = y[(r, i * NY + YU + 1)];
            }
        }
        let map = num.element_map(&spaces, k);
        scatter_dense(&mut a, &map, &map, &(&op * op.transpose()));
        scatter_dense(&mut m, &map, &map, &(&l2 * l2.transpose()));
    }
    let lm = inverse_cholesky_factor(&m, "L2")?;
    let s = &lm * a * lm.transpose();
    let s = 0.5 * (&s + s.transpose());
    let lmin = s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if lmin <= 0.0 {
        return Err(Error::Eigen("operator has a nontrivial kernel".into()));
    }
    Ok(1.0 / lmin.sqrt())
}

fn brezzi_constant(mesh: &Mesh, p: usize) -> Result<f64> {
    let rules = AssemblyRules::new(2 * (p + 1) + 2);
    let trial = [
        SlotTable::new(Field::UL2, l2_space(mesh, p - 1, SpaceKind::L2Vector)?, &rules),
        SlotTable::new(Field::Omega, l2_space(mesh, p - 1, SpaceKind::L2Skew)?, &rules),
    ];
    let test = [SlotTable::new(Field::TauHdiv, hdiv_space(mesh, p + 1, true)?, &rules)];
    let xs: Vec<&DofSpace> = trial.iter().map(|s| &s.space).collect();
    let ys: Vec<&DofSpace> = test.iter().map(|s| &s.space).collect();
    let (nx, ny) = (Numbering::new(&xs), Numbering::new(&ys));
    let mut b = DMatrix::zeros(ny.n, nx.n);
    let mut gx = DMatrix::zeros(nx.n, nx.n);
    let mut gy = DMatrix::zeros(ny.n, ny.n);
    let nv = rules.n_volume_cols();
    let m = MaterialParams::unit();
    for k in 0..mesh.num_triangles() {
        let frame = ElementFrame::new(mesh, k);
        // the mixed coupling of (u, ω) alone is (u, div τ) + (ω, τ)
        let z = stack(trial.iter().map(|s| trial_dual_matrix(Formulation::Mixed, s, &frame, &rules, &m)).collect());
        let y = stack(trial.iter().map(|s| raw_trial_matrix(s, &frame, &rules)).collect());
        let t = test_feature_matrix(&test[0], &frame, &rules);
        let tv = t.columns(0, nv);
        let (mx, my) = (nx.element_map(&xs, k), ny.element_map(&ys, k));
        scatter_dense(&mut b, &my, &mx, &(tv * z.columns(0, nv).transpose()));
        scatter_dense(&mut gx, &mx, &mx, &(&y * y.transpose()));
        scatter_dense(&mut gy, &my, &my, &(tv * tv.transpose()));
    }
    min_singular(&b, &gx, &gy)
}

pub fn auxiliary_constants(mesh: &Mesh, p: usize) -> Result<AuxiliaryConstants> {
    Ok(AuxiliaryConstants {
        c_p: poincare_constant(mesh, p, true)?,
        c_p_no_rotation: poincare_constant(mesh, p, false)?,
        c_b: brezzi_constant(mesh, p)?,
    })
}

/// Outcome of the jump-pairing checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroJumpReport {
    /// Largest `|⟨τ̂ₙ, v⟩_{∂T}|` over random conforming `v ∈ H¹_{Γ0}` and `τ̂ₙ` vanishing on Γ1.
    pub forward_h1: f64,
    /// Largest `|⟨τ·n, û⟩_{∂T}|` over random conforming `τ ∈ H_{Γ1}(div)` and `û` vanishing on Γ0.
    pub forward_hdiv: f64,
    /// Pairing of a global constant `v` with a random `τ̂ₙ` (all boundary tagged Γ1).
    pub constant_pairing: f64,
    /// `|pairing| / ‖jump‖` for a broken `v` with a jump on one interior edge.
    pub converse_h1: f64,
    /// `|pairing| / ‖jump‖` for a broken `τ` with a normal jump on one interior edge.
    pub converse_hdiv: f64,
    pub trials: usize,
}

impl ZeroJumpReport {
    pub fn passed(&self) -> bool {
        self.forward_h1 <= 1e-10
            && self.forward_hdiv <= 1e-10
            && self.constant_pairing <= 1e-12
            && self.converse_h1 >= 1e-3
            && self.converse_hdiv >= 1e-3
    }
}

/// `Σ_K a_Kᵀ (T_K Z_Kᵀ) b_K` over the edge columns, with the local coefficient vectors
/// supplied per element.
fn pairing(
    mesh: &Mesh,
    rules: &AssemblyRules,
    test: &SlotTable,
    trace: &SlotTable,
    local_test: impl Fn(usize) -> Vec<f64>,
    local_trace: impl Fn(usize) -> Vec<f64>,
) -> f64 {
    let m = MaterialParams::unit();
    let mut total = 0.0;
    for k in 0..mesh.num_triangles() {
        let frame = ElementFrame::new(mesh, k);
        let t = test_feature_matrix(test, &frame, rules);
        let z = trial_dual_matrix(Formulation::Primal, trace, &frame, rules, &m);
        let b = t * z.transpose();
        let (a, c) = (DVector::from_vec(local_test(k)), DVector::from_vec(local_trace(k)));
        total += a.dot(&(b * c));
    }
    total
}

fn random_free(space: &DofSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..space.ndofs()).map(|g| if space.is_constrained(g) { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect()
}

/// An interior edge as (element, local edge) of its left element.
fn interior_edge(mesh: &Mesh) -> Result<(usize, usize, f64)> {
    for k in 0..mesh.num_triangles() {
        let te = mesh.triangle_edges(k);
        for (l, &e) in te.iter().enumerate() {
            if !mesh.edges()[e].is_boundary() {
                return Ok((k, l, mesh.edge_length(e)));
            }
        }
    }
    Err(Error::InvalidInput("mesh has no interior edge".into()))
}

/// Forward and converse jump-pairing checks with `trials` random pairs per orientation.
/// The converse checks use quadratic spaces so that single-edge jumps are representable.
pub fn zero_jump_tests(mesh: &Mesh, p: usize, trials: usize, seed: u64) -> Result<ZeroJumpReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, hm12) = trace_spaces(mesh, p)?;
    let h1 = h1_space(mesh, p, true)?;
    let rules = AssemblyRules::new(2 * p + 4);
    let v_tab = SlotTable::new(Field::VH1, h1.clone(), &rules);
    let s_tab = SlotTable::new(Field::SigmaHatN, hm12.clone(), &rules);
    let (h12, _) = trace_spaces(mesh, p)?;
    let tau = hdiv_space(mesh, p, true)?;
    let tau_tab = SlotTable::new(Field::TauHdiv, tau.clone(), &rules);
    let u_tab = SlotTable::new(Field::UHat, h12.clone(), &rules);

    let mut forward_h1: f64 = 0.0;
    let mut forward_hdiv: f64 = 0.0;
    for _ in 0..trials {
        let v = random_free(&h1, &mut rng);
        let s = random_free(&hm12, &mut rng);
        let pr = pairing(mesh, &rules, &v_tab, &s_tab, |k| h1.gather(k, &v), |k| hm12.gather(k, &s));
        forward_h1 = forward_h1.max(pr.abs());
        let t = random_free(&tau, &mut rng);
        let u = random_free(&h12, &mut rng);
        let pr = pairing(mesh, &rules, &tau_tab, &u_tab, |k| tau.gather(k, &t), |k| h12.gather(k, &u));
        forward_hdiv = forward_hdiv.max(pr.abs());
    }

    // with Γ0 empty a global constant is admissible and pairs to zero with any admissible trace
    let all_g1 = mesh.retagged(|_| BoundaryTag::Gamma1);
    let (_, hm_free) = trace_spaces(&all_g1, p)?;
    let h1_free = h1_space(&all_g1, p, true)?;
    let ones: Vec<f64> = (0..h1_free.ndofs()).map(|g| if g < h1_free.n_scalar() { 1.0 } else { 0.0 }).collect();
    let s = random_free(&hm_free, &mut rng);
    let constant_pairing = pairing(
        &all_g1,
        &rules,
        &SlotTable::new(Field::VH1, h1_free.clone(), &rules),
        &SlotTable::new(Field::SigmaHatN, hm_free.clone(), &rules),
        |k| h1_free.gather(k, &ones),
        |k| hm_free.gather(k, &s),
    )
    .abs();

    let (converse_h1, converse_hdiv) = converse_checks(mesh, &mut rng)?;
    Ok(ZeroJumpReport { forward_h1, forward_hdiv, constant_pairing, converse_h1, converse_hdiv, trials })
}

fn converse_checks(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let p = 2;
    let rules = AssemblyRules::new(2 * p + 4);
    let (k0, l0, len) = interior_edge(mesh)?;
    let (h12, hm12) = trace_spaces(mesh, p)?;

    // broken v: conforming part plus the quadratic edge-node function of edge l0 on element k0
    let h1 = h1_space(mesh, p, true)?;
    let v = random_free(&h1, rng);
    let bump = 3 + l0 * (p - 1);
    let local_v = |k: usize| {
        let mut x = h1.gather(k, &v);
        if k == k0 {
            x[bump] += 1.0;
        }
        x
    };
    // the lowest-order trace on that edge
    let edge = mesh.triangle_edges(k0)[l0];
    let mut s = vec![0.0; hm12.ndofs()];
    s[edge * p] = 1.0;
    let pr = pairing(
        mesh,
        &rules,
        &SlotTable::new(Field::VH1, h1.clone(), &rules),
        &SlotTable::new(Field::SigmaHatN, without_constraint_copy(&hm12), &rules),
        local_v,
        |k| hm12.gather(k, &s),
    );
    // ‖4 λ_a λ_b‖ on an edge of length len
    let jump_v = 4.0 * (len / 30.0).sqrt();
    let converse_h1 = pr.abs() / jump_v;

    // broken τ: conforming part plus the first flux function of edge l0 on element k0, row 0
    let tau = hdiv_space(mesh, p, true)?;
    let t = random_free(&tau, rng);
    let local_t = |k: usize| {
        let mut x = tau.gather(k, &t);
        if k == k0 {
            x[l0 * p] += 1.0;
        }
        x
    };
    // the edge-node trace function of that edge, component 0
    let mut u = vec![0.0; h12.ndofs()];
    let (g, _) = h12.local_to_global(k0, bump);
    u[g] = 1.0;
    let pr = pairing(
        mesh,
        &rules,
        &SlotTable::new(Field::TauHdiv, tau.clone(), &rules),
        &SlotTable::new(Field::UHat, without_constraint_copy(&h12), &rules),
        local_t,
        |k| h12.gather(k, &u),
    );
    let jump_t = normal_jump_norm(&tau, mesh, k0, l0, &rules);
    Ok((converse_h1, pr.abs() / jump_t))
}

fn without_constraint_copy(s: &DofSpace) -> DofSpace {
    crate::spaces::without_constraints(s.clone())
}

/// `‖φ·n‖_{L²(e)}` of the first flux basis function of local edge `l` on element `k`.
fn normal_jump_norm(tau: &DofSpace, mesh: &Mesh, k: usize, l: usize, rules: &AssemblyRules) -> f64 {
    let RefBasis::RaviartThomas(_) = tau.basis.as_ref() else { return f64::NAN };
    let frame = ElementFrame::new(mesh, k);
    let n = frame.normal[l];
    let mut acc = 0.0;
    for (&t, &w) in rules.edge_t.iter().zip(&rules.edge_w) {
        let vals = tau.eval(&frame.geo, poly::ref_edge_point(l, t));
        let phi = vals[l * tau.order].v;
        acc += w * frame.edge_len[l] * (phi[0] * n[0] + phi[1] * n[1]).powi(2);
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_square_mesh;

    #[test]
    fn primal_is_stable_with_displacement_boundary() {
        let m = MaterialParams::unit();
        let mesh = build_square_mesh(2).unwrap();
        let r = discrete_infsup(Formulation::Primal, &mesh, &m, 1).unwrap();
        assert!(r.gamma_h > 1e-2);
        let free = mesh.retagged(|_| BoundaryTag::Gamma1);
        let r0 = discrete_infsup(Formulation::Primal, &free, &m, 1).unwrap();
        assert!(r0.gamma_h < 1e-6 * r.gamma_h, "{} {}", r0.gamma_h, r.gamma_h);
    }

    #[test]
    fn infsup_invariant_under_renumbering() {
        let m = MaterialParams::unit();
        let mesh = build_square_mesh(2).unwrap();
        let nt = mesh.num_triangles();
        let nv = mesh.num_vertices();
        let pm = mesh
            .renumbered(&(0..nv).map(|i| (i * 5 + 2) % nv).collect::<Vec<_>>(), &(0..nt).rev().collect::<Vec<_>>())
            .unwrap();
        for f in [Formulation::Primal, Formulation::Ultraweak] {
            let a = discrete_infsup(f, &mesh, &m, 1).unwrap().gamma_h;
            let b = discrete_infsup(f, &pm, &m, 1).unwrap().gamma_h;
            assert!((a - b).abs() < 1e-10, "{f:?} {a} {b}");
        }
    }

    #[test]
    fn auxiliary_constants_are_positive_and_ordered() {
        let mesh = build_square_mesh(2).unwrap();
        let c = auxiliary_constants(&mesh, 1).unwrap();
        assert!(c.c_p > 0.0 && c.c_p.is_finite());
        assert!(c.c_b > 0.0);
        // the constrained minimum of the quotient is at least the unconstrained one
        assert!(c.c_p_no_rotation <= c.c_p * (1.0 + 1e-12));
    }

    #[test]
    fn zero_jump_suite_passes() {
        let mesh = build_square_mesh(2).unwrap().retagged(|x| if x[0] < 1e-12 { BoundaryTag::Gamma0 } else { BoundaryTag::Gamma1 });
        let r = zero_jump_tests(&mesh, 2, 10, 7).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
