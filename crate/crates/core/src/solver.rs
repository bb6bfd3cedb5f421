//! Global assembly and solves: the condensed normal equations of a broken formulation, the
//! FOSLS and hybrid-L² fast paths, the indefinite saddle-point system and the classical
//! Galerkin reference.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{
    l2_columns, trial_spaces, Assembler, ElementFrame, Field, Formulation, FormulationSpec, ProblemData, SlotTable,
};
use crate::mesh::{BoundaryTag, Mesh};
use crate::spaces::{h1_space, lift_nodal, DofSpace, SpaceKind};

/// A solution method: a broken formulation or the Bubnov–Galerkin primal baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Dpg(Formulation),
    Galerkin,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Dpg(f) => f.name(),
            Method::Galerkin => "galerkin",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        if s == "galerkin" {
            return Some(Method::Galerkin);
        }
        Formulation::from_name(s).map(Method::Dpg)
    }

    /// The formulation whose error norm and residual apply.
    pub fn formulation(&self) -> Formulation {
        match self {
            Method::Dpg(f) => *f,
            Method::Galerkin => Formulation::Primal,
        }
    }
}

/// How the test side of a broken formulation is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Every test slot goes through the element Gram matrix.
    Generic,
    /// L² test slots use the identity Riesz map; the rest go through the Gram matrix.
    Hybrid,
}

/// One trial slot of a solution.
#[derive(Debug, Clone)]
pub struct SlotField {
    pub name: &'static str,
    pub space: DofSpace,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolutionFields {
    pub method: Method,
    pub p: usize,
    pub generation: usize,
    pub slots: Vec<SlotField>,
}

impl SolutionFields {
    pub fn slot(&self, name: &str) -> Option<&SlotField> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn ndofs(&self) -> usize {
        self.slots.iter().map(|s| s.space.ndofs()).sum()
    }

    /// All coefficients concatenated in slot order.
    pub fn flat(&self) -> Vec<f64> {
        self.slots.iter().flat_map(|s| s.coeffs.iter().copied()).collect()
    }
}

/// Global numbering of the unconstrained dofs of a list of slot spaces.
#[derive(Debug, Clone)]
pub struct DofPartition {
    pub offsets: Vec<usize>,
    /// Free index of every global dof, `None` when constrained.
    pub free: Vec<Option<usize>>,
    pub num_free: usize,
    /// Values of all dofs with the constrained ones prescribed, free ones zero.
    pub lifted: Vec<f64>,
}

impl DofPartition {
    pub fn new(spaces: &[&DofSpace]) -> Self {
        let mut offsets = Vec::with_capacity(spaces.len() + 1);
        let mut free = Vec::new();
        let mut lifted = Vec::new();
        let mut n = 0;
        offsets.push(0);
        for s in spaces {
            for g in 0..s.ndofs() {
                if s.is_constrained(g) {
                    free.push(None);
                    lifted.push(s.prescribed()[g]);
                } else {
                    free.push(Some(n));
                    lifted.push(0.0);
                    n += 1;
                }
            }
            offsets.push(free.len());
        }
        Self { offsets, free, num_free: n, lifted }
    }

    /// Global indices and signs of the local trial functions of element `k`.
    pub fn element_map(&self, spaces: &[&DofSpace], k: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (s, space) in spaces.iter().enumerate() {
            for i in 0..space.local_dim() {
                let (g, sign) = space.local_to_global(k, i);
                out.push((self.offsets[s] + g, sign));
            }
        }
        out
    }

    /// Full coefficient vector from the free solution.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .zip(&self.lifted)
            .map(|(f, &v)| match f {
                Some(i) => x[*i],
                None => v,
            })
            .collect()
    }
}

/// The assembled global problem over the unconstrained trial dofs.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub stiffness: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
    pub partition: DofPartition,
}

/// Element block `(K, F)` in local trial numbering.
pub type ElementBlock = (DMatrix<f64>, DVector<f64>);

/// `Bᵀ G⁻¹ B` and `Bᵀ G⁻¹ l` through one Cholesky factorization of `G`.
pub fn condense_local(b: &DMatrix<f64>, g: &DMatrix<f64>, l: &DVector<f64>, element: usize) -> Result<ElementBlock> {
    if g.nrows() == 0 {
        return Ok((DMatrix::zeros(b.ncols(), b.ncols()), DVector::zeros(b.ncols())));
    }
    let chol = g.clone().cholesky().ok_or(Error::GramBreakdown { element })?;
    let lo = chol.l();
    let w = lo.solve_lower_triangular(b).ok_or(Error::GramBreakdown { element })?;
    let r = lo.solve_lower_triangular(l).ok_or(Error::GramBreakdown { element })?;
    Ok((w.transpose() * &w, w.transpose() * r))
}

/// Scatter element blocks into a global system, eliminating constrained dofs symmetrically.
pub fn scatter(
    spaces: &[&DofSpace],
    blocks: &[ElementBlock],
) -> Result<GlobalSystem> {
    let partition = DofPartition::new(spaces);
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; partition.num_free];
    for (k, (ke, fe)) in blocks.iter().enumerate() {
        let map = partition.element_map(spaces, k);
        for (i, &(gi, si)) in map.iter().enumerate() {
            let Some(fi) = partition.free[gi] else { continue };
            rhs[fi] += si * fe[i];
            for (j, &(gj, sj)) in map.iter().enumerate() {
                let v = si * sj * ke[(i, j)];
                match partition.free[gj] {
                    Some(fj) => {
                        if v != 0.0 {
                            triplets.push(Triplet::new(fi, fj, v));
                        }
                    }
                    None => rhs[fi] -= v * partition.lifted[gj],
                }
            }
        }
    }
    let n = partition.num_free;
    let stiffness = SparseColMat::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Solver(format!("sparse assembly: {e:?}")))?;
    Ok(GlobalSystem { stiffness, rhs, partition })
}

fn spmv(a: &SparseColMat<usize, f64>, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let val = a.val();
    for (j, &xj) in x.iter().enumerate() {
        for p in cp[j]..cp[j + 1] {
            y[ri[p]] += val[p] * xj;
        }
    }
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
pub fn conjugate_gradient(a: &SparseColMat<usize, f64>, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut diag = vec![1.0; n];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    for j in 0..n {
        for p in cp[j]..cp[j + 1] {
            if ri[p] == j && a.val()[p] > 0.0 {
                diag[j] = a.val()[p];
            }
        }
    }
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        spmv(a, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Solver("conjugate gradients met a non-positive curvature".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!("conjugate gradients did not converge in {max_iter} iterations")))
}

impl GlobalSystem {
    /// Sparse Cholesky; conjugate gradients when the factorization fails.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.rhs.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        match self.stiffness.sp_cholesky(Side::Lower) {
            Ok(llt) => {
                let b = faer::Mat::<f64>::from_fn(n, 1, |i, _| self.rhs[i]);
                let x = llt.solve(&b);
                let x: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
                if x.iter().all(|v| v.is_finite()) {
                    return Ok(x);
                }
                conjugate_gradient(&self.stiffness, &self.rhs, 1e-12, 20 * n)
            }
            Err(_) => conjugate_gradient(&self.stiffness, &self.rhs, 1e-12, 20 * n),
        }
    }
}

fn require_gamma0(mesh: &Mesh) -> Result<()> {
    if mesh.boundary_length(BoundaryTag::Gamma0) <= 0.0 {
        return Err(Error::IllPosed("the displacement boundary is empty".into()));
    }
    Ok(())
}

fn fields_from(method: Method, p: usize, mesh: &Mesh, spec_names: &[&'static str], spaces: Vec<DofSpace>, full: &[f64]) -> SolutionFields {
    let mut off = 0;
    let slots = spec_names
        .iter()
        .zip(spaces)
        .map(|(&name, space)| {
            let n = space.ndofs();
            let coeffs = full[off..off + n].to_vec();
            off += n;
            SlotField { name, space, coeffs }
        })
        .collect();
    SolutionFields { method, p, generation: mesh.generation(), slots }
}

/// Per-element condensed blocks of a broken formulation.
pub fn element_blocks(assembler: &Assembler, mesh: &Mesh, mode: SolveMode) -> Result<Vec<ElementBlock>> {
    let l2 = l2_columns(&assembler.rules);
    let exact_l2 = mode == SolveMode::Hybrid && assembler.spec.has_l2_tests();
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|k| {
            let frame = ElementFrame::new(mesh, k);
            let z = assembler.trial_duals(&frame);
            let t = assembler.test_features(&frame);
            let lf = assembler.load(&frame);
            let b = &t * z.transpose();
            let tv = t.columns(0, assembler.rules.n_volume_cols());
            let g = &tv * tv.transpose();
            let l = &t * &lf;
            let (mut ke, mut fe) = condense_local(&b, &g, &l, k)?;
            if exact_l2 {
                let zl = z.select_columns(&l2);
                let ll = lf.select_rows(&l2);
                ke += &zl * zl.transpose();
                fe += &zl * ll;
            }
            Ok((ke, fe))
        })
        .collect()
}

/// Minimum-residual solve of a broken formulation at trial order `p` with test enrichment `dp`.
pub fn solve_dpg(spec: &FormulationSpec, mesh: &Mesh, data: &ProblemData, p: usize, dp: usize, mode: SolveMode) -> Result<SolutionFields> {
    require_gamma0(mesh)?;
    let skip_l2 = mode == SolveMode::Hybrid;
    let assembler = Assembler::new(spec, mesh, p, p + dp, p - 1 + dp, skip_l2, data)?;
    let blocks = element_blocks(&assembler, mesh, mode)?;
    let spaces: Vec<&DofSpace> = assembler.trial.iter().map(|s| &s.space).collect();
    let system = scatter(&spaces, &blocks)?;
    let x = system.solve()?;
    let full = system.partition.expand(&x);
    let names: Vec<&'static str> = spec.trial_slots.iter().map(|s| s.name).collect();
    let owned = assembler.trial.into_iter().map(|s| s.space).collect();
    Ok(fields_from(Method::Dpg(spec.id), p, mesh, &names, owned, &full))
}

/// Generic path: every test slot, including L² ones, through the element Gram matrix.
pub fn assemble_and_solve(spec: &FormulationSpec, mesh: &Mesh, data: &ProblemData, p: usize, dp: usize) -> Result<SolutionFields> {
    solve_dpg(spec, mesh, data, p, dp, SolveMode::Generic)
}

/// First-order system least squares for the strong formulation: `(B·, B·)` in L².
pub fn solve_fosls(mesh: &Mesh, data: &ProblemData, p: usize) -> Result<SolutionFields> {
    solve_dpg(&FormulationSpec::new(Formulation::Strong), mesh, data, p, 1, SolveMode::Hybrid)
}

/// Mixed formulation with the Gram inverse applied to the broken H(div) slot only.
pub fn solve_hybrid_mixed(mesh: &Mesh, data: &ProblemData, p: usize, dp: usize) -> Result<SolutionFields> {
    solve_dpg(&FormulationSpec::new(Formulation::Mixed), mesh, data, p, dp, SolveMode::Hybrid)
}

/// The indefinite system `[−G B; Bᵀ 0]` over broken test and trial dofs. Returns the trial
/// solution and the error representation `ψ` (element-major, test slots in order).
pub fn solve_saddle_point(spec: &FormulationSpec, mesh: &Mesh, data: &ProblemData, p: usize, dp: usize) -> Result<(SolutionFields, Vec<f64>)> {
    require_gamma0(mesh)?;
    let assembler = Assembler::new(spec, mesh, p, p + dp, p - 1 + dp, false, data)?;
    let spaces: Vec<&DofSpace> = assembler.trial.iter().map(|s| &s.space).collect();
    let partition = DofPartition::new(&spaces);
    let local: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|k| {
            let frame = ElementFrame::new(mesh, k);
            let z = assembler.trial_duals(&frame);
            let t = assembler.test_features(&frame);
            let tv = t.columns(0, assembler.rules.n_volume_cols());
            (&t * z.transpose(), &tv * tv.transpose(), &t * assembler.load(&frame))
        })
        .collect();
    let nt: usize = local.iter().map(|(b, _, _)| b.nrows()).sum();
    let n = nt + partition.num_free;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    let mut row0 = 0;
    for (k, (b, g, l)) in local.iter().enumerate() {
        let map = partition.element_map(&spaces, k);
        for i in 0..b.nrows() {
            rhs[row0 + i] += l[i];
            for j in 0..b.nrows() {
                triplets.push(Triplet::new(row0 + i, row0 + j, -g[(i, j)]));
            }
            for (j, &(gj, sj)) in map.iter().enumerate() {
                let v = sj * b[(i, j)];
                match partition.free[gj] {
                    Some(fj) => {
                        triplets.push(Triplet::new(row0 + i, nt + fj, v));
                        triplets.push(Triplet::new(nt + fj, row0 + i, v));
                    }
                    None => rhs[row0 + i] -= v * partition.lifted[gj],
                }
            }
        }
        row0 += b.nrows();
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Solver(format!("sparse assembly: {e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::Solver(format!("saddle-point factorization: {e:?}")))?;
    let sol = lu.solve(&faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]));
    if (0..n).any(|i| !sol[(i, 0)].is_finite()) {
        return Err(Error::Solver("saddle-point factorization produced non-finite values".into()));
    }
    let psi: Vec<f64> = (0..nt).map(|i| sol[(i, 0)]).collect();
    let x: Vec<f64> = (nt..n).map(|i| sol[(i, 0)]).collect();
    let full = partition.expand(&x);
    let names: Vec<&'static str> = spec.trial_slots.iter().map(|s| s.name).collect();
    let owned = assembler.trial.into_iter().map(|s| s.space).collect();
    Ok((fields_from(Method::Dpg(spec.id), p, mesh, &names, owned, &full), psi))
}

/// Bubnov–Galerkin solve of `∫ ∇u : C∇v = ∫ f·v + ∫_Γ1 g·v` with continuous order-`p` elements.
pub fn solve_galerkin_primal(mesh: &Mesh, data: &ProblemData, p: usize) -> Result<SolutionFields> {
    require_gamma0(mesh)?;
    if p == 0 {
        return Err(Error::InvalidInput("order p must be >= 1".into()));
    }
    let spec = FormulationSpec::new(Formulation::Primal);
    let mut u = h1_space(mesh, p, true)?;
    lift_nodal(&mut u, mesh, |x| (data.displacement)(x));
    let assembler = Assembler::with_trial_spaces(&spec, mesh, p, vec![u.clone()], p, p, true, data)?;
    let test = SlotTable::new(Field::UH1, u.clone(), &assembler.rules);
    let blocks: Vec<ElementBlock> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|k| {
            let frame = ElementFrame::new(mesh, k);
            let z = assembler.trial_duals(&frame);
            let t = crate::forms::test_feature_matrix(&test, &frame, &assembler.rules);
            let tv = t.columns(0, assembler.rules.n_volume_cols());
            let zv = z.columns(0, assembler.rules.n_volume_cols());
            let lf = assembler.load(&frame);
            (tv * zv.transpose(), &t * lf)
        })
        .collect();
    let system = scatter(&[&u], &blocks)?;
    let x = system.solve()?;
    let full = system.partition.expand(&x);
    Ok(fields_from(Method::Galerkin, p, mesh, &["u"], vec![u], &full))
}

/// Solve with the default path of a method: FOSLS for Strong, the hybrid path for Mixed,
/// the generic Gram path otherwise.
pub fn solve_method(method: Method, mesh: &Mesh, data: &ProblemData, p: usize, dp: usize) -> Result<SolutionFields> {
    match method {
        Method::Galerkin => solve_galerkin_primal(mesh, data, p),
        Method::Dpg(Formulation::Strong) => solve_fosls(mesh, data, p),
        Method::Dpg(Formulation::Mixed) => solve_hybrid_mixed(mesh, data, p, dp),
        Method::Dpg(f) => assemble_and_solve(&FormulationSpec::new(f), mesh, data, p, dp),
    }
}

/// Trial spaces of a method with its boundary data lifted, in slot order.
pub fn method_spaces(method: Method, mesh: &Mesh, data: &ProblemData, p: usize) -> Result<Vec<(&'static str, DofSpace)>> {
    match method {
        Method::Galerkin => {
            let mut u = h1_space(mesh, p, true)?;
            lift_nodal(&mut u, mesh, |x| (data.displacement)(x));
            Ok(vec![("u", u)])
        }
        Method::Dpg(f) => {
            let spec = FormulationSpec::new(f);
            let spaces = trial_spaces(&spec, mesh, p, data)?;
            Ok(spec.trial_slots.iter().map(|s| s.name).zip(spaces).collect())
        }
    }
}

/// Whether a slot kind carries an H¹-conforming displacement.
pub fn is_conforming_displacement(kind: SpaceKind) -> bool {
    kind == SpaceKind::H1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialParams;
    use crate::mesh::build_square_mesh;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| (((i * 7 + j * 13) as u64 + seed) % 11) as f64 / 11.0 - 0.4);
        &a * a.transpose() + DMatrix::identity(n, n)
    }

    #[test]
    fn condense_identity_and_zero() {
        let (k, f) = condense_local(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3), &DVector::zeros(3), 0).unwrap();
        assert_eq!(k, DMatrix::identity(3, 3));
        assert_eq!(f, DVector::zeros(3));
        let (k, f) = condense_local(&DMatrix::zeros(4, 2), &spd(4, 1), &DVector::zeros(4), 0).unwrap();
        assert_eq!(k.amax(), 0.0);
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn condense_matches_explicit_inverse() {
        let b = DMatrix::from_fn(6, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let g = spd(6, 3);
        let l = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let (k, f) = condense_local(&b, &g, &l, 0).unwrap();
        let gi = g.try_inverse().unwrap();
        assert!((k - b.transpose() * &gi * &b).amax() < 1e-10);
        assert!((f - b.transpose() * gi * l).amax() < 1e-10);
    }

    #[test]
    fn gram_breakdown_names_element() {
        let g = -DMatrix::identity(2, 2);
        let e = condense_local(&DMatrix::identity(2, 2), &g, &DVector::zeros(2), 7).unwrap_err();
        assert!(matches!(e, Error::GramBreakdown { element: 7 }));
    }

    #[test]
    fn homogeneous_problem_gives_zero() {
        let mesh = build_square_mesh(2).unwrap();
        let data = ProblemData::homogeneous(MaterialParams::unit(), |_| [0.0; 2]);
        for m in [
            Method::Galerkin,
            Method::Dpg(Formulation::Strong),
            Method::Dpg(Formulation::Ultraweak),
            Method::Dpg(Formulation::DualMixed),
            Method::Dpg(Formulation::Mixed),
            Method::Dpg(Formulation::Primal),
        ] {
            let s = solve_method(m, &mesh, &data, 1, 1).unwrap();
            assert!(s.flat().iter().all(|v| v.abs() < 1e-12), "{m:?}");
        }
    }

    #[test]
    fn empty_displacement_boundary_is_ill_posed() {
        let mesh = build_square_mesh(2).unwrap().retagged(|_| BoundaryTag::Gamma1);
        let data = ProblemData::homogeneous(MaterialParams::unit(), |_| [1.0; 2]);
        let e = solve_method(Method::Dpg(Formulation::Primal), &mesh, &data, 1, 1).unwrap_err();
        assert!(matches!(e, Error::IllPosed(_)));
    }

    #[test]
    fn conjugate_gradient_solves_spd() {
        let t = vec![
            Triplet::new(0usize, 0usize, 4.0),
            Triplet::new(0, 1, 1.0),
            Triplet::new(1, 0, 1.0),
            Triplet::new(1, 1, 3.0),
        ];
        let a = SparseColMat::try_new_from_triplets(2, 2, &t).unwrap();
        let x = conjugate_gradient(&a, &[1.0, 2.0], 1e-14, 10).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14 && (x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn method_names_round_trip() {
        for n in ["galerkin", "primal", "strong", "ultraweak", "mixed", "dualmixed"] {
            assert_eq!(Method::from_name(n).unwrap().name(), n);
        }
        assert!(Method::from_name("fem").is_none());
    }
}
