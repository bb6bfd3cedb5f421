//! Element residuals in the dual test norm, greedy marking and the adaptive loop.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{error_norms, ExactSolution};
use crate::forms::{l2_columns, Assembler, ElementFrame, FormulationSpec, ProblemData};
use crate::mesh::Mesh;
use crate::solver::{solve_method, Method, SolutionFields};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub eta_k: Vec<f64>,
    pub total: f64,
    pub p_res: usize,
    pub generation: usize,
}

/// `η_K² = r_Kᵀ G_K⁻¹ r_K` over the order-`p_res` broken test slots, plus the exact L² norm
/// of the residual for the L² test slots.
pub fn element_residuals(fields: &SolutionFields, mesh: &Mesh, data: &ProblemData, p_res: usize) -> Result<ResidualReport> {
    let Method::Dpg(id) = fields.method else {
        return Err(Error::InvalidInput("residuals are defined for broken formulations only".into()));
    };
    if p_res < fields.p + 1 {
        return Err(Error::InvalidInput(format!("p_res = {p_res} must be at least p + 1 = {}", fields.p + 1)));
    }
    if fields.generation != mesh.generation() {
        return Err(Error::Mismatch(format!(
            "solution generation {} against mesh generation {}",
            fields.generation,
            mesh.generation()
        )));
    }
    let spec = FormulationSpec::new(id);
    let spaces = fields.slots.iter().map(|s| s.space.clone()).collect();
    let asm = Assembler::with_trial_spaces(&spec, mesh, fields.p, spaces, p_res, p_res - 1, true, data)?;
    let l2 = l2_columns(&asm.rules);
    let eta_k = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|k| {
            let frame = ElementFrame::new(mesh, k);
            let x: Vec<f64> = fields.slots.iter().flat_map(|s| s.space.gather(k, &s.coeffs)).collect();
            let z = asm.trial_duals(&frame);
            let bx = z.transpose() * nalgebra::DVector::from_vec(x) - asm.load(&frame);
            let mut eta2 = 0.0;
            if !asm.tests.is_empty() {
                let t = asm.test_features(&frame);
                let r = &t * &bx;
                let tv = t.columns(0, asm.rules.n_volume_cols());
                let g = tv * tv.transpose();
                let chol = g.cholesky().ok_or(Error::GramBreakdown { element: k })?;
                let y = chol.l().solve_lower_triangular(&r).ok_or(Error::GramBreakdown { element: k })?;
                eta2 += y.norm_squared();
            }
            if spec.has_l2_tests() {
                eta2 += l2.iter().map(|&c| bx[c] * bx[c]).sum::<f64>();
            }
            Ok(eta2.max(0.0).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let total = eta_k.iter().map(|e| e * e).sum::<f64>().sqrt();
    Ok(ResidualReport { eta_k, total, p_res, generation: mesh.generation() })
}

/// Elements with `η_K > η_max / 2`; the maximizer is always included.
pub fn mark(report: &ResidualReport) -> Vec<usize> {
    if report.eta_k.is_empty() {
        return Vec::new();
    }
    let (imax, max) = report
        .eta_k
        .iter()
        .enumerate()
        .fold((0, report.eta_k[0]), |best, (k, &e)| if e > best.1 { (k, e) } else { best });
    let mut out: Vec<usize> = (0..report.eta_k.len()).filter(|&k| report.eta_k[k] > 0.5 * max).collect();
    if !out.contains(&imax) {
        out.push(imax);
        out.sort_unstable();
    }
    out
}

/// Fraction of marked elements whose centroid lies within `radius` of `point`, and the
/// fraction of the mesh area covered by such elements.
pub fn corner_concentration(mesh: &Mesh, marked: &[usize], point: [f64; 2], radius: f64) -> (f64, f64) {
    let near = |k: usize| {
        let c = mesh.centroid(k);
        (c[0] - point[0]).hypot(c[1] - point[1]) < radius
    };
    let marked_frac = marked.iter().filter(|&&k| near(k)).count() as f64 / marked.len().max(1) as f64;
    let area: f64 = (0..mesh.num_triangles()).filter(|&k| near(k)).map(|k| mesh.area(k)).sum();
    (marked_frac, area / mesh.total_area())
}

/// One step of an adaptive run.
#[derive(Debug, Clone)]
pub struct AdaptiveStep {
    pub mesh: Mesh,
    pub fields: SolutionFields,
    pub report: ResidualReport,
    pub dofs: usize,
    pub relative_error: Option<f64>,
    pub marked: Vec<usize>,
}

/// Solve, estimate, mark, refine; `max_steps` solves in total.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_loop(
    method: Method,
    mesh: Mesh,
    data: &ProblemData,
    exact: Option<&ExactSolution>,
    p: usize,
    dp: usize,
    p_res: usize,
    max_steps: usize,
) -> Result<Vec<AdaptiveStep>> {
    if max_steps == 0 {
        return Err(Error::InvalidInput("adaptive loop needs at least one step".into()));
    }
    let mut steps = Vec::with_capacity(max_steps);
    let mut mesh = mesh;
    for step in 0..max_steps {
        let fields = solve_method(method, &mesh, data, p, dp)?;
        let report = element_residuals(&fields, &mesh, data, p_res)?;
        let relative_error = exact.map(|ex| error_norms(&fields, ex, &mesh).map(|e| e.relative)).transpose()?;
        let marked = mark(&report);
        let next = if step + 1 < max_steps { Some(mesh.refine(&marked)?) } else { None };
        steps.push(AdaptiveStep { dofs: fields.ndofs(), mesh, fields, report, relative_error, marked });
        match next {
            Some(m) => mesh = m,
            None => break,
        }
    }
    Ok(steps)
}
