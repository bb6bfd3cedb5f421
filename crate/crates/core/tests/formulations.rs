use elastodpg::exact::{error_norms, singular_solution, smooth_solution_2d};
use elastodpg::forms::{Formulation, FormulationSpec};
use elastodpg::material::MaterialParams;
use elastodpg::mesh::{build_lshape_mesh_with, build_square_mesh};
use elastodpg::residual::element_residuals;
use elastodpg::solver::{assemble_and_solve, solve_method, solve_saddle_point, Method};

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300)
}

#[test]
fn saddle_point_and_condensed_solves_agree() {
    let ex = smooth_solution_2d(MaterialParams::unit());
    let data = ex.problem_data();
    let mesh = build_square_mesh(2).unwrap();
    for f in Formulation::ALL {
        let spec = FormulationSpec::new(f);
        let condensed = assemble_and_solve(&spec, &mesh, &data, 1, 1).unwrap();
        let (saddle, psi) = solve_saddle_point(&spec, &mesh, &data, 1, 1).unwrap();
        assert!(rel_diff(&condensed.flat(), &saddle.flat()) < 1e-9, "{f:?}");
        assert!(psi.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn default_paths_match_the_generic_solve() {
    let ex = smooth_solution_2d(MaterialParams::steel());
    let data = ex.problem_data();
    let mesh = build_square_mesh(3).unwrap();
    for f in [Formulation::Strong, Formulation::Mixed] {
        let fast = solve_method(Method::Dpg(f), &mesh, &data, 2, 1).unwrap();
        let generic = assemble_and_solve(&FormulationSpec::new(f), &mesh, &data, 2, 1).unwrap();
        let (a, b) = (&fast.slot("u").unwrap().coeffs, &generic.slot("u").unwrap().coeffs);
        assert!(rel_diff(a, b) < 1e-8, "{f:?}");
    }
}

#[test]
fn galerkin_and_primal_dpg_errors_are_comparable() {
    let ex = smooth_solution_2d(MaterialParams::unit());
    let data = ex.problem_data();
    let mesh = build_square_mesh(4).unwrap();
    let g = solve_method(Method::Galerkin, &mesh, &data, 2, 1).unwrap();
    let d = solve_method(Method::Dpg(Formulation::Primal), &mesh, &data, 2, 1).unwrap();
    let (eg, ed) = (error_norms(&g, &ex, &mesh).unwrap().relative, error_norms(&d, &ex, &mesh).unwrap().relative);
    assert!(ed < 1.5 * eg && eg < 1.5 * ed, "{eg} {ed}");
}

#[test]
fn lshape_residual_density_peaks_at_the_corner() {
    let ex = singular_solution(MaterialParams::steel()).unwrap();
    let data = ex.problem_data();
    let mesh = build_lshape_mesh_with(2).unwrap().uniform_refine();
    for f in Formulation::ALL {
        let s = solve_method(Method::Dpg(f), &mesh, &data, 2, 1).unwrap();
        let r = element_residuals(&s, &mesh, &data, 4).unwrap();
        let density = |k: usize| r.eta_k[k] / mesh.area(k).sqrt();
        let k = (0..r.eta_k.len()).max_by(|&a, &b| density(a).total_cmp(&density(b))).unwrap();
        let c = mesh.centroid(k);
        assert!(c[0].hypot(c[1]) < 0.2, "{f:?} peak at {c:?}");
    }
}
