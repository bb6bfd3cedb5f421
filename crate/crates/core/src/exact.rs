//! Closed-form benchmark solutions and discrete error evaluation.
//!
//! Two benchmarks: a smooth manufactured solution on the unit square, and the Airy-function
//! corner singularity on the L-shape whose re-entrant edges lie along θ = ±3π/4.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{ErrorNorm, ProblemData};
use crate::material::{stiffness_full, MaterialParams};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre, triangle_rule};
use crate::solver::SolutionFields;
use crate::spaces::{eval_field, ElementGeometry, SpaceKind};

type VecField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
type TensorField = Arc<dyn Fn([f64; 2]) -> [f64; 4] + Send + Sync>;

/// An exact displacement with its gradient (row-major `∂u_i/∂x_j`), stress and body force.
#[derive(Clone)]
pub struct ExactSolution {
    pub material: MaterialParams,
    pub displacement: VecField,
    pub gradient: TensorField,
    pub stress: TensorField,
    pub body_force: VecField,
    /// Point where the stress is unbounded, if any.
    pub singular_point: Option<[f64; 2]>,
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSolution")
            .field("material", &self.material)
            .field("singular_point", &self.singular_point)
            .finish_non_exhaustive()
    }
}

impl ExactSolution {
    /// Stress at `x`, rejecting the singular point.
    pub fn stress_at(&self, x: [f64; 2]) -> Result<[f64; 4]> {
        if let Some(c) = self.singular_point {
            if (x[0] - c[0]).hypot(x[1] - c[1]) == 0.0 {
                return Err(Error::InvalidInput("stress is unbounded at the singular point".into()));
            }
        }
        Ok((self.stress)(x))
    }

    /// Problem data: the body force, the displacement on Γ0 and the traction `σn` on Γ1.
    pub fn problem_data(&self) -> ProblemData {
        let stress = self.stress.clone();
        ProblemData {
            material: self.material,
            body_force: self.body_force.clone(),
            displacement: self.displacement.clone(),
            traction: Arc::new(move |x, n| {
                let s = stress(x);
                [s[0] * n[0] + s[1] * n[1], s[2] * n[0] + s[3] * n[1]]
            }),
        }
    }
}

/// `u_1 = u_2 = sin(πx) sin(πy)` with `σ = C ε(u)` and `f = −div σ`.
pub fn smooth_solution_2d(material: MaterialParams) -> ExactSolution {
    let (l, m) = (material.lambda(), material.mu());
    let s = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let sx = |x: [f64; 2]| PI * (PI * x[0]).cos() * (PI * x[1]).sin();
    let sy = |x: [f64; 2]| PI * (PI * x[0]).sin() * (PI * x[1]).cos();
    let gradient = move |x: [f64; 2]| {
        let (a, b) = (sx(x), sy(x));
        [a, b, a, b]
    };
    ExactSolution {
        material,
        displacement: Arc::new(move |x| [s(x), s(x)]),
        gradient: Arc::new(gradient),
        stress: Arc::new(move |x| stiffness_full(&gradient(x), &material)),
        body_force: Arc::new(move |x| {
            let sxx = -PI * PI * s(x);
            let syy = sxx;
            let sxy = PI * PI * (PI * x[0]).cos() * (PI * x[1]).cos();
            [
                -(l * (sxx + sxy) + 2.0 * m * sxx + m * (sxy + syy)),
                -(m * (sxx + sxy) + l * (sxy + syy) + 2.0 * m * syy),
            ]
        }),
        singular_point: None,
    }
}

/// Constants of the corner singularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularParams {
    pub a: f64,
    pub c1: f64,
    pub nu: f64,
}

const OPENING: f64 = 0.75 * PI;

/// Amplitude `C1(a, ν)` making the radial displacement vanish on θ = ±3π/4.
pub fn singular_c1(a: f64, nu: f64) -> f64 {
    (4.0 * (1.0 - nu) - (a + 1.0)) * ((a - 1.0) * OPENING).sin() / ((a + 1.0) * ((a + 1.0) * OPENING).sin())
}

/// Residual of the condition making the angular displacement vanish on θ = ±3π/4.
pub fn singularity_residual(a: f64, c1: f64, nu: f64) -> f64 {
    c1 * (a + 1.0) * ((a + 1.0) * OPENING).cos() + (4.0 * (1.0 - nu) + (a - 1.0)) * ((a - 1.0) * OPENING).cos()
}

// the residual times sin((a+1)3π/4), which removes the pole of C1 at a = 1/3
fn cleared_residual(a: f64, nu: f64) -> f64 {
    let w = OPENING;
    (4.0 * (1.0 - nu) - (a + 1.0)) * ((a - 1.0) * w).sin() * ((a + 1.0) * w).cos()
        + (4.0 * (1.0 - nu) + (a - 1.0)) * ((a - 1.0) * w).cos() * ((a + 1.0) * w).sin()
}

/// Smallest root `a ∈ (0, 1)` by bracketing bisection, with `C1` evaluated there.
pub fn solve_singularity_exponent(nu: f64) -> Result<SingularParams> {
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::InvalidInput(format!("Poisson ratio {nu} outside [0, 0.5)")));
    }
    let (lo, hi) = (1e-6, 1.0 - 1e-6);
    let n = 400;
    let h = (hi - lo) / n as f64;
    let mut bracket = None;
    for i in 0..n {
        let (x0, x1) = (lo + i as f64 * h, lo + (i + 1) as f64 * h);
        if cleared_residual(x0, nu).signum() != cleared_residual(x1, nu).signum() {
            bracket = Some((x0, x1));
            break;
        }
    }
    let Some((mut x0, mut x1)) = bracket else {
        return Err(Error::NoBracket { lo, hi, f_lo: cleared_residual(lo, nu), f_hi: cleared_residual(hi, nu) });
    };
    let f0 = cleared_residual(x0, nu);
    while x1 - x0 > 1e-15 {
        let mid = 0.5 * (x0 + x1);
        if mid <= x0 || mid >= x1 {
            break;
        }
        if cleared_residual(mid, nu).signum() == f0.signum() {
            x0 = mid;
        } else {
            x1 = mid;
        }
    }
    let a = 0.5 * (x0 + x1);
    Ok(SingularParams { a, c1: singular_c1(a, nu), nu })
}

/// The corner singularity for the given material (plane strain Poisson ratio), with zero
/// body force. Polar displacements are converted to Cartesian components.
pub fn singular_solution(material: MaterialParams) -> Result<ExactSolution> {
    let params = solve_singularity_exponent(material.nu())?;
    Ok(singular_solution_with(material, params))
}

pub fn singular_solution_with(material: MaterialParams, sp: SingularParams) -> ExactSolution {
    let (a, c1, nu) = (sp.a, sp.c1, sp.nu);
    let mu = material.mu();
    // F, G with C2 = C4 = 0 and C3 = 1, and their derivatives
    let f = move |t: f64| c1 * ((a + 1.0) * t).sin() + ((a - 1.0) * t).sin();
    let fp = move |t: f64| c1 * (a + 1.0) * ((a + 1.0) * t).cos() + (a - 1.0) * ((a - 1.0) * t).cos();
    let fpp = move |t: f64| -c1 * (a + 1.0).powi(2) * ((a + 1.0) * t).sin() - (a - 1.0).powi(2) * ((a - 1.0) * t).sin();
    let g = move |t: f64| -4.0 / (a - 1.0) * ((a - 1.0) * t).cos();
    let gp = move |t: f64| 4.0 * ((a - 1.0) * t).sin();
    let gpp = move |t: f64| 4.0 * (a - 1.0) * ((a - 1.0) * t).cos();
    let polar = move |x: [f64; 2]| {
        let r = x[0].hypot(x[1]);
        let t = x[1].atan2(x[0]);
        (r, t)
    };
    let displacement = move |x: [f64; 2]| {
        let (r, t) = polar(x);
        let ra = r.powf(a) / (2.0 * mu);
        let ur = ra * (-(a + 1.0) * f(t) + (1.0 - nu) * gp(t));
        let ut = ra * (-fp(t) + (1.0 - nu) * (a - 1.0) * g(t));
        let (c, s) = (t.cos(), t.sin());
        [ur * c - ut * s, ur * s + ut * c]
    };
    let gradient = move |x: [f64; 2]| {
        let (r, t) = polar(x);
        if r == 0.0 {
            return [f64::INFINITY; 4];
        }
        let k = r.powf(a - 1.0) / (2.0 * mu);
        // r^{-1} times the polar displacement and its θ-derivatives
        let ur = k * (-(a + 1.0) * f(t) + (1.0 - nu) * gp(t));
        let ut = k * (-fp(t) + (1.0 - nu) * (a - 1.0) * g(t));
        let ur_t = k * (-(a + 1.0) * fp(t) + (1.0 - nu) * gpp(t));
        let ut_t = k * (-fpp(t) + (1.0 - nu) * (a - 1.0) * gp(t));
        // ∇u in the polar frame
        let p = [a * ur, ur_t - ut, a * ut, ut_t + ur];
        let (c, s) = (t.cos(), t.sin());
        let rot = [c, -s, s, c];
        let rp = [
            rot[0] * p[0] + rot[1] * p[2],
            rot[0] * p[1] + rot[1] * p[3],
            rot[2] * p[0] + rot[3] * p[2],
            rot[2] * p[1] + rot[3] * p[3],
        ];
        [
            rp[0] * rot[0] + rp[1] * rot[1],
            rp[0] * rot[2] + rp[1] * rot[3],
            rp[2] * rot[0] + rp[3] * rot[1],
            rp[2] * rot[2] + rp[3] * rot[3],
        ]
    };
    ExactSolution {
        material,
        displacement: Arc::new(displacement),
        gradient: Arc::new(gradient),
        stress: Arc::new(move |x| stiffness_full(&gradient(x), &material)),
        body_force: Arc::new(|_| [0.0; 2]),
        singular_point: Some([0.0, 0.0]),
    }
}

/// Polar stress components `(σ_rr, σ_θθ, σ_rθ)` of the corner singularity.
pub fn singular_polar_stress(sp: SingularParams, r: f64, t: f64) -> [f64; 3] {
    let (a, c1) = (sp.a, sp.c1);
    let f = c1 * ((a + 1.0) * t).sin() + ((a - 1.0) * t).sin();
    let fp = c1 * (a + 1.0) * ((a + 1.0) * t).cos() + (a - 1.0) * ((a - 1.0) * t).cos();
    let fpp = -c1 * (a + 1.0).powi(2) * ((a + 1.0) * t).sin() - (a - 1.0).powi(2) * ((a - 1.0) * t).sin();
    let k = r.powf(a - 1.0);
    [k * (fpp + (a + 1.0) * f), k * a * (a + 1.0) * f, -k * a * fp]
}

/// Central-difference stress `C ε(u)` from the displacement.
pub fn fd_stress(ex: &ExactSolution, x: [f64; 2], h: f64) -> [f64; 4] {
    let u = &ex.displacement;
    let dx = |i: usize| {
        let (mut p, mut m) = (x, x);
        p[i] += h;
        m[i] -= h;
        let (up, um) = (u(p), u(m));
        [(up[0] - um[0]) / (2.0 * h), (up[1] - um[1]) / (2.0 * h)]
    };
    let (gx, gy) = (dx(0), dx(1));
    stiffness_full(&[gx[0], gy[0], gx[1], gy[1]], &ex.material)
}

/// Central-difference `−div σ` from the closed-form stress.
pub fn fd_body_force(ex: &ExactSolution, x: [f64; 2], h: f64) -> [f64; 2] {
    let s = &ex.stress;
    let (xp, xm) = ([x[0] + h, x[1]], [x[0] - h, x[1]]);
    let (yp, ym) = ([x[0], x[1] + h], [x[0], x[1] - h]);
    let (sxp, sxm, syp, sym) = (s(xp), s(xm), s(yp), s(ym));
    [
        -((sxp[0] - sxm[0]) + (syp[1] - sym[1])) / (2.0 * h),
        -((sxp[2] - sxm[2]) + (syp[3] - sym[3])) / (2.0 * h),
    ]
}

/// Quadrature points `(reference point, weight in reference measure)` for element `k`,
/// geometrically graded toward a vertex at the singular point when there is one.
pub fn element_quadrature(mesh: &Mesh, k: usize, degree: usize, singular: Option<[f64; 2]>) -> Vec<([f64; 2], f64)> {
    let c = mesh.coords(k);
    let corner = singular.and_then(|s| (0..3).find(|&j| (c[j][0] - s[0]).hypot(c[j][1] - s[1]) < 1e-14));
    match corner {
        None => {
            let r = triangle_rule(degree);
            (0..r.len()).map(|i| (r.xy(i), r.weights[i])).collect()
        }
        Some(j) => graded_rule(j, degree),
    }
}

fn graded_rule(j: usize, degree: usize) -> Vec<([f64; 2], f64)> {
    let v = crate::poly::REF_VERTICES;
    let (p0, p1, p2) = (v[j], v[(j + 1) % 3], v[(j + 2) % 3]);
    let (gs, ws) = gauss_legendre(degree / 2 + 6);
    let (gt, wt) = gauss_legendre(degree / 2 + 8);
    let ratio: f64 = 0.15;
    let levels = 14;
    let mut out = Vec::new();
    for lev in 0..=levels {
        let (s0, s1) = if lev == levels { (0.0, ratio.powi(lev)) } else { (ratio.powi(lev + 1), ratio.powi(lev)) };
        for (&us, &was) in gs.iter().zip(&ws) {
            let s = s0 + (s1 - s0) * us;
            for (&t, &wtt) in gt.iter().zip(&wt) {
                let x = [
                    p0[0] + s * ((1.0 - t) * (p1[0] - p0[0]) + t * (p2[0] - p0[0])),
                    p0[1] + s * ((1.0 - t) * (p1[1] - p0[1]) + t * (p2[1] - p0[1])),
                ];
                out.push((x, was * (s1 - s0) * wtt * s));
            }
        }
    }
    out
}

/// Absolute error and exact norm of one quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotError {
    pub error: f64,
    pub norm: f64,
}

impl SlotError {
    pub fn relative(&self) -> f64 {
        if self.norm > 0.0 { self.error / self.norm } else { self.error }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Displacement error in the method's norm over the exact norm.
    pub relative: f64,
    pub norm: ErrorNorm,
    pub displacement: SlotError,
    /// L² stress error when the method has a stress slot.
    pub stress: Option<SlotError>,
}

/// Displacement (and stress) errors of a solution by per-element quadrature.
pub fn error_norms(fields: &SolutionFields, exact: &ExactSolution, mesh: &Mesh) -> Result<ErrorReport> {
    let norm = fields.method.formulation().error_norm();
    let u = fields.slot("u").ok_or_else(|| Error::InvalidInput("solution has no displacement slot".into()))?;
    let sigma = fields.slot("sigma");
    let degree = 2 * fields.p + 8;
    let per: Vec<[f64; 4]> = (0..mesh.num_triangles())
        .map(|k| {
            let geo = ElementGeometry::of(mesh, k);
            let mut acc = [0.0; 4];
            for (xh, w) in element_quadrature(mesh, k, degree, exact.singular_point) {
                let x = geo.map(xh);
                let w = w * geo.det;
                let uh = eval_field(&u.space, mesh, k, &u.coeffs, xh);
                let ue = (exact.displacement)(x);
                let mut e2 = 0.0;
                let mut n2 = 0.0;
                for c in 0..2 {
                    e2 += (ue[c] - uh.values[c]).powi(2);
                    n2 += ue[c] * ue[c];
                }
                if norm == ErrorNorm::H1 {
                    let ge = (exact.gradient)(x);
                    for c in 0..2 {
                        for d in 0..2 {
                            e2 += (ge[2 * c + d] - uh.grads[c][d]).powi(2);
                            n2 += ge[2 * c + d].powi(2);
                        }
                    }
                }
                acc[0] += w * e2;
                acc[1] += w * n2;
                if let Some(s) = sigma {
                    let sh = eval_field(&s.space, mesh, k, &s.coeffs, xh);
                    let se = (exact.stress)(x);
                    acc[2] += w * (0..4).map(|e| (se[e] - sh.tensor[e]).powi(2)).sum::<f64>();
                    acc[3] += w * (0..4).map(|e| se[e] * se[e]).sum::<f64>();
                }
            }
            acc
        })
        .collect();
    let tot = per.iter().fold([0.0; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
    let displacement = SlotError { error: tot[0].sqrt(), norm: tot[1].sqrt() };
    let stress = sigma.map(|_| SlotError { error: tot[2].sqrt(), norm: tot[3].sqrt() });
    Ok(ErrorReport { relative: displacement.relative(), norm, displacement, stress })
}

/// `‖(σ − σ_h) − C∇(u − u_h)‖² + ‖div(σ − σ_h)‖²` summed over elements, square-rooted: the
/// error in the norm induced by the strong first-order operator.
pub fn strong_energy_error(fields: &SolutionFields, exact: &ExactSolution, mesh: &Mesh) -> Result<f64> {
    let u = fields.slot("u").ok_or_else(|| Error::InvalidInput("no displacement slot".into()))?;
    let s = fields.slot("sigma").ok_or_else(|| Error::InvalidInput("no stress slot".into()))?;
    if u.space.kind != SpaceKind::H1 || s.space.kind != SpaceKind::Hdiv {
        return Err(Error::InvalidInput("strong energy error needs H1 displacement and H(div) stress".into()));
    }
    let m = exact.material;
    let degree = 2 * fields.p + 8;
    let mut total = 0.0;
    for k in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, k);
        for (xh, w) in element_quadrature(mesh, k, degree, exact.singular_point) {
            let x = geo.map(xh);
            let w = w * geo.det;
            let uh = eval_field(&u.space, mesh, k, &u.coeffs, xh);
            let sh = eval_field(&s.space, mesh, k, &s.coeffs, xh);
            let ge = (exact.gradient)(x);
            let gh = [uh.grads[0][0], uh.grads[0][1], uh.grads[1][0], uh.grads[1][1]];
            let de: [f64; 4] = std::array::from_fn(|e| ge[e] - gh[e]);
            let cde = stiffness_full(&de, &m);
            let se = (exact.stress)(x);
            let f = (exact.body_force)(x);
            for e in 0..4 {
                total += w * (se[e] - sh.tensor[e] - cde[e]).powi(2);
            }
            for c in 0..2 {
                total += w * (-f[c] - sh.div[c]).powi(2);
            }
        }
    }
    Ok(total.sqrt())
}
