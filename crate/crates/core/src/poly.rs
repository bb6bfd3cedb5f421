//! Polynomial bases on the reference triangle: orthonormal L², nodal Lagrange and
//! Raviart–Thomas, all stored as coefficient matrices over monomials `ξ^i η^j` in the
//! centroid-shifted coordinates `ξ = x̂ − 1/3`, `η = ŷ − 1/3`.
//!
//! Reference vertices are (0,0), (1,0), (0,1). Local edge `l` is opposite vertex `l` and is
//! parametrized by `t ∈ [0,1]` from vertex `l+1` to vertex `l+2` (mod 3).

use nalgebra::{DMatrix, DVector};

pub const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Endpoints of local reference edge `l`.
pub fn ref_edge(l: usize) -> ([f64; 2], [f64; 2]) {
    (REF_VERTICES[(l + 1) % 3], REF_VERTICES[(l + 2) % 3])
}

/// Reference point at parameter `t` on local edge `l`.
pub fn ref_edge_point(l: usize, t: f64) -> [f64; 2] {
    let (a, b) = ref_edge(l);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `L²(0,1)`-orthonormal shifted Legendre polynomial `√(2j+1) P_j(2t − 1)`.
pub fn legendre_q(j: usize, t: f64) -> f64 {
    let z = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, z);
    let pj = match j {
        0 => 1.0,
        1 => z,
        _ => {
            for k in 2..=j {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    };
    ((2 * j + 1) as f64).sqrt() * pj
}

/// Exponents of all monomials of total degree at most `deg`, by degree then by `y` power.
pub fn monomial_exponents(deg: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity((deg + 1) * (deg + 2) / 2);
    for d in 0..=deg {
        for j in 0..=d {
            e.push((d - j, j));
        }
    }
    e
}

/// `∫ x̂^a ŷ^b` over the reference triangle, `a! b! / (a+b+2)!`.
pub fn monomial_integral(a: usize, b: usize) -> f64 {
    let mut r = 1.0;
    // a!/(a+b+2)! = 1/((a+1)(a+2)...(a+b+2)), then times b!
    for k in a + 1..=a + b + 2 {
        r /= k as f64;
    }
    for k in 1..=b {
        r *= k as f64;
    }
    r
}

fn powers(x: f64, n: usize) -> Vec<f64> {
    let mut p = vec![1.0; n + 1];
    for i in 1..=n {
        p[i] = p[i - 1] * x;
    }
    p
}

/// Values and first derivatives of the monomials of degree ≤ `deg` at one point.
fn monomials_at(deg: usize, x: f64, y: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (px, py) = (powers(x - 1.0 / 3.0, deg), powers(y - 1.0 / 3.0, deg));
    let e = monomial_exponents(deg);
    let mut v = Vec::with_capacity(e.len());
    let mut dx = Vec::with_capacity(e.len());
    let mut dy = Vec::with_capacity(e.len());
    for &(i, j) in &e {
        v.push(px[i] * py[j]);
        dx.push(if i > 0 { i as f64 * px[i - 1] * py[j] } else { 0.0 });
        dy.push(if j > 0 { j as f64 * px[i] * py[j - 1] } else { 0.0 });
    }
    (v, dx, dy)
}

fn invert(m: DMatrix<f64>) -> DMatrix<f64> {
    m.try_inverse().expect("reference dof matrix is invertible")
}

/// Lower Cholesky factor inverse of a symmetric positive definite matrix.
fn inverse_cholesky(m: DMatrix<f64>) -> DMatrix<f64> {
    let l = m.cholesky().expect("reference Gram is positive definite").l();
    invert(l)
}

/// Scalar basis `φ_a = Σ_m coef[(a, m)] x̂^i ŷ^j`.
#[derive(Debug, Clone)]
pub struct ScalarBasis {
    pub degree: usize,
    pub coef: DMatrix<f64>,
}

impl ScalarBasis {
    pub fn dim(&self) -> usize {
        self.coef.nrows()
    }

    /// `L²(K̂)`-orthonormal basis of `P_k`.
    pub fn orthonormal(k: usize) -> Self {
        let e = monomial_exponents(k);
        let n = e.len();
        let rule = crate::quadrature::triangle_rule(2 * k);
        let tab: Vec<Vec<f64>> = (0..rule.len())
            .map(|i| {
                let [x, y] = rule.xy(i);
                monomials_at(k, x, y).0
            })
            .collect();
        let gram = |c: &DMatrix<f64>| {
            let mut m = DMatrix::<f64>::zeros(n, n);
            for (i, t) in tab.iter().enumerate() {
                let v = c * DVector::from_column_slice(t);
                m += rule.weights[i] * &v * v.transpose();
            }
            m
        };
        let mut coef = DMatrix::identity(n, n);
        // the second pass removes the rounding left by the first
        for _ in 0..2 {
            let g = gram(&coef);
            coef = inverse_cholesky(g) * coef;
        }
        Self { degree: k, coef }
    }

    /// Nodal Lagrange basis of `P_p` on [`lagrange_nodes`].
    pub fn lagrange(p: usize) -> Self {
        let ortho = Self::orthonormal(p);
        let nodes = lagrange_nodes(p);
        let n = nodes.len();
        let mut v = DMatrix::zeros(n, n);
        for (r, x) in nodes.iter().enumerate() {
            let vals = ortho.values(x[0], x[1]);
            for a in 0..n {
                v[(r, a)] = vals[a];
            }
        }
        let a = invert(v.transpose());
        Self { degree: p, coef: a * &ortho.coef }
    }

    pub fn values(&self, x: f64, y: f64) -> Vec<f64> {
        let (m, _, _) = monomials_at(self.degree, x, y);
        (&self.coef * DVector::from_vec(m)).data.into()
    }

    /// Values and reference gradients.
    pub fn values_grads(&self, x: f64, y: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
        let (m, dx, dy) = monomials_at(self.degree, x, y);
        let v: Vec<f64> = (&self.coef * DVector::from_vec(m)).data.into();
        let gx: Vec<f64> = (&self.coef * DVector::from_vec(dx)).data.into();
        let gy: Vec<f64> = (&self.coef * DVector::from_vec(dy)).data.into();
        (v, gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect())
    }
}

/// Lattice nodes of order `p`: vertices, then `p − 1` nodes per local edge in the edge's
/// direction, then interior nodes.
pub fn lagrange_nodes(p: usize) -> Vec<[f64; 2]> {
    let mut nodes: Vec<[f64; 2]> = REF_VERTICES.to_vec();
    for l in 0..3 {
        for i in 1..p {
            nodes.push(ref_edge_point(l, i as f64 / p as f64));
        }
    }
    for j in 1..p {
        for i in 1..p {
            if i + j < p {
                nodes.push([i as f64 / p as f64, j as f64 / p as f64]);
            }
        }
    }
    nodes
}

/// Vector basis with components `Σ_m cx[(a, m)] x̂^i ŷ^j` and likewise `cy`.
#[derive(Debug, Clone)]
pub struct VectorBasis {
    pub degree: usize,
    pub cx: DMatrix<f64>,
    pub cy: DMatrix<f64>,
}

impl VectorBasis {
    pub fn dim(&self) -> usize {
        self.cx.nrows()
    }

    /// Raviart–Thomas space `RT_k = P_k² ⊕ x̂ P̃_k` (full degree `k + 1`). The prime
    /// complement is built as `ξ P̃_k`, which spans the same space modulo `P_k²`.
    ///
    /// Degrees of freedom: for each local edge `l` and `j ≤ k` the flux moment
    /// `∫_{ê_l} φ·n̂ q_j(t) dŝ` against the outward normal, then the interior moments
    /// `∫ φ_c ψ` for `ψ` in the orthonormal basis of `P_{k−1}` and `c = x, y`.
    pub fn raviart_thomas(k: usize) -> Self {
        let deg = k + 1;
        let nm = monomial_exponents(deg).len();
        let ortho = ScalarBasis::orthonormal(k);
        let nk = ortho.dim();
        let dim = (k + 1) * (k + 3);
        // prime basis as monomial coefficients over degree k + 1
        let mut px = DMatrix::zeros(dim, nm);
        let mut py = DMatrix::zeros(dim, nm);
        for a in 0..nk {
            for m in 0..nk {
                px[(a, m)] = ortho.coef[(a, m)];
                py[(nk + a, m)] = ortho.coef[(a, m)];
            }
        }
        let exps = monomial_exponents(deg);
        let index = |i: usize, j: usize| exps.iter().position(|&e| e == (i, j)).unwrap();
        for j in 0..=k {
            let r = 2 * nk + j;
            px[(r, index(k - j + 1, j))] = 1.0;
            py[(r, index(k - j, j + 1))] = 1.0;
        }
        let prime = Self { degree: deg, cx: px, cy: py };

        let mut dofs = DMatrix::zeros(dim, dim);
        let (tq, wq) = crate::quadrature::line_rule(2 * deg + 2);
        let mut row = 0;
        for l in 0..3 {
            let (a, b) = ref_edge(l);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let n = [d[1] / len, -d[0] / len];
            for j in 0..=k {
                for (&t, &w) in tq.iter().zip(&wq) {
                    let x = ref_edge_point(l, t);
                    let (vx, vy, _) = prime.values_div(x[0], x[1]);
                    let q = legendre_q(j, t) * w * len;
                    for c in 0..dim {
                        dofs[(row, c)] += (vx[c] * n[0] + vy[c] * n[1]) * q;
                    }
                }
                row += 1;
            }
        }
        if k > 0 {
            let inner = ScalarBasis::orthonormal(k - 1);
            let rule = crate::quadrature::triangle_rule(2 * deg);
            for comp in 0..2 {
                for m in 0..inner.dim() {
                    for i in 0..rule.len() {
                        let [x, y] = rule.xy(i);
                        let psi = inner.values(x, y)[m] * rule.weights[i];
                        let (vx, vy, _) = prime.values_div(x, y);
                        for c in 0..dim {
                            dofs[(row, c)] += if comp == 0 { vx[c] } else { vy[c] } * psi;
                        }
                    }
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, dim);
        let a = invert(dofs.transpose());
        Self { degree: deg, cx: &a * &prime.cx, cy: &a * &prime.cy }
    }

    /// Component values and divergence.
    pub fn values_div(&self, x: f64, y: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (m, dx, dy) = monomials_at(self.degree, x, y);
        let (m, dx, dy) = (DVector::from_vec(m), DVector::from_vec(dx), DVector::from_vec(dy));
        let vx: Vec<f64> = (&self.cx * &m).data.into();
        let vy: Vec<f64> = (&self.cy * &m).data.into();
        let div: Vec<f64> = (&self.cx * &dx + &self.cy * &dy).data.into();
        (vx, vy, div)
    }
}

/// Number of Raviart–Thomas dofs per local edge and in the interior for `RT_k`.
pub fn rt_dof_layout(k: usize) -> (usize, usize) {
    (k + 1, k * (k + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{line_rule, triangle_rule};

    #[test]
    fn monomial_integrals() {
        assert!((monomial_integral(0, 0) - 0.5).abs() < 1e-16);
        assert!((monomial_integral(1, 0) - 1.0 / 6.0).abs() < 1e-16);
        assert!((monomial_integral(1, 1) - 1.0 / 24.0).abs() < 1e-16);
        assert!((monomial_integral(2, 0) - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn legendre_orthonormal() {
        let (t, w) = line_rule(20);
        for i in 0..6 {
            for j in 0..6 {
                let s: f64 = t.iter().zip(&w).map(|(&t, &w)| w * legendre_q(i, t) * legendre_q(j, t)).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
            assert!((legendre_q(i, 1.0 - 0.3) - (-1f64).powi(i as i32) * legendre_q(i, 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn orthonormal_basis_mass_is_identity() {
        for k in 0..=6 {
            let b = ScalarBasis::orthonormal(k);
            let rule = triangle_rule(2 * k);
            let n = b.dim();
            let mut g = DMatrix::<f64>::zeros(n, n);
            for i in 0..rule.len() {
                let [x, y] = rule.xy(i);
                let v = b.values(x, y);
                for r in 0..n {
                    for s in 0..n {
                        g[(r, s)] += rule.weights[i] * v[r] * v[s];
                    }
                }
            }
            assert!((g - DMatrix::identity(n, n)).amax() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn lagrange_is_nodal_and_partition_of_unity() {
        for p in 1..=5 {
            let b = ScalarBasis::lagrange(p);
            let nodes = lagrange_nodes(p);
            assert_eq!(nodes.len(), (p + 1) * (p + 2) / 2);
            for (r, x) in nodes.iter().enumerate() {
                let v = b.values(x[0], x[1]);
                for (s, &vs) in v.iter().enumerate() {
                    assert!((vs - if r == s { 1.0 } else { 0.0 }).abs() < 1e-11);
                }
            }
            let (v, g) = b.values_grads(0.21, 0.33);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(g.iter().map(|g| g[0]).sum::<f64>().abs() < 1e-11);
        }
    }

    #[test]
    fn raviart_thomas_dofs_are_dual() {
        for k in 0..=3 {
            let rt = VectorBasis::raviart_thomas(k);
            assert_eq!(rt.dim(), (k + 1) * (k + 3));
            let (t, w) = line_rule(2 * k + 6);
            for l in 0..3 {
                let (a, b) = ref_edge(l);
                let d = [b[0] - a[0], b[1] - a[1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                let n = [d[1] / len, -d[0] / len];
                for j in 0..=k {
                    let row = l * (k + 1) + j;
                    let mut m = vec![0.0; rt.dim()];
                    for (&t, &w) in t.iter().zip(&w) {
                        let x = ref_edge_point(l, t);
                        let (vx, vy, _) = rt.values_div(x[0], x[1]);
                        for c in 0..rt.dim() {
                            m[c] += w * len * legendre_q(j, t) * (vx[c] * n[0] + vy[c] * n[1]);
                        }
                    }
                    for (c, &mc) in m.iter().enumerate() {
                        assert!((mc - if c == row { 1.0 } else { 0.0 }).abs() < 1e-11, "k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn raviart_thomas_divergence_has_degree_k() {
        for k in 0..=3 {
            let rt = VectorBasis::raviart_thomas(k);
            let ortho = ScalarBasis::orthonormal(k);
            let rule = triangle_rule(2 * k + 4);
            for c in 0..rt.dim() {
                // project div onto P_k and check the remainder vanishes
                let mut coeff = vec![0.0; ortho.dim()];
                let mut norm2 = 0.0;
                for i in 0..rule.len() {
                    let [x, y] = rule.xy(i);
                    let (_, _, div) = rt.values_div(x, y);
                    let o = ortho.values(x, y);
                    for a in 0..ortho.dim() {
                        coeff[a] += rule.weights[i] * div[c] * o[a];
                    }
                    norm2 += rule.weights[i] * div[c] * div[c];
                }
                let proj2: f64 = coeff.iter().map(|a| a * a).sum();
                assert!((norm2 - proj2).abs() < 1e-10 * (1.0 + norm2), "k={k} c={c}");
            }
        }
    }
}
