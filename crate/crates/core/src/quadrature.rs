//! Gauss–Legendre rules on [0, 1] and collapsed (Duffy) rules on the reference triangle
//! with vertices (0,0), (1,0), (0,1).

/// Quadrature on the reference triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates `(1 − x̂ − ŷ, x̂, ŷ)`.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Reference coordinates `(x̂, ŷ)` of point `i`.
    pub fn xy(&self, i: usize) -> [f64; 2] {
        [self.points[i][1], self.points[i][2]]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `n`-point Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wt;
        w[n - 1 - i] = 0.5 * wt;
    }
    (x, w)
}

/// Gauss–Legendre rule on [0, 1] exact for polynomials of degree `degree`.
pub fn line_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(degree / 2 + 1)
}

/// Collapsed tensor rule exact for total degree `degree`; weights sum to 1/2.
pub fn triangle_rule(degree: usize) -> QuadratureRule {
    // the collapse adds one degree in the first direction through the Jacobian (1 − u)
    let (gu, wu) = gauss_legendre((degree + 3) / 2);
    let (gv, wv) = gauss_legendre(degree / 2 + 1);
    let mut points = Vec::with_capacity(gu.len() * gv.len());
    let mut weights = Vec::with_capacity(gu.len() * gv.len());
    for (&u, &a) in gu.iter().zip(&wu) {
        for (&v, &b) in gv.iter().zip(&wv) {
            let x = u;
            let y = (1.0 - u) * v;
            points.push([1.0 - x - y, x, y]);
            weights.push(a * b * (1.0 - u));
        }
    }
    QuadratureRule { points, weights, degree }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn gauss_legendre_moments() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn triangle_rule_monomials() {
        for d in 0..=14 {
            let r = triangle_rule(d);
            assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d {
                for b in 0..=d - a {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let q: f64 = (0..r.len())
                        .map(|i| {
                            let [x, y] = r.xy(i);
                            r.weights[i] * x.powi(a as i32) * y.powi(b as i32)
                        })
                        .sum();
                    assert!((q - exact).abs() < 1e-14, "d={d} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn assembly_degree_is_covered() {
        for p in 1..=4 {
            for dp in 0..=2 {
                let d = 2 * (p + dp) + 2;
                assert!(triangle_rule(d).degree >= 2 * (p + dp) + 2);
            }
        }
    }
}
