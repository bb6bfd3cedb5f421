//! Isotropic plane-strain stiffness and compliance.
//!
//! Tensors are stored either as [`SymTensor2`] (three independent components) or as full
//! row-major 2×2 arrays `[xx, xy, yx, yy]` when skew parts matter. Both tensors act trivially
//! on the skew part of a full tensor.

use crate::error::{Error, Result};

/// Lamé pair and the derived Poisson ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    lambda: f64,
    mu: f64,
    nu: f64,
}

impl MaterialParams {
    /// Compressible isotropic material; requires `mu > 0` and `lambda >= 0`.
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !(lambda >= 0.0) || !lambda.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidInput(format!(
                "material requires mu > 0 and lambda >= 0, got lambda={lambda}, mu={mu}"
            )));
        }
        Ok(Self { lambda, mu, nu: lambda / (2.0 * (lambda + mu)) })
    }

    /// Nondimensional λ = μ = 1.
    pub fn unit() -> Self {
        Self::new(1.0, 1.0).unwrap()
    }

    /// Steel constants (λ = 123, μ = 79.3), nondimensionalized.
    pub fn steel() -> Self {
        Self::new(123.0, 79.3).unwrap()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// Symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl SymTensor2 {
    pub const fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 1.0, 0.0)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Row-major `[xx, xy, yx, yy]`.
    pub fn to_full(&self) -> [f64; 4] {
        [self.xx, self.xy, self.xy, self.yy]
    }

    /// Symmetric part of a full row-major tensor.
    pub fn sym_of(full: &[f64; 4]) -> Self {
        Self::new(full[0], full[3], 0.5 * (full[1] + full[2]))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.xx, s * self.yy, s * self.xy)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.xx * self.xx + self.yy * self.yy + 2.0 * self.xy * self.xy).sqrt()
    }
}

/// Skew tensor `[[0, w], [-w, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SkewScalar {
    pub w: f64,
}

impl SkewScalar {
    pub fn to_full(&self) -> [f64; 4] {
        [0.0, self.w, -self.w, 0.0]
    }

    /// Skew part of a full row-major tensor.
    pub fn skew_of(full: &[f64; 4]) -> Self {
        Self { w: 0.5 * (full[1] - full[2]) }
    }
}

/// `λ tr(ε) I + 2μ ε`.
pub fn stiffness_apply(eps: SymTensor2, m: &MaterialParams) -> SymTensor2 {
    let lt = m.lambda * eps.trace();
    SymTensor2::new(lt + 2.0 * m.mu * eps.xx, lt + 2.0 * m.mu * eps.yy, 2.0 * m.mu * eps.xy)
}

/// Inverse of [`stiffness_apply`] on symmetric tensors:
/// `(σ − λ/(2(λ+μ)) tr(σ) I) / 2μ`.
pub fn compliance_apply(sig: SymTensor2, m: &MaterialParams) -> SymTensor2 {
    let shift = m.lambda / (2.0 * (m.lambda + m.mu)) * sig.trace();
    let s = 1.0 / (2.0 * m.mu);
    SymTensor2::new(s * (sig.xx - shift), s * (sig.yy - shift), s * sig.xy)
}

/// Stiffness on a full tensor; the skew part is annihilated.
pub fn stiffness_full(full: &[f64; 4], m: &MaterialParams) -> [f64; 4] {
    stiffness_apply(SymTensor2::sym_of(full), m).to_full()
}

/// Compliance on a full tensor; the skew part is annihilated.
pub fn compliance_full(full: &[f64; 4], m: &MaterialParams) -> [f64; 4] {
    compliance_apply(SymTensor2::sym_of(full), m).to_full()
}

pub fn poisson_ratio(m: &MaterialParams) -> f64 {
    m.lambda / (2.0 * (m.lambda + m.mu))
}

/// Out-of-plane stress `λ tr(ε)` of the plane-strain state.
pub fn out_of_plane_stress(eps: SymTensor2, m: &MaterialParams) -> f64 {
    m.lambda * eps.trace()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Voigt form [xx, yy, xy] with engineering shear is avoided on purpose: the 3×3 map below
    // acts on the tensor components directly, so inverting it is an independent route.
    fn voigt_stiffness(m: &MaterialParams) -> [[f64; 3]; 3] {
        let (l, mu) = (m.lambda(), m.mu());
        [[l + 2.0 * mu, l, 0.0], [l, l + 2.0 * mu, 0.0], [0.0, 0.0, 2.0 * mu]]
    }

    fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
        let mut m = [[0.0; 4]; 3];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&a[i]);
            m[i][3] = b[i];
        }
        for c in 0..3 {
            let piv = (c..3).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..3 {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..4 {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        [m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]]
    }

    #[test]
    fn stiffness_examples() {
        let m = MaterialParams::unit();
        assert_eq!(stiffness_apply(SymTensor2::identity(), &m), SymTensor2::new(4.0, 4.0, 0.0));
        assert_eq!(stiffness_apply(SymTensor2::default(), &m), SymTensor2::default());
        assert_eq!(
            stiffness_apply(SymTensor2::new(0.0, 0.0, 1.0), &m),
            SymTensor2::new(0.0, 0.0, 2.0)
        );
    }

    #[test]
    fn compliance_examples() {
        let m = MaterialParams::unit();
        let back = compliance_apply(SymTensor2::new(4.0, 4.0, 0.0), &m);
        assert!((back.xx - 1.0).abs() < 1e-15 && (back.yy - 1.0).abs() < 1e-15);
        assert_eq!(back.xy, 0.0);
        assert_eq!(compliance_apply(SymTensor2::default(), &m), SymTensor2::default());
    }

    #[test]
    fn compliance_matches_voigt_inversion() {
        let m = MaterialParams::new(2.0, 0.7).unwrap();
        let a = voigt_stiffness(&m);
        for (xx, yy, xy) in [(0.3, -1.2, 0.8), (1.0, 2.0, -3.0), (-0.25, 0.5, 0.125)] {
            let sig = SymTensor2::new(xx, yy, xy);
            let oracle = solve3(a, [xx, yy, xy]);
            let c = compliance_apply(sig, &m);
            assert!((c.xx - oracle[0]).abs() < 1e-13);
            assert!((c.yy - oracle[1]).abs() < 1e-13);
            assert!((c.xy - oracle[2]).abs() < 1e-13);
            let round = compliance_apply(stiffness_apply(sig, &m), &m);
            assert!((round.xx - xx).abs() + (round.yy - yy).abs() + (round.xy - xy).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_ratio_values() {
        let steel = MaterialParams::steel();
        assert!((poisson_ratio(&steel) - 0.304).abs() < 5e-4);
        assert_eq!(poisson_ratio(&MaterialParams::unit()), 0.25);
        assert_eq!(poisson_ratio(&MaterialParams::new(0.0, 1.0).unwrap()), 0.0);
        assert_eq!(steel.nu(), poisson_ratio(&steel));
    }

    #[test]
    fn skew_part_is_annihilated() {
        let m = MaterialParams::new(3.0, 0.4).unwrap();
        let skew = SkewScalar { w: 1.7 }.to_full();
        assert_eq!(stiffness_full(&skew, &m), [0.0; 4]);
        assert_eq!(compliance_full(&skew, &m), [0.0; 4]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MaterialParams::new(1.0, 0.0).is_err());
        assert!(MaterialParams::new(-1.0, 1.0).is_err());
    }
}
