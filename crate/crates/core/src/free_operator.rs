//! Spectral data of the free fiber operator `H₀(ξ)` on `M × 𝕋`.
//!
//! In the basis `φ_{j,n} = |Ω|^{-1/2} φ_j(x) e^{i⟨n,y⟩}` the operator is
//! diagonal with eigenvalues
//!
//! ```text
//! h_{j,n}(τ) = |n + k|² + μ_j − τ² + 2iτ ⟨n + k, b₁⟩,   k = (π + s) b₁ + ξ′,
//! ```
//!
//! where `τ` is the imaginary part of the quasimomentum along `b₁` and `s` an
//! optional real offset along `b₁` (zero on the Thomas line). Since
//! `⟨n, b₁⟩ = 2π n₁`, on the Thomas line `|Im h| = 2|τ|·π|2n₁ + 1| ≥ 2π|τ|`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::lattice::{dot, norm, DualPoint, Lattice, Vector};
use crate::{LabError, Result};

/// Quasimomentum `(π + s + iτ) b₁ + ξ′` with `ξ′ ⊥ b₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiMomentum {
    xi_perp: Vector,
    tau: f64,
    shift: f64,
}

impl QuasiMomentum {
    /// Point `(π + iτ) b₁ + ξ′` of the Thomas line.
    pub fn new(lat: &Lattice, xi_perp: &[f64], tau: f64) -> Result<Self> {
        Self::general(lat, xi_perp, tau, 0.0)
    }

    /// Real quasimomentum `(π + s) b₁ + ξ′`, used for band functions.
    pub fn real(lat: &Lattice, xi_perp: &[f64], shift: f64) -> Result<Self> {
        Self::general(lat, xi_perp, 0.0, shift)
    }

    fn general(lat: &Lattice, xi_perp: &[f64], tau: f64, shift: f64) -> Result<Self> {
        if xi_perp.len() != lat.dim() {
            return Err(LabError::InvalidArgument(format!(
                "ξ′ has {} components, lattice dimension is {}",
                xi_perp.len(),
                lat.dim()
            )));
        }
        if (norm(lat.b1()) - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidLattice("quasimomentum line needs |b1| = 1".into()));
        }
        let along = dot(xi_perp, lat.b1());
        if along.abs() > 1e-12 {
            return Err(LabError::InvalidArgument(format!(
                "ξ′ must be orthogonal to b1, ⟨ξ′, b1⟩ = {along:e}"
            )));
        }
        if !tau.is_finite() || !shift.is_finite() {
            return Err(LabError::InvalidArgument("non-finite quasimomentum".into()));
        }
        Ok(Self { xi_perp: Vector::from_slice(xi_perp), tau, shift })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn xi_perp(&self) -> &[f64] {
        &self.xi_perp
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Real part `k = (π + s) b₁ + ξ′`.
    pub fn real_part(&self, lat: &Lattice) -> Vector {
        let c = PI + self.shift;
        lat.b1().iter().zip(&self.xi_perp).map(|(b, x)| c * b + x).collect()
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self { tau, ..self.clone() }
    }
}

/// Joint mode `(j, n)`: cross-section eigenpair index and dual-lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePair {
    /// 1-based cross-section eigenpair index.
    pub j: usize,
    pub mu: f64,
    pub n: DualPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEigenvalue {
    pub value: Complex64,
    /// Position of the mode in the list it was evaluated on.
    pub mode: usize,
}

/// `|n + k|² + μ_j`, the eigenvalue of `H₀` at the real quasimomentum `k`.
pub fn real_energy(mode: &ModePair, k: &[f64]) -> f64 {
    mode.n.cartesian.iter().zip(k).map(|(a, b)| (a + b).powi(2)).sum::<f64>() + mode.mu
}

pub fn h_value(lat: &Lattice, mode: &ModePair, qm: &QuasiMomentum) -> Complex64 {
    let k = qm.real_part(lat);
    h_value_at(mode, qm, &k)
}

/// [`h_value`] with a precomputed real part `k`.
pub fn h_value_at(mode: &ModePair, qm: &QuasiMomentum, k: &[f64]) -> Complex64 {
    let tau = qm.tau;
    let re = real_energy(mode, k) - tau * tau;
    let odd = (2 * mode.n.coords[0] + 1) as f64;
    // ⟨n + k, b₁⟩ = π(2n₁ + 1) + s, using ⟨n, b₁⟩ = 2π n₁ exactly
    let im = if qm.shift == 0.0 {
        (2.0 * PI * tau) * odd
    } else {
        2.0 * tau * (PI * odd + qm.shift)
    };
    Complex64::new(re, im)
}

pub fn free_eigenvalues(lat: &Lattice, qm: &QuasiMomentum, modes: &[ModePair]) -> Vec<FreeEigenvalue> {
    let k = qm.real_part(lat);
    modes
        .iter()
        .enumerate()
        .map(|(i, m)| FreeEigenvalue { value: h_value_at(m, qm, &k), mode: i })
        .collect()
}

/// `max 1/|h_{j,n}(τ)|` over the modes, i.e. `‖H₀(τ)⁻¹‖` at this truncation.
pub fn free_resolvent_norm(lat: &Lattice, qm: &QuasiMomentum, modes: &[ModePair]) -> Result<f64> {
    let k = qm.real_part(lat);
    let min_abs = modes
        .iter()
        .map(|m| h_value_at(m, qm, &k).norm())
        .fold(f64::INFINITY, f64::min);
    if modes.is_empty() {
        return Ok(0.0);
    }
    if min_abs == 0.0 {
        return Err(LabError::NotInvertible(format!(
            "free fiber operator has eigenvalue 0 at τ = {}",
            qm.tau
        )));
    }
    Ok(1.0 / min_abs)
}

/// Polar factors `Φ = h/|h|` and weights `|h|^{-1/2}` of `H₀(τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseWeights {
    pub phase: Vec<Complex64>,
    pub weight: Vec<f64>,
}

pub fn phase_from_values(values: &[Complex64]) -> Result<PhaseWeights> {
    let mut phase = Vec::with_capacity(values.len());
    let mut weight = Vec::with_capacity(values.len());
    for (i, h) in values.iter().enumerate() {
        let a = h.norm();
        if a == 0.0 {
            return Err(LabError::NotInvertible(format!("mode {i} has h = 0, polar factor undefined")));
        }
        phase.push(h / a);
        weight.push(a.powf(-0.5));
    }
    Ok(PhaseWeights { phase, weight })
}

pub fn phase_and_weights(lat: &Lattice, qm: &QuasiMomentum, modes: &[ModePair]) -> Result<PhaseWeights> {
    let values: Vec<Complex64> = free_eigenvalues(lat, qm, modes).iter().map(|e| e.value).collect();
    phase_from_values(&values)
}

/// Truncation energy `4 τ_max² + margin`.
pub fn truncation_lambda(tau_max: f64, margin: f64) -> f64 {
    4.0 * tau_max * tau_max + margin
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::{BoundaryCondition, CrossSectionSpec};
    use crate::galerkin::Truncation;

    fn line() -> Lattice {
        Lattice::integer(1)
    }

    fn mode(lat: &Lattice, j: usize, mu: f64, n: &[i64]) -> ModePair {
        ModePair { j, mu, n: lat.dual().point(n) }
    }

    #[test]
    fn zero_tau_base_value() {
        let lat = line();
        let qm = QuasiMomentum::new(&lat, &[0.0], 0.0).unwrap();
        let h = h_value(&lat, &mode(&lat, 1, 0.0, &[0]), &qm);
        assert_eq!(h, Complex64::new(PI * PI, 0.0));
    }

    #[test]
    fn tau_five_value() {
        let lat = line();
        let qm = QuasiMomentum::new(&lat, &[0.0], 5.0).unwrap();
        let h = h_value(&lat, &mode(&lat, 1, 0.0, &[0]), &qm);
        // independent evaluation: (π + 5i)² = π² − 25 + 10πi
        let z = Complex64::new(PI, 5.0);
        let want = z * z;
        assert!((h - want).norm() < 1e-13);
        assert!((h.norm() - 34.8690).abs() < 1e-3);
        assert!(h.norm() >= 2.0 * PI * 5.0);
    }

    #[test]
    fn real_quasimomentum_gives_nonnegative_real() {
        let lat = Lattice::new(vec![vec![1.0, 0.0], vec![0.3, 1.1]]).unwrap();
        let qm = QuasiMomentum::real(&lat, &[0.0, 0.7], 0.4).unwrap();
        let spec = CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann };
        let tr = Truncation::new(&lat, &spec, &qm, 400.0).unwrap();
        for m in &tr.modes {
            let h = h_value(&lat, m, &qm);
            assert_eq!(h.im, 0.0);
            assert!(h.re >= 0.0);
        }
    }

    #[test]
    fn xi_perp_must_be_orthogonal() {
        let lat = Lattice::integer(2);
        assert!(QuasiMomentum::new(&lat, &[0.1, 0.5], 1.0).is_err());
        assert!(QuasiMomentum::new(&lat, &[0.0, 0.5], 1.0).is_ok());
        let unnormalized = Lattice::raw(vec![vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(QuasiMomentum::new(&unnormalized, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let lat = line();
        let spec = CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann };
        let qm = QuasiMomentum::new(&lat, &[0.0], 10.0).unwrap();
        let tr = Truncation::new(&lat, &spec, &qm, truncation_lambda(10.0, 100.0)).unwrap();
        let r = free_resolvent_norm(&lat, &qm, &tr.modes).unwrap();
        assert!(r <= 1.0 / (20.0 * PI));

        // μ = 0 family at τ = 5: brute force over the truncated set
        let qm5 = qm.with_tau(5.0);
        let fam: Vec<ModePair> = (-6..=6).map(|n| mode(&lat, 1, 0.0, &[n])).collect();
        let brute = fam
            .iter()
            .map(|m| {
                let x = 2.0 * PI * m.n.coords[0] as f64 + PI;
                let z = Complex64::new(x, 5.0);
                1.0 / (z * z).norm()
            })
            .fold(0.0, f64::max);
        let got = free_resolvent_norm(&lat, &qm5, &fam).unwrap();
        assert!((got - brute).abs() < 1e-15);
        assert!((got - 0.028678).abs() < 1e-5);
    }

    #[test]
    fn zero_eigenvalue_is_not_invertible() {
        let lat = line();
        let qm = QuasiMomentum::real(&lat, &[0.0], -PI).unwrap();
        let modes = vec![mode(&lat, 1, 0.0, &[0])];
        assert!(matches!(free_resolvent_norm(&lat, &qm, &modes), Err(LabError::NotInvertible(_))));
        assert!(phase_and_weights(&lat, &qm, &modes).is_err());
    }

    #[test]
    fn polar_factor_examples() {
        let pw = phase_from_values(&[Complex64::new(-4.0, 0.0), Complex64::new(3.0, 4.0), Complex64::new(0.0, 2.0)])
            .unwrap();
        assert_eq!(pw.phase[0], Complex64::new(-1.0, 0.0));
        assert_eq!(pw.weight[0], 0.5);
        assert!((pw.phase[1] - Complex64::new(0.6, 0.8)).norm() < 1e-15);
        assert!((pw.weight[1] - 5f64.powf(-0.5)).abs() < 1e-15);
        assert!((1.0 / pw.weight[2].powi(2) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn weights_bounded_at_tau_ten() {
        let lat = Lattice::integer(2);
        let spec = CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann };
        let qm = QuasiMomentum::new(&lat, &[0.0, 0.0], 10.0).unwrap();
        let tr = Truncation::new(&lat, &spec, &qm, truncation_lambda(10.0, 100.0)).unwrap();
        let pw = phase_and_weights(&lat, &qm, &tr.modes).unwrap();
        let bound = (2.0 * PI * 10.0).powf(-0.5);
        assert!(pw.weight.iter().all(|w| *w <= bound));
        assert!(pw.phase.iter().all(|p| (p.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn periodic_in_quasimomentum() {
        // ξ′ ↦ ξ′ + b̃₂ permutes the multiset of h over a re-centred truncation.
        let lat = Lattice::new(vec![vec![1.0, 0.0], vec![0.0, 1.3]]).unwrap();
        let spec = CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann };
        let bt2 = lat.dual().basis()[1].clone();
        let xi = [0.0, 0.4];
        let xi2 = [xi[0] + bt2[0], xi[1] + bt2[1]];
        let qa = QuasiMomentum::new(&lat, &xi, 3.0).unwrap();
        let qb = QuasiMomentum::new(&lat, &xi2, 3.0).unwrap();
        let lam = 300.0;
        let ta = Truncation::new(&lat, &spec, &qa, lam).unwrap();
        let tb = Truncation::new(&lat, &spec, &qb, lam).unwrap();
        assert_eq!(ta.modes.len(), tb.modes.len());
        let sorted = |lat: &Lattice, qm: &QuasiMomentum, t: &Truncation| {
            let mut v: Vec<(f64, f64)> = t.modes.iter().map(|m| {
                let h = h_value(lat, m, qm);
                (h.re, h.im)
            }).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            v
        };
        for (a, b) in sorted(&lat, &qa, &ta).iter().zip(sorted(&lat, &qb, &tb)) {
            assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn imaginary_part_bound(tau in -80.0f64..80.0, xi in -3.0f64..3.0, n1 in -50i64..50, n2 in -50i64..50,
                                    mu in 0.0f64..100.0) {
                let lat = Lattice::new(vec![vec![1.0, 0.0], vec![0.2, 0.9]]).unwrap();
                let qm = QuasiMomentum::new(&lat, &[0.0, xi], tau).unwrap();
                let m = ModePair { j: 1, mu, n: lat.dual().point(&[n1, n2]) };
                let h = h_value(&lat, &m, &qm);
                prop_assert!(h.im.abs() >= 2.0 * PI * tau.abs());
                // agrees with the cartesian inner product route
                let k = qm.real_part(&lat);
                let ip: f64 = m.n.cartesian.iter().zip(&k).zip(lat.b1()).map(|((a, b), c)| (a + b) * c).sum();
                prop_assert!((h.im - 2.0 * tau * ip).abs() <= 1e-9 * (1.0 + h.im.abs()));
            }
        }
    }
}
