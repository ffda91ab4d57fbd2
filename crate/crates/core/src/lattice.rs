//! Period lattices `Γ ⊂ ℝᵐ`, their elementary cells and dual lattices.
//!
//! The dual lattice uses the pairing `⟨b_k, b̃_j⟩ = 2π δ_{kj}`, so a dual point
//! `n = Σ n_j b̃_j` always satisfies `⟨n, b₁⟩ = 2π n₁`.

use std::f64::consts::PI;

use ndarray::Array2;
use ndarray_linalg::Inverse;
use smallvec::SmallVec;

use crate::{LabError, Result};

pub type Coords = SmallVec<[i64; 3]>;
pub type Vector = SmallVec<[f64; 3]>;

const GRAM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    basis: Vec<Vec<f64>>,
    dilation: f64,
}

impl Lattice {
    /// Builds a lattice and rescales it by `1/|b₁|` so that `|b₁| = 1`.
    pub fn new(basis: Vec<Vec<f64>>) -> Result<Self> {
        let lat = Self::raw(basis)?;
        let len = norm(&lat.basis[0]);
        let basis = lat
            .basis
            .iter()
            .map(|b| b.iter().map(|x| x / len).collect())
            .collect();
        Ok(Self { basis, dilation: 1.0 / len })
    }

    /// Builds a lattice that must already satisfy `|b₁| = 1`.
    pub fn strict(basis: Vec<Vec<f64>>) -> Result<Self> {
        let lat = Self::raw(basis)?;
        let len = norm(&lat.basis[0]);
        if (len - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidLattice(format!(
                "|b1| = {len}, expected 1 (use Lattice::new to normalize by dilation)"
            )));
        }
        Ok(lat)
    }

    /// Builds a lattice without normalization, e.g. for the torus factor of a
    /// cross-section.
    pub fn raw(basis: Vec<Vec<f64>>) -> Result<Self> {
        let m = basis.len();
        if m == 0 {
            return Err(LabError::InvalidLattice("empty basis".into()));
        }
        if let Some(bad) = basis.iter().position(|b| b.len() != m) {
            return Err(LabError::InvalidLattice(format!(
                "basis vector {} has {} components, expected {m}",
                bad + 1,
                basis[bad].len()
            )));
        }
        if basis.iter().flatten().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidLattice("non-finite basis entry".into()));
        }
        let gram = gram_det(&basis);
        let scale: f64 = basis.iter().map(|b| norm(b).powi(2)).product();
        if !(gram > GRAM_TOL * scale.max(f64::MIN_POSITIVE)) {
            return Err(LabError::InvalidLattice(format!(
                "basis vectors are linearly dependent (Gram determinant {gram:e})"
            )));
        }
        Ok(Self { basis, dilation: 1.0 })
    }

    /// `ℤᵐ` with the standard basis.
    pub fn integer(m: usize) -> Self {
        let basis = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { basis, dilation: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn b1(&self) -> &[f64] {
        &self.basis[0]
    }

    /// Factor applied to the input basis by [`Lattice::new`].
    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    pub fn cell(&self) -> Cell {
        Cell { volume: self.volume() }
    }

    pub fn volume(&self) -> f64 {
        det(&self.basis).abs()
    }

    pub fn dual(&self) -> DualLattice {
        dual_basis(self)
    }

    /// Cartesian point `Σ tᵢ bᵢ` for cell coordinates `t`.
    pub fn point(&self, t: &[f64]) -> Vector {
        let m = self.dim();
        let mut y = Vector::from_elem(0.0, m);
        for (ti, b) in t.iter().zip(&self.basis) {
            for (yk, bk) in y.iter_mut().zip(b) {
                *yk += ti * bk;
            }
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualLattice {
    basis: Vec<Vec<f64>>,
}

impl DualLattice {
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn cartesian(&self, coords: &[i64]) -> Vector {
        let m = self.dim();
        let mut x = Vector::from_elem(0.0, m);
        for (&c, b) in coords.iter().zip(&self.basis) {
            if c != 0 {
                let c = c as f64;
                for (xk, bk) in x.iter_mut().zip(b) {
                    *xk += c * bk;
                }
            }
        }
        x
    }

    pub fn point(&self, coords: &[i64]) -> DualPoint {
        DualPoint { coords: Coords::from_slice(coords), cartesian: self.cartesian(coords) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub coords: Coords,
    pub cartesian: Vector,
}

/// Dual basis with `⟨b_k, b̃_j⟩ = 2π δ_{kj}`, i.e. `B̃ = 2π (B⁻¹)ᵀ` for the
/// row-basis matrix `B`.
pub fn dual_basis(lat: &Lattice) -> DualLattice {
    let m = lat.dim();
    let b = Array2::from_shape_fn((m, m), |(i, j)| lat.basis[i][j]);
    // Lattice constructors already rejected singular bases.
    let inv = b.inv().expect("lattice basis is nonsingular");
    let basis = (0..m)
        .map(|j| (0..m).map(|k| 2.0 * PI * inv[[k, j]]).collect())
        .collect();
    DualLattice { basis }
}

/// All dual points `n` with `|n − center| ≤ radius`, in lexicographic order of
/// their integer coordinates.
pub fn enumerate_dual_points(lat: &Lattice, center: &[f64], radius: f64) -> Vec<DualPoint> {
    let dual = lat.dual();
    let mut out = Vec::new();
    for_each_dual_point(lat, &dual, center, radius, |coords, cart, _| {
        out.push(DualPoint { coords: Coords::from_slice(coords), cartesian: cart.clone() });
    });
    out
}

/// Visits dual points within `radius` of `center` in lexicographic coordinate
/// order, passing coordinates, cartesian vector and `|n − center|²`.
pub(crate) fn for_each_dual_point<F>(
    lat: &Lattice,
    dual: &DualLattice,
    center: &[f64],
    radius: f64,
    mut visit: F,
) where
    F: FnMut(&[i64], &Vector, f64),
{
    if !(radius >= 0.0) {
        return;
    }
    let m = lat.dim();
    // n_j = ⟨b_j, x⟩ / 2π for x = Σ n_j b̃_j, so |n_j − ⟨b_j, c⟩/2π| ≤ r |b_j| / 2π.
    let ranges: Vec<(i64, i64)> = lat
        .basis
        .iter()
        .map(|b| {
            let mid = dot(b, center) / (2.0 * PI);
            let half = radius * norm(b) / (2.0 * PI);
            ((mid - half - 1e-9).ceil() as i64, (mid + half + 1e-9).floor() as i64)
        })
        .collect();
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return;
    }
    let r2 = radius * radius;
    let mut coords: Coords = ranges.iter().map(|r| r.0).collect();
    loop {
        let cart = dual.cartesian(&coords);
        let d2: f64 = cart.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
        if d2 <= r2 {
            visit(&coords, &cart, d2);
        }
        // odometer increment, last coordinate fastest
        let mut axis = m;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if coords[axis] < ranges[axis].1 {
                coords[axis] += 1;
                for later in axis + 1..m {
                    coords[later] = ranges[later].0;
                }
                break;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn gram_det(basis: &[Vec<f64>]) -> f64 {
    let m = basis.len();
    let g: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| dot(&basis[i], &basis[j])).collect())
        .collect();
    det(&g)
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(rows: &[Vec<f64>]) -> f64 {
    let m = rows.len();
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let mut d = 1.0;
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            d = -d;
        }
        d *= a[col][col];
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            for c in col..m {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    d
}
