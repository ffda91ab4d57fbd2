//! Truncated fiber matrices in the joint basis `φ_j(x) e^{i⟨n,y⟩}`.
//!
//! Matrices are kept sparse (diagonal plus coupling triplets). Dense kernels
//! run on the connected components of the coupling graph, which is exact
//! because the truncated operator is the direct sum of its components.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cross_section::{eigenpairs_below, BoundaryCondition, CrossSectionSpec, EigenData};
use crate::free_operator::{h_value_at, real_energy, ModePair, QuasiMomentum};
use crate::lattice::{enumerate_dual_points, Coords, Lattice, Vector};
use crate::linalg::{components, hermitian_eigenvalues, singular_extremes};
use crate::potential::{BoundarySigma, PotentialSpec};
use crate::{LabError, Result};

/// Periodic operator on `M × ℝᵐ`: lattice, cross-section, potential and
/// optional Robin data on a layer.
#[derive(Debug, Clone)]
pub struct Model {
    pub lattice: Lattice,
    pub cross_section: CrossSectionSpec,
    pub potential: PotentialSpec,
    pub sigma: Option<BoundarySigma>,
    /// Decoupled constant levels appended to every fiber matrix.
    pub injected_levels: Vec<f64>,
}

impl Model {
    pub fn new(lattice: Lattice, cross_section: CrossSectionSpec, potential: PotentialSpec) -> Result<Self> {
        cross_section.validate()?;
        if potential.dim() != lattice.dim() {
            return Err(LabError::InvalidArgument(format!(
                "potential has {} longitudinal coordinates, lattice dimension is {}",
                potential.dim(),
                lattice.dim()
            )));
        }
        Ok(Self { lattice, cross_section, potential, sigma: None, injected_levels: Vec::new() })
    }

    pub fn free(lattice: Lattice, cross_section: CrossSectionSpec) -> Result<Self> {
        let m = lattice.dim();
        Self::new(lattice, cross_section, PotentialSpec::zero(m))
    }

    /// Adds Robin data; requires an `Interval(a, Neumann)` cross-section.
    pub fn with_sigma(mut self, sigma: BoundarySigma) -> Result<Self> {
        match self.cross_section {
            CrossSectionSpec::Interval { bc: BoundaryCondition::Neumann, .. } => {}
            CrossSectionSpec::Interval { bc: BoundaryCondition::Dirichlet, .. } => {
                return Err(LabError::Unsupported(
                    "Robin data needs the Neumann (form-core) basis; got a Dirichlet interval".into(),
                ))
            }
            _ => return Err(LabError::Unsupported("Robin data is supported on interval layers only".into())),
        }
        if sigma.dim() != self.lattice.dim() {
            return Err(LabError::InvalidArgument("σ dimension differs from the lattice dimension".into()));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn with_injected_level(mut self, level: f64) -> Self {
        self.injected_levels.push(level);
        self
    }

    /// `d = dim M + m`.
    pub fn dimension(&self) -> usize {
        self.cross_section.dim() + self.lattice.dim()
    }
}

/// Mode set `{(j, n) : |n + k|² + μ_j ≤ Λ_max}` ordered by `j`, then by the
/// lexicographic order of `n`.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub lambda_max: f64,
    pub modes: Vec<ModePair>,
    /// Cross-section eigenpairs with `μ ≤ Λ_max`; `modes[i].j` indexes it 1-based.
    pub eigs: Vec<EigenData>,
}

impl Truncation {
    pub fn new(lat: &Lattice, spec: &CrossSectionSpec, qm: &QuasiMomentum, lambda_max: f64) -> Result<Self> {
        if !(lambda_max.is_finite() && lambda_max >= 0.0) {
            return Err(LabError::InvalidArgument(format!("Λ_max must be finite and ≥ 0, got {lambda_max}")));
        }
        let eigs = eigenpairs_below(spec, lambda_max)?;
        let k = qm.real_part(lat);
        let center: Vector = k.iter().map(|x| -x).collect();
        let mut modes = Vec::new();
        for e in &eigs {
            let radius = (lambda_max - e.mu).max(0.0).sqrt();
            for n in enumerate_dual_points(lat, &center, radius) {
                let mode = ModePair { j: e.index, mu: e.mu, n };
                if real_energy(&mode, &k) <= lambda_max {
                    modes.push(mode);
                }
            }
        }
        Ok(Self { lambda_max, modes, eigs })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_j(&self) -> usize {
        self.modes.iter().map(|m| m.j).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixMeta {
    pub tau: f64,
    pub shift: f64,
    pub lambda: Complex64,
    pub has_sigma: bool,
    pub bc: Option<BoundaryCondition>,
}

/// Truncated fiber matrix `A_{row,col} = ⟨H φ_col, φ_row⟩ − λ δ`.
#[derive(Debug, Clone)]
pub struct GalerkinMatrix {
    /// Diagonal over the truncation modes followed by injected levels.
    pub diag: Vec<Complex64>,
    /// Off-diagonal entries `(row, col, value)`, sorted, unique.
    pub off: Vec<(usize, usize, Complex64)>,
    pub meta: MatrixMeta,
}

impl GalerkinMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let n = self.dim();
        let mut a = Array2::zeros((n, n));
        for (i, d) in self.diag.iter().enumerate() {
            a[[i, i]] = *d;
        }
        for &(r, c, v) in &self.off {
            a[[r, c]] += v;
        }
        a
    }

    /// Connected blocks of the coupling graph.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        components(self.dim(), self.off.iter().map(|&(r, c, _)| (r, c)))
    }

    fn dense_block(&self, idx: &[usize], off_by_row: &HashMap<usize, Vec<(usize, Complex64)>>) -> Array2<Complex64> {
        let pos: HashMap<usize, usize> = idx.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut a = Array2::zeros((idx.len(), idx.len()));
        for (p, &i) in idx.iter().enumerate() {
            a[[p, p]] = self.diag[i];
            if let Some(row) = off_by_row.get(&i) {
                for &(c, v) in row {
                    a[[p, pos[&c]]] += v;
                }
            }
        }
        a
    }

    fn for_blocks<T: Send>(&self, f: impl Fn(&Array2<Complex64>) -> Result<T> + Sync) -> Result<Vec<T>> {
        let mut by_row: HashMap<usize, Vec<(usize, Complex64)>> = HashMap::new();
        for &(r, c, v) in &self.off {
            by_row.entry(r).or_default().push((c, v));
        }
        let blocks = self.blocks();
        blocks.par_iter().map(|idx| f(&self.dense_block(idx, &by_row))).collect()
    }

    /// `max |A − A*|` over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut map: HashMap<(usize, usize), Complex64> = HashMap::new();
        for &(r, c, v) in &self.off {
            *map.entry((r, c)).or_default() += v;
        }
        let mut worst = self.diag.iter().map(|d| d.im.abs() * 2.0).fold(0.0, f64::max);
        for (&(r, c), v) in &map {
            let t = map.get(&(c, r)).copied().unwrap_or_default();
            worst = worst.max((v - t.conj()).norm());
        }
        worst
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> Result<f64> {
        Ok(self.for_blocks(singular_extremes)?.iter().map(|s| s.1).fold(0.0, f64::max))
    }
}

fn mode_index(modes: &[ModePair]) -> HashMap<(usize, Coords), usize> {
    modes.iter().enumerate().map(|(i, m)| ((m.j, m.n.coords.clone()), i)).collect()
}

fn add_coords(a: &[i64], b: &[i64]) -> Coords {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Assembles `H(ξ) − λ` on the truncation for `ξ = (π + s + iτ) b₁ + ξ′`.
pub fn assemble_general(model: &Model, tr: &Truncation, qm: &QuasiMomentum, lambda: Complex64) -> Result<GalerkinMatrix> {
    let lat = &model.lattice;
    model.potential.check_caps(tr.max_j())?;
    let k = qm.real_part(lat);
    let modes = &tr.modes;
    let mut diag: Vec<Complex64> = modes.iter().map(|m| h_value_at(m, qm, &k) - lambda).collect();
    let index = mode_index(modes);
    let mut entries: HashMap<(usize, usize), Complex64> = HashMap::new();

    let v = &model.potential;
    for (col, from) in modes.iter().enumerate() {
        for (nu, c) in v.longitudinal() {
            if nu.iter().all(|x| *x == 0) {
                diag[col] += c;
                continue;
            }
            if let Some(&row) = index.get(&(from.j, add_coords(&from.n.coords, nu))) {
                *entries.entry((row, col)).or_default() += c;
            }
        }
    }
    if !v.coupled().is_empty() {
        let mut by_j: HashMap<usize, Vec<(usize, &Coords, Complex64)>> = HashMap::new();
        for ((jp, j, nu), c) in v.coupled() {
            by_j.entry(*j).or_default().push((*jp, nu, *c));
        }
        for (col, from) in modes.iter().enumerate() {
            let Some(list) = by_j.get(&from.j) else { continue };
            for &(jp, nu, c) in list {
                if let Some(&row) = index.get(&(jp, add_coords(&from.n.coords, nu))) {
                    if row == col {
                        diag[col] += c;
                    } else {
                        *entries.entry((row, col)).or_default() += c;
                    }
                }
            }
        }
    }
    if let Some(sigma) = &model.sigma {
        let (a, bc) = model
            .cross_section
            .interval()
            .ok_or_else(|| LabError::Unsupported("Robin data without an interval factor".into()))?;
        // endpoint values of the cosine basis
        let ends = |j: usize| -> (f64, f64) {
            let e = &tr.eigs[j - 1];
            let jj = e.interval.expect("interval mode");
            (
                crate::cross_section::interval_mode(a, bc, jj, 0.0),
                crate::cross_section::interval_mode(a, bc, jj, a),
            )
        };
        let mut by_n: HashMap<Coords, Vec<usize>> = HashMap::new();
        for (i, m) in modes.iter().enumerate() {
            by_n.entry(m.n.coords.clone()).or_default().push(i);
        }
        for nu in sigma.support() {
            let s0 = sigma.coefficient_zero(&nu);
            let sa = sigma.coefficient_a(&nu);
            for (col, from) in modes.iter().enumerate() {
                let target = add_coords(&from.n.coords, &nu);
                let Some(rows) = by_n.get(&target) else { continue };
                let (f0, fa) = ends(from.j);
                for &row in rows {
                    let (g0, ga) = ends(modes[row].j);
                    let val = sa * (fa * ga) - s0 * (f0 * g0);
                    if row == col {
                        diag[col] += val;
                    } else {
                        *entries.entry((row, col)).or_default() += val;
                    }
                }
            }
        }
    }
    for level in &model.injected_levels {
        diag.push(Complex64::new(*level, 0.0) - lambda);
    }
    let mut off: Vec<(usize, usize, Complex64)> = entries.into_iter().filter(|(_, v)| *v != Complex64::default()).map(|((r, c), v)| (r, c, v)).collect();
    off.sort_by_key(|&(r, c, _)| (r, c));
    Ok(GalerkinMatrix {
        diag,
        off,
        meta: MatrixMeta {
            tau: qm.tau(),
            shift: qm.shift(),
            lambda,
            has_sigma: model.sigma.is_some(),
            bc: model.cross_section.interval().map(|(_, bc)| bc),
        },
    })
}

/// Hermitian fiber matrix at a real quasimomentum (`τ = 0`).
pub fn assemble(model: &Model, tr: &Truncation, qm: &QuasiMomentum) -> Result<GalerkinMatrix> {
    if qm.tau() != 0.0 {
        return Err(LabError::InvalidArgument("assemble expects a real quasimomentum (τ = 0)".into()));
    }
    assemble_general(model, tr, qm, Complex64::default())
}

/// `H(τ) − λ` on the Thomas line, `τ ≠ 0`.
pub fn assemble_thomas(model: &Model, tr: &Truncation, qm: &QuasiMomentum, lambda: Complex64) -> Result<GalerkinMatrix> {
    if qm.tau() == 0.0 {
        return Err(LabError::InvalidArgument("assemble_thomas expects τ ≠ 0".into()));
    }
    assemble_general(model, tr, qm, lambda)
}

/// `1/σ_min`, or [`LabError::NotInvertible`] when `σ_min < 1e−14 ‖A‖`.
pub fn resolvent_norm(mat: &GalerkinMatrix) -> Result<f64> {
    if mat.dim() == 0 {
        return Err(LabError::InvalidArgument("empty matrix".into()));
    }
    if mat.diag.iter().chain(mat.off.iter().map(|e| &e.2)).any(|z| !z.is_finite()) {
        return Err(LabError::InvalidArgument("matrix has non-finite entries".into()));
    }
    let (min, max) = if mat.off.is_empty() {
        mat.diag.iter().map(|z| z.norm()).fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s), hi.max(s)))
    } else {
        mat.for_blocks(singular_extremes)?
            .into_iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
    };
    if !(min >= 1e-14 * max) || min == 0.0 {
        return Err(LabError::NotInvertible(format!(
            "σ_min = {min:e} below 1e-14·‖A‖ = {:e} at this truncation",
            1e-14 * max
        )));
    }
    Ok(1.0 / min)
}

/// All eigenvalues of a Hermitian fiber matrix, ascending.
pub fn hermitian_spectrum(mat: &GalerkinMatrix) -> Result<Vec<f64>> {
    let mut all: Vec<f64> = if mat.off.is_empty() {
        mat.diag.iter().map(|z| z.re).collect()
    } else {
        mat.for_blocks(hermitian_eigenvalues)?.into_iter().flatten().collect()
    };
    all.sort_by(f64::total_cmp);
    Ok(all)
}

/// Lowest eigenvalues along a grid of shifts `s` of the real quasimomentum
/// `(π + s) b₁ + ξ′`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub shifts: Vec<f64>,
    /// `bands[i]` holds the sorted lowest eigenvalues at `shifts[i]`.
    pub bands: Vec<Vec<f64>>,
}

impl BandTable {
    /// Values of band `b` (0-based) across the grid.
    pub fn band(&self, b: usize) -> Vec<f64> {
        self.bands.iter().map(|col| col[b]).collect()
    }

    pub fn count(&self) -> usize {
        self.bands.first().map_or(0, |c| c.len())
    }
}

pub fn band_functions(model: &Model, xi_perp: &[f64], shifts: &[f64], count: usize, lambda_max: f64) -> Result<BandTable> {
    let cols: Vec<Result<Vec<f64>>> = shifts
        .par_iter()
        .map(|&s| {
            let qm = QuasiMomentum::real(&model.lattice, xi_perp, s)?;
            let tr = Truncation::new(&model.lattice, &model.cross_section, &qm, lambda_max)?;
            let mat = assemble(model, &tr, &qm)?;
            if count == 0 || 4 * count > mat.dim() {
                return Err(LabError::InvalidArgument(format!(
                    "band count {count} must be between 1 and a quarter of the matrix size {} at Λ_max = {lambda_max}",
                    mat.dim()
                )));
            }
            let mut eig = hermitian_spectrum(&mat)?;
            eig.truncate(count);
            Ok(eig)
        })
        .collect();
    let bands = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BandTable { shifts: shifts.to_vec(), bands })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_operator::{free_resolvent_norm, truncation_lambda};
    use std::f64::consts::PI;

    fn mathieu(bc: BoundaryCondition) -> Model {
        Model::new(
            Lattice::integer(1),
            CrossSectionSpec::Interval { length: PI, bc },
            PotentialSpec::cosine(1, 0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn free_layer() -> Model {
        Model::free(
            Lattice::integer(2),
            CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann },
        )
        .unwrap()
    }

    /// Independent assembly: quadrature of `∫∫ V φ_col conj φ_row` plus the
    /// boundary integrals, on grids unrelated to the coefficient tensor.
    fn oracle_entry(model: &Model, v: &dyn Fn(f64, f64) -> f64, sigma: Option<&dyn Fn(f64) -> (f64, f64)>,
                    tr: &Truncation, col: &ModePair, row: &ModePair) -> Complex64 {
        let (a, bc) = model.cross_section.interval().unwrap();
        let jc = tr.eigs[col.j - 1].interval.unwrap();
        let jr = tr.eigs[row.j - 1].interval.unwrap();
        let (xs, xw) = crate::quadrature::gauss_legendre(80, 0.0, a);
        let nt = 64;
        let dn = (col.n.coords[0] - row.n.coords[0]) as f64;
        let mut s = Complex64::default();
        for (x, w) in xs.iter().zip(&xw) {
            let p = crate::cross_section::interval_mode(a, bc, jc, *x) * crate::cross_section::interval_mode(a, bc, jr, *x);
            for it in 0..nt {
                let t = it as f64 / nt as f64;
                s += w / nt as f64 * v(*x, t) * p * Complex64::from_polar(1.0, 2.0 * PI * dn * t);
            }
        }
        if let Some(sig) = sigma {
            let e0 = crate::cross_section::interval_mode(a, bc, jc, 0.0) * crate::cross_section::interval_mode(a, bc, jr, 0.0);
            let ea = crate::cross_section::interval_mode(a, bc, jc, a) * crate::cross_section::interval_mode(a, bc, jr, a);
            for it in 0..nt {
                let t = it as f64 / nt as f64;
                let (s0, sa) = sig(t);
                s += (sa * ea - s0 * e0) / nt as f64 * Complex64::from_polar(1.0, 2.0 * PI * dn * t);
            }
        }
        s
    }

    #[test]
    fn free_matrix_is_diagonal() {
        let m = free_layer();
        let qm = QuasiMomentum::real(&m.lattice, &[0.0, 0.3], 0.0).unwrap();
        let tr = Truncation::new(&m.lattice, &m.cross_section, &qm, 200.0).unwrap();
        let a = assemble(&m, &tr, &qm).unwrap();
        assert!(a.off.is_empty());
        let k = qm.real_part(&m.lattice);
        for (d, mode) in a.diag.iter().zip(&tr.modes) {
            let want: f64 = mode.n.cartesian.iter().zip(&k).map(|(x, y)| (x + y).powi(2)).sum::<f64>() + mode.mu;
            assert!((d.re - want).abs() < 1e-12 && d.im == 0.0);
        }
    }

    #[test]
    fn truncation_matches_brute_force() {
        let m = free_layer();
        let qm = QuasiMomentum::real(&m.lattice, &[0.0, 0.3], 0.2).unwrap();
        let lam = 150.0;
        let tr = Truncation::new(&m.lattice, &m.cross_section, &qm, lam).unwrap();
        let k = qm.real_part(&m.lattice);
        let mut count = 0;
        for j in 0..20u32 {
            for n1 in -10i64..=10 {
                for n2 in -10i64..=10 {
                    let v = (2.0 * PI * n1 as f64 + k[0]).powi(2) + (2.0 * PI * n2 as f64 + k[1]).powi(2) + (j * j) as f64;
                    if v <= lam {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(tr.len(), count);
    }

    #[test]
    fn mathieu_entries_match_quadrature() {
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            let m = mathieu(bc);
            let vfun = |_: f64, t: f64| 2.0 * (2.0 * PI * t).cos();
            for tau in [0.0, 50.0] {
                let qm = QuasiMomentum::new(&m.lattice, &[0.0], tau).unwrap();
                let tr = Truncation::new(&m.lattice, &m.cross_section, &qm, 120.0).unwrap();
                let a = if tau == 0.0 { assemble(&m, &tr, &qm) } else { assemble_thomas(&m, &tr, &qm, Complex64::default()) }.unwrap();
                let dense = a.to_dense();
                let k = qm.real_part(&m.lattice);
                for (r, row) in tr.modes.iter().enumerate() {
                    for (c, col) in tr.modes.iter().enumerate() {
                        let mut want = oracle_entry(&m, &vfun, None, &tr, col, row);
                        if r == c {
                            want += h_value_at(col, &qm, &k);
                        }
                        assert!((dense[[r, c]] - want).norm() < 1e-8, "{bc:?} τ={tau} ({r},{c})");
                    }
                }
                // pentadiagonal in n for fixed j: only |Δn| = 1 couples
                assert!(a.off.iter().all(|&(r, c, _)| tr.modes[r].j == tr.modes[c].j
                    && (tr.modes[r].n.coords[0] - tr.modes[c].n.coords[0]).abs() == 1));
            }
        }
    }

    #[test]
    fn robin_entries_match_boundary_integrals() {
        let s = 0.7;
        let m = Model::free(Lattice::integer(1), CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann })
            .unwrap()
            .with_sigma(crate::potential::BoundarySigma::constant(1, s))
            .unwrap();
        let qm = QuasiMomentum::real(&m.lattice, &[0.0], 0.0).unwrap();
        let tr = Truncation::new(&m.lattice, &m.cross_section, &qm, 60.0).unwrap();
        let a = assemble(&m, &tr, &qm).unwrap().to_dense();
        let k = qm.real_part(&m.lattice);
        let zero = |_: f64, _: f64| 0.0;
        let sig = |_: f64| (s, s);
        for (r, row) in tr.modes.iter().enumerate() {
            for (c, col) in tr.modes.iter().enumerate() {
                let mut want = oracle_entry(&m, &zero, Some(&sig), &tr, col, row);
                if r == c {
                    want += h_value_at(col, &qm, &k);
                }
                assert!((a[[r, c]] - want).norm() < 1e-10);
            }
        }
        // cosine endpoint values: φ_0 = π^{-1/2}, φ_j(π) = ±√(2/π)
        let find = |j: u32, n: i64| tr.modes.iter().position(|md| tr.eigs[md.j - 1].interval == Some(j) && md.n.coords[0] == n).unwrap();
        let (i0, i1, i2) = (find(0, 0), find(1, 0), find(2, 0));
        assert!((a[[i1, i0]].re - s * (-(2.0f64 / PI).sqrt() * PI.powf(-0.5) - (2.0f64 / PI).sqrt() * PI.powf(-0.5))).abs() < 1e-14);
        assert!((a[[i2, i1]].re - s * (-(2.0 / PI) - 2.0 / PI)).abs() < 1e-14);
        assert!(Model::free(Lattice::integer(1), CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Dirichlet })
            .unwrap()
            .with_sigma(crate::potential::BoundarySigma::constant(1, s))
            .is_err());
    }

    #[test]
    fn thomas_free_resolvent_matches() {
        let m = free_layer();
        for tau in [1.0, 10.0] {
            let qm = QuasiMomentum::new(&m.lattice, &[0.0, 0.0], tau).unwrap();
            let tr = Truncation::new(&m.lattice, &m.cross_section, &qm, truncation_lambda(tau, 100.0)).unwrap();
            let a = assemble_thomas(&m, &tr, &qm, Complex64::default()).unwrap();
            let r = resolvent_norm(&a).unwrap();
            assert_eq!(r, free_resolvent_norm(&m.lattice, &qm, &tr.modes).unwrap());
            assert!(r * 2.0 * PI * tau <= 1.0);
            let shifted = assemble_thomas(&m, &tr, &qm, Complex64::new(7.0, 0.0)).unwrap();
            for (x, y) in shifted.diag.iter().zip(&a.diag) {
                assert_eq!(*x, y - 7.0);
            }
        }
        let qm = QuasiMomentum::new(&m.lattice, &[0.0, 0.0], 0.0).unwrap();
        let tr = Truncation::new(&m.lattice, &m.cross_section, &qm, 10.0).unwrap();
        assert!(assemble_thomas(&m, &tr, &qm, Complex64::default()).is_err());
    }

    #[test]
    fn resolvent_of_small_diagonal() {
        let mat = GalerkinMatrix {
            diag: vec![Complex64::new(0.0, 2.0), Complex64::new(3.0, 0.0)],
            off: vec![],
            meta: MatrixMeta { tau: 1.0, shift: 0.0, lambda: Complex64::default(), has_sigma: false, bc: None },
        };
        assert_eq!(resolvent_norm(&mat).unwrap(), 0.5);
        let mut sing = mat.clone();
        sing.diag[0] = Complex64::default();
        assert!(matches!(resolvent_norm(&sing), Err(LabError::NotInvertible(_))));
    }

    #[test]
    fn random_hermitian_resolvent_against_nalgebra() {
        let n = 50;
        let v = crate::rng::random_unit_vector(n * n, 3, 1);
        let mut diag = Vec::new();
        let mut off = Vec::new();
        for r in 0..n {
            diag.push(Complex64::new(v[r * n + r].re * 10.0 + 0.3, 0.0));
            for c in 0..r {
                let z = v[r * n + c] * 10.0;
                off.push((r, c, z));
                off.push((c, r, z.conj()));
            }
        }
        off.sort_by_key(|e| (e.0, e.1));
        let mat = GalerkinMatrix {
            diag,
            off,
            meta: MatrixMeta { tau: 0.0, shift: 0.0, lambda: Complex64::default(), has_sigma: false, bc: None },
        };
        let dense = mat.to_dense();
        let nm = nalgebra::DMatrix::from_fn(n, n, |r, c| dense[[r, c]]);
        let want = 1.0 / nm.singular_values().min();
        let got = resolvent_norm(&mat).unwrap();
        assert!((got - want).abs() < 1e-10 * want);
        assert!(mat.hermiticity_defect() < 1e-14);
    }

    #[test]
    fn mathieu_is_hermitian_and_converged() {
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            let m = mathieu(bc);
            let qm = QuasiMomentum::real(&m.lattice, &[0.0], 0.37).unwrap();
            let lo = Truncation::new(&m.lattice, &m.cross_section, &qm, 400.0).unwrap();
            let hi = Truncation::new(&m.lattice, &m.cross_section, &qm, 800.0).unwrap();
            let a = assemble(&m, &lo, &qm).unwrap();
            assert!(a.hermiticity_defect() <= 1e-10 * a.operator_norm().unwrap());
            let e1 = hermitian_spectrum(&a).unwrap();
            let e2 = hermitian_spectrum(&assemble(&m, &hi, &qm).unwrap()).unwrap();
            for b in 0..8 {
                assert!((e1[b] - e2[b]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn free_bands_closed_form() {
        let m = Model::free(Lattice::integer(1), CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann }).unwrap();
        let shifts = [-PI, -1.0, 0.0, 0.5];
        let t = band_functions(&m, &[0.0], &shifts, 6, 200.0).unwrap();
        for (i, s) in shifts.iter().enumerate() {
            let mut want: Vec<f64> = (0..10)
                .flat_map(|j| (-5i64..=5).map(move |n| (2.0 * PI * n as f64 + PI + s).powi(2) + (j * j) as f64))
                .collect();
            want.sort_by(f64::total_cmp);
            for b in 0..6 {
                assert!((t.bands[i][b] - want[b]).abs() < 1e-10);
            }
        }
        assert!(t.bands[0][0].abs() < 1e-12);
        assert!(band_functions(&m, &[0.0], &[0.0], 1000, 50.0).is_err());
    }

    #[test]
    fn mathieu_opens_gap() {
        // Free bands cross at k = ±π (s = 0, shifted quasimomentum π): the
        // first two free levels coincide there; V = 2cos opens a gap.
        let free = Model::free(Lattice::integer(1), CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann }).unwrap();
        let m = mathieu(BoundaryCondition::Neumann);
        let f = band_functions(&free, &[0.0], &[0.0], 2, 400.0).unwrap();
        let v = band_functions(&m, &[0.0], &[0.0], 2, 400.0).unwrap();
        assert!((f.bands[0][1] - f.bands[0][0]).abs() < 1e-12);
        assert!(v.bands[0][1] - v.bands[0][0] > 0.5);
    }

    #[test]
    fn dirichlet_raises_bottom() {
        for lam in [100.0, 300.0] {
            let qm_s = 0.4;
            let neu = Model::free(Lattice::integer(1), CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann }).unwrap();
            let dir = Model::free(Lattice::integer(1), CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Dirichlet }).unwrap();
            let a = band_functions(&neu, &[0.0], &[qm_s], 1, lam).unwrap();
            let b = band_functions(&dir, &[0.0], &[qm_s], 1, lam).unwrap();
            assert!(b.bands[0][0] >= a.bands[0][0]);
        }
    }

    #[test]
    fn inconsistent_caps_rejected() {
        let spec = CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann };
        let v = PotentialSpec::from_parts(
            1,
            std::iter::empty(),
            [((1, 2, Coords::from_slice(&[0])), Complex64::new(0.1, 0.0)), ((2, 1, Coords::from_slice(&[0])), Complex64::new(0.1, 0.0))],
            2,
        )
        .unwrap();
        let m = Model::new(Lattice::integer(1), spec, v).unwrap();
        let qm = QuasiMomentum::real(&m.lattice, &[0.0], 0.0).unwrap();
        let tr = Truncation::new(&m.lattice, &m.cross_section, &qm, 50.0).unwrap();
        assert!(matches!(assemble(&m, &tr, &qm), Err(LabError::InconsistentCaps(_))));
    }
}
