//! Cross-sections `M` with closed-form Laplace eigendata.
//!
//! Supported: a circle, an interval with Dirichlet or Neumann conditions, a
//! flat torus and an interval times a flat torus. Eigenpairs are listed in
//! non-decreasing order of `μ`; degenerate eigenvalues are ordered by their
//! integer label (interval index first, then torus coordinates) and share one
//! representative value of `μ`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::lattice::{for_each_dual_point, Coords, DualLattice, Lattice, Vector};
use crate::quadrature::{gauss_legendre, periodic_trapezoid};
use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CrossSectionSpec {
    Circle { length: f64 },
    Interval { length: f64, bc: BoundaryCondition },
    FlatTorus(Lattice),
    IntervalTimesTorus { length: f64, bc: BoundaryCondition, torus: Lattice },
}

impl CrossSectionSpec {
    pub fn validate(&self) -> Result<()> {
        let len = match self {
            Self::Circle { length } | Self::Interval { length, .. } => *length,
            Self::IntervalTimesTorus { length, .. } => *length,
            Self::FlatTorus(_) => 1.0,
        };
        if !(len > 0.0 && len.is_finite()) {
            return Err(LabError::InvalidArgument(format!(
                "cross-section length must be positive, got {len}"
            )));
        }
        Ok(())
    }

    /// `k = dim M`.
    pub fn dim(&self) -> usize {
        match self {
            Self::Circle { .. } | Self::Interval { .. } => 1,
            Self::FlatTorus(t) => t.dim(),
            Self::IntervalTimesTorus { torus, .. } => 1 + torus.dim(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Self::Circle { length } | Self::Interval { length, .. } => *length,
            Self::FlatTorus(t) => t.volume(),
            Self::IntervalTimesTorus { length, torus, .. } => length * torus.volume(),
        }
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self, Self::Interval { .. } | Self::IntervalTimesTorus { .. })
    }

    /// Interval factor `[0, a]` and its boundary condition, if any.
    pub fn interval(&self) -> Option<(f64, BoundaryCondition)> {
        match self {
            Self::Interval { length, bc } | Self::IntervalTimesTorus { length, bc, .. } => {
                Some((*length, *bc))
            }
            _ => None,
        }
    }

    /// Periodic factor as a (non-normalized) lattice, if any.
    pub fn periodic(&self) -> Option<Lattice> {
        match self {
            Self::Circle { length } => Some(Lattice::raw(vec![vec![*length]]).expect("length > 0")),
            Self::FlatTorus(t) | Self::IntervalTimesTorus { torus: t, .. } => Some(t.clone()),
            Self::Interval { .. } => None,
        }
    }
}

/// Eigenpair `(μ_j, φ_j)` of `−Δ_x` on `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenData {
    /// 1-based position in the canonical ordering.
    pub index: usize,
    pub mu: f64,
    /// Interval mode number (`sin(jπx/a)` or `cos(jπx/a)`), if `M` has an
    /// interval factor.
    pub interval: Option<u32>,
    /// Dual coordinates of the torus/circle exponential, if any.
    pub periodic: Coords,
}

impl EigenData {
    /// `φ(x)` for a point of `M` given as `[x_interval?, y_periodic...]`.
    pub fn eval(&self, spec: &CrossSectionSpec, x: &[f64]) -> Complex64 {
        let mut value = Complex64::new(1.0, 0.0);
        let mut rest = x;
        if let (Some((a, bc)), Some(j)) = (spec.interval(), self.interval) {
            value *= interval_mode(a, bc, j, x[0]);
            rest = &x[1..];
        }
        if let Some(lat) = spec.periodic() {
            let g = lat.dual().cartesian(&self.periodic);
            let phase: f64 = g.iter().zip(rest).map(|(a, b)| a * b).sum();
            value *= Complex64::from_polar(lat.volume().powf(-0.5), phase);
        }
        value
    }
}

/// L²-normalized interval eigenfunction on `[0, a]`.
pub fn interval_mode(a: f64, bc: BoundaryCondition, j: u32, x: f64) -> f64 {
    let arg = j as f64 * PI * x / a;
    match bc {
        BoundaryCondition::Dirichlet => (2.0 / a).sqrt() * arg.sin(),
        BoundaryCondition::Neumann if j == 0 => a.powf(-0.5),
        BoundaryCondition::Neumann => (2.0 / a).sqrt() * arg.cos(),
    }
}

pub fn interval_eigenvalue(a: f64, j: u32) -> f64 {
    (j as f64 * PI / a).powi(2)
}

fn first_interval_index(bc: BoundaryCondition) -> u32 {
    match bc {
        BoundaryCondition::Dirichlet => 1,
        BoundaryCondition::Neumann => 0,
    }
}

/// All eigenpairs with `μ ≤ mu_max`, canonically ordered.
pub fn eigenpairs_below(spec: &CrossSectionSpec, mu_max: f64) -> Result<Vec<EigenData>> {
    spec.validate()?;
    let mut out = Vec::new();
    if !(mu_max >= 0.0) {
        return Ok(out);
    }
    let periodic = spec.periodic().map(|lat| {
        let dual = lat.dual();
        (lat, dual)
    });
    let push_periodic = |interval: Option<u32>, mu0: f64, out: &mut Vec<EigenData>| match &periodic {
        None => out.push(EigenData { index: 0, mu: mu0, interval, periodic: Coords::new() }),
        Some((lat, dual)) => {
            let zero: Vector = Vector::from_elem(0.0, lat.dim());
            let radius = (mu_max - mu0).max(0.0).sqrt();
            for_each_dual_point(lat, dual, &zero, radius, |coords, _, d2| {
                out.push(EigenData {
                    index: 0,
                    mu: mu0 + d2,
                    interval,
                    periodic: Coords::from_slice(coords),
                });
            });
        }
    };
    match spec.interval() {
        Some((a, bc)) => {
            let mut j = first_interval_index(bc);
            while interval_eigenvalue(a, j) <= mu_max {
                push_periodic(Some(j), interval_eigenvalue(a, j), &mut out);
                j += 1;
            }
        }
        None => push_periodic(None, 0.0, &mut out),
    }
    out.retain(|e| e.mu <= mu_max);
    canonical_order(&mut out);
    Ok(out)
}

/// The first `count` eigenpairs in canonical order.
pub fn eigenpairs(spec: &CrossSectionSpec, count: usize) -> Result<Vec<EigenData>> {
    if count == 0 {
        return Err(LabError::InvalidArgument("eigenpair count must be ≥ 1".into()));
    }
    spec.validate()?;
    // Weyl-type starting guess, doubled until enough eigenvalues are enclosed.
    let mut mu_max = (2.0 * PI / spec.volume().powf(1.0 / spec.dim() as f64)).powi(2)
        * (count as f64).powf(2.0 / spec.dim() as f64);
    loop {
        let all = eigenpairs_below(spec, mu_max)?;
        if all.len() > count {
            // Only complete degeneracy groups are enclosed, so the prefix is canonical.
            return Ok(all.into_iter().take(count).collect());
        }
        mu_max = 2.0 * mu_max + 1.0;
    }
}

fn label_cmp(a: &EigenData, b: &EigenData) -> Ordering {
    a.interval.cmp(&b.interval).then_with(|| a.periodic.cmp(&b.periodic))
}

fn canonical_order(list: &mut [EigenData]) {
    list.sort_by(|a, b| a.mu.total_cmp(&b.mu).then_with(|| label_cmp(a, b)));
    let mut start = 0;
    while start < list.len() {
        let base = list[start].mu;
        let mut end = start + 1;
        while end < list.len() && list[end].mu - base <= 1e-10 * base.max(1.0) {
            end += 1;
        }
        let group = &mut list[start..end];
        group.sort_by(label_cmp);
        for e in group.iter_mut() {
            e.mu = base;
        }
        start = end;
    }
    for (i, e) in list.iter_mut().enumerate() {
        e.index = i + 1;
    }
}

/// Tensor quadrature grid on `M`: nodes as `[x_interval?, y_periodic...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<Vector>,
    pub weights: Vec<f64>,
    /// Axis sizes, interval axis first (slowest).
    pub shape: Vec<usize>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Smallest resolution for which the grid integrates `φ_i φ̄_j` for the
/// given eigenpairs to orthonormality tolerance.
pub fn required_resolution(spec: &CrossSectionSpec, eigs: &[EigenData]) -> usize {
    let mut need = 1;
    if spec.interval().is_some() {
        let jmax = eigs.iter().filter_map(|e| e.interval).max().unwrap_or(0) as usize;
        need = need.max(interval_nodes_needed(jmax));
    }
    if spec.periodic().is_some() {
        let gmax = eigs
            .iter()
            .flat_map(|e| e.periodic.iter().map(|c| c.unsigned_abs() as usize))
            .max()
            .unwrap_or(0);
        need = need.max(2 * gmax + 1);
    }
    need
}

/// Gauss–Legendre node count resolving `cos(2Jπx/a)` on `[0, a]`.
pub(crate) fn interval_nodes_needed(jmax: usize) -> usize {
    jmax + jmax.div_ceil(2) + 24
}

/// Quadrature grid with `resolution` nodes per axis, checked against the first
/// `cap` eigenpairs.
pub fn quadrature_grid(spec: &CrossSectionSpec, resolution: usize, cap: usize) -> Result<QuadratureGrid> {
    spec.validate()?;
    let eigs = eigenpairs(spec, cap.max(1))?;
    let required = required_resolution(spec, &eigs);
    if resolution < required {
        return Err(LabError::ResolutionTooSmall { given: resolution, required });
    }
    Ok(raw_grid(spec, resolution))
}

/// Tensor grid without the resolution check.
pub(crate) fn raw_grid(spec: &CrossSectionSpec, resolution: usize) -> QuadratureGrid {
    let mut nodes: Vec<Vector> = vec![Vector::new()];
    let mut weights = vec![1.0];
    let mut shape = Vec::new();
    if let Some((a, _)) = spec.interval() {
        let (x, w) = gauss_legendre(resolution, 0.0, a);
        nodes = x.iter().map(|&x| Vector::from_slice(&[x])).collect();
        weights = w;
        shape.push(resolution);
    }
    if let Some(lat) = spec.periodic() {
        let (pn, pw) = periodic_grid(&lat, resolution);
        let mut n2 = Vec::with_capacity(nodes.len() * pn.len());
        let mut w2 = Vec::with_capacity(nodes.len() * pn.len());
        for (x, wx) in nodes.iter().zip(&weights) {
            for (y, wy) in pn.iter().zip(&pw) {
                let mut p = x.clone();
                p.extend_from_slice(y);
                n2.push(p);
                w2.push(wx * wy);
            }
        }
        nodes = n2;
        weights = w2;
        shape.extend(std::iter::repeat(resolution).take(lat.dim()));
    }
    QuadratureGrid { nodes, weights, shape }
}

/// Equispaced grid on the cell of `lat`, `n` points per cell axis, row-major.
pub fn periodic_grid(lat: &Lattice, n: usize) -> (Vec<Vector>, Vec<f64>) {
    let p = lat.dim();
    let (t, _) = periodic_trapezoid(n, 1.0);
    let total = n.pow(p as u32);
    let w = lat.volume() / total as f64;
    let mut nodes = Vec::with_capacity(total);
    let mut idx = vec![0usize; p];
    for _ in 0..total {
        let ts: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        nodes.push(lat.point(&ts));
        for axis in (0..p).rev() {
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
        }
    }
    (nodes, vec![w; total])
}

/// `(Σ wᵢ |fᵢ|^q)^{1/q}`, or `max |fᵢ|` for `q = ∞`.
pub fn weighted_lq(weights: &[f64], magnitudes: impl IntoIterator<Item = f64>, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(LabError::InvalidArgument(format!("L_q exponent must be ≥ 1, got {q}")));
    }
    if q.is_infinite() {
        return Ok(magnitudes.into_iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let s: f64 = weights
        .iter()
        .zip(magnitudes)
        .map(|(w, v)| w * v.abs().powf(q))
        .sum();
    Ok(s.powf(1.0 / q))
}

pub fn lq_norm(grid: &QuadratureGrid, values: &[f64], q: f64) -> Result<f64> {
    check_conformal(grid, values.len())?;
    weighted_lq(&grid.weights, values.iter().copied(), q)
}

pub fn lq_norm_complex(grid: &QuadratureGrid, values: &[Complex64], q: f64) -> Result<f64> {
    check_conformal(grid, values.len())?;
    weighted_lq(&grid.weights, values.iter().map(|z| z.norm()), q)
}

fn check_conformal(grid: &QuadratureGrid, len: usize) -> Result<()> {
    if grid.len() != len {
        return Err(LabError::InvalidArgument(format!(
            "{len} values on a grid of {} nodes",
            grid.len()
        )));
    }
    Ok(())
}

/// `max |⟨φᵢ, φⱼ⟩_quad − δᵢⱼ|` over the given eigenpairs.
pub fn orthonormality_defect(spec: &CrossSectionSpec, grid: &QuadratureGrid, eigs: &[EigenData]) -> f64 {
    let values: Vec<Vec<Complex64>> = eigs
        .iter()
        .map(|e| grid.nodes.iter().map(|x| e.eval(spec, x)).collect())
        .collect();
    let mut worst: f64 = 0.0;
    for (i, vi) in values.iter().enumerate() {
        for (j, vj) in values.iter().enumerate().skip(i) {
            let ip: Complex64 = vi
                .iter()
                .zip(vj)
                .zip(&grid.weights)
                .map(|((a, b), w)| a * b.conj() * w)
                .sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((ip - want).norm());
        }
    }
    worst
}

/// Dual lattice of the periodic factor, if any.
pub fn periodic_dual(spec: &CrossSectionSpec) -> Option<DualLattice> {
    spec.periodic().map(|l| l.dual())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet_pi() -> CrossSectionSpec {
        CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Dirichlet }
    }

    #[test]
    fn dirichlet_interval_eigenpairs() {
        let spec = dirichlet_pi();
        let eigs = eigenpairs(&spec, 6).unwrap();
        for (i, e) in eigs.iter().enumerate() {
            let j = (i + 1) as f64;
            assert_eq!(e.index, i + 1);
            assert!((e.mu - j * j).abs() < 1e-12);
            let x = 0.37;
            let want = (2.0 / PI).sqrt() * (j * x).sin();
            assert!((e.eval(&spec, &[x]).re - want).abs() < 1e-14);
        }
    }

    #[test]
    fn circle_eigenvalues_with_multiplicity() {
        let spec = CrossSectionSpec::Circle { length: 2.0 * PI };
        let mus: Vec<f64> = eigenpairs(&spec, 5).unwrap().iter().map(|e| e.mu).collect();
        let want = [0.0, 1.0, 1.0, 4.0, 4.0];
        for (a, b) in mus.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let eigs = eigenpairs(&spec, 3).unwrap();
        assert_eq!(eigs[1].periodic[0], -1);
        assert_eq!(eigs[2].periodic[0], 1);
    }

    #[test]
    fn flat_torus_matches_sorted_brute_force() {
        let spec = CrossSectionSpec::FlatTorus(Lattice::integer(2));
        let eigs = eigenpairs(&spec, 40).unwrap();
        let mut brute: Vec<f64> = Vec::new();
        for a in -10i64..=10 {
            for b in -10i64..=10 {
                brute.push(4.0 * PI * PI * (a * a + b * b) as f64);
            }
        }
        brute.sort_by(f64::total_cmp);
        for (e, want) in eigs.iter().zip(&brute) {
            assert!((e.mu - want).abs() < 1e-9 * want.max(1.0));
        }
        assert!(eigs.windows(2).all(|w| w[0].mu <= w[1].mu));
    }

    #[test]
    fn circle_grid_is_equispaced() {
        let spec = CrossSectionSpec::Circle { length: 2.0 * PI };
        let g = quadrature_grid(&spec, 64, 20).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.weights.iter().all(|w| (w - 2.0 * PI / 64.0).abs() < 1e-15));
        assert!((g.nodes[1][0] - 2.0 * PI / 64.0).abs() < 1e-15);
    }

    #[test]
    fn interval_grid_integrates_sine_products() {
        let spec = dirichlet_pi();
        let g = quadrature_grid(&spec, 42, 12).unwrap();
        assert_eq!(g.len(), 42);
        for i in 1..=12 {
            for j in 1..=12 {
                let got: f64 = g
                    .nodes
                    .iter()
                    .zip(&g.weights)
                    .map(|(x, w)| w * (i as f64 * x[0]).sin() * (j as f64 * x[0]).sin())
                    .sum();
                let want = if i == j { PI / 2.0 } else { 0.0 };
                assert!((got - want).abs() < 1e-10, "i={i} j={j}");
            }
        }
    }

    #[test]
    fn too_coarse_grid_rejected_with_minimum() {
        let spec = dirichlet_pi();
        match quadrature_grid(&spec, 5, 12) {
            Err(LabError::ResolutionTooSmall { required, .. }) => assert!(required > 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn orthonormality_at_required_resolution() {
        let specs = vec![
            dirichlet_pi(),
            CrossSectionSpec::Interval { length: 2.5, bc: BoundaryCondition::Neumann },
            CrossSectionSpec::Circle { length: 3.0 },
            CrossSectionSpec::FlatTorus(Lattice::raw(vec![vec![1.0, 0.0], vec![0.3, 1.2]]).unwrap()),
            CrossSectionSpec::IntervalTimesTorus {
                length: PI,
                bc: BoundaryCondition::Neumann,
                torus: Lattice::raw(vec![vec![2.0 * PI]]).unwrap(),
            },
        ];
        for spec in specs {
            for cap in [1usize, 5, 30, 60] {
                let eigs = eigenpairs(&spec, cap).unwrap();
                let res = required_resolution(&spec, &eigs);
                let g = quadrature_grid(&spec, res, cap).unwrap();
                let defect = orthonormality_defect(&spec, &g, &eigs);
                assert!(defect < 1e-8, "{spec:?} cap={cap} defect={defect}");
            }
        }
    }

    #[test]
    fn product_grid_is_tensor() {
        let spec = CrossSectionSpec::IntervalTimesTorus {
            length: PI,
            bc: BoundaryCondition::Dirichlet,
            torus: Lattice::raw(vec![vec![2.0 * PI]]).unwrap(),
        };
        let g = quadrature_grid(&spec, 40, 5).unwrap();
        let gi = quadrature_grid(&dirichlet_pi(), 40, 5).unwrap();
        assert_eq!(g.len(), 1600);
        assert_eq!(g.shape, vec![40, 40]);
        assert!((g.weights[41] - gi.weights[1] * 2.0 * PI / 40.0).abs() < 1e-15);
        assert!((g.total_weight() - 2.0 * PI * PI).abs() < 1e-11);
    }

    #[test]
    fn lq_norm_examples() {
        let circle = CrossSectionSpec::Circle { length: 2.0 * PI };
        let g = quadrature_grid(&circle, 64, 1).unwrap();
        let ones = vec![1.0; 64];
        assert!((lq_norm(&g, &ones, 2.0).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-14);
        assert!(lq_norm(&g, &ones, 0.5).is_err());
        assert_eq!(lq_norm(&g, &ones, f64::INFINITY).unwrap(), 1.0);

        let spec = dirichlet_pi();
        let g = quadrature_grid(&spec, 40, 4).unwrap();
        let sin: Vec<f64> = g.nodes.iter().map(|x| x[0].sin()).collect();
        let want = (3.0 * PI / 8.0).powf(0.25);
        assert!((lq_norm(&g, &sin, 4.0).unwrap() - want).abs() < 1e-12);

        let eigs = eigenpairs(&spec, 4).unwrap();
        let phi: Vec<Complex64> = g.nodes.iter().map(|x| eigs[3].eval(&spec, x)).collect();
        assert!((lq_norm_complex(&g, &phi, 2.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn boundary_behaviour_of_interval_modes() {
        let a = PI;
        for j in 1..20 {
            assert!(interval_mode(a, BoundaryCondition::Dirichlet, j, 0.0).abs() < 1e-12);
            assert!(interval_mode(a, BoundaryCondition::Dirichlet, j, a).abs() < 1e-12);
            let h = 1e-5;
            for x0 in [0.0, a] {
                let d = (interval_mode(a, BoundaryCondition::Neumann, j, x0 + h)
                    - interval_mode(a, BoundaryCondition::Neumann, j, x0 - h))
                    / (2.0 * h);
                assert!(d.abs() < 1e-4, "j={j} x={x0} d={d}");
            }
        }
    }

    #[test]
    fn weyl_law_slope() {
        let specs = vec![
            (CrossSectionSpec::Interval { length: PI, bc: BoundaryCondition::Neumann }, 1.0),
            (CrossSectionSpec::FlatTorus(Lattice::raw(vec![vec![2.0 * PI, 0.0], vec![0.0, 2.0 * PI]]).unwrap()), 2.0),
            (
                CrossSectionSpec::IntervalTimesTorus {
                    length: PI,
                    bc: BoundaryCondition::Dirichlet,
                    torus: Lattice::raw(vec![vec![2.0 * PI, 0.0], vec![0.0, 2.0 * PI]]).unwrap(),
                },
                3.0,
            ),
        ];
        for (spec, k) in specs {
            let lams: Vec<f64> = crate::fit::log_grid(100.0, 10_000.0, 12);
            let counts: Vec<f64> = lams
                .iter()
                .map(|&l| eigenpairs_below(&spec, l).unwrap().len() as f64)
                .collect();
            let fit = crate::fit::log_log(&lams, &counts).unwrap();
            assert!((fit.slope - k / 2.0).abs() < 0.2, "{spec:?} slope {}", fit.slope);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lq_monotone_on_probability_measure(vals in proptest::collection::vec(-5.0f64..5.0, 16),
                                                  q1 in 1.0f64..8.0, dq in 0.0f64..8.0) {
                let w = vec![1.0 / 16.0; 16];
                let a = weighted_lq(&w, vals.iter().copied(), q1).unwrap();
                let b = weighted_lq(&w, vals.iter().copied(), q1 + dq).unwrap();
                prop_assert!(a <= b * (1.0 + 1e-12) + 1e-300);
            }
        }
    }
}
