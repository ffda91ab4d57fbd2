//! Periodic potentials `V(x, y)` on `M × Ω` and Robin data `σ` on a layer.
//!
//! A potential is stored as coefficients in the joint eigenbasis,
//!
//! ```text
//! c_{j′,j}(ν) = |Ω|⁻¹ ∫_M ∫_Ω V(x,y) φ_j(x) conj(φ_{j′}(x)) e^{−i⟨ν,y⟩} dy dx,
//! ```
//!
//! split into an `x`-independent part (`ν ↦ c(ν)`, diagonal in `j`) and a
//! residual coupled tensor restricted to `j, j′ ≤ cap`. Grid samples are an
//! ingestion format only.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};

use num_complex::Complex64;

use crate::cross_section::{eigenpairs, quadrature_grid, CrossSectionSpec, EigenData, QuadratureGrid};
use crate::free_operator::ModePair;
use crate::lattice::{Coords, Lattice, Vector};
use crate::{LabError, Result};

const REALITY_TOL: f64 = 1e-12;
const ALIASING_TOL: f64 = 1e-6;

/// Tensor grid `(quadrature grid of M) × (equispaced grid of Ω)`; sample
/// index is `a · cell_len + b` with `a` the cross-section node.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub cross: QuadratureGrid,
    /// Points per cell axis.
    pub cell_points: usize,
    /// Cell coordinates `t ∈ [0,1)^m` of the Ω nodes, row-major.
    pub cell_coords: Vec<Vector>,
    pub cell_nodes: Vec<Vector>,
    pub cell_weight: f64,
}

impl SampleGrid {
    pub fn new(spec: &CrossSectionSpec, lat: &Lattice, cross_resolution: usize, cap: usize, cell_points: usize) -> Result<Self> {
        if cell_points == 0 {
            return Err(LabError::InvalidArgument("cell grid needs at least one point per axis".into()));
        }
        let cross = quadrature_grid(spec, cross_resolution, cap)?;
        let m = lat.dim();
        let unit = Lattice::integer(m);
        let (cell_coords, _) = crate::cross_section::periodic_grid(&unit, cell_points);
        let cell_nodes = cell_coords.iter().map(|t| lat.point(t)).collect();
        let cell_weight = lat.volume() / cell_points.pow(m as u32) as f64;
        Ok(Self { cross, cell_points, cell_coords, cell_nodes, cell_weight })
    }

    pub fn cell_len(&self) -> usize {
        self.cell_coords.len()
    }

    pub fn len(&self) -> usize {
        self.cross.len() * self.cell_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weights of all samples.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        for wa in &self.cross.weights {
            w.extend(std::iter::repeat(wa * self.cell_weight).take(self.cell_len()));
        }
        w
    }

    /// Sizes of all axes, cross-section axes first.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = self.cross.shape.clone();
        let m = self.cell_coords.first().map_or(0, |t| t.len());
        s.extend(std::iter::repeat(self.cell_points).take(m));
        s
    }

    /// Samples of `f(x, y)`.
    pub fn sample(&self, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for x in &self.cross.nodes {
            for y in &self.cell_nodes {
                out.push(f(x, y));
            }
        }
        out
    }
}

/// Truncation caps for projecting samples onto coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    /// Largest cross-section index `j` of the coupled tensor.
    pub cross: usize,
    /// Largest `|ν_i|` per dual coordinate.
    pub nu_max: i64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialSpec {
    dim: usize,
    longitudinal: BTreeMap<Coords, Complex64>,
    coupled: BTreeMap<(usize, usize, Coords), Complex64>,
    cap: usize,
    declared_p: Option<f64>,
}

/// Result of [`PotentialSpec::from_samples`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub potential: PotentialSpec,
    /// Relative residual energy `‖V − evaluate(c)‖² / ‖V‖²`.
    pub aliasing: f64,
    pub warning: Option<String>,
}

impl PotentialSpec {
    pub fn zero(m: usize) -> Self {
        Self { dim: m, ..Self::default() }
    }

    pub fn constant(m: usize, value: f64) -> Self {
        let mut v = Self::zero(m);
        if value != 0.0 {
            v.longitudinal.insert(Coords::from_elem(0, m), Complex64::new(value, 0.0));
        }
        v
    }

    /// `V(y) = 2A cos⟨b̃_axis, y⟩`.
    pub fn cosine(m: usize, axis: usize, amplitude: f64) -> Result<Self> {
        if axis >= m {
            return Err(LabError::InvalidArgument(format!("axis {axis} out of range for m = {m}")));
        }
        let mut v = Self::zero(m);
        for s in [1, -1] {
            let mut nu = Coords::from_elem(0, m);
            nu[axis] = s;
            v.longitudinal.insert(nu, Complex64::new(amplitude, 0.0));
        }
        Ok(v)
    }

    /// `x`-independent potential from Fourier coefficients `ν ↦ c(ν)`.
    pub fn longitudinal_from(m: usize, coeffs: impl IntoIterator<Item = (Coords, Complex64)>) -> Result<Self> {
        Self::from_parts(m, coeffs, std::iter::empty(), 0)
    }

    pub fn from_parts(
        m: usize,
        longitudinal: impl IntoIterator<Item = (Coords, Complex64)>,
        coupled: impl IntoIterator<Item = ((usize, usize, Coords), Complex64)>,
        cap: usize,
    ) -> Result<Self> {
        let mut v = Self::zero(m);
        v.cap = cap;
        for (nu, c) in longitudinal {
            check_dim(m, &nu)?;
            *v.longitudinal.entry(nu).or_default() += c;
        }
        for ((jp, j, nu), c) in coupled {
            check_dim(m, &nu)?;
            if jp == 0 || j == 0 || jp > cap || j > cap {
                return Err(LabError::InconsistentCaps(format!(
                    "coupled index ({jp}, {j}) outside 1..={cap}"
                )));
            }
            *v.coupled.entry((jp, j, nu)).or_default() += c;
        }
        v.check_reality()?;
        Ok(v)
    }

    pub fn with_declared_p(mut self, p: f64) -> Self {
        self.declared_p = Some(p);
        self
    }

    pub fn declared_p(&self) -> Option<f64> {
        self.declared_p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn longitudinal(&self) -> &BTreeMap<Coords, Complex64> {
        &self.longitudinal
    }

    pub fn coupled(&self) -> &BTreeMap<(usize, usize, Coords), Complex64> {
        &self.coupled
    }

    pub fn is_zero(&self) -> bool {
        self.longitudinal.values().chain(self.coupled.values()).all(|c| *c == Complex64::default())
    }

    fn check_reality(&self) -> Result<()> {
        let scale = self.max_coefficient().max(1.0);
        for (nu, c) in &self.longitudinal {
            let mirror = self.longitudinal.get(&negate(nu)).copied().unwrap_or_default();
            if (c - mirror.conj()).norm() > REALITY_TOL * scale {
                return Err(LabError::InvalidArgument(format!(
                    "longitudinal coefficients violate c(ν) = conj c(−ν) at ν = {nu:?}"
                )));
            }
        }
        for ((jp, j, nu), c) in &self.coupled {
            let mirror = self.coupled.get(&(*j, *jp, negate(nu))).copied().unwrap_or_default();
            if (c - mirror.conj()).norm() > REALITY_TOL * scale {
                return Err(LabError::InvalidArgument(format!(
                    "coupled coefficients violate c_(j′,j)(ν) = conj c_(j,j′)(−ν) at ({jp}, {j}, {nu:?})"
                )));
            }
        }
        Ok(())
    }

    fn max_coefficient(&self) -> f64 {
        self.longitudinal.values().chain(self.coupled.values()).map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Rejects a truncation whose cross-section indices exceed the cap of a
    /// non-empty coupled tensor.
    pub fn check_caps(&self, max_j: usize) -> Result<()> {
        if !self.coupled.is_empty() && max_j > self.cap {
            return Err(LabError::InconsistentCaps(format!(
                "truncation uses cross-section index {max_j}, potential coefficients only cover j ≤ {}",
                self.cap
            )));
        }
        Ok(())
    }

    /// `⟨V φ_{j,n}, φ_{j′,n′}⟩ = c_{j′,j}(n′ − n)`.
    pub fn coupling_element(&self, from: &ModePair, to: &ModePair) -> Complex64 {
        let nu: Coords = to.n.coords.iter().zip(&from.n.coords).map(|(a, b)| a - b).collect();
        let mut c = Complex64::default();
        if from.j == to.j {
            c += self.longitudinal.get(&nu).copied().unwrap_or_default();
        }
        if !self.coupled.is_empty() {
            c += self.coupled.get(&(to.j, from.j, nu)).copied().unwrap_or_default();
        }
        c
    }

    /// Samples of `V` on the grid.
    pub fn evaluate(&self, spec: &CrossSectionSpec, grid: &SampleGrid) -> Result<Vec<f64>> {
        let nx = grid.cross.len();
        let mut rows: BTreeMap<Coords, Vec<Complex64>> = BTreeMap::new();
        for (nu, c) in &self.longitudinal {
            rows.entry(nu.clone()).or_insert_with(|| vec![Complex64::default(); nx]).iter_mut().for_each(|v| *v += c);
        }
        if !self.coupled.is_empty() {
            // V_ν(x) φ_1(x) = Σ_{j′} c_{j′,1}(ν) φ_{j′}(x)
            let eigs = eigenpairs(spec, self.cap)?;
            let phi: Vec<Vec<Complex64>> =
                eigs.iter().map(|e| grid.cross.nodes.iter().map(|x| e.eval(spec, x)).collect()).collect();
            for ((jp, j, nu), c) in &self.coupled {
                if *j != 1 {
                    continue;
                }
                let row = rows.entry(nu.clone()).or_insert_with(|| vec![Complex64::default(); nx]);
                for (a, v) in row.iter_mut().enumerate() {
                    *v += c * phi[jp - 1][a] / phi[0][a];
                }
            }
        }
        let mut out = vec![0.0; grid.len()];
        let nc = grid.cell_len();
        for (nu, row) in &rows {
            let waves: Vec<Complex64> = grid
                .cell_coords
                .iter()
                .map(|t| Complex64::from_polar(1.0, 2.0 * PI * phase(nu, t)))
                .collect();
            for (a, va) in row.iter().enumerate() {
                for (b, w) in waves.iter().enumerate() {
                    out[a * nc + b] += (va * w).re;
                }
            }
        }
        Ok(out)
    }

    /// Projects grid samples onto coefficients within `caps`.
    pub fn from_samples(
        spec: &CrossSectionSpec,
        lat: &Lattice,
        grid: &SampleGrid,
        samples: &[f64],
        caps: Caps,
    ) -> Result<Projection> {
        if samples.len() != grid.len() {
            return Err(LabError::InvalidArgument(format!(
                "{} samples on a grid of {} points",
                samples.len(),
                grid.len()
            )));
        }
        let m = lat.dim();
        let needed = (2 * caps.nu_max + 1) as usize;
        if grid.cell_points < needed {
            return Err(LabError::ResolutionTooSmall { given: grid.cell_points, required: needed });
        }
        let scale = samples.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let nx = grid.cross.len();
        let nc = grid.cell_len();
        let eigs: Vec<EigenData> = if caps.cross > 0 { eigenpairs(spec, caps.cross)? } else { Vec::new() };
        let phi: Vec<Vec<Complex64>> =
            eigs.iter().map(|e| grid.cross.nodes.iter().map(|x| e.eval(spec, x)).collect()).collect();
        let vol_m = grid.cross.total_weight();
        let mut longitudinal = BTreeMap::new();
        let mut coupled = BTreeMap::new();
        for nu in box_coords(m, caps.nu_max) {
            let waves: Vec<Complex64> = grid
                .cell_coords
                .iter()
                .map(|t| Complex64::from_polar(1.0 / nc as f64, -2.0 * PI * phase(&nu, t)))
                .collect();
            let vhat: Vec<Complex64> = (0..nx)
                .map(|a| samples[a * nc..(a + 1) * nc].iter().zip(&waves).map(|(v, w)| w * v).sum())
                .collect();
            let mean: Complex64 =
                vhat.iter().zip(&grid.cross.weights).map(|(v, w)| v * w).sum::<Complex64>() / vol_m;
            if mean.norm() > 1e-14 * scale {
                longitudinal.insert(nu.clone(), mean);
            }
            let resid: Vec<Complex64> = vhat.iter().map(|v| v - mean).collect();
            if resid.iter().all(|r| r.norm() <= 1e-13 * scale) {
                continue;
            }
            for (j, pj) in phi.iter().enumerate() {
                for (jp, pjp) in phi.iter().enumerate() {
                    let c: Complex64 = (0..nx)
                        .map(|a| resid[a] * pj[a] * pjp[a].conj() * grid.cross.weights[a])
                        .sum();
                    if c.norm() > 1e-14 * scale {
                        coupled.insert((jp + 1, j + 1, nu.clone()), c);
                    }
                }
            }
        }
        let longitudinal = symmetrize(&longitudinal, |k| negate(k));
        let coupled = symmetrize(&coupled, |(jp, j, nu)| (*j, *jp, negate(nu)));
        let cap = if coupled.is_empty() { 0 } else { caps.cross };
        let potential = Self { dim: m, longitudinal, coupled, cap, declared_p: None };
        let back = potential.evaluate(spec, grid)?;
        let weights = grid.weights();
        let energy: f64 = samples.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
        let resid: f64 = samples.iter().zip(&back).zip(&weights).map(|((v, b), w)| w * (v - b).powi(2)).sum();
        let aliasing = if energy > 0.0 { resid / energy } else { 0.0 };
        let warning = (aliasing > ALIASING_TOL).then(|| {
            format!("aliasing: {aliasing:.3e} of the sample energy lies outside the coefficient caps")
        });
        Ok(Projection { potential, aliasing, warning })
    }

    /// Quadrature `L_p(M × Ω)` norm, `1 ≤ p < ∞`.
    pub fn lp_norm(&self, spec: &CrossSectionSpec, grid: &SampleGrid, p: f64) -> Result<f64> {
        check_p(p)?;
        let v = self.evaluate(spec, grid)?;
        lp_norm_samples(&grid.weights(), &v, p)
    }
}

fn check_dim(m: usize, nu: &Coords) -> Result<()> {
    if nu.len() != m {
        return Err(LabError::InvalidArgument(format!("offset {nu:?} has {} coordinates, expected {m}", nu.len())));
    }
    Ok(())
}

fn negate(nu: &Coords) -> Coords {
    nu.iter().map(|x| -x).collect()
}

fn phase(nu: &[i64], t: &[f64]) -> f64 {
    nu.iter().zip(t).map(|(n, t)| *n as f64 * t).sum()
}

fn symmetrize<K: Ord + Clone>(map: &BTreeMap<K, Complex64>, mirror: impl Fn(&K) -> K) -> BTreeMap<K, Complex64> {
    let mut out = BTreeMap::new();
    for (k, c) in map {
        let other = map.get(&mirror(k)).copied().unwrap_or_default();
        out.insert(k.clone(), 0.5 * (c + other.conj()));
        out.entry(mirror(k)).or_insert(0.5 * (other + c.conj()));
    }
    out
}

/// Integer points of the box `|ν_i| ≤ r`, lexicographic.
pub(crate) fn box_coords(m: usize, r: i64) -> Vec<Coords> {
    let mut out = vec![Coords::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|c| {
                (-r..=r).map(move |v| {
                    let mut c2 = c.clone();
                    c2.push(v);
                    c2
                })
            })
            .collect();
    }
    out
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(LabError::InvalidArgument(format!("L_p exponent must be ≥ 1, got {p}")));
    }
    if p.is_infinite() {
        return Err(LabError::InvalidArgument(
            "p = ∞ is not an L_p request here; use the sample maximum".into(),
        ));
    }
    Ok(())
}

/// `(Σ wᵢ |vᵢ|^p)^{1/p}` for `1 ≤ p < ∞`.
pub fn lp_norm_samples(weights: &[f64], values: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    if weights.len() != values.len() {
        return Err(LabError::InvalidArgument("weights and values differ in length".into()));
    }
    let s: f64 = weights.iter().zip(values).map(|(w, v)| w * v.abs().powf(p)).sum();
    Ok(s.powf(1.0 / p))
}

/// Level splitting `V = V₁ + V₂`, `V₁ = V·1{|V| > t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// The level `t = ‖V₂‖_∞`, reported as `c(δ)`.
    pub level: f64,
    pub norm_v1: f64,
}

fn split_at(values: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let v1: Vec<f64> = values.iter().map(|v| if v.abs() > t { *v } else { 0.0 }).collect();
    let v2 = values.iter().zip(&v1).map(|(v, a)| v - a).collect();
    (v1, v2)
}

/// Smallest level `t` with `‖V·1{|V|>t}‖_p ≤ δ`.
pub fn split_by_level(weights: &[f64], values: &[f64], p: f64, delta: f64) -> Result<SplitResult> {
    if !(delta > 0.0) {
        return Err(LabError::InvalidArgument(format!("δ must be positive, got {delta}")));
    }
    let norm_at = |t: f64| lp_norm_samples(weights, &split_at(values, t).0, p);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = if norm_at(0.0)? <= delta {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, top);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid)? <= delta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // same V₁ for every t between the largest magnitude ≤ hi and hi
        values.iter().map(|v| v.abs()).filter(|a| *a <= hi).fold(0.0, f64::max)
    };
    let (v1, v2) = split_at(values, level);
    let norm_v1 = lp_norm_samples(weights, &v1, p)?;
    Ok(SplitResult { v1, v2, level, norm_v1 })
}

/// Robin data `σ(0, y)`, `σ(a, y)` on the two faces of a layer, as real
/// finite Fourier series over the dual lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySigma {
    dim: usize,
    at_zero: BTreeMap<Coords, Complex64>,
    at_a: BTreeMap<Coords, Complex64>,
    declared_q: Option<f64>,
}

impl BoundarySigma {
    pub fn new(
        m: usize,
        at_zero: impl IntoIterator<Item = (Coords, Complex64)>,
        at_a: impl IntoIterator<Item = (Coords, Complex64)>,
    ) -> Result<Self> {
        let collect = |it: &mut dyn Iterator<Item = (Coords, Complex64)>| -> Result<BTreeMap<Coords, Complex64>> {
            let mut map = BTreeMap::new();
            for (nu, c) in it {
                check_dim(m, &nu)?;
                *map.entry(nu).or_default() += c;
            }
            for (nu, c) in &map {
                let mirror: Complex64 = map.get(&negate(nu)).copied().unwrap_or_default();
                if (c - mirror.conj()).norm() > REALITY_TOL * c.norm().max(1.0) {
                    return Err(LabError::InvalidArgument(format!("σ is not real-valued: coefficient at {nu:?}")));
                }
            }
            Ok(map)
        };
        let at_zero = collect(&mut at_zero.into_iter())?;
        let at_a = collect(&mut at_a.into_iter())?;
        Ok(Self { dim: m, at_zero, at_a, declared_q: None })
    }

    pub fn constant(m: usize, s: f64) -> Self {
        let c = [(Coords::from_elem(0, m), Complex64::new(s, 0.0))];
        Self::new(m, c.clone(), c).expect("constant σ is real")
    }

    /// `σ(0,y) = σ(a,y) = A cos⟨b̃_axis, y⟩`.
    pub fn cosine(m: usize, axis: usize, amplitude: f64) -> Result<Self> {
        if axis >= m {
            return Err(LabError::InvalidArgument(format!("axis {axis} out of range for m = {m}")));
        }
        let terms: Vec<(Coords, Complex64)> = [1, -1]
            .iter()
            .map(|s| {
                let mut nu = Coords::from_elem(0, m);
                nu[axis] = *s;
                (nu, Complex64::new(0.5 * amplitude, 0.0))
            })
            .collect();
        Self::new(m, terms.clone(), terms)
    }

    pub fn with_declared_q(mut self, q: f64) -> Self {
        self.declared_q = Some(q);
        self
    }

    pub fn declared_q(&self) -> Option<f64> {
        self.declared_q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scaled(&self, s: f64) -> Self {
        let sc = |m: &BTreeMap<Coords, Complex64>| m.iter().map(|(k, c)| (k.clone(), c * s)).collect();
        Self { dim: self.dim, at_zero: sc(&self.at_zero), at_a: sc(&self.at_a), declared_q: self.declared_q }
    }

    pub fn is_zero(&self) -> bool {
        self.at_zero.values().chain(self.at_a.values()).all(|c| *c == Complex64::default())
    }

    /// `σ̂_0(ν)`.
    pub fn coefficient_zero(&self, nu: &[i64]) -> Complex64 {
        self.at_zero.get(nu).copied().unwrap_or_default()
    }

    /// `σ̂_a(ν)`.
    pub fn coefficient_a(&self, nu: &[i64]) -> Complex64 {
        self.at_a.get(nu).copied().unwrap_or_default()
    }

    /// Offsets with a nonzero coefficient on either face.
    pub fn support(&self) -> Vec<Coords> {
        let mut s: Vec<Coords> = self.at_zero.keys().chain(self.at_a.keys()).cloned().collect();
        s.sort();
        s.dedup();
        s
    }

    /// `(σ(0, y), σ(a, y))` at cell coordinates `t`.
    pub fn values_at(&self, t: &[f64]) -> (f64, f64) {
        let eval = |m: &BTreeMap<Coords, Complex64>| {
            m.iter().map(|(nu, c)| (c * Complex64::from_polar(1.0, 2.0 * PI * phase(nu, t))).re).sum()
        };
        (eval(&self.at_zero), eval(&self.at_a))
    }

    /// `‖σ(e, ·)‖_{L_q(Ω)}` on an `n`-point-per-axis cell grid for both faces.
    pub fn lq_norms(&self, lat: &Lattice, q: f64, n: usize) -> Result<(f64, f64)> {
        let unit = Lattice::integer(lat.dim());
        let (ts, _) = crate::cross_section::periodic_grid(&unit, n);
        let w = vec![lat.volume() / ts.len() as f64; ts.len()];
        let (z, a): (Vec<f64>, Vec<f64>) = ts.iter().map(|t| self.values_at(t)).unzip();
        Ok((
            crate::cross_section::weighted_lq(&w, z, q)?,
            crate::cross_section::weighted_lq(&w, a, q)?,
        ))
    }
}

/// Writes coefficients in the text format read by [`parse_coefficients`].
pub fn write_coefficients(v: &PotentialSpec, out: &mut impl Write) -> Result<()> {
    writeln!(out, "dim {}", v.dim)?;
    if let Some(p) = v.declared_p {
        writeln!(out, "p {p}")?;
    }
    if !v.coupled.is_empty() {
        writeln!(out, "cap {}", v.cap)?;
    }
    let join = |nu: &Coords| nu.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    for (nu, c) in &v.longitudinal {
        writeln!(out, "longitudinal {} {} {}", join(nu), c.re, c.im)?;
    }
    for ((jp, j, nu), c) in &v.coupled {
        writeln!(out, "coupled {jp} {j} {} {} {}", join(nu), c.re, c.im)?;
    }
    Ok(())
}

/// Parses the coefficient text format:
///
/// ```text
/// # comment
/// dim <m>
/// p <declared exponent>            (optional)
/// cap <largest j>                  (required with coupled lines)
/// longitudinal <ν_1 … ν_m> <re> <im>
/// coupled <j′> <j> <ν_1 … ν_m> <re> <im>
/// ```
pub fn parse_coefficients(input: impl BufRead) -> Result<PotentialSpec> {
    let mut dim: Option<usize> = None;
    let mut p = None;
    let mut cap = 0usize;
    let mut long = Vec::new();
    let mut coupled = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| LabError::Format(format!("line {}: {msg}", lineno + 1));
        let mut words = line.split_whitespace();
        let key = words.next().unwrap_or("");
        let rest: Vec<&str> = words.collect();
        let int = |s: &str| s.parse::<i64>().map_err(|_| bad(&format!("expected integer, got {s:?}")));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("expected number, got {s:?}")));
        match key {
            "dim" => dim = Some(int(rest.first().ok_or_else(|| bad("missing value"))?)? as usize),
            "p" => p = Some(float(rest.first().ok_or_else(|| bad("missing value"))?)?),
            "cap" => cap = int(rest.first().ok_or_else(|| bad("missing value"))?)? as usize,
            "longitudinal" | "coupled" => {
                let m = dim.ok_or_else(|| bad("dim must precede coefficient lines"))?;
                let skip = if key == "coupled" { 2 } else { 0 };
                if rest.len() != skip + m + 2 {
                    return Err(bad(&format!("expected {} fields after {key}", skip + m + 2)));
                }
                let nu: Coords = rest[skip..skip + m].iter().map(|s| int(s)).collect::<Result<_>>()?;
                let c = Complex64::new(float(rest[skip + m])?, float(rest[skip + m + 1])?);
                if key == "coupled" {
                    coupled.push(((int(rest[0])? as usize, int(rest[1])? as usize, nu), c));
                } else {
                    long.push((nu, c));
                }
            }
            other => return Err(bad(&format!("unknown keyword {other:?}"))),
        }
    }
    let m = dim.ok_or_else(|| LabError::Format("missing dim line".into()))?;
    let v = PotentialSpec::from_parts(m, long, coupled, cap)?;
    Ok(match p {
        Some(p) => v.with_declared_p(p),
        None => v,
    })
}

const SAMPLES_MAGIC: &[u8; 4] = b"TLVS";
const SAMPLES_VERSION: u32 = 1;

/// Writes grid samples: magic `TLVS`, `u32` version, `u32` axis count,
/// `u64` axis sizes, then `f64` values, all little-endian, row-major.
pub fn write_samples(out: &mut impl Write, shape: &[usize], values: &[f64]) -> Result<()> {
    let total: usize = shape.iter().product();
    if total != values.len() {
        return Err(LabError::InvalidArgument(format!("shape {shape:?} holds {total} values, got {}", values.len())));
    }
    out.write_all(SAMPLES_MAGIC)?;
    out.write_all(&SAMPLES_VERSION.to_le_bytes())?;
    out.write_all(&(shape.len() as u32).to_le_bytes())?;
    for s in shape {
        out.write_all(&(*s as u64).to_le_bytes())?;
    }
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_samples(input: &mut impl Read) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != SAMPLES_MAGIC {
        return Err(LabError::Format("not a sample file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != SAMPLES_VERSION {
        return Err(LabError::Format(format!("unsupported sample file version {version}")));
    }
    input.read_exact(&mut b4)?;
    let ndims = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    let mut shape = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        input.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let total: usize = shape.iter().product();
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        input.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    let mut extra = [0u8; 1];
    if input.read(&mut extra)? != 0 {
        return Err(LabError::Format("trailing bytes after sample data".into()));
    }
    Ok((shape, values))
}

/// Checks that a sample file fits the grid it will be projected on.
pub fn check_sample_shape(grid: &SampleGrid, shape: &[usize]) -> Result<()> {
    if grid.shape() != shape {
        return Err(LabError::InvalidArgument(format!(
            "sample shape {shape:?} does not match grid shape {:?}",
            grid.shape()
        )));
    }
    Ok(())
}
