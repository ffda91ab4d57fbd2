//! Spectral clusters `E_k` of the free operator on `[(k−1)², k²)`, their
//! `L² → L^q` norms, exponent fits and the cluster summation bounds.
//!
//! The spectrum context is `M × 𝕋`, where the periodic part joins the torus
//! factor of `M` (if any) and the longitudinal torus `ℝᵐ/Γ` with the
//! quasimomentum shift `πb₁ + ξ′`. Eigenvalues are `μ_j + |g + shift|²` with
//! `μ_j` from the interval factor and `g` in the dual of the joint lattice.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::cross_section::{interval_eigenvalue, interval_mode, BoundaryCondition, CrossSectionSpec};
use crate::fit::{log_log, LineFit};
use crate::lattice::{dot, for_each_dual_point, norm, Coords, DualLattice, Lattice, Vector};
use crate::quadrature::gauss_legendre;
use crate::{rng, LabError, Result};

#[derive(Debug, Clone)]
struct Periodic {
    lattice: Lattice,
    dual: DualLattice,
    shift: Vector,
}

/// Eigenvalue data of `H₀` on `M × 𝕋` at a fixed real quasimomentum.
#[derive(Debug, Clone)]
pub struct SpectrumContext {
    interval: Option<(f64, BoundaryCondition)>,
    periodic: Option<Periodic>,
    lambda_max: f64,
}

impl SpectrumContext {
    /// Context for the cross-section `spec`, optionally joined with the
    /// longitudinal lattice at `ξ = πb₁ + ξ′`.
    pub fn new(spec: &CrossSectionSpec, longitudinal: Option<(&Lattice, &[f64])>, lambda_max: f64) -> Result<Self> {
        spec.validate()?;
        let torus = match spec {
            CrossSectionSpec::FlatTorus(t) | CrossSectionSpec::IntervalTimesTorus { torus: t, .. } => Some(t.clone()),
            CrossSectionSpec::Circle { .. } => spec.periodic(),
            CrossSectionSpec::Interval { .. } => None,
        };
        let mut blocks: Vec<(Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
        if let Some(t) = torus {
            blocks.push((t.basis().to_vec(), vec![0.0; t.dim()]));
        }
        if let Some((lat, xi)) = longitudinal {
            if xi.len() != lat.dim() {
                return Err(LabError::InvalidArgument("ξ′ dimension differs from the lattice dimension".into()));
            }
            let shift: Vec<f64> = lat.b1().iter().zip(xi).map(|(b, x)| PI * b + x).collect();
            blocks.push((lat.basis().to_vec(), shift));
        }
        let p: usize = blocks.iter().map(|b| b.1.len()).sum();
        let periodic = if p == 0 {
            None
        } else {
            let mut basis = Vec::with_capacity(p);
            let mut shift = Vector::new();
            let mut offset = 0;
            for (b, s) in &blocks {
                for row in b {
                    let mut full = vec![0.0; p];
                    full[offset..offset + row.len()].copy_from_slice(row);
                    basis.push(full);
                }
                offset += s.len();
                shift.extend_from_slice(s);
            }
            let lattice = Lattice::raw(basis)?;
            let dual = lattice.dual();
            Some(Periodic { lattice, dual, shift })
        };
        Ok(Self { interval: spec.interval(), periodic, lambda_max })
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `dim M + m`.
    pub fn dimension(&self) -> usize {
        usize::from(self.interval.is_some()) + self.periodic.as_ref().map_or(0, |p| p.lattice.dim())
    }

    /// Volume of the periodic factor (1 if there is none).
    pub fn periodic_volume(&self) -> f64 {
        self.periodic.as_ref().map_or(1.0, |p| p.lattice.volume())
    }

    /// Total volume of `M × 𝕋`.
    pub fn volume(&self) -> f64 {
        self.periodic_volume() * self.interval.map_or(1.0, |(a, _)| a)
    }

    fn interval_levels(&self, below: f64) -> Vec<(Option<u32>, f64)> {
        match self.interval {
            None => vec![(None, 0.0)],
            Some((a, bc)) => {
                let mut j = if bc == BoundaryCondition::Dirichlet { 1 } else { 0 };
                let mut out = Vec::new();
                while interval_eigenvalue(a, j) < below {
                    out.push((Some(j), interval_eigenvalue(a, j)));
                    j += 1;
                }
                out
            }
        }
    }

    /// Visits all eigenvalues `< below`.
    fn for_each_value(&self, below: f64, mut visit: impl FnMut(Option<u32>, &[i64], f64)) {
        for (j, mu) in self.interval_levels(below) {
            match &self.periodic {
                None => visit(j, &[], mu),
                Some(p) => {
                    let center: Vector = p.shift.iter().map(|x| -x).collect();
                    let radius = (below - mu).max(0.0).sqrt();
                    for_each_dual_point(&p.lattice, &p.dual, &center, radius, |c, _, d2| {
                        if mu + d2 < below {
                            visit(j, c, mu + d2);
                        }
                    });
                }
            }
        }
    }
}

/// Cluster number of an eigenvalue: `k` with `(k−1)² ≤ v < k²`. Values
/// within `1e−12` relative of a perfect square are snapped onto it, so that
/// exact squares computed with rounding land in the upper cluster.
pub fn cluster_of(value: f64) -> u64 {
    let r = value.max(0.0).sqrt();
    let near = r.round();
    if (value - near * near).abs() <= 1e-12 * value.max(1.0) {
        return near as u64 + 1;
    }
    r.floor() as u64 + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMember {
    pub interval: Option<u32>,
    pub coords: Coords,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndex {
    pub k: u64,
    pub members: Vec<ClusterMember>,
}

impl ClusterIndex {
    pub fn rank(&self) -> usize {
        self.members.len()
    }
}

pub fn cluster_members(ctx: &SpectrumContext, k: u64) -> Result<ClusterIndex> {
    if k == 0 {
        return Err(LabError::InvalidArgument("cluster index starts at k = 1".into()));
    }
    let top = (k * k) as f64;
    if top > ctx.lambda_max {
        return Err(LabError::TruncationTooSmall { given: ctx.lambda_max, required: top });
    }
    let mut members = Vec::new();
    ctx.for_each_value(top * (1.0 + 1e-12) + 1e-12, |j, c, v| {
        if cluster_of(v) == k {
            members.push(ClusterMember { interval: j, coords: Coords::from_slice(c), value: v });
        }
    });
    Ok(ClusterIndex { k, members })
}

/// Ranks `N_1, …, N_K`.
pub fn cluster_counts(ctx: &SpectrumContext, k_max: u64) -> Result<Vec<usize>> {
    let top = (k_max * k_max) as f64;
    if top > ctx.lambda_max {
        return Err(LabError::TruncationTooSmall { given: ctx.lambda_max, required: top });
    }
    let mut counts = vec![0usize; k_max as usize];
    ctx.for_each_value(top * (1.0 + 1e-12) + 1e-12, |_, _, v| {
        let k = cluster_of(v);
        if k >= 1 && k <= k_max {
            counts[k as usize - 1] += 1;
        }
    });
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    /// Points of the equispaced interval grid for `q = ∞` (raised as needed).
    pub interval_points: usize,
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { interval_points: 513, starts: 32, seed: 0, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterNorm {
    pub k: u64,
    pub rank: usize,
    pub q: f64,
    pub lower: f64,
    pub upper: f64,
    /// `lower == upper` is the exact norm (q = 2 or q = ∞).
    pub exact: bool,
}

/// `sup_x (Σ_α |ψ_α(x)|²)^{1/2}` over an equispaced interval grid; the torus
/// factor contributes the constant `1/vol`.
fn sup_norm(ctx: &SpectrumContext, cluster: &ClusterIndex, points: usize) -> f64 {
    let vol = ctx.periodic_volume();
    match ctx.interval {
        None => (cluster.rank() as f64 / vol).sqrt(),
        Some((a, bc)) => {
            let mut count: std::collections::BTreeMap<u32, usize> = Default::default();
            for m in &cluster.members {
                *count.entry(m.interval.expect("interval mode")).or_default() += 1;
            }
            let jmax = count.keys().last().copied().unwrap_or(0) as usize;
            let n = points.max(8 * jmax + 65);
            (0..n)
                .map(|i| {
                    let x = a * i as f64 / (n - 1) as f64;
                    count.iter().map(|(j, c)| *c as f64 * interval_mode(a, bc, *j, x).powi(2)).sum::<f64>()
                })
                .fold(0.0, f64::max)
                .sqrt()
                / vol.sqrt()
        }
    }
}

pub fn cluster_norm(ctx: &SpectrumContext, cluster: &ClusterIndex, q: f64, opts: &NormOptions) -> Result<ClusterNorm> {
    if !(q >= 2.0) {
        return Err(LabError::InvalidArgument(format!("cluster norms need q ≥ 2, got {q}")));
    }
    let k = cluster.k;
    let rank = cluster.rank();
    if rank == 0 {
        return Ok(ClusterNorm { k, rank, q, lower: 0.0, upper: 0.0, exact: true });
    }
    if q == 2.0 {
        return Ok(ClusterNorm { k, rank, q, lower: 1.0, upper: 1.0, exact: true });
    }
    let sup = sup_norm(ctx, cluster, opts.interval_points);
    if q.is_infinite() {
        return Ok(ClusterNorm { k, rank, q, lower: sup, upper: sup, exact: true });
    }
    let upper = sup.powf(1.0 - 2.0 / q);
    let lower = DualityAscent::new(ctx, cluster, q)?.maximize(opts, k)?;
    Ok(ClusterNorm { k, rank, q, lower, upper, exact: false })
}

/// Synthesis/analysis of cluster functions on an interval × FFT grid.
struct DualityAscent {
    q: f64,
    rank: usize,
    n: usize,
    p: usize,
    /// Interval nodes: weight and the values of the distinct interval modes.
    xw: Vec<f64>,
    phi: Vec<Vec<f64>>,
    /// Per member: distinct-mode slot and flat FFT position.
    slot: Vec<(usize, usize)>,
    vol: f64,
    plans: [Arc<dyn Fft<f64>>; 2],
}

impl DualityAscent {
    fn new(ctx: &SpectrumContext, cluster: &ClusterIndex, q: f64) -> Result<Self> {
        let p = ctx.periodic.as_ref().map_or(0, |x| x.lattice.dim());
        let gmax = cluster.members.iter().flat_map(|m| m.coords.iter().map(|c| c.unsigned_abs())).max().unwrap_or(0);
        // |g|^4 has frequencies up to 4 gmax; trapezoid is exact above that.
        let n = if p == 0 { 1 } else { smooth_size(4 * gmax as usize + 1) };
        let mut modes: Vec<Option<u32>> = cluster.members.iter().map(|m| m.interval).collect();
        modes.sort();
        modes.dedup();
        let (xs, xw) = match ctx.interval {
            None => (vec![0.0], vec![1.0]),
            Some((a, _)) => {
                let jmax = modes.iter().flatten().max().copied().unwrap_or(0) as usize;
                gauss_legendre(crate::cross_section::interval_nodes_needed(2 * jmax) + 8, 0.0, a)
            }
        };
        let phi: Vec<Vec<f64>> = modes
            .iter()
            .map(|j| match (ctx.interval, j) {
                (Some((a, bc)), Some(j)) => xs.iter().map(|x| interval_mode(a, bc, *j, *x)).collect(),
                _ => vec![1.0; xs.len()],
            })
            .collect();
        let slot = cluster
            .members
            .iter()
            .map(|m| {
                let s = modes.binary_search(&m.interval).expect("mode listed");
                let pos = m.coords.iter().fold(0usize, |acc, c| acc * n + c.rem_euclid(n as i64) as usize);
                (s, pos)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let plans = [planner.plan_fft_inverse(n), planner.plan_fft_forward(n)];
        Ok(Self { q, rank: cluster.rank(), n, p, xw, phi, slot, vol: ctx.periodic_volume(), plans })
    }

    fn grid_len(&self) -> usize {
        self.n.pow(self.p as u32)
    }

    fn fftn(&self, data: &mut [Complex64], dir: usize) {
        let n = self.n;
        if self.p == 0 {
            return;
        }
        let plan = &self.plans[dir];
        let total = data.len();
        let mut line = vec![Complex64::default(); n];
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        for axis in 0..self.p {
            let stride = n.pow((self.p - 1 - axis) as u32);
            for base in 0..total {
                if (base / stride) % n != 0 {
                    continue;
                }
                for (i, l) in line.iter_mut().enumerate() {
                    *l = data[base + i * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (i, l) in line.iter().enumerate() {
                    data[base + i * stride] = *l;
                }
            }
        }
    }

    /// Grid values of `Σ c_α ψ_α`, one block per interval node.
    fn synthesize(&self, c: &[Complex64]) -> Vec<Vec<Complex64>> {
        let scale = self.vol.powf(-0.5);
        (0..self.xw.len())
            .map(|a| {
                let mut grid = vec![Complex64::default(); self.grid_len()];
                for (ci, &(s, pos)) in c.iter().zip(&self.slot) {
                    grid[pos] += ci * self.phi[s][a];
                }
                self.fftn(&mut grid, 0);
                grid.iter_mut().for_each(|g| *g *= scale);
                grid
            })
            .collect()
    }

    fn lq(&self, g: &[Vec<Complex64>]) -> f64 {
        let cell = self.vol / self.grid_len() as f64;
        let s: f64 = g
            .iter()
            .zip(&self.xw)
            .map(|(block, w)| w * cell * block.iter().map(|z| z.norm().powf(self.q)).sum::<f64>())
            .sum();
        s.powf(1.0 / self.q)
    }

    /// `E*(|g|^{q−2} g)` normalized.
    fn dual_step(&self, g: &[Vec<Complex64>]) -> Vec<Complex64> {
        let scale = self.vol.sqrt() / self.grid_len() as f64;
        let mut c = vec![Complex64::default(); self.rank];
        for (a, block) in g.iter().enumerate() {
            let mut h: Vec<Complex64> = block.iter().map(|z| z * z.norm().powf(self.q - 2.0)).collect();
            self.fftn(&mut h, 1);
            for (ci, &(s, pos)) in c.iter_mut().zip(&self.slot) {
                *ci += self.xw[a] * self.phi[s][a] * scale * h[pos];
            }
        }
        normalize(&mut c);
        c
    }

    fn maximize(&self, opts: &NormOptions, k: u64) -> Result<f64> {
        let starts = opts.starts.max(1);
        let best = (0..starts)
            .into_par_iter()
            .map(|s| {
                let mut c = if s == 0 {
                    vec![Complex64::new(1.0, 0.0); self.rank]
                } else {
                    rng::random_unit_vector(self.rank, opts.seed, (k << 20) | s as u64)
                };
                normalize(&mut c);
                let mut g = self.synthesize(&c);
                let mut value = self.lq(&g);
                for _ in 0..opts.max_iterations {
                    let c2 = self.dual_step(&g);
                    let g2 = self.synthesize(&c2);
                    let v2 = self.lq(&g2);
                    if v2 <= value * (1.0 + 1e-10) {
                        value = value.max(v2);
                        break;
                    }
                    value = v2;
                    g = g2;
                }
                value
            })
            .reduce(|| 0.0, f64::max);
        Ok(best)
    }
}

fn normalize(c: &mut [Complex64]) {
    let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        c.iter_mut().for_each(|z| *z /= n);
    }
}

/// Smallest `2^a 3^b 5^c ≥ n`.
fn smooth_size(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut r = m;
            for f in [2, 3, 5] {
                while r % f == 0 {
                    r /= f;
                }
            }
            r == 1
        })
        .expect("smooth numbers are unbounded")
}

/// Setting of a reference cluster-norm exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    NoBoundary,
    ProductInterval,
    BoundaryHighQ,
    BoundaryLowQ,
}

/// Closed-form growth exponent of `‖E_k‖_{L² → L^q}` in dimension `d`.
pub fn reference_exponent(d: usize, q: f64, regime: Regime) -> Result<f64> {
    if d < 2 {
        return Err(LabError::OutsideWindow(format!("dimension d = {d} must be at least 2")));
    }
    let df = d as f64;
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let sogge = df * (0.5 - inv_q) - 0.5;
    match regime {
        Regime::NoBoundary | Regime::ProductInterval => {
            let lo = 2.0 * (df + 1.0) / (df - 1.0);
            if !(q >= lo) {
                return Err(LabError::OutsideWindow(format!("needs {lo} ≤ q ≤ ∞ for d = {d}, got q = {q}")));
            }
            Ok(sogge)
        }
        Regime::BoundaryHighQ => {
            let lo = match d {
                3 => 5.0,
                d if d >= 4 => 4.0,
                _ => return Err(LabError::OutsideWindow(format!("boundary estimates need d ≥ 3, got {d}"))),
            };
            if !(q >= lo) {
                return Err(LabError::OutsideWindow(format!("needs {lo} ≤ q ≤ ∞ for d = {d}, got q = {q}")));
            }
            Ok(sogge)
        }
        Regime::BoundaryLowQ => {
            if d < 4 || !(2.0..=4.0).contains(&q) {
                return Err(LabError::OutsideWindow(format!("needs 2 ≤ q ≤ 4 and d ≥ 4, got d = {d}, q = {q}")));
            }
            Ok(df * (0.5 - inv_q) + 2.0 * inv_q - 1.0)
        }
    }
}

/// Least-squares exponent of a cluster norm series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub q: f64,
    pub k_min: u64,
    pub k_max: u64,
    pub slope: f64,
    /// `1/2 − slope`; positive means Condition A(q) is met on the range.
    pub epsilon: f64,
    pub residual: f64,
    pub points: usize,
}

pub fn condition_aq_fit(ks: &[u64], norms: &[f64], q: f64) -> Result<ExponentFit> {
    if ks.len() != norms.len() {
        return Err(LabError::InvalidArgument("k and norm series differ in length".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        ks.iter().zip(norms).filter(|(_, n)| **n > 0.0 && n.is_finite()).map(|(k, n)| (*k as f64, *n)).unzip();
    if xs.len() < 10 {
        return Err(LabError::InvalidArgument(format!(
            "exponent fit needs at least 10 clusters with nonzero norm, got {}",
            xs.len()
        )));
    }
    let LineFit { slope, residual, points, .. } = log_log(&xs, &ys)?;
    Ok(ExponentFit {
        q,
        k_min: xs[0] as u64,
        k_max: *xs.last().expect("nonempty") as u64,
        slope,
        epsilon: 0.5 - slope,
        residual,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaSums {
    pub s1: f64,
    pub s2: f64,
    /// Last directly summed index.
    pub direct_terms: u64,
    /// Bound on the truncation error of each analytic tail.
    pub tail_error: f64,
}

fn check_eps_tau(eps: f64, tau: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(LabError::InvalidArgument(format!("ε must lie in (0, 1/2), got {eps}")));
    }
    if !(tau.abs() > 1.0) || !tau.is_finite() {
        return Err(LabError::InvalidArgument(format!("|τ| must exceed 1, got {tau}")));
    }
    Ok(())
}

fn direct_limit(t: f64) -> u64 {
    ((4.0 * t).ceil() as u64 + 16).max(64)
}

/// `Σ_{k>K} k^{1−2ε} / (k² − αk − β)` for `K` well above the roots, via the
/// expansion `1/(1 − αu − βu²) = Σ a_m u^m`, `u = 1/k`, and Hurwitz zeta.
fn analytic_tail(eps: f64, alpha: f64, beta: f64, big_k: u64) -> (f64, f64) {
    let s = 1.0 + 2.0 * eps;
    let a0 = (big_k + 1) as f64;
    let (mut am2, mut am1) = (0.0, 1.0);
    let mut total = 0.0;
    let mut prev = f64::INFINITY;
    let mut last = f64::INFINITY;
    for m in 0..200 {
        let a = if m == 0 { 1.0 } else { alpha * am1 + beta * am2 };
        if m > 0 {
            am2 = am1;
            am1 = a;
        }
        let term = a * hurwitz_zeta(s + m as f64, a0);
        total += term;
        prev = last;
        last = term.abs();
        // odd coefficients vanish when α = 0, so test two consecutive terms
        if m > 2 && prev.max(last) < 1e-18 * total.abs() {
            break;
        }
    }
    // geometric remainder with ratio ≤ 1/2 once terms decrease
    (total, 2.0 * prev.max(last))
}

/// `ζ(s, a) = Σ_{n≥0} (a + n)^{−s}` for `s > 1`, `a > 0`, Euler–Maclaurin.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const B2K: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    let shift = (s.ceil() as usize).max(10);
    let mut sum: f64 = (0..shift).map(|n| (a + n as f64).powf(-s)).sum();
    let b = a + shift as f64;
    sum += b.powf(1.0 - s) / (s - 1.0) + 0.5 * b.powf(-s);
    // B_{2k}/(2k)! · s(s+1)…(s+2k−2) · b^{−s−2k+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut pow = b.powf(-s - 1.0);
    for (k, bk) in B2K.iter().enumerate() {
        sum += bk / fact * rising * pow;
        let kk = (k + 1) as f64;
        rising *= (s + 2.0 * kk - 1.0) * (s + 2.0 * kk);
        fact *= (2.0 * kk + 1.0) * (2.0 * kk + 2.0);
        pow /= b * b;
    }
    sum
}

/// Both sums `Σ k^{1−2ε}/(|k² − τ²| + |τ|)` and `Σ k^{1−2ε}/(|(k−1)² − τ²| + |τ|)`.
pub fn lemma_sums(eps: f64, tau: f64) -> Result<LemmaSums> {
    check_eps_tau(eps, tau)?;
    let t = tau.abs();
    let tt = t * t;
    let big_k = direct_limit(t);
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 1..=big_k {
        let kf = k as f64;
        let num = kf.powf(1.0 - 2.0 * eps);
        s1 += num / ((kf * kf - tt).abs() + t);
        s2 += num / (((kf - 1.0).powi(2) - tt).abs() + t);
    }
    let (t1, e1) = analytic_tail(eps, 0.0, tt - t, big_k);
    let (t2, e2) = analytic_tail(eps, 2.0, tt - t - 1.0, big_k);
    Ok(LemmaSums { s1: s1 + t1, s2: s2 + t2, direct_terms: big_k, tail_error: e1.max(e2) })
}

/// Closest eigenvalue to `target` inside cluster `k`, if the cluster is
/// non-empty. Enumerates all periodic coordinates but the last and solves
/// the quadratic in the last one.
pub fn closest_in_cluster(ctx: &SpectrumContext, k: u64, target: f64) -> Option<f64> {
    let (lo, hi) = (((k - 1) * (k - 1)) as f64, (k * k) as f64);
    let mut best: Option<f64> = None;
    let mut consider = |v: f64| {
        if cluster_of(v) == k && best.is_none_or(|b| (v - target).abs() < (b - target).abs()) {
            best = Some(v);
        }
    };
    let levels = ctx.interval_levels(hi * (1.0 + 1e-12) + 1e-12);
    let Some(per) = &ctx.periodic else {
        for (_, mu) in levels {
            consider(mu);
        }
        return best;
    };
    let p = per.lattice.dim();
    let basis = per.lattice.basis();
    let last = &per.dual.basis()[p - 1];
    let qa = dot(last, last);
    for (_, mu) in levels {
        let radius = (hi - mu).max(0.0).sqrt() * (1.0 + 1e-12);
        // outer box: |n_i + ⟨b_i, shift⟩/2π| ≤ r|b_i|/2π
        let ranges: Vec<(i64, i64)> = basis[..p - 1]
            .iter()
            .map(|b| {
                let mid = -dot(b, &per.shift) / (2.0 * PI);
                let half = radius * norm(b) / (2.0 * PI);
                ((mid - half).ceil() as i64 - 1, (mid + half).floor() as i64 + 1)
            })
            .collect();
        for_each_in_box(&ranges, |coords| {
            let mut w: Vector = per.shift.clone();
            for (c, b) in coords.iter().zip(per.dual.basis()) {
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi += *c as f64 * bi;
                }
            }
            let qb = 2.0 * dot(&w, last);
            let qc = dot(&w, &w) + mu;
            let eval = |c: i64| qa * (c as f64).powi(2) + qb * c as f64 + qc;
            let mut cands: Vec<f64> = vec![-qb / (2.0 * qa)];
            for x in [lo, hi, target] {
                let disc = qb * qb - 4.0 * qa * (qc - x);
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    cands.push((-qb - sq) / (2.0 * qa));
                    cands.push((-qb + sq) / (2.0 * qa));
                }
            }
            for r in cands {
                let f = r.floor() as i64;
                for c in f - 1..=f + 2 {
                    consider(eval(c));
                }
            }
        });
    }
    best
}

/// Calls `f` on every integer point of the box, last coordinate fastest.
fn for_each_in_box(ranges: &[(i64, i64)], mut f: impl FnMut(&[i64])) {
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return;
    }
    let mut coords: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&coords);
        let mut axis = coords.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if coords[axis] < ranges[axis].1 {
                coords[axis] += 1;
                for later in axis + 1..coords.len() {
                    coords[later] = ranges[later].0;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSum {
    pub value: f64,
    /// The cluster with `|τ| ∈ [k−1, k)`.
    pub exceptional_k: u64,
    pub exceptional_term: f64,
    /// `term · k^{2ε}` for the exceptional cluster.
    pub constant: f64,
}

/// Cluster-weighted sum
/// `Σ_k max_{cluster k} k^{1−2ε} / (|value − τ²| + |τ|)`.
///
/// Cluster maxima are exact for `k ≤ 64` and for the exceptional cluster.
/// Other clusters take the endpoint bound (`k²` below `|τ|`, `(k−1)²`
/// above), and the tail beyond `max(4|τ| + 16, 64)` is summed analytically,
/// so the result is an upper bound of the full sum that is exact where the
/// sum is sensitive.
pub fn weighted_cluster_sum(eps: f64, tau: f64, ctx: &SpectrumContext) -> Result<WeightedSum> {
    check_eps_tau(eps, tau)?;
    let t = tau.abs();
    let tt = t * t;
    let kx = t.floor() as u64 + 1;
    let big_k = direct_limit(t);
    let mut value = 0.0;
    let mut exceptional_term = 0.0;
    for k in 1..=big_k {
        let kf = k as f64;
        let num = kf.powf(1.0 - 2.0 * eps);
        let term = if k <= 64 || k == kx {
            closest_in_cluster(ctx, k, tt).map_or(0.0, |v| num / ((v - tt).abs() + t))
        } else if kf <= t {
            num / (tt - kf * kf + t)
        } else {
            num / ((kf - 1.0).powi(2) - tt + t)
        };
        if k == kx {
            exceptional_term = term;
        }
        value += term;
    }
    let (tail, _) = analytic_tail(eps, 2.0, tt - t - 1.0, big_k);
    value += tail;
    Ok(WeightedSum {
        value,
        exceptional_k: kx,
        exceptional_term,
        constant: exceptional_term * (kx as f64).powf(2.0 * eps),
    })
}
