//! Checks along the Thomas line `ξ = (π + iτ) b₁ + ξ′`: resolvent decay
//! scans, the polar-decomposition probe, the band non-constancy indicator
//! and the decay of weighted boundary traces on a layer.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cross_section::{interval_mode, required_resolution, CrossSectionSpec};
use crate::fit::{log_log, LineFit};
use crate::free_operator::{free_eigenvalues, phase_from_values, truncation_lambda, QuasiMomentum};
use crate::galerkin::{assemble_general, band_functions, resolvent_norm, BandTable, Model, Truncation};
use crate::lattice::{Coords, Lattice};
use crate::linalg::hermitian_eigenvalues;
use crate::potential::{split_by_level, SampleGrid};
use crate::{rng, LabError, Result};

/// Total variation below which a band is reported as flat.
pub const FLAT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayScan {
    pub lambda: Complex64,
    pub xi_perp: Vec<f64>,
    pub taus: Vec<f64>,
    /// `‖(H(τ) − λ)⁻¹‖` at the truncation; `+∞` where not invertible.
    pub norms: Vec<f64>,
    pub lambda_max: f64,
    pub tau_min: f64,
    /// Log-log fit over finite entries with `τ ≥ tau_min`.
    pub fit: Option<LineFit>,
    /// `max norm · τ`.
    pub c_max: f64,
}

fn check_grid(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(LabError::InvalidArgument("empty τ grid".into()));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(LabError::InvalidArgument("τ grid must be positive and finite".into()));
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::InvalidArgument("τ grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Resolvent norms on a τ grid with one truncation `Λ = 4τ_max² + margin`.
pub fn thomas_decay_scan(
    model: &Model,
    lambda: Complex64,
    xi_perp: &[f64],
    taus: &[f64],
    tau_min: f64,
    margin: f64,
) -> Result<DecayScan> {
    check_grid(taus)?;
    let tau_max = *taus.last().expect("checked");
    let qm = QuasiMomentum::new(&model.lattice, xi_perp, tau_max)?;
    let lambda_max = truncation_lambda(tau_max, margin);
    let tr = Truncation::new(&model.lattice, &model.cross_section, &qm, lambda_max)?;
    let norms = taus
        .par_iter()
        .map(|&tau| {
            let mat = assemble_general(model, &tr, &qm.with_tau(tau), lambda)?;
            match resolvent_norm(&mat) {
                Ok(r) => Ok(r),
                Err(LabError::NotInvertible(_)) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        taus.iter().zip(&norms).filter(|(t, n)| **t >= tau_min && n.is_finite()).map(|(t, n)| (*t, *n)).unzip();
    let fit = if xs.len() >= 2 { Some(log_log(&xs, &ys)?) } else { None };
    let c_max = taus.iter().zip(&norms).map(|(t, n)| n * t).fold(0.0, f64::max);
    Ok(DecayScan { lambda, xi_perp: xi_perp.to_vec(), taus: taus.to_vec(), norms, lambda_max, tau_min, fit, c_max })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub delta: f64,
    /// Exponent `p` of the `L_p` splitting of `V`.
    pub p: f64,
    /// Relative slack in the lower-bound check.
    pub margin: f64,
    /// Truncation margin over `4τ²`.
    pub lambda_margin: f64,
    pub seed: u64,
    pub stream: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { delta: 0.1, p: 2.0, margin: 0.5, lambda_margin: 100.0, seed: 0, stream: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub tau: f64,
    pub delta: f64,
    /// `(H₀(τ)u, v)` with `v = Φ₀(τ)u`.
    pub free_term: Complex64,
    pub potential_term: Complex64,
    pub boundary_term: Complex64,
    /// `(H(τ)u, v)`.
    pub total: Complex64,
    /// `|(H(τ)u, v)| / |τ|`.
    pub ratio: f64,
    /// Level `c(δ)` of the splitting `V = V₁ + V₂`, `‖V₁‖_p ≤ δ`.
    pub c_delta: f64,
    pub lower_bound_holds: bool,
}

fn form(mat: &crate::galerkin::GalerkinMatrix, u: &[Complex64], v: &[Complex64]) -> Complex64 {
    let mut s: Complex64 = mat.diag.iter().zip(u).zip(v).map(|((d, a), b)| d * a * b.conj()).sum();
    for &(r, c, x) in &mat.off {
        s += x * u[c] * v[r].conj();
    }
    s
}

/// Samples of `V` on a grid fine enough for its coefficients.
pub fn potential_samples(model: &Model) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = &model.potential;
    let cap = v.cap().max(1);
    let eigs = crate::cross_section::eigenpairs(&model.cross_section, cap)?;
    let res = required_resolution(&model.cross_section, &eigs) + 8;
    let numax = v.longitudinal().keys().chain(v.coupled().keys().map(|k| &k.2)).flat_map(|c| c.iter().map(|x| x.unsigned_abs())).max().unwrap_or(0);
    let cells = (4 * numax as usize + 1).max(256);
    let grid = SampleGrid::new(&model.cross_section, &model.lattice, res, cap, cells)?;
    Ok((grid.weights(), v.evaluate(&model.cross_section, &grid)?))
}

/// Evaluates `(H(τ)u, Φ₀(τ)u)` term by term for a seeded random unit `u`.
pub fn lower_bound_probe(model: &Model, tau: f64, xi_perp: &[f64], opts: &ProbeOptions) -> Result<ProbeResult> {
    if tau == 0.0 {
        return Err(LabError::InvalidArgument("probe needs τ ≠ 0".into()));
    }
    if !model.injected_levels.is_empty() {
        return Err(LabError::Unsupported("probe on a model with injected levels".into()));
    }
    let qm = QuasiMomentum::new(&model.lattice, xi_perp, tau)?;
    let tr = Truncation::new(&model.lattice, &model.cross_section, &qm, truncation_lambda(tau, opts.lambda_margin))?;
    let h: Vec<Complex64> = free_eigenvalues(&model.lattice, &qm, &tr.modes).iter().map(|e| e.value).collect();
    let phase = phase_from_values(&h)?.phase;
    let u = rng::random_unit_vector(h.len(), opts.seed, opts.stream);
    let v: Vec<Complex64> = u.iter().zip(&phase).map(|(a, p)| a * p).collect();
    let free_term: Complex64 = h.iter().zip(&u).zip(&v).map(|((h, a), b)| h * a * b.conj()).sum();

    let mut v_only = model.clone();
    v_only.sigma = None;
    let with_v = form(&assemble_general(&v_only, &tr, &qm, Complex64::default())?, &u, &v);
    let total = if model.sigma.is_some() {
        form(&assemble_general(model, &tr, &qm, Complex64::default())?, &u, &v)
    } else {
        with_v
    };
    let potential_term = with_v - free_term;
    let boundary_term = total - with_v;
    let c_delta = if model.potential.is_zero() {
        0.0
    } else {
        let (w, s) = potential_samples(model)?;
        split_by_level(&w, &s, opts.p, opts.delta)?.level
    };
    let lower_bound_holds = total.norm() >= (1.0 - opts.margin) * free_term.re - c_delta;
    Ok(ProbeResult {
        tau,
        delta: opts.delta,
        free_term,
        potential_term,
        boundary_term,
        total,
        ratio: total.norm() / tau.abs(),
        c_delta,
        lower_bound_holds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandIndicator {
    pub table: BandTable,
    /// Total variation of each band over the grid.
    pub variation: Vec<f64>,
    /// Bands with variation below [`FLAT_THRESHOLD`].
    pub flagged: Vec<usize>,
}

pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

pub fn band_ac_indicator(model: &Model, xi_perp: &[f64], shifts: &[f64], count: usize, lambda_max: f64) -> Result<BandIndicator> {
    let table = band_functions(model, xi_perp, shifts, count, lambda_max)?;
    let variation: Vec<f64> = (0..table.count()).map(|b| total_variation(&table.band(b))).collect();
    let flagged = variation.iter().enumerate().filter(|(_, v)| **v < FLAT_THRESHOLD).map(|(i, _)| i).collect();
    Ok(BandIndicator { table, variation, flagged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDecayReport {
    pub taus: Vec<f64>,
    /// `c̃(τ)`, the norm of `u ↦ √|σ|·(trace of |H₀(τ)|^{−1/2} u)`.
    pub values: Vec<f64>,
    pub boundary_points: usize,
    pub lambda_max: f64,
}

/// Weighted boundary-trace norms `c̃(τ)` for the Robin data of a layer model.
///
/// `c̃(τ)² = λ_max(A A*)` where `A` maps mode coefficients, weighted by
/// `|h_{j,n}(τ)|^{−1/2}`, to traces at `x ∈ {0, a}` sampled on an
/// equispaced cell grid with weights `√(|σ|·w)`.
pub fn robin_trace_decay(
    model: &Model,
    xi_perp: &[f64],
    taus: &[f64],
    margin: f64,
    boundary_points: Option<usize>,
) -> Result<TraceDecayReport> {
    check_grid(taus)?;
    let CrossSectionSpec::Interval { length: a, bc } = model.cross_section else {
        return Err(LabError::Unsupported("boundary traces are implemented for interval layers".into()));
    };
    let lat: &Lattice = &model.lattice;
    let m = lat.dim();
    let tau_max = *taus.last().expect("checked");
    let qm = QuasiMomentum::new(lat, xi_perp, tau_max)?;
    let lambda_max = truncation_lambda(tau_max, margin);
    let tr = Truncation::new(lat, &model.cross_section, &qm, lambda_max)?;
    let extent = (0..m)
        .map(|i| {
            let (lo, hi) = tr.modes.iter().fold((i64::MAX, i64::MIN), |(lo, hi), md| (lo.min(md.n.coords[i]), hi.max(md.n.coords[i])));
            (hi - lo + 1).max(1) as usize
        })
        .max()
        .unwrap_or(1);
    let n_pts = boundary_points.unwrap_or((4 * extent).max(64));
    let rows_per_end = n_pts.pow(m as u32);
    if 2 * rows_per_end > 8192 {
        return Err(LabError::InvalidArgument(format!(
            "{} boundary rows exceed the dense limit; lower boundary_points",
            2 * rows_per_end
        )));
    }
    let unit = Lattice::integer(m);
    let (ts, _) = crate::cross_section::periodic_grid(&unit, n_pts);
    let w = lat.volume() / rows_per_end as f64;
    let sigma = model.sigma.clone();
    let weights: Vec<[f64; 2]> = ts
        .iter()
        .map(|t| match &sigma {
            None => [0.0, 0.0],
            Some(s) => {
                let (z, e) = s.values_at(t);
                [(z.abs() * w).sqrt(), (e.abs() * w).sqrt()]
            }
        })
        .collect();
    let mut by_n: BTreeMap<Coords, Vec<usize>> = BTreeMap::new();
    for (i, md) in tr.modes.iter().enumerate() {
        by_n.entry(md.n.coords.clone()).or_default().push(i);
    }
    let ends: Vec<[f64; 2]> = tr
        .eigs
        .iter()
        .map(|e| {
            let j = e.interval.expect("interval mode");
            [interval_mode(a, bc, j, 0.0), interval_mode(a, bc, j, a)]
        })
        .collect();
    let omega = lat.volume();
    let values = taus
        .iter()
        .map(|&tau| {
            if weights.iter().all(|w| w[0] == 0.0 && w[1] == 0.0) {
                return Ok(0.0);
            }
            let q = qm.with_tau(tau);
            let h = free_eigenvalues(lat, &q, &tr.modes);
            let r = 2 * rows_per_end;
            let mut g = Array2::<Complex64>::zeros((r, r));
            for (n, idx) in &by_n {
                let mut s = [[0.0; 2]; 2];
                for &i in idx {
                    let e = &ends[tr.modes[i].j - 1];
                    let inv = 1.0 / h[i].value.norm();
                    for (x, row) in s.iter_mut().enumerate() {
                        for (y, v) in row.iter_mut().enumerate() {
                            *v += e[x] * e[y] * inv;
                        }
                    }
                }
                let z: Vec<Complex64> = (0..r)
                    .map(|row| {
                        let (end, p) = (row / rows_per_end, row % rows_per_end);
                        let ph: f64 = n.iter().zip(&ts[p]).map(|(a, b)| *a as f64 * b).sum();
                        Complex64::from_polar(weights[p][end], 2.0 * PI * ph)
                    })
                    .collect();
                for r1 in 0..r {
                    let e1 = r1 / rows_per_end;
                    let zr = z[r1] / omega;
                    for r2 in 0..=r1 {
                        let e2 = r2 / rows_per_end;
                        g[[r1, r2]] += zr * z[r2].conj() * s[e1][e2];
                    }
                }
            }
            for r1 in 0..r {
                for r2 in 0..r1 {
                    g[[r2, r1]] = g[[r1, r2]].conj();
                }
            }
            let eig = hermitian_eigenvalues(&g)?;
            Ok(eig.last().copied().unwrap_or(0.0).max(0.0).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TraceDecayReport { taus: taus.to_vec(), values, boundary_points: n_pts, lambda_max })
}
