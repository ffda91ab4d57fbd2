//! Schema check plus exponent-consistency diagnostics.

use std::fmt;

use thomas_lab::galerkin::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Note,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub level: Level,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.level {
            Level::Note => "note",
            Level::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

fn warn(out: &mut Vec<Diagnostic>, message: String) {
    out.push(Diagnostic { level: Level::Warning, message });
}

fn note(out: &mut Vec<Diagnostic>, message: String) {
    out.push(Diagnostic { level: Level::Note, message });
}

/// Required integrability exponent of the Robin weight in dimension `d`.
pub fn sigma_exponent(d: usize) -> Option<f64> {
    match d {
        3 => Some(2.0),
        d if d >= 4 => Some(2.0 * d as f64 - 2.0),
        _ => None,
    }
}

/// Diagnostics for the declared exponents of `V` and `σ`.
pub fn diagnostics(model: &Model) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let d = model.dimension();
    let k = model.cross_section.dim();
    let boundary = model.cross_section.has_boundary();
    note(&mut out, format!("d = {d} (cross-section {k}, longitudinal {})", model.lattice.dim()));
    match model.potential.declared_p() {
        None => {
            if !model.potential.is_zero() {
                note(&mut out, "V has no declared p; exponent checks skipped".into());
            }
        }
        Some(p) if !(p > 1.0) => warn(&mut out, format!("declared p = {p} must exceed 1")),
        Some(p) => {
            let q = 2.0 * p / (p - 1.0);
            if d >= 3 {
                let top = 2.0 * d as f64 / (d as f64 - 2.0);
                if q >= top {
                    warn(&mut out, format!("p = {p} gives q = 2p/(p−1) = {q:.4} ≥ 2d/(d−2) = {top:.4}, outside the window (2, 2d/(d−2))"));
                } else {
                    note(&mut out, format!("p = {p} gives q = {q:.4} inside (2, {top:.4})"));
                }
            }
            let half = d as f64 / 2.0;
            if p <= half {
                warn(&mut out, format!("p = {p} ≤ d/2 = {half}: below threshold p > d/2"));
            }
            if boundary && k >= 2 && d >= 5 && p <= d as f64 - 2.0 {
                warn(
                    &mut out,
                    format!("p = {p} ≤ d−2 = {}: p > d−2 is required when the cross-section has boundary and d ≥ 5", d - 2),
                );
            }
        }
    }
    if let Some(sigma) = &model.sigma {
        note(&mut out, "σ is a trigonometric polynomial, so every L_q norm is finite".into());
        match (sigma_exponent(d), sigma.declared_q()) {
            (None, _) => warn(&mut out, format!("no integrability exponent for σ is defined when d = {d} < 3")),
            (Some(need), None) => note(&mut out, format!("σ has no declared q; d = {d} requires q = {need}")),
            (Some(need), Some(q)) if q < need => {
                warn(&mut out, format!("declared σ exponent q = {q} is below the required q = {need} for d = {d}"))
            }
            (Some(need), Some(q)) => note(&mut out, format!("declared σ exponent q = {q} meets the required q = {need}")),
        }
    }
    out
}
