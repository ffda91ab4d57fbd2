//! Task execution.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use thomas_lab::cluster::{
    cluster_members, cluster_norm, condition_aq_fit, lemma_sums, reference_exponent, weighted_cluster_sum, NormOptions,
    Regime, SpectrumContext,
};
use thomas_lab::cross_section::CrossSectionSpec;
use thomas_lab::galerkin::Model;
use thomas_lab::thomas::{band_ac_indicator, lower_bound_probe, robin_trace_decay, thomas_decay_scan, ProbeOptions};
use thomas_lab::Complex64;

use crate::config::{RunConfig, TaskConfig};
use crate::report::{num, sha256_hex, AssertionOutcome, RunReport, Table, Timings};
use crate::CliError;

/// Output of a task before it is written.
pub struct TaskOutput {
    pub tables: Vec<Table>,
    pub results: Value,
    pub assertions: Vec<AssertionOutcome>,
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Runs the configured task and writes all artifacts into `out`.
pub fn run(cfg: &RunConfig, raw_config: &str, base: &Path, out: &Path) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let model = cfg.model.build(base)?;
    std::fs::create_dir_all(out)?;
    let task_start = Instant::now();
    let output = execute(cfg, &model)?;
    let task_seconds = task_start.elapsed().as_secs_f64();
    let artifacts = output.tables.iter().map(|t| t.write(out)).collect::<Result<Vec<_>, _>>()?;
    let model_json = serde_json::to_string(&cfg.model).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    let passed = output.assertions.iter().all(|a| a.passed);
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        task: cfg.task.name().into(),
        seed: cfg.seed,
        config_sha256: sha256_hex(raw_config.as_bytes()),
        model_sha256: sha256_hex(model_json.as_bytes()),
        config: cfg.clone(),
        artifacts,
        results: output.results,
        assertions: output.assertions,
        passed,
        timings: Timings { task_seconds, total_seconds: start.elapsed().as_secs_f64() },
    };
    report.write(out)?;
    Ok(report)
}

pub fn execute(cfg: &RunConfig, model: &Model) -> Result<TaskOutput, CliError> {
    match &cfg.task {
        TaskConfig::Bands { xi_perp, points, count, assert_min_variation, assert_no_flat_bands, assert_flat_bands } => {
            let shifts: Vec<f64> = (0..*points).map(|i| -PI + 2.0 * PI * i as f64 / *points as f64).collect();
            let ind = band_ac_indicator(model, xi_perp, &shifts, *count, cfg.numeric.lambda_max)?;
            let mut header = vec!["shift".to_string()];
            header.extend((1..=*count).map(|b| format!("band_{b}")));
            let mut bands = Table::with_header("bands", header);
            for (i, s) in shifts.iter().enumerate() {
                let mut row = vec![num(*s)];
                row.extend(ind.table.bands[i].iter().map(|v| num(*v)));
                bands.push(row);
            }
            let mut var = Table::new("band_variation", &["band", "total_variation", "flagged"]);
            for (b, v) in ind.variation.iter().enumerate() {
                var.push(vec![(b + 1).to_string(), num(*v), ind.flagged.contains(&b).to_string()]);
            }
            let flagged: Vec<usize> = ind.flagged.iter().map(|b| b + 1).collect();
            let min_var = ind.variation.iter().copied().fold(f64::INFINITY, f64::min);
            let mut assertions = Vec::new();
            if let Some(t) = assert_min_variation {
                assertions.push(AssertionOutcome::new(
                    "min_band_variation",
                    min_var > *t,
                    format!("min total variation {min_var} > {t}"),
                ));
            }
            if *assert_no_flat_bands {
                assertions.push(AssertionOutcome::new("no_flat_bands", flagged.is_empty(), format!("flagged bands {flagged:?}")));
            }
            if let Some(want) = assert_flat_bands {
                assertions.push(AssertionOutcome::new(
                    "flat_bands",
                    &flagged == want,
                    format!("flagged bands {flagged:?}, expected {want:?}"),
                ));
            }
            Ok(TaskOutput {
                tables: vec![bands, var],
                results: json!({ "min_variation": min_var, "flagged_bands": flagged, "lambda_max": cfg.numeric.lambda_max }),
                assertions,
            })
        }
        TaskConfig::Thomas { xi_perp, lambdas, tau, tau_min, assert_slope_at_most, assert_slope_near, assert_free_bound } => {
            let taus = tau.values();
            let mut tables = Vec::new();
            let mut scans = Vec::new();
            let mut assertions = Vec::new();
            for (i, l) in lambdas.iter().enumerate() {
                let lambda = Complex64::new(l[0], l[1]);
                let scan = thomas_decay_scan(model, lambda, xi_perp, &taus, *tau_min, cfg.numeric.lambda_margin)?;
                let mut t = Table::new(&format!("thomas_lambda{i}"), &["tau", "resolvent_norm", "norm_times_tau"]);
                for (tau, n) in scan.taus.iter().zip(&scan.norms) {
                    t.push(vec![num(*tau), num(*n), num(n * tau)]);
                }
                tables.push(t);
                let slope = scan.fit.map(|f| f.slope);
                if let Some(max) = assert_slope_at_most {
                    let ok = slope.is_some_and(|s| s <= *max) && scan.c_max.is_finite();
                    assertions.push(AssertionOutcome::new(
                        &format!("slope_lambda{i}"),
                        ok,
                        format!("slope {slope:?} ≤ {max}, C = {}", scan.c_max),
                    ));
                }
                if let Some(target) = assert_slope_near {
                    let ok = slope.is_some_and(|s| (s - target.value).abs() <= target.tolerance);
                    assertions.push(AssertionOutcome::new(
                        &format!("slope_near_lambda{i}"),
                        ok,
                        format!("slope {slope:?} within {} of {}", target.tolerance, target.value),
                    ));
                }
                if *assert_free_bound {
                    let worst = scan.taus.iter().zip(&scan.norms).map(|(t, n)| n * 2.0 * PI * t.abs()).fold(0.0, f64::max);
                    assertions.push(AssertionOutcome::new(
                        &format!("free_bound_lambda{i}"),
                        worst <= 1.0 + 1e-12,
                        format!("max norm·2π|τ| = {worst}"),
                    ));
                }
                scans.push(json!({
                    "lambda": l,
                    "artifact": format!("thomas_lambda{i}.csv"),
                    "slope": slope,
                    "fit_residual": scan.fit.map(|f| f.residual),
                    "fit_points": scan.fit.map(|f| f.points),
                    "c": finite_or_null(scan.c_max),
                    "tau_min": scan.tau_min,
                    "lambda_max": scan.lambda_max,
                    "non_invertible": scan.norms.iter().filter(|n| n.is_infinite()).count(),
                }));
            }
            Ok(TaskOutput { tables, results: json!({ "scans": scans }), assertions })
        }
        TaskConfig::Clusters { k_min, k_max, q, xi_perp, starts, max_iterations, interval_points, assert_slope } => {
            let lat = cfg.model.lattice()?;
            let spec = &model.cross_section;
            let lambda_max = (*k_max as f64).powi(2);
            let ctx = SpectrumContext::new(spec, xi_perp.as_deref().map(|x| (&lat, x)), lambda_max)?;
            let opts = NormOptions { interval_points: *interval_points, starts: *starts, seed: cfg.seed, max_iterations: *max_iterations };
            let ks: Vec<u64> = (*k_min..=*k_max).collect();
            let mut table = Table::new("clusters", &["k", "N_k", "q", "lower", "upper", "exact"]);
            let mut lower: Vec<Vec<f64>> = vec![Vec::new(); q.len()];
            for &k in &ks {
                let c = cluster_members(&ctx, k)?;
                for (qi, &qq) in q.iter().enumerate() {
                    let n = cluster_norm(&ctx, &c, qq, &opts)?;
                    table.push(vec![k.to_string(), n.rank.to_string(), num(qq), num(n.lower), num(n.upper), n.exact.to_string()]);
                    lower[qi].push(n.lower);
                }
            }
            let regime = match spec {
                CrossSectionSpec::Circle { .. } | CrossSectionSpec::FlatTorus(_) => Regime::NoBoundary,
                _ => Regime::ProductInterval,
            };
            let d = ctx.dimension();
            let mut fits = Vec::new();
            let mut assertions = Vec::new();
            for (qi, &qq) in q.iter().enumerate() {
                let fit = condition_aq_fit(&ks, &lower[qi], qq);
                let reference = reference_exponent(d, qq, regime).ok();
                let (slope, value) = match &fit {
                    Ok(f) => (
                        Some(f.slope),
                        json!({ "q": num(qq), "slope": f.slope, "epsilon": f.epsilon, "residual": f.residual,
                                "points": f.points, "reference_exponent": reference, "series": "lower" }),
                    ),
                    Err(e) => (None, json!({ "q": num(qq), "error": e.to_string(), "reference_exponent": reference })),
                };
                fits.push(value);
                for a in assert_slope.iter().filter(|a| a.q == qq) {
                    let ok = slope.is_some_and(|s| s >= a.min && s <= a.max);
                    assertions.push(AssertionOutcome::new(
                        &format!("slope_q{}", num(qq)),
                        ok,
                        format!("slope {slope:?} in [{}, {}]", a.min, a.max),
                    ));
                }
            }
            Ok(TaskOutput {
                tables: vec![table],
                results: json!({ "dimension": d, "fits": fits, "volume": ctx.volume() }),
                assertions,
            })
        }
        TaskConfig::LemmaSums { epsilon, tau, weighted, xi_perp, assert_uniform_split } => {
            let taus = tau.values();
            let ctx = if *weighted {
                let lat = cfg.model.lattice()?;
                let xi = xi_perp.clone().unwrap_or_else(|| vec![0.0; lat.dim()]);
                Some(SpectrumContext::new(&model.cross_section, Some((&lat, &xi)), f64::INFINITY)?)
            } else {
                None
            };
            let rows = taus
                .par_iter()
                .map(|&t| {
                    let l = lemma_sums(*epsilon, t)?;
                    let w = ctx.as_ref().map(|c| weighted_cluster_sum(*epsilon, t, c)).transpose()?;
                    Ok((t, l, w))
                })
                .collect::<thomas_lab::Result<Vec<_>>>()?;
            let mut header = vec!["tau", "s1", "s2"];
            if *weighted {
                header.extend(["weighted", "exceptional_k", "exceptional_term", "constant"]);
            }
            let mut table = Table::new("lemma_sums", &header);
            for (t, l, w) in &rows {
                let mut row = vec![num(*t), num(l.s1), num(l.s2)];
                if let Some(w) = w {
                    row.extend([num(w.value), w.exceptional_k.to_string(), num(w.exceptional_term), num(w.constant)]);
                }
                table.push(row);
            }
            let mut series: Vec<(&str, Vec<f64>)> = vec![
                ("s1", rows.iter().map(|r| r.1.s1).collect()),
                ("s2", rows.iter().map(|r| r.1.s2).collect()),
            ];
            if *weighted {
                series.push(("weighted", rows.iter().map(|r| r.2.map_or(f64::NAN, |w| w.value)).collect()));
            }
            let mut assertions = Vec::new();
            let mut maxima = serde_json::Map::new();
            for (name, vals) in &series {
                let all_finite = vals.iter().all(|v| v.is_finite());
                maxima.insert((*name).into(), json!(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
                if let Some(split) = assert_uniform_split {
                    let head = taus.iter().zip(vals).filter(|(t, _)| **t < *split).map(|p| *p.1).fold(f64::NEG_INFINITY, f64::max);
                    let tail = taus.iter().zip(vals).filter(|(t, _)| **t >= *split).map(|p| *p.1).fold(f64::NEG_INFINITY, f64::max);
                    assertions.push(AssertionOutcome::new(
                        &format!("uniform_{name}"),
                        all_finite && tail <= head,
                        format!("max over τ ≥ {split}: {tail}; max over τ < {split}: {head}"),
                    ));
                }
            }
            if *weighted {
                let worst = rows
                    .iter()
                    .map(|(_, l, w)| w.map_or(f64::NAN, |w| w.value - (l.s1 + l.s2 + w.constant)))
                    .fold(f64::NEG_INFINITY, f64::max);
                assertions.push(AssertionOutcome::new(
                    "weighted_below_lemma_bound",
                    worst <= 0.0,
                    format!("max of weighted − (S₁ + S₂ + C) = {worst}"),
                ));
            }
            let cmax = rows.iter().filter_map(|r| r.2.map(|w| w.constant)).fold(0.0, f64::max);
            Ok(TaskOutput {
                tables: vec![table],
                results: json!({ "epsilon": epsilon, "maxima": maxima, "exceptional_constant_max": if *weighted { json!(cmax) } else { Value::Null } }),
                assertions,
            })
        }
        TaskConfig::RobinTrace { xi_perp, tau, boundary_points, assert_decay_factor } => {
            let taus = tau.values();
            let r = robin_trace_decay(model, xi_perp, &taus, cfg.numeric.lambda_margin, *boundary_points)?;
            let mut table = Table::new("robin_trace", &["tau", "c_tilde"]);
            for (t, v) in r.taus.iter().zip(&r.values) {
                table.push(vec![num(*t), num(*v)]);
            }
            let mut assertions = Vec::new();
            if let Some(f) = assert_decay_factor {
                let (a, b) = (r.values[0], *r.values.last().expect("nonempty grid"));
                assertions.push(AssertionOutcome::new(
                    "trace_decay",
                    b < f * a,
                    format!("c̃({}) = {b} < {f}·c̃({}) = {}", r.taus.last().unwrap(), r.taus[0], f * a),
                ));
            }
            Ok(TaskOutput {
                tables: vec![table],
                results: json!({ "boundary_points": r.boundary_points, "lambda_max": r.lambda_max }),
                assertions,
            })
        }
        TaskConfig::Probe { xi_perp, tau, samples, delta, p, margin, assert_free_lower_bound, assert_positive_ratio } => {
            let results = (0..*samples)
                .into_par_iter()
                .map(|s| {
                    let opts = ProbeOptions {
                        delta: *delta,
                        p: *p,
                        margin: *margin,
                        lambda_margin: cfg.numeric.lambda_margin,
                        seed: cfg.seed,
                        stream: s,
                    };
                    lower_bound_probe(model, *tau, xi_perp, &opts)
                })
                .collect::<thomas_lab::Result<Vec<_>>>()?;
            let mut table = Table::new(
                "probe",
                &[
                    "sample", "free_re", "free_im", "potential_re", "potential_im", "boundary_re", "boundary_im", "total_re",
                    "total_im", "ratio", "c_delta", "lower_bound_holds",
                ],
            );
            for (i, r) in results.iter().enumerate() {
                table.push(vec![
                    i.to_string(),
                    num(r.free_term.re),
                    num(r.free_term.im),
                    num(r.potential_term.re),
                    num(r.potential_term.im),
                    num(r.boundary_term.re),
                    num(r.boundary_term.im),
                    num(r.total.re),
                    num(r.total.im),
                    num(r.ratio),
                    num(r.c_delta),
                    r.lower_bound_holds.to_string(),
                ]);
            }
            let min_free = results.iter().map(|r| r.free_term.re).fold(f64::INFINITY, f64::min);
            let max_im = results.iter().map(|r| r.free_term.im.abs() / r.free_term.re.abs()).fold(0.0, f64::max);
            let min_ratio = results.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            let holds = results.iter().filter(|r| r.lower_bound_holds).count();
            let bound = 2.0 * PI * tau.abs();
            let mut assertions = Vec::new();
            if *assert_free_lower_bound {
                assertions.push(AssertionOutcome::new(
                    "free_term_real_and_bounded",
                    max_im <= 1e-10 && min_free >= bound - 1e-6,
                    format!("max |Im|/Re {max_im:e}; min (H₀u, v) {min_free} vs 2π|τ| {bound}"),
                ));
            }
            if *assert_positive_ratio {
                assertions.push(AssertionOutcome::new("positive_ratio", min_ratio > 0.0, format!("min |(Hu, v)|/|τ| = {min_ratio}")));
            }
            Ok(TaskOutput {
                tables: vec![table],
                results: json!({
                    "min_free_term": min_free,
                    "max_relative_imaginary_part": max_im,
                    "min_ratio": min_ratio,
                    "c_delta": results.first().map(|r| r.c_delta),
                    "lower_bound_holds": holds,
                    "samples": samples,
                }),
                assertions,
            })
        }
    }
}
