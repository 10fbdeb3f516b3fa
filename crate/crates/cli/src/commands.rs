//! The four subcommands. Each one computes everything first and only then
//! creates the output directory and writes its files.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use abc_core::converse::{
    error_probabilities, spectrum_bound_sweep, optimize_decoders, parse_code_spec, exponent_bound_reports,
    BlockCode, BoundReport, ErrorProbabilities,
};
use abc_core::emit::{
    format_sig, json_text, write_polygon_csv, write_surface_csv, write_sweep_csv, SurfaceRow,
};
use abc_core::exponent::{
    exponent_from_table, omega_max, sample_grid_params, ExponentParams, ExponentSearch,
    ExponentTable, OmegaMode, OmegaResult,
};
use abc_core::region::{
    hyperplane_sweep, min_slack, region_boundary, region_membership, Membership, OptimizerBudget,
    SweepPoint,
};
use abc_core::Error;
use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::Invalid;

/// Membership tolerance used when labelling rate points.
const MEMBERSHIP_TOL: f64 = 1e-6;

/// Value shown on stdout, in bits when requested.
fn shown(cfg: &RunConfig, nats: f64) -> String {
    let v = if cfg.bits { nats / std::f64::consts::LN_2 } else { nats };
    format_sig(v)
}

fn unit(cfg: &RunConfig) -> &'static str {
    if cfg.bits {
        "bits"
    } else {
        "nats"
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    let path = dir.join(name);
    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, json_text(value)?).with_context(|| format!("writing {}", path.display()))
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))
}

#[derive(Serialize)]
struct RegionSummary<'a> {
    config_hash: &'a str,
    seed: u64,
    capacity_w1: f64,
    vertices: &'a [(f64, f64)],
    max_r1: f64,
    max_r2: f64,
    slope_segment_length: f64,
    halfplanes: usize,
    partial: bool,
    failed_grid_points: &'a [usize],
}

pub fn region(cfg: &RunConfig) -> Result<i32> {
    let hash = cfg.hash();
    let (boundary, sweep) = region_boundary(cfg.channel(), &cfg.grid(), &cfg.budget)?;
    let max_r1 = boundary.vertices.iter().map(|v| v.0).fold(0.0, f64::max);
    let max_r2 = boundary.vertices.iter().map(|v| v.1).fold(0.0, f64::max);

    prepare(cfg)?;
    write_sweep_csv(create(&cfg.out, "region_sweep.csv")?, &hash, cfg.seed, &sweep)?;
    write_polygon_csv(
        create(&cfg.out, "region_polygon.csv")?,
        &hash,
        cfg.seed,
        &boundary.vertices,
    )?;
    write_json(
        &cfg.out,
        "region_summary.json",
        &RegionSummary {
            config_hash: &hash,
            seed: cfg.seed,
            capacity_w1: boundary.capacity_w1,
            vertices: &boundary.vertices,
            max_r1,
            max_r2,
            slope_segment_length: boundary.slope_segment_length,
            halfplanes: boundary.halfplanes.len(),
            partial: boundary.partial,
            failed_grid_points: &boundary.failed,
        },
    )?;

    println!("C(W1) = {} {}", shown(cfg, boundary.capacity_w1), unit(cfg));
    for &(r1, r2) in &boundary.vertices {
        println!("vertex {} {}", shown(cfg, r1), shown(cfg, r2));
    }
    if boundary.partial {
        println!("warning: {} grid points failed", boundary.failed.len());
    }
    Ok(0)
}

fn search_for(cfg: &RunConfig) -> ExponentSearch {
    ExponentSearch {
        budget: cfg.budget,
        ..ExponentSearch::default()
    }
}

#[derive(Serialize)]
struct ExponentPoint {
    r1: f64,
    r2: f64,
    f_value: f64,
    raw: f64,
    params: ExponentParams,
    omega: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    membership: Option<Membership>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_slack: Option<f64>,
}

#[derive(Serialize)]
struct ExponentSummary<'a> {
    config_hash: &'a str,
    seed: u64,
    points: Vec<ExponentPoint>,
}

pub fn exponent(cfg: &RunConfig) -> Result<i32> {
    if cfg.rates.is_empty() {
        return Err(Invalid("empty rate list (use --rate or rates/rate_grid)".into()).into());
    }
    let hash = cfg.hash();
    let ch = cfg.channel();
    let search = search_for(cfg);
    let table = ExponentTable::build(ch, &search)?;
    let boundary = if cfg.classify {
        Some(region_boundary(ch, &cfg.grid(), &OptimizerBudget::default().with_seed(cfg.seed))?.0)
    } else {
        None
    };
    let mut points = Vec::with_capacity(cfg.rates.len());
    for &[r1, r2] in &cfg.rates {
        let e = exponent_from_table(r1, r2, ch, &search, &table)?;
        points.push(ExponentPoint {
            r1,
            r2,
            f_value: e.value,
            raw: e.raw,
            params: e.params,
            omega: e.omega,
            membership: boundary
                .as_ref()
                .map(|b| region_membership(r1, r2, b, MEMBERSHIP_TOL)),
            min_slack: boundary.as_ref().map(|b| min_slack(r1, r2, b)),
        });
    }
    let rows: Vec<SurfaceRow> = points
        .iter()
        .map(|p| SurfaceRow {
            r1: p.r1,
            r2: p.r2,
            f_value: p.f_value,
            alpha: p.params.alpha,
            beta: p.params.beta,
            gamma: p.params.gamma,
            mu: p.params.mu,
            lambda: p.params.lambda,
        })
        .collect();

    prepare(cfg)?;
    write_surface_csv(create(&cfg.out, "exponent_surface.csv")?, &hash, cfg.seed, &rows)?;
    for p in &points {
        println!(
            "F({}, {}) = {} {}",
            shown(cfg, p.r1),
            shown(cfg, p.r2),
            shown(cfg, p.f_value),
            unit(cfg)
        );
    }
    write_json(
        &cfg.out,
        "exponent_summary.json",
        &ExponentSummary {
            config_hash: &hash,
            seed: cfg.seed,
            points,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
#[serde(untagged)]
enum CodeEntry {
    Checked {
        source: String,
        n: usize,
        k: usize,
        l: usize,
        r1: f64,
        r2: f64,
        probabilities: ErrorProbabilities,
        decoders_optimized: bool,
        exponent_bound: Vec<BoundReport>,
        spectrum_bound: Vec<BoundReport>,
    },
    Failed {
        source: String,
        error: String,
    },
}

#[derive(Serialize)]
struct VerifySummary {
    codes: usize,
    code_errors: usize,
    reports: usize,
    failures: usize,
    min_slack: f64,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    config_hash: &'a str,
    seed: u64,
    exponent_scale: f64,
    summary: VerifySummary,
    codes: Vec<CodeEntry>,
}

fn param_key(ep: &ExponentParams) -> [u64; 5] {
    [ep.alpha, ep.beta, ep.gamma, ep.mu, ep.lambda].map(f64::to_bits)
}

pub fn verify(cfg: &RunConfig) -> Result<i32> {
    if cfg.codes.is_empty() {
        return Err(Invalid("no codes given (use --code or codes)".into()).into());
    }
    let hash = cfg.hash();
    let ch = cfg.channel();

    // Parse everything up front: malformed codes are validation errors,
    // codes past the enumeration budget become error entries.
    let mut parsed: Vec<(String, std::result::Result<BlockCode, Error>)> = Vec::new();
    for c in &cfg.codes {
        match parse_code_spec(&c.text, ch) {
            Ok(code) => parsed.push((c.source.clone(), Ok(code))),
            Err(e @ Error::Budget { .. }) => parsed.push((c.source.clone(), Err(e))),
            Err(e) => return Err(Invalid(format!("code {}: {e}", c.source)).into()),
        }
    }

    let search = search_for(cfg);
    let mut shared: Vec<ExponentParams> = cfg
        .params
        .iter()
        .map(|p| ExponentParams::new(p.alpha, p.beta, p.gamma, p.mu, p.lambda))
        .collect::<abc_core::Result<_>>()?;
    shared.extend(sample_grid_params(&search, &cfg.grid(), cfg.param_samples, cfg.seed));

    let mut table: Option<ExponentTable> = None;
    let mut optimum: BTreeMap<[u64; 2], ExponentParams> = BTreeMap::new();
    let mut omegas: BTreeMap<[u64; 5], OmegaResult> = BTreeMap::new();
    let mut omega_for = |ep: &ExponentParams| -> Result<OmegaResult> {
        if let Some(om) = omegas.get(&param_key(ep)) {
            return Ok(om.clone());
        }
        let om = omega_max(ch, ep, &cfg.budget, OmegaMode::Lattice)?;
        omegas.insert(param_key(ep), om.clone());
        Ok(om)
    };

    let mut entries = Vec::new();
    let mut all_reports = Vec::new();
    let mut code_errors = 0;
    for (source, code) in parsed {
        let code = match code {
            Ok(c) => c,
            Err(e) => {
                code_errors += 1;
                entries.push(CodeEntry::Failed {
                    source,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let (r1, r2) = code.rates();
        let code = if cfg.optimize_decoders {
            optimize_decoders(&code, ch, 100)?
        } else {
            code
        };
        let mut params = shared.clone();
        if cfg.include_optimum {
            let key = [r1.to_bits(), r2.to_bits()];
            if let std::collections::btree_map::Entry::Vacant(e) = optimum.entry(key) {
                if table.is_none() {
                    table = Some(ExponentTable::build(ch, &search)?);
                }
                let t = table.as_ref().expect("table just built");
                e.insert(exponent_from_table(r1, r2, ch, &search, t)?.params);
            }
            params.push(optimum[&key]);
        }
        let mut with_omega = Vec::with_capacity(params.len());
        for ep in params {
            with_omega.push((ep, omega_for(&ep)?));
        }
        let exponent_bound = exponent_bound_reports(&code, ch, &with_omega, cfg.exponent_scale)?;
        let spectrum_bound = spectrum_bound_sweep(&code, ch, &cfg.etas, cfg.random_laws, cfg.seed)?;
        all_reports.extend(exponent_bound.iter().chain(&spectrum_bound).map(|r| (r.pass, r.slack)));
        entries.push(CodeEntry::Checked {
            source,
            n: code.n,
            k: code.k_count,
            l: code.l_count,
            r1,
            r2,
            probabilities: error_probabilities(&code, ch)?,
            decoders_optimized: cfg.optimize_decoders,
            exponent_bound,
            spectrum_bound,
        });
    }

    let failures = all_reports.iter().filter(|(p, _)| !p).count();
    let summary = VerifySummary {
        codes: entries.len(),
        code_errors,
        reports: all_reports.len(),
        failures,
        min_slack: all_reports.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
    };
    println!(
        "{} codes ({} errors), {} bound checks, {} failures, min slack {}",
        summary.codes,
        summary.code_errors,
        summary.reports,
        summary.failures,
        format_sig(summary.min_slack)
    );

    prepare(cfg)?;
    write_json(
        &cfg.out,
        "verify_report.json",
        &VerifyReport {
            config_hash: &hash,
            seed: cfg.seed,
            exponent_scale: cfg.exponent_scale,
            summary,
            codes: entries,
        },
    )?;
    Ok(if failures > 0 { 1 } else { 0 })
}

#[derive(Serialize)]
struct PresetSummary {
    budget: String,
    evaluated: usize,
    failed: usize,
    max_abs_diff_from_reference: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    config_hash: &'a str,
    seed: u64,
    reference: &'a str,
    presets: Vec<PresetSummary>,
}

/// Hyperplane values under each budget preset, compared against the last
/// preset in the list.
pub fn sweep(cfg: &RunConfig) -> Result<i32> {
    let hash = cfg.hash();
    let ch = cfg.channel();
    let grid = cfg.grid();
    let runs: Vec<(String, Vec<Option<SweepPoint>>)> = cfg
        .budgets
        .iter()
        .map(|name| {
            let b = OptimizerBudget::preset(name).expect("checked preset").with_seed(cfg.seed);
            (name.clone(), hyperplane_sweep(ch, &grid, &b))
        })
        .collect();
    let (reference_name, reference) = runs.last().expect("at least one preset");
    let presets = runs
        .iter()
        .map(|(name, pts)| {
            let max_abs_diff_from_reference = pts
                .iter()
                .zip(reference)
                .filter_map(|(a, b)| Some((a.as_ref()?.value - b.as_ref()?.value).abs()))
                .fold(0.0, f64::max);
            PresetSummary {
                budget: name.clone(),
                evaluated: pts.iter().flatten().count(),
                failed: pts.iter().filter(|p| p.is_none()).count(),
                max_abs_diff_from_reference,
            }
        })
        .collect::<Vec<_>>();

    prepare(cfg)?;
    for (name, pts) in &runs {
        write_sweep_csv(create(&cfg.out, &format!("sweep_{name}.csv"))?, &hash, cfg.seed, pts)?;
    }
    for p in &presets {
        println!(
            "{}: {} points, max |diff| vs {} = {} {}",
            p.budget,
            p.evaluated,
            reference_name,
            shown(cfg, p.max_abs_diff_from_reference),
            unit(cfg)
        );
    }
    write_json(
        &cfg.out,
        "sweep_summary.json",
        &SweepSummary {
            config_hash: &hash,
            seed: cfg.seed,
            reference: reference_name,
            presets,
        },
    )?;
    Ok(0)
}
