//! Subcommand implementations. Each validates the config fully before
//! computing, then writes its artifacts into the output directory.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fibrot::cocycle::LagrangianFrame;
use fibrot::duality::{build_dual, check_factorization, check_ids_duality};
use fibrot::gaps::{detect_gaps, GapKind, GapScan, LabelGroup};
use fibrot::hyperbolicity::uh_test;
use fibrot::model::{BlockTridiagonal, OperatorModel};
use fibrot::perturb::{check_bigstar_with, sigma0_from_gaps, star, RandomDiagonalLaw, SpectralSet};
use fibrot::rotation::rot_number_on_orbit;
use fibrot::scan::{scan, JobOutcome, OrbitCache};
use fibrot::BasePoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{RunConfig, SchemaError};
use crate::output::{json_report, num, svg_plot, write, Band, Csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Ids,
    Rot,
    Gaps,
    Uh,
    Duality,
    Perturb,
    Star,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ids => "ids",
            Command::Rot => "rot",
            Command::Gaps => "gaps",
            Command::Uh => "uh",
            Command::Duality => "duality",
            Command::Perturb => "perturb",
            Command::Star => "star",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Schema(SchemaError),
    Runtime(String),
    /// Outputs were written but some jobs failed.
    JobsFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Runtime(_) | CliError::JobsFailed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(e) => e.fmt(f),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
            CliError::JobsFailed(n) => write!(f, "error: {n} job(s) failed; see rows marked NaN"),
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Schema(e)
    }
}

impl From<fibrot::Error> for CliError {
    fn from(e: fibrot::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parsed invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub workers: usize,
}

/// Reads and validates a config file for `command`.
pub fn load(command: Command, path: &Path, out: Option<PathBuf>, workers: usize) -> Result<Invocation, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| SchemaError(format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::parse(&text)?;
    if let Some(c) = &config.command {
        if c != command.name() {
            return Err(SchemaError(format!("config is for \"{c}\", not \"{}\"", command.name())).into());
        }
    }
    let out_dir = out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    Ok(Invocation { command, config, out_dir, workers: workers.max(1) })
}

/// Runs the command on a pool of `workers` threads; returns the files
/// written.
pub fn run(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(inv.workers).build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match inv.command {
        Command::Ids => cmd_ids(inv),
        Command::Rot => cmd_rot(inv),
        Command::Gaps => cmd_gaps(inv),
        Command::Uh => cmd_uh(inv),
        Command::Duality => cmd_duality(inv),
        Command::Perturb => cmd_perturb(inv),
        Command::Star => cmd_star(inv),
    })
}

fn finish(inv: &Invocation, files: &[(&str, String)], failures: usize) -> Result<Vec<PathBuf>, CliError> {
    for (name, contents) in files {
        write(&inv.out_dir, name, contents)?;
    }
    if failures > 0 {
        return Err(CliError::JobsFailed(failures));
    }
    Ok(files.iter().map(|(name, _)| inv.out_dir.join(name)).collect())
}

fn origin(model: &OperatorModel) -> BasePoint {
    BasePoint::origin(model.base().dim())
}

fn cmd_ids(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let (model, grid) = (cfg.model()?, cfg.scan()?);
    let energies = grid.energies();
    let tri = BlockTridiagonal::new(&model, &origin(&model), grid.sites)?;
    let dim = tri.dim() as f64;
    let slack = model.tolerance().count_slack;
    let report = scan(&energies, inv.workers, |&e| Ok(tri.count_at_most(e, slack) as f64 / dim));
    let mut csv = Csv::new(&cfg.hash(), &["E", "ids"]);
    for (e, o) in energies.iter().zip(&report.outcomes) {
        csv.row(&[num(*e), num(o.ok().copied().unwrap_or(f64::NAN))]);
    }
    finish(inv, &[("ids.csv", csv.into_string())], report.failures())
}

fn cmd_rot(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let (model, grid) = (cfg.model()?, cfg.scan()?);
    let energies = grid.energies();
    let orbit = OrbitCache::build(&model, &origin(&model), grid.sites)?;
    let frame = LagrangianFrame::horizontal(model.block_dim());
    let report = scan(&energies, inv.workers, |&e| rot_number_on_orbit(&model, e, &orbit, &frame));
    let mut csv = Csv::new(&cfg.hash(), &["E", "rot_turns", "ledger_N", "substeps"]);
    for (e, o) in energies.iter().zip(&report.outcomes) {
        match o {
            JobOutcome::Done(r) => csv.row(&[num(*e), num(r.estimate), num(r.ledger.total()), r.ledger.substep_budget().to_string()]),
            JobOutcome::Failed(_) => csv.row(&[num(*e), num(f64::NAN), num(f64::NAN), "0".into()]),
        }
    }
    finish(inv, &[("rot.csv", csv.into_string())], report.failures())
}

fn cmd_uh(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let (model, grid) = (cfg.model()?, cfg.scan()?);
    if !model.base().is_invertible() {
        return Err(SchemaError("uh needs an invertible base map".into()).into());
    }
    let params = cfg.uh_params();
    let energies = grid.energies();
    let report = scan(&energies, inv.workers, |&e| uh_test(&model, e, &params));
    let mut csv = Csv::new(&cfg.hash(), &["E", "verdict", "lyapunov_gap", "probes"]);
    for (e, o) in energies.iter().zip(&report.outcomes) {
        match o {
            JobOutcome::Done(r) => {
                let m = model.block_dim();
                let gap = r.exponents[m - 1] - r.exponents[m];
                csv.row(&[num(*e), r.verdict.to_string(), num(gap), r.probes.to_string()]);
            }
            JobOutcome::Failed(_) => csv.row(&[num(*e), "failed".into(), num(f64::NAN), "0".into()]),
        }
    }
    finish(inv, &[("uh.csv", csv.into_string())], report.failures())
}

const DEGREE_GRID: usize = 128;

fn cmd_gaps(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let (model, grid) = (cfg.model()?, cfg.scan()?);
    if grid.points < 50 {
        return Err(SchemaError("gap scans need at least 50 points".into()).into());
    }
    if !model.base().is_invertible() {
        return Err(SchemaError("gap detection needs an invertible base map".into()).into());
    }
    let gap_scan = GapScan {
        uh: cfg.uh_params(),
        degree_grid: if model.base().rotation_vector().is_some() { DEGREE_GRID } else { 0 },
        ..GapScan::new(grid.e_min, grid.e_max, grid.points, grid.sites)
    };
    let gaps = detect_gaps(&model, &gap_scan)?;
    let group = LabelGroup::for_model(&model);
    let m = model.block_dim();
    let d = group.alpha().len();
    let mut columns: Vec<String> = ["E_lo", "E_hi", "kind", "ids", "m_ids"].iter().map(|s| s.to_string()).collect();
    columns.extend((1..=d).map(|i| format!("k{i}")));
    columns.extend(["j", "label_dist", "rot_turns", "dist_mod_group"].iter().map(|s| s.to_string()));
    columns.extend((1..=d).map(|i| format!("degree{i}")));
    let hash = cfg.hash();
    let mut csv = Csv::new(&hash, &columns.iter().map(String::as_str).collect::<Vec<_>>());
    let mut bands = Vec::new();
    for g in &gaps {
        let kind = match g.kind {
            GapKind::Below => "below",
            GapKind::Interior => "interior",
            GapKind::Above => "above",
        };
        let mut row = vec![num(g.lower), num(g.upper), kind.to_string(), num(g.ids_value), num(m as f64 * g.ids_value)];
        match &g.label {
            Some(l) => {
                row.extend(l.k.iter().map(|k| k.to_string()));
                row.push(l.j.to_string());
            }
            None => row.extend(std::iter::repeat(String::new()).take(d + 1)),
        }
        let dist = group.distance(m as f64 * (1.0 - g.ids_value) - g.rot_value);
        row.extend([num(g.label_distance), num(g.rot_value), num(dist)]);
        match &g.degree {
            Some(r) => row.extend(r.0.iter().map(|x| x.to_string())),
            None => row.extend(std::iter::repeat(String::new()).take(d)),
        }
        csv.row(&row);
        let label = g.label.as_ref().map_or("?".to_string(), |l| format!("k={:?} j={}", l.k, l.j));
        bands.push(Band { lower: g.lower, upper: g.upper, label });
    }
    let energies = grid.energies();
    let values = fibrot::model::ids(&model, &origin(&model), grid.sites, &energies)?;
    let svg = svg_plot(&hash, "integrated density of states", &energies, &values, &bands);
    finish(inv, &[("gaps.csv", csv.into_string()), ("gaps.svg", svg)], 0)
}

fn cmd_duality(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let Some(v) = cfg.dual_polynomial()? else {
        return Err(SchemaError("duality needs \"dual_of\"".into()).into());
    };
    let grid = cfg.scan()?;
    let samples = cfg.duality.map_or(100, |d| d.samples);
    let bound = build_dual(&v)?.norm_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<(f64, f64)> = (0..samples).map(|_| (rng.gen_range(-bound..=bound), rng.gen::<f64>())).collect();
    let report = scan(&points, inv.workers, |&(e, t)| check_factorization(&v, e, t));
    let residual = report.outcomes.iter().filter_map(|o| o.ok().copied()).fold(0.0, f64::max);
    let ids_diff = check_ids_duality(&v, &grid.energies(), grid.sites)?;
    let doc = json_report(
        &cfg.hash(),
        json!({
            "degree": v.degree(),
            "samples": samples,
            "max_factorization_residual": residual,
            "max_ids_difference": ids_diff,
            "sites": grid.sites,
        }),
    );
    finish(inv, &[("duality.json", doc)], report.failures())
}

fn cmd_perturb(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let (model, grid) = (cfg.model()?, cfg.scan()?);
    let Some(spec) = &cfg.perturb else {
        return Err(SchemaError("perturb needs a \"perturb\" section".into()).into());
    };
    let law = RandomDiagonalLaw::new(spec.support.clone(), cfg.seed).map_err(|e| SchemaError(e.to_string()))?;
    if spec.realizations == 0 {
        return Err(SchemaError("realizations must be positive".into()).into());
    }
    if grid.points < 50 {
        return Err(SchemaError("the unperturbed gap scan needs at least 50 points".into()).into());
    }
    let gap_scan = GapScan { uh: cfg.uh_params(), ..GapScan::new(grid.e_min, grid.e_max, grid.points, grid.sites) };
    let sigma0 = sigma0_from_gaps(&model, &gap_scan)?;
    let report = check_bigstar_with(&model, &law, grid.sites, spec.realizations, &sigma0)?;
    let doc = json_report(
        &cfg.hash(),
        json!({
            "sigma0": sigma0,
            "sigma1_sampled": report.sampled.set,
            "sigma0_star_support": report.predicted,
            "merge_radius": report.sampled.merge_radius,
            "subset_violation": report.subset_violation,
            "coverage_gap": report.coverage_gap,
            "realizations": spec.realizations,
            "eigenvalues": report.sampled.eigenvalues.len(),
        }),
    );
    finish(inv, &[("perturb.json", doc)], 0)
}

fn cmd_star(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &inv.config;
    let Some(spec) = &cfg.star else {
        return Err(SchemaError("star needs a \"star\" section".into()).into());
    };
    let to_set = |v: &[[f64; 2]]| SpectralSet::new(v.iter().map(|iv| (iv[0], iv[1]))).map_err(|e| SchemaError(e.to_string()));
    let (a, b) = (to_set(&spec.a)?, to_set(&spec.b)?);
    let result = star(&a, &b).map_err(|e| SchemaError(e.to_string()))?;
    let doc = json_report(&cfg.hash(), json!({ "A": a, "B": b, "star": result }));
    finish(inv, &[("star.json", doc)], 0)
}
