//! Front end for the `implicitpoly` binary: `approx`, `system` and `verify`.
//!
//! Failure classes map to exit codes: 2 for unreadable input (expressions,
//! boxes, configs, coefficient files), 3 when no consistent sign step exists,
//! 4 for numerical failure of the coefficient solve, 5 for a degenerate
//! system, 1 for anything else including failed verification checks.

pub mod artifacts;
pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};

use implicitpoly::geometry::{multi_indices, DyadicGrid};
use implicitpoly::integrator::{GaussBisection, VolumeIntegrator};
use implicitpoly::oracle::{self, McConfig};
use implicitpoly::quad::QuadConfig;
use implicitpoly::{
    approximate, solve_system, ApproxResult, ApproxSettings, Error, Expression, ImplicitProblem,
    IntegratorOptions, IntegratorRegistry, Pivot, PolyTensor, Rho, SystemProblem,
    DEFAULT_INTEGRATOR,
};
use serde_json::json;

use crate::artifacts::{grid_points, write_json, Check, CoeffsArtifact, Csv, VerifyReport};
use crate::config::{
    merge, parse_box, parse_interval, required, ApproxArgs, Cli, Command, NumericArgs, SystemArgs,
    VerifyArgs, VerifyConfig,
};

const DEFAULT_GRID_POINTS: usize = 21;
const DEFAULT_MC_BLOCKS: usize = 10;
const DEFAULT_CESARO_TOL: f64 = 0.1;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    VerifyFailed(usize),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        let CliError::Core(err) = self else {
            return 1;
        };
        match err.root() {
            Error::Syntax { .. }
            | Error::UnknownFunction { .. }
            | Error::EmptyInput
            | Error::UnboundVariable(_)
            | Error::InvalidInterval { .. }
            | Error::InvalidBox(_)
            | Error::OutsideDomain(_)
            | Error::DimensionMismatch { .. }
            | Error::Config(_) => 2,
            Error::NoBracket(_)
            | Error::RhoNotConstant(_)
            | Error::RhoViolated(_)
            | Error::NotOnZeroSet { .. } => 3,
            Error::IllConditioned { .. }
            | Error::Singular
            | Error::Residual { .. }
            | Error::LevelTooHigh { .. } => 4,
            Error::DegenerateSystem { .. } | Error::VanishingPivot { .. } => 5,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::VerifyFailed(n) => write!(f, "{n} verification check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Progress lines on stdout, silenced by `--quiet`.
pub struct Reporter {
    pub quiet: bool,
}

impl Reporter {
    fn say(&self, msg: impl fmt::Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let out = Reporter { quiet: cli.quiet };
    match cli.command {
        Command::Approx(args) => {
            let cfg = merge(&args, args.config.as_deref())?;
            init_threads(cli.threads.or(cfg.numerics.threads))?;
            run_approx(&cfg, &out)
        }
        Command::System(args) => {
            let cfg = merge(&args, args.config.as_deref())?;
            init_threads(cli.threads.or(cfg.numerics.threads))?;
            run_system(&cfg, &out)
        }
        Command::Verify(args) => {
            let cfg: VerifyConfig = merge(&VerifyConfig::default(), Some(&args.config))?;
            init_threads(cli.threads.or(cfg.approx.numerics.threads))?;
            run_verify(&args, &cfg, &out)
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("threads must be positive".into()).into());
    }
    // A second call (as in tests that run several commands in one process) keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn integrator(num: &NumericArgs) -> Result<Box<dyn VolumeIntegrator>, CliError> {
    let defaults = IntegratorOptions::default();
    let options = IntegratorOptions {
        quad: QuadConfig {
            gauss_order: num.gauss.unwrap_or(defaults.quad.gauss_order),
            bisect_tol_rel: num.bisect_tol.unwrap_or(defaults.quad.bisect_tol_rel),
        },
        monte_carlo: McConfig {
            samples: num.mc_samples.unwrap_or(defaults.monte_carlo.samples),
            seed: num.seed.unwrap_or(defaults.monte_carlo.seed),
        },
    };
    let name = num.integrator.as_deref().unwrap_or(DEFAULT_INTEGRATOR);
    Ok(IntegratorRegistry::default().create(name, &options)?)
}

fn settings(num: &NumericArgs) -> ApproxSettings {
    let d = ApproxSettings::default();
    ApproxSettings {
        max_level: num.max_level.unwrap_or(d.max_level),
        condition_limit: num.condition_limit.unwrap_or(d.condition_limit),
    }
}

fn approx_problem(cfg: &ApproxArgs) -> Result<(ImplicitProblem, String), CliError> {
    let f = Expression::parse(&required(&cfg.f, "f")?)?;
    let names = cfg.x.as_ref().map(|l| l.0.as_slice());
    let domain = parse_box(&required(&cfg.domain, "box")?, names)?;
    let y = cfg.y.clone().unwrap_or_else(|| "y".to_string());
    let range = parse_interval(&required(&cfg.range, "range")?)?;
    let problem = ImplicitProblem::new(
        &f,
        &y,
        domain,
        range,
        required(&cfg.a, "a")?.0,
        required(&cfg.b, "b")?,
        required(&cfg.n, "n")?,
    )?;
    Ok((problem, y))
}

pub fn run_approx(cfg: &ApproxArgs, out: &Reporter) -> Result<(), CliError> {
    let (problem, y) = approx_problem(cfg)?;
    let integ = integrator(&cfg.numerics)?;
    let result = approximate(&problem, integ.as_ref(), &settings(&cfg.numerics))?;

    let path = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("coeffs.json"));
    write_json(&path, &CoeffsArtifact::new(&result, &y))?;
    out.say(format_args!("wrote {}", path.display()));

    if let Some(grid) = &cfg.grid {
        let reference = cfg
            .reference
            .as_deref()
            .map(Expression::parse)
            .transpose()?;
        let names = result.domain.names();
        let reference = reference.map(|r| r.compile(&names)).transpose()?;
        let use_oracle = reference.is_none() && cfg.oracle.unwrap_or(false);

        let mut header: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        header.extend(["g_n".into(), "cesaro".into()]);
        if reference.is_some() || use_oracle {
            header.extend(["ref".into(), "abs_err".into()]);
        }
        let mut csv = Csv::new(&header);
        let per_axis = cfg.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
        for x in grid_points(&result.domain, per_axis) {
            let g = result.eval(&x)?;
            let mut row = x.clone();
            row.extend([g, result.cesaro_eval(&x, result.level())?]);
            let truth = match &reference {
                Some(r) => Some(r.eval(&x)?),
                None if use_oracle => Some(oracle_root(&problem, &x, result.rho)?),
                None => None,
            };
            if let Some(t) = truth {
                row.extend([t, (g - t).abs()]);
            }
            csv.row(&row);
        }
        csv.write(grid)?;
        out.say(format_args!("wrote {}", grid.display()));
    }
    Ok(())
}

fn oracle_root(problem: &ImplicitProblem, x: &[f64], rho: Rho) -> Result<f64, CliError> {
    let range = problem.range();
    Ok(oracle::pointwise_implicit(
        problem.equation(),
        x,
        range,
        rho,
        1e-14 * range.length().max(1.0),
    )?)
}

fn system_problem(cfg: &SystemArgs) -> Result<SystemProblem, CliError> {
    let y = cfg
        .y
        .as_ref()
        .map(|l| l.0.clone())
        .unwrap_or_else(|| vec!["y1".into(), "y2".into()]);
    let b = required(&cfg.b, "b")?.0;
    if y.len() != 2 || b.len() != 2 {
        return Err(Error::Config(
            "a system has exactly two unknowns (y and b take two entries)".into(),
        )
        .into());
    }
    let pivot = match &cfg.pivot {
        None => None,
        Some(p) if p.0.len() == 2 && p.0[0] >= 1 && p.0[1] >= 1 => {
            Some(Pivot::new(p.0[0] - 1, p.0[1] - 1)?)
        }
        Some(p) => {
            return Err(Error::Config(format!(
                "pivot must be `i,j` with i, j in 1..=2, got {:?}",
                p.0
            ))
            .into())
        }
    };
    Ok(SystemProblem {
        f1: Expression::parse(&required(&cfg.f1, "f1")?)?,
        f2: Expression::parse(&required(&cfg.f2, "f2")?)?,
        y_names: [y[0].clone(), y[1].clone()],
        domain: parse_box(
            &required(&cfg.domain, "box")?,
            cfg.x.as_ref().map(|l| l.0.as_slice()),
        )?,
        ranges: [
            parse_interval(&required(&cfg.range1, "range1")?)?,
            parse_interval(&required(&cfg.range2, "range2")?)?,
        ],
        center: required(&cfg.a, "a")?.0,
        base: [b[0], b[1]],
        levels: [required(&cfg.n, "n")?, required(&cfg.m, "m")?],
        pivot,
        stage2_range: cfg
            .range_stage2
            .as_deref()
            .map(parse_interval)
            .transpose()?,
    })
}

pub fn run_system(cfg: &SystemArgs, out: &Reporter) -> Result<(), CliError> {
    let sp = system_problem(cfg)?;
    let integ = integrator(&cfg.numerics)?;
    let result = solve_system(&sp, integ.as_ref(), &settings(&cfg.numerics))?;
    let (_, free) = result.pivot.other();

    let artifact = json!({
        "pivot": [result.pivot.equation + 1, result.pivot.variable + 1],
        "jacobian_det": result.jacobian_det,
        "stage1": CoeffsArtifact::new(&result.first, &sp.y_names[result.pivot.variable]),
        "stage2": CoeffsArtifact::new(&result.second, &sp.y_names[free]),
    });
    let path = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("system.json"));
    write_json(&path, &artifact)?;
    out.say(format_args!("wrote {}", path.display()));

    if let Some(grid) = &cfg.grid {
        let mut header: Vec<String> = sp.domain.names().iter().map(|s| s.to_string()).collect();
        header.extend([
            sp.y_names[0].clone(),
            sp.y_names[1].clone(),
            "r1".into(),
            "r2".into(),
        ]);
        let mut csv = Csv::new(&header);
        for x in grid_points(&sp.domain, cfg.grid_points.unwrap_or(DEFAULT_GRID_POINTS)) {
            let y = result.evaluate(&x)?;
            let r = result.residuals(&x)?;
            let mut row = x;
            row.extend([y[0], y[1], r[0], r[1]]);
            csv.row(&row);
        }
        csv.write(grid)?;
        out.say(format_args!("wrote {}", grid.display()));
    }
    Ok(())
}

/// Block means of the true `g`, by 4-point Gauss per axis on the root-finding oracle.
fn oracle_block_mean(
    problem: &ImplicitProblem,
    block: &implicitpoly::IntervalBox,
    rho: Rho,
) -> Result<f64, CliError> {
    let rule = implicitpoly::gauss::GaussLegendre::new(4);
    let scaled: Vec<_> = (0..block.dim())
        .map(|k| rule.scaled(block.interval(k).lo(), block.interval(k).hi()))
        .collect();
    let mut sum = 0.0;
    let mut x = vec![0.0; block.dim()];
    for idx in multi_indices(block.dim(), 4) {
        let mut w = 1.0;
        for k in 0..block.dim() {
            x[k] = scaled[k].0[idx[k]];
            w *= scaled[k].1[idx[k]];
        }
        sum += w * oracle_root(problem, &x, rho)?;
    }
    Ok(sum / block.volume())
}

pub fn run_verify(args: &VerifyArgs, cfg: &VerifyConfig, out: &Reporter) -> Result<(), CliError> {
    let mut approx_cfg = cfg.approx.clone();
    let stored = cfg
        .coeffs
        .as_deref()
        .map(CoeffsArtifact::read)
        .transpose()?;
    if let Some(s) = &stored {
        approx_cfg.n = Some(s.level);
    }
    let (problem, _) = approx_problem(&approx_cfg)?;
    let quad = GaussBisection {
        config: QuadConfig {
            gauss_order: approx_cfg
                .numerics
                .gauss
                .unwrap_or(QuadConfig::default().gauss_order),
            bisect_tol_rel: approx_cfg
                .numerics
                .bisect_tol
                .unwrap_or(QuadConfig::default().bisect_tol_rel),
        },
    };
    let fitted: ApproxResult = approximate(&problem, &quad, &settings(&approx_cfg.numerics))?;
    let poly: PolyTensor = stored
        .map(|s| s.poly)
        .unwrap_or_else(|| fitted.poly.clone());
    let level = fitted.level();
    let range = problem.range();
    let grid = DyadicGrid::new(problem.domain().clone(), level);
    let blocks: Vec<Vec<usize>> =
        multi_indices(problem.domain().dim(), grid.blocks_per_axis()).collect();
    let mut checks = Vec::new();

    let means = fitted.mean_tensor.entries();
    let mut worst: f64 = 0.0;
    for idx in &blocks {
        let block = grid.block(idx);
        worst = worst.max((poly.local_average(&block)? - means.get(idx) / block.volume()).abs());
    }
    checks.push(Check::at_most(
        "block_means",
        worst,
        1e-8 * (1.0 + range.length()),
    ));

    let samples = args
        .mc_samples
        .or(approx_cfg.numerics.mc_samples)
        .unwrap_or(McConfig::default().samples);
    let seed = args
        .seed
        .or(approx_cfg.numerics.seed)
        .unwrap_or(McConfig::default().seed);
    let count = cfg.mc_blocks.unwrap_or(DEFAULT_MC_BLOCKS).min(blocks.len());
    for k in 0..count {
        let flat = k * blocks.len() / count;
        let block = grid.block(&blocks[flat]);
        let q = quad.volume(problem.equation(), &block, range, fitted.rho)?;
        let mc = oracle::mc_volume(
            problem.equation(),
            &block,
            range,
            &McConfig {
                samples,
                seed: seed.wrapping_add(flat as u64),
            },
        )?;
        let floor = 1e-9 * block.volume() * range.length();
        checks.push(Check::at_most(
            format!("mc_block_{flat}"),
            (q.value - mc.estimate).abs(),
            (3.0 * mc.std_error).max(floor),
        ));
    }

    let mut worst: f64 = 0.0;
    for idx in &blocks {
        let block = grid.block(idx);
        worst = worst.max(
            (poly.local_average(&block)? - oracle_block_mean(&problem, &block, fitted.rho)?).abs(),
        );
    }
    checks.push(Check::at_most(
        "oracle_block_means",
        worst,
        1e-6 * range.length(),
    ));

    let fitted_with_poly = ApproxResult { poly, ..fitted };
    let mut worst: f64 = 0.0;
    for x in grid_points(problem.domain(), DEFAULT_GRID_POINTS) {
        let err = fitted_with_poly.cesaro_eval(&x, level)?
            - oracle_root(&problem, &x, fitted_with_poly.rho)?;
        worst = worst.max(err.abs());
    }
    checks.push(Check::at_most(
        "oracle_cesaro",
        worst,
        cfg.cesaro_tol.unwrap_or(DEFAULT_CESARO_TOL),
    ));

    let failed = checks.iter().filter(|c| !c.pass).count();
    let report = VerifyReport {
        seed,
        rng: oracle::RNG_NAME,
        mc_samples: samples,
        level,
        checks,
        pass: failed == 0,
    };
    let path = args
        .out
        .clone()
        .or_else(|| cfg.report.clone())
        .unwrap_or_else(|| PathBuf::from("verify.json"));
    write_json(&path, &report)?;
    out.say(format_args!("wrote {}", path.display()));
    for c in &report.checks {
        out.say(format_args!(
            "{} {}: {:e} (bound {:e})",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        ));
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}
