//! Command-line front end: dispatches the partition self-check, norm
//! reports, datum generation, time integration, estimate ensembles, the
//! scaling sweep, and the inflation experiment, writing CSV/JSON outputs
//! plus a checksummed manifest for every run. Identical configurations
//! produce byte-identical CSV and JSON outputs.

use clap::{Parser, Subcommand};
use moch::besov::norm_profile;
use moch::config::{corrector_from_str, load_config, validate_patch, CommandPatch, EstimateSuite};
use moch::dynamics::{solve, MochParams};
use moch::init::{auto_grid_size, build_gamma0, CorrectorMode};
use moch::io::{
    ensemble_maxima_csv, estimate_reports_csv, inflation_csv, norm_series_csv, profile_csv,
    read_snapshot, scaling_table_csv, snapshot_bytes, write_snapshot, RunManifest,
};
use moch::{
    inflation_experiment, lp_self_check, run_ensemble, scaling_sweep, DyadicPartition,
    EnsembleConfig, EnsembleSummary, EstimateId, Grid, InflationPolicy, LineChart, MemberReports,
    MochError, Result,
};
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "moch",
    version,
    about = "Spectral laboratory for a Camassa-Holm-type equation: dyadic norm machinery, \
             estimate ensembles, and norm-inflation experiments on the torus"
)]
struct Cli {
    /// JSON config file; explicit flags override its values field by field
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory that receives every output file (created if missing)
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads for sweeps and ensembles (default: all cores)
    #[arg(long, global = true, value_name = "NUM")]
    threads: Option<usize>,

    /// Also render SVG line charts next to the tabular outputs
    #[arg(long, global = true)]
    svg: bool,

    /// Seed override for the randomized suites
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Self-check the dyadic frequency partition: multiplier coverage,
    /// block disjointness, reconstruction, and derivative-scale ratios
    LpCheck {
        /// Grid size (power of two)
        #[arg(long)]
        points: Option<usize>,
        /// Number of random fields to reconstruct
        #[arg(long)]
        fields: Option<usize>,
    },
    /// Report the block-norm profile and summed norms of a stored field
    Norms {
        /// Snapshot file to analyze
        #[arg(long, value_name = "SNAPSHOT")]
        init: Option<PathBuf>,
    },
    /// Build the rough initial datum at a given scale and store it
    GenInit {
        /// Datum scale
        #[arg(long = "N")]
        scale: Option<i32>,
        /// Corrector variant: regular or literal
        #[arg(long)]
        corrector: Option<String>,
        /// Snapshot path to write
        #[arg(long, value_name = "SNAPSHOT")]
        out: Option<PathBuf>,
    },
    /// Integrate a stored field and record its norm history
    Solve {
        /// Snapshot file with the initial field
        #[arg(long, value_name = "SNAPSHOT")]
        init: Option<PathBuf>,
        /// Dispersion-like coefficient (nonzero)
        #[arg(long)]
        lambda: Option<f64>,
        /// Time step
        #[arg(long)]
        dt: Option<f64>,
        /// Integration horizon
        #[arg(long = "T")]
        t_final: Option<f64>,
        /// Disable the 2/3-rule dealiasing of products
        #[arg(long)]
        no_dealias: bool,
        /// Prefix for all emitted files
        #[arg(long, value_name = "PREFIX")]
        out_prefix: Option<String>,
        /// Record the norm row every this many steps
        #[arg(long, value_name = "STEPS")]
        record_every: Option<usize>,
        /// Also store a field snapshot every this many steps
        #[arg(long, value_name = "STEPS")]
        snapshot_every: Option<usize>,
    },
    /// Measure the product and commutator inequalities over a seeded
    /// random ensemble and report the worst ratios
    Estimates {
        /// Which inequality family: products, commutators, or all
        #[arg(long)]
        suite: Option<String>,
        /// Number of ensemble members
        #[arg(long, value_name = "NUM")]
        ensemble: Option<usize>,
        /// Grid size (power of two)
        #[arg(long)]
        points: Option<usize>,
        /// Highest excited mode of the random fields
        #[arg(long)]
        max_mode: Option<usize>,
        /// Dispersion-like coefficient (nonzero)
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Tabulate the datum norms across scales and fit their growth
    /// exponents
    Sweep {
        /// Comma-separated list of scales
        #[arg(long = "N", value_delimiter = ',', value_name = "LIST")]
        scales: Option<Vec<i32>>,
        /// Corrector variant: regular or literal
        #[arg(long)]
        corrector: Option<String>,
    },
    /// Run the norm-inflation experiment across scales
    Inflate {
        /// Comma-separated list of scales
        #[arg(long = "N", value_delimiter = ',', value_name = "LIST")]
        scales: Option<Vec<i32>>,
        /// Dispersion-like coefficient (nonzero)
        #[arg(long)]
        lambda: Option<f64>,
        /// Fixed time step (default: per-scale policy step)
        #[arg(long)]
        dt: Option<f64>,
        /// Corrector variant: regular or literal
        #[arg(long)]
        corrector: Option<String>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::LpCheck { .. } => "lp-check",
            Cmd::Norms { .. } => "norms",
            Cmd::GenInit { .. } => "gen-init",
            Cmd::Solve { .. } => "solve",
            Cmd::Estimates { .. } => "estimates",
            Cmd::Sweep { .. } => "sweep",
            Cmd::Inflate { .. } => "inflate",
        }
    }

    /// The subcommand's explicit flags as a patch, for merging over a
    /// config file.
    fn to_patch(&self) -> Result<CommandPatch> {
        let mut p = CommandPatch::default();
        match self {
            Cmd::LpCheck { points, fields } => {
                p.points = *points;
                p.fields = *fields;
            }
            Cmd::Norms { init } => {
                p.init = init.clone();
            }
            Cmd::GenInit {
                scale,
                corrector,
                out,
            } => {
                p.scales = scale.map(|n| vec![n]);
                p.corrector = corrector.as_deref().map(corrector_from_str).transpose()?;
                p.out = out.clone();
            }
            Cmd::Solve {
                init,
                lambda,
                dt,
                t_final,
                no_dealias,
                out_prefix,
                record_every,
                snapshot_every,
            } => {
                p.init = init.clone();
                p.lambda = *lambda;
                p.dt = *dt;
                p.t_final = *t_final;
                p.dealias = no_dealias.then_some(false);
                p.out_prefix = out_prefix.clone();
                p.record_every = *record_every;
                p.snapshot_every = *snapshot_every;
            }
            Cmd::Estimates {
                suite,
                ensemble,
                points,
                max_mode,
                lambda,
            } => {
                p.suite = suite.as_deref().map(str::parse).transpose()?;
                p.ensemble = *ensemble;
                p.points = *points;
                p.max_mode = *max_mode;
                p.lambda = *lambda;
            }
            Cmd::Sweep { scales, corrector } => {
                p.scales = scales.clone();
                p.corrector = corrector.as_deref().map(corrector_from_str).transpose()?;
            }
            Cmd::Inflate {
                scales,
                lambda,
                dt,
                corrector,
            } => {
                p.scales = scales.clone();
                p.lambda = *lambda;
                p.dt = *dt;
                p.corrector = corrector.as_deref().map(corrector_from_str).transpose()?;
            }
        }
        Ok(p)
    }
}

/// Overlay `cli` (stronger) over `file` (weaker), field by field.
fn overlay(cli: CommandPatch, file: CommandPatch) -> CommandPatch {
    CommandPatch {
        points: cli.points.or(file.points),
        fields: cli.fields.or(file.fields),
        seed: cli.seed.or(file.seed),
        init: cli.init.or(file.init),
        scales: cli.scales.or(file.scales),
        corrector: cli.corrector.or(file.corrector),
        out: cli.out.or(file.out),
        lambda: cli.lambda.or(file.lambda),
        dt: cli.dt.or(file.dt),
        t_final: cli.t_final.or(file.t_final),
        dealias: cli.dealias.or(file.dealias),
        out_prefix: cli.out_prefix.or(file.out_prefix),
        record_every: cli.record_every.or(file.record_every),
        snapshot_every: cli.snapshot_every.or(file.snapshot_every),
        suite: cli.suite.or(file.suite),
        ensemble: cli.ensemble.or(file.ensemble),
        max_mode: cli.max_mode.or(file.max_mode),
    }
}

struct RunCtx {
    out_dir: PathBuf,
    svg: bool,
    started: Instant,
}

impl RunCtx {
    fn finish(&self, mut manifest: RunManifest) -> Result<()> {
        manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        let path = manifest.write(&self.out_dir)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn emit(&self, manifest: &mut RunManifest, name: &str, text: &str) -> Result<()> {
        let path = manifest.emit(&self.out_dir, name, text.as_bytes())?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn corrector_name(mode: CorrectorMode) -> &'static str {
    match mode {
        CorrectorMode::Regular => "regular",
        CorrectorMode::Literal => "literal",
    }
}

fn require<T>(value: Option<T>, command: &str, key: &str) -> Result<T> {
    value.ok_or_else(|| MochError::Config(format!("{command} requires `{key}`")))
}

/// Read a snapshot, naming the offending path in any I/O error.
fn read_snapshot_at(path: &std::path::Path) -> Result<moch::RealField> {
    read_snapshot(path).map_err(|e| match e {
        MochError::Io(io) => MochError::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(MochError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| MochError::Config(format!("thread pool: {e}")))?;
    }

    let file = cli.config.as_deref().map(load_config).transpose()?;
    let (command, cli_patch) = match (&cli.command, &file) {
        (Some(cmd), Some(fc)) if fc.command != cmd.name() => {
            return Err(MochError::Config(format!(
                "config file names command `{}` but the command line says `{}`",
                fc.command,
                cmd.name()
            )));
        }
        (Some(cmd), _) => (cmd.name().to_string(), cmd.to_patch()?),
        (None, Some(fc)) => (fc.command.clone(), CommandPatch::default()),
        (None, None) => {
            return Err(MochError::Config(
                "no command given (pass a subcommand or --config)".into(),
            ));
        }
    };

    let file_patch = file.as_ref().map(|fc| fc.patch.clone()).unwrap_or_default();
    let mut patch = overlay(cli_patch, file_patch);
    if cli.seed.is_some() {
        patch.seed = cli.seed;
    }
    validate_patch(&patch)?;

    let out_dir = cli
        .out_dir
        .or_else(|| file.as_ref().and_then(|fc| fc.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let svg = cli.svg || file.as_ref().and_then(|fc| fc.svg).unwrap_or(false);
    let ctx = RunCtx {
        out_dir,
        svg,
        started: Instant::now(),
    };

    match command.as_str() {
        "lp-check" => run_lp_check(&ctx, &patch),
        "norms" => run_norms(&ctx, &patch),
        "gen-init" => run_gen_init(&ctx, &patch),
        "solve" => run_solve(&ctx, &patch),
        "estimates" => run_estimates(&ctx, &patch),
        "sweep" => run_sweep(&ctx, &patch),
        "inflate" => run_inflate(&ctx, &patch),
        other => Err(MochError::Config(format!("unknown command `{other}`"))),
    }
}

fn run_lp_check(ctx: &RunCtx, patch: &CommandPatch) -> Result<()> {
    let points = patch.points.unwrap_or(4096);
    let fields = patch.fields.unwrap_or(200);
    let seed = patch.seed.unwrap_or(1);
    let report = lp_self_check(points, fields, seed)?;

    let mut manifest = RunManifest::new(
        "lp-check",
        json!({ "points": points, "fields": fields, "seed": seed }),
    );
    let mut csv = String::from("check,value\n");
    csv.push_str(&format!(
        "max_coverage_defect,{:.16e}\n",
        report.max_coverage_defect
    ));
    csv.push_str(&format!(
        "max_reconstruction_rel_err,{:.16e}\n",
        report.max_reconstruction_rel_err
    ));
    csv.push_str(&format!(
        "max_disjoint_overlap,{:.16e}\n",
        report.max_disjoint_overlap
    ));
    csv.push_str(&format!(
        "bernstein_min_ratio,{:.16e}\n",
        report.bernstein_min_ratio
    ));
    csv.push_str(&format!(
        "bernstein_max_ratio,{:.16e}\n",
        report.bernstein_max_ratio
    ));
    csv.push_str(&format!(
        "bernstein_all_within,{}\n",
        u8::from(report.bernstein_all_within)
    ));
    ctx.emit(&mut manifest, "lp_check.csv", &csv)?;
    let mut json_text = serde_json::to_string_pretty(&report).expect("report serializes");
    json_text.push('\n');
    ctx.emit(&mut manifest, "lp_check.json", &json_text)?;

    let checks = [
        (
            "partition coverage defect",
            report.max_coverage_defect,
            1e-12,
        ),
        (
            "block reconstruction rel. error",
            report.max_reconstruction_rel_err,
            1e-10,
        ),
        (
            "distant-block overlap",
            report.max_disjoint_overlap,
            1e-12,
        ),
    ];
    let mut healthy = true;
    for (label, value, tol) in checks {
        let ok = value <= tol;
        healthy &= ok;
        println!(
            "{label:<34} {value:.3e}  (tolerance {tol:.0e})  {}",
            if ok { "ok" } else { "FAIL" }
        );
    }
    println!(
        "derivative-scale ratios           [{:.4}, {:.4}]  {}",
        report.bernstein_min_ratio,
        report.bernstein_max_ratio,
        if report.bernstein_all_within {
            "ok"
        } else {
            "FAIL"
        }
    );
    healthy &= report.bernstein_all_within;
    ctx.finish(manifest)?;
    if !healthy {
        return Err(MochError::invalid(
            "partition self-check failed (see lp_check.csv)",
        ));
    }
    Ok(())
}

fn run_norms(ctx: &RunCtx, patch: &CommandPatch) -> Result<()> {
    let init = require(patch.init.clone(), "norms", "init")?;
    let field = read_snapshot_at(&init)?;
    let part = DyadicPartition::new(field.grid())?;
    let profile = norm_profile(&part, &field)?;

    let mut manifest = RunManifest::new("norms", json!({ "init": init.display().to_string() }));
    ctx.emit(&mut manifest, "norm_profile.csv", &profile_csv(&profile))?;
    let summary = json!({
        "points": field.grid().num_points(),
        "B0inf1": profile.total(),
        "B0infinf1_weighted": profile.weighted_sup().value,
        "Linf": field.linf(),
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    ctx.emit(&mut manifest, "norms.json", &text)?;

    println!("points              {}", field.grid().num_points());
    println!("B0inf1 (summed)     {:.12e}", profile.total());
    println!("weighted block sup  {:.12e}", profile.weighted_sup().value);
    println!("Linf                {:.12e}", field.linf());
    ctx.finish(manifest)
}

fn run_gen_init(ctx: &RunCtx, patch: &CommandPatch) -> Result<()> {
    let scales = require(patch.scales.clone(), "gen-init", "N")?;
    if scales.len() != 1 {
        return Err(MochError::Config(
            "gen-init takes a single `N`, not a list".into(),
        ));
    }
    let scale = scales[0];
    let mode = patch.corrector.unwrap_or(CorrectorMode::Regular);
    let out = require(patch.out.clone(), "gen-init", "out")?;
    let out = if out.is_absolute() {
        out
    } else {
        ctx.out_dir.join(out)
    };

    let grid = Grid::new(auto_grid_size(scale), 2.0 * std::f64::consts::PI)?;
    let part = DyadicPartition::new(&grid)?;
    let datum = build_gamma0(&part, scale, mode)?;
    write_snapshot(&out, &datum.gamma0)?;
    println!("wrote {}", out.display());

    let mut manifest = RunManifest::new(
        "gen-init",
        json!({
            "N": scale,
            "corrector": corrector_name(mode),
            "out": out.display().to_string(),
        }),
    );
    let report = json!({
        "N": scale,
        "norm_B0inf1": datum.norms.b0_inf_1,
        "norm_weighted": datum.norms.weighted,
        "norm_square_B0inf1": datum.norms.square_b0_inf_1,
        "ratio": datum.norms.square_b0_inf_1 / (datum.norms.b0_inf_1 * datum.norms.b0_inf_1),
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    println!("{}", text.trim_end());
    ctx.emit(&mut manifest, &format!("gen_init_N{scale}.json"), &text)?;
    ctx.finish(manifest)
}

fn run_solve(ctx: &RunCtx, patch: &CommandPatch) -> Result<()> {
    let init = require(patch.init.clone(), "solve", "init")?;
    let lambda = require(patch.lambda, "solve", "lambda")?;
    let dt = require(patch.dt, "solve", "dt")?;
    let t_final = require(patch.t_final, "solve", "T")?;
    let prefix = require(patch.out_prefix.clone(), "solve", "out_prefix")?;
    let dealias = patch.dealias.unwrap_or(true);

    let gamma0 = read_snapshot_at(&init)?;
    let part = DyadicPartition::new(gamma0.grid())?;
    let steps = (t_final / dt).round().max(1.0) as usize;
    let record_every = patch.record_every.unwrap_or_else(|| (steps / 1024).max(1));

    let mut params = MochParams::new(lambda, dt, t_final)?;
    params.dealias_on = dealias;
    params.record_every = record_every;
    params.snapshot_every = patch.snapshot_every;
    params.validate()?;

    let traj = solve(&gamma0, &part, &params)?;

    let mut manifest = RunManifest::new(
        "solve",
        json!({
            "init": init.display().to_string(),
            "lambda": lambda,
            "dt": dt,
            "T": t_final,
            "dealias": dealias,
            "out_prefix": prefix,
            "record_every": record_every,
            "snapshot_every": patch.snapshot_every,
        }),
    );

    ctx.emit(
        &mut manifest,
        &format!("{prefix}_norms.csv"),
        &norm_series_csv(&traj.norm_series),
    )?;

    let final_state = traj.final_state();
    let final_name = format!("{prefix}_final.snap");
    let final_path = manifest.emit(
        &ctx.out_dir,
        &final_name,
        &snapshot_bytes(&final_state.gamma),
    )?;
    println!("wrote {}", final_path.display());
    if params.snapshot_every.is_some() {
        for (i, snap) in traj.snapshots.iter().enumerate() {
            if i + 1 == traj.snapshots.len() {
                break;
            }
            let name = format!("{prefix}_snap_{i:04}.snap");
            let path = manifest.emit(&ctx.out_dir, &name, &snapshot_bytes(snap))?;
            println!("wrote {}", path.display());
        }
    }

    let last = traj.norm_series.last().expect("solve records at least once");
    let summary = json!({
        "steps": steps,
        "t_final": final_state.t,
        "truncated": traj.truncated,
        "blowup": traj.blowup.map(|(t, max_abs)| json!({ "t": t, "max_abs": max_abs })),
        "final_B0inf1": last.b0_inf_1,
        "final_weighted": last.weighted,
        "final_Linf": last.linf,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    ctx.emit(&mut manifest, &format!("{prefix}_summary.json"), &text)?;

    if ctx.svg {
        let t_of = |rows: &[moch::NormRow], f: fn(&moch::NormRow) -> f64| {
            rows.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>()
        };
        let chart = LineChart::new("Norm history", "t", "norm")
            .with_series("B0inf1", t_of(&traj.norm_series, |r| r.b0_inf_1))
            .with_series("weighted", t_of(&traj.norm_series, |r| r.weighted))
            .with_series("Linf", t_of(&traj.norm_series, |r| r.linf));
        ctx.emit(&mut manifest, &format!("{prefix}_norms.svg"), &chart.render()?)?;
    }

    println!(
        "integrated {} steps to t = {:.6}{}",
        steps,
        final_state.t,
        if traj.truncated {
            " (truncated at blow-up guard)"
        } else {
            ""
        }
    );
    println!(
        "final norms: B0inf1 {:.6e}  weighted {:.6e}  Linf {:.6e}",
        last.b0_inf_1, last.weighted, last.linf
    );
    ctx.finish(manifest)
}

fn suite_ids(suite: EstimateSuite) -> &'static [EstimateId] {
    match suite {
        EstimateSuite::Products => &[
            EstimateId::StretchSum,
            EstimateId::StretchWeighted,
            EstimateId::SquareSum,
            EstimateId::SquareWeighted,
        ],
        EstimateSuite::Commutators => &[
            EstimateId::CommutatorPeak,
            EstimateId::CommutatorSum,
            EstimateId::QuadraticCommutatorSum,
        ],
        EstimateSuite::All => &EstimateId::ALL,
    }
}

fn suite_name(suite: EstimateSuite) -> &'static str {
    match suite {
        EstimateSuite::Products => "products",
        EstimateSuite::Commutators => "commutators",
        EstimateSuite::All => "all",
    }
}

fn run_estimates(ctx: &RunCtx, patch: &CommandPatch) -> Result<()> {
    let suite = patch.suite.unwrap_or(EstimateSuite::All);
    let defaults = EnsembleConfig::default();
    let cfg = EnsembleConfig {
        members: patch.ensemble.unwrap_or(defaults.members),
        seed: patch.seed.unwrap_or(defaults.seed),
        num_points: patch.points.unwrap_or(defaults.num_points),
        max_mode: patch.max_mode.unwrap_or(defaults.max_mode),
        lambda: patch.lambda.unwrap_or(defaults.lambda),
    };
    let full = run_ensemble(&cfg)?;

    let wanted = suite_ids(suite);
    let filtered = EnsembleSummary {
        config: full.config,
        members: full
            .members
            .iter()
            .map(|m| MemberReports {
                member: m.member,
                reports: m
                    .reports
                    .iter()
                    .filter(|r| wanted.contains(&r.id))
                    .cloned()
                    .collect(),
            })
            .collect(),
        max_ratios: full
            .max_ratios
            .iter()
            .filter(|(id, _)| wanted.contains(id))
            .cloned()
            .collect(),
    };

    let mut manifest = RunManifest::new(
        "estimates",
        json!({
            "suite": suite_name(suite),
            "ensemble": cfg.members,
            "seed": cfg.seed,
            "points": cfg.num_points,
            "max_mode": cfg.max_mode,
            "lambda": cfg.lambda,
        }),
    );
    ctx.emit(
        &mut manifest,
        "estimate_reports.csv",
        &estimate_reports_csv(&filtered.members),
    )?;
    ctx.emit(
        &mut manifest,
        "estimate_maxima.csv",
        &ensemble_maxima_csv(&filtered),
    )?;
    let mut text = serde_json::to_string_pretty(&filtered.max_ratios).expect("maxima serialize");
    text.push('\n');
    ctx.emit(&mut manifest, "estimates_summary.json", &text)?;

    if ctx.svg {
        let mut chart = LineChart::new("Estimate ratios by member", "member", "ratio");
        for &id in wanted {
            let points: Vec<(f64, f64)> = filtered
                .members
                .iter()
                .map(|m| {
                    let worst = m
                        .reports
                        .iter()
                        .filter(|r| r.id == id)
                        .filter_map(|r| r.ratio)
                        .fold(0.0, f64::max);
                    (m.member as f64, worst)
                })
                .collect();
            chart = chart.with_series(id.as_str(), points);
        }
        ctx.emit(&mut manifest, "estimate_ratios.svg", &chart.render()?)?;
    }

    println!("worst ratio over {} members:", cfg.members);
    for (id, ratio) in &filtered.max_ratios {
        println!("  {:<26} {ratio:.6e}", id.as_str());
    }
    ctx.finish(manifest)
}

fn run_sweep(ctx: &RunCtx, patch: &CommandPatch) -> Result<()> {
    let scales = patch
        .scales
        .clone()
        .unwrap_or_else(|| (6..=12).collect());
    let mode = patch.corrector.unwrap_or(CorrectorMode::Regular);
    let table = scaling_sweep(&scales, mode)?;

    let mut manifest = RunManifest::new(
        "sweep",
        json!({ "N": scales, "corrector": corrector_name(mode) }),
    );
    ctx.emit(&mut manifest, "scaling_table.csv", &scaling_table_csv(&table))?;
    let mut text = serde_json::to_string_pretty(&table).expect("table serializes");
    text.push('\n');
    ctx.emit(&mut manifest, "sweep_summary.json", &text)?;

    if ctx.svg {
        let pick = |f: fn(&moch::ScalingRow) -> f64| {
            table
                .rows
                .iter()
                .map(|r| (r.scale as f64, f(r)))
                .collect::<Vec<_>>()
        };
        let mut chart = LineChart::new("Datum norms across scales", "N", "norm")
            .with_series("summed", pick(|r| r.sum_norm))
            .with_series("weighted", pick(|r| r.weighted_norm))
            .with_series("square", pick(|r| r.square_norm));
        chart.log_x = true;
        chart.log_y = true;
        ctx.emit(&mut manifest, "sweep_fits.svg", &chart.render()?)?;
    }

    println!("N    summed       weighted     square       square/summed^2");
    for r in &table.rows {
        println!(
            "{:<4} {:<12.6} {:<12.6} {:<12.6} {:.6}",
            r.scale,
            r.sum_norm,
            r.weighted_norm,
            r.square_norm,
            r.square_norm / (r.sum_norm * r.sum_norm)
        );
    }
    println!(
        "fitted exponents: summed {:.4}  weighted {:.4}  square {:.4}",
        table.sum_norm_exponent, table.weighted_norm_exponent, table.square_norm_exponent
    );
    ctx.finish(manifest)
}

fn run_inflate(ctx: &RunCtx, patch: &CommandPatch) -> Result<()> {
    let scales = patch.scales.clone().unwrap_or_else(|| vec![6, 8, 10]);
    let policy = InflationPolicy {
        lambda: patch.lambda.unwrap_or(1.0),
        corrector_mode: patch.corrector.unwrap_or(CorrectorMode::Regular),
        dt_override: patch.dt,
        record_target: 256,
    };
    let summary = inflation_experiment(&scales, &policy)?;

    let mut manifest = RunManifest::new(
        "inflate",
        json!({
            "N": scales,
            "lambda": policy.lambda,
            "dt": policy.dt_override,
            "corrector": corrector_name(policy.corrector_mode),
        }),
    );
    ctx.emit(&mut manifest, "inflation.csv", &inflation_csv(&summary))?;
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    ctx.emit(&mut manifest, "inflation_summary.json", &text)?;

    if ctx.svg {
        let pick = |f: fn(&moch::InflationReport) -> f64| {
            summary
                .reports
                .iter()
                .map(|r| (r.scale as f64, f(r)))
                .collect::<Vec<_>>()
        };
        let chart = LineChart::new("Inflation trends", "N", "value")
            .with_series("amplification", pick(|r| r.amplification))
            .with_series("initial slope", pick(|r| r.initial_slope))
            .with_series(
                "weighted ceiling / N^1.9",
                pick(|r| r.weighted_ceiling / (r.scale as f64).powf(1.9)),
            );
        ctx.emit(&mut manifest, "inflation_trends.svg", &chart.render()?)?;
    }

    for r in &summary.reports {
        println!(
            "N={:<3} sup {:.6} at t={:.4}  amplification {:.6}  slope {:+.4}  weighted ceiling {:.3}{}",
            r.scale,
            r.sup_norm,
            r.argmax_time,
            r.amplification,
            r.initial_slope,
            r.weighted_ceiling,
            if r.truncated { "  (truncated)" } else { "" }
        );
    }
    println!(
        "slope exponent {:.4}; amplification strictly increasing: {}",
        summary.slope_exponent, summary.amplification_monotone
    );
    ctx.finish(manifest)
}
