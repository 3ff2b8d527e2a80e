//! Command-line driver: experiment subcommands over a JSON run config with
//! dotted-path flag overrides, writing CSV tables and a manifest per run.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::config::{parse_override_args, RunConfig};
use crate::disc::{Discriminator, MlpDiscriminator, OptimalDiscriminator};
use crate::error::{Error, Result};
use crate::eval::{
    gamma_sweep, guided_generate, oscillatory_sweep, w_sweep, SweepEvalConfig,
};
use crate::loss::ExactScore;
use crate::manifest::RunDir;
use crate::metrics::{energy_permutation_test, knn_precision_recall};
use crate::mixture::GaussianMixture;
use crate::quad::Grid;
use crate::sde::SdeSchedule;
use crate::train::{overfit_harness, prepare_datasets, size_sweep, train};

#[derive(Parser, Debug)]
#[command(
    name = "dglab",
    about = "Discriminator-guided diffusion laboratory on analytic Gaussian mixtures",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON run config; built-in defaults when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides train.seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $DGLAB_OUT or ./runs/<timestamp>-<hash>)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a discriminator on the configured pair and emit loss curves
    Train(CommonArgs),
    /// Reverse-SDE sampling from the model score, optionally guided
    Sample(SampleArgs),
    /// Oscillatory low-CE / high-gradient-error sweep over (eps, omega)
    Theorem1(Theorem1Args),
    /// 1D memorization harness across training-set sizes
    Overfit(CommonArgs),
    /// Training-set-size sweep comparing the two losses
    SizeSweep(CommonArgs),
    /// Guidance-weight sweep with sample metrics
    WSweep(WSweepArgs),
    /// Gamma sweep of the combined loss with sample metrics
    GammaSweep(CommonArgs),
    /// Two-sample metrics between stored sample tables
    Metrics(MetricsArgs),
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of samples
    #[arg(long)]
    pub n: Option<usize>,
    /// Guidance weight
    #[arg(long, default_value_t = 0.0)]
    pub w: f64,
    /// Guidance source: "none", "optimal", or a checkpoint path
    #[arg(long, default_value = "none")]
    pub guidance: String,
}

#[derive(Args, Debug)]
pub struct Theorem1Args {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated epsilon values (defaults to sweep.eps_list)
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Comma-separated omega values (defaults to sweep.omega_list)
    #[arg(long, value_delimiter = ',')]
    pub omegas: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct WSweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated guidance weights (defaults to sweep.w_list)
    #[arg(long, value_delimiter = ',')]
    pub ws: Vec<f64>,
    /// Guidance source: "optimal" or a checkpoint path
    #[arg(long, default_value = "optimal")]
    pub guidance: String,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Reference sample CSV
    #[arg(long)]
    pub reference: PathBuf,
    /// Evaluated sample CSV
    #[arg(long)]
    pub eval: PathBuf,
}

/// Entry point returning the process exit code.
pub fn main(argv: Vec<String>) -> i32 {
    let (clap_args, override_tokens) = split_dotted_overrides(&argv);
    let cli = match Cli::try_parse_from(clap_args) {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version on stdout with success status
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let overrides = match parse_override_args(&override_tokens) {
        Ok(kv) => kv,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run(cli.command, overrides) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

/// Pull `--a.b.c [value]` / `--a.b.c=value` tokens out of argv; everything
/// else goes to the regular parser.
fn split_dotted_overrides(argv: &[String]) -> (Vec<String>, Vec<String>) {
    let mut plain = Vec::new();
    let mut dotted = Vec::new();
    let mut i = 0;
    while i < argv.len() {
        let tok = &argv[i];
        let is_dotted = tok.starts_with("--")
            && tok[2..].split('=').next().map(|k| k.contains('.')).unwrap_or(false);
        if is_dotted {
            dotted.push(tok.clone());
            if !tok.contains('=') {
                if let Some(v) = argv.get(i + 1) {
                    dotted.push(v.clone());
                    i += 1;
                }
            }
        } else {
            plain.push(tok.clone());
        }
        i += 1;
    }
    (plain, dotted)
}

struct Ctx {
    cfg: RunConfig,
    p: GaussianMixture,
    p_hat: GaussianMixture,
    schedule: SdeSchedule,
    seed: u64,
    dir: RunDir,
}

fn context(common: &CommonArgs, overrides: Vec<(String, String)>) -> Result<Ctx> {
    let mut cfg = RunConfig::load(common.config.as_deref(), &overrides)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let (p, p_hat) = cfg.build_pair()?;
    let schedule = cfg.schedule.build()?;
    let seed = cfg.train.seed;
    let dir = RunDir::resolve(common.out.as_deref(), &cfg.content_hash())?;
    Ok(Ctx {
        cfg,
        p,
        p_hat,
        schedule,
        seed,
        dir,
    })
}

fn run(command: Command, overrides: Vec<(String, String)>) -> Result<()> {
    match command {
        Command::Train(common) => cmd_train(context(&common, overrides)?),
        Command::Sample(args) => {
            let ctx = context(&args.common, overrides)?;
            cmd_sample(ctx, &args)
        }
        Command::Theorem1(args) => {
            let ctx = context(&args.common, overrides)?;
            cmd_theorem1(ctx, &args)
        }
        Command::Overfit(common) => cmd_overfit(context(&common, overrides)?),
        Command::SizeSweep(common) => cmd_size_sweep(context(&common, overrides)?),
        Command::WSweep(args) => {
            let ctx = context(&args.common, overrides)?;
            cmd_w_sweep(ctx, &args)
        }
        Command::GammaSweep(common) => cmd_gamma_sweep(context(&common, overrides)?),
        Command::Metrics(args) => {
            let ctx = context(&args.common, overrides)?;
            cmd_metrics(ctx, &args)
        }
    }
}

#[derive(Serialize)]
struct LossCurveRow {
    step: usize,
    ce: f64,
    mse: f64,
    total: f64,
}

fn cmd_train(mut ctx: Ctx) -> Result<()> {
    let lcfg = ctx.cfg.loss.build(&ctx.schedule);
    let mut tcfg = ctx.cfg.train.clone();
    tcfg.seed = ctx.seed;
    let s_theta = ExactScore::new(ctx.p_hat.clone(), ctx.schedule);
    let (real, fake) = prepare_datasets(&ctx.p, &ctx.p_hat, &tcfg, &ctx.schedule, Some(&s_theta))?;
    let mut disc = ctx.cfg.discriminator.build(ctx.p.dim(), &ctx.schedule)?;
    disc.init_params(ctx.seed ^ 0xd15c);
    let report = train(
        &mut disc, &s_theta, &real, &fake, &tcfg, &lcfg, &ctx.schedule, None,
    )?;
    let rows: Vec<LossCurveRow> = (0..report.steps_run)
        .map(|i| LossCurveRow {
            step: i,
            ce: report.ce[i],
            mse: report.mse[i],
            total: report.total[i],
        })
        .collect();
    ctx.dir.write_csv("loss_curves.csv", &rows)?;
    ctx.dir
        .write_file("report.json", &serde_json::to_vec_pretty(&report)?)?;
    disc.save(&ctx.dir.root().join("disc.ckpt"))?;
    ctx.dir.record_metric("steps_run", report.steps_run as f64);
    if let Some(v) = report.ce.last() {
        ctx.dir.record_metric("final_ce", *v);
    }
    if let Some(v) = report.mse.last() {
        ctx.dir.record_metric("final_mse", *v);
    }
    let path = ctx.dir.finish("train", &ctx.cfg, ctx.seed)?;
    println!("train: wrote {}", path.display());
    Ok(())
}

fn load_guidance(
    spec: &str,
    p: &GaussianMixture,
    p_hat: &GaussianMixture,
    schedule: &SdeSchedule,
) -> Result<Option<Box<dyn Discriminator>>> {
    match spec {
        "none" => Ok(None),
        "optimal" => Ok(Some(Box::new(OptimalDiscriminator::new(
            p.clone(),
            p_hat.clone(),
            *schedule,
        )?))),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::Config(format!(
                    "guidance checkpoint {path} does not exist"
                )));
            }
            Ok(Some(Box::new(MlpDiscriminator::load(p)?)))
        }
    }
}

fn write_samples(dir: &mut RunDir, name: &str, samples: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let header: Vec<String> = (1..=samples.ncols()).map(|i| format!("x{i}")).collect();
    w.write_record(&header)?;
    for i in 0..samples.nrows() {
        let rec: Vec<String> = (0..samples.ncols())
            .map(|j| format!("{}", samples[(i, j)]))
            .collect();
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush failed: {e}")))?;
    dir.write_file(name, &bytes)?;
    Ok(())
}

fn read_samples(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("cannot read samples {}: {e}", path.display())))?;
    let dim = rdr.headers()?.len();
    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter() {
            data.push(field.parse::<f64>().map_err(|e| {
                Error::Config(format!("bad number {field} in {}: {e}", path.display()))
            })?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, dim, &data))
}

fn cmd_sample(mut ctx: Ctx, args: &SampleArgs) -> Result<()> {
    let n = args.n.unwrap_or(ctx.cfg.sweep.n_eval_samples);
    let s_theta = ExactScore::new(ctx.p_hat.clone(), ctx.schedule);
    let guidance = load_guidance(&args.guidance, &ctx.p, &ctx.p_hat, &ctx.schedule)?;
    let samples = match &guidance {
        None => guided_generate(
            &s_theta,
            &crate::disc::ZeroDiscriminator { dim: ctx.p.dim() },
            0.0,
            &ctx.schedule,
            ctx.cfg.schedule.n_steps,
            n,
            ctx.seed,
        )?,
        Some(d) => guided_generate(
            &s_theta,
            d.as_ref(),
            args.w,
            &ctx.schedule,
            ctx.cfg.schedule.n_steps,
            n,
            ctx.seed,
        )?,
    };
    write_samples(&mut ctx.dir, "samples.csv", &samples)?;
    // quick fidelity readout against fresh target draws
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    rng.set_stream(7000);
    let reference = ctx.p.sample(n, &mut rng);
    let et = energy_permutation_test(&samples, &reference, ctx.cfg.sweep.n_permutations, ctx.seed)?;
    ctx.dir.record_metric("energy", et.statistic);
    ctx.dir.record_metric("energy_p", et.p_value);
    let path = ctx.dir.finish("sample", &ctx.cfg, ctx.seed)?;
    println!("sample: wrote {}", path.display());
    Ok(())
}

fn cmd_theorem1(mut ctx: Ctx, args: &Theorem1Args) -> Result<()> {
    // the construction sweep runs on a 1D pair; fall back to the shipped
    // demo pair when the configured distributions are higher-dimensional
    let (p, p_hat) = if ctx.p.dim() == 1 {
        (ctx.p.clone(), ctx.p_hat.clone())
    } else {
        crate::presets::demo_1d_pair()
    };
    let eps = if args.eps.is_empty() {
        ctx.cfg.sweep.eps_list.clone()
    } else {
        args.eps.clone()
    };
    let omegas = if args.omegas.is_empty() {
        ctx.cfg.sweep.omega_list.clone()
    } else {
        args.omegas.clone()
    };
    let region = ctx.cfg.sweep.region_for(&[&p, &p_hat])?;
    let rows = oscillatory_sweep(
        &p,
        &p_hat,
        &ctx.schedule,
        &eps,
        &omegas,
        &region,
        ctx.cfg.sweep.grid_points_for(1),
        ctx.cfg.sweep.kl_mc,
        ctx.cfg.sweep.kl_nodes,
        ctx.seed,
    )?;
    if let Some(max_gap) = rows
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.ce_gap)
        .fold(None, |a: Option<f64>, b| Some(a.map_or(b, |x| x.max(b))))
    {
        ctx.dir.record_metric("max_ce_gap", max_gap);
    }
    ctx.dir.write_csv("theorem1.csv", &rows)?;
    let path = ctx.dir.finish("theorem1", &ctx.cfg, ctx.seed)?;
    println!("theorem1: wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct OverfitRow {
    pair: &'static str,
    n: usize,
    width: usize,
    tv: f64,
    target_eps: f64,
    achieved_eps: f64,
    cap_hit: bool,
    steps_run: usize,
    mse_estimate: f64,
    mse_per_n: f64,
}

fn cmd_overfit(mut ctx: Ctx) -> Result<()> {
    let ocfg = ctx.cfg.sweep.overfit.build(ctx.seed);
    let mut rows = Vec::new();
    for (label, (p, p_hat)) in [
        ("overlap_tv02", crate::presets::overlap_1d_pair()),
        ("control_tv098", crate::presets::separated_1d_pair()),
    ] {
        for &n in &ctx.cfg.sweep.overfit.sizes {
            let rep = overfit_harness(&p, &p_hat, n, &ocfg)?;
            rows.push(OverfitRow {
                pair: label,
                n,
                width: rep.width,
                tv: rep.tv,
                target_eps: rep.target_eps,
                achieved_eps: rep.achieved_eps,
                cap_hit: rep.cap_hit,
                steps_run: rep.steps_run,
                mse_estimate: rep.mse_estimate,
                mse_per_n: rep.mse_estimate / n as f64,
            });
        }
    }
    ctx.dir.write_csv("overfit.csv", &rows)?;
    let path = ctx.dir.finish("overfit", &ctx.cfg, ctx.seed)?;
    println!("overfit: wrote {}", path.display());
    Ok(())
}

fn cmd_size_sweep(mut ctx: Ctx) -> Result<()> {
    let lcfg = ctx.cfg.loss.build(&ctx.schedule);
    let seeds: Vec<u64> = (0..ctx.cfg.sweep.seeds_per_row)
        .map(|i| ctx.seed ^ i as u64)
        .collect();
    let grid = Grid::new(
        ctx.cfg.sweep.region_for(&[&ctx.p, &ctx.p_hat])?,
        ctx.cfg.sweep.grid_points_for(ctx.p.dim()),
    )?;
    let rows = size_sweep(
        &ctx.p,
        &ctx.p_hat,
        &ctx.cfg.sweep.sizes,
        &ctx.cfg.train,
        &lcfg,
        &ctx.schedule,
        &ctx.cfg.discriminator.hidden,
        &seeds,
        1.0,
        ctx.cfg.sweep.kl_mc,
        ctx.cfg.sweep.kl_nodes,
        &grid,
    )?;
    ctx.dir.write_csv("size_sweep.csv", &rows)?;
    let path = ctx.dir.finish("size-sweep", &ctx.cfg, ctx.seed)?;
    println!("size-sweep: wrote {}", path.display());
    Ok(())
}

fn cmd_w_sweep(mut ctx: Ctx, args: &WSweepArgs) -> Result<()> {
    let ws = if args.ws.is_empty() {
        ctx.cfg.sweep.w_list.clone()
    } else {
        args.ws.clone()
    };
    let guidance = load_guidance(&args.guidance, &ctx.p, &ctx.p_hat, &ctx.schedule)?
        .ok_or_else(|| Error::Config("w-sweep needs a guidance source".into()))?;
    let s_theta = ExactScore::new(ctx.p_hat.clone(), ctx.schedule);
    let rows = w_sweep(
        &ctx.p,
        &s_theta,
        guidance.as_ref(),
        &ws,
        &ctx.schedule,
        ctx.cfg.sweep.n_eval_samples,
        ctx.cfg.schedule.n_steps,
        ctx.cfg.sweep.n_permutations,
        ctx.cfg.sweep.kl_mc,
        ctx.cfg.sweep.kl_nodes,
        ctx.cfg.sweep.knn_k,
        ctx.seed,
    )?;
    ctx.dir.write_csv("w_sweep.csv", &rows)?;
    let path = ctx.dir.finish("w-sweep", &ctx.cfg, ctx.seed)?;
    println!("w-sweep: wrote {}", path.display());
    Ok(())
}

fn cmd_gamma_sweep(mut ctx: Ctx) -> Result<()> {
    let lcfg = ctx.cfg.loss.build(&ctx.schedule);
    let grid = Grid::new(
        ctx.cfg.sweep.region_for(&[&ctx.p, &ctx.p_hat])?,
        ctx.cfg.sweep.grid_points_for(ctx.p.dim()),
    )?;
    let eval = SweepEvalConfig {
        n_samples: ctx.cfg.sweep.n_eval_samples,
        sde_steps: ctx.cfg.schedule.n_steps,
        n_permutations: ctx.cfg.sweep.n_permutations,
        kl_mc: ctx.cfg.sweep.kl_mc,
        kl_nodes: ctx.cfg.sweep.kl_nodes,
        knn_k: ctx.cfg.sweep.knn_k,
    };
    let rows = gamma_sweep(
        &ctx.p,
        &ctx.p_hat,
        &ctx.cfg.sweep.gamma_list,
        &ctx.cfg.train,
        &lcfg,
        &ctx.schedule,
        &ctx.cfg.discriminator,
        1.0,
        &eval,
        &grid,
        ctx.seed,
    )?;
    ctx.dir.write_csv("gamma_sweep.csv", &rows)?;
    let path = ctx.dir.finish("gamma-sweep", &ctx.cfg, ctx.seed)?;
    println!("gamma-sweep: wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow {
    energy: f64,
    energy_p: f64,
    precision: f64,
    recall: f64,
    n_reference: usize,
    n_eval: usize,
}

fn cmd_metrics(mut ctx: Ctx, args: &MetricsArgs) -> Result<()> {
    let reference = read_samples(&args.reference)?;
    let eval = read_samples(&args.eval)?;
    let et = energy_permutation_test(&eval, &reference, ctx.cfg.sweep.n_permutations, ctx.seed)?;
    let (precision, recall) = knn_precision_recall(&reference, &eval, ctx.cfg.sweep.knn_k)?;
    let row = MetricsRow {
        energy: et.statistic,
        energy_p: et.p_value,
        precision,
        recall,
        n_reference: reference.nrows(),
        n_eval: eval.nrows(),
    };
    ctx.dir.record_metric("energy", et.statistic);
    ctx.dir.record_metric("energy_p", et.p_value);
    ctx.dir.record_metric("precision", precision);
    ctx.dir.record_metric("recall", recall);
    ctx.dir.write_csv("metrics.csv", &[row])?;
    let path = ctx.dir.finish("metrics", &ctx.cfg, ctx.seed)?;
    println!("metrics: wrote {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides_are_split_out() {
        let argv: Vec<String> = [
            "dglab",
            "train",
            "--seed",
            "7",
            "--train.steps",
            "10",
            "--loss.gamma=0.5",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let (plain, dotted) = split_dotted_overrides(&argv);
        assert_eq!(plain, vec!["dglab", "train", "--seed", "7"]);
        assert_eq!(dotted, vec!["--train.steps", "10", "--loss.gamma=0.5"]);
    }
}
