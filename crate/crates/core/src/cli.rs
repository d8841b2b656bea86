//! Command-line harness. Every subcommand writes CSV and a text summary to
//! the output directory and returns whether all of its checks passed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adversary::{
    build_lemma2_adversary, build_lemma2_model, build_lemma3_adversary, build_lemma4_adversary, build_lemma4_sequence,
    verify_lemma2_divergence, verify_lemma3_divergence, verify_lemma4_rigidity, AdversaryReport,
};
use crate::campaign::{campaign_seeds, glue_csv, max_ratio, run_glue_campaign, shadow_csv, ShadowCampaign};
use crate::config::{AdversaryConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::record::{fmt_f64, write_orbits};
use crate::shadowing::{
    classify_periodic_point, compute_splitting, estimate_lipschitz_constant, uniform_constants, ShadowingParams,
};

#[derive(Debug, Parser)]
#[command(name = "ipshadow", version, about = "Inverse periodic shadowing laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Omit timestamps from summaries and require an explicit seed.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List rational periodic orbits with eigenvalue moduli and hyperbolicity.
    Orbits,
    /// Build and verify an adversarial pseudomethod.
    Adversary {
        /// Which construction to run (2, 3 or 4); overrides the config.
        #[arg(long)]
        lemma: Option<u8>,
    },
    /// Shadowing campaign over seeded random pseudomethods.
    Shadow,
    /// Random gluing campaign on the configured orbits.
    GlueCheck,
    /// Hyperbolicity constants per orbit and uniform constants.
    Hypconst,
}

/// Outcome of a subcommand: files written and the pass flag.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
    seed: u64,
    deterministic: bool,
}

impl Context {
    fn new(common: &CommonArgs) -> Result<Self> {
        let cfg = match &common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let seed = match cfg.master_seed(common.seed) {
            Ok(s) => s,
            Err(e) if common.deterministic => return Err(e),
            Err(_) => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0),
        };
        let out = common
            .out
            .clone()
            .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            cfg,
            out,
            seed,
            deterministic: common.deterministic,
        })
    }

    fn header(&self, command: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# ipshadow {command}");
        let _ = writeln!(s, "# seed = {}", self.seed);
        if !self.deterministic {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(s, "# generated_unix = {now}");
        }
        s
    }

    fn write(&self, files: &mut Vec<PathBuf>, name: &str, body: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        fs::write(&path, body)?;
        files.push(path);
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let ctx = Context::new(&cli.common)?;
    match &cli.command {
        Command::Orbits => cmd_orbits(&ctx),
        Command::Adversary { lemma } => cmd_adversary(&ctx, *lemma),
        Command::Shadow => cmd_shadow(&ctx),
        Command::GlueCheck => cmd_glue_check(&ctx),
        Command::Hypconst => cmd_hypconst(&ctx),
    }
}

/// Entry point used by the binary: exit code 0 iff every check passed,
/// 1 on failed checks, 2 on errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_orbits(ctx: &Context) -> Result<Outcome> {
    let built = ctx.cfg.build_system()?;
    let q_max = ctx.cfg.orbits.as_ref().map_or(3, |o| o.q_max);
    let orbits = ctx.cfg.enumerate_orbits(&built, q_max)?;
    let n = built.system.dim();
    let mut csv = String::from("index,period");
    for i in 0..n {
        let _ = write!(csv, ",base_{}", i + 1);
    }
    for i in 0..n {
        let _ = write!(csv, ",modulus_{}", i + 1);
    }
    csv.push_str(",hyperbolic\n");
    let mut hyperbolic = 0;
    for (i, orbit) in orbits.iter().enumerate() {
        let class = classify_periodic_point(orbit);
        let _ = write!(csv, "{i},{}", orbit.fundamental_period());
        for c in orbit.base().iter() {
            let _ = write!(csv, ",{}", fmt_f64(*c));
        }
        for m in class.moduli() {
            let _ = write!(csv, ",{}", fmt_f64(*m));
        }
        let _ = writeln!(csv, ",{}", u8::from(class.is_hyperbolic()));
        hyperbolic += usize::from(class.is_hyperbolic());
    }
    let mut summary = ctx.header("orbits");
    let _ = writeln!(summary, "orbits = {}", orbits.len());
    let _ = writeln!(summary, "hyperbolic = {hyperbolic}");
    let _ = writeln!(summary, "status = pass");
    let mut files = Vec::new();
    ctx.write(&mut files, "orbits.csv", &csv)?;
    ctx.write(&mut files, "orbits.txt", &write_orbits(&orbits))?;
    ctx.write(&mut files, "orbits_summary.txt", &summary)?;
    Ok(Outcome {
        passed: true,
        files,
        summary,
    })
}

fn cmd_adversary(ctx: &Context, lemma: Option<u8>) -> Result<Outcome> {
    let acfg = ctx.cfg.adversary.clone();
    let lemma = lemma
        .or(acfg.as_ref().map(|a| a.lemma))
        .ok_or_else(|| Error::Config("adversary.lemma: required (or pass --lemma)".into()))?;
    if !(2..=4).contains(&lemma) {
        return Err(Error::Config(format!("adversary.lemma: must be 2, 3 or 4, got {lemma}")));
    }
    let acfg = match acfg {
        Some(a) => AdversaryConfig { lemma, ..a },
        None => AdversaryConfig::for_lemma(lemma),
    };
    let seed = ctx.seed;
    let report: AdversaryReport = match lemma {
        2 => {
            let spec = acfg.rotation_spec()?;
            let d = acfg.d.unwrap_or(0.5 * spec.max_drift());
            spec.validate_drift(d)?;
            let model = build_lemma2_model(&spec)?;
            let adv = build_lemma2_adversary(&model, d, seed)?;
            verify_lemma2_divergence(&adv, acfg.trials, seed)
        }
        3 => {
            let spec = acfg.jordan_spec()?;
            let d = acfg.d.unwrap_or(1e-3);
            spec.validate(d)?;
            let adv = build_lemma3_adversary(&spec, d, seed)?;
            verify_lemma3_divergence(&adv, acfg.trials, seed)
        }
        _ => {
            let built = ctx.cfg.build_system()?;
            let orbit = ctx.cfg.select_orbit(&built)?;
            let lipschitz = match acfg.lipschitz {
                Some(l) => l,
                None => estimate_lipschitz_constant(&compute_splitting(&orbit)?).0,
            };
            let e0 = acfg.e0.as_ref().map(|v| nalgebra::DVector::from_column_slice(v));
            let seq = build_lemma4_sequence(&orbit, e0, lipschitz)?;
            let d = acfg.d.unwrap_or(0.5 * seq.max_drift());
            let adv = build_lemma4_adversary(built.system.clone(), &seq, d, seed)?;
            verify_lemma4_rigidity(&adv, acfg.trials, seed)?
        }
    };
    let mut summary = ctx.header("adversary");
    summary.push_str(&report.summary());
    let mut files = Vec::new();
    ctx.write(&mut files, &format!("adversary_lemma{lemma}.csv"), &report.csv())?;
    ctx.write(&mut files, &format!("adversary_lemma{lemma}.txt"), &summary)?;
    Ok(Outcome {
        passed: report.passed(),
        files,
        summary,
    })
}

fn cmd_shadow(ctx: &Context) -> Result<Outcome> {
    let scfg = ctx
        .cfg
        .shadow
        .clone()
        .ok_or_else(|| Error::Config("[shadow] section required".into()))?;
    let built = ctx.cfg.build_system()?;
    let orbit = ctx.cfg.select_orbit(&built)?;
    let splitting = compute_splitting(&orbit)?;
    let (l_est, d0_est) = estimate_lipschitz_constant(&splitting);
    let mut params = ShadowingParams::new(l_est.max(1.0), scfg.d0.unwrap_or(d0_est))?;
    params.max_iterations = scfg.max_iterations;
    let bound = scfg.lipschitz.unwrap_or(params.lipschitz);
    let seeds = campaign_seeds(ctx.seed, scfg.seeds);
    let mut rows = Vec::new();
    let mut summary = ctx.header("shadow");
    let _ = writeln!(summary, "period = {}", orbit.period());
    let _ = writeln!(summary, "C = {}", fmt_f64(splitting.c()));
    let _ = writeln!(summary, "lambda = {}", fmt_f64(splitting.lambda()));
    let _ = writeln!(summary, "L = {}", fmt_f64(params.lipschitz));
    let _ = writeln!(summary, "d0 = {}", fmt_f64(params.d0));
    let _ = writeln!(summary, "ratio_bound = {}", fmt_f64(bound));
    let mut passed = true;
    for &d in &scfg.d {
        let campaign = ShadowCampaign {
            system: built.system.clone(),
            splitting: splitting.clone(),
            params,
            d,
            k_period: scfg.k_period,
            window_multiple: scfg.window_multiple,
        };
        let batch = campaign.run(&seeds);
        let failed = batch.iter().filter(|r| !r.converged).count();
        let max = max_ratio(&batch);
        let ok = failed == 0 && max.is_some_and(|m| m <= bound) && batch.iter().all(|r| r.residual <= 1e-12);
        passed &= ok;
        let _ = writeln!(
            summary,
            "d = {}: seeds = {}, failed = {failed}, max_ratio = {}, {}",
            fmt_f64(d),
            batch.len(),
            max.map_or("none".to_string(), fmt_f64),
            if ok { "pass" } else { "FAIL" }
        );
        if let Some(err) = batch.iter().find_map(|r| r.error.clone()) {
            let _ = writeln!(summary, "first error: {err}");
        }
        rows.extend(batch);
    }
    let _ = writeln!(summary, "status = {}", if passed { "pass" } else { "fail" });
    let mut files = Vec::new();
    ctx.write(&mut files, "shadow.csv", &shadow_csv(&rows))?;
    ctx.write(&mut files, "shadow.txt", &summary)?;
    Ok(Outcome { passed, files, summary })
}

fn cmd_glue_check(ctx: &Context) -> Result<Outcome> {
    let gcfg = ctx.cfg.glue.clone().unwrap_or_default();
    let built = ctx.cfg.build_system()?;
    let orbits = ctx.cfg.enumerate_orbits(&built, gcfg.q_max)?;
    let trials = run_glue_campaign(built.system.clone(), &orbits, gcfg.trials, gcfg.samples, ctx.seed)?;
    let failed = trials.iter().filter(|t| !t.report.passed()).count();
    let worst = trials
        .iter()
        .map(|t| t.report.sup_defect / t.report.d)
        .fold(0.0, f64::max);
    let mut summary = ctx.header("glue-check");
    let _ = writeln!(summary, "orbits = {}", orbits.len());
    let _ = writeln!(summary, "trials = {}", trials.len());
    let _ = writeln!(summary, "samples = {}", gcfg.samples);
    let _ = writeln!(summary, "max sup_defect / d = {}", fmt_f64(worst));
    let _ = writeln!(summary, "failed = {failed}");
    let passed = failed == 0;
    let _ = writeln!(summary, "status = {}", if passed { "pass" } else { "fail" });
    let mut files = Vec::new();
    ctx.write(&mut files, "glue.csv", &glue_csv(&trials))?;
    ctx.write(&mut files, "glue.txt", &summary)?;
    Ok(Outcome { passed, files, summary })
}

fn cmd_hypconst(ctx: &Context) -> Result<Outcome> {
    let built = ctx.cfg.build_system()?;
    let q_max = ctx.cfg.hypconst.clone().unwrap_or_default().q_max;
    let orbits = ctx.cfg.enumerate_orbits(&built, q_max)?;
    let mut csv = String::from("index,period,hyperbolic,C,lambda,L,d0,check_passed\n");
    let mut passed = true;
    let mut hyperbolic = Vec::new();
    for (i, orbit) in orbits.iter().enumerate() {
        match compute_splitting(orbit) {
            Ok(split) => {
                let (l, d0) = estimate_lipschitz_constant(&split);
                let ok = split.check().passed();
                passed &= ok;
                let _ = writeln!(
                    csv,
                    "{i},{},1,{},{},{},{},{}",
                    orbit.period(),
                    fmt_f64(split.c()),
                    fmt_f64(split.lambda()),
                    fmt_f64(l),
                    fmt_f64(d0),
                    u8::from(ok)
                );
                hyperbolic.push(orbit.clone());
            }
            Err(Error::Nonhyperbolic { .. }) => {
                passed = false;
                let _ = writeln!(csv, "{i},{},0,nan,nan,nan,nan,0", orbit.period());
            }
            Err(e) => return Err(e),
        }
    }
    let mut summary = ctx.header("hypconst");
    let _ = writeln!(summary, "orbits = {}", orbits.len());
    let _ = writeln!(summary, "hyperbolic = {}", hyperbolic.len());
    if hyperbolic.is_empty() {
        let _ = writeln!(summary, "uniform constants: none (no hyperbolic orbit)");
    } else {
        let (c, lambda) = uniform_constants(&hyperbolic)?;
        let _ = writeln!(summary, "uniform_C = {}", fmt_f64(c));
        let _ = writeln!(summary, "uniform_lambda = {}", fmt_f64(lambda));
    }
    let _ = writeln!(summary, "status = {}", if passed { "pass" } else { "fail" });
    let mut files = Vec::new();
    ctx.write(&mut files, "hypconst.csv", &csv)?;
    ctx.write(&mut files, "hypconst.txt", &summary)?;
    Ok(Outcome { passed, files, summary })
}

/// Reads a written output file; used by tests.
pub fn read_output(dir: &Path, name: &str) -> Result<String> {
    Ok(fs::read_to_string(dir.join(name))?)
}
