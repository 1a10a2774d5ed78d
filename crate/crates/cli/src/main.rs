use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use psychfit_core::ctt::PointBiserial;
use psychfit_core::dataset::{cctt_layout_blocks, parse_factor_spec, FactorSpec, ParseMode, SubsetName};
use psychfit_core::pipeline::{
    load_dataset, run_pipeline, write_outputs, AnalysisReport, Formats, PipelineConfig, Stages,
};
use psychfit_core::Execution;

#[derive(Parser)]
#[command(name = "psychfit", version, about = "Psychometric analysis of binary multiple-choice tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score raw answer sheets into a 0/1 matrix
    Score(Common),
    /// Classical test theory: difficulty, point-biserial, alpha, score summaries
    Ctt(Common),
    /// Tetrachoric correlations with KMO and Bartlett
    Corr(Common),
    /// Confirmatory factor analysis with fit indices
    Cfa(Common),
    /// 1PL and 2PL item response models
    Irt(Common),
    /// Replay a shortening plan, refitting the CFA at each stage
    Shorten(Common),
    /// Run every stage
    Report(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    Raw,
    Prescored,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rpb {
    Uncorrected,
    Corrected,
}

#[derive(Args)]
struct Common {
    /// Response CSV (student_id,grade,gender,q1..)
    #[arg(long)]
    input: PathBuf,
    /// Answer key CSV; defaults to the built-in 25-item key
    #[arg(long)]
    key: Option<PathBuf>,
    /// Factor structure JSON; defaults to the built-in six blocks
    #[arg(long)]
    factors: Option<PathBuf>,
    /// Blocks for block alphas: a JSON file or builtin:cctt-layout
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long, value_enum, default_value = "auto")]
    mode: Mode,
    #[arg(long, default_value = "all,g3,g4", value_delimiter = ',')]
    subsets: Vec<String>,
    /// Bootstrap replicates for robust CFA statistics (0 disables)
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    /// Gauss-Hermite nodes for IRT estimation
    #[arg(long, default_value_t = 49)]
    quadrature: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "psychfit-out")]
    out: PathBuf,
    #[arg(long, default_value = "json,csv", value_delimiter = ',')]
    format: Vec<String>,
    /// Shortening plan: a JSON file or builtin:cctt
    #[arg(long, default_value = "builtin:cctt")]
    plan: String,
    #[arg(long, value_enum, default_value = "uncorrected")]
    point_biserial: Rpb,
    /// Run single-threaded
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn config(&self, stages: Stages) -> Result<PipelineConfig> {
        let subsets = self
            .subsets
            .iter()
            .map(|s| SubsetName::parse(s).with_context(|| format!("unknown subset {s:?}")))
            .collect::<Result<Vec<_>>>()?;
        let blocks: Option<FactorSpec> = match self.blocks.as_deref() {
            None => None,
            Some("builtin:cctt-layout") => Some(cctt_layout_blocks()),
            Some(p) => Some(parse_factor_spec(std::fs::File::open(p).with_context(|| format!("opening {p}"))?)?),
        };
        Ok(PipelineConfig {
            input: self.input.clone(),
            key: self.key.clone(),
            factors: self.factors.clone(),
            blocks,
            mode: match self.mode {
                Mode::Auto => ParseMode::Auto,
                Mode::Raw => ParseMode::Raw,
                Mode::Prescored => ParseMode::Prescored,
            },
            subsets,
            bootstrap: self.bootstrap,
            quadrature: self.quadrature,
            seed: self.seed,
            plan: Some(self.plan.clone()),
            point_biserial: match self.point_biserial {
                Rpb::Uncorrected => PointBiserial::Uncorrected,
                Rpb::Corrected => PointBiserial::Corrected,
            },
            stages,
            execution: if self.sequential { Execution::Sequential } else { Execution::Parallel },
        })
    }

    fn formats(&self) -> Result<Formats> {
        let mut f = Formats { json: false, csv: false };
        for x in &self.format {
            match x.trim() {
                "json" => f.json = true,
                "csv" => f.csv = true,
                other => bail!("unknown format {other:?} (expected json or csv)"),
            }
        }
        Ok(f)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PSYCHFIT_THREADS") else { return Ok(()) };
    let n: usize = v.parse().with_context(|| format!("PSYCHFIT_THREADS={v:?} is not a number"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    let _ = n;
    Ok(())
}

fn summarise(report: &AnalysisReport) {
    for s in &report.subsets {
        let mut line = format!("[{}] n={}", s.subset, s.n);
        if let (Some(sum), Some(a)) = (&s.score_summary, s.alpha) {
            line += &format!(" mean={:.2} sd={:.2} alpha={:.3}", sum.mean, sum.sd, a);
        }
        if let Some(f) = &s.factorability {
            line += &format!(" KMO={:.3} Bartlett={:.1}", f.kmo_tetrachoric.overall, f.bartlett_tetrachoric.chi2);
        }
        if let Some(c) = &s.cfa {
            let fi = &c.fit_indices;
            line += &format!(
                " chi2({})={:.1} CFI={:.3} TLI={:.3} RMSEA={} SRMR={:.3}",
                fi.df,
                fi.chi2,
                fi.cfi,
                fi.tli,
                fi.rmsea.map_or("NA".to_string(), |r| format!("{r:.3}")),
                fi.srmr
            );
        }
        println!("{line}");
    }
    if let Some(irt) = &report.irt {
        for f in [&irt.one_pl, &irt.two_pl] {
            println!("{}: LL={:.2} AIC={:.2} BIC={:.2}", f.model.label(), f.loglik, f.aic, f.bic);
        }
        println!("LRT={:.2} df={} p={:.3e}", irt.lrt.statistic, irt.lrt.df, irt.lrt.p_value);
    }
    if let Some(sh) = &report.shortening {
        for st in &sh.stages {
            let fi = &st.fit_indices;
            println!(
                "step {} ({} items): chi2({})={:.1} CFI={:.3} RMSEA={}",
                st.step,
                st.items.len(),
                fi.df,
                fi.chi2,
                fi.cfi,
                fi.rmsea.map_or("NA".to_string(), |r| format!("{r:.3}"))
            );
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let (common, stages) = match &cli.command {
        Command::Score(c) => {
            let cfg = c.config(Stages::NONE)?;
            let (ds, _, _) = load_dataset(&cfg).map_err(|e| e.in_stage("dataset"))?;
            std::fs::create_dir_all(&c.out)?;
            let path = c.out.join("scored.csv");
            ds.write_csv(std::fs::File::create(&path)?)?;
            println!("scored {} respondents x {} items -> {}", ds.n(), ds.j(), path.display());
            return Ok(());
        }
        Command::Ctt(c) => (c, Stages { ctt: true, ..Stages::NONE }),
        Command::Corr(c) => (c, Stages { corr: true, ..Stages::NONE }),
        Command::Cfa(c) => (c, Stages { cfa: true, ..Stages::NONE }),
        Command::Irt(c) => (c, Stages { irt: true, ..Stages::NONE }),
        Command::Shorten(c) => (c, Stages { shorten: true, ..Stages::NONE }),
        Command::Report(c) => (c, Stages::ALL),
    };
    let cfg = common.config(stages)?;
    let formats = common.formats()?;
    let report = run_pipeline(&cfg)?;
    write_outputs(&report, &common.out, formats)?;
    summarise(&report);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
