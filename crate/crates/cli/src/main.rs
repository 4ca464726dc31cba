//! `mgcfa`: command-line front end for multi-group ordinal CFA.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use mgcfa::analysis::{
    eap_scores, latent_gap, structural_effect, threshold_differences, StructuralMode, StructuralOptions,
};
use mgcfa::estimator::{fit_with, FitOptions, FitResult};
use mgcfa::invariance::{run_anchor_validation_with, run_invariance_ladder, LadderResult};
use mgcfa::io::config::DataConfig;
use mgcfa::io::{load_csv, write_dataset_csv, write_structured, write_table, CsvSchema, RunConfig, Table};
use mgcfa::simulation::{demo_dataset, run_grid, DEMO_SEED};
use mgcfa::{ConstraintLevel, Error, ModelSpec, OrdinalDataset};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "mgcfa", version, about = "Multi-group ordinal CFA: invariance ladders, DIF, latent gaps, Monte Carlo")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Structured,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    /// Gauss–Hermite points (odd).
    #[arg(long, global = true)]
    quadrature: Option<usize>,
    #[arg(long = "reference-group", global = true)]
    reference_group: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Input CSV.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long = "group-column", global = true)]
    group_column: Option<String>,
    /// Item columns, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    items: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    anchors: Option<Vec<String>>,
    #[arg(long, global = true)]
    outcome: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Expected group labels, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    groups: Option<Vec<String>>,
    /// Optimizer iteration cap for single-model commands.
    #[arg(long = "max-iter", global = true)]
    max_iter: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dataset without fitting.
    Validate,
    /// Configural, metric and scalar fits on the anchor items alone.
    Anchors,
    /// Configural → metric → scalar → equal-means ladder over all items.
    Ladder,
    /// One model at a named constraint level.
    Fit {
        #[arg(long)]
        level: Option<ConstraintLevel>,
    },
    /// Threshold differences, focal minus reference.
    Dif {
        #[arg(long)]
        level: Option<ConstraintLevel>,
    },
    /// Latent mean gap and EAP scores.
    Gap {
        #[arg(long)]
        level: Option<ConstraintLevel>,
    },
    /// Outcome slope on the latent trait and the implied outcome gap.
    Policy {
        #[arg(long)]
        level: Option<ConstraintLevel>,
        #[arg(long)]
        mode: Option<StructuralMode>,
        /// Keep the outcome on its original scale.
        #[arg(long)]
        raw_outcome: bool,
        /// Ignore covariate columns.
        #[arg(long)]
        no_covariates: bool,
    },
    /// Monte Carlo grid from the [simulation] config section.
    Simulate {
        /// Override the replication count of every condition.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Write the synthetic demo dataset.
    Demo {
        /// Destination file.
        #[arg(long, default_value = "data/demo.csv")]
        path: PathBuf,
    },
}

/// Error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => EXIT_IO,
            Error::NotConverged(_) => EXIT_NOT_CONVERGED,
            _ => EXIT_VALIDATION,
        };
        Failure { code, message: e.to_string() }
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_VALIDATION, message: msg.into() }
}

struct Ctx {
    common: Common,
    config: RunConfig,
}

impl Ctx {
    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self.common.out.clone().or_else(|| self.config.out.clone()).unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Failure::from(Error::Io { path: dir.clone(), source: e }))?;
        Ok(dir)
    }

    fn formats(&self) -> Result<Vec<Format>, Failure> {
        if let Some(f) = &self.common.format {
            return Ok(f.clone());
        }
        match &self.config.formats {
            Some(list) => list
                .iter()
                .map(|s| Format::from_str(s, true).map_err(|_| validation(format!("unknown output format {s}"))))
                .collect(),
            None => Ok(vec![Format::Table, Format::Structured]),
        }
    }

    fn seed(&self) -> Option<u64> {
        self.common.seed.or(self.config.seed)
    }

    fn data_config(&self) -> Result<DataConfig, Failure> {
        let mut d = self.config.data.clone().unwrap_or_default();
        let c = &self.common;
        if let Some(p) = &c.data {
            d.path = p.clone();
        }
        if d.path.as_os_str().is_empty() {
            return Err(validation("no input data: pass --data or set [data] path in the config"));
        }
        if d.group_column.is_empty() {
            d.group_column = "group".into();
        }
        if let Some(v) = &c.group_column {
            d.group_column = v.clone();
        }
        if let Some(v) = &c.items {
            d.items = v.clone();
        }
        if let Some(v) = &c.anchors {
            d.anchors = v.clone();
        }
        if let Some(v) = &c.outcome {
            d.outcome = Some(v.clone());
        }
        if let Some(v) = &c.covariates {
            d.covariates = v.clone();
        }
        if let Some(v) = &c.groups {
            d.groups = Some(v.clone());
        }
        if let Some(v) = &c.reference_group {
            d.reference_group = Some(v.clone());
        }
        Ok(d)
    }

    fn dataset(&self) -> Result<(OrdinalDataset, DataConfig), Failure> {
        let d = self.data_config()?;
        let schema: CsvSchema = d.schema();
        let data = load_csv(&d.path, &schema)?;
        info!("loaded {} rows, {} items, groups {:?}", data.rows.len(), data.n_items(), data.groups);
        Ok((data, d))
    }

    fn spec(&self, data: &OrdinalDataset, cfg: &DataConfig, level: ConstraintLevel) -> ModelSpec {
        let mut s = ModelSpec::new(data, level).with_anchors(&cfg.anchors);
        if let Some(q) = self.common.quadrature.or(self.config.model.quadrature) {
            s.quadrature_points = q;
        }
        s.fv_tie_variance = self.config.model.fv_tie_variance;
        s
    }

    fn level(&self, flag: Option<ConstraintLevel>, cfg: &DataConfig, fallback: ConstraintLevel) -> ConstraintLevel {
        flag.or(self.config.model.level).unwrap_or(if cfg.anchors.is_empty() {
            fallback
        } else {
            ConstraintLevel::PartialScalarAnchor
        })
    }

    fn emit<T: serde::Serialize>(&self, stem: &str, value: &T, tables: &[(&str, Table)]) -> Result<(), Failure> {
        let dir = self.out_dir()?;
        let formats = self.formats()?;
        if formats.contains(&Format::Structured) {
            let p = dir.join(format!("{stem}.json"));
            write_structured(&p, stem, value)?;
            println!("wrote {}", p.display());
        }
        if formats.contains(&Format::Table) {
            for (name, t) in tables {
                let p = dir.join(format!("{name}.csv"));
                write_table(&p, t)?;
                println!("wrote {}", p.display());
            }
        }
        Ok(())
    }
}

fn not_converged(what: &str) -> Failure {
    Failure { code: EXIT_NOT_CONVERGED, message: format!("{what} did not converge") }
}

fn fit_level(ctx: &Ctx, data: &OrdinalDataset, cfg: &DataConfig, level: ConstraintLevel) -> Result<FitResult, Failure> {
    let spec = ctx.spec(data, cfg, level);
    let mut opts = FitOptions::default();
    if let Some(m) = ctx.common.max_iter {
        opts.max_iter = m;
    }
    let f = fit_with(data, &spec, &opts)?;
    info!("{level}: loglik {} after {} iterations (converged: {})", f.loglik, f.iterations, f.converged);
    Ok(f)
}

fn print_ladder(title: &str, l: &LadderResult) {
    println!("{title}");
    println!("{:<22} {:>5} {:>14} {:>10} {:>4} {:>8}", "level", "df", "loglik", "Δχ²", "Δdf", "p");
    for r in &l.rows {
        let o = |v: Option<f64>, p: usize| v.map_or_else(|| "-".into(), |x| format!("{x:.p$}"));
        println!(
            "{:<22} {:>5} {:>14.3} {:>10} {:>4} {:>8}{}",
            r.level.name(),
            r.df_model,
            r.loglik,
            o(r.delta_chisq, 3),
            r.delta_df.map_or_else(|| "-".into(), |d| d.to_string()),
            o(r.p_value, 3),
            if r.converged { "" } else { "  (not converged)" }
        );
    }
}

fn ladder_status(l: &LadderResult) -> Result<(), Failure> {
    match l.rows.iter().find(|r| !r.converged) {
        Some(r) => Err(not_converged(&format!("{} fit", r.level))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig { schema_version: 1, ..RunConfig::default() },
    };
    let threads = cli.common.threads.or(config.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(validation("--threads must be ≥ 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| validation(e.to_string()))?;
    }
    let ctx = Ctx { common: cli.common, config };

    match cli.command {
        Command::Validate => {
            let (data, _) = ctx.dataset()?;
            let sizes = data.group_sizes();
            println!("ok: {} rows, {} items", data.rows.len(), data.n_items());
            for (g, n) in data.groups.iter().zip(sizes) {
                println!("  group {g}: {n} rows");
            }
            for it in &data.items {
                println!("  item {}: {} categories", it.name, it.n_categories);
            }
            Ok(())
        }
        Command::Anchors => {
            let (data, cfg) = ctx.dataset()?;
            if cfg.anchors.is_empty() {
                return Err(validation("no anchors: pass --anchors or set [data] anchors"));
            }
            let base = ctx.spec(&data, &cfg, ConstraintLevel::Configural);
            let l = run_anchor_validation_with(&data, &cfg.anchors, &base)?;
            print_ladder("anchor validation", &l);
            ctx.emit("anchors", &l, &[("anchors", Table::ladder(&l))])?;
            ladder_status(&l)
        }
        Command::Ladder => {
            let (data, cfg) = ctx.dataset()?;
            let spec = ctx.spec(&data, &cfg, ConstraintLevel::Configural);
            let l = run_invariance_ladder(&data, &spec)?;
            print_ladder("measurement invariance", &l);
            ctx.emit("ladder", &l, &[("ladder", Table::ladder(&l))])?;
            ladder_status(&l)
        }
        Command::Fit { level } => {
            let (data, cfg) = ctx.dataset()?;
            let level = ctx.level(level, &cfg, ConstraintLevel::Configural);
            let f = fit_level(&ctx, &data, &cfg, level)?;
            println!("{level}: loglik {} with {} free parameters", f.loglik, f.n_free);
            ctx.emit("fit", &f, &[("parameters", Table::parameters(&f))])?;
            if f.converged {
                Ok(())
            } else {
                Err(not_converged(&format!("{level} fit")))
            }
        }
        Command::Dif { level } => {
            let (data, cfg) = ctx.dataset()?;
            let level = ctx.level(level, &cfg, ConstraintLevel::Configural);
            let f = fit_level(&ctx, &data, &cfg, level)?;
            if !f.converged {
                return Err(not_converged(&format!("{level} fit")));
            }
            let t = threshold_differences(&f)?;
            for r in &t.rows {
                println!("{:<12} t{} {:>9.3} {:>9.3} {:>9.3}", r.item, r.k, r.tau_reference, r.tau_focal, r.delta);
            }
            ctx.emit("dif", &t, &[("dif", Table::thresholds(&t))])
        }
        Command::Gap { level } => {
            let (data, cfg) = ctx.dataset()?;
            let level = ctx.level(level, &cfg, ConstraintLevel::Scalar);
            let f = fit_level(&ctx, &data, &cfg, level)?;
            if !f.converged {
                return Err(not_converged(&format!("{level} fit")));
            }
            let gap = latent_gap(&f)?;
            let scores = eap_scores(&f, &data)?;
            println!(
                "latent gap ({} − {}): {} (SE {})",
                f.group_labels[gap.group],
                f.group_labels[f.reference()],
                gap.delta_eta,
                gap.se.map_or_else(|| "unavailable".into(), |s| s.to_string())
            );
            let table = Table {
                header: vec!["row", "group", "score", "sd"],
                rows: data
                    .rows
                    .iter()
                    .zip(&scores)
                    .enumerate()
                    .map(|(i, (r, s))| {
                        vec![i.to_string(), data.groups[r.group].clone(), s.score.to_string(), s.sd.to_string()]
                    })
                    .collect(),
            };
            let gap_table = Table {
                header: vec!["group", "delta_eta", "se"],
                rows: vec![vec![
                    f.group_labels[gap.group].clone(),
                    gap.delta_eta.to_string(),
                    gap.se.map_or_else(String::new, |s| s.to_string()),
                ]],
            };
            #[derive(serde::Serialize)]
            struct GapOut<'a> {
                level: ConstraintLevel,
                reference_group: &'a str,
                focal_group: &'a str,
                delta_eta: f64,
                se: Option<f64>,
                scores: &'a [mgcfa::analysis::EapScore],
            }
            let out = GapOut {
                level,
                reference_group: &f.group_labels[f.reference()],
                focal_group: &f.group_labels[gap.group],
                delta_eta: gap.delta_eta,
                se: gap.se,
                scores: &scores,
            };
            ctx.emit("gap", &out, &[("gap", gap_table), ("scores", table)])
        }
        Command::Policy { level, mode, raw_outcome, no_covariates } => {
            let (data, cfg) = ctx.dataset()?;
            if cfg.outcome.is_none() {
                return Err(validation("no outcome column: pass --outcome or set [data] outcome"));
            }
            let level = ctx.level(level, &cfg, ConstraintLevel::Scalar);
            let spec = ctx.spec(&data, &cfg, level);
            let s = &ctx.config.structural;
            let opts = StructuralOptions {
                mode: mode.or(s.mode).unwrap_or(StructuralMode::Joint),
                standardize_outcome: !raw_outcome && s.standardize_outcome.unwrap_or(true),
                use_covariates: !no_covariates && s.use_covariates.unwrap_or(true),
                outcome_name: cfg.outcome.clone().unwrap_or_default(),
            };
            let p = structural_effect(&data, &spec, &opts)?;
            println!(
                "beta[{}] = {}, delta_eta = {}, delta_policy = {}",
                p.focal_group, p.beta, p.delta_eta, p.delta_policy
            );
            ctx.emit("policy", &p, &[("policy", Table::policy(&p))])?;
            if p.converged {
                Ok(())
            } else {
                Err(not_converged("structural fit"))
            }
        }
        Command::Simulate { replications } => {
            let seed = ctx.seed().ok_or_else(|| validation("simulate needs a seed: pass --seed or set seed in the config"))?;
            let sim = ctx.config.simulation.clone().unwrap_or_default();
            let mut conds = sim.conditions(seed);
            if let Some(r) = replications {
                conds.iter_mut().for_each(|c| c.replications = r);
            }
            info!("{} conditions", conds.len());
            let report = run_grid(&conds)?;
            for c in report.cells.iter().filter(|c| c.flagged) {
                warn!("condition {} {}: convergence rate {}", c.condition, c.estimator.name(), c.conv_rate);
            }
            ctx.emit(
                "simulation",
                &report,
                &[("simulation", Table::simulation(&report)), ("replications", Table::replications(&report))],
            )?;
            if report.any_flagged() {
                Err(not_converged("one or more simulation conditions (convergence rate below 50%)"))
            } else {
                Ok(())
            }
        }
        Command::Demo { path } => {
            let seed = ctx.seed().unwrap_or(DEMO_SEED);
            let d = demo_dataset(seed)?;
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::Io { path: dir.to_owned(), source: e }))?;
            }
            write_dataset_csv(Path::new(&path), &d, "group")?;
            println!("wrote {} ({} rows)", path.display(), d.rows.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
