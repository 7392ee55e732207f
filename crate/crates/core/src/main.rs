use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use bnas::archspace::{count_cost_with, inherit_weights, CodeFile, ExpansionCode, NetworkTemplate, Precision, Ratio};
use bnas::checkpoint::Checkpoint;
use bnas::evosearch::parse_log;
use bnas::harness::{
    evaluate_checkpoint, run_search, to_csv, train_code, write_reports, CostRow, RunConfig, BEST_CODE_FILE, LOG_FILE,
};
use bnas::{Error, Result};

#[derive(Parser)]
#[command(name = "bnas", version, about = "Binary CNN channel-width search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the cost of one code on a template.
    Flops {
        #[arg(long)]
        template: String,
        #[command(flatten)]
        code: CodeArgs,
        /// Count every layer at full precision.
        #[arg(long)]
        full_precision: bool,
    },
    /// Run or resume an evolutionary search, then write the reports.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Override `search.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Initialize candidates from a trained uniform-4x supernet.
        #[arg(long)]
        supernet_init: bool,
    },
    /// Train one code with the config's `full_train` settings and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        code: CodeArgs,
        /// Start from weights inherited from this supernet checkpoint.
        #[arg(long)]
        inherit: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report train and validation accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Slice a supernet checkpoint down to a code.
    Inherit {
        #[arg(long)]
        supernet: PathBuf,
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write CSV reports for a search directory, or channel and cost tables for one code.
    Report {
        /// Search directory; its best code is tabulated unless a code is given.
        #[arg(long, required_unless_present = "template")]
        run: Option<PathBuf>,
        /// Tabulate a code of this template without a search directory.
        #[arg(long, conflicts_with = "run", requires = "out")]
        template: Option<String>,
        #[arg(long, conflicts_with = "code")]
        uniform: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        code: Option<Vec<f64>>,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct CodeArgs {
    /// The same ratio for every gene.
    #[arg(long)]
    uniform: Option<f64>,
    /// Comma-separated ratios, one per gene.
    #[arg(long, value_delimiter = ',')]
    code: Option<Vec<f64>>,
    /// A code JSON file as written by `bnas search`.
    #[arg(long)]
    code_file: Option<PathBuf>,
}

impl CodeArgs {
    fn resolve(&self, template: &NetworkTemplate) -> Result<ExpansionCode> {
        let code = if let Some(r) = self.uniform {
            ExpansionCode::uniform(Ratio::from_f64(r)?, template.n_genes)
        } else if let Some(values) = &self.code {
            ExpansionCode::from_f64s(values)?
        } else {
            let path = self.code_file.as_ref().expect("clap requires one code source");
            let file = CodeFile::read(path)?;
            if file.template != template.name {
                return Err(Error::Input(format!(
                    "{} holds a {} code, expected {}",
                    path.display(),
                    file.template,
                    template.name
                )));
            }
            file.ratios
        };
        if code.len() != template.n_genes {
            return Err(Error::Input(format!(
                "{} needs {} ratios, got {}",
                template.name,
                template.n_genes,
                code.len()
            )));
        }
        Ok(code)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Flops {
            template,
            code,
            full_precision,
        } => {
            let template = NetworkTemplate::builtin(&template)?;
            let code = code.resolve(&template)?;
            let precision = if full_precision { Precision::Full } else { Precision::Binary };
            let c = count_cost_with(&template, &code, precision)?;
            let row = CostRow {
                model: template.name.clone(),
                precision,
                code: code.to_string(),
                flops: c.flops,
                flops_norm: c.flops_norm,
                speedup: c.speedup,
                weight_bits: c.weight_bits,
            };
            print!("{}", to_csv(&[row])?);
        }
        Command::Search {
            config,
            seed,
            out,
            supernet_init,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.search.master_seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.supernet_init |= supernet_init;
            let summary = run_search(&cfg)?;
            report(&summary.run_dir, &summary.run_dir, None)?;
            println!(
                "best {} acc {:.2}% flops_norm {:.4} fitness {:.3}",
                summary.best.code, summary.best.acc, summary.best.cost.flops_norm, summary.best.fitness
            );
        }
        Command::Train {
            config,
            code,
            inherit,
            epochs,
            seed,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let code = code.resolve(&cfg.template()?)?;
            let mut train_cfg = cfg.full_train.clone();
            if let Some(e) = epochs {
                train_cfg.epochs = e;
            }
            if let Some(s) = seed {
                train_cfg.seed = s;
            }
            train_cfg.validate()?;
            let supernet = inherit.as_deref().map(Checkpoint::read).transpose()?;
            let s = train_code(&cfg, &code, &train_cfg, supernet.as_ref(), &out)?;
            if s.diverged {
                log::warn!("training diverged (non-finite loss)");
            }
            println!("train_acc {:.2}% val_acc {:.2}%", s.train_acc, s.val_acc);
        }
        Command::Eval { config, checkpoint } => {
            let cfg = RunConfig::load(&config)?;
            let (train_acc, val_acc) = evaluate_checkpoint(&cfg, &Checkpoint::read(&checkpoint)?)?;
            println!("train_acc {train_acc:.2}% val_acc {val_acc:.2}%");
        }
        Command::Inherit { supernet, code, out } => {
            let s = Checkpoint::read(&supernet)?;
            let template = NetworkTemplate::builtin(&s.meta.template)?;
            let code = code.resolve(&template)?;
            inherit_weights(&s, &template, &code)?.write(&out)?;
            info!("wrote {}", out.display());
        }
        Command::Report {
            run,
            template,
            uniform,
            code,
            out,
        } => {
            let given = (uniform.is_some() || code.is_some()).then_some(CodeArgs {
                uniform,
                code,
                code_file: None,
            });
            match (run, template) {
                (Some(run), _) => {
                    let out = out.unwrap_or_else(|| run.clone());
                    report(&run, &out, given.as_ref())?
                }
                (None, Some(name)) => {
                    let template = NetworkTemplate::builtin(&name)?;
                    let code = given
                        .ok_or_else(|| Error::Input("--template needs --uniform or --code".into()))?
                        .resolve(&template)?;
                    let out = out.expect("clap requires --out with --template");
                    write_reports(&out, &template, None, &code)?;
                }
                (None, None) => unreachable!("clap requires --run or --template"),
            }
        }
    }
    Ok(())
}

fn report(run: &Path, out: &Path, code: Option<&CodeArgs>) -> Result<()> {
    let best = CodeFile::read(&run.join(BEST_CODE_FILE))?;
    let template = NetworkTemplate::builtin(&best.template)?;
    let code = match code {
        Some(c) => c.resolve(&template)?,
        None => best.ratios,
    };
    let log_path = run.join(LOG_FILE);
    let text = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_reports(out, &template, Some(&parse_log(&text)?), &code)?;
    info!("reports written to {}", out.display());
    Ok(())
}
