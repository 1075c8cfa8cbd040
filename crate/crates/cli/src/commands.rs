//! Command-line front end.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hmer_core::annotator::{
    annotate_corpus, train_annotnet, training_steps, AnnotNetConfig, AnnotVocab, Checker,
    Reclassifier,
};
use hmer_core::classifier::{
    baseline_order, expression_symbols, train_classifier, DualNet, DualNetConfig,
};
use hmer_core::corrector::{corr_sample, train_corrector, CorrNetConfig};
use hmer_core::evalkit::evaluate_dirs;
use hmer_core::ink::{parse_inkml, write_inkml, write_lg, SymbolInventory};
use hmer_core::nnet::{load_model, save_model, ModelFile, TrainConfig};
use hmer_core::pipeline::{recognize, recognize_batch, Models, PipelineConfig, RecognitionResult};
use hmer_core::relator::{
    expression_pairs, rel_symbols, train_relnet, training_pairs, RelNetConfig,
};
use hmer_core::segmenter::{segment_expression, train_segnet, SegNetConfig};
use hmer_core::synth::{random_corpus, Grammar, Style};
use hmer_core::{Expression, StrokeLabelGraph, SymbolId, TraceId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Parser)]
#[command(name = "hmer", version, about = "Online handwritten math recognition")]
pub struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Model directory; overrides the config's.
    #[arg(long, global = true, env = "HMER_MODEL_DIR")]
    pub model_dir: Option<PathBuf>,
    /// Seed for training and synthesis.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline on one InkML file, or on every file of a directory.
    Recognize(RecognizeArgs),
    /// Trace groups, one symbol per line in reading order.
    Segment {
        input: PathBuf,
    },
    /// Labels of the file's reference groups (or of segmented groups).
    Classify {
        input: PathBuf,
    },
    /// Stages 1-3; prints the LG.
    Relate {
        input: PathBuf,
    },
    /// Stages 1-4 without the second relation pass; prints the LG.
    Correct {
        input: PathBuf,
    },
    /// Aligns LaTeX labels to traces for a directory of InkML files.
    Annotate(AnnotateArgs),
    TrainSegment(TrainArgs),
    TrainClassify(TrainArgs),
    TrainRelate(TrainArgs),
    TrainCorrect(TrainArgs),
    TrainAnnotate(TrainArgs),
    /// Scores hypothesis LG files against reference LG files.
    Evaluate {
        hyp: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Writes a synthetic annotated InkML corpus.
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// Runs the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug, Args)]
pub struct RecognizeArgs {
    pub input: PathBuf,
    /// Output directory for batch runs.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Use the file's own ground truth in place of every model.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CheckKind {
    None,
    Crohme,
    Mathwriting,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub check: CheckKind,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of annotated InkML files.
    pub corpus: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training settings (TOML).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Small network sizes.
    #[arg(long)]
    pub toy: bool,
    /// Class inventory file; defaults to the labels found in the corpus.
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Trained classifier whose distributions feed relation and correction training.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
}

pub fn pipeline_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &cli.model_dir {
        c.model_dir = d.clone();
    }
    Ok(c)
}

struct Sample {
    expr: Expression,
    slg: StrokeLabelGraph,
}

fn read_doc(path: &Path) -> Result<hmer_core::ink::InkDocument> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_inkml(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn inkml_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "inkml"))
        .collect();
    v.sort();
    Ok(v)
}

fn read_corpus(dir: &Path) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for p in inkml_files(dir)? {
        let doc = read_doc(&p)?;
        let Some(slg) = doc.slg else {
            bail!(
                "{}: no ground truth ({})",
                p.display(),
                doc.slg_error.unwrap_or_default()
            );
        };
        out.push(Sample {
            expr: doc.expression,
            slg,
        });
    }
    if out.is_empty() {
        bail!("{}: no InkML files", dir.display());
    }
    Ok(out)
}

fn corpus_inventory(args: &TrainArgs, corpus: &[Sample]) -> Result<SymbolInventory> {
    if let Some(p) = &args.inventory {
        return Ok(SymbolInventory::load(p)?);
    }
    let labels: BTreeSet<&str> = corpus
        .iter()
        .flat_map(|s| s.slg.nodes().iter().map(|n| n.label.as_str()))
        .collect();
    Ok(SymbolInventory::from_labels(labels))
}

fn train_config(cli: &Cli, args: &TrainArgs) -> Result<TrainConfig> {
    let mut t = match &args.train {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    t.seed = cli.seed;
    Ok(t)
}

fn load_classifier(args: &TrainArgs) -> Result<Option<DualNet>> {
    args.classifier
        .as_ref()
        .map(|p| -> Result<DualNet> {
            Ok(DualNet::from_file(
                load_model(p).with_context(|| format!("loading {}", p.display()))?,
            )?)
        })
        .transpose()
}

fn sorted(expr: &Expression, slg: &StrokeLabelGraph) -> (Vec<BTreeSet<TraceId>>, Vec<SymbolId>) {
    let groups: Vec<BTreeSet<TraceId>> = slg.nodes().iter().map(|n| n.trace_ids.clone()).collect();
    let order = baseline_order(expr, &groups);
    (
        order.iter().map(|&i| groups[i].clone()).collect(),
        order.iter().map(|&i| slg.nodes()[i].id).collect(),
    )
}

fn save(out: &Path, file: ModelFile) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_model(out, &file).with_context(|| format!("writing {}", out.display()))
}

fn report(
    w: &mut dyn Write,
    epochs: usize,
    loss: Option<f64>,
    accuracy: f64,
    out: &Path,
) -> Result<()> {
    writeln!(w, "epochs {epochs}")?;
    if let Some(l) = loss {
        writeln!(w, "loss {l:.6}")?;
    }
    writeln!(w, "accuracy {accuracy:.4}")?;
    writeln!(w, "wrote {}", out.display())?;
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs, w: &mut dyn Write) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let tc = train_config(cli, args)?;
    match &cli.command {
        Command::TrainSegment(_) => {
            let pairs: Vec<(Expression, StrokeLabelGraph)> = corpus
                .iter()
                .map(|s| (s.expr.clone(), s.slg.clone()))
                .collect();
            let cfg = if args.toy {
                SegNetConfig::toy()
            } else {
                SegNetConfig::default()
            };
            let (net, rep) = train_segnet(&pairs, cfg, &tc)?;
            save(&args.out, net.to_file())?;
            report(
                w,
                rep.epochs,
                rep.losses.last().copied(),
                rep.accuracy,
                &args.out,
            )
        }
        Command::TrainClassify(_) => {
            let inv = corpus_inventory(args, &corpus)?;
            let cfg = if args.toy {
                DualNetConfig::toy(inv.clone())
            } else {
                DualNetConfig {
                    inventory: inv.clone(),
                    ..DualNetConfig::default()
                }
            };
            let mut data = Vec::new();
            for s in &corpus {
                data.extend(expression_symbols(&s.expr, &s.slg, &inv, &cfg.features)?);
            }
            let (net, rep) = train_classifier(&data, None, cfg, &tc)?;
            save(&args.out, net.to_file())?;
            report(
                w,
                rep.train.epochs,
                rep.train.losses.last().copied(),
                rep.train.accuracy,
                &args.out,
            )
        }
        Command::TrainRelate(_) => {
            let classifier = load_classifier(args)?;
            let inv = match &classifier {
                Some(c) => c.inventory().clone(),
                None => corpus_inventory(args, &corpus)?,
            };
            let cfg = if args.toy {
                RelNetConfig::toy(inv.len())
            } else {
                RelNetConfig {
                    classes: inv.len(),
                    ..RelNetConfig::default()
                }
            };
            let mut data = Vec::new();
            for s in &corpus {
                match &classifier {
                    Some(c) => {
                        let (groups, ids) = sorted(&s.expr, &s.slg);
                        let probs = c.classify_groups(&s.expr, &groups)?;
                        data.extend(training_pairs(
                            &rel_symbols(&s.expr, &groups, &probs, &inv),
                            &s.slg,
                            &ids,
                            &cfg,
                        ));
                    }
                    None => data.extend(expression_pairs(&s.expr, &s.slg, &inv, &cfg)?),
                }
            }
            let (net, rep) = train_relnet(&data, cfg, &tc)?;
            save(&args.out, net.to_file())?;
            report(
                w,
                rep.epochs,
                rep.losses.last().copied(),
                rep.accuracy,
                &args.out,
            )
        }
        Command::TrainCorrect(_) => {
            let Some(classifier) = load_classifier(args)? else {
                bail!("train-correct needs --classifier");
            };
            let inv = classifier.inventory().clone();
            let mut data = Vec::new();
            for s in &corpus {
                let (groups, ids) = sorted(&s.expr, &s.slg);
                let probs = classifier.classify_groups(&s.expr, &groups)?;
                let by_id: HashMap<SymbolId, Vec<f64>> = ids.into_iter().zip(probs).collect();
                data.push(corr_sample(&s.expr, &s.slg, &by_id, &inv)?);
            }
            let cfg = if args.toy {
                CorrNetConfig::toy(inv.len())
            } else {
                CorrNetConfig {
                    classes: inv.len(),
                    ..CorrNetConfig::default()
                }
            };
            let (net, rep) = train_corrector(&data, cfg, &tc)?;
            save(&args.out, net.to_file())?;
            report(
                w,
                rep.augmented.epochs + rep.clean.epochs,
                rep.clean.losses.last().copied(),
                rep.clean.accuracy,
                &args.out,
            )
        }
        Command::TrainAnnotate(_) => {
            let inv = corpus_inventory(args, &corpus)?;
            let labels: Vec<String> = inv.labels().to_vec();
            let cfg = if args.toy {
                AnnotNetConfig::toy(&labels)
            } else {
                AnnotNetConfig {
                    labels,
                    ..AnnotNetConfig::default()
                }
            };
            let vocab = AnnotVocab::new(inv);
            let mut steps = Vec::new();
            for s in &corpus {
                let latex = hmer_core::ink::slg_to_latex(&s.slg)?;
                steps.extend(training_steps(
                    &s.expr,
                    &s.slg,
                    &latex,
                    &vocab,
                    cfg.resample,
                )?);
            }
            let (net, rep) = train_annotnet(&steps, cfg, &tc)?;
            save(&args.out, net.to_file())?;
            report(
                w,
                rep.epochs,
                rep.losses.last().copied(),
                rep.accuracy,
                &args.out,
            )
        }
        _ => unreachable!("train dispatch"),
    }
}

fn print_result(w: &mut dyn Write, r: &RecognitionResult, json: bool, tag: &str) -> Result<()> {
    if json {
        let resp = crate::service::RecognizeResponse::new(r, tag);
        writeln!(w, "{}", serde_json::to_string_pretty(&resp)?)?;
    } else {
        write!(w, "{}", write_lg(&r.slg))?;
        writeln!(w)?;
        writeln!(w, "{}", r.latex)?;
    }
    Ok(())
}

fn recognize_cmd(
    _cli: &Cli,
    args: &RecognizeArgs,
    config: &PipelineConfig,
    w: &mut dyn Write,
) -> Result<()> {
    if args.input.is_dir() {
        let Some(out) = &args.output else {
            bail!("directory input needs --output");
        };
        let models = Models::load(config)?;
        let rep = recognize_batch(&args.input, &models, config, out)?;
        let mut failed = 0;
        for item in &rep.items {
            match (&item.latex, &item.error) {
                (Some(l), None) => writeln!(w, "{}\t{l}", item.name)?,
                (_, e) => {
                    failed += 1;
                    eprintln!("{}: {}", item.name, e.as_deref().unwrap_or("failed"));
                }
            }
        }
        if let Some(m) = rep.metrics {
            write!(w, "{}", m.to_table())?;
        }
        if failed > 0 {
            bail!("{failed} of {} files failed", rep.items.len());
        }
        return Ok(());
    }
    let doc = read_doc(&args.input)?;
    let models = if args.oracle {
        let Some(slg) = &doc.slg else {
            bail!("--oracle needs ground truth in {}", args.input.display());
        };
        let labels: BTreeSet<&str> = slg.nodes().iter().map(|n| n.label.as_str()).collect();
        Models::oracle(slg, SymbolInventory::from_labels(labels))
    } else {
        Models::load(config)?
    };
    let r = recognize(&doc.expression, &models, config)?;

    print_result(w, &r, args.json, &models.tag)
}

pub fn run(cli: &Cli, w: &mut dyn Write) -> Result<()> {
    let config = pipeline_config(cli)?;
    match &cli.command {
        Command::Recognize(args) => recognize_cmd(cli, args, &config, w),
        Command::Segment { input } => {
            let doc = read_doc(input)?;
            let models = Models::load(&PipelineConfig {
                correction: false,
                ..config
            })?;
            let groups = segment_expression(&doc.expression, &*models.segmenter)?;
            let sets: Vec<BTreeSet<TraceId>> = groups
                .iter()
                .rev()
                .map(|g| g.iter().copied().collect())
                .collect();
            for i in baseline_order(&doc.expression, &sets) {
                let ids: Vec<String> = sets[i].iter().map(|t| t.to_string()).collect();
                writeln!(w, "{}", ids.join(" "))?;
            }
            Ok(())
        }
        Command::Classify { input } => {
            let doc = read_doc(input)?;
            let models = Models::load(&PipelineConfig {
                correction: false,
                ..config
            })?;
            let groups: Vec<BTreeSet<TraceId>> = match &doc.slg {
                Some(slg) => slg.nodes().iter().map(|n| n.trace_ids.clone()).collect(),
                None => segment_expression(&doc.expression, &*models.segmenter)?
                    .into_iter()
                    .map(|g| g.into_iter().collect())
                    .collect(),
            };
            let order = baseline_order(&doc.expression, &groups);
            let sorted: Vec<BTreeSet<TraceId>> = order.iter().map(|&i| groups[i].clone()).collect();
            let probs = models
                .classifier
                .classify_groups(&doc.expression, &sorted)?;
            let inv = models.inventory();
            for (g, p) in sorted.iter().zip(&probs) {
                let (c, q) = hmer_core::classifier::top_k(p, 1)[0];
                let ids: Vec<String> = g.iter().map(|t| t.to_string()).collect();
                writeln!(
                    w,
                    "{}\t{}\t{q:.4}",
                    ids.join(" "),
                    inv.label(c).unwrap_or("?")
                )?;
            }
            Ok(())
        }
        Command::Relate { input } | Command::Correct { input } => {
            let correct = matches!(cli.command, Command::Correct { .. });
            let config = PipelineConfig {
                correction: correct,
                revise: false,
                ..config
            };
            let doc = read_doc(input)?;
            let models = Models::load(&config)?;
            let r = recognize(&doc.expression, &models, &config)?;
            write!(w, "{}", write_lg(&r.slg))?;
            Ok(())
        }
        Command::Annotate(args) => {
            let net = Models::load_annotator(&config)?;
            let classifier = match args.check {
                CheckKind::None => None,
                _ => {
                    let path = config.path(&config.dualnet);
                    Some(DualNet::from_file(
                        load_model(&path).with_context(|| format!("loading {}", path.display()))?,
                    )?)
                }
            };
            let checker = match (args.check, &classifier) {
                (CheckKind::Crohme, Some(c)) => Checker::Crohme(c),
                (CheckKind::Mathwriting, Some(c)) => Checker::MathWriting(c),
                _ => Checker::None,
            };
            let rep = annotate_corpus(&args.input, &net, &checker, &args.output)?;
            write!(w, "{}", rep.to_text())?;
            Ok(())
        }
        Command::TrainSegment(a)
        | Command::TrainClassify(a)
        | Command::TrainRelate(a)
        | Command::TrainCorrect(a)
        | Command::TrainAnnotate(a) => train(cli, a, w),
        Command::Evaluate {
            hyp,
            reference,
            json,
        } => {
            let ev = evaluate_dirs(hyp, reference)?;
            if *json {
                writeln!(w, "{}", serde_json::to_string_pretty(&ev)?)?;
            } else {
                write!(w, "{}", ev.metrics.to_table())?;
                if !ev.missing.is_empty() {
                    writeln!(w, "missing {}", ev.missing.join(" "))?;
                }
                writeln!(w, "{}", serde_json::to_string(&ev.metrics)?)?;
            }
            Ok(())
        }
        Command::Synth { output, count } => {
            std::fs::create_dir_all(output)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let corpus = random_corpus(&Grammar::default(), &Style::default(), *count, &mut rng);
            for (i, s) in corpus.iter().enumerate() {
                let name = format!("synth_{i:04}");
                let expr = s
                    .expr
                    .clone()
                    .with_latex_label(Some(s.latex.clone()))
                    .with_source_id(name.clone());
                std::fs::write(
                    output.join(format!("{name}.inkml")),
                    write_inkml(&expr, Some(&s.slg))?,
                )?;
            }
            writeln!(w, "wrote {} files", corpus.len())?;
            Ok(())
        }
        Command::Serve { addr } => {
            let models = Models::load(&config)?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on {addr}");
            rt.block_on(crate::service::serve(addr, models, config))?;
            Ok(())
        }
    }
}
