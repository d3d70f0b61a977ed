use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use labelaudit::config::AuditConfig;
use labelaudit::embed::{save_model, DocEmbeddings};
use labelaudit::groundtruth::{generate_synthetic, truth_matrix, write_synthetic_jsonl, SynthSpec};
use labelaudit::report::{
    class_dir_name, classify_class, confusion_rows, embed_corpus, emit, emit_partial, indicative_class, metrics_rows,
    nfis_rows, output_dir, prepare_corpus, presence_matrix, project_vectors, run_audit, sample_indices, tsne_rows,
    StageError,
};
use labelaudit::vectorize::{SparseDocMatrix, Vocabulary};
use labelaudit::{plot, Error};

#[derive(Parser)]
#[command(name = "labelaudit", version, about = "Audit label columns of a text dataset for subjective labeling")]
struct Cli {
    /// TOML audit configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed for every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit wall-clock timings so reruns produce identical files.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory (default: config `out`, then ./audit-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: classify, NFIS, embed, project, verdict.
    Audit,
    /// Split, cross-validate and train the linear SVM for each class.
    Classify,
    /// Chi-square table and NFIS distribution for each class.
    Nfis,
    /// Train PV-DBOW document vectors.
    Embed,
    /// t-SNE of cached document vectors, colored by each class.
    Project {
        /// Document vectors CSV (default: <out>/doc_vectors.csv).
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Write a synthetic corpus and its truth matrix.
    Synth {
        /// Preset used when the config has no [synthetic] section.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 5000)]
        n_docs: usize,
        #[arg(long, default_value_t = 2000)]
        vocab_noise: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Objective,
    Subjective,
    Rating,
}

enum Failure {
    Config(Error),
    Stage(StageError),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Stage(e)
    }
}

fn stage_io(stage: labelaudit::report::Stage) -> impl FnOnce(Error) -> Failure {
    move |source| Failure::Stage(StageError { stage, class: None, source, partial: None })
}

fn load_config(cli: &Cli) -> Result<AuditConfig, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config(Error::InvalidArgument("--config is required".into())))?;
    let mut cfg = AuditConfig::from_file(path).map_err(Failure::Config)?;
    apply_overrides(cli, &mut cfg);
    Ok(cfg)
}

fn apply_overrides(cli: &Cli, cfg: &mut AuditConfig) {
    if let Some(seed) = cli.seed {
        *cfg = cfg.clone().with_seed(seed);
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> labelaudit::Result<()> {
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn write_csv(path: &Path, (header, rows): (Vec<String>, Vec<Vec<String>>)) -> labelaudit::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn class_dir(out: &Path, class: &str) -> labelaudit::Result<PathBuf> {
    let dir = out.join(class_dir_name(class));
    fs::create_dir_all(&dir).map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    use labelaudit::report::Stage;
    match &cli.command {
        Command::Audit => {
            let cfg = load_config(cli)?;
            let out = output_dir(&cfg, cli.out.as_deref());
            match run_audit(&cfg) {
                Ok(report) => {
                    let manifest = emit(&report, &out).map_err(stage_io(Stage::Emit))?;
                    for c in &report.classes {
                        println!(
                            "{}: {} (macro-F1 {:.4}, NFIS imbalance {}, silhouette {:.4})",
                            c.class,
                            c.verdict.kind,
                            c.verdict.macro_f1,
                            c.verdict.imbalance.map_or("n/a".into(), |v| format!("{v:.4}")),
                            c.verdict.silhouette
                        );
                    }
                    println!("wrote {} files to {}", manifest.entries.len(), out.display());
                    Ok(())
                }
                Err(err) => {
                    if let Err(e) = emit_partial(&err, &out) {
                        eprintln!("also failed to write partial artifacts: {e}");
                    }
                    Err(err.into())
                }
            }
        }
        Command::Classify => {
            let cfg = load_config(cli)?;
            let out = output_dir(&cfg, cli.out.as_deref());
            let (corpus, _) = prepare_corpus(&cfg)?;
            for class in cfg.audited_classes() {
                let r = classify_class(&cfg, &corpus, &class)?;
                let dir = class_dir(&out, &class).map_err(stage_io(Stage::Emit))?;
                let save = || -> labelaudit::Result<()> {
                    write_json(&dir.join("vocab.json"), &r.vocabulary)?;
                    write_json(&dir.join("train_matrix.json"), &r.train_matrix)?;
                    write_json(&dir.join("model.json"), &r.model)?;
                    write_csv(&dir.join("metrics.csv"), metrics_rows(&r.summary.metrics))?;
                    write_csv(&dir.join("confusion.csv"), confusion_rows(&r.summary.confusion))
                };
                save().map_err(stage_io(Stage::Emit))?;
                println!("{class}: macro-F1 {:.4} (C = {})", r.summary.metrics.macro_f1, r.summary.cv.best_c);
            }
            Ok(())
        }
        Command::Nfis => {
            let cfg = load_config(cli)?;
            let out = output_dir(&cfg, cli.out.as_deref());
            let (corpus, _) = prepare_corpus(&cfg)?;
            fs::create_dir_all(&out).map_err(|e| stage_io(Stage::Emit)(Error::InvalidArgument(e.to_string())))?;
            let (vocab, presence) = match read_presence_cache(&out, corpus.len()) {
                Some(cached) => cached,
                None => {
                    let fresh = presence_matrix(&cfg, &corpus)?;
                    write_json(&out.join("vocab.json"), &fresh.0).map_err(stage_io(Stage::Emit))?;
                    write_json(&out.join("presence.json"), &fresh.1).map_err(stage_io(Stage::Emit))?;
                    fresh
                }
            };
            for class in cfg.audited_classes() {
                let r = indicative_class(&cfg, &corpus, &vocab, &presence, &class)?;
                let dir = class_dir(&out, &class).map_err(stage_io(Stage::Emit))?;
                let save = || -> labelaudit::Result<()> {
                    write_csv(&dir.join("nfis.csv"), nfis_rows(&r.nfis))?;
                    let bars: Vec<(String, Option<f64>)> =
                        r.nfis.per_label.iter().map(|l| (l.label.clone(), l.nfis)).collect();
                    let svg = plot::bar_chart(&format!("NFIS (K = {}) for {class}", r.nfis.k), &bars);
                    fs::write(dir.join("nfis.svg"), svg).map_err(|e| Error::InvalidArgument(e.to_string()))
                };
                save().map_err(stage_io(Stage::Emit))?;
                println!(
                    "{class}: NFIS imbalance {}",
                    r.nfis.imbalance.map_or("n/a".into(), |v| format!("{v:.4}"))
                );
            }
            Ok(())
        }
        Command::Embed => {
            let cfg = load_config(cli)?;
            let out = output_dir(&cfg, cli.out.as_deref());
            let (corpus, _) = prepare_corpus(&cfg)?;
            let model = embed_corpus(&cfg, &corpus)?;
            fs::create_dir_all(&out).map_err(|e| stage_io(Stage::Emit)(Error::InvalidArgument(e.to_string())))?;
            save_model(&model, &out.join("embedding.bin")).map_err(stage_io(Stage::Emit))?;
            model.doc_embeddings().write_csv(&out.join("doc_vectors.csv")).map_err(stage_io(Stage::Emit))?;
            println!("embedded {} documents in {} dimensions", model.n_docs(), model.dim());
            Ok(())
        }
        Command::Project { vectors } => {
            let cfg = load_config(cli)?;
            let out = output_dir(&cfg, cli.out.as_deref());
            let path = vectors.clone().unwrap_or_else(|| out.join("doc_vectors.csv"));
            let emb = DocEmbeddings::read_csv(&path).map_err(stage_io(Stage::Project))?;
            let (corpus, _) = prepare_corpus(&cfg)?;
            let by_id: std::collections::HashMap<&str, usize> =
                corpus.documents().iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
            let mut rows = Vec::new();
            for (k, id) in emb.ids.iter().enumerate() {
                match by_id.get(id.as_str()) {
                    Some(&i) => rows.push((k, i)),
                    None => {
                        return Err(stage_io(Stage::Project)(Error::InvalidArgument(format!(
                            "vector id `{id}` is not in the corpus"
                        ))))
                    }
                }
            }
            let picked = sample_indices(rows.len(), cfg.project.sample_cap, cfg.seed);
            let x: Vec<Vec<f64>> = picked.iter().map(|&r| emb.vectors[rows[r].0].clone()).collect();
            let ids: Vec<String> = picked.iter().map(|&r| emb.ids[rows[r].0].clone()).collect();
            let proj = project_vectors(&cfg, &x)?;
            for class in cfg.audited_classes() {
                let labels: Vec<String> = picked
                    .iter()
                    .map(|&r| corpus.documents()[rows[r].1].label(&class).unwrap_or_default().to_string())
                    .collect();
                let dir = class_dir(&out, &class).map_err(stage_io(Stage::Emit))?;
                write_csv(&dir.join("tsne.csv"), tsne_rows(&ids, &proj.coordinates, &labels))
                    .map_err(stage_io(Stage::Emit))?;
                let svg = plot::scatter(&format!("t-SNE of document vectors by {class}"), &proj.coordinates, &labels);
                fs::write(dir.join("tsne.svg"), svg)
                    .map_err(|e| stage_io(Stage::Emit)(Error::InvalidArgument(e.to_string())))?;
                let sil = labelaudit::project::silhouette(&proj.coordinates, &labels)
                    .map_err(stage_io(Stage::Project))?;
                println!("{class}: silhouette {sil:.4}, final KL {:.4}", proj.final_kl);
            }
            Ok(())
        }
        Command::Synth { preset, n_docs, vocab_noise } => {
            let from_config = match &cli.config {
                Some(_) => load_config(cli)?.synthetic,
                None => None,
            };
            let seed = cli.seed.unwrap_or(0);
            let mut spec = match (from_config, preset) {
                (Some(spec), _) => spec,
                (None, Some(Preset::Objective)) => SynthSpec::objective(*n_docs, *vocab_noise, seed),
                (None, Some(Preset::Subjective)) => SynthSpec::subjective(*n_docs, *vocab_noise, seed),
                (None, Some(Preset::Rating)) => SynthSpec::rating_like(*n_docs, *vocab_noise, seed),
                (None, None) => {
                    return Err(Failure::Config(Error::InvalidArgument(
                        "synth needs --preset or a config with a [synthetic] section".into(),
                    )))
                }
            };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            spec.validate().map_err(Failure::Config)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("synth-out"));
            let g = generate_synthetic(&spec).map_err(stage_io(Stage::Load))?;
            fs::create_dir_all(&out).map_err(|e| stage_io(Stage::Emit)(Error::InvalidArgument(e.to_string())))?;
            let save = || -> labelaudit::Result<()> {
                write_synthetic_jsonl(&g, &out.join("corpus.jsonl"))?;
                let user = g.corpus.labels(&spec.class_name)?;
                let t = truth_matrix(&user, &g.true_labels, &spec.labels)?;
                let mut header = vec!["user\\true".to_string()];
                header.extend(t.labels.iter().cloned());
                let rows = t
                    .labels
                    .iter()
                    .zip(&t.percent)
                    .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(|v| format!("{v:.4}"))).collect())
                    .collect();
                write_csv(&out.join("truth_matrix.csv"), (header, rows))?;
                let mut cfg = AuditConfig::synthetic(spec.clone());
                cfg.synthetic = None;
                cfg.input = Some(labelaudit::config::InputConfig {
                    path: PathBuf::from("corpus.jsonl"),
                    format: labelaudit::corpus::Format::Jsonl,
                    text_fields: vec!["text".into()],
                    class_fields: vec![spec.class_name.clone()],
                    id_field: Some("id".into()),
                    on_missing: Default::default(),
                });
                fs::write(out.join("audit.toml"), cfg.to_toml()?).map_err(|e| Error::InvalidArgument(e.to_string()))
            };
            save().map_err(stage_io(Stage::Emit))?;
            println!("wrote {} documents to {}", g.corpus.len(), out.join("corpus.jsonl").display());
            Ok(())
        }
    }
}

/// Reuses `vocab.json` + `presence.json` from an earlier `nfis` run when
/// they match the corpus size.
fn read_presence_cache(out: &Path, n_docs: usize) -> Option<(Vocabulary, SparseDocMatrix)> {
    let vocab: Vocabulary = serde_json::from_str(&fs::read_to_string(out.join("vocab.json")).ok()?).ok()?;
    let presence: SparseDocMatrix = serde_json::from_str(&fs::read_to_string(out.join("presence.json")).ok()?).ok()?;
    (presence.n_rows() == n_docs && presence.n_cols() == vocab.len()).then_some((vocab, presence))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
