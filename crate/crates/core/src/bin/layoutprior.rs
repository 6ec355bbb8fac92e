use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use layoutprior::gaussian::JointGaussian;
use layoutprior::matcher::{faq_match, match_bruteforce, result_to_json, FaqConfig};
use layoutprior::mpgnn::{ModelParameters, PriorMode};
use layoutprior::pipeline::{
    bench_synth, build_latent_db, category_kl, class_direction, edit_scene, first_match_frequencies, recommend,
    render_svg, synthesize, LatentDatabase, SynthesizedScene,
};
use layoutprior::scene::{
    generate_synthetic_corpus, load_corpus, load_room, load_shape_db, room_to_json, write_corpus, write_shape_db,
    RoomType, SceneRecord, SuperCategory, DEFAULT_D_SHAPE,
};
use layoutprior::training::{train_with, TrainConfig};
use layoutprior::{Error, Result};

#[derive(Parser)]
#[command(name = "layoutprior", version, about = "Graph-VAE indoor layout generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and its asset database.
    GenSynthetic(GenArgs),
    /// Train a model on a corpus and write a checkpoint.
    Train(TrainArgs),
    /// Sample a furnished layout for a room.
    Synth(SynthArgs),
    /// Order a posterior against a prior (both dense Gaussian dumps).
    Match(MatchArgs),
    /// Move one furniture latent along a category direction.
    Edit(EditArgs),
    /// Encode a corpus into a latent database for `recommend`.
    BuildDb(BuildDbArgs),
    /// Rank database scenes by prior likelihood in a room.
    Recommend(RecommendArgs),
    /// Corpus-level statistics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Model diagnostics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Timing runs.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated room types, cycled through.
    #[arg(long, default_value = "bedroom")]
    room_types: String,
    #[arg(long, default_value_t = DEFAULT_D_SHAPE)]
    d_shape: usize,
    #[arg(long)]
    shape_db: Option<PathBuf>,
    /// Also write the room of the first scene, for `synth`.
    #[arg(long)]
    room_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Autoregressive,
    IidStandard,
    IidLearned,
}

impl From<PriorArg> for PriorMode {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::Autoregressive => PriorMode::Autoregressive,
            PriorArg::IidStandard => PriorMode::IidStandard,
            PriorArg::IidLearned => PriorMode::IidLearned,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 8)]
    dz: usize,
    #[arg(long, default_value_t = 16)]
    dh: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, value_enum, default_value_t = PriorArg::Autoregressive)]
    prior: PriorArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_ckpt: PathBuf,
    /// Per-epoch log; CSV unless the path ends in `.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    head_hidden: usize,
    #[arg(long)]
    augment: bool,
    #[arg(long, default_value_t = 1)]
    faq_iters: usize,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    room: PathBuf,
    #[arg(long)]
    n_furniture: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    shape_db: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchMode {
    Faq,
    Brute,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    q: PathBuf,
    #[arg(long)]
    p: PathBuf,
    #[arg(long, value_enum, default_value_t = MatchMode::Faq)]
    mode: MatchMode,
    #[arg(long, default_value_t = 1)]
    iters: usize,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// A scene written by `synth`.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    node: usize,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    #[arg(long)]
    alpha: f64,
    /// Corpus whose class-mean latents define the direction.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    shape_db: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct BuildDbArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    room: PathBuf,
    #[arg(long, default_value_t = 3)]
    topk: usize,
    #[arg(long)]
    shape_db: PathBuf,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Label-frequency KL of a reference corpus from a generated one.
    CategoryKl {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// How often each category lands in the first prior slot, per room type.
    FirstMatch {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Wall time of repeated synthesis.
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        room: PathBuf,
        #[arg(long, default_value_t = 20)]
        repeat: usize,
        #[arg(long, default_value_t = 5)]
        n_furniture: usize,
        #[arg(long)]
        shape_db: PathBuf,
    },
}

fn with_path(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| with_path(path, e))
}

/// Prints a result line; a closed pipe downstream is not an error.
fn say(text: impl std::fmt::Display) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn load_ckpt(path: &Path) -> Result<ModelParameters> {
    ModelParameters::from_json(&read(path)?)
}

fn emit(syn: &SynthesizedScene, out: Option<&Path>, svg: Option<&Path>) -> Result<()> {
    let text = syn.to_json();
    match out {
        Some(p) => write(p, &text)?,
        None => say(text),
    }
    if let Some(p) = svg {
        write(p, &render_svg(&syn.scene))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic(a) => {
            let types = a
                .room_types
                .split(',')
                .map(|s| RoomType::parse(s.trim()))
                .collect::<Result<Vec<_>>>()?;
            let (scenes, db) = generate_synthetic_corpus(a.seed, a.n, &types, a.d_shape)?;
            write_corpus(&scenes, &a.out)?;
            if let Some(p) = &a.shape_db {
                write_shape_db(&db, p)?;
            }
            if let Some(p) = &a.room_out {
                write(p, &room_to_json(&scenes[0].layout()))?;
            }
            say(json!({"scenes": scenes.len(), "assets": db.entries.len(), "out": a.out}));
        }
        Command::Train(a) => {
            let corpus = load_corpus(&a.corpus)?;
            let config = TrainConfig {
                epochs: a.epochs,
                batch: a.batch,
                lr: a.lr,
                eta: a.eta,
                eps: a.eps,
                d_z: a.dz,
                d_h: a.dh,
                layers: a.layers,
                head_hidden: a.head_hidden,
                prior_mode: a.prior.into(),
                seed: a.seed,
                augment: a.augment,
                faq_iters: a.faq_iters,
            };
            let quiet = a.quiet;
            let (model, report) = train_with(&corpus, &config, |r| {
                if !quiet {
                    eprintln!(
                        "epoch {:>4}  elbo {:>10.3}  kl {:>8.3}  g {:.4} {:.4} {:.4}",
                        r.epoch, r.elbo, r.kl, r.g1, r.g2, r.g3
                    );
                }
            })?;
            model.save(&a.out_ckpt)?;
            if let Some(p) = &a.report {
                let text = if p.extension().is_some_and(|e| e == "json") {
                    report.to_json()
                } else {
                    report.to_csv()
                };
                write(p, &text)?;
            }
            say(serde_json::to_string(report.last().expect("at least one epoch"))?);
        }
        Command::Synth(a) => {
            let model = load_ckpt(&a.ckpt)?;
            let room = load_room(&a.room)?;
            let shapes = load_shape_db(&a.shape_db)?;
            let syn = synthesize(&room, a.n_furniture, &model, &shapes, a.seed)?;
            emit(&syn, a.out.as_deref(), a.svg.as_deref())?;
        }
        Command::Match(a) => {
            let q = JointGaussian::from_json(&read(&a.q)?)?;
            let p = JointGaussian::from_json(&read(&a.p)?)?;
            let r = match a.mode {
                MatchMode::Faq => faq_match(
                    &q,
                    &p,
                    FaqConfig {
                        max_fw_iters: a.iters,
                        ..FaqConfig::default()
                    },
                )?,
                MatchMode::Brute => match_bruteforce(&q, &p)?,
            };
            say(result_to_json(&r));
        }
        Command::Edit(a) => {
            let model = load_ckpt(&a.ckpt)?;
            let syn = SynthesizedScene::from_json(&read(&a.scene)?)?;
            let corpus = load_corpus(&a.corpus)?;
            let shapes = load_shape_db(&a.shape_db)?;
            let db = build_latent_db(&corpus, &model)?;
            let v = class_direction(&db, SuperCategory::parse(&a.from)?, SuperCategory::parse(&a.to)?)?;
            let edited = edit_scene(&syn, a.node, &v, a.alpha, &model, &shapes)?;
            emit(&edited, a.out.as_deref(), a.svg.as_deref())?;
        }
        Command::BuildDb(a) => {
            let model = load_ckpt(&a.ckpt)?;
            let db = build_latent_db(&load_corpus(&a.corpus)?, &model)?;
            write(&a.out, &db.to_json())?;
            say(json!({"entries": db.len(), "out": a.out}));
        }
        Command::Recommend(a) => {
            let model = load_ckpt(&a.ckpt)?;
            let db = LatentDatabase::from_json(&read(&a.db)?)?;
            let room = load_room(&a.room)?;
            let shapes = load_shape_db(&a.shape_db)?;
            let recs = recommend(&db, &room, &model, &shapes, a.topk)?;
            let out: Vec<_> = recs
                .iter()
                .map(|r| {
                    json!({
                        "scene_id": r.scene_id,
                        "loglik": r.loglik,
                        "perm": r.perm,
                        "asset_ids": r.asset_ids,
                        "scene": SceneRecord::from_scene(&r.scene),
                    })
                })
                .collect();
            say(serde_json::to_string_pretty(&out)?);
        }
        Command::Metrics(MetricsCommand::CategoryKl { gen, reference }) => {
            let kl = category_kl(&load_corpus(&gen)?, &load_corpus(&reference)?)?;
            say(json!({ "category_kl": kl }));
        }
        Command::Analyze(AnalyzeCommand::FirstMatch { ckpt, corpus }) => {
            let model = load_ckpt(&ckpt)?;
            say(first_match_frequencies(&load_corpus(&corpus)?, &model)?.to_json());
        }
        Command::Bench(BenchCommand::Synth {
            ckpt,
            room,
            repeat,
            n_furniture,
            shape_db,
        }) => {
            let model = load_ckpt(&ckpt)?;
            let r = bench_synth(&load_room(&room)?, n_furniture, &model, &load_shape_db(&shape_db)?, repeat)?;
            say(serde_json::to_string(&r)?);
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.to_string().trim().to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
