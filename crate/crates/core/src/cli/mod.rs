//! Batch command-line frontend. Every subcommand writes its outputs, the
//! effective config and a `manifest.json` (config hash, seed, input and
//! output digests) into `--out`.

mod config;
mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    parse_config, read_config, InlineCorpus, PhantomCorpusConfig, PipelineConfig, Split, SplitPaths, SplitSizes,
    StatsConfig,
};
pub use run::{
    load_model, load_split, sha256_hex, write_model, FileDigest, LoadedSplit, ModelFile, Run, RunManifest,
    ScanEntry, SplitManifest, EFFECTIVE_CONFIG_FILE, MANIFEST_FILE,
};

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureVolume};
use crate::metrics::{metrics_csv, MetricSummary};
use crate::morphometry::{analyze, graph_csv, report_csv, MorphometryOptions};
use crate::phantom::{generate_tree_phantom, PhantomSpec};
use crate::selftrain::{
    candidates_csv, check_partition, derive_seed, evaluate_scans, run_pipeline, score_scan, select_reliable,
    train_stage, CandidateScore, Corpus, Scan, SelfTrainConfig,
};
use crate::stats::{compare_groups, read_group_csv, stats_csv};
use crate::volume::{load_vessel12_points, points_to_mask, read_header, volume_paths, BinaryMask, Spacing, VolumeGrid};

#[derive(Debug, Parser)]
#[command(name = "vesselforge", version, about = "Self-training vessel segmentation and vascular morphometry")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bound on scan-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a synthetic vessel-tree corpus.
    Phantom {
        /// Phantom corpus config (same as --config).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train one stage on labeled (+ pseudo-labeled) scans.
    Train {
        #[arg(long, default_value = "baseline")]
        stage: String,
        /// Split manifests whose masks are pseudo labels; may repeat.
        #[arg(long)]
        pseudo: Vec<PathBuf>,
    },
    /// Score scans with a trained model and write candidate pseudo labels.
    Pseudolabel {
        #[arg(long)]
        model: PathBuf,
        /// Split manifest to score; defaults to the config's unlabeled split.
        #[arg(long)]
        scans: Option<PathBuf>,
    },
    /// Apply one iteration of the selection policy to scored candidates.
    Select {
        #[arg(long)]
        candidates: PathBuf,
        /// Zero-based policy index.
        #[arg(long, default_value_t = 0)]
        iteration: usize,
    },
    /// Full self-training run: baseline, selection rounds, final model.
    #[command(visible_alias = "iterate")]
    Pipeline,
    /// Metrics CSV for a model on labeled scans, or for mask pairs.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scans: Option<PathBuf>,
        #[arg(long)]
        pred: Vec<PathBuf>,
        #[arg(long)]
        gt: Vec<PathBuf>,
    },
    /// Morphometry report CSV (and graph CSVs) per mask.
    Morph {
        #[arg(long, required = true)]
        mask: Vec<PathBuf>,
    },
    /// One-way ANOVA and Bonferroni post-hoc over grouped report CSVs.
    Stats {
        /// `label=path.csv`; repeat for every group.
        #[arg(long = "group", value_parser = parse_group, required = true)]
        groups: Vec<(String, PathBuf)>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Rasterize VESSEL12-style point annotations into a mask.
    #[command(name = "ingest-vessel12")]
    IngestVessel12 {
        #[arg(long)]
        points: PathBuf,
        /// Volume whose header supplies dims and spacing.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// `nz,ny,nx` when no reference is given.
        #[arg(long, value_parser = parse_triple::<usize>)]
        dims: Option<[usize; 3]>,
        /// `sz,sy,sx` in mm (default 1,1,1).
        #[arg(long, value_parser = parse_triple::<f64>)]
        spacing: Option<[f64; 3]>,
        #[arg(long, default_value = "vessel12_mask")]
        name: String,
    },
}

fn parse_group(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected label=path, got '{s}'")),
    }
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> std::result::Result<[T; 3], String> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("bad component '{p}' in '{s}'")))
        .collect::<std::result::Result<_, _>>()?;
    <[T; 3]>::try_from(parts).map_err(|_| format!("expected three comma-separated values, got '{s}'"))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("VESSELFORGE_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (program name first), runs the subcommand and maps the
/// outcome to an exit code: 0 success, 1 usage/validation, 2 runtime.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<RunManifest> {
    match cli.global.jobs {
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<RunManifest> {
    let g = &cli.global;
    match &cli.command {
        Command::Phantom { spec } => phantom(g, spec.as_deref()),
        Command::Train { stage, pseudo } => train(g, stage, pseudo),
        Command::Pseudolabel { model, scans } => pseudolabel(g, model, scans.as_deref()),
        Command::Select { candidates, iteration } => select(g, candidates, *iteration),
        Command::Pipeline => pipeline(g),
        Command::Evaluate { model, scans, pred, gt } => evaluate(g, model.as_deref(), scans.as_deref(), pred, gt),
        Command::Morph { mask } => morph(g, mask),
        Command::Stats { groups, alpha } => stats(g, groups, *alpha),
        Command::IngestVessel12 {
            points,
            reference,
            dims,
            spacing,
            name,
        } => ingest_vessel12(g, points, reference.as_deref(), *dims, *spacing, name),
    }
}

fn out_dir(g: &GlobalArgs, fallback: Option<&PathBuf>) -> Result<PathBuf> {
    g.out
        .clone()
        .or_else(|| fallback.cloned())
        .ok_or_else(|| Error::Config("--out is required".into()))
}

/// Manifest entries: files under `dir` relative to it, others absolute.
fn manifest_ref(path: &Path, dir: &Path) -> PathBuf {
    match path.strip_prefix(dir) {
        Ok(rel) => rel.to_path_buf(),
        Err(_) => std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()),
    }
}

fn header_stem(path: &Path) -> String {
    let (header, _) = volume_paths(path);
    let name = header.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(crate::volume::HEADER_SUFFIX).unwrap_or(&name).to_string()
}

/// Per-scan rows, plus a `mean` row when there is more than one scan.
fn metric_table(rows: &[(String, MetricSummary)]) -> String {
    let mut all = rows.to_vec();
    if rows.len() > 1 {
        let mean = MetricSummary::mean(&rows.iter().map(|(_, m)| *m).collect::<Vec<_>>()).expect("non-empty");
        all.push(("mean".to_string(), mean));
    }
    metrics_csv(&all)
}

fn phantom(g: &GlobalArgs, spec: Option<&Path>) -> Result<RunManifest> {
    let mut cfg: PhantomCorpusConfig = match spec.or(g.config.as_deref()) {
        Some(p) => read_config(p)?,
        None => PhantomCorpusConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let mut run = Run::new(&out_dir(g, None)?, "phantom", cfg.seed)?;
    run.echo_config(&cfg)?;

    let mut jobs: Vec<(Option<Split>, String)> = Vec::new();
    match cfg.splits {
        Some(sizes) => {
            for (split, n) in Split::ALL.into_iter().zip(sizes.as_array()) {
                jobs.extend((0..n).map(|i| (Some(split), format!("{}{i:03}", split.name()))));
            }
        }
        None => jobs.extend((0..cfg.count).map(|i| (None, format!("tree{i}")))),
    }
    let generated: Vec<_> = jobs
        .par_iter()
        .map(|(_, id)| {
            let spec = PhantomSpec {
                seed: derive_seed(cfg.seed, id),
                ..cfg.phantom.clone()
            };
            generate_tree_phantom(&spec)
        })
        .collect::<Result<_>>()?;

    let mut manifests: Vec<(String, SplitManifest)> = Vec::new();
    for ((split, id), (grid, mask, truth)) in jobs.iter().zip(generated) {
        if !truth.is_valid() {
            log::warn!("{id}: rendered tree is not a clean tree (topology {:?}); graph counts may differ from truth", truth.topology);
        }
        let image = format!("{id}_image.vvol.json");
        let label = format!("{id}.vvol.json");
        run.write_volume(&image, &grid)?;
        run.write_volume(&label, &mask)?;
        run.write_json(&format!("{id}.truth.json"), &truth)?;
        let name = split.map_or("scans", Split::name);
        if manifests.last().map(|(n, _)| n.as_str()) != Some(name) {
            manifests.push((name.to_string(), SplitManifest::default()));
        }
        manifests.last_mut().unwrap().1.scans.push(ScanEntry {
            id: id.clone(),
            image: PathBuf::from(image),
            mask: (*split != Some(Split::Unlabeled)).then(|| PathBuf::from(label)),
        });
    }
    for (name, m) in &manifests {
        run.write_json(&format!("{name}.json"), m)?;
    }
    log::info!("wrote {} phantoms to {}", jobs.len(), run.out().display());
    run.finish()
}

fn pipeline_config(g: &GlobalArgs) -> Result<(PipelineConfig, PathBuf)> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = out_dir(g, cfg.out.as_ref())?;
    Ok((cfg, out))
}

fn has_split(cfg: &PipelineConfig, split: Split) -> bool {
    match &cfg.phantom_corpus {
        Some(c) => Split::only(split, c.sizes).iter().sum::<usize>() > 0,
        None => cfg.splits.get(split).is_some(),
    }
}

fn config_split(run: &mut Run, cfg: &PipelineConfig, split: Split, need_masks: bool) -> Result<LoadedSplit> {
    let loaded = match &cfg.phantom_corpus {
        Some(c) => {
            let corpus = Corpus::from_phantoms(&c.phantom, split.only(c.sizes), cfg.seed)?;
            let scans = match split {
                Split::Labeled => corpus.labeled,
                Split::Unlabeled => corpus.unlabeled,
                Split::Validation => corpus.validation,
                Split::Test => corpus.test,
            };
            LoadedSplit::in_memory(scans)
        }
        None => {
            let path = cfg
                .splits
                .get(split)
                .ok_or_else(|| Error::Config(format!("splits.{} is required", split.name())))?
                .clone();
            load_split(run, &path, need_masks)?
        }
    };
    if loaded.scans.is_empty() {
        return Err(Error::EmptySplit(split.name()));
    }
    Ok(loaded)
}

fn front_end(st: &SelfTrainConfig, labeled: &[Scan], validation: &[Scan]) -> Result<(FeatureExtractor, Vec<(FeatureVolume, BinaryMask)>)> {
    let grids: Vec<&VolumeGrid> = labeled.iter().map(|s| &s.grid).collect();
    let extractor = FeatureExtractor::fit(&grids, &st.feature_config())?;
    let val = validation
        .par_iter()
        .map(|s| {
            let mask = s.mask.clone().ok_or_else(|| Error::Config(format!("validation scan {} has no mask", s.id)))?;
            Ok((extractor.extract(&s.grid)?, mask))
        })
        .collect::<Result<_>>()?;
    Ok((extractor, val))
}

fn train(g: &GlobalArgs, stage: &str, pseudo: &[PathBuf]) -> Result<RunManifest> {
    let (cfg, out) = pipeline_config(g)?;
    let mut run = Run::new(&out, "train", cfg.seed)?;
    run.echo_config(&cfg)?;
    let st = cfg.selftrain();
    let labeled = config_split(&mut run, &cfg, Split::Labeled, true)?;
    let validation = config_split(&mut run, &cfg, Split::Validation, true)?;
    let (extractor, val) = front_end(&st, &labeled.scans, &validation.scans)?;

    let mut pseudo_scans = Vec::new();
    for p in pseudo {
        pseudo_scans.extend(load_split(&mut run, p, true)?.scans);
    }
    let labeled_refs: Vec<&Scan> = labeled.scans.iter().collect();
    let pairs: Vec<(&Scan, &BinaryMask)> = pseudo_scans.iter().map(|s| (s, s.mask.as_ref().expect("loaded with masks"))).collect();
    let outcome = train_stage(&extractor, &labeled_refs, &pairs, &val, &st, stage)?;
    log::info!("{stage}: best epoch {} val dice {:.4}", outcome.best().epoch, outcome.best().val_dice);
    write_model(&mut run, stage, cfg.seed, &extractor, &outcome)?;

    if has_split(&cfg, Split::Test) {
        let test = config_split(&mut run, &cfg, Split::Test, true)?;
        let rows = evaluate_scans(&extractor, outcome.best(), &test.scans, cfg.train.binarize_threshold)?;
        run.write_text("metrics.csv", &metric_table(&rows))?;
    }
    run.finish()
}

/// Scores plus where the image and cleaned pseudo label live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateEntry {
    pub score: CandidateScore,
    pub image: PathBuf,
    pub pseudo_mask: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    pub stage: String,
    pub candidates: Vec<CandidateEntry>,
}

fn pseudolabel(g: &GlobalArgs, model: &Path, scans: Option<&Path>) -> Result<RunManifest> {
    let (cfg, out) = pipeline_config(g)?;
    let mut run = Run::new(&out, "pseudolabel", cfg.seed)?;
    run.echo_config(&cfg)?;
    let st = cfg.selftrain();
    let (mf, outcome) = load_model(&mut run, model)?;
    let n = outcome.checkpoints.len();
    if n < st.k_checkpoints {
        return Err(Error::Config(format!("model has {n} checkpoints, k_checkpoints is {}", st.k_checkpoints)));
    }
    let split = match scans {
        Some(p) => load_split(&mut run, p, false)?,
        None => config_split(&mut run, &cfg, Split::Unlabeled, false)?,
    };
    let trailing = &outcome.checkpoints[n - st.k_checkpoints..];
    let best = outcome.best();
    let scored: Vec<(CandidateScore, BinaryMask)> = split
        .scans
        .par_iter()
        .map(|s| {
            let c = score_scan(&s.id, &mf.extractor.extract(&s.grid)?, trailing, best, st.pseudo_threshold)?;
            let score = c.score();
            Ok((score, st.clean_pseudo_label(c.reference)))
        })
        .collect::<Result<_>>()?;

    let mut file = CandidateFile {
        stage: mf.stage.clone(),
        candidates: Vec::new(),
    };
    let mut manifest = SplitManifest::default();
    for ((scan, image), (score, mask)) in split.scans.iter().zip(&split.images).zip(scored) {
        let image = match image {
            Some(p) => manifest_ref(p, run.out()),
            None => {
                let rel = format!("images/{}_image.vvol.json", scan.id);
                run.write_volume(&rel, &scan.grid)?;
                PathBuf::from(rel)
            }
        };
        let rel = format!("pseudo/{}.vvol.json", scan.id);
        run.write_volume(&rel, &mask)?;
        manifest.scans.push(ScanEntry {
            id: scan.id.clone(),
            image: image.clone(),
            mask: Some(PathBuf::from(&rel)),
        });
        file.candidates.push(CandidateEntry {
            score,
            image,
            pseudo_mask: PathBuf::from(rel),
        });
    }
    let scores: Vec<CandidateScore> = file.candidates.iter().map(|c| c.score.clone()).collect();
    run.write_text("candidates.csv", &candidates_csv(&scores))?;
    run.write_json("candidates.json", &file)?;
    run.write_json("pseudo.json", &manifest)?;
    run.finish()
}

fn select(g: &GlobalArgs, candidates: &Path, iteration: usize) -> Result<RunManifest> {
    let (cfg, out) = pipeline_config(g)?;
    let mut run = Run::new(&out, "select", cfg.seed)?;
    run.echo_config(&cfg)?;
    let file: CandidateFile = run.load_json(candidates)?;
    let base = candidates.parent().unwrap_or(Path::new("")).to_path_buf();
    let resolve = |p: &Path| {
        let p = if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        manifest_ref(&p, &out)
    };
    let scores: Vec<CandidateScore> = file.candidates.iter().map(|c| c.score.clone()).collect();
    let selection = select_reliable(&scores, &cfg.selection, iteration)?;
    check_partition(&scores.iter().map(|s| s.id.clone()).collect::<Vec<_>>(), &selection)?;
    log::info!("iteration {}: selected {} of {}", iteration + 1, selection.selected.len(), scores.len());

    let mut selected = SplitManifest::default();
    let mut remainder = SplitManifest::default();
    for c in &file.candidates {
        let image = resolve(&c.image);
        if selection.selected.contains(&c.score.id) {
            selected.scans.push(ScanEntry {
                id: c.score.id.clone(),
                image,
                mask: Some(resolve(&c.pseudo_mask)),
            });
        } else {
            remainder.scans.push(ScanEntry {
                id: c.score.id.clone(),
                image,
                mask: None,
            });
        }
    }
    run.write_json("selection.json", &selection)?;
    run.write_json("selected.json", &selected)?;
    run.write_json("remainder.json", &remainder)?;
    run.finish()
}

fn pipeline(g: &GlobalArgs) -> Result<RunManifest> {
    let (cfg, out) = pipeline_config(g)?;
    let mut run = Run::new(&out, "pipeline", cfg.seed)?;
    run.echo_config(&cfg)?;
    let st = cfg.selftrain();
    let corpus = Corpus {
        labeled: config_split(&mut run, &cfg, Split::Labeled, true)?.scans,
        unlabeled: config_split(&mut run, &cfg, Split::Unlabeled, false)?.scans,
        validation: config_split(&mut run, &cfg, Split::Validation, true)?.scans,
        test: config_split(&mut run, &cfg, Split::Test, true)?.scans,
    };
    let outcome = run_pipeline(&corpus, &st)?;
    let report = &outcome.report;

    let mut summary = String::from("stage,n_pseudo,n_selected,reused_previous,dsc,iou,sensitivity,precision\n");
    let stages = std::iter::once(&report.baseline)
        .chain(&report.iterations)
        .chain(report.final_stage.as_ref());
    for s in stages {
        run.write_text(&format!("metrics_{}.csv", s.stage), &metric_table(&s.test_per_scan))?;
        if s.selection.is_some() {
            run.write_text(&format!("candidates_{}.csv", s.stage), &candidates_csv(&s.candidates))?;
        }
        let n_selected = s.selection.as_ref().map_or(0, |sel| sel.selected.len());
        let t = &s.test;
        summary.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4}\n",
            s.stage, s.n_pseudo, n_selected, s.reused_previous, t.dsc, t.iou, t.sensitivity, t.precision
        ));
    }
    run.write_text("summary.csv", &summary)?;
    run.write_json("report.json", report)?;
    write_model(&mut run, &report.last_stage().stage, cfg.seed, &outcome.extractor, &outcome.training)?;
    run.finish()
}

#[derive(Serialize)]
struct MaskPairConfig<'a> {
    pred: &'a [PathBuf],
    gt: &'a [PathBuf],
    seed: u64,
}

fn evaluate(g: &GlobalArgs, model: Option<&Path>, scans: Option<&Path>, pred: &[PathBuf], gt: &[PathBuf]) -> Result<RunManifest> {
    if !pred.is_empty() || !gt.is_empty() {
        if model.is_some() {
            return Err(Error::Config("give either --model or --pred/--gt pairs".into()));
        }
        if pred.len() != gt.len() {
            return Err(Error::Config(format!("{} --pred masks but {} --gt masks", pred.len(), gt.len())));
        }
        let seed = g.seed.unwrap_or(0);
        let mut run = Run::new(&out_dir(g, None)?, "evaluate", seed)?;
        run.echo_config(&MaskPairConfig { pred, gt, seed })?;
        let mut rows = Vec::new();
        for (p, t) in pred.iter().zip(gt) {
            let pm = run.load_mask(p)?;
            let tm = run.load_mask(t)?;
            rows.push((header_stem(p), MetricSummary::evaluate(&pm, &tm)?));
        }
        run.write_text("metrics.csv", &metric_table(&rows))?;
        return run.finish();
    }
    let model = model.ok_or_else(|| Error::Config("evaluate needs --model or --pred/--gt".into()))?;
    let (cfg, out) = pipeline_config(g)?;
    let mut run = Run::new(&out, "evaluate", cfg.seed)?;
    run.echo_config(&cfg)?;
    let (mf, outcome) = load_model(&mut run, model)?;
    let split = match scans {
        Some(p) => load_split(&mut run, p, true)?,
        None => config_split(&mut run, &cfg, Split::Test, true)?,
    };
    let rows = evaluate_scans(&mf.extractor, outcome.best(), &split.scans, cfg.train.binarize_threshold)?;
    run.write_text("metrics.csv", &metric_table(&rows))?;
    run.finish()
}

fn morph(g: &GlobalArgs, masks: &[PathBuf]) -> Result<RunManifest> {
    let options: MorphometryOptions = match &g.config {
        Some(p) => read_config(p)?,
        None => MorphometryOptions::default(),
    };
    if !(options.prune_spur_mm >= 0.0) {
        return Err(Error::Config("prune_spur_mm must be non-negative".into()));
    }
    let mut run = Run::new(&out_dir(g, None)?, "morph", g.seed.unwrap_or(0))?;
    run.echo_config(&options)?;
    let mut loaded = Vec::new();
    for p in masks {
        let id = header_stem(p);
        if loaded.iter().any(|(other, _)| *other == id) {
            return Err(Error::Config(format!("two masks share the id '{id}'")));
        }
        loaded.push((id, run.load_mask(p)?));
    }
    let analyses = loaded
        .par_iter()
        .map(|(_, m)| analyze(m, &options))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for ((id, _), a) in loaded.iter().zip(&analyses) {
        run.write_text(&format!("graphs/{id}.csv"), &graph_csv(&a.graph))?;
        log::info!(
            "{id}: {} segments, {} endpoints, {} branchpoints",
            a.report.n_segments,
            a.report.n_endpoints,
            a.report.n_branchpoints
        );
        rows.push((id.clone(), a.report.clone()));
    }
    run.write_text("morphometry.csv", &report_csv(&rows))?;
    run.finish()
}

fn csv_columns(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    Ok(reader
        .headers()
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?
        .iter()
        .filter(|h| *h != "scan_id")
        .map(str::to_string)
        .collect())
}

fn stats(g: &GlobalArgs, groups: &[(String, PathBuf)], alpha: Option<f64>) -> Result<RunManifest> {
    let mut cfg: StatsConfig = match &g.config {
        Some(p) => read_config(p)?,
        None => StatsConfig::default(),
    };
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if groups.len() < 2 {
        return Err(Error::Config("stats needs at least two --group arguments".into()));
    }
    let mut run = Run::new(&out_dir(g, None)?, "stats", g.seed.unwrap_or(0))?;
    run.echo_config(&cfg)?;
    let mut tables = Vec::new();
    for (label, path) in groups {
        if !path.is_file() {
            return Err(Error::Config(format!("group {label}: {} does not exist", path.display())));
        }
        run.record_input(path)?;
        tables.push((label.clone(), read_group_csv(path)?));
    }
    let columns = csv_columns(&groups[0].1)?;
    let rows = compare_groups(&tables, cfg.alpha, &columns);
    run.write_text("stats.csv", &stats_csv(&rows))?;
    run.finish()
}

#[derive(Serialize)]
struct IngestConfig<'a> {
    points: &'a Path,
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    name: &'a str,
}

fn ingest_vessel12(
    g: &GlobalArgs,
    points: &Path,
    reference: Option<&Path>,
    dims: Option<[usize; 3]>,
    spacing: Option<[f64; 3]>,
    name: &str,
) -> Result<RunManifest> {
    if !points.is_file() {
        return Err(Error::Config(format!("points file not found: {}", points.display())));
    }
    let (dims, spacing_mm) = match (reference, dims) {
        (Some(r), None) => {
            let (header, _) = volume_paths(r);
            if !header.is_file() {
                return Err(Error::Config(format!("reference volume not found: {}", header.display())));
            }
            let h = read_header(&header)?;
            (h.dims, spacing.unwrap_or(h.spacing_mm))
        }
        (None, Some(d)) => (d, spacing.unwrap_or([1.0; 3])),
        _ => return Err(Error::Config("give exactly one of --reference or --dims".into())),
    };
    let sp = Spacing::from_array(spacing_mm)?;
    let mut run = Run::new(&out_dir(g, None)?, "ingest-vessel12", g.seed.unwrap_or(0))?;
    run.echo_config(&IngestConfig {
        points,
        dims,
        spacing_mm,
        name,
    })?;
    if let Some(r) = reference {
        run.record_input(&volume_paths(r).0)?;
    }
    run.record_input(points)?;
    let pts = load_vessel12_points(points, dims)?;
    let mask = points_to_mask(&pts, dims, sp);
    log::info!(
        "{} points, {} labeled vessel",
        pts.len(),
        pts.iter().filter(|p| p.vessel).count()
    );
    run.write_volume(&format!("{name}.vvol.json"), &mask)?;
    run.finish()
}
