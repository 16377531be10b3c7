//! The full self-training loop on a synthetic corpus: teacher, two rounds of
//! reliable pseudo-label selection with retraining, then a re-initialized
//! final model.
//!
//! cargo run --release --example self_training -- [seed] [config.json]

use vesselforge::cli::PipelineConfig;
use vesselforge::selftrain::{run_pipeline, Corpus};

fn main() -> vesselforge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VESSELFORGE_LOG", "info")).init();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/phantom_selftrain.json").into());
    let mut cfg = PipelineConfig::load(path.as_ref())?;
    cfg.seed = seed;
    cfg.validate()?;
    let inline = cfg.phantom_corpus.clone().expect("config with an inline phantom corpus");
    let corpus = Corpus::from_phantoms(&inline.phantom, inline.sizes.as_array(), seed)?;

    let out = run_pipeline(&corpus, &cfg.selftrain())?;
    let r = &out.report;
    println!("stage         pseudo  selected   dsc     precision  sensitivity");
    for s in std::iter::once(&r.baseline).chain(&r.iterations).chain(r.final_stage.as_ref()) {
        let sel = s.selection.as_ref().map_or(0, |x| x.selected.len());
        println!(
            "{:<12}  {:>6}  {:>8}   {:.4}  {:.4}     {:.4}",
            s.stage, s.n_pseudo, sel, s.test.dsc, s.test.precision, s.test.sensitivity
        );
    }
    let (b, f) = (&r.baseline.test, r.final_metrics());
    println!("precision {:+.4}, dsc {:+.4} vs baseline", f.precision - b.precision, f.dsc - b.dsc);
    Ok(())
}
