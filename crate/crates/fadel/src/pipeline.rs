//! Feature extraction, training, scoring, analysis and ablation over an
//! on-disk corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use fadel_core::features::FeatureExtractor;
use fadel_core::metrics::{aggregate_seeds, per_attack_analysis, score_histogram, AttackAnalysis, SeedAggregate};
use fadel_core::train::{train, EpochLog};
use fadel_core::{
    AsvOperatingPoint, Dataset, Detector, EvidenceActivation, FeatureConfig, Head, Key, Matrix, MetricsReport,
    ScoreSet, Split, TrainConfig, TrialRecord,
};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::ExperimentConfig;
use crate::corpus::Corpus;
use crate::error::{Error, IoContext, Result};
use crate::{protocol, wav};

const FEATURE_FORMAT: &str = "fadel-features";
const FEATURE_VERSION: u32 = 1;

/// Protocol rows of one split with their feature vectors, in protocol order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub trials: Vec<TrialRecord>,
    pub rows: Vec<Vec<f64>>,
}

impl SplitData {
    pub fn dataset(&self) -> Result<Dataset> {
        let labels = self.trials.iter().map(|t| t.key().class_index()).collect();
        Ok(Dataset::new(Matrix::from_rows(&self.rows), labels)?)
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureCache {
    format: String,
    version: u32,
    fingerprint: String,
    config: FeatureConfig,
    utterances: Vec<String>,
    rows: Vec<Vec<f64>>,
}

/// Feature vectors for a list of WAV files; work is spread over threads, the
/// result order follows `paths`.
pub fn extract_files(paths: &[PathBuf], config: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    let extractor = FeatureExtractor::new(*config)?;
    let expected_rate = config.sample_rate;
    let n = thread::available_parallelism().map_or(1, |n| n.get()).min(paths.len()).max(1);
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; paths.len()];
    thread::scope(|s| -> Result<()> {
        let extractor = &extractor;
        let handles: Vec<_> = (0..n)
            .map(|w| {
                s.spawn(move || -> Result<Vec<(usize, Vec<f64>)>> {
                    let mut out = Vec::new();
                    for (i, p) in paths.iter().enumerate().skip(w).step_by(n) {
                        let (audio, rate) = wav::read(p)?;
                        if f64::from(rate) != expected_rate {
                            return Err(Error::input(
                                p,
                                format!("sample rate {rate}, features expect {expected_rate}"),
                            ));
                        }
                        let f = extractor.extract(&audio).map_err(|e| Error::input(p, e))?;
                        out.push((i, f));
                    }
                    Ok(out)
                })
            })
            .collect();
        for h in handles {
            for (i, f) in h.join().expect("feature worker panicked")? {
                rows[i] = Some(f);
            }
        }
        Ok(())
    })?;
    Ok(rows.into_iter().map(|r| r.expect("every row extracted")).collect())
}

/// Loads a split, reusing `cache_dir/{split}.json` when it matches the corpus
/// fingerprint and feature config.
pub fn load_split(
    corpus: &Corpus,
    split: Split,
    config: &FeatureConfig,
    cache_dir: Option<&Path>,
) -> Result<SplitData> {
    let trials = corpus.trials(split)?;
    let fingerprint = corpus.fingerprint()?;
    let utterances: Vec<String> = trials.iter().map(|t| t.utterance.clone()).collect();
    let cache_path = cache_dir.map(|d| d.join(format!("{}.json", split.name())));
    if let Some(path) = cache_path.as_deref().filter(|p| p.is_file()) {
        let text = fs::read_to_string(path).at(path)?;
        if let Ok(c) = serde_json::from_str::<FeatureCache>(&text) {
            if c.format == FEATURE_FORMAT
                && c.version == FEATURE_VERSION
                && c.fingerprint == fingerprint
                && c.config == *config
                && c.utterances == utterances
            {
                return Ok(SplitData { trials, rows: c.rows });
            }
        }
    }
    let paths: Vec<PathBuf> = trials.iter().map(|t| corpus.wav_path(split, &t.utterance)).collect();
    let rows = extract_files(&paths, config)?;
    if let Some(path) = cache_path {
        let cache = FeatureCache {
            format: FEATURE_FORMAT.into(),
            version: FEATURE_VERSION,
            fingerprint,
            config: *config,
            utterances,
            rows,
        };
        write_atomic(&path, serde_json::to_string(&cache).expect("cache serializes").as_bytes())?;
        return Ok(SplitData { trials, rows: cache.rows });
    }
    Ok(SplitData { trials, rows })
}

/// Train, dev and eval features of a corpus.
#[derive(Debug, Clone)]
pub struct CorpusFeatures {
    pub fingerprint: String,
    pub unseen_attacks: Vec<String>,
    pub train: SplitData,
    pub dev: SplitData,
    pub eval: SplitData,
}

impl CorpusFeatures {
    pub fn load(corpus: &Corpus, config: &FeatureConfig, cache_dir: Option<&Path>) -> Result<Self> {
        Ok(Self {
            fingerprint: corpus.fingerprint()?,
            unseen_attacks: corpus.manifest.unseen_attacks(),
            train: load_split(corpus, Split::Train, config, cache_dir)?,
            dev: load_split(corpus, Split::Dev, config, cache_dir)?,
            eval: load_split(corpus, Split::Eval, config, cache_dir)?,
        })
    }
}

/// Scores trials with a detector; FADEL heads also fill in uncertainty.
pub fn score_trials(detector: &Detector, data: &SplitData) -> Result<Vec<TrialRecord>> {
    if data.rows.first().is_some_and(|r| r.len() != detector.input_dim()) {
        return Err(Error::Input(format!(
            "feature dimension {} does not match checkpoint input {}",
            data.rows[0].len(),
            detector.input_dim()
        )));
    }
    let preds = detector.predict_rows(&data.rows)?;
    Ok(data
        .trials
        .iter()
        .zip(preds)
        .map(|(t, p)| {
            let r = t.clone().with_score(p.score());
            match p.uncertainty {
                Some(u) => r.with_uncertainty(u),
                None => r,
            }
        })
        .collect())
}

pub fn seed_dir(output: &Path, seed: u64) -> PathBuf {
    output.join(format!("seed-{seed}"))
}

pub fn format_log(log: &[EpochLog]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in log {
        w.serialize(row).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("UTF-8")
}

fn check_finite_log(seed: u64, log: &[EpochLog]) -> Result<()> {
    if let Some(e) = log.iter().find(|e| !(e.train_loss.is_finite() && e.dev_loss.is_finite())) {
        return Err(Error::Numeric(format!("seed {seed}: non-finite loss at epoch {}", e.epoch)));
    }
    Ok(())
}

/// Result of training one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

pub fn train_seed(
    features: &CorpusFeatures,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<SeedRun> {
    let outcome = train(train_config, seed, &features.train.dataset()?, &features.dev.dataset()?)?;
    check_finite_log(seed, &outcome.log)?;
    let checkpoint = Checkpoint::new(
        &outcome.detector,
        *feature_config,
        train_config.clone(),
        seed,
        outcome.best_epoch,
        features.fingerprint.clone(),
    );
    Ok(SeedRun { seed, checkpoint, log: outcome.log })
}

/// Writes `checkpoint.json` and `train_log.csv` under `dir`.
pub fn save_run(run: &SeedRun, dir: &Path) -> Result<()> {
    run.checkpoint.save(&dir.join("checkpoint.json"))?;
    write_atomic(&dir.join("train_log.csv"), format_log(&run.log).as_bytes())
}

/// Trains every configured seed and writes one checkpoint and log per seed.
pub fn run_train(config: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    let corpus = Corpus::open(&config.corpus)?;
    let features = CorpusFeatures::load(&corpus, &config.features, Some(&config.output.join("features")))?;
    config
        .seeds
        .iter()
        .map(|&seed| {
            let run = train_seed(&features, &config.features, &config.train, seed)?;
            save_run(&run, &seed_dir(&config.output, seed))?;
            Ok(run)
        })
        .collect()
}

pub fn format_report(r: &MetricsReport, head: Option<Head>) -> String {
    let mut s = String::new();
    if let Some(h) = head {
        s += &format!("system      {}\n", h.label());
    }
    s += &format!("EER         {:.4} %  (threshold {})\n", r.eer, r.eer_threshold);
    s += &format!("min t-DCF   {:.6}  (threshold {})\n", r.min_tdcf, r.tdcf_threshold);
    s += "\nattack  trials  EER(%)    mean_u\n";
    for row in &r.per_attack {
        let u = row.mean_uncertainty.map_or("-".into(), |u| format!("{u:.6}"));
        s += &format!("{:<7} {:>6}  {:>8.4}  {u}\n", row.attack, row.trials, row.eer);
    }
    if let Some(c) = &r.correlation {
        let f = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{v:.4}"));
        s += &format!("\npearson(u, EER)  {}\nspearman(u, EER) {}\n", f(c.pearson), f(c.spearman));
    }
    s
}

/// Score file, `report.json` and `report.txt` for one scored trial list.
pub fn write_evaluation(dir: &Path, trials: &[TrialRecord], report: &MetricsReport, head: Option<Head>) -> Result<()> {
    write_atomic(&dir.join("scores.txt"), protocol::format_scores(trials).as_bytes())?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    write_atomic(&dir.join("report.json"), json.as_bytes())?;
    write_atomic(&dir.join("report.txt"), format_report(report, head).as_bytes())
}

pub fn evaluate_trials(
    trials: Vec<TrialRecord>,
    asv: &AsvOperatingPoint,
    bins: usize,
) -> Result<(ScoreSet, MetricsReport)> {
    let set = ScoreSet::new(trials)?;
    let report = MetricsReport::compute(&set, asv, bins)?;
    Ok((set, report))
}

/// Scores a protocol with a checkpoint. `audio_dir` holds `{utt}.wav`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    protocol_path: &Path,
    audio_dir: &Path,
    out: &Path,
    asv: &AsvOperatingPoint,
    bins: usize,
) -> Result<MetricsReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let detector = ck.detector()?;
    let trials = protocol::read_protocol(protocol_path)?;
    let paths: Vec<PathBuf> = trials.iter().map(|t| audio_dir.join(format!("{}.wav", t.utterance))).collect();
    let rows = extract_files(&paths, &ck.features)?;
    let scored = score_trials(&detector, &SplitData { trials, rows })?;
    let (_, report) = evaluate_trials(scored.clone(), asv, bins)?;
    write_evaluation(out, &scored, &report, Some(ck.head))?;
    Ok(report)
}

/// Evaluates every seed's checkpoint of an experiment on the eval split and
/// writes the avg/best aggregate.
pub fn run_evaluate(config: &ExperimentConfig) -> Result<(Vec<MetricsReport>, SeedAggregate)> {
    let corpus = Corpus::open(&config.corpus)?;
    let fingerprint = corpus.fingerprint()?;
    let cache = config.output.join("features");
    let mut reports = Vec::new();
    let mut eval: Option<SplitData> = None;
    let mut head = None;
    for &seed in &config.seeds {
        let dir = seed_dir(&config.output, seed);
        let ck = Checkpoint::load(&dir.join("checkpoint.json"))?;
        if ck.corpus_fingerprint != fingerprint {
            return Err(Error::Input(format!("seed {seed}: checkpoint was trained on a different corpus")));
        }
        if eval.is_none() {
            eval = Some(load_split(&corpus, Split::Eval, &ck.features, Some(&cache))?);
        }
        let scored = score_trials(&ck.detector()?, eval.as_ref().unwrap())?;
        let (_, report) = evaluate_trials(scored.clone(), &config.asv, config.bins)?;
        write_evaluation(&dir, &scored, &report, Some(ck.head))?;
        head = Some(ck.head);
        reports.push(report);
    }
    let agg = aggregate_seeds(&reports)?;
    write_aggregate(&config.output, &config.seeds, &reports, &agg, head)?;
    Ok((reports, agg))
}

pub fn format_aggregate(seeds: &[u64], reports: &[MetricsReport], agg: &SeedAggregate, head: Option<Head>) -> String {
    let mut s = String::new();
    if let Some(h) = head {
        s += &format!("system {}\n", h.label());
    }
    s += "seed    EER(%)   min t-DCF\n";
    for (seed, r) in seeds.iter().zip(reports) {
        s += &format!("{seed:<6} {:>8.4}   {:.6}\n", r.eer, r.min_tdcf);
    }
    s += &format!("avg    {:>8.4}   {:.6}\n", agg.eer.avg, agg.min_tdcf.avg);
    s += &format!("best   {:>8.4}   {:.6}\n", agg.eer.best, agg.min_tdcf.best);
    s
}

pub fn write_aggregate(
    dir: &Path,
    seeds: &[u64],
    reports: &[MetricsReport],
    agg: &SeedAggregate,
    head: Option<Head>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "eer", "min_tdcf"]).expect("in-memory CSV");
    for (seed, r) in seeds.iter().zip(reports) {
        w.write_record([seed.to_string(), r.eer.to_string(), r.min_tdcf.to_string()]).expect("in-memory CSV");
    }
    for (name, e, t) in [("avg", agg.eer.avg, agg.min_tdcf.avg), ("best", agg.eer.best, agg.min_tdcf.best)] {
        w.write_record([name.to_string(), e.to_string(), t.to_string()]).expect("in-memory CSV");
    }
    write_atomic(&dir.join("aggregate.csv"), &w.into_inner().expect("in-memory CSV"))?;
    write_atomic(&dir.join("aggregate.txt"), format_aggregate(seeds, reports, agg, head).as_bytes())
}

/// Aggregates `report.json` files produced by `evaluate`.
pub fn aggregate_reports(paths: &[PathBuf], out: &Path) -> Result<SeedAggregate> {
    let reports: Vec<MetricsReport> = paths
        .iter()
        .map(|p| serde_json::from_str(&fs::read_to_string(p).at(p)?).map_err(|e| Error::input(p, e)))
        .collect::<Result<_>>()?;
    let agg = aggregate_seeds(&reports)?;
    let ids: Vec<u64> = (1..=reports.len() as u64).collect();
    write_aggregate(out, &ids, &reports, &agg, None)?;
    Ok(agg)
}

/// A named score file for `analyze`.
#[derive(Debug, Clone)]
pub struct System {
    pub name: String,
    pub trials: Vec<TrialRecord>,
}

impl System {
    pub fn load(path: &Path, name: Option<String>) -> Result<Self> {
        let name = name.unwrap_or_else(|| {
            let parent = path.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned());
            parent.unwrap_or_else(|| path.display().to_string())
        });
        Ok(Self { name, trials: protocol::read_scores(path)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemAnalysis {
    pub name: String,
    pub histogram_bonafide: Vec<u64>,
    pub histogram_spoof: Vec<u64>,
    /// `(attack, counts)` for every spoof attack, sorted by id.
    pub histogram_by_attack: Vec<(String, Vec<u64>)>,
    pub attacks: Option<AttackAnalysis>,
}

pub fn analyze_system(system: &System, bins: usize, require_uncertainty: bool) -> Result<SystemAnalysis> {
    let set = ScoreSet::new(system.trials.clone())?;
    let has_u = set.trials().iter().filter(|t| t.key() == Key::Spoof).all(|t| t.uncertainty.is_some());
    if require_uncertainty && !has_u {
        return Err(Error::Input(format!(
            "{}: uncertainty analysis is unsupported for scores without an uncertainty column (baseline head)",
            system.name
        )));
    }
    let mut by_attack = Vec::new();
    for attack in set.attack_ids() {
        let scores: Vec<f64> = set
            .trials()
            .iter()
            .filter(|t| t.key() == Key::Spoof && t.attack() == attack)
            .map(|t| t.score.expect("scored"))
            .collect();
        by_attack.push((attack, fadel_core::metrics::histogram(&scores, bins)?));
    }
    Ok(SystemAnalysis {
        name: system.name.clone(),
        histogram_bonafide: score_histogram(&set, Some(Key::Bonafide), bins)?,
        histogram_spoof: score_histogram(&set, Some(Key::Spoof), bins)?,
        histogram_by_attack: by_attack,
        attacks: if has_u { Some(per_attack_analysis(&set)?) } else { None },
    })
}

fn edges(k: usize, bins: usize) -> (String, String) {
    ((k as f64 / bins as f64).to_string(), ((k + 1) as f64 / bins as f64).to_string())
}

/// Writes `histogram.csv` (joint, with a system column), `histogram_by_attack.csv`,
/// and per uncertainty-carrying system `scatter[_NAME].csv` and `correlation.txt`.
pub fn write_analysis(out: &Path, analyses: &[SystemAnalysis], bins: usize) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Input(e.to_string());
    let mut h = csv::Writer::from_writer(Vec::new());
    h.write_record(["system", "bin_lo", "bin_hi", "bonafide", "spoof"]).map_err(csv_err)?;
    let mut ha = csv::Writer::from_writer(Vec::new());
    ha.write_record(["system", "attack_id", "bin_lo", "bin_hi", "count"]).map_err(csv_err)?;
    let mut corr = String::new();
    for a in analyses {
        for k in 0..bins {
            let (lo, hi) = edges(k, bins);
            let row = [a.name.clone(), lo, hi, a.histogram_bonafide[k].to_string(), a.histogram_spoof[k].to_string()];
            h.write_record(row).map_err(csv_err)?;
        }
        for (attack, counts) in &a.histogram_by_attack {
            for (k, c) in counts.iter().enumerate() {
                let (lo, hi) = edges(k, bins);
                ha.write_record([a.name.clone(), attack.clone(), lo, hi, c.to_string()]).map_err(csv_err)?;
            }
        }
        if let Some(att) = &a.attacks {
            let mut s = csv::Writer::from_writer(Vec::new());
            s.write_record(["attack_id", "mean_uncertainty", "eer"]).map_err(csv_err)?;
            for r in &att.rows {
                let u = r.mean_uncertainty.expect("analysis requires uncertainty");
                s.write_record([r.attack.clone(), u.to_string(), r.eer.to_string()]).map_err(csv_err)?;
            }
            let name = if analyses.len() == 1 { "scatter.csv".to_string() } else { format!("scatter_{}.csv", a.name) };
            write_atomic(&out.join(name), &s.into_inner().expect("in-memory CSV"))?;
            let f = |v: Option<f64>| v.map_or("undefined".into(), |v| v.to_string());
            corr += &format!(
                "{} pearson {} spearman {}\n",
                a.name,
                f(att.correlation.pearson),
                f(att.correlation.spearman)
            );
        }
    }
    write_atomic(&out.join("histogram.csv"), &h.into_inner().expect("in-memory CSV"))?;
    write_atomic(&out.join("histogram_by_attack.csv"), &ha.into_inner().expect("in-memory CSV"))?;
    if !corr.is_empty() {
        write_atomic(&out.join("correlation.txt"), corr.as_bytes())?;
    }
    Ok(())
}

pub fn run_analyze(
    systems: &[System],
    bins: usize,
    require_uncertainty: bool,
    out: &Path,
) -> Result<Vec<SystemAnalysis>> {
    if systems.is_empty() {
        return Err(Error::Config("analyze needs at least one score file".into()));
    }
    let mut names: Vec<&str> = systems.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != systems.len() {
        return Err(Error::Config("score files need distinct system names (use --name)".into()));
    }
    let analyses = systems.iter().map(|s| analyze_system(s, bins, require_uncertainty)).collect::<Result<Vec<_>>>()?;
    write_analysis(out, &analyses, bins)?;
    Ok(analyses)
}

/// Reporting order of the ablation table.
pub const ABLATION_ORDER: [EvidenceActivation; 3] =
    [EvidenceActivation::Relu, EvidenceActivation::Exponential, EvidenceActivation::Softplus];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub activation: EvidenceActivation,
    pub reports: Vec<MetricsReport>,
    pub aggregate: SeedAggregate,
}

pub fn format_ablation(seeds: &[u64], rows: &[AblationRow]) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let mut s = format!("FADEL activation ablation, seeds {}\n", seeds.join(","));
    s += "activation    EER avg   EER best   t-DCF avg   t-DCF best\n";
    for r in rows {
        let a = &r.aggregate;
        s += &format!(
            "{:<12} {:>8.4}  {:>9.4}   {:>9.6}   {:>10.6}\n",
            r.activation.name(),
            a.eer.avg,
            a.eer.best,
            a.min_tdcf.avg,
            a.min_tdcf.best
        );
    }
    s
}

/// Trains and evaluates the FADEL head for every activation and seed.
pub fn run_ablation(config: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let corpus = Corpus::open(&config.corpus)?;
    let features = CorpusFeatures::load(&corpus, &config.features, Some(&config.output.join("features")))?;
    let mut rows = Vec::new();
    for act in ABLATION_ORDER {
        let train_config = TrainConfig { head: Head::Evidential(act), ..config.train.clone() };
        let mut reports = Vec::new();
        for &seed in &config.seeds {
            let run = train_seed(&features, &config.features, &train_config, seed)?;
            let dir = config.output.join("ablation").join(act.name()).join(format!("seed-{seed}"));
            save_run(&run, &dir)?;
            let scored = score_trials(&run.checkpoint.detector()?, &features.eval)?;
            let (_, report) = evaluate_trials(scored.clone(), &config.asv, config.bins)?;
            write_evaluation(&dir, &scored, &report, Some(train_config.head))?;
            reports.push(report);
        }
        let aggregate = aggregate_seeds(&reports)?;
        rows.push(AblationRow { activation: act, reports, aggregate });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["activation", "eer_avg", "eer_best", "min_tdcf_avg", "min_tdcf_best"]).expect("in-memory CSV");
    for r in &rows {
        let a = &r.aggregate;
        w.write_record([
            r.activation.name().to_string(),
            a.eer.avg.to_string(),
            a.eer.best.to_string(),
            a.min_tdcf.avg.to_string(),
            a.min_tdcf.best.to_string(),
        ])
        .expect("in-memory CSV");
    }
    write_atomic(&config.output.join("ablation.csv"), &w.into_inner().expect("in-memory CSV"))?;
    write_atomic(&config.output.join("ablation.txt"), format_ablation(&config.seeds, &rows).as_bytes())?;
    Ok(rows)
}
