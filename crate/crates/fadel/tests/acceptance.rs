//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always show up in
//! `cargo test` output.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use fadel::config::ExperimentConfig;
use fadel::corpus::{self, Corpus};
use fadel::pipeline::{self, CorpusFeatures, SeedRun, ABLATION_ORDER};
use fadel_core::evidential::{
    dirichlet_mean, edl_loss, edl_loss_grad, evidence_to_alpha, head_loss, uncertainty, wce_loss,
};
use fadel_core::metrics::{bin_index, eer_from_scores, min_tdcf_from_scores, per_attack_analysis};
use fadel_core::specfun::{digamma, sample_dirichlet, trigamma};
use fadel_core::{
    AsvOperatingPoint, ClassWeights, CorpusManifest, DirichletParams, EvidenceActivation, Head, Key, Matrix, MlpModel,
    RngStream, ScoreSet, TrainConfig, TrialRecord,
};

const SEEDS: [u64; 3] = [1, 2, 3];

struct Line {
    id: u8,
    pass: bool,
    detail: String,
}

fn line(id: u8, pass: bool, detail: impl Into<String>) -> Line {
    let l = Line { id, pass, detail: detail.into() };
    println!("criterion {} {} {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.detail);
    l
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn loss_oracle() -> Line {
    let start = Instant::now();
    let mut rng = RngStream::new(0x0ac1);
    let n = 200_000;
    let mut inside = 0;
    for _ in 0..100 {
        let alpha = [rng.uniform(1.0, 50.0), rng.uniform(1.0, 50.0)];
        let t = rng.below(2) as usize;
        let mut w = [rng.uniform(0.5, 10.0), rng.uniform(0.5, 10.0)];
        w[1 - t] = 1.0;
        let exact =
            edl_loss(&DirichletParams::new(alpha.to_vec()).unwrap(), t, &ClassWeights::new(w.to_vec()).unwrap())
                .unwrap();
        let (mut s, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let v = -w[t] * sample_dirichlet(&alpha, &mut rng).unwrap()[t].ln();
            s += v;
            sq += v * v;
        }
        let mean = s / n as f64;
        let se = ((sq / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
        if (exact - mean).abs() <= 3.0 * se {
            inside += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    line(1, inside >= 97 && secs < 60.0, format!("{inside}/100 within 3 SE, {secs:.1} s"))
}

fn batch_loss(model: &MlpModel, x: &Matrix, labels: &[usize], head: Head, w: &ClassWeights) -> f64 {
    let logits = model.infer(x).unwrap();
    let total: f64 =
        labels.iter().enumerate().map(|(i, &t)| head_loss(head, logits.row(i), t, w, 0.0).unwrap().0).sum();
    total / labels.len() as f64
}

fn gradients() -> Line {
    let start = Instant::now();
    let mut rng = RngStream::new(0x9ad);
    let w = ClassWeights::default();
    let (mut worst_head, mut worst_e2e): (f64, f64) = (0.0, 0.0);
    let fd = |f: &dyn Fn(&[f64]) -> f64, z: &[f64], k: usize| {
        let h = 1e-5;
        let (mut a, mut b) = (z.to_vec(), z.to_vec());
        a[k] += h;
        b[k] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    };
    for case in 0..100 {
        let act = EvidenceActivation::ALL[case % 3];
        let t = case % 2;

        let mut z = [rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)];
        if act == EvidenceActivation::Relu {
            // Central differences are meaningless across the kink.
            for v in &mut z {
                if v.abs() < 1e-3 {
                    *v += 0.5;
                }
            }
        }
        let g_wce = wce_loss(&z, t, &w).unwrap().1;
        let g_edl = edl_loss_grad(&z, act, t, &w).unwrap();
        let f_wce = |z: &[f64]| wce_loss(z, t, &w).unwrap().0;
        let f_edl = |z: &[f64]| edl_loss(&evidence_to_alpha(z, act).unwrap(), t, &w).unwrap();
        for k in 0..2 {
            worst_head = worst_head.max(rel_err(g_wce[k], fd(&f_wce, &z, k)));
            worst_head = worst_head.max(rel_err(g_edl[k], fd(&f_edl, &z, k)));
        }

        let head = if case % 4 == 3 { Head::Softmax } else { Head::Evidential(act) };
        let mut model = MlpModel::init(&[10, 8, 8, 2], &mut rng).unwrap();
        let mut p = model.params();
        for v in p.iter_mut().filter(|v| **v == 0.0) {
            *v = rng.uniform(-0.3, 0.3);
        }
        model.set_params(&p).unwrap();
        let x = Matrix::from_vec(4, 10, (0..40).map(|_| rng.normal()).collect());
        let labels = [0, 1, t, 1 - t];
        let cache = model.forward(&x).unwrap();
        let mut up = Matrix::zeros(4, 2);
        for (i, &y) in labels.iter().enumerate() {
            let g = head_loss(head, cache.logits().row(i), y, &w, 0.0).unwrap().1;
            for (u, v) in up.row_mut(i).iter_mut().zip(g) {
                *u = v / 4.0;
            }
        }
        let g = model.backward(&cache, &up).unwrap().flatten();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut m = model.clone();
            let mut q = p.clone();
            q[i] = p[i] + h;
            m.set_params(&q).unwrap();
            let hi = batch_loss(&m, &x, &labels, head, &w);
            q[i] = p[i] - h;
            m.set_params(&q).unwrap();
            let lo = batch_loss(&m, &x, &labels, head, &w);
            let fd = (hi - lo) / (2.0 * h);
            if g[i].abs().max(fd.abs()) < 1e-7 {
                continue;
            }
            worst_e2e = worst_e2e.max(rel_err(g[i], fd));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_head <= 1e-5 && worst_e2e <= 1e-4 && secs < 60.0;
    line(2, pass, format!("head max rel err {worst_head:.2e}, end-to-end {worst_e2e:.2e}, {secs:.1} s"))
}

fn special_functions() -> Line {
    let n = 10_000;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let x = 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64);
        let r = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
        worst = worst.max(r.abs() / (1.0 / x).max(1.0));
    }
    let tri = (trigamma(1.0).unwrap() - std::f64::consts::PI.powi(2) / 6.0).abs();
    let mut rng = RngStream::new(0x5fe);
    let mut worst_mean: f64 = 0.0;
    for _ in 0..10 {
        let k = 2 + rng.below(4) as usize;
        let alpha: Vec<f64> = (0..k).map(|_| rng.uniform(0.5, 20.0)).collect();
        let s: f64 = alpha.iter().sum();
        let mut sum = vec![0.0; k];
        for _ in 0..100_000 {
            for (acc, p) in sum.iter_mut().zip(sample_dirichlet(&alpha, &mut rng).unwrap()) {
                *acc += p;
            }
        }
        for (acc, a) in sum.iter().zip(&alpha) {
            worst_mean = worst_mean.max((acc / 1e5 - a / s).abs());
        }
    }
    let pass = worst <= 1e-11 && tri <= 1e-10 && worst_mean <= 0.005;
    line(3, pass, format!("recurrence {worst:.2e}, trigamma(1) err {tri:.2e}, Dirichlet mean err {worst_mean:.4}"))
}

/// Thresholds at -inf and at every observed score; accept when strictly above.
fn brute_force(bona: &[f64], spoof: &[f64], asv: &AsvOperatingPoint) -> (f64, f64) {
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(bona.iter().chain(spoof));
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let c = asv.constants().unwrap();
    let (mut gap, mut eer, mut tdcf) = (f64::INFINITY, f64::NAN, f64::INFINITY);
    for &t in &thresholds {
        let p_miss = bona.iter().filter(|&&s| s <= t).count() as f64 / bona.len() as f64;
        let p_fa = spoof.iter().filter(|&&s| s > t).count() as f64 / spoof.len() as f64;
        if (p_miss - p_fa).abs() < gap {
            gap = (p_miss - p_fa).abs();
            eer = 100.0 * (p_miss + p_fa) / 2.0;
        }
        tdcf = tdcf.min((c.c0 + c.c1 * p_miss + c.c2 * p_fa) / (c.c0 + c.c1.min(c.c2)));
    }
    (eer, tdcf.min(1.0))
}

fn metric_oracles() -> Line {
    let asv = AsvOperatingPoint::default();
    let warps: [fn(f64) -> f64; 3] = [|x| 3.0 * x - 7.0, |x| (4.0 * x).exp(), |x| x.powi(3) + x];
    let mut rng = RngStream::new(0x3e7);
    let (mut worst, mut warp_ok, mut range_ok) = (0.0f64, true, true);
    for _ in 0..1000 {
        let n = 2 + rng.below(49) as usize;
        let nb = 1 + rng.below(n as u64 - 1) as usize;
        let levels = [4.0, 20.0, 1e6][rng.below(3) as usize];
        let shift = rng.uniform(-0.3, 0.3);
        let mut draw = |o: f64| ((rng.next_f64() + o).clamp(0.0, 1.0) * levels).round() / levels;
        let bona: Vec<f64> = (0..nb).map(|_| draw(shift)).collect();
        let spoof: Vec<f64> = (0..n - nb).map(|_| draw(-shift)).collect();
        let (eer, tdcf) = brute_force(&bona, &spoof, &asv);
        let got_eer = eer_from_scores(&bona, &spoof).unwrap().eer;
        let got_tdcf = min_tdcf_from_scores(&bona, &spoof, &asv).unwrap().min_tdcf;
        worst = worst.max((got_eer - eer).abs()).max((got_tdcf - tdcf).abs());
        range_ok &= (0.0..=1.0).contains(&got_tdcf);
        for warp in warps {
            let b: Vec<f64> = bona.iter().map(|&x| warp(x)).collect();
            let s: Vec<f64> = spoof.iter().map(|&x| warp(x)).collect();
            warp_ok &= eer_from_scores(&b, &s).unwrap().eer == got_eer;
            warp_ok &= min_tdcf_from_scores(&b, &s, &asv).unwrap().min_tdcf == got_tdcf;
        }
    }
    line(
        4,
        worst <= 1e-12 && warp_ok && range_ok,
        format!("max |diff| vs brute force {worst:.1e}, warp-invariant {warp_ok}, t-DCF in [0,1] {range_ok}"),
    )
}

fn evidential_identities() -> Line {
    let unit = uncertainty(&DirichletParams::new(vec![1.0, 1.0]).unwrap()) == 1.0;
    let mut rng = RngStream::new(0xe1d);
    let (mut worst_u, mut worst_sum, mut decreasing) = (0.0f64, 0.0f64, true);
    for _ in 0..1000 {
        let k = 2 + rng.below(5) as usize;
        let alpha: Vec<f64> = (0..k).map(|_| rng.uniform(1.0, 1e3)).collect();
        let s: f64 = alpha.iter().sum();
        let p = DirichletParams::new(alpha.clone()).unwrap();
        let u = uncertainty(&p);
        worst_u = worst_u.max(rel_err(u, k as f64 / s));
        let m = dirichlet_mean(&p);
        worst_sum = worst_sum.max((m.iter().sum::<f64>() - 1.0).abs());
        decreasing &= m.iter().all(|&v| v > 0.0 && v < 1.0);
        for j in 0..k {
            let mut more = alpha.clone();
            more[j] += rng.uniform(1e-3, 100.0);
            decreasing &= uncertainty(&DirichletParams::new(more).unwrap()) < u;
        }
    }
    line(
        5,
        unit && worst_u <= 1e-14 && worst_sum <= 1e-9 && decreasing,
        format!(
            "u([1,1])=1 {unit}, u vs K/S rel err {worst_u:.1e}, simplex err {worst_sum:.1e}, monotone {decreasing}"
        ),
    )
}

struct HeadRuns {
    runs: Vec<SeedRun>,
    eval: Vec<Vec<TrialRecord>>,
    train_secs: Vec<f64>,
}

fn train_head(features: &CorpusFeatures, config: &ExperimentConfig, out: &Path) -> HeadRuns {
    let mut h = HeadRuns { runs: Vec::new(), eval: Vec::new(), train_secs: Vec::new() };
    for seed in SEEDS {
        let start = Instant::now();
        let run = pipeline::train_seed(features, &config.features, &config.train, seed).unwrap();
        h.train_secs.push(start.elapsed().as_secs_f64());
        pipeline::save_run(&run, &pipeline::seed_dir(out, seed)).unwrap();
        h.eval.push(pipeline::score_trials(&run.checkpoint.detector().unwrap(), &features.eval).unwrap());
        h.runs.push(run);
    }
    h
}

fn main() -> ExitCode {
    let mut lines = vec![loss_oracle(), gradients(), special_functions(), metric_oracles(), evidential_identities()];

    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("corpus");
    let start = Instant::now();
    corpus::generate(&CorpusManifest::default(), &root).unwrap();
    let corpus = Corpus::open(&root).unwrap();
    let base = ExperimentConfig::new(&root, tmp.path().join("runs"));
    let features = CorpusFeatures::load(&corpus, &base.features, None).unwrap();
    let prep_secs = start.elapsed().as_secs_f64();
    println!(
        "default corpus: {} train / {} dev / {} eval utterances, generated and featurized in {prep_secs:.1} s",
        features.train.trials.len(),
        features.dev.trials.len(),
        features.eval.trials.len()
    );

    let baseline_cfg =
        ExperimentConfig { train: TrainConfig { head: Head::Softmax, ..base.train.clone() }, ..base.clone() };
    let fadel_cfg = base.clone();
    let baseline = train_head(&features, &baseline_cfg, &tmp.path().join("runs/baseline"));
    let fadel = train_head(&features, &fadel_cfg, &tmp.path().join("runs/fadel"));

    // Reruns through the on-disk path must reproduce the logs byte for byte.
    let mut identical = true;
    for (cfg, first, name) in [(&baseline_cfg, &baseline, "baseline"), (&fadel_cfg, &fadel, "fadel")] {
        let out = tmp.path().join("rerun").join(name);
        let cfg = ExperimentConfig { output: out.clone(), ..cfg.clone() };
        pipeline::run_train(&cfg).unwrap();
        for run in &first.runs {
            let again = fs::read_to_string(pipeline::seed_dir(&out, run.seed).join("train_log.csv")).unwrap();
            identical &= again == pipeline::format_log(&run.log);
        }
    }
    let mut detail = Vec::new();
    let mut pass6 = identical;
    for (name, h) in [("baseline", &baseline), ("fadel", &fadel)] {
        for (run, secs) in h.runs.iter().zip(&h.train_secs) {
            let dev_eer = run.log[run.checkpoint.best_epoch - 1].dev_eer;
            let per_seed = secs + prep_secs;
            pass6 &= dev_eer < 5.0 && per_seed < 600.0 && run.log.len() == 100;
            detail.push(format!("{name} s{} dev EER {dev_eer:.2}% {per_seed:.0} s", run.seed));
        }
    }
    lines.push(line(6, pass6, format!("{}, reruns identical {identical}", detail.join(", "))));

    let unseen = &features.unseen_attacks;
    let top_bin = |trials: &[TrialRecord]| {
        trials
            .iter()
            .filter(|t| t.key() == Key::Spoof && unseen.iter().any(|a| a == t.attack()))
            .filter(|t| bin_index(t.score.unwrap(), 20).unwrap() == 19)
            .count()
    };
    let ood_total = features.eval.trials.iter().filter(|t| unseen.iter().any(|a| a == t.attack())).count();
    let mut fewer = 0;
    let mut counts = Vec::new();
    for ((seed, base_eval), fadel_eval) in SEEDS.iter().zip(&baseline.eval).zip(&fadel.eval) {
        let (b, f) = (top_bin(base_eval), top_bin(fadel_eval));
        fewer += usize::from(f < b);
        counts.push(format!("s{seed} fadel {f} vs baseline {b}"));
    }
    lines.push(line(
        7,
        fewer >= 2,
        format!("OOD spoofs in [0.95,1] of {ood_total}: {}; fadel lower in {fewer}/3", counts.join(", ")),
    ));

    let mut positive = 0;
    let mut rhos = Vec::new();
    for (seed, trials) in SEEDS.iter().zip(&fadel.eval) {
        let a = per_attack_analysis(&ScoreSet::new(trials.clone()).unwrap()).unwrap();
        let rho = a.correlation.spearman;
        positive += usize::from(rho.is_some_and(|r| r > 0.0));
        rhos.push(format!("s{seed} {}", rho.map_or("undefined".into(), |r| format!("{r:.3}"))));
    }
    lines.push(line(8, positive >= 2, format!("Spearman(u, EER) {}; positive in {positive}/3", rhos.join(", "))));

    let abl_cfg = ExperimentConfig { output: tmp.path().join("ablation"), ..base.clone() };
    let line9 = match pipeline::run_ablation(&abl_cfg) {
        Ok(rows) => {
            let order: Vec<EvidenceActivation> = rows.iter().map(|r| r.activation).collect();
            let mut finite = rows.iter().all(|r| r.reports.len() == 3);
            for act in ABLATION_ORDER {
                for seed in SEEDS {
                    let log =
                        abl_cfg.output.join("ablation").join(act.name()).join(format!("seed-{seed}/train_log.csv"));
                    let text = fs::read_to_string(log).unwrap();
                    let mut rows = csv::Reader::from_reader(text.as_bytes());
                    let mut n = 0;
                    for rec in rows.records() {
                        let rec = rec.unwrap();
                        finite &= rec.iter().all(|v| v.parse::<f64>().is_ok_and(f64::is_finite));
                        n += 1;
                    }
                    finite &= n == 100;
                }
            }
            let table = fs::read_to_string(abl_cfg.output.join("ablation.csv")).unwrap();
            let mut t = csv::Reader::from_reader(table.as_bytes());
            let header = t.headers().unwrap().iter().collect::<Vec<_>>().join(",");
            let body: Vec<csv::StringRecord> = t.records().map(Result::unwrap).collect();
            let names: Vec<&str> = body.iter().map(|r| &r[0]).collect();
            let well_formed = header == "activation,eer_avg,eer_best,min_tdcf_avg,min_tdcf_best"
                && names == ["relu", "exponential", "softplus"]
                && body.iter().all(|r| r.iter().skip(1).all(|v| v.parse::<f64>().is_ok_and(f64::is_finite)));
            let pass = order == ABLATION_ORDER && finite && well_formed;
            let summary: Vec<String> =
                rows.iter().map(|r| format!("{} EER avg {:.2}%", r.activation.name(), r.aggregate.eer.avg)).collect();
            line(9, pass, format!("{}; table well-formed {well_formed}, losses finite {finite}", summary.join(", ")))
        }
        Err(e) => line(9, false, format!("ablation failed: {e}")),
    };
    lines.push(line9);

    let red: Vec<u8> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("{} of {} criteria pass; failing: {red:?}", lines.len() - red.len(), lines.len());
    if red.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
