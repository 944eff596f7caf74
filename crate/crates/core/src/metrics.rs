//! Countermeasure evaluation: EER, minimum normalized t-DCF, score
//! histograms, per-attack breakdowns with uncertainty correlation, and
//! multi-seed aggregation.
//!
//! Scores are "higher means more bonafide". A threshold `t` accepts a trial
//! as bonafide when `score > t`. Candidate thresholds are `-inf`, the
//! midpoints between consecutive distinct scores, and `+inf`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::trial::{Key, TrialRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("need at least one bonafide and one spoof trial (got {bonafide} bonafide, {spoof} spoof)")]
    SingleClass { bonafide: usize, spoof: usize },
    #[error("trial {0} has no score")]
    MissingScore(String),
    #[error("trial {utterance} has non-finite score {score}")]
    NonFiniteScore { utterance: String, score: f64 },
    #[error("trial {0} has no uncertainty value")]
    MissingUncertainty(String),
    #[error("score {0} is outside [0, 1]")]
    ScoreRange(f64),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("per-attack analysis needs at least two attack ids, found {0}")]
    TooFewAttacks(usize),
    #[error("invalid operating point: {0}")]
    OperatingPoint(&'static str),
    #[error("degenerate t-DCF cost model (C1 = {c1}, C2 = {c2}; both must be > 0)")]
    DegenerateCost { c1: f64, c2: f64 },
    #[error("cannot aggregate an empty list of reports")]
    NoReports,
}

/// Trials with populated scores; at least one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    trials: Vec<TrialRecord>,
}

impl ScoreSet {
    pub fn new(trials: Vec<TrialRecord>) -> Result<Self, MetricsError> {
        let (mut bonafide, mut spoof) = (0, 0);
        for t in &trials {
            let score = t.score.ok_or_else(|| MetricsError::MissingScore(t.utterance.clone()))?;
            if !score.is_finite() {
                return Err(MetricsError::NonFiniteScore { utterance: t.utterance.clone(), score });
            }
            match t.key() {
                Key::Bonafide => bonafide += 1,
                Key::Spoof => spoof += 1,
            }
        }
        if bonafide == 0 || spoof == 0 {
            return Err(MetricsError::SingleClass { bonafide, spoof });
        }
        Ok(Self { trials })
    }

    /// Convenience constructor from bare score lists.
    pub fn from_scores(bonafide: &[f64], spoof: &[f64]) -> Result<Self, MetricsError> {
        let mut trials = Vec::with_capacity(bonafide.len() + spoof.len());
        for (i, &s) in bonafide.iter().enumerate() {
            trials.push(TrialRecord::bonafide("S", alloc::format!("B{i}")).with_score(s));
        }
        for (i, &s) in spoof.iter().enumerate() {
            trials.push(TrialRecord::spoof("S", alloc::format!("X{i}"), "A").with_score(s));
        }
        Self::new(trials)
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn into_trials(self) -> Vec<TrialRecord> {
        self.trials
    }

    pub fn scores(&self, key: Key) -> Vec<f64> {
        self.trials.iter().filter(|t| t.key() == key).map(|t| t.score.expect("validated")).collect()
    }

    pub fn has_uncertainty(&self) -> bool {
        self.trials.iter().all(|t| t.uncertainty.is_some())
    }

    /// Distinct spoof attack ids, sorted.
    pub fn attack_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> =
            self.trials.iter().filter(|t| t.key() == Key::Spoof).map(|t| String::from(t.attack())).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// One point of the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Miss / false-alarm rates at every candidate threshold, ascending.
pub fn sweep(bonafide: &[f64], spoof: &[f64]) -> Result<Vec<OperatingPoint>, MetricsError> {
    if bonafide.is_empty() || spoof.is_empty() {
        return Err(MetricsError::SingleClass { bonafide: bonafide.len(), spoof: spoof.len() });
    }
    let mut all: Vec<(f64, bool)> =
        bonafide.iter().map(|&s| (s, true)).chain(spoof.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nb, ns) = (bonafide.len() as f64, spoof.len() as f64);
    let point = |threshold, bona_rejected: usize, spoof_rejected: usize| OperatingPoint {
        threshold,
        p_miss: bona_rejected as f64 / nb,
        p_fa: (spoof.len() - spoof_rejected) as f64 / ns,
    };
    let mut out = Vec::with_capacity(all.len() + 2);
    out.push(point(f64::NEG_INFINITY, 0, 0));
    let (mut br, mut sr) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let value = all[i].0;
        while i < all.len() && all[i].0 == value {
            if all[i].1 {
                br += 1;
            } else {
                sr += 1;
            }
            i += 1;
        }
        let threshold = if i < all.len() { midpoint(value, all[i].0) } else { f64::INFINITY };
        out.push(point(threshold, br, sr));
    }
    Ok(out)
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EerResult {
    /// Percent, in [0, 100].
    pub eer: f64,
    pub threshold: f64,
}

/// EER from bare score lists; ties in `|P_miss - P_fa|` go to the lower threshold.
pub fn eer_from_scores(bonafide: &[f64], spoof: &[f64]) -> Result<EerResult, MetricsError> {
    let points = sweep(bonafide, spoof)?;
    let mut best = points[0];
    let mut best_gap = (best.p_miss - best.p_fa).abs();
    for p in &points[1..] {
        let gap = (p.p_miss - p.p_fa).abs();
        if gap < best_gap {
            best = *p;
            best_gap = gap;
        }
    }
    Ok(EerResult { eer: 100.0 * (best.p_miss + best.p_fa) / 2.0, threshold: best.threshold })
}

pub fn eer(scores: &ScoreSet) -> Result<EerResult, MetricsError> {
    eer_from_scores(&scores.scores(Key::Bonafide), &scores.scores(Key::Spoof))
}

/// Fixed ASV operating point and cost/prior model for the tandem cost.
///
/// Defaults follow the ASVspoof 2019 LA convention (`P_spoof = 0.05`,
/// `C_miss = 1`, `C_fa = C_fa_spoof = 10`, target prior 0.99 among
/// non-spoof trials) with ASV error rates `P_miss = P_fa = 0.01` and a 50 %
/// spoof miss rate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AsvOperatingPoint {
    pub p_miss_asv: f64,
    pub p_fa_asv: f64,
    /// Fraction of spoofs the ASV rejects; the ASV spoof false-accept rate
    /// is `1 - p_miss_spoof_asv`.
    pub p_miss_spoof_asv: f64,
    pub p_spoof: f64,
    /// Target-speaker prior among non-spoof trials.
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
    pub c_fa_spoof: f64,
}

impl Default for AsvOperatingPoint {
    fn default() -> Self {
        Self {
            p_miss_asv: 0.01,
            p_fa_asv: 0.01,
            p_miss_spoof_asv: 0.5,
            p_spoof: 0.05,
            p_target: 0.99,
            c_miss: 1.0,
            c_fa: 10.0,
            c_fa_spoof: 10.0,
        }
    }
}

/// Coefficients of `t-DCF(s) = C0 + C1 P_miss_cm(s) + C2 P_fa_cm(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TdcfConstants {
    /// Cost of the better of the two trivial CMs (accept all / reject all).
    pub fn default_cost(&self) -> f64 {
        self.c0 + self.c1.min(self.c2)
    }

    pub fn normalized(&self, p_miss_cm: f64, p_fa_cm: f64) -> f64 {
        (self.c0 + self.c1 * p_miss_cm + self.c2 * p_fa_cm) / self.default_cost()
    }
}

impl AsvOperatingPoint {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let rates = [self.p_miss_asv, self.p_fa_asv, self.p_miss_spoof_asv, self.p_spoof, self.p_target];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(MetricsError::OperatingPoint("rates and priors must lie in [0, 1]"));
        }
        if [self.c_miss, self.c_fa, self.c_fa_spoof].iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(MetricsError::OperatingPoint("costs must be finite and > 0"));
        }
        Ok(())
    }

    /// Revised tandem cost model:
    /// `C0 = P_tar C_miss P_miss_asv + P_non C_fa P_fa_asv`,
    /// `C1 = P_tar C_miss - C0`,
    /// `C2 = P_spoof C_fa_spoof (1 - P_miss_spoof_asv)`.
    pub fn constants(&self) -> Result<TdcfConstants, MetricsError> {
        self.validate()?;
        let p_tar = (1.0 - self.p_spoof) * self.p_target;
        let p_non = (1.0 - self.p_spoof) * (1.0 - self.p_target);
        let c0 = p_tar * self.c_miss * self.p_miss_asv + p_non * self.c_fa * self.p_fa_asv;
        let c1 = p_tar * self.c_miss - c0;
        let c2 = self.p_spoof * self.c_fa_spoof * (1.0 - self.p_miss_spoof_asv);
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(MetricsError::DegenerateCost { c1, c2 });
        }
        Ok(TdcfConstants { c0, c1, c2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TdcfResult {
    /// Minimum normalized t-DCF, in [0, 1].
    pub min_tdcf: f64,
    pub threshold: f64,
}

pub fn min_tdcf_from_scores(
    bonafide: &[f64],
    spoof: &[f64],
    asv: &AsvOperatingPoint,
) -> Result<TdcfResult, MetricsError> {
    let constants = asv.constants()?;
    let points = sweep(bonafide, spoof)?;
    let mut best = TdcfResult { min_tdcf: f64::INFINITY, threshold: f64::NAN };
    for p in &points {
        let v = constants.normalized(p.p_miss, p.p_fa);
        if v < best.min_tdcf {
            best = TdcfResult { min_tdcf: v, threshold: p.threshold };
        }
    }
    best.min_tdcf = best.min_tdcf.min(1.0);
    Ok(best)
}

pub fn min_tdcf(scores: &ScoreSet, asv: &AsvOperatingPoint) -> Result<TdcfResult, MetricsError> {
    min_tdcf_from_scores(&scores.scores(Key::Bonafide), &scores.scores(Key::Spoof), asv)
}

/// Bin index for a probability: bins are `[k/n, (k+1)/n)`, the last one closed.
pub fn bin_index(score: f64, bins: usize) -> Result<usize, MetricsError> {
    if bins == 0 {
        return Err(MetricsError::NoBins);
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(MetricsError::ScoreRange(score));
    }
    let n = bins as f64;
    let mut idx = (math::floor(score * n) as usize).min(bins - 1);
    // Correct for rounding in `score * n` so edges match `k / n` exactly.
    while idx > 0 && score < idx as f64 / n {
        idx -= 1;
    }
    while idx + 1 < bins && score >= (idx + 1) as f64 / n {
        idx += 1;
    }
    Ok(idx)
}

pub fn histogram(scores: &[f64], bins: usize) -> Result<Vec<u64>, MetricsError> {
    let mut counts = alloc::vec![0u64; bins.max(1)];
    if bins == 0 {
        return Err(MetricsError::NoBins);
    }
    for &s in scores {
        counts[bin_index(s, bins)?] += 1;
    }
    Ok(counts)
}

/// Histogram of scores over `[0, 1]`, optionally restricted to one key.
pub fn score_histogram(scores: &ScoreSet, key: Option<Key>, bins: usize) -> Result<Vec<u64>, MetricsError> {
    let selected: Vec<f64> = scores
        .trials()
        .iter()
        .filter(|t| key.is_none_or(|k| t.key() == k))
        .map(|t| t.score.expect("validated"))
        .collect();
    histogram(&selected, bins)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackRow {
    pub attack: String,
    pub trials: usize,
    /// EER (%) of this attack's spoofs against every bonafide trial.
    pub eer: f64,
    pub mean_uncertainty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Correlation {
    /// `None` when undefined (fewer than two points or zero variance).
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackAnalysis {
    pub rows: Vec<AttackRow>,
    pub correlation: Correlation,
}

/// Per-attack EER (and mean uncertainty when every spoof trial of the attack
/// carries one), sorted by attack id.
pub fn per_attack_breakdown(scores: &ScoreSet) -> Result<Vec<AttackRow>, MetricsError> {
    let bonafide = scores.scores(Key::Bonafide);
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<Option<f64>>)> = BTreeMap::new();
    for t in scores.trials().iter().filter(|t| t.key() == Key::Spoof) {
        let entry = groups.entry(t.attack()).or_default();
        entry.0.push(t.score.expect("validated"));
        entry.1.push(t.uncertainty);
    }
    groups
        .into_iter()
        .map(|(attack, (spoof, unc))| {
            let eer = eer_from_scores(&bonafide, &spoof)?.eer;
            let mean_uncertainty =
                unc.iter().copied().collect::<Option<Vec<f64>>>().map(|u| u.iter().sum::<f64>() / u.len() as f64);
            Ok(AttackRow { attack: attack.into(), trials: spoof.len(), eer, mean_uncertainty })
        })
        .collect()
}

/// Per-attack EER vs mean uncertainty, with Pearson and Spearman correlation
/// across attacks. Every attack is reported.
pub fn per_attack_analysis(scores: &ScoreSet) -> Result<AttackAnalysis, MetricsError> {
    if let Some(t) = scores.trials().iter().find(|t| t.key() == Key::Spoof && t.uncertainty.is_none()) {
        return Err(MetricsError::MissingUncertainty(t.utterance.clone()));
    }
    let rows = per_attack_breakdown(scores)?;
    if rows.len() < 2 {
        return Err(MetricsError::TooFewAttacks(rows.len()));
    }
    let u: Vec<f64> = rows.iter().map(|r| r.mean_uncertainty.expect("checked")).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.eer).collect();
    let correlation = Correlation { pearson: pearson(&u, &e), spearman: spearman(&u, &e) };
    Ok(AttackAnalysis { rows, correlation })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Everything reported for one scored trial list.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_tdcf: f64,
    pub tdcf_threshold: f64,
    pub per_attack: Vec<AttackRow>,
    pub histogram_bonafide: Vec<u64>,
    pub histogram_spoof: Vec<u64>,
    /// Present when uncertainties are available and there are ≥ 2 attacks.
    pub correlation: Option<Correlation>,
}

impl MetricsReport {
    pub fn compute(scores: &ScoreSet, asv: &AsvOperatingPoint, bins: usize) -> Result<Self, MetricsError> {
        let e = eer(scores)?;
        let t = min_tdcf(scores, asv)?;
        let per_attack = per_attack_breakdown(scores)?;
        let correlation = if scores.has_uncertainty() && per_attack.len() >= 2 {
            Some(per_attack_analysis(scores)?.correlation)
        } else {
            None
        };
        Ok(Self {
            eer: e.eer,
            eer_threshold: e.threshold,
            min_tdcf: t.min_tdcf,
            tdcf_threshold: t.threshold,
            per_attack,
            histogram_bonafide: score_histogram(scores, Some(Key::Bonafide), bins)?,
            histogram_spoof: score_histogram(scores, Some(Key::Spoof), bins)?,
            correlation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AvgBest {
    pub avg: f64,
    /// Minimum: both metrics are lower-is-better.
    pub best: f64,
}

impl AvgBest {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let avg = values.iter().sum::<f64>() / values.len() as f64;
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        Some(Self { avg, best })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedAggregate {
    pub runs: usize,
    pub eer: AvgBest,
    pub min_tdcf: AvgBest,
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<SeedAggregate, MetricsError> {
    let eers: Vec<f64> = reports.iter().map(|r| r.eer).collect();
    let tdcfs: Vec<f64> = reports.iter().map(|r| r.min_tdcf).collect();
    Ok(SeedAggregate {
        runs: reports.len(),
        eer: AvgBest::of(&eers).ok_or(MetricsError::NoReports)?,
        min_tdcf: AvgBest::of(&tdcfs).ok_or(MetricsError::NoReports)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn eer_examples() {
        assert_eq!(eer_from_scores(&[0.9, 0.8], &[0.1, 0.2]).unwrap().eer, 0.0);
        assert_eq!(eer_from_scores(&[0.2], &[0.8]).unwrap().eer, 100.0);
        // Crossing between 0.4 and 0.5: one miss (0.4), one false alarm (0.5).
        let r = eer_from_scores(&[0.8, 0.6, 0.4], &[0.5, 0.3, 0.2]).unwrap();
        assert!((r.eer - 100.0 / 3.0).abs() < 1e-12);
        assert!((r.threshold - 0.45).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(eer_from_scores(&[0.1], &[]), Err(MetricsError::SingleClass { .. })));
        let t = vec![TrialRecord::bonafide("S", "U").with_score(0.5)];
        assert!(ScoreSet::new(t).is_err());
        let t = vec![TrialRecord::bonafide("S", "U"), TrialRecord::spoof("S", "V", "A").with_score(0.1)];
        assert_eq!(ScoreSet::new(t), Err(MetricsError::MissingScore("U".into())));
    }

    #[test]
    fn default_constants_by_hand() {
        let c = AsvOperatingPoint::default().constants().unwrap();
        let p_tar = 0.95 * 0.99;
        let p_non = 0.95 * 0.01;
        let c0 = p_tar * 0.01 + p_non * 10.0 * 0.01;
        assert!((c.c0 - c0).abs() < 1e-15);
        assert!((c.c1 - (p_tar - c0)).abs() < 1e-15);
        assert!((c.c2 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn perfect_cm_tdcf() {
        let r = min_tdcf_from_scores(&[0.9, 0.8], &[0.1, 0.2], &AsvOperatingPoint::default()).unwrap();
        // C0 / (C0 + min(C1, C2)) with C0 = 0.010355, C2 = 0.25.
        assert!((r.min_tdcf - 0.010355 / 0.260355).abs() < 1e-12);
    }

    #[test]
    fn useless_cm_tdcf_is_one() {
        let r = min_tdcf_from_scores(&[0.2], &[0.8], &AsvOperatingPoint::default()).unwrap();
        assert_eq!(r.min_tdcf, 1.0);
    }

    #[test]
    fn degenerate_costs() {
        let asv = AsvOperatingPoint { p_miss_spoof_asv: 1.0, ..Default::default() };
        assert!(matches!(asv.constants(), Err(MetricsError::DegenerateCost { .. })));
        let asv = AsvOperatingPoint { p_miss_asv: 1.0, p_fa_asv: 1.0, ..Default::default() };
        assert!(matches!(asv.constants(), Err(MetricsError::DegenerateCost { .. })));
        let asv = AsvOperatingPoint { c_fa: -1.0, ..Default::default() };
        assert!(matches!(asv.constants(), Err(MetricsError::OperatingPoint(_))));
        let asv = AsvOperatingPoint { p_spoof: 1.5, ..Default::default() };
        assert!(asv.validate().is_err());
    }

    #[test]
    fn zero_tdcf_needs_zero_c0() {
        let asv = AsvOperatingPoint { p_miss_asv: 0.0, p_fa_asv: 0.0, ..Default::default() };
        let r = min_tdcf_from_scores(&[0.9], &[0.1], &asv).unwrap();
        assert_eq!(r.min_tdcf, 0.0);
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.999; 7], 20).unwrap();
        assert_eq!(h[19], 7);
        assert_eq!(h.iter().sum::<u64>(), 7);
        let centers: Vec<f64> = (0..20).map(|k| (k as f64 + 0.5) / 20.0).collect();
        assert_eq!(histogram(&centers, 20).unwrap(), vec![1; 20]);
        // Edges: left-closed, last bin right-closed.
        assert_eq!(bin_index(0.95, 20).unwrap(), 19);
        assert_eq!(bin_index(1.0, 20).unwrap(), 19);
        assert_eq!(bin_index(0.0, 20).unwrap(), 0);
        assert_eq!(bin_index(0.05, 20).unwrap(), 1);
        assert!(matches!(histogram(&[1.2], 20), Err(MetricsError::ScoreRange(_))));
        assert!(matches!(histogram(&[0.5], 0), Err(MetricsError::NoBins)));
    }

    #[test]
    fn every_edge_lands_right() {
        for bins in [1usize, 3, 7, 10, 20, 33] {
            for k in 0..bins {
                let edge = k as f64 / bins as f64;
                assert_eq!(bin_index(edge, bins).unwrap(), k, "bins={bins} k={k}");
            }
        }
    }

    fn trial(attack: &str, idx: usize, score: f64, u: f64) -> TrialRecord {
        let t = if attack == "-" {
            TrialRecord::bonafide("S", alloc::format!("B{idx}"))
        } else {
            TrialRecord::spoof("S", alloc::format!("{attack}{idx}"), attack)
        };
        t.with_score(score).with_uncertainty(u)
    }

    #[test]
    fn identical_attacks_degenerate_correlation() {
        let mut t = vec![trial("-", 0, 0.9, 0.1), trial("-", 1, 0.6, 0.2)];
        for a in ["A", "B"] {
            t.push(trial(a, 0, 0.7, 0.5));
            t.push(trial(a, 1, 0.1, 0.3));
        }
        let an = per_attack_analysis(&ScoreSet::new(t).unwrap()).unwrap();
        assert_eq!(an.rows[0].eer, an.rows[1].eer);
        assert_eq!(an.rows[0].mean_uncertainty, an.rows[1].mean_uncertainty);
        assert_eq!(an.correlation.pearson, None);
        assert_eq!(an.correlation.spearman, None);
    }

    #[test]
    fn monotone_construction_spearman_one() {
        let mut t = vec![trial("-", 0, 0.9, 0.1), trial("-", 1, 0.8, 0.1), trial("-", 2, 0.7, 0.1)];
        // A: separable, low uncertainty. B: partly overlapping. C: inverted, high uncertainty.
        t.extend([trial("A", 0, 0.1, 0.2), trial("A", 1, 0.2, 0.2)]);
        t.extend([trial("B", 0, 0.85, 0.5), trial("B", 1, 0.1, 0.5)]);
        t.extend([trial("C", 0, 0.95, 0.9), trial("C", 1, 0.99, 0.9)]);
        let an = per_attack_analysis(&ScoreSet::new(t).unwrap()).unwrap();
        let eers: Vec<f64> = an.rows.iter().map(|r| r.eer).collect();
        assert!(eers[0] < eers[1] && eers[1] < eers[2], "{eers:?}");
        assert_eq!(an.correlation.spearman, Some(1.0));
    }

    #[test]
    fn analysis_errors() {
        let t =
            vec![trial("-", 0, 0.9, 0.1), TrialRecord::spoof("S", "X", "A").with_score(0.2), trial("B", 0, 0.3, 0.4)];
        let set = ScoreSet::new(t).unwrap();
        assert_eq!(per_attack_analysis(&set), Err(MetricsError::MissingUncertainty("X".into())));
        let t = vec![trial("-", 0, 0.9, 0.1), trial("A", 0, 0.2, 0.3)];
        assert_eq!(per_attack_analysis(&ScoreSet::new(t).unwrap()), Err(MetricsError::TooFewAttacks(1)));
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    fn report(eer: f64, min_tdcf: f64) -> MetricsReport {
        MetricsReport {
            eer,
            eer_threshold: 0.5,
            min_tdcf,
            tdcf_threshold: 0.5,
            per_attack: vec![],
            histogram_bonafide: vec![],
            histogram_spoof: vec![],
            correlation: None,
        }
    }

    #[test]
    fn aggregate_examples() {
        let agg = aggregate_seeds(&[report(3.53, 0.05), report(3.01, 0.04), report(4.05, 0.06)]).unwrap();
        assert!((agg.eer.avg - 3.53).abs() < 1e-12);
        assert_eq!(agg.eer.best, 3.01);
        assert!((agg.min_tdcf.avg - 0.05).abs() < 1e-12);
        assert_eq!(agg.min_tdcf.best, 0.04);
        let one = aggregate_seeds(&[report(2.0, 0.1)]).unwrap();
        assert_eq!((one.eer.avg, one.eer.best), (2.0, 2.0));
        assert_eq!((one.min_tdcf.avg, one.min_tdcf.best), (0.1, 0.1));
        assert_eq!(aggregate_seeds(&[]), Err(MetricsError::NoReports));
    }
}
