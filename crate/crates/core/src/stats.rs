//! ROC/AUC, paired bootstrap ensembles and the Wilcoxon signed-rank test.

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{AtrError, Result};
use crate::io::Tsv;
use crate::rng::{mix64, SplitMix64};

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

fn check_scored(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(AtrError::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(AtrError::numeric("scores", format!("non-finite score {s}")));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(AtrError::InvalidParameter("labels must be 0 or 1".into()));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(AtrError::UndefinedMetric(format!(
            "AUC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC, `(wins + ties / 2) / (n+ n-)`, from the rank sum.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_scored(scores, labels)?;
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn trapezoid(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }

    pub fn to_tsv(&self) -> Tsv {
        let mut t = Tsv::new(["fpr", "tpr"]);
        for &(f, p) in &self.points {
            t.push([format!("{f:.6}"), format!("{p:.6}")]);
        }
        t
    }
}

/// ROC by a descending-score sweep; tied scores move in one diagonal step.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (pos, neg) = check_scored(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve {
        points,
        auc: auc(scores, labels)?,
    })
}

/// Bootstrap AUC replicates of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AucEnsemble {
    pub name: String,
    pub values: Vec<f64>,
    pub seed: u64,
    pub n: usize,
    /// Hash of every resample index set; equal hashes mean paired ensembles.
    pub index_hash: u64,
    /// Resamples drawn again because they missed a class.
    pub redraws: usize,
}

impl AucEnsemble {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Indices of bootstrap replicate `b`. They depend only on `(seed, b, n)`
/// and, through the redraw rule, on the labels, which are shared by every
/// configuration scored on the same test set.
pub fn bootstrap_indices(seed: u64, b: usize, labels: &[u8]) -> (Vec<usize>, usize) {
    let n = labels.len();
    let mut rng = SplitMix64::stream(seed ^ mix64(n as u64), "bootstrap", b as u64);
    let mut redraws = 0;
    loop {
        let idx: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
        let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
        if pos > 0 && pos < n {
            return (idx, redraws);
        }
        redraws += 1;
    }
}

pub fn bootstrap_auc(name: &str, scores: &[f64], labels: &[u8], replicates: usize, seed: u64) -> Result<AucEnsemble> {
    check_scored(scores, labels)?;
    if scores.len() < 10 {
        return Err(AtrError::InvalidParameter(format!("bootstrap needs n >= 10, got {}", scores.len())));
    }
    if replicates == 0 {
        return Err(AtrError::InvalidParameter("bootstrap needs at least one replicate".into()));
    }
    let reps = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let (idx, redraws) = bootstrap_indices(seed, b, labels);
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let h = idx.iter().fold(mix64(b as u64), |h, &i| mix64(h ^ i as u64));
            auc(&s, &l).map(|a| (a, redraws, h))
        })
        .collect::<Result<Vec<_>>>()?;
    let redraws = reps.iter().map(|r| r.1).sum();
    if redraws > 0 {
        log::info!("{name}: {redraws} bootstrap resamples redrawn for a missing class");
    }
    Ok(AucEnsemble {
        name: name.to_string(),
        values: reps.iter().map(|r| r.0).collect(),
        seed,
        n: scores.len(),
        index_hash: reps.iter().fold(0, |h, r| mix64(h ^ r.2)),
        redraws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsrMethod {
    Exact,
    Normal,
    /// Every difference was zero; p is 1 by convention.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub p_value: f64,
    pub method: WsrMethod,
}

/// Largest sample size handled by exact enumeration.
pub const WSR_EXACT_MAX: usize = 20;

/// Number of sign assignments giving each value of `W+` for ranks `1..=n`.
fn signed_rank_counts(n: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for w in (r..=max).rev() {
            counts[w] += counts[w - r];
        }
    }
    counts
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are dropped; the
/// null distribution is exact for `n <= 20` without ties and otherwise the
/// tie-corrected normal approximation with continuity correction.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    if let Some(d) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(AtrError::numeric("wilcoxon", format!("non-finite difference {d}")));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            n,
            w_plus: 0.0,
            p_value: 1.0,
            method: WsrMethod::Degenerate,
        });
    }
    if n < 5 {
        return Err(AtrError::DegenerateInput(format!("signed-rank test needs >= 5 non-zero differences, got {n}")));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&nz).filter(|(_, &d)| d > 0.0).map(|(r, _)| r).sum();

    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    if n <= WSR_EXACT_MAX && tie_term == 0.0 {
        let counts = signed_rank_counts(n);
        let w = w_plus as usize;
        let lower: u64 = counts[..=w].iter().sum();
        let upper: u64 = counts[w..].iter().sum();
        let p = (2 * lower.min(upper)) as f64 / (1u64 << n) as f64;
        return Ok(WilcoxonResult {
            n,
            w_plus,
            p_value: p.min(1.0),
            method: WsrMethod::Exact,
        });
    }

    Ok(WilcoxonResult {
        n,
        w_plus,
        p_value: wsr_normal_p(n, w_plus, tie_term),
        method: WsrMethod::Normal,
    })
}

/// Two-sided normal-approximation p-value for `W+` over `n` ranks, with
/// continuity correction. `tie_term` is the sum of `t^3 - t` over tie
/// groups.
pub fn wsr_normal_p(n: usize, w_plus: f64, tie_term: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub reference: String,
    pub challenger: String,
    /// Mean of `challenger - reference` over replicates.
    pub mean_diff: f64,
    pub wsr: WilcoxonResult,
    /// Bonferroni-adjusted threshold `alpha / m`.
    pub threshold: f64,
    pub significant: bool,
}

/// Paired WSR of every challenger against the reference, flagged at
/// `alpha / m`.
pub fn compare_configs(
    reference: &AucEnsemble,
    challengers: &[AucEnsemble],
    alpha: f64,
    m: usize,
) -> Result<Vec<ComparisonResult>> {
    if !(alpha > 0.0 && alpha < 1.0) || m == 0 {
        return Err(AtrError::InvalidParameter(format!("need 0 < alpha < 1 and m >= 1, got {alpha}, {m}")));
    }
    let threshold = alpha / m as f64;
    challengers
        .iter()
        .map(|c| {
            if c.seed != reference.seed
                || c.n != reference.n
                || c.values.len() != reference.values.len()
                || c.index_hash != reference.index_hash
            {
                return Err(AtrError::Pairing(format!(
                    "{} and {} were not bootstrapped on the same resamples",
                    reference.name, c.name
                )));
            }
            let diffs: Vec<f64> = c.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect();
            let wsr = wilcoxon_signed_rank(&diffs)?;
            Ok(ComparisonResult {
                reference: reference.name.clone(),
                challenger: c.name.clone(),
                mean_diff: diffs.iter().sum::<f64>() / diffs.len() as f64,
                wsr,
                threshold,
                significant: wsr.method != WsrMethod::Degenerate && wsr.p_value < threshold,
            })
        })
        .collect()
}

pub fn comparison_tsv(results: &[ComparisonResult]) -> Tsv {
    let mut t = Tsv::new([
        "reference",
        "challenger",
        "mean_auc_diff",
        "w_plus",
        "n",
        "p_value",
        "method",
        "threshold",
        "significant",
    ]);
    for r in results {
        t.push([
            r.reference.clone(),
            r.challenger.clone(),
            format!("{:.6}", r.mean_diff),
            format!("{}", r.wsr.w_plus),
            r.wsr.n.to_string(),
            format!("{:.6e}", r.wsr.p_value),
            format!("{:?}", r.wsr.method).to_lowercase(),
            format!("{:.6e}", r.threshold),
            r.significant.to_string(),
        ]);
    }
    t
}

/// One row of a per-trial AUC table.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialAuc {
    pub trial: String,
    pub n: usize,
    /// Share of all scored samples, in percent.
    pub proportion: f64,
    /// `None` when the trial lacks one of the classes.
    pub auc: Option<f64>,
}

pub const ALL_ROW: &str = "All";

/// AUC per trial (in order of first appearance) followed by an "All" row.
pub fn per_trial_auc(scores: &[f64], labels: &[u8], trials: &[String]) -> Result<Vec<TrialAuc>> {
    if trials.len() != scores.len() {
        return Err(AtrError::Shape(format!("{} trial names for {} scores", trials.len(), scores.len())));
    }
    let mut names: Vec<&String> = Vec::new();
    for t in trials {
        if !names.contains(&t) {
            names.push(t);
        }
    }
    let total = scores.len() as f64;
    let mut rows = Vec::with_capacity(names.len() + 1);
    for name in names {
        let idx: Vec<usize> = (0..trials.len()).filter(|&i| &trials[i] == name).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let auc = match auc(&s, &l) {
            Ok(a) => Some(a),
            Err(AtrError::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(TrialAuc {
            trial: name.clone(),
            n: idx.len(),
            proportion: 100.0 * idx.len() as f64 / total,
            auc,
        });
    }
    rows.push(TrialAuc {
        trial: ALL_ROW.into(),
        n: scores.len(),
        proportion: 100.0,
        auc: Some(auc(scores, labels)?),
    });
    Ok(rows)
}

/// Trials as rows, configurations as columns. Every table must list the
/// same trials.
pub fn auc_table(configs: &[(String, Vec<TrialAuc>)]) -> Result<Tsv> {
    let first = configs.first().ok_or_else(|| AtrError::InvalidParameter("no configurations".into()))?;
    let mut header = vec!["trial".to_string(), "proportion_pct".to_string()];
    header.extend(configs.iter().map(|(n, _)| n.clone()));
    let mut t = Tsv::new(header);
    for (i, row) in first.1.iter().enumerate() {
        let mut cells = vec![row.trial.clone(), format!("{:.1}", row.proportion)];
        for (name, rows) in configs {
            let r = rows
                .get(i)
                .filter(|r| r.trial == row.trial)
                .ok_or_else(|| AtrError::Shape(format!("{name} has a different trial list")))?;
            cells.push(r.auc.map_or_else(|| "undefined".into(), |a| format!("{a:.4}")));
        }
        t.push(cells);
    }
    Ok(t)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    /// Enumerates all sign patterns of ranks 1..=n.
    fn enumerate_p(w_plus: f64, n: usize) -> f64 {
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
            if (w as f64) <= w_plus {
                le += 1;
            }
            if (w as f64) >= w_plus {
                ge += 1;
            }
        }
        ((2 * le.min(ge)) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(AtrError::UndefinedMetric(_))));
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..1000 {
            let n = 2 + rng.below(49);
            let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let scores: Vec<f64> = (0..n).map(|_| (rng.below(8) as f64) / 7.0).collect();
            let a = auc(&scores, &labels).unwrap();
            assert!((a - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
        }
    }

    #[test]
    fn roc_curve_properties() {
        let mut rng = SplitMix64::new(3);
        let labels: Vec<u8> = (0..60).map(|i| (i % 3 == 0) as u8).collect();
        let scores: Vec<f64> = (0..60).map(|_| (rng.below(10) as f64) / 10.0).collect();
        let roc = roc_auc(&scores, &labels).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert!(roc.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        assert!((roc.trapezoid() - roc.auc).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_maps(raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 4..60)) {
            let mut labels: Vec<u8> = raw.iter().map(|r| r.1 as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let s: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let a = auc(&s, &labels).unwrap();
            let affine: Vec<f64> = s.iter().map(|x| 2.0 * x + 1.0).collect();
            let logistic: Vec<f64> = s.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
            prop_assert!((auc(&affine, &labels).unwrap() - a).abs() < 1e-12);
            prop_assert!((auc(&logistic, &labels).unwrap() - a).abs() < 1e-12);
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            prop_assert!((auc(&neg, &labels).unwrap() + a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_determinism_pairing_and_mean() {
        let mut rng = SplitMix64::new(5);
        let labels: Vec<u8> = (0..500).map(|_| rng.bernoulli(0.3) as u8).collect();
        let scores: Vec<f64> = (0..500).map(|_| rng.uniform()).collect();
        let other: Vec<f64> = (0..500).map(|_| rng.uniform()).collect();
        let a = bootstrap_auc("a", &scores, &labels, 100, 9).unwrap();
        assert_eq!(a, bootstrap_auc("a", &scores, &labels, 100, 9).unwrap());
        let b = bootstrap_auc("b", &other, &labels, 100, 9).unwrap();
        assert_eq!(a.index_hash, b.index_hash);
        assert_ne!(a.index_hash, bootstrap_auc("c", &scores, &labels, 100, 10).unwrap().index_hash);

        let full = auc(&scores, &labels).unwrap();
        let mean = a.mean();
        let sd = (a.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        // standard error of the replicate mean
        assert!((mean - full).abs() < 3.0 * sd / 10.0, "mean {mean} full {full} sd {sd}");

        let perfect: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let p = bootstrap_auc("p", &perfect, &labels, 100, 1).unwrap();
        assert!(p.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bootstrap_redraws_single_class_resamples() {
        // one positive in 10: about 35% of resamples miss it
        let labels = [1, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let scores: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let e = bootstrap_auc("x", &scores, &labels, 100, 2).unwrap();
        assert!(e.redraws > 0);
        assert_eq!(e.values.len(), 100);
    }

    #[test]
    fn wilcoxon_examples() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(r.method, WsrMethod::Exact);

        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0, 0.0, 3.0, -3.0]).unwrap();
        assert_eq!(r.w_plus, 21.0 / 2.0);
        assert!(r.p_value > 0.9);

        let zero = wilcoxon_signed_rank(&[0.0; 10]).unwrap();
        assert_eq!((zero.p_value, zero.method), (1.0, WsrMethod::Degenerate));
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, 0.0]).is_err());
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration() {
        let mut rng = SplitMix64::new(23);
        for n in 5..=12 {
            for _ in 0..40 {
                let diffs: Vec<f64> = (0..n)
                    .map(|i| (i as f64 + 1.0 + rng.uniform() * 0.5) * if rng.bernoulli(0.5) { 1.0 } else { -1.0 })
                    .collect();
                let r = wilcoxon_signed_rank(&diffs).unwrap();
                assert_eq!(r.method, WsrMethod::Exact);
                assert_eq!(r.p_value, enumerate_p(r.w_plus, n));
            }
        }
    }

    #[test]
    fn wilcoxon_normal_close_to_exact_at_12() {
        let mut rng = SplitMix64::new(29);
        for _ in 0..50 {
            let diffs: Vec<f64> = (0..12).map(|_| rng.uniform_in(-1.0, 1.2)).collect();
            let r = wilcoxon_signed_rank(&diffs).unwrap();
            let approx = wsr_normal_p(12, r.w_plus, 0.0);
            assert!((approx - r.p_value).abs() < 0.05);
        }
    }

    fn ensemble(name: &str, values: Vec<f64>) -> AucEnsemble {
        AucEnsemble {
            name: name.into(),
            n: 500,
            values,
            seed: 1,
            index_hash: 42,
            redraws: 0,
        }
    }

    #[test]
    fn comparisons() {
        let mut rng = SplitMix64::new(4);
        let base: Vec<f64> = (0..100).map(|_| rng.uniform_in(0.8, 0.9)).collect();
        let reference = ensemble("mag", base.clone());
        let same = ensemble("same", base.clone());
        let better = ensemble("better", base.iter().map(|v| v + 0.01).collect());
        let res = compare_configs(&reference, &[same, better], 1e-3, 6).unwrap();
        assert!((res[0].threshold - 1.0e-3 / 6.0).abs() < 1e-18);
        assert_eq!(res[0].wsr.method, WsrMethod::Degenerate);
        assert!(!res[0].significant);
        assert!(res[1].significant);
        assert_eq!(res[1].wsr.w_plus, 5050.0);

        let mut unpaired = ensemble("x", base);
        unpaired.seed = 2;
        assert!(matches!(compare_configs(&reference, &[unpaired], 1e-3, 6), Err(AtrError::Pairing(_))));
        assert_eq!(comparison_tsv(&res).rows.len(), 2);
    }

    #[test]
    fn per_trial_table() {
        let trials: Vec<String> = ["A", "A", "A", "A", "B", "B", "B", "C"].iter().map(|s| s.to_string()).collect();
        let labels = [1, 0, 0, 1, 1, 0, 0, 0];
        let scores = [0.9, 0.1, 0.5, 0.4, 0.3, 0.6, 0.2, 0.7];
        let rows = per_trial_auc(&scores, &labels, &trials).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].auc, Some(pairwise_auc(&scores[..4], &labels[..4])));
        assert_eq!(rows[1].auc, Some(pairwise_auc(&scores[4..7], &labels[4..7])));
        assert_eq!(rows[2].auc, None);
        let total: f64 = rows[..3].iter().map(|r| r.proportion).sum();
        assert!((total - 100.0).abs() < 1e-9);
        assert_eq!(rows[3].auc, Some(pairwise_auc(&scores, &labels)));

        let single = per_trial_auc(&scores[..4], &labels[..4], &trials[..4]).unwrap();
        assert_eq!(single[0].auc, single[1].auc);

        let t = auc_table(&[("mag".into(), rows.clone()), ("psd".into(), rows)]).unwrap();
        assert_eq!(t.header, ["trial", "proportion_pct", "mag", "psd"]);
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[2][2], "undefined");
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }
}
