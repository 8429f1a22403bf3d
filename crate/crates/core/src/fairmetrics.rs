//! Accuracy and fairness metrics over binary prediction tables.
//!
//! Group metrics use the unprivileged-minus-privileged orientation, so parity
//! reads as SPD = AOD = 0 and DI = 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    /// 1 = privileged group.
    pub sensitive: bool,
    /// 1 = favorable class.
    pub label: bool,
    pub prediction: bool,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    rows: Vec<PredictionRow>,
}

impl PredictionTable {
    pub fn new(rows: Vec<PredictionRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Schema("prediction table is empty".into()));
        }
        let d = rows[0].features.len();
        if let Some(i) = rows.iter().position(|r| r.features.len() != d) {
            return Err(Error::Schema(format!(
                "row {i} has {} features, expected {d}",
                rows[i].features.len()
            )));
        }
        if rows.iter().flat_map(|r| &r.features).any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite feature value".into()));
        }
        Ok(Self { rows })
    }

    /// Rows without features, from `(sensitive, label, prediction)` triples.
    pub fn from_triples(triples: &[(u8, u8, u8)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(s, y, p)| PredictionRow {
                    sensitive: s == 1,
                    label: y == 1,
                    prediction: p == 1,
                    features: Vec::new(),
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Exchanges privileged and unprivileged groups.
    pub fn with_groups_swapped(&self) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| PredictionRow {
                    sensitive: !r.sensitive,
                    ..r.clone()
                })
                .collect(),
        }
    }

    /// Parses `sensitive,label,prediction,f1..fd` CSV.
    pub fn parse_csv(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes(), Path::new("<memory>"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }

    fn read_csv<R: std::io::Read>(reader: R, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let fixed = ["sensitive", "label", "prediction"];
        if header.len() < 3 || header.iter().take(3).ne(fixed.iter().copied()) {
            return Err(Error::Schema(format!(
                "{}: header must start with sensitive,label,prediction",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let binary = |j: usize| -> Result<bool> {
                match rec.get(j).unwrap_or("") {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Parse {
                        row: i,
                        column: header[j].to_string(),
                        value: other.to_string(),
                    }),
                }
            };
            let features = (3..header.len())
                .map(|j| {
                    let cell = rec.get(j).unwrap_or("");
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            row: i,
                            column: header[j].to_string(),
                            value: cell.to_string(),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(PredictionRow {
                sensitive: binary(0)?,
                label: binary(1)?,
                prediction: binary(2)?,
                features,
            });
        }
        Self::new(rows)
    }
}

/// Per-group selection, true-positive and false-positive rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub sel_priv: f64,
    pub sel_unpriv: f64,
    pub tpr_priv: f64,
    pub tpr_unpriv: f64,
    pub fpr_priv: f64,
    pub fpr_unpriv: f64,
}

fn rate<'a>(rows: impl Iterator<Item = &'a PredictionRow>, what: &'static str) -> Result<f64> {
    let (hits, total) = rows.fold((0usize, 0usize), |(h, t), r| (h + r.prediction as usize, t + 1));
    if total == 0 {
        return Err(Error::EmptyGroup(what));
    }
    Ok(hits as f64 / total as f64)
}

fn selection_rates(t: &PredictionTable) -> Result<(f64, f64)> {
    let unpriv = rate(t.rows.iter().filter(|r| !r.sensitive), "unprivileged")?;
    let priv_ = rate(t.rows.iter().filter(|r| r.sensitive), "privileged")?;
    Ok((unpriv, priv_))
}

/// All group rates; each group needs both positive- and negative-label rows.
pub fn group_rates(t: &PredictionTable) -> Result<GroupRates> {
    let (sel_unpriv, sel_priv) = selection_rates(t)?;
    let by = |s: bool, y: bool| t.rows.iter().filter(move |r| r.sensitive == s && r.label == y);
    Ok(GroupRates {
        sel_priv,
        sel_unpriv,
        tpr_priv: rate(by(true, true), "privileged positives")?,
        tpr_unpriv: rate(by(false, true), "unprivileged positives")?,
        fpr_priv: rate(by(true, false), "privileged negatives")?,
        fpr_unpriv: rate(by(false, false), "unprivileged negatives")?,
    })
}

/// Statistical parity difference: P(ŷ=1 | unpriv) − P(ŷ=1 | priv).
pub fn spd(t: &PredictionTable) -> Result<f64> {
    let (u, p) = selection_rates(t)?;
    Ok(u - p)
}

/// Disparate impact: P(ŷ=1 | unpriv) / P(ŷ=1 | priv).
pub fn di(t: &PredictionTable) -> Result<f64> {
    let (u, p) = selection_rates(t)?;
    if p == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok(u / p)
}

/// Average odds difference: mean of the FPR and TPR gaps (unpriv − priv).
pub fn aod(t: &PredictionTable) -> Result<f64> {
    let r = group_rates(t)?;
    Ok(0.5 * ((r.fpr_unpriv - r.fpr_priv) + (r.tpr_unpriv - r.tpr_priv)))
}

/// Theil index over benefits bᵢ = ŷᵢ − yᵢ + 1, with 0·ln 0 = 0.
pub fn theil(t: &PredictionTable) -> f64 {
    let b: Vec<f64> = t
        .rows
        .iter()
        .map(|r| r.prediction as u8 as f64 - r.label as u8 as f64 + 1.0)
        .collect();
    let mu = b.iter().sum::<f64>() / b.len() as f64;
    if mu == 0.0 {
        return 0.0;
    }
    let total: f64 = b
        .iter()
        .map(|&bi| {
            let r = bi / mu;
            if r > 0.0 {
                r * r.ln()
            } else {
                0.0
            }
        })
        .sum();
    (total / b.len() as f64).max(0.0)
}

/// 1 − mean |ŷᵢ − mean ŷ over the k nearest neighbours of i|, neighbours found
/// by Euclidean distance on standardized features (sensitive column excluded,
/// self excluded, ties broken by row index).
pub fn consistency(t: &PredictionTable, k: usize) -> Result<f64> {
    let n = t.rows.len();
    if k == 0 {
        return Err(Error::Config("consistency needs k ≥ 1".into()));
    }
    if n <= k {
        return Err(Error::InsufficientRows { rows: n, k });
    }
    let d = t.rows[0].features.len();
    if d == 0 {
        return Err(Error::Schema("consistency needs at least one feature column".into()));
    }
    let z = standardized_features(t);
    let mut deviation = 0.0;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dist.clear();
        dist.extend((0..n).filter(|&j| j != i).map(|j| {
            let d2: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| (a - b).powi(2)).sum();
            (d2, j)
        }));
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let local = dist[..k]
            .iter()
            .map(|&(_, j)| t.rows[j].prediction as u8 as f64)
            .sum::<f64>()
            / k as f64;
        deviation += (t.rows[i].prediction as u8 as f64 - local).abs();
    }
    Ok(1.0 - deviation / n as f64)
}

fn standardized_features(t: &PredictionTable) -> Vec<Vec<f64>> {
    let n = t.rows.len() as f64;
    let d = t.rows[0].features.len();
    let mut stats = Vec::with_capacity(d);
    for j in 0..d {
        let mean = t.rows.iter().map(|r| r.features[j]).sum::<f64>() / n;
        let var = t.rows.iter().map(|r| (r.features[j] - mean).powi(2)).sum::<f64>() / n;
        stats.push((mean, if var > 0.0 { var.sqrt() } else { 1.0 }));
    }
    t.rows
        .iter()
        .map(|r| r.features.iter().zip(&stats).map(|(v, (m, s))| (v - m) / s).collect())
        .collect()
}

/// Accuracy and F1 with class 1 as the favorable (positive) class.
pub fn accuracy_f1(t: &PredictionTable) -> (f64, f64) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    let mut correct = 0usize;
    for r in &t.rows {
        correct += (r.label == r.prediction) as usize;
        match (r.label, r.prediction) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            _ => {}
        }
    }
    let acc = correct as f64 / t.rows.len() as f64;
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fneg > 0 {
        tp as f64 / (tp + fneg) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (acc, f1)
}

/// Every tabular metric for one prediction table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub f1: f64,
    pub spd: f64,
    pub di: f64,
    pub aod: f64,
    pub consistency: f64,
    pub theil: f64,
}

impl MetricSummary {
    pub fn compute(t: &PredictionTable, k: usize) -> Result<Self> {
        let (accuracy, f1) = accuracy_f1(t);
        Ok(Self {
            accuracy,
            f1,
            spd: spd(t)?,
            di: di(t)?,
            aod: aod(t)?,
            consistency: consistency(t, k)?,
            theil: theil(t),
        })
    }

    pub const HEADER: &'static str = "accuracy,f1,spd,di,aod,consistency,theil";

    /// Header plus one data row.
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            Self::HEADER,
            self.accuracy,
            self.f1,
            self.spd,
            self.di,
            self.aod,
            self.consistency,
            self.theil
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_features(rows: &[(u8, u8, u8, f64)]) -> PredictionTable {
        PredictionTable::new(
            rows.iter()
                .map(|&(s, y, p, f)| PredictionRow {
                    sensitive: s == 1,
                    label: y == 1,
                    prediction: p == 1,
                    features: vec![f],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn spd_hand_example() {
        let t = PredictionTable::from_triples(&[(1, 1, 1), (1, 0, 1), (0, 1, 1), (0, 0, 0)]).unwrap();
        assert_eq!(spd(&t).unwrap(), -0.5);
    }

    #[test]
    fn spd_parity_and_extreme() {
        let t = PredictionTable::from_triples(&[(1, 1, 1), (1, 0, 0), (0, 1, 1), (0, 0, 0)]).unwrap();
        assert_eq!(spd(&t).unwrap(), 0.0);
        let t = PredictionTable::from_triples(&[(1, 1, 0), (1, 0, 0), (0, 1, 1), (0, 0, 1)]).unwrap();
        assert_eq!(spd(&t).unwrap(), 1.0);
    }

    #[test]
    fn spd_missing_group() {
        let t = PredictionTable::from_triples(&[(1, 1, 1), (1, 0, 1)]).unwrap();
        assert!(matches!(spd(&t), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn di_cases() {
        let t = PredictionTable::from_triples(&[(1, 1, 1), (1, 0, 1), (0, 1, 1), (0, 0, 0)]).unwrap();
        assert_eq!(di(&t).unwrap(), 0.5);
        let t = PredictionTable::from_triples(&[(1, 1, 1), (1, 0, 0), (0, 1, 1), (0, 0, 0)]).unwrap();
        assert_eq!(di(&t).unwrap(), 1.0);
        let t = PredictionTable::from_triples(&[(1, 1, 0), (1, 0, 0), (0, 1, 1), (0, 0, 0)]).unwrap();
        assert!(matches!(di(&t), Err(Error::DivisionByZero)));
    }

    fn aod_fixture() -> PredictionTable {
        // unpriv: TPR 2/2, FPR 0/2; priv: TPR 1/2, FPR 0/2
        PredictionTable::from_triples(&[
            (0, 1, 1),
            (0, 1, 1),
            (0, 0, 0),
            (0, 0, 0),
            (1, 1, 1),
            (1, 1, 0),
            (1, 0, 0),
            (1, 0, 0),
        ])
        .unwrap()
    }

    #[test]
    fn aod_hand_example_and_antisymmetry() {
        let t = aod_fixture();
        assert_eq!(aod(&t).unwrap(), 0.25);
        assert_eq!(aod(&t.with_groups_swapped()).unwrap(), -0.25);
    }

    #[test]
    fn aod_perfect_classifier() {
        let t = PredictionTable::from_triples(&[(0, 1, 1), (0, 0, 0), (1, 1, 1), (1, 0, 0)]).unwrap();
        assert_eq!(aod(&t).unwrap(), 0.0);
    }

    #[test]
    fn aod_needs_both_labels() {
        let t = PredictionTable::from_triples(&[(0, 1, 1), (0, 0, 0), (1, 1, 1)]).unwrap();
        assert!(matches!(aod(&t), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn theil_hand_example() {
        // b = (2, 1, 1, 0): ŷ−y = +1, 0, 0, −1
        let t = PredictionTable::from_triples(&[(0, 0, 1), (0, 1, 1), (1, 0, 0), (1, 1, 0)]).unwrap();
        let expected = 2.0 * 2f64.ln() / 4.0;
        assert!((theil(&t) - expected).abs() < 1e-15);
        assert!((theil(&t) - 0.3466).abs() < 1e-4);
    }

    #[test]
    fn theil_all_correct_is_zero() {
        let t = PredictionTable::from_triples(&[(0, 0, 0), (0, 1, 1), (1, 1, 1)]).unwrap();
        assert_eq!(theil(&t), 0.0);
    }

    #[test]
    fn consistency_identical_predictions() {
        let t = with_features(&[(0, 0, 1, 0.0), (1, 1, 1, 3.0), (0, 1, 1, 1.0), (1, 0, 1, 9.0)]);
        assert_eq!(consistency(&t, 2).unwrap(), 1.0);
    }

    fn brute_force_consistency(xs: &[f64], preds: &[f64], k: usize) -> f64 {
        // Exhaustive: sort all other points by (|xi − xj|, j) and take the first k.
        let n = xs.len();
        let mut dev = 0.0;
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                (xs[i] - xs[a])
                    .abs()
                    .partial_cmp(&(xs[i] - xs[b]).abs())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let local: f64 = others[..k].iter().map(|&j| preds[j]).sum::<f64>() / k as f64;
            dev += (preds[i] - local).abs();
        }
        1.0 - dev / n as f64
    }

    #[test]
    fn consistency_one_disagreeing_pair() {
        let xs = [0.0, 0.1, 5.0, 5.2, 10.0, 10.3];
        let preds = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let oracle = brute_force_consistency(&xs, &preds, 1);
        assert!((oracle - (1.0 - 2.0 / 6.0)).abs() < 1e-12);
        let rows: Vec<_> = xs.iter().zip(preds).map(|(&x, p)| (0u8, 0u8, p as u8, x)).collect();
        let got = consistency(&with_features(&rows), 1).unwrap();
        assert!((got - 0.6667).abs() < 1e-4);
        assert!((got - oracle).abs() < 1e-9);
    }

    #[test]
    fn consistency_needs_more_rows_than_k() {
        let t = with_features(&[(0, 0, 1, 0.0), (1, 1, 1, 3.0)]);
        assert!(matches!(consistency(&t, 2), Err(Error::InsufficientRows { .. })));
    }

    #[test]
    fn accuracy_f1_cases() {
        let t = PredictionTable::from_triples(&[(0, 1, 1), (0, 1, 0), (1, 0, 0), (1, 0, 0)]).unwrap();
        let (acc, f1) = accuracy_f1(&t);
        assert_eq!(acc, 0.75);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);

        let t = PredictionTable::from_triples(&[(0, 1, 1), (1, 0, 0)]).unwrap();
        assert_eq!(accuracy_f1(&t), (1.0, 1.0));

        let t = PredictionTable::from_triples(&[(0, 1, 0), (1, 0, 0)]).unwrap();
        assert_eq!(accuracy_f1(&t).1, 0.0);
    }

    #[test]
    fn csv_parsing() {
        let csv = "sensitive,label,prediction,f1,f2\n1,1,1,0.5,2\n0,0,1,1.5,3\n";
        let t = PredictionTable::parse_csv(csv).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows()[1].features, vec![1.5, 3.0]);
        assert!(PredictionTable::parse_csv("sensitive,label,prediction\n2,0,1\n").is_err());
        assert!(PredictionTable::parse_csv("label,sensitive,prediction\n1,0,1\n").is_err());
    }

    fn arb_table() -> impl Strategy<Value = PredictionTable> {
        proptest::collection::vec((0u8..2, 0u8..2, 0u8..2, -5.0f64..5.0), 8..40).prop_map(|rows| {
            let mut rows = rows;
            // Guarantee every (group, label) cell is populated.
            rows.extend([(0, 0, 0, 0.1), (0, 1, 1, 0.2), (1, 0, 1, 0.3), (1, 1, 0, 0.4)]);
            with_features(&rows)
        })
    }

    proptest! {
        #[test]
        fn group_metric_symmetries(t in arb_table()) {
            let s = t.with_groups_swapped();
            prop_assert!((spd(&t).unwrap() + spd(&s).unwrap()).abs() < 1e-12);
            prop_assert!((aod(&t).unwrap() + aod(&s).unwrap()).abs() < 1e-12);
            if let (Ok(a), Ok(b)) = (di(&t), di(&s)) {
                if a > 0.0 {
                    prop_assert!((a * b - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn bounded_metrics(t in arb_table(), k in 1usize..5) {
            let c = consistency(&t, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(theil(&t) >= 0.0);
            let r = spd(&t).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn row_order_invariance(t in arb_table(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rows = t.rows().to_vec();
            rows.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let u = PredictionTable::new(rows).unwrap();
            prop_assert_eq!(spd(&t).unwrap(), spd(&u).unwrap());
            prop_assert_eq!(aod(&t).unwrap(), aod(&u).unwrap());
            prop_assert!((theil(&t) - theil(&u)).abs() < 1e-12);
        }

        #[test]
        fn theil_zero_iff_equal_benefits(t in arb_table()) {
            let b: Vec<i8> = t.rows().iter().map(|r| r.prediction as i8 - r.label as i8).collect();
            let all_equal = b.iter().all(|&v| v == b[0]);
            prop_assert_eq!(theil(&t).abs() < 1e-15, all_equal);
        }
    }
}
