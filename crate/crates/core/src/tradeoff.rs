//! Trade-off detection between two metrics under an intervention, and the
//! identification of which graph nodes cause the trade-off.
//!
//! For a method `T` and metrics `X`, `Y`:
//!
//! 1. Estimate the effect of switching `T` from `t_off` to `t_on` on `X` and
//!    `Y` and judge each change with the metric's [`SignSpec`]. Without
//!    strictly opposed signs there is no trade-off and the analysis stops.
//! 2. If `X` causes `Y` in the graph, shift `X` by its `T`-induced change
//!    and check whether the induced change in `Y` opposes the change in `X`
//!    (symmetrically when `Y` causes `X`).
//! 3. For every common ancestor `P` of `X` and `Y`, shift `P` by its
//!    `T`-induced change and check whether the induced changes in `X` and
//!    `Y` oppose each other.
//!
//! Interventional nodes are never reported as causes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::inference::{ate, conditional_mean, DmlConfig};
use crate::study::{Objective, SignSpec, VariableKind};
use crate::AteQuery;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
    Neutral,
}

impl Sign {
    /// One Plus and one Minus.
    pub fn opposes(self, other: Sign) -> bool {
        matches!((self, other), (Sign::Plus, Sign::Minus) | (Sign::Minus, Sign::Plus))
    }
}

/// Judges a change `delta` of a metric currently at `value`.
pub fn sign(spec: &SignSpec, value: f64, delta: f64) -> Sign {
    let band = spec.neutral_band;
    match spec.objective {
        Objective::Maximize => {
            if delta > band {
                Sign::Plus
            } else if delta < -band {
                Sign::Minus
            } else {
                Sign::Neutral
            }
        }
        Objective::Minimize => {
            if delta < -band {
                Sign::Plus
            } else if delta > band {
                Sign::Minus
            } else {
                Sign::Neutral
            }
        }
        Objective::Target(t) => {
            let before = (value - t).abs();
            let after = (value + delta - t).abs();
            if after < before - band {
                Sign::Plus
            } else if after > before + band {
                Sign::Minus
            } else {
                Sign::Neutral
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffQuery {
    pub method: String,
    pub x: String,
    pub y: String,
    pub t_on: f64,
    pub t_off: f64,
}

impl TradeoffQuery {
    pub fn new(method: impl Into<String>, x: impl Into<String>, y: impl Into<String>) -> Result<Self> {
        Self::with_levels(method, x, y, 1.0, 0.0)
    }

    pub fn with_levels(
        method: impl Into<String>,
        x: impl Into<String>,
        y: impl Into<String>,
        t_on: f64,
        t_off: f64,
    ) -> Result<Self> {
        let q = Self {
            method: method.into(),
            x: x.into(),
            y: y.into(),
            t_on,
            t_off,
        };
        if q.x == q.y {
            return Err(Error::Config(format!("metric pair uses `{}` twice", q.x)));
        }
        if q.t_on == q.t_off || !(0.0..=1.0).contains(&q.t_on) || !(0.0..=1.0).contains(&q.t_off) {
            return Err(Error::Config(format!(
                "method levels must be distinct values in [0, 1], got on={} off={}",
                q.t_on, q.t_off
            )));
        }
        Ok(q)
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            ..self.clone()
        }
    }
}

/// Effects of the method on both metrics and their judged signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub ate_x: f64,
    pub ate_y: f64,
    pub x_off: f64,
    pub y_off: f64,
    pub sign_x: Sign,
    pub sign_y: Sign,
    pub tradeoff: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseRole {
    SelfX,
    SelfY,
    CommonAncestor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseEvidence {
    pub node: String,
    pub role: CauseRole,
    pub ate_on_x: f64,
    pub ate_on_y: f64,
    pub sign_x: Sign,
    pub sign_y: Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub query: TradeoffQuery,
    pub detection: Detection,
    /// Ordered SelfX, SelfY, then common ancestors by name.
    pub causes: Vec<CauseEvidence>,
    /// Candidates whose effects could not be estimated.
    pub inconclusive: Vec<String>,
}

impl Analysis {
    pub fn is_tradeoff(&self) -> bool {
        self.detection.tradeoff
    }
}

fn observational_sign(data: &ObservationMatrix, name: &str) -> Result<SignSpec> {
    let spec = data.spec(name)?;
    if spec.kind != VariableKind::Observational {
        return Err(Error::Config(format!("metric `{name}` must be observational")));
    }
    Ok(spec.sign)
}

fn check_method(data: &ObservationMatrix, method: &str) -> Result<()> {
    if !data.spec(method)?.is_interventional() {
        return Err(Error::Config(format!("method `{method}` must be interventional")));
    }
    Ok(())
}

/// Method effects on both metrics; `tradeoff` is set when their signs strictly oppose.
pub fn measure(data: &ObservationMatrix, q: &TradeoffQuery, cfg: &DmlConfig) -> Result<Detection> {
    check_method(data, &q.method)?;
    let sx = observational_sign(data, &q.x)?;
    let sy = observational_sign(data, &q.y)?;
    // The method is exogenous, so do(T = t) equals conditioning on T = t.
    let cm = |var: &str, t: f64| conditional_mean(data, var, &q.method, t, cfg);
    let x_off = cm(&q.x, q.t_off)?;
    let y_off = cm(&q.y, q.t_off)?;
    let ate_x = cm(&q.x, q.t_on)? - x_off;
    let ate_y = cm(&q.y, q.t_on)? - y_off;
    let sign_x = sign(&sx, x_off, ate_x);
    let sign_y = sign(&sy, y_off, ate_y);
    Ok(Detection {
        ate_x,
        ate_y,
        x_off,
        y_off,
        sign_x,
        sign_y,
        tradeoff: sign_x.opposes(sign_y),
    })
}

/// The detection record when a trade-off exists, `None` otherwise.
pub fn detect_tradeoff(data: &ObservationMatrix, q: &TradeoffQuery, cfg: &DmlConfig) -> Result<Option<Detection>> {
    let d = measure(data, q, cfg)?;
    Ok(d.tradeoff.then_some(d))
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateTreatment(_) | Error::Numerical(_) | Error::Rank(_) | Error::Extrapolation { .. }
    )
}

/// Runs the full cause analysis for one method and metric pair.
pub fn analyze(data: &ObservationMatrix, g: &CausalGraph, q: &TradeoffQuery, cfg: &DmlConfig) -> Result<Analysis> {
    let detection = measure(data, q, cfg)?;
    let mut out = Analysis {
        query: q.clone(),
        detection: detection.clone(),
        causes: Vec::new(),
        inconclusive: Vec::new(),
    };
    if !detection.tradeoff {
        return Ok(out);
    }
    let sx = observational_sign(data, &q.x)?;
    let sy = observational_sign(data, &q.y)?;
    let (x_off, y_off) = (detection.x_off, detection.y_off);

    if g.is_cause(&q.x, &q.y)? {
        let x_on = x_off + detection.ate_x;
        match ate(data, g, &AteQuery::new(&q.x, &q.y, x_on, x_off)?, cfg) {
            Ok(ate_yx) => {
                let ev = CauseEvidence {
                    node: q.x.clone(),
                    role: CauseRole::SelfX,
                    ate_on_x: detection.ate_x,
                    ate_on_y: ate_yx,
                    sign_x: detection.sign_x,
                    sign_y: sign(&sy, y_off, ate_yx),
                };
                if ev.sign_x.opposes(ev.sign_y) {
                    out.causes.push(ev);
                }
            }
            Err(e) if recoverable(&e) => out.inconclusive.push(q.x.clone()),
            Err(e) => return Err(e),
        }
    } else if g.is_cause(&q.y, &q.x)? {
        let y_on = y_off + detection.ate_y;
        match ate(data, g, &AteQuery::new(&q.y, &q.x, y_on, y_off)?, cfg) {
            Ok(ate_xy) => {
                let ev = CauseEvidence {
                    node: q.y.clone(),
                    role: CauseRole::SelfY,
                    ate_on_x: ate_xy,
                    ate_on_y: detection.ate_y,
                    sign_x: sign(&sx, x_off, ate_xy),
                    sign_y: detection.sign_y,
                };
                if ev.sign_x.opposes(ev.sign_y) {
                    out.causes.push(ev);
                }
            }
            Err(e) if recoverable(&e) => out.inconclusive.push(q.y.clone()),
            Err(e) => return Err(e),
        }
    }

    for p in g.common_ancestors(&q.x, &q.y)? {
        if g.kind(g.index_of(&p)?) == VariableKind::Interventional {
            continue;
        }
        let evidence = (|| -> Result<CauseEvidence> {
            let p_on = conditional_mean(data, &p, &q.method, q.t_on, cfg)?;
            let p_off = conditional_mean(data, &p, &q.method, q.t_off, cfg)?;
            let ax = ate(data, g, &AteQuery::new(&p, &q.x, p_on, p_off)?, cfg)?;
            let ay = ate(data, g, &AteQuery::new(&p, &q.y, p_on, p_off)?, cfg)?;
            Ok(CauseEvidence {
                node: p.clone(),
                role: CauseRole::CommonAncestor,
                ate_on_x: ax,
                ate_on_y: ay,
                sign_x: sign(&sx, x_off, ax),
                sign_y: sign(&sy, y_off, ay),
            })
        })();
        match evidence {
            Ok(ev) if ev.sign_x.opposes(ev.sign_y) => out.causes.push(ev),
            Ok(_) => {}
            Err(e) if recoverable(&e) => out.inconclusive.push(p),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceLevel {
    Full,
    High,
    Medium,
    Low,
}

impl ConfidenceLevel {
    /// `None` for zero confidence.
    pub fn of(confidence: f64) -> Option<Self> {
        if confidence >= 1.0 {
            Some(Self::Full)
        } else if confidence >= 0.70 {
            Some(Self::High)
        } else if confidence >= 0.30 {
            Some(Self::Medium)
        } else if confidence > 0.0 {
            Some(Self::Low)
        } else {
            None
        }
    }
}

/// Per metric pair: how many methods triggered a trade-off and, per cause,
/// the fraction of triggering methods that identified it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTable {
    pub x: String,
    pub y: String,
    pub count: usize,
    pub methods_analyzed: usize,
    pub confidence: BTreeMap<String, f64>,
}

impl ConfidenceTable {
    pub fn level(&self, node: &str) -> Option<ConfidenceLevel> {
        self.confidence.get(node).copied().and_then(ConfidenceLevel::of)
    }
}

pub fn aggregate(analyses: &[Analysis]) -> Result<ConfidenceTable> {
    let (x, y) = match analyses.first() {
        Some(a) => (a.query.x.clone(), a.query.y.clone()),
        None => (String::new(), String::new()),
    };
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    let mut count = 0;
    for a in analyses {
        if a.query.x != x || a.query.y != y {
            return Err(Error::MixedPair(
                format!("{x}:{y}"),
                format!("{}:{}", a.query.x, a.query.y),
            ));
        }
        if a.is_tradeoff() {
            count += 1;
            for c in &a.causes {
                *hits.entry(c.node.clone()).or_default() += 1;
            }
        }
    }
    Ok(ConfidenceTable {
        x,
        y,
        count,
        methods_analyzed: analyses.len(),
        confidence: hits
            .into_iter()
            .map(|(node, h)| (node, h as f64 / count as f64))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodReport {
    pub method: String,
    pub tradeoff: bool,
    pub ate_x: f64,
    pub ate_y: f64,
    pub causes: Vec<CauseEvidence>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inconclusive: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairReport {
    pub x: String,
    pub y: String,
    pub count: usize,
    pub methods: Vec<MethodReport>,
    pub confidence: BTreeMap<String, f64>,
}

/// Report document: one entry per metric pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub pairs: Vec<PairReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("<report>", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// DOT rendering of `g` with cause nodes highlighted by their best
    /// confidence across pairs.
    pub fn to_dot(&self, g: &CausalGraph) -> String {
        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        for pair in &self.pairs {
            for (node, &c) in &pair.confidence {
                let e = best.entry(node.clone()).or_insert(0.0);
                *e = e.max(c);
            }
            for m in &pair.methods {
                for c in &m.causes {
                    best.entry(c.node.clone()).or_insert(0.0);
                }
            }
        }
        let attrs = best
            .into_iter()
            .map(|(node, c)| {
                let color = match ConfidenceLevel::of(c) {
                    Some(ConfidenceLevel::Full) => "red",
                    Some(ConfidenceLevel::High) => "orange",
                    Some(ConfidenceLevel::Medium) => "gold",
                    _ => "lightblue",
                };
                (
                    node,
                    format!("style=filled, fillcolor={color}, xlabel=\"cause {:.2}\"", c),
                )
            })
            .collect();
        g.to_dot_annotated(&attrs)
    }
}

/// Builds the pair report for one table and its analyses.
pub fn pair_report(table: &ConfidenceTable, analyses: &[Analysis]) -> PairReport {
    PairReport {
        x: table.x.clone(),
        y: table.y.clone(),
        count: table.count,
        methods: analyses
            .iter()
            .map(|a| MethodReport {
                method: a.query.method.clone(),
                tradeoff: a.is_tradeoff(),
                ate_x: a.detection.ate_x,
                ate_y: a.detection.ate_y,
                causes: a.causes.clone(),
                inconclusive: a.inconclusive.clone(),
            })
            .collect(),
        confidence: table.confidence.clone(),
    }
}

/// Assembles a report from `(table, analyses)` groups, one per metric pair.
pub fn export_report(groups: &[(ConfidenceTable, Vec<Analysis>)]) -> Report {
    Report {
        pairs: groups.iter().map(|(t, a)| pair_report(t, a)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_examples() {
        assert_eq!(sign(&SignSpec::maximize(), 0.6, 0.1), Sign::Plus);
        assert_eq!(sign(&SignSpec::target(0.0), 0.6, 0.1), Sign::Minus);
        assert_eq!(sign(&SignSpec::minimize(), 0.6, 0.1), Sign::Minus);
        assert_eq!(sign(&SignSpec::minimize(), 0.6, -0.1), Sign::Plus);
        assert_eq!(sign(&SignSpec::target(0.0), -0.6, 0.1), Sign::Plus);
        for spec in [SignSpec::maximize(), SignSpec::minimize(), SignSpec::target(0.3)] {
            assert_eq!(sign(&spec, 0.42, 0.0), Sign::Neutral);
        }
    }

    #[test]
    fn sign_band() {
        let spec = SignSpec::maximize().with_band(0.05).unwrap();
        assert_eq!(sign(&spec, 0.0, 0.04), Sign::Neutral);
        assert_eq!(sign(&spec, 0.0, -0.06), Sign::Minus);
    }

    #[test]
    fn target_crossing() {
        // 0.1 above target moving to 0.05 below: closer, so an improvement.
        assert_eq!(sign(&SignSpec::target(0.0), 0.1, -0.15), Sign::Plus);
        // Symmetric overshoot is neutral.
        assert_eq!(sign(&SignSpec::target(0.0), 0.1, -0.2), Sign::Neutral);
    }

    #[test]
    fn opposes_requires_plus_and_minus() {
        assert!(Sign::Plus.opposes(Sign::Minus));
        assert!(Sign::Minus.opposes(Sign::Plus));
        assert!(!Sign::Plus.opposes(Sign::Neutral));
        assert!(!Sign::Neutral.opposes(Sign::Neutral));
        assert!(!Sign::Minus.opposes(Sign::Minus));
    }

    #[test]
    fn query_guards() {
        assert!(TradeoffQuery::new("T", "X", "X").is_err());
        assert!(TradeoffQuery::with_levels("T", "X", "Y", 0.5, 0.5).is_err());
        assert!(TradeoffQuery::with_levels("T", "X", "Y", 1.5, 0.0).is_err());
    }

    fn fake(method: &str, x: &str, y: &str, tradeoff: bool, causes: &[&str]) -> Analysis {
        let sign_x = if tradeoff { Sign::Plus } else { Sign::Minus };
        Analysis {
            query: TradeoffQuery::new(method, x, y).unwrap(),
            detection: Detection {
                ate_x: 1.0,
                ate_y: -1.0,
                x_off: 0.0,
                y_off: 0.0,
                sign_x,
                sign_y: Sign::Minus,
                tradeoff,
            },
            causes: causes
                .iter()
                .map(|n| CauseEvidence {
                    node: n.to_string(),
                    role: CauseRole::CommonAncestor,
                    ate_on_x: 1.0,
                    ate_on_y: -1.0,
                    sign_x: Sign::Plus,
                    sign_y: Sign::Minus,
                })
                .collect(),
            inconclusive: vec![],
        }
    }

    #[test]
    fn aggregate_counts_and_confidence() {
        let one = aggregate(&[fake("T1", "X", "Y", true, &["M"])]).unwrap();
        assert_eq!(one.count, 1);
        assert_eq!(one.confidence["M"], 1.0);
        assert_eq!(one.level("M"), Some(ConfidenceLevel::Full));

        let mut many: Vec<Analysis> = (0..10)
            .map(|i| fake(&format!("T{i}"), "X", "Y", true, if i < 7 { &["M"] } else { &[] }))
            .collect();
        many.push(fake("T10", "X", "Y", false, &[]));
        let t = aggregate(&many).unwrap();
        assert_eq!(t.count, 10);
        assert_eq!(t.methods_analyzed, 11);
        assert!((t.confidence["M"] - 0.7).abs() < 1e-12);
        assert_eq!(t.level("M"), Some(ConfidenceLevel::High));

        let none = aggregate(&[fake("T1", "X", "Y", false, &[])]).unwrap();
        assert_eq!(none.count, 0);
        assert!(none.confidence.is_empty());
    }

    #[test]
    fn aggregate_rejects_mixed_pairs() {
        let r = aggregate(&[fake("T1", "X", "Y", true, &[]), fake("T2", "X", "Z", true, &[])]);
        assert!(matches!(r, Err(Error::MixedPair(..))));
    }

    #[test]
    fn buckets() {
        assert_eq!(ConfidenceLevel::of(1.0), Some(ConfidenceLevel::Full));
        assert_eq!(ConfidenceLevel::of(0.99), Some(ConfidenceLevel::High));
        assert_eq!(ConfidenceLevel::of(0.7), Some(ConfidenceLevel::High));
        assert_eq!(ConfidenceLevel::of(0.69), Some(ConfidenceLevel::Medium));
        assert_eq!(ConfidenceLevel::of(0.3), Some(ConfidenceLevel::Medium));
        assert_eq!(ConfidenceLevel::of(0.29), Some(ConfidenceLevel::Low));
        assert_eq!(ConfidenceLevel::of(0.0), None);
    }

    #[test]
    fn empty_report_and_round_trip() {
        let empty = export_report(&[]);
        assert_eq!(empty.to_json(), "{\n  \"pairs\": []\n}\n");

        let analyses = vec![fake("T1", "X", "Y", true, &["M"]), fake("T2", "X", "Y", false, &[])];
        let table = aggregate(&analyses).unwrap();
        let report = export_report(&[(table, analyses)]);
        let text = report.to_json();
        let back = Report::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert!(text.contains("\"role\": \"common_ancestor\""));
        assert!(text.contains("\"sign_x\": \"plus\""));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn flip(s: Sign) -> Sign {
            match s {
                Sign::Plus => Sign::Minus,
                Sign::Minus => Sign::Plus,
                Sign::Neutral => Sign::Neutral,
            }
        }

        proptest! {
            #[test]
            fn minimize_mirrors_maximize(v in -1e3f64..1e3, d in -1e3f64..1e3) {
                prop_assert_eq!(sign(&SignSpec::minimize(), v, d), flip(sign(&SignSpec::maximize(), v, d)));
            }

            #[test]
            fn far_target_acts_like_direction(v in -10f64..10.0, d in -5f64..5.0) {
                // With the target far above every reachable value, moving up is moving closer.
                prop_assert_eq!(sign(&SignSpec::target(1e6), v, d), sign(&SignSpec::maximize(), v, d));
                prop_assert_eq!(sign(&SignSpec::target(-1e6), v, d), sign(&SignSpec::minimize(), v, d));
            }

            #[test]
            fn reversing_a_change_flips_target_sign(t in -5f64..5.0, v in -5f64..5.0, d in -5f64..5.0) {
                // Moving v → v+d and back v+d → v are judged oppositely.
                let spec = SignSpec::target(t);
                prop_assert_eq!(sign(&spec, v + d, -d), flip(sign(&spec, v, d)));
            }

            #[test]
            fn wider_band_never_creates_signs(v in -5f64..5.0, d in -5f64..5.0, band in 0f64..2.0) {
                let wide = SignSpec::maximize().with_band(band).unwrap();
                if sign(&SignSpec::maximize(), v, d) == Sign::Neutral {
                    prop_assert_eq!(sign(&wide, v, d), Sign::Neutral);
                }
            }
        }
    }
}
