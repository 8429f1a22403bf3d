use std::collections::BTreeMap;

use causaltrade_core::inference::DmlConfig;
use causaltrade_core::scm::{Mechanism, Scm};
use causaltrade_core::tradeoff::{
    aggregate, analyze, detect_tradeoff, export_report, CauseRole, Report, Sign, TradeoffQuery,
};
use causaltrade_core::{SignSpec, VariableSpec};

fn max(name: &str) -> VariableSpec {
    VariableSpec::observational(name, SignSpec::maximize())
}

fn common_ancestor_scm() -> Scm {
    Scm::new(
        vec![VariableSpec::interventional("T"), max("M"), max("X"), max("Y")],
        vec![
            Mechanism::linear("M", &[("T", 1.0)], 0.3),
            Mechanism::linear("X", &[("M", 1.0)], 0.3),
            Mechanism::linear("Y", &[("M", -1.0)], 0.3),
        ],
        1,
    )
    .unwrap()
}

fn self_cause_scm() -> Scm {
    Scm::new(
        vec![VariableSpec::interventional("T"), max("X"), max("Y")],
        vec![
            Mechanism::linear("X", &[("T", 1.0)], 0.3),
            Mechanism::linear("Y", &[("X", -1.0)], 0.3),
        ],
        2,
    )
    .unwrap()
}

fn concordant_scm() -> Scm {
    Scm::new(
        vec![VariableSpec::interventional("T"), max("X"), max("Y")],
        vec![
            Mechanism::linear("X", &[("T", 1.0)], 0.3),
            Mechanism::linear("Y", &[("T", 1.0)], 0.3),
        ],
        3,
    )
    .unwrap()
}

/// E[var | do(node = hi)] − E[var | do(node = lo)] by simulation.
fn do_effect(scm: &Scm, node: &str, hi: f64, lo: f64, var: &str) -> f64 {
    let idx = scm.graph().index_of(var).unwrap();
    let arm = |v: f64| {
        let a: BTreeMap<String, f64> = [(node.to_string(), v)].into();
        scm.do_means(&a, 50_000, 99).unwrap()[idx]
    };
    arm(hi) - arm(lo)
}

#[test]
fn common_ancestor_is_the_only_cause() {
    let scm = common_ancestor_scm();
    let data = scm.sample(5000, 10).unwrap();
    let cfg = DmlConfig::default();
    let q = TradeoffQuery::new("T", "X", "Y").unwrap();
    let a = analyze(&data, scm.graph(), &q, &cfg).unwrap();
    assert!(a.is_tradeoff());
    let nodes: Vec<_> = a.causes.iter().map(|c| c.node.as_str()).collect();
    assert_eq!(nodes, ["M"]);
    let m = &a.causes[0];
    assert_eq!(m.role, CauseRole::CommonAncestor);
    assert_eq!((m.sign_x, m.sign_y), (Sign::Plus, Sign::Minus));

    // Oracle: shifting M raises X and lowers Y.
    assert!(do_effect(&scm, "M", 1.0, 0.0, "X") > 0.9);
    assert!(do_effect(&scm, "M", 1.0, 0.0, "Y") < -0.9);
    // M moves by ATE(T→M), so its induced effects equal the T→X and T→Y effects.
    assert!((m.ate_on_x - do_effect(&scm, "T", 1.0, 0.0, "X")).abs() < 0.15);
    assert!((m.ate_on_y - do_effect(&scm, "T", 1.0, 0.0, "Y")).abs() < 0.15);

    // Swapping the pair keeps the ancestor set.
    let b = analyze(&data, scm.graph(), &q.swapped(), &cfg).unwrap();
    let nodes: Vec<_> = b.causes.iter().map(|c| c.node.as_str()).collect();
    assert_eq!(nodes, ["M"]);
}

#[test]
fn self_cause_detected() {
    let scm = self_cause_scm();
    let data = scm.sample(5000, 11).unwrap();
    let cfg = DmlConfig::default();
    let q = TradeoffQuery::new("T", "X", "Y").unwrap();
    let a = analyze(&data, scm.graph(), &q, &cfg).unwrap();
    assert_eq!(a.causes.len(), 1);
    assert_eq!(a.causes[0].node, "X");
    assert_eq!(a.causes[0].role, CauseRole::SelfX);
    assert!(do_effect(&scm, "X", 1.0, 0.0, "Y") < -0.9);
    assert!(do_effect(&scm, "T", 1.0, 0.0, "X") > 0.9);

    let b = analyze(&data, scm.graph(), &q.swapped(), &cfg).unwrap();
    assert_eq!(b.causes.len(), 1);
    assert_eq!(b.causes[0].node, "X");
    assert_eq!(b.causes[0].role, CauseRole::SelfY);
}

#[test]
fn concordant_has_no_tradeoff() {
    let scm = concordant_scm();
    let data = scm.sample(5000, 12).unwrap();
    let cfg = DmlConfig::default();
    let q = TradeoffQuery::new("T", "X", "Y").unwrap();
    assert!(detect_tradeoff(&data, &q, &cfg).unwrap().is_none());
    let a = analyze(&data, scm.graph(), &q, &cfg).unwrap();
    assert!(!a.is_tradeoff());
    assert!(a.causes.is_empty());
}

#[test]
fn opposed_direct_effects_match_truth() {
    let scm = Scm::new(
        vec![VariableSpec::interventional("T"), max("X"), max("Y")],
        vec![
            Mechanism::linear("X", &[("T", 1.0)], 0.3),
            Mechanism::linear("Y", &[("T", -1.0)], 0.3),
        ],
        4,
    )
    .unwrap();
    let data = scm.sample(5000, 13).unwrap();
    let d = detect_tradeoff(
        &data,
        &TradeoffQuery::new("T", "X", "Y").unwrap(),
        &DmlConfig::default(),
    )
    .unwrap()
    .expect("trade-off");
    assert!((d.ate_x - 1.0).abs() < 0.1, "{}", d.ate_x);
    assert!((d.ate_y + 1.0).abs() < 0.1, "{}", d.ate_y);
}

#[test]
fn report_lists_ancestor_with_full_confidence() {
    let scm = common_ancestor_scm();
    let data = scm.sample(5000, 14).unwrap();
    let q = TradeoffQuery::new("T", "X", "Y").unwrap();
    let analyses = vec![analyze(&data, scm.graph(), &q, &DmlConfig::default()).unwrap()];
    let table = aggregate(&analyses).unwrap();
    assert_eq!(table.count, 1);
    assert_eq!(table.confidence["M"], 1.0);
    let report = export_report(&[(table, analyses)]);
    let text = report.to_json();
    assert_eq!(Report::from_json(&text).unwrap().to_json(), text);
    let dot = report.to_dot(scm.graph());
    assert!(dot.contains("\"M\"") && dot.contains("fillcolor=red"), "{dot}");
}

mod props {
    use super::*;
    use causaltrade_core::scm::{random_scm, ScmConfig};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn causes_are_pair_members_or_common_ancestors(seed in 0u64..10_000, m in 0usize..3, a in 3usize..8, b in 3usize..8) {
            prop_assume!(a != b);
            let scm = random_scm(&ScmConfig { seed, ..ScmConfig::default() }).unwrap();
            let g = scm.graph();
            let data = scm.sample(1000, seed).unwrap();
            let q = TradeoffQuery::new(g.name(m), g.name(a), g.name(b)).unwrap();
            let cfg = DmlConfig::default();
            let r = analyze(&data, g, &q, &cfg).unwrap();
            let allowed: Vec<String> = g.common_ancestors(&q.x, &q.y).unwrap();
            for c in &r.causes {
                prop_assert!(c.sign_x.opposes(c.sign_y));
                prop_assert!(!scm.variables()[g.index_of(&c.node).unwrap()].is_interventional());
                match c.role {
                    CauseRole::SelfX => prop_assert_eq!(&c.node, &q.x),
                    CauseRole::SelfY => prop_assert_eq!(&c.node, &q.y),
                    CauseRole::CommonAncestor => prop_assert!(allowed.contains(&c.node)),
                }
            }
            if !r.is_tradeoff() {
                prop_assert!(r.causes.is_empty());
            }

            let s = analyze(&data, g, &q.swapped(), &cfg).unwrap();
            let ancestors = |a: &causaltrade_core::tradeoff::Analysis| -> Vec<String> {
                a.causes.iter().filter(|c| c.role == CauseRole::CommonAncestor).map(|c| c.node.clone()).collect()
            };
            let selves = |a: &causaltrade_core::tradeoff::Analysis, role| -> Vec<String> {
                a.causes.iter().filter(|c| c.role == role).map(|c| c.node.clone()).collect()
            };
            prop_assert_eq!(ancestors(&r), ancestors(&s));
            prop_assert_eq!(selves(&r, CauseRole::SelfX), selves(&s, CauseRole::SelfY));
            prop_assert_eq!(selves(&r, CauseRole::SelfY), selves(&s, CauseRole::SelfX));
        }
    }
}
