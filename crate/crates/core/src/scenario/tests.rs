use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use super::*;
use crate::grid::{GridGraph, HourlyPanel, NodeSeries};

fn panel_with_ci(ci: &[Vec<f64>]) -> HourlyPanel {
    let len = ci[0].len();
    let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let ts = (0..len).map(|h| start + chrono::Duration::hours(h as i64)).collect();
    let nodes = (0..ci.len()).map(|i| format!("N{i}")).collect();
    let series = ci
        .iter()
        .map(|c| {
            let mut s = NodeSeries::with_len(len);
            s.ci = c.clone();
            s
        })
        .collect();
    HourlyPanel::new(ts, nodes, series).unwrap()
}

#[test]
fn zero_intensity_slot_is_zero() {
    let p = panel_with_ci(&[vec![10.0, 200.0, 700.0], vec![55.0, 0.0, 90.0]]);
    assert!(scenario_costs(&p, &ScenarioConfig::from_percent(0)).unwrap().iter().all(|&c| c == 0.0));
}

#[test]
fn constant_ci_node_has_constant_cost() {
    let p = panel_with_ci(&[vec![150.0; 24]]);
    let c = scenario_costs(&p, &ScenarioConfig::reference()).unwrap();
    assert!(c.iter().all(|&v| (v - 8.5).abs() < 1e-12));
}

#[test]
fn ets_prices_scale_costs() {
    let p = panel_with_ci(&[vec![60.0, 150.0, 400.0], vec![51.0, 75.0, 999.0]]);
    let lo = scenario_costs(&p, &ScenarioConfig::reference().with_ets(70.0)).unwrap();
    let hi = scenario_costs(&p, &ScenarioConfig::reference().with_ets(100.0)).unwrap();
    for (a, b) in lo.iter().zip(&hi) {
        assert!((b - a * 100.0 / 70.0).abs() < 1e-12);
    }
}

#[test]
fn node_list_restricts_and_validates() {
    let p = panel_with_ci(&[vec![150.0; 3], vec![150.0; 3]]);
    let mut s = ScenarioConfig::reference();
    s.nodes = Some(vec!["N1".into()]);
    let c = scenario_costs(&p, &s).unwrap();
    let full = cbam_cost(150.0, &s);
    assert_eq!(c, vec![0.0, full, 0.0, full, 0.0, full]);
    s.nodes = Some(vec!["XX".into()]);
    assert!(matches!(scenario_costs(&p, &s), Err(crate::Error::Schema(_))));
}

#[test]
fn scenario_set_parses_and_rejects_duplicates() {
    let text = r#"
        [[scenario]]
        label = "2026"
        intensity = 0.25

        [[scenario]]
        label = "2034"
        intensity = 1.0
        threshold = 75
        ets = 100
    "#;
    let set = ScenarioSet::from_toml(text).unwrap();
    assert_eq!(set.scenario.len(), 2);
    assert_eq!(set.scenario[0].ets, DEFAULT_ETS);
    assert_eq!(set.scenario[1].threshold, 75.0);
    let dup = text.replace("2034", "2026");
    assert!(ScenarioSet::from_toml(&dup).is_err());
    assert!(ScenarioSet::from_toml("[[scenario]]\nlabel = \"x\"\nintensity = 2.0\n").is_err());
}

#[test]
fn inject_requires_matching_graph() {
    let p = panel_with_ci(&[vec![150.0; 30], vec![10.0; 30]]);
    let g = GridGraph::new(vec!["N1".into(), "N0".into()], &[("N0", "N1")]).unwrap();
    let stats = crate::grid::NormStats::fit(&p, 2, 0..20, &ScenarioConfig::reference(), crate::grid::FeatureScope::Pooled).unwrap();
    assert!(inject_policy(&p, &g, &ScenarioConfig::reference(), &stats).is_err());
    let g = GridGraph::new(vec!["N0".into(), "N1".into()], &[("N0", "N1")]).unwrap();
    let set = inject_policy(&p, &g, &ScenarioConfig::reference(), &stats).unwrap();
    let col = set.policy_column();
    assert_eq!(col[0], stats.normalize_policy(8.5));
    assert_eq!(col[1], stats.normalize_policy(0.0));
}

proptest! {
    #[test]
    fn cost_matches_closed_form(ci in 0.0f64..1500.0, t in 0.0f64..200.0, s in 0.0f64..=1.0, ets in 0.0f64..300.0) {
        let sc = ScenarioConfig::new("p", s).with_threshold(t).with_ets(ets);
        let expect = if ci > t { (ci - t) * s * ets / 1000.0 } else { 0.0 };
        prop_assert!((cbam_cost(ci, &sc) - expect).abs() <= 1e-12);
    }

    #[test]
    fn cost_is_linear_above_threshold(excess in 0.0f64..1000.0, t in 0.0f64..200.0, s in 0.0f64..=1.0, ets in 0.0f64..300.0, k in 0.0f64..3.0) {
        let sc = ScenarioConfig::new("p", s).with_threshold(t).with_ets(ets);
        let base = cbam_cost(t + excess, &sc);
        // scaling the excess, the intensity or the price scales the cost
        prop_assert!((cbam_cost(t + k * excess, &sc) - k * base).abs() <= 1e-9 * (1.0 + base.abs() * k));
        let scaled_price = sc.clone().with_ets(k * ets);
        prop_assert!((cbam_cost(t + excess, &scaled_price) - k * base).abs() <= 1e-9 * (1.0 + base.abs() * k));
        if k <= 1.0 {
            let scaled_intensity = ScenarioConfig::new("p", k * s).with_threshold(t).with_ets(ets);
            prop_assert!((cbam_cost(t + excess, &scaled_intensity) - k * base).abs() <= 1e-9 * (1.0 + base.abs()));
        }
        prop_assert_eq!(cbam_cost(t - excess.min(t), &sc), 0.0);
    }
}
