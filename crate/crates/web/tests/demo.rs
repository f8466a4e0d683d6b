use selqa_core::experiment::Scorer;
use selqa_web::{parse_scorer, DemoParams, DemoState};

fn small() -> DemoParams {
    DemoParams {
        n_train: 30,
        n_dev: 20,
        n_test: 30,
        n_trees: 15,
        ..DemoParams::default()
    }
}

#[test]
fn params_parse_with_defaults_and_reject_unknown_fields() {
    let p: DemoParams = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
    assert_eq!(p, DemoParams { seed: 7, ..DemoParams::default() });
    assert!(serde_json::from_str::<DemoParams>(r#"{"sed": 7}"#).is_err());
}

#[test]
fn invalid_params_are_rejected() {
    let bad = DemoParams {
        agreement_boost: 5.0,
        ..small()
    };
    assert!(DemoState::build(&bad).is_err());
}

#[test]
fn strategies_have_oracle_on_top() {
    let st = DemoState::build(&small()).unwrap();
    let rows = st.strategies().unwrap();
    let oracle = rows.iter().find(|r| r.strategy == "oracle").unwrap().macro_average;
    assert!(rows.iter().any(|r| r.strategy == "mope"));
    assert!(rows.iter().all(|r| r.macro_average <= oracle));
}

#[test]
fn curves_cover_every_scorer_and_end_at_full_coverage() {
    let st = DemoState::build(&small()).unwrap();
    let curves = st.curves().unwrap();
    assert_eq!(curves.len(), 3);
    for c in &curves {
        assert_eq!(c.points.len(), 12 * 30);
        assert!((c.points.last().unwrap().coverage - 1.0).abs() < 1e-12);
        let mean_risk = c.points.iter().map(|p| p.risk).sum::<f64>() / c.points.len() as f64;
        assert!((c.auc - mean_risk).abs() < 1e-12);
        assert!(c.min_score <= c.max_score);
    }
}

#[test]
fn operating_point_matches_direct_count() {
    let st = DemoState::build(&small()).unwrap();
    for (scorer, by_ds) in &st.run().test {
        let ds: Vec<_> = by_ds.values().flatten().collect();
        let n = ds.len() as f64;
        let acc = ds.iter().filter(|d| d.correct).count() as f64 / n;

        let all = st.at_gamma(*scorer, f64::NEG_INFINITY).unwrap();
        assert_eq!(all.coverage, 1.0);
        assert!((all.risk - (1.0 - acc)).abs() < 1e-12);
        assert!((all.er - (2.0 * acc - 1.0)).abs() < 1e-12);

        let none = st.at_gamma(*scorer, f64::INFINITY).unwrap();
        assert_eq!((none.coverage, none.risk, none.er), (0.0, 0.0, 0.0));

        let mut scores: Vec<f64> = ds.iter().map(|d| d.score).collect();
        scores.sort_by(f64::total_cmp);
        let g = scores[scores.len() / 2];
        let kept: Vec<_> = ds.iter().filter(|d| d.score >= g).collect();
        let right = kept.iter().filter(|d| d.correct).count() as f64;
        let op = st.at_gamma(*scorer, g).unwrap();
        assert!((op.coverage - kept.len() as f64 / n).abs() < 1e-12);
        assert!((op.risk - (1.0 - right / kept.len() as f64)).abs() < 1e-12);
        assert!((op.er - (2.0 * right - kept.len() as f64) / n).abs() < 1e-12);
    }
}

#[test]
fn same_params_give_same_results() {
    let a = DemoState::build(&small()).unwrap();
    let b = DemoState::build(&small()).unwrap();
    assert_eq!(a.strategies().unwrap(), b.strategies().unwrap());
    assert_eq!(a.curves().unwrap(), b.curves().unwrap());
}

#[test]
fn scorer_names_round_trip() {
    for s in Scorer::ALL {
        assert_eq!(parse_scorer(s.as_str()).unwrap(), s);
    }
    assert!(parse_scorer("nope").is_err());
}
