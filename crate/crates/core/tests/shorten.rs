use nalgebra::DMatrix;
use psychfit_core::cfa::{fit_cfa, fit_indices, CfaInput, CfaOptions};
use psychfit_core::dataset::{Factor, FactorSpec};
use psychfit_core::latentcorr::{tetrachoric_matrix, TetraOptions};
use psychfit_core::shorten::{
    justification, replay_shortening, suggest_removal, RemovalConstraints, ShorteningPlan, Suggestion,
};
use psychfit_core::simulate::{simulate_factor_model, FactorModelSpec};
use psychfit_core::Error;

fn spec() -> FactorSpec {
    FactorSpec::new(vec![
        Factor { name: "f1".into(), items: vec![1, 2, 3, 4, 5] },
        Factor { name: "f2".into(), items: vec![6, 7, 8, 9, 10] },
        Factor { name: "f3".into(), items: vec![11, 12, 13, 14] },
    ])
    .unwrap()
}

fn data(cross: bool) -> psychfit_core::dataset::ScoredMatrix {
    let factor_of: Vec<usize> = (0..14).map(|i| if i < 5 { 0 } else if i < 10 { 1 } else { 2 }).collect();
    let mut phi = DMatrix::from_element(3, 3, 0.4);
    phi.fill_diagonal(1.0);
    let th: Vec<f64> = (0..14).map(|i| -1.0 + i as f64 / 7.0).collect();
    let mut gen = FactorModelSpec::simple(&factor_of, &[0.7; 14], phi, th);
    if cross {
        // item 7 (position 6) also measures the third factor
        gen.loadings[(6, 1)] = 0.45;
        gen.loadings[(6, 2)] = 0.45;
    }
    simulate_factor_model(&gen, 2000, 99)
}

fn no_boot() -> CfaOptions {
    CfaOptions { bootstrap: 0, ..CfaOptions::default() }
}

#[test]
fn empty_plan_is_the_full_fit() {
    let ds = data(false);
    let t = tetrachoric_matrix(&ds, &TetraOptions::default()).unwrap();
    let input = CfaInput::from_tetra(&t, None).unwrap();
    let plan = ShorteningPlan { steps: vec![], variants: vec![] };
    let stages = replay_shortening(&input, &spec(), &plan, &no_boot()).unwrap();
    assert_eq!(stages.len(), 1);
    let full = fit_cfa(&ds, &spec(), &no_boot()).unwrap();
    assert_eq!(stages[0].fit_indices, fit_indices(&full));
}

#[test]
fn replay_refits_each_stage() {
    let ds = data(true);
    let t = tetrachoric_matrix(&ds, &TetraOptions::default()).unwrap();
    let input = CfaInput::from_tetra(&t, None).unwrap();
    let plan = ShorteningPlan::from_json(r#"[{"item": 7, "reason": "cross-loads"}, {"item": [13, 14]}]"#).unwrap();
    let stages = replay_shortening(&input, &spec(), &plan, &no_boot()).unwrap();
    assert_eq!(stages.len(), 3);
    assert_eq!(stages[1].items.len(), 13);
    // removing the cross-loading item improves fit
    assert!(stages[1].fit_indices.chi2 < stages[0].fit_indices.chi2);
    assert_eq!(stages[1].fit_indices.df, 13 * 12 / 2 - 13 - 3);
    // f3 is left with two items
    assert_eq!(stages[2].fit_indices.df, 11 * 10 / 2 - 11 - 3);

    let bad = ShorteningPlan::from_json(r#"[{"item": [11, 12, 13]}]"#).unwrap();
    let err = replay_shortening(&input, &spec(), &bad, &no_boot()).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "shorten step 1"), "{err}");
}

#[test]
fn cross_loading_item_is_suggested() {
    let ds = data(true);
    let fit = fit_cfa(&ds, &spec(), &no_boot()).unwrap();
    let s = suggest_removal(&fit, &RemovalConstraints::default());
    match &s {
        Suggestion::Remove { item, score, evidence } => {
            assert_eq!(*item, 7, "{}", justification(&s));
            assert!(*score > 0.0);
            assert!(!evidence.is_empty());
        }
        other => panic!("{other:?}"),
    }
    let all = RemovalConstraints { protected: (1..=14).collect(), ..RemovalConstraints::default() };
    assert!(matches!(suggest_removal(&fit, &all), Suggestion::NoSuggestion { .. }));
}

#[test]
fn min_items_constraint() {
    let ds = data(true);
    let fit = fit_cfa(&ds, &spec(), &no_boot()).unwrap();
    let c = RemovalConstraints { min_items_per_factor: 5, protected: vec![] };
    // only f1 and f2 are at 5 items, so nothing may go
    assert!(matches!(suggest_removal(&fit, &c), Suggestion::NoSuggestion { .. }));
    let c = RemovalConstraints { min_items_per_factor: 4, protected: vec![7] };
    if let Suggestion::Remove { item, .. } = suggest_removal(&fit, &c) {
        assert!(item <= 10 && item != 7);
    } else {
        panic!("expected a suggestion");
    }
}
