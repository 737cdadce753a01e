use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use proptest::prelude::*;
use riskscope_core::evidence::{compute_checksum, KnowledgeBase};
use riskscope_core::router::{
    build_context, calibrate_items, normalize, ActiveView, MatcherConfig, PromptCorpus, Route, Router, ScoredItem,
    Turn, ViewTag, MAX_PACK_BYTES, MAX_TURNS,
};
use riskscope_core::{FeatureSchema, PatientRecord};
use serde_json::json;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn router() -> &'static Router {
    static R: OnceLock<Router> = OnceLock::new();
    R.get_or_init(|| {
        let corpus = PromptCorpus::load(data("prompt_corpus.json")).unwrap();
        let cfg = MatcherConfig::load(data("router_config.json")).unwrap();
        Router::tfidf(&corpus, FeatureSchema::pima(), cfg).unwrap()
    })
}

fn kb() -> &'static KnowledgeBase {
    static KB: OnceLock<KnowledgeBase> = OnceLock::new();
    KB.get_or_init(|| KnowledgeBase::load(data("evidence_kb.json")).unwrap())
}

fn query() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9 ?,.']{0,60}",
        (
            prop::sample::select(vec![
                "why is patient {} high risk",
                "show recommendations for patient {}",
                "compare glucose range for patient {}",
                "what is the risk of patient {}",
                "show evidence for bmi",
                "summarize the dataset",
            ]),
            0u64..900
        )
            .prop_map(|(t, id)| t.replace("{}", &id.to_string())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn routing_is_deterministic_and_consistent(q in query(), patient in prop::option::of(0u64..768)) {
        let r = router();
        let a = r.route(&q, patient);
        prop_assert_eq!(&a, &r.route(&q, patient));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a.similarity));
        match a.route {
            Route::Grammar => {
                prop_assert!(a.intent.is_some() && a.command.is_some());
                prop_assert!(a.similarity >= r.threshold());
                prop_assert!(a.demoted.is_none());
            }
            Route::Fallback => {
                prop_assert!(a.command.is_none());
                prop_assert!(a.similarity < r.threshold() || a.demoted.is_some());
            }
        }
    }

    #[test]
    fn normalization_is_idempotent(q in "[ -~]{0,50}") {
        let once = normalize(&q);
        prop_assert_eq!(normalize(&once), once.clone());
        prop_assert_eq!(normalize(&q.to_uppercase()), normalize(&q.to_lowercase()));
    }

    #[test]
    fn packs_respect_the_budget(
        sizes in prop::collection::vec(0usize..30_000, 0..8),
        bins in 0usize..4000,
        tag in prop::sample::select(vec![ViewTag::Record, ViewTag::Importance, ViewTag::Ranges, ViewTag::Recommendation]),
    ) {
        let turns: Vec<Turn> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| Turn { user: format!("{i}:{}", "q".repeat(n)), system: "a".repeat(n / 2) })
            .collect();
        let record = PatientRecord { id: 7, values: vec![1.0, 150.0, 70.0, 20.0, 80.0, 31.5, 0.4, 45.0], label: None };
        let schema = FeatureSchema::pima();
        let view = ActiveView {
            tag,
            data: json!({"histogram": {"counts": vec![1; bins], "edges": vec![0.5; bins + 1]}, "risk": 0.7}),
            features: vec!["Glucose".into(), "BMI".into(), "Insulin".into()],
        };
        let pack = build_context(&turns, Some((&record, &schema)), view, kb());
        prop_assert!(pack.byte_len() <= MAX_PACK_BYTES);
        prop_assert_eq!(pack.byte_len(), pack.to_json().len());
        prop_assert!(pack.recent_turns.len() <= MAX_TURNS);
        prop_assert_eq!(pack.patient_values.len(), 8);
        prop_assert_eq!(pack.patient_id, Some(7));
        // Kept turns are a suffix of the history, in order.
        let start = turns.len() - pack.recent_turns.len();
        prop_assert_eq!(&pack.recent_turns[..], &turns[start..]);
    }

    #[test]
    fn calibration_picks_a_best_grid_point(
        items in prop::collection::vec((0.0..1.0f64, any::<bool>(), any::<bool>()), 2..60),
    ) {
        let scored: Vec<ScoredItem> = items
            .iter()
            .map(|&(similarity, in_scope, intent_correct)| ScoredItem { similarity, in_scope, intent_correct })
            .collect();
        let both = scored.iter().any(|s| s.in_scope) && scored.iter().any(|s| !s.in_scope);
        match calibrate_items(&scored) {
            Ok(c) => {
                prop_assert!(both);
                prop_assert!(c.threshold > 0.0 && c.threshold < 1.0);
                for step in 1..=99 {
                    let t = step as f64 / 100.0;
                    let acc = scored
                        .iter()
                        .filter(|s| if s.in_scope { s.similarity >= t && s.intent_correct } else { s.similarity < t })
                        .count() as f64
                        / scored.len() as f64;
                    prop_assert!(acc <= c.accuracy + 1e-12);
                }
            }
            Err(_) => prop_assert!(!both),
        }
    }
}

#[test]
fn exact_prompts_reach_the_grammar() {
    let corpus = PromptCorpus::load(data("prompt_corpus.json")).unwrap();
    for e in corpus.entries() {
        let d = router().route(&e.text, Some(39));
        assert_eq!(d.route, Route::Grammar, "{}", e.text);
        assert_eq!(d.similarity, 1.0, "{}", e.text);
        assert_eq!(d.intent, Some(e.intent), "{}", e.text);
    }
}

#[test]
fn empty_kb_pack_has_no_excerpts() {
    let empty = KnowledgeBase::from_json(
        &json!({"version": "0", "checksum": compute_checksum("0", &[]), "entries": []}).to_string(),
    )
    .unwrap();
    let pack = build_context(&[], None, ActiveView::empty(ViewTag::Ranges), &empty);
    assert!(pack.evidence_excerpts.is_empty());
    assert!(pack.patient_values.is_empty());
}
