//! Threshold calibration on a labeled query set.

use serde::{Deserialize, Serialize};

use super::{Intent, Route, Router, RouterError, SemanticMatcher};

/// A calibration query. Out-of-scope items carry no intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub text: String,
    pub in_scope: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<Intent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    /// Share of items whose route matches their label at `threshold`.
    pub accuracy: f64,
    pub n_items: usize,
}

const GRID_STEPS: u32 = 99;

/// Matcher output for one labeled item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredItem {
    pub similarity: f64,
    pub in_scope: bool,
    /// Whether the nearest prompt carries the labeled intent.
    pub intent_correct: bool,
}

/// Picks the threshold on the grid 0.01, 0.02, ..., 0.99 that maximizes
/// routing accuracy: an in-scope item is correct when its similarity reaches
/// the threshold and its intent matches, an out-of-scope item when its
/// similarity stays below. Ties go to the larger threshold.
pub fn calibrate_items(items: &[ScoredItem]) -> Result<Calibration, RouterError> {
    let pos = items.iter().filter(|it| it.in_scope).count();
    if pos == 0 || pos == items.len() {
        return Err(RouterError::SingleClassCalibration);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 1..=GRID_STEPS {
        let t = f64::from(i) / 100.0;
        let correct = items
            .iter()
            .filter(|it| {
                if it.in_scope {
                    it.similarity >= t && it.intent_correct
                } else {
                    it.similarity < t
                }
            })
            .count();
        let acc = correct as f64 / items.len() as f64;
        if acc >= best.0 {
            best = (acc, t);
        }
    }
    Ok(Calibration {
        threshold: best.1,
        accuracy: best.0,
        n_items: items.len(),
    })
}

/// Calibration on bare `(similarity, in_scope)` pairs.
pub fn calibrate_scores(scores: &[(f64, bool)]) -> Result<Calibration, RouterError> {
    let items: Vec<ScoredItem> = scores
        .iter()
        .map(|&(similarity, in_scope)| ScoredItem {
            similarity,
            in_scope,
            intent_correct: true,
        })
        .collect();
    calibrate_items(&items)
}

/// Scores every item with `matcher` and calibrates on the result. In-scope
/// items without an intent label count as correct whatever intent matches.
pub fn calibrate_threshold(matcher: &dyn SemanticMatcher, items: &[LabeledItem]) -> Result<Calibration, RouterError> {
    let scored: Vec<ScoredItem> = items
        .iter()
        .map(|it| {
            let (intent, similarity) = match matcher.match_intent(&it.text) {
                Ok((i, s)) => (Some(i), s),
                Err(_) => (None, 0.0),
            };
            ScoredItem {
                similarity,
                in_scope: it.in_scope,
                intent_correct: intent.is_some() && (it.intent.is_none() || it.intent == intent),
            }
        })
        .collect();
    calibrate_items(&scored)
}

/// Share of items whose full routing decision agrees with the label: in-scope
/// items must reach the grammar with the labeled intent (when given) and
/// out-of-scope items must reach the fallback.
pub fn routing_accuracy(router: &Router, items: &[LabeledItem], session_patient: Option<u64>) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let correct = items
        .iter()
        .filter(|it| {
            let d = router.route(&it.text, session_patient);
            if it.in_scope {
                d.route == Route::Grammar && it.intent.is_none_or(|i| d.intent == Some(i))
            } else {
                d.route == Route::Fallback
            }
        })
        .count();
    correct as f64 / items.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores() {
        let s = [(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        let c = calibrate_scores(&s).unwrap();
        assert_eq!(c.accuracy, 1.0);
        // Every threshold in (0.3, 0.8] is perfect; the largest grid point wins.
        assert!((c.threshold - 0.8).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(
            calibrate_scores(&[(0.5, true), (0.7, true)]),
            Err(RouterError::SingleClassCalibration)
        );
    }

    #[test]
    fn wrong_intent_never_counts() {
        let items = [
            ScoredItem { similarity: 0.9, in_scope: true, intent_correct: true },
            ScoredItem { similarity: 0.95, in_scope: true, intent_correct: false },
            ScoredItem { similarity: 0.2, in_scope: false, intent_correct: false },
        ];
        let c = calibrate_items(&items).unwrap();
        assert!((c.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.threshold - 0.9).abs() < 1e-12);
    }

    #[test]
    fn overlapping_scores() {
        let s = [(0.9, true), (0.4, true), (0.5, false), (0.1, false)];
        let c = calibrate_scores(&s).unwrap();
        assert_eq!(c.accuracy, 0.75);
        assert!((c.threshold - 0.9).abs() < 1e-12);
    }
}
