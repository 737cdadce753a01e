//! Actionable counterfactuals broken down into guideline-sized steps.
//!
//! The search only ever moves actionable features, only in their healthy
//! direction, and only inside the 1st–99th percentile band of the dataset.
//! Step limits and feasibility badges come from a [`StepRules`] table loaded
//! from configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::model::ProbabilityModel;
use crate::schema::{FeatureSchema, HealthyDirection};
use crate::stats::percentile;

/// Grid resolution: one step is this fraction of the feature's dataset range.
pub const GRID_DIVISIONS: f64 = 20.0;
/// Largest feature subset the search will combine.
pub const MAX_FEATURES_PER_CANDIDATE: usize = 3;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("step rules: {0}")]
    Rules(String),
    #[error("step rules file: {0}")]
    Io(#[from] std::io::Error),
    #[error("step rules file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("candidate does not flip the prediction to class 0")]
    NoFlip,
    #[error("candidate changes immutable feature `{0}`")]
    Immutable(String),
    #[error("unknown feature index {0}")]
    UnknownFeature(usize),
    #[error("candidate is empty")]
    EmptyCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    Easy,
    Moderate,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRule {
    /// Largest change a single step may make, in feature units.
    pub step_limit: f64,
    /// `|delta| <= easy_max` is easy.
    pub easy_max: f64,
    /// `|delta| <= moderate_max` is moderate; anything larger is hard.
    pub moderate_max: f64,
}

/// Per-feature step limits and badge thresholds, keyed by feature name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRules {
    pub features: BTreeMap<String, FeatureRule>,
}

impl StepRules {
    /// Parses and validates against `schema`: every actionable feature needs a
    /// rule and every limit must be positive.
    pub fn from_json(text: &str, schema: &FeatureSchema) -> Result<Self, RecommendError> {
        let rules: StepRules = serde_json::from_str(text)?;
        rules.validate(schema)?;
        Ok(rules)
    }

    pub fn load(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self, RecommendError> {
        Self::from_json(&fs::read_to_string(path)?, schema)
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), RecommendError> {
        for f in schema.features().iter().filter(|f| f.actionable) {
            if !self.features.contains_key(&f.name) {
                return Err(RecommendError::Rules(format!("no rule for actionable feature `{}`", f.name)));
            }
        }
        for (name, r) in &self.features {
            if schema.index_of(name).is_none() {
                return Err(RecommendError::Rules(format!("rule for unknown feature `{name}`")));
            }
            if !(r.step_limit > 0.0) {
                return Err(RecommendError::Rules(format!("`{name}`: step_limit must be positive")));
            }
            if !(0.0 <= r.easy_max && r.easy_max <= r.moderate_max) {
                return Err(RecommendError::Rules(format!(
                    "`{name}`: thresholds must satisfy 0 <= easy_max <= moderate_max"
                )));
            }
        }
        Ok(())
    }

    fn rule(&self, feature: &str) -> &FeatureRule {
        // Presence is checked at load time.
        &self.features[feature]
    }

    /// Placeholder table for the diabetes schema, pending clinical review.
    pub fn pima_defaults() -> Self {
        let rule = |step_limit, easy_max, moderate_max| FeatureRule {
            step_limit,
            easy_max,
            moderate_max,
        };
        Self {
            features: BTreeMap::from([
                ("Glucose".to_string(), rule(15.0, 10.0, 20.0)),
                ("BloodPressure".to_string(), rule(5.0, 3.0, 6.0)),
                ("SkinThickness".to_string(), rule(3.0, 2.0, 4.0)),
                ("Insulin".to_string(), rule(30.0, 20.0, 40.0)),
                ("BMI".to_string(), rule(2.0, 1.0, 2.5)),
            ]),
        }
    }
}

/// Badge for a single step of size `delta` on `feature`. Values exactly on
/// a threshold get the easier badge.
pub fn badge_feasibility(feature: &str, delta: f64, rules: &StepRules) -> Feasibility {
    let r = rules.rule(feature);
    let size = delta.abs();
    if size <= r.easy_max {
        Feasibility::Easy
    } else if size <= r.moderate_max {
        Feasibility::Moderate
    } else {
        Feasibility::Hard
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureChange {
    pub feature: usize,
    pub name: String,
    pub from: f64,
    pub to: f64,
}

impl FeatureChange {
    pub fn delta(&self) -> f64 {
        self.to - self.from
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualCandidate {
    pub changes: Vec<FeatureChange>,
    pub probability_after: f64,
}

impl CounterfactualCandidate {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for c in &self.changes {
            out[c.feature] = c.to;
        }
        out
    }

    pub fn touches(&self, feature: usize) -> bool {
        self.changes.iter().any(|c| c.feature == feature)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "candidates", rename_all = "snake_case")]
pub enum CounterfactualOutcome {
    NoChangeNeeded,
    Found(Vec<CounterfactualCandidate>),
    NoFeasiblePlan,
}

/// Per-feature grid and bounds for the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: Vec<f64>,
}

impl SearchSpace {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let d = dataset.schema().d();
        let mut space = Self {
            lower: Vec::with_capacity(d),
            upper: Vec::with_capacity(d),
            step: Vec::with_capacity(d),
        };
        for j in 0..d {
            let s = dataset.summary(j);
            let col = dataset.column(j);
            let (lo, hi) = if col.is_empty() {
                (s.min, s.max)
            } else {
                (percentile(&col, 0.01), percentile(&col, 0.99))
            };
            space.lower.push(lo);
            space.upper.push(hi);
            space.step.push((s.max - s.min) / GRID_DIVISIONS);
        }
        space
    }

    /// One grid step from `value` in the healthy direction, clamped to the
    /// bound; `None` when no movement is possible.
    fn advance(&self, feature: usize, value: f64, direction: HealthyDirection) -> Option<f64> {
        let step = self.step[feature];
        if !(step > 0.0) {
            return None;
        }
        let next = match direction {
            HealthyDirection::Decrease => (value - step).max(self.lower[feature]),
            HealthyDirection::Increase => (value + step).min(self.upper[feature]),
            HealthyDirection::None => return None,
        };
        let moved = match direction {
            HealthyDirection::Decrease => next < value,
            _ => next > value,
        };
        moved.then_some(next)
    }
}

fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in subsets(&items[i + 1..], size - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Greedy coordinate descent restricted to `features`: each round moves the
/// one feature whose next grid step yields the lowest probability, until the
/// prediction becomes 0 or no feature can move.
fn descend(
    model: &dyn ProbabilityModel,
    schema: &FeatureSchema,
    space: &SearchSpace,
    x: &[f64],
    features: &[usize],
) -> Option<Vec<f64>> {
    let mut current = x.to_vec();
    loop {
        if model.predict_class(&current) == 0 {
            return Some(current);
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in features {
            let Some(next) = space.advance(f, current[f], schema.feature(f).healthy_direction) else {
                continue;
            };
            let saved = current[f];
            current[f] = next;
            let p = model.probability(&current);
            current[f] = saved;
            if best.is_none_or(|(_, _, bp)| p < bp) {
                best = Some((f, next, p));
            }
        }
        let (f, next, _) = best?;
        current[f] = next;
    }
}

/// Searches single actionable features first, then pairs, then triples.
/// Subsets containing an already successful smaller subset are skipped, so
/// every returned candidate is minimal. Candidates are ordered by number of
/// changed features, then by total change in units of dataset range.
pub fn generate_counterfactual(
    model: &dyn ProbabilityModel,
    x: &[f64],
    schema: &FeatureSchema,
    space: &SearchSpace,
) -> CounterfactualOutcome {
    if model.predict_class(x) == 0 {
        return CounterfactualOutcome::NoChangeNeeded;
    }
    let actionable: Vec<usize> = (0..schema.d())
        .filter(|&f| schema.is_actionable(f) && schema.feature(f).healthy_direction != HealthyDirection::None)
        .collect();

    let mut found: Vec<CounterfactualCandidate> = Vec::new();
    let mut winning_sets: Vec<Vec<usize>> = Vec::new();
    for size in 1..=MAX_FEATURES_PER_CANDIDATE.min(actionable.len()) {
        for subset in subsets(&actionable, size) {
            if winning_sets.iter().any(|w| w.iter().all(|f| subset.contains(f))) {
                continue;
            }
            let Some(end) = descend(model, schema, space, x, &subset) else {
                continue;
            };
            let changes: Vec<FeatureChange> = subset
                .iter()
                .filter(|&&f| end[f] != x[f])
                .map(|&f| FeatureChange {
                    feature: f,
                    name: schema.feature(f).name.clone(),
                    from: x[f],
                    to: end[f],
                })
                .collect();
            let used: Vec<usize> = changes.iter().map(|c| c.feature).collect();
            if !winning_sets.contains(&used) {
                winning_sets.push(used);
                found.push(CounterfactualCandidate {
                    probability_after: model.probability(&end),
                    changes,
                });
            }
        }
    }
    if found.is_empty() {
        return CounterfactualOutcome::NoFeasiblePlan;
    }
    let cost = |c: &CounterfactualCandidate| -> f64 {
        c.changes
            .iter()
            .map(|ch| {
                let range = space.step[ch.feature] * GRID_DIVISIONS;
                if range > 0.0 { ch.delta().abs() / range } else { 0.0 }
            })
            .sum()
    };
    found.sort_by(|a, b| {
        a.changes
            .len()
            .cmp(&b.changes.len())
            .then(cost(a).total_cmp(&cost(b)))
    });
    CounterfactualOutcome::Found(found)
}

/// Drops candidates that touch a non-actionable feature.
pub fn filter_immutable(candidates: Vec<CounterfactualCandidate>, schema: &FeatureSchema) -> Vec<CounterfactualCandidate> {
    candidates
        .into_iter()
        .filter(|c| c.changes.iter().all(|ch| ch.feature < schema.d() && schema.is_actionable(ch.feature)))
        .collect()
}

/// Splits `delta` into pieces of at most `limit` in magnitude, full-size
/// pieces first. The pieces sum to `delta`.
pub fn split_delta(delta: f64, limit: f64) -> Vec<f64> {
    assert!(limit > 0.0, "step limit must be positive");
    if delta == 0.0 {
        return Vec::new();
    }
    let sign = delta.signum();
    let size = delta.abs();
    let ratio = size / limit;
    // Absorb floating error so that 16 / 4 gives four steps, not five.
    let full = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round() as usize
    } else {
        ratio.floor() as usize
    };
    let mut out = vec![sign * limit; full];
    let remainder = delta - out.iter().sum::<f64>();
    if remainder.abs() > 1e-9 * limit {
        out.push(remainder);
    } else if let Some(last) = out.last_mut() {
        *last += remainder;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationStep {
    pub feature: String,
    pub delta: f64,
    /// Feature value after this step.
    pub cumulative_value: f64,
    pub feasibility: Feasibility,
    pub predicted_probability_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationPlan {
    pub patient: u64,
    pub steps: Vec<RecommendationStep>,
    /// 1-based index of the step after which the prediction becomes 0.
    pub flips_at_step: usize,
    pub horizon_note: String,
}

/// Splits every change of `candidate` into guideline-sized steps, orders
/// them easiest first and replays them through the model. Steps after the
/// first one that reaches class 0 are dropped.
pub fn decompose_steps(
    model: &dyn ProbabilityModel,
    patient: u64,
    x: &[f64],
    candidate: &CounterfactualCandidate,
    schema: &FeatureSchema,
    rules: &StepRules,
) -> Result<RecommendationPlan, RecommendError> {
    if candidate.changes.is_empty() {
        return Err(RecommendError::EmptyCandidate);
    }
    struct Pending {
        order: usize,
        feature: usize,
        delta: f64,
        target: f64,
        badge: Feasibility,
    }
    let mut pending = Vec::new();
    for (order, ch) in candidate.changes.iter().enumerate() {
        if ch.feature >= schema.d() {
            return Err(RecommendError::UnknownFeature(ch.feature));
        }
        let def = schema.feature(ch.feature);
        if !def.actionable {
            return Err(RecommendError::Immutable(def.name.clone()));
        }
        let rule = rules
            .features
            .get(&def.name)
            .ok_or_else(|| RecommendError::Rules(format!("no rule for `{}`", def.name)))?;
        if !(rule.step_limit > 0.0) {
            return Err(RecommendError::Rules(format!("`{}`: step_limit must be positive", def.name)));
        }
        for delta in split_delta(ch.delta(), rule.step_limit) {
            pending.push(Pending {
                order,
                feature: ch.feature,
                delta,
                target: ch.to,
                badge: badge_feasibility(&def.name, delta, rules),
            });
        }
    }
    // Stable: equal badges keep candidate order, then piece order.
    pending.sort_by_key(|p| (p.badge, p.order));

    let mut remaining = vec![0usize; schema.d()];
    for p in &pending {
        remaining[p.feature] += 1;
    }

    let mut current = x.to_vec();
    let mut steps = Vec::new();
    let mut flips_at_step = 0;
    for p in pending {
        remaining[p.feature] -= 1;
        // The feature's final piece lands exactly on the candidate value.
        current[p.feature] = if remaining[p.feature] == 0 {
            p.target
        } else {
            current[p.feature] + p.delta
        };
        let prob = model.probability(&current);
        steps.push(RecommendationStep {
            feature: schema.feature(p.feature).name.clone(),
            delta: p.delta,
            cumulative_value: current[p.feature],
            feasibility: p.badge,
            predicted_probability_after: prob,
        });
        if model.predict_class(&current) == 0 {
            flips_at_step = steps.len();
            break;
        }
    }
    if flips_at_step == 0 {
        return Err(RecommendError::NoFlip);
    }
    let features: Vec<&str> = candidate.changes.iter().map(|c| c.name.as_str()).collect();
    let horizon_note = format!(
        "{} step{} on {}; the predicted class changes after step {}.",
        steps.len(),
        if steps.len() == 1 { "" } else { "s" },
        features.join(", "),
        flips_at_step
    );
    Ok(RecommendationPlan {
        patient,
        steps,
        flips_at_step,
        horizon_note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecommendOutcome {
    NoChangeNeeded,
    Planned {
        plan: RecommendationPlan,
        candidate: CounterfactualCandidate,
        alternatives: usize,
    },
    NoFeasiblePlan,
}

/// Full pipeline: search, filter, decompose the best remaining candidate.
pub fn recommend(
    model: &dyn ProbabilityModel,
    patient: u64,
    x: &[f64],
    schema: &FeatureSchema,
    space: &SearchSpace,
    rules: &StepRules,
) -> Result<RecommendOutcome, RecommendError> {
    match generate_counterfactual(model, x, schema, space) {
        CounterfactualOutcome::NoChangeNeeded => Ok(RecommendOutcome::NoChangeNeeded),
        CounterfactualOutcome::NoFeasiblePlan => Ok(RecommendOutcome::NoFeasiblePlan),
        CounterfactualOutcome::Found(candidates) => {
            let mut candidates = filter_immutable(candidates, schema);
            if candidates.is_empty() {
                return Ok(RecommendOutcome::NoFeasiblePlan);
            }
            let best = candidates.remove(0);
            let plan = decompose_steps(model, patient, x, &best, schema, rules)?;
            Ok(RecommendOutcome::Planned {
                plan,
                candidate: best,
                alternatives: candidates.len(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FnModel;

    fn bmi_rules(limit: f64) -> StepRules {
        let mut r = StepRules::pima_defaults();
        r.features.get_mut("BMI").unwrap().step_limit = limit;
        r
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_delta(-16.0, 4.0), vec![-4.0; 4]);
        assert_eq!(split_delta(-10.0, 4.0), vec![-4.0, -4.0, -2.0]);
        assert_eq!(split_delta(0.0, 4.0), Vec::<f64>::new());
        let pieces = split_delta(-3.3, 1.1);
        assert_eq!(pieces.len(), 3);
        assert!((pieces.iter().sum::<f64>() + 3.3).abs() < 1e-12);
    }

    #[test]
    fn badge_thresholds() {
        let r = StepRules::pima_defaults();
        assert_eq!(badge_feasibility("BMI", -1.0, &r), Feasibility::Easy);
        assert_eq!(badge_feasibility("BMI", -2.5, &r), Feasibility::Moderate);
        assert_eq!(badge_feasibility("BMI", -2.6, &r), Feasibility::Hard);
        assert_eq!(badge_feasibility("Glucose", -30.0, &r), Feasibility::Hard);
        assert_eq!(badge_feasibility("Glucose", -10.0, &r), Feasibility::Easy);
    }

    #[test]
    fn rules_are_validated_at_load() {
        let schema = FeatureSchema::pima();
        let mut r = StepRules::pima_defaults();
        r.features.remove("Insulin");
        let text = serde_json::to_string(&r).unwrap();
        assert!(matches!(StepRules::from_json(&text, &schema), Err(RecommendError::Rules(_))));
        let mut r = StepRules::pima_defaults();
        r.features.get_mut("BMI").unwrap().step_limit = 0.0;
        assert!(r.validate(&schema).is_err());
        let ok = serde_json::to_string(&StepRules::pima_defaults()).unwrap();
        assert!(StepRules::from_json(&ok, &schema).is_ok());
    }

    /// Risk driven by BMI only: class 1 while BMI >= 25.
    fn bmi_model() -> FnModel<impl Fn(&[f64]) -> f64 + Sync> {
        FnModel(|x: &[f64]| (0.5 + 0.02 * (x[5] - 25.0)).clamp(0.0, 1.0))
    }

    fn change(schema: &FeatureSchema, name: &str, from: f64, to: f64) -> FeatureChange {
        FeatureChange {
            feature: schema.index_of(name).unwrap(),
            name: name.into(),
            from,
            to,
        }
    }

    #[test]
    fn bmi_plan_steps() {
        let schema = FeatureSchema::pima();
        let x = [2.0, 120.0, 70.0, 20.0, 80.0, 37.0, 0.5, 40.0];
        let cand = CounterfactualCandidate {
            changes: vec![change(&schema, "BMI", 37.0, 21.0)],
            probability_after: 0.42,
        };
        let plan = decompose_steps(&bmi_model(), 39, &x, &cand, &schema, &bmi_rules(4.0)).unwrap();
        // 37 -> 33 -> 29 -> 25 (p = 0.5, still class 1) -> 21.
        assert_eq!(plan.steps.len(), 4);
        assert!(plan.steps.iter().all(|s| s.delta == -4.0));
        assert_eq!(plan.flips_at_step, 4);
        assert_eq!(plan.steps[3].cumulative_value, 21.0);
        let probs: Vec<f64> = plan.steps.iter().map(|s| s.predicted_probability_after).collect();
        assert!(probs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn trailing_steps_are_truncated() {
        let schema = FeatureSchema::pima();
        let x = [2.0, 120.0, 70.0, 20.0, 80.0, 27.0, 0.5, 40.0];
        let cand = CounterfactualCandidate {
            changes: vec![change(&schema, "BMI", 27.0, 17.0)],
            probability_after: 0.34,
        };
        let plan = decompose_steps(&bmi_model(), 1, &x, &cand, &schema, &bmi_rules(4.0)).unwrap();
        // Pieces -4, -4, -2; the moderate -2 goes first: 27 -> 25 (p = 0.5), then 25 -> 21 flips.
        assert_eq!(plan.flips_at_step, 2);
        assert_eq!(plan.steps.len(), 2);
        assert_eq!(plan.steps[0].delta, -2.0);
        assert_eq!(plan.steps[0].feasibility, Feasibility::Moderate);
        assert_eq!(plan.steps[1].cumulative_value, 21.0);
    }

    #[test]
    fn immutable_changes_are_rejected_and_filtered() {
        let schema = FeatureSchema::pima();
        let age = CounterfactualCandidate {
            changes: vec![change(&schema, "Age", 50.0, 30.0)],
            probability_after: 0.1,
        };
        let ok = CounterfactualCandidate {
            changes: vec![change(&schema, "BMI", 37.0, 30.0), change(&schema, "Glucose", 150.0, 120.0)],
            probability_after: 0.1,
        };
        let kept = filter_immutable(vec![age.clone(), ok.clone()], &schema);
        assert_eq!(kept, vec![ok.clone()]);
        assert_eq!(filter_immutable(kept.clone(), &schema), kept);
        assert!(filter_immutable(vec![], &schema).is_empty());
        let x = [0.0; 8];
        assert!(matches!(
            decompose_steps(&bmi_model(), 0, &x, &age, &schema, &StepRules::pima_defaults()),
            Err(RecommendError::Immutable(_))
        ));
    }

    fn grid_dataset() -> Dataset {
        use crate::data::PatientRecord;
        let records = (0..101)
            .map(|i| PatientRecord {
                id: i,
                values: vec![
                    1.0,
                    80.0 + i as f64,
                    60.0 + 0.3 * i as f64,
                    20.0,
                    50.0 + i as f64,
                    20.0 + 0.2 * i as f64,
                    0.4,
                    30.0,
                ],
                label: Some((i % 2) as u8),
            })
            .collect();
        Dataset::new(FeatureSchema::pima(), records).unwrap()
    }

    #[test]
    fn search_moves_only_actionable_features_downward() {
        let ds = grid_dataset();
        let space = SearchSpace::from_dataset(&ds);
        let schema = ds.schema();
        // Depends on Age (immutable) and on Glucose + BMI.
        let m = FnModel(|x: &[f64]| {
            let z = 0.04 * (x[1] - 120.0) + 0.2 * (x[5] - 30.0) + 0.05 * (x[7] - 30.0);
            1.0 / (1.0 + (-z).exp())
        });
        let x = [1.0, 170.0, 80.0, 20.0, 100.0, 38.0, 0.4, 60.0];
        let CounterfactualOutcome::Found(cands) = generate_counterfactual(&m, &x, schema, &space) else {
            panic!("expected candidates");
        };
        for c in &cands {
            assert_eq!(m.predict_class(&c.apply(&x)), 0);
            for ch in &c.changes {
                assert!(schema.is_actionable(ch.feature));
                assert!(ch.to < ch.from);
                assert!(ch.to >= space.lower[ch.feature]);
            }
        }
        // Minimality: no candidate's feature set contains another's.
        for a in &cands {
            for b in &cands {
                if a != b {
                    assert!(!a.changes.iter().all(|ch| b.touches(ch.feature)) || a.changes.len() == b.changes.len());
                }
            }
        }
        let plan = decompose_steps(&m, 0, &x, &cands[0], schema, &StepRules::pima_defaults()).unwrap();
        let mut replay = x.to_vec();
        for (i, s) in plan.steps.iter().enumerate() {
            let f = schema.index_of(&s.feature).unwrap();
            replay[f] = s.cumulative_value;
            assert_eq!(m.predict_class(&replay) == 0, i + 1 == plan.flips_at_step);
        }
    }

    #[test]
    fn already_low_risk_and_infeasible() {
        let ds = grid_dataset();
        let space = SearchSpace::from_dataset(&ds);
        let low = FnModel(|_: &[f64]| 0.1);
        assert_eq!(
            generate_counterfactual(&low, &[0.0; 8], ds.schema(), &space),
            CounterfactualOutcome::NoChangeNeeded
        );
        // Only age matters, which cannot change.
        let age_only = FnModel(|x: &[f64]| if x[7] > 40.0 { 0.9 } else { 0.1 });
        let x = [1.0, 150.0, 80.0, 20.0, 100.0, 38.0, 0.4, 60.0];
        assert_eq!(
            generate_counterfactual(&age_only, &x, ds.schema(), &space),
            CounterfactualOutcome::NoFeasiblePlan
        );
    }
}
