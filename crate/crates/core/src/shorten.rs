//! Iterative test shortening guided by CFA modification indices: replay of
//! a removal plan with a refit per stage, and advisory removal suggestions.

use serde::{Deserialize, Serialize};

use crate::cfa::{
    fit_indices, fit_model, modification_indices, CfaFit, CfaInput, CfaModel, CfaOptions,
    FitIndices, ModificationIndex, ParamDescriptor,
};
use crate::dataset::{FactorSpec, ItemId};
use crate::error::{Error, Result};

/// One or several items removed together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemSel {
    One(ItemId),
    Many(Vec<ItemId>),
}

impl ItemSel {
    pub fn items(&self) -> Vec<ItemId> {
        match self {
            ItemSel::One(i) => vec![*i],
            ItemSel::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalStep {
    pub item: ItemSel,
    #[serde(default)]
    pub reason: String,
}

/// Named short form: the item set left after `after_step` removal steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub after_step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShorteningPlan {
    pub steps: Vec<RemovalStep>,
    #[serde(default)]
    pub variants: Vec<Variant>,
}

/// A plan stage: the items and factor structure after `step` removals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanStage {
    pub step: usize,
    pub removed: Vec<ItemId>,
    pub reason: String,
    pub items: Vec<ItemId>,
    pub spec: FactorSpec,
}

impl ShorteningPlan {
    /// Parses either a bare JSON list of steps or an object with `steps`
    /// and optional `variants`.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let plan = if v.is_array() {
            ShorteningPlan { steps: serde_json::from_value(v)?, variants: Vec::new() }
        } else {
            serde_json::from_value(v)?
        };
        if let Some(v) = plan.variants.iter().find(|v| v.after_step > plan.steps.len()) {
            return Err(Error::Config(format!(
                "variant {} refers to step {} of a {}-step plan",
                v.name,
                v.after_step,
                plan.steps.len()
            )));
        }
        Ok(plan)
    }

    /// The removal sequence that produces the 17- and 15-item forms.
    pub fn builtin_cctt() -> Self {
        let steps = [
            (ItemSel::One(17), "correlates with Q24 and has a high difficulty"),
            (ItemSel::One(22), "correlates with Q2 and also loads on factor 4"),
            (ItemSel::One(9), "also loads on factors 1 and 2"),
            (ItemSel::One(10), "correlates with Q4 and loads on factors 1 and 2"),
            (ItemSel::One(2), "correlates with Q4 and is too easy"),
            (ItemSel::One(4), "loads on factors 4, 5 and 6"),
            (ItemSel::One(8), "also loads on factor 3"),
            (ItemSel::One(14), "last remaining canvas question"),
            (ItemSel::Many(vec![24, 25]), "block 6, the combination of constructs"),
        ];
        ShorteningPlan {
            steps: steps
                .into_iter()
                .map(|(item, reason)| RemovalStep { item, reason: reason.into() })
                .collect(),
            variants: vec![
                Variant { name: "cCTt-25".into(), after_step: 0 },
                Variant { name: "cCTt-17".into(), after_step: 8 },
                Variant { name: "cCTt-15".into(), after_step: 9 },
            ],
        }
    }

    /// Resolves `builtin:<name>` or reads a plan file.
    pub fn load(source: &str) -> Result<Self> {
        match source.strip_prefix("builtin:") {
            Some("cctt") => Ok(Self::builtin_cctt()),
            Some(other) => Err(Error::Config(format!("unknown built-in plan {other:?}"))),
            None => Self::from_json(&std::fs::read_to_string(source)?),
        }
    }

    /// Stage 0 (nothing removed) followed by one stage per step.
    pub fn stages(&self, spec: &FactorSpec) -> Result<Vec<PlanStage>> {
        let mut items = spec.items();
        let mut cur = spec.clone();
        let mut out = vec![PlanStage {
            step: 0,
            removed: Vec::new(),
            reason: String::new(),
            items: items.clone(),
            spec: cur.clone(),
        }];
        for (k, step) in self.steps.iter().enumerate() {
            let removed = step.item.items();
            if removed.is_empty() {
                return Err(Error::Config(format!("step {} removes no items", k + 1)));
            }
            for it in &removed {
                if !items.contains(it) {
                    return Err(Error::Config(format!(
                        "step {}: item {it} is not in the current item set",
                        k + 1
                    )));
                }
            }
            items.retain(|i| !removed.contains(i));
            cur = cur.without(&removed);
            out.push(PlanStage {
                step: k + 1,
                removed,
                reason: step.reason.clone(),
                items: items.clone(),
                spec: cur.clone(),
            });
        }
        Ok(out)
    }

    /// Item sets of the named variants.
    pub fn variant_items(&self, spec: &FactorSpec) -> Result<Vec<(String, Vec<ItemId>)>> {
        let stages = self.stages(spec)?;
        self.variants
            .iter()
            .map(|v| {
                let mut items = stages
                    .get(v.after_step)
                    .ok_or_else(|| Error::Config(format!("variant {} is past the plan", v.name)))?
                    .items
                    .clone();
                items.sort_unstable();
                Ok((v.name.clone(), items))
            })
            .collect()
    }

    /// Membership table: one column per item of `spec`, an `x` where the
    /// variant keeps the item. Tab separated.
    pub fn membership_table(&self, spec: &FactorSpec) -> Result<String> {
        let mut all = spec.items();
        all.sort_unstable();
        let mut out = String::new();
        for it in &all {
            out.push('\t');
            out.push_str(&it.to_string());
        }
        out.push('\n');
        for (name, items) in self.variant_items(spec)? {
            out.push_str(&name);
            for it in &all {
                out.push('\t');
                if items.contains(it) {
                    out.push('x');
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageResult {
    pub step: usize,
    pub removed: Vec<ItemId>,
    pub reason: String,
    pub items: Vec<ItemId>,
    pub factors: Vec<String>,
    pub fit_indices: FitIndices,
    pub heywood: Vec<ItemId>,
    #[serde(skip)]
    pub fit: CfaFit,
}

/// Refits the CFA at every stage of `plan`, starting from `spec` over the
/// moments in `input` (which must cover every item of `spec`).
pub fn replay_shortening(
    input: &CfaInput,
    spec: &FactorSpec,
    plan: &ShorteningPlan,
    opts: &CfaOptions,
) -> Result<Vec<StageResult>> {
    plan.stages(spec)?
        .into_iter()
        .map(|st| {
            let label = format!("shorten step {}", st.step);
            let run = || -> Result<StageResult> {
                let model = CfaModel::from_spec(&st.spec)?;
                let fit = fit_model(&model, input, opts)?;
                Ok(StageResult {
                    step: st.step,
                    removed: st.removed,
                    reason: st.reason,
                    items: st.items,
                    factors: model.factor_names.clone(),
                    fit_indices: fit_indices(&fit),
                    heywood: fit.heywood.clone(),
                    fit,
                })
            };
            run().map_err(|e| e.in_stage(label))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovalConstraints {
    /// A factor may not shrink below this many items.
    pub min_items_per_factor: usize,
    pub protected: Vec<ItemId>,
}

impl Default for RemovalConstraints {
    fn default() -> Self {
        RemovalConstraints { min_items_per_factor: 2, protected: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Suggestion {
    Remove {
        item: ItemId,
        /// Sum of the modification indices the item takes part in.
        score: f64,
        evidence: Vec<ModificationIndex>,
    },
    NoSuggestion {
        reason: String,
    },
}

/// Item with the largest aggregate modification-index involvement whose
/// removal respects `constraints`. Ties go to the lowest item id.
pub fn suggest_removal(fit: &CfaFit, constraints: &RemovalConstraints) -> Suggestion {
    let mis = modification_indices(fit);
    let model = &fit.model;
    let mut best: Option<(ItemId, f64)> = None;
    let mut ids = model.items.clone();
    ids.sort_unstable();
    for id in ids {
        if constraints.protected.contains(&id) {
            continue;
        }
        let pos = model.items.iter().position(|&x| x == id).unwrap();
        let f = model.primary_factor(pos);
        let size = (0..model.j()).filter(|&i| model.primary_factor(i) == f).count();
        if size <= constraints.min_items_per_factor {
            continue;
        }
        let score: f64 = mis
            .iter()
            .filter(|m| m.param.items().contains(&id))
            .filter_map(|m| m.mi)
            .sum();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((id, score));
        }
    }
    match best {
        Some((item, score)) => {
            let evidence = mis
                .into_iter()
                .filter(|m| m.param.items().contains(&item) && m.mi.is_some())
                .take(3)
                .collect();
            Suggestion::Remove { item, score, evidence }
        }
        None => Suggestion::NoSuggestion {
            reason: "no item can be removed under the given constraints".into(),
        },
    }
}

/// Short human-readable account of a suggestion's evidence.
pub fn justification(s: &Suggestion) -> String {
    match s {
        Suggestion::Remove { item, score, evidence } => {
            let parts: Vec<String> = evidence
                .iter()
                .map(|m| match &m.param {
                    ParamDescriptor::CrossLoading { factor, .. } => {
                        format!("loads on {factor} (MI {:.1})", m.mi.unwrap_or(0.0))
                    }
                    ParamDescriptor::ResidualCorrelation { a, b } => {
                        let other = if a == item { b } else { a };
                        format!("correlates with Q{other} (MI {:.1})", m.mi.unwrap_or(0.0))
                    }
                })
                .collect();
            format!("Q{item}: total MI {score:.1}; {}", parts.join(", "))
        }
        Suggestion::NoSuggestion { reason } => reason.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::model_df;
    use crate::dataset::cctt_factor_spec;

    #[test]
    fn builtin_df_sequence() {
        let spec = cctt_factor_spec();
        let stages = ShorteningPlan::builtin_cctt().stages(&spec).unwrap();
        let dfs: Vec<usize> = stages
            .iter()
            .map(|s| model_df(&s.spec, s.items.len()).unwrap())
            .collect();
        assert_eq!(dfs, [260, 237, 215, 194, 174, 155, 137, 120, 104, 80]);
        for w in stages.windows(2) {
            let drop = w[0].items.len() - w[1].items.len();
            assert!(drop == 1 || (drop == 2 && w[1].step == 9));
        }
        assert_eq!(stages[9].spec.k(), 5);
    }

    #[test]
    fn variants() {
        let plan = ShorteningPlan::builtin_cctt();
        let v = plan.variant_items(&cctt_factor_spec()).unwrap();
        assert_eq!(v[2].1, [1, 3, 5, 6, 7, 11, 12, 13, 15, 16, 18, 19, 20, 21, 23]);
        assert_eq!(v[1].1.len(), 17);
    }

    #[test]
    fn plan_json_forms() {
        let p = ShorteningPlan::from_json(r#"[{"item": 3, "reason": "x"}, {"item": [4, 5]}]"#).unwrap();
        assert_eq!(p.steps[1].item.items(), [4, 5]);
        let round = serde_json::to_string(&ShorteningPlan::builtin_cctt()).unwrap();
        assert_eq!(ShorteningPlan::from_json(&round).unwrap(), ShorteningPlan::builtin_cctt());
        assert!(ShorteningPlan::from_json(r#"{"steps": [], "variants": [{"name": "a", "after_step": 2}]}"#).is_err());
    }

    #[test]
    fn removing_twice_is_an_error() {
        let p = ShorteningPlan::from_json(r#"[{"item": 3}, {"item": 3}]"#).unwrap();
        assert!(p.stages(&cctt_factor_spec()).is_err());
        let p = ShorteningPlan::from_json(r#"[{"item": 99}]"#).unwrap();
        assert!(p.stages(&cctt_factor_spec()).is_err());
    }
}
