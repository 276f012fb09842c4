//! Performance-guided refinement (exploiter).

use std::collections::{BTreeMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::db::{ExperimentDb, Field};
use super::plugin::{request_design, DesignGenerator, ExploitContext, GeneratorRequest};
use super::{Design, ExperimentRecord, ExploitMode, SearchConfig, SearchError};
use crate::datamodel::DatasetKind;

/// Scored records by AUC descending (ties to the lower id), at most `k`.
pub fn top_by_auc(db: &ExperimentDb, k: usize) -> Vec<&ExperimentRecord> {
    let mut scored: Vec<&ExperimentRecord> = db.scored().collect();
    scored.sort_by(|a, b| {
        b.auc()
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.auc().unwrap_or(f64::NEG_INFINITY))
            .then(a.id.cmp(&b.id))
    });
    scored.truncate(k);
    scored
}

/// Index drawn with probability proportional to `weights`; uniform when
/// every weight is zero.
pub fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    debug_assert!(!weights.is_empty());
    match WeightedIndex::new(weights) {
        Ok(dist) => dist.sample(rng),
        Err(_) => rng.random_range(0..weights.len()),
    }
}

fn gain(auc: f64) -> f64 {
    (auc - 0.5).max(0.0)
}

/// Picks the parent for the next refinement.
///
/// `Cluster`: group the top-K by root ancestor, pick a group with weight
/// max(best AUC - 0.5, 0), then a member with weight max(AUC - 0.5, 0).
/// `Flat`: pick among the top-K with weight |AUC - 0.5|.
pub fn select_parent<'a>(
    db: &'a ExperimentDb,
    top_k: usize,
    mode: ExploitMode,
    rng: &mut ChaCha8Rng,
) -> Result<&'a ExperimentRecord, SearchError> {
    let top = top_by_auc(db, top_k);
    if top.is_empty() {
        return Err(SearchError::NoScoredRecords);
    }
    let auc = |r: &ExperimentRecord| r.auc().unwrap_or(0.5);
    match mode {
        ExploitMode::Flat => {
            let w: Vec<f64> = top.iter().map(|r| (auc(r) - 0.5).abs()).collect();
            Ok(top[weighted_pick(&w, rng)])
        }
        ExploitMode::Cluster => {
            let mut clusters: BTreeMap<_, Vec<&ExperimentRecord>> = BTreeMap::new();
            for r in top {
                clusters.entry(db.root_of(r.id)).or_default().push(r);
            }
            let clusters: Vec<Vec<&ExperimentRecord>> = clusters.into_values().collect();
            let cw: Vec<f64> = clusters
                .iter()
                .map(|c| gain(c.iter().map(|r| auc(r)).fold(f64::NEG_INFINITY, f64::max)))
                .collect();
            let chosen = &clusters[weighted_pick(&cw, rng)];
            let rw: Vec<f64> = chosen.iter().map(|r| gain(auc(r))).collect();
            Ok(chosen[weighted_pick(&rw, rng)])
        }
    }
}

/// Assembles the refinement context for `parent`.
pub fn exploit_context(
    db: &ExperimentDb,
    parent: &ExperimentRecord,
    retrieval_k: usize,
    kind: DatasetKind,
    nonce: u64,
) -> ExploitContext {
    let query = format!("{} {}", parent.design.idea, parent.design.design_justification);
    let mut related = db.retrieve_semantic(&parent.design.idea, Field::Idea, retrieval_k);
    related.extend(db.retrieve_bm25(&query, retrieval_k));
    let mut seen = HashSet::from([parent.id]);
    ExploitContext {
        nonce,
        kind,
        parent: parent.clone(),
        ancestors: db.ancestors(parent.id).into_iter().cloned().collect(),
        siblings: db.children(parent.id).into_iter().cloned().collect(),
        related: related
            .into_iter()
            .filter(|r| seen.insert(r.id))
            .cloned()
            .collect(),
    }
}

/// One refined design whose parent is the selected record.
pub fn exploiter_step(
    db: &ExperimentDb,
    config: &SearchConfig,
    kind: DatasetKind,
    generator: &mut dyn DesignGenerator,
    rng: &mut ChaCha8Rng,
) -> Result<Design, SearchError> {
    let parent = select_parent(db, config.top_k_exploit, config.exploit_mode, rng)?;
    let context = exploit_context(db, parent, config.retrieval_k, kind, rng.random());
    let mut design = request_design(generator, &GeneratorRequest::Exploit(context))?;
    design.parent_id = Some(parent.id);
    Ok(design)
}
