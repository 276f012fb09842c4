//! Novelty-guided design loop (explorer).

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::db::{ExperimentDb, Field};
use super::plugin::{
    request_design, request_verdict, DesignGenerator, GenerateContext, GeneratorRequest,
    JudgeRequest, NoveltyJudge, ReviseContext,
};
use super::{Design, ExperimentRecord, JudgeAction, SearchConfig, SearchError};
use crate::datamodel::DatasetKind;

/// Neighbors per semantic query.
pub const SEMANTIC_K: usize = 2;
/// Neighbors from the sparse query.
pub const BM25_K: usize = 5;

/// Up to `k` distinct records drawn uniformly without replacement.
pub fn sample_records(db: &ExperimentDb, k: usize, rng: &mut ChaCha8Rng) -> Vec<ExperimentRecord> {
    let n = db.len();
    sample(rng, n, k.min(n))
        .into_iter()
        .map(|i| db.records()[i].clone())
        .collect()
}

/// Prior designs close to `design`: semantic matches on idea, justification
/// and analysis (the latter two both queried with the justification text),
/// then BM25 over idea + justification. Deduplicated, first hit wins.
pub fn neighbors(db: &ExperimentDb, design: &Design) -> Vec<ExperimentRecord> {
    let just = &design.design_justification;
    let mut hits = db.retrieve_semantic(&design.idea, Field::Idea, SEMANTIC_K);
    hits.extend(db.retrieve_semantic(just, Field::Justification, SEMANTIC_K));
    hits.extend(db.retrieve_semantic(just, Field::Analysis, SEMANTIC_K));
    hits.extend(db.retrieve_bm25(&format!("{} {}", design.idea, just), BM25_K));
    let mut seen = std::collections::HashSet::new();
    hits.into_iter()
        .filter(|r| seen.insert(r.id))
        .cloned()
        .collect()
}

fn generate(
    db: &ExperimentDb,
    config: &SearchConfig,
    kind: DatasetKind,
    generator: &mut dyn DesignGenerator,
    rng: &mut ChaCha8Rng,
) -> Result<Design, SearchError> {
    let seeds = sample_records(db, config.explorer_seed_count, rng);
    request_design(
        generator,
        &GeneratorRequest::Generate(GenerateContext {
            nonce: rng.random(),
            kind,
            seeds,
        }),
    )
}

/// Produces one new design with no parent. The judge sees each candidate
/// together with its neighbors; after `explorer_refine_budget` rounds the
/// latest candidate is returned whatever the verdict.
pub fn explorer_step(
    db: &ExperimentDb,
    config: &SearchConfig,
    kind: DatasetKind,
    generator: &mut dyn DesignGenerator,
    judge: &mut dyn NoveltyJudge,
    rng: &mut ChaCha8Rng,
) -> Result<Design, SearchError> {
    let mut design = generate(db, config, kind, generator, rng)?;
    for _ in 0..config.explorer_refine_budget {
        let near = neighbors(db, &design);
        let verdict = request_verdict(
            judge,
            &JudgeRequest {
                design: design.clone(),
                neighbors: near.clone(),
            },
        )?;
        design = match verdict.action {
            JudgeAction::Accept => break,
            JudgeAction::Revise => request_design(
                generator,
                &GeneratorRequest::Revise(ReviseContext {
                    nonce: rng.random(),
                    kind,
                    design,
                    suggestions: verdict.suggestions,
                    neighbors: near,
                }),
            )?,
            JudgeAction::Redesign => generate(db, config, kind, generator, rng)?,
        };
    }
    design.parent_id = None;
    Ok(design)
}
