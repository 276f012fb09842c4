//! Offline design generator and novelty judge.
//!
//! The generator mutates templates over the registered signal families.
//! A design's `implementation_instruction` is a signal spec such as
//! `geo_edit_distance d_max=10`; codegen writes a shell wrapper that runs
//! the candidate binary with that spec. Everything is a pure function of
//! the request, so runs are reproducible.

use std::collections::HashSet;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use super::embed::{cosine, embed_text};
use super::plugin::{
    AnalyzeContext, CodegenContext, DesignGenerator, DesignReply, ExploitContext, FixContext,
    GenerateContext, GeneratorRequest, GeneratorResponse, JudgeRequest, NoveltyJudge, PluginError,
    ReviseContext,
};
use super::{Design, ExperimentRecord, JudgeAction, JudgeVerdict};
use crate::datamodel::DatasetKind;
use crate::signals::{Signal, SignalSpec, SIGNAL_NAMES};

/// Designs at least this similar to a neighbor are sent back for revision.
pub const NOVELTY_THRESHOLD: f64 = 0.95;

struct Family {
    name: &'static str,
    idea: &'static str,
    justification: &'static str,
    representation: &'static str,
    comparison: &'static str,
    aggregation: &'static str,
    score: &'static str,
    /// Values tried when mutating each parameter.
    grid: &'static [(&'static str, &'static [&'static str])],
}

const FAMILIES: &[Family] = &[
    Family {
        name: "max_coverage",
        idea: "Best n-gram coverage of the true suffix by any sampled continuation",
        justification: "Memorized suffixes are reproduced verbatim by at least one sample, so long shared n-grams appear",
        representation: "whitespace tokens of suffix and generations",
        comparison: "n-gram hits of suffix positions inside each generation",
        aggregation: "maximum over generations",
        score: "coverage fraction, higher for members",
        grid: &[("order", &["1", "2", "3", "4", "5", "6"])],
    },
    Family {
        name: "geo_edit_distance",
        idea: "Geometric mean of suffix proximity and cross-generation consistency under capped edit distance",
        justification: "Members pull generations toward the suffix and toward each other; both medians shrink",
        representation: "token sequences of suffix and generations",
        comparison: "capped normalized Levenshtein distances, generation to suffix and pairwise",
        aggregation: "medians, combined by geometric mean",
        score: "one minus distance, clamped to the unit interval",
        grid: &[("d_max", &["2", "4", "6", "8", "10", "15", "20"])],
    },
    Family {
        name: "rare_trigram_agg",
        idea: "Log inverse frequency of trigrams the model generates, discounted by recurrence",
        justification: "Rare phrasing surfacing in generations hints at memorized content",
        representation: "distinct trigrams per generation",
        comparison: "global trigram frequency and per-sample recurrence",
        aggregation: "sum of log inverse weights",
        score: "log-weight total",
        grid: &[],
    },
    Family {
        name: "rarity_longest_match",
        idea: "Edit distance to the suffix softened by the rarity of the longest shared span",
        justification: "A long rare span shared with the suffix is stronger evidence than common fragments",
        representation: "suffix 1-3 gram counts and longest contiguous match",
        comparison: "normalized edit distance weighted by span rarity",
        aggregation: "maximum over generations",
        score: "one minus weighted distance",
        grid: &[("d_max", &["none", "5", "10", "20"])],
    },
    Family {
        name: "inv_freq_mismatch",
        idea: "Inverse-frequency weighted positional mismatch over the closest generations",
        justification: "Mismatches on rare suffix tokens among near-copies separate members",
        representation: "suffix token frequencies and aligned positions",
        comparison: "position-wise token mismatch weighted by inverse frequency",
        aggregation: "maximum over the closest fraction of generations",
        score: "weighted mismatch mass",
        grid: &[
            ("d_max", &["none", "10"]),
            ("keep_fraction", &["0.3", "0.5", "0.7", "0.9", "1"]),
        ],
    },
    Family {
        name: "recurrent_rare_trigram",
        idea: "Rare suffix trigrams that recur across several generations",
        justification: "Recurring reproduction of rare suffix phrases points to memorization",
        representation: "suffix trigram counts",
        comparison: "presence of each suffix trigram across generations",
        aggregation: "sum of inverse-count weights over recurrent trigrams",
        score: "recurrence-weighted total",
        grid: &[],
    },
    Family {
        name: "internal_repetition",
        idea: "Excess repeated 3-5 grams inside each generation",
        justification: "Degenerate repetition differs between familiar and unfamiliar prefixes",
        representation: "3, 4 and 5-gram counts per generation",
        comparison: "excess occurrences beyond the first",
        aggregation: "length-normalized mean over generations",
        score: "mean repetition rate",
        grid: &[],
    },
    Family {
        name: "max_renyi",
        idea: "Negated Renyi entropy over the most confident positions",
        justification: "Members produce sharper next-token distributions",
        representation: "softmax of each logit row",
        comparison: "Renyi entropy per position",
        aggregation: "mean over the lowest-entropy fraction",
        score: "negated entropy",
        grid: &[
            ("alpha", &["0.25", "0.5", "2", "3"]),
            ("top_fraction", &["0.05", "0.1", "0.2", "0.5"]),
        ],
    },
    Family {
        name: "rank_stability",
        idea: "Stability of top-k token rankings under Gaussian logit noise",
        justification: "Memorized positions keep their ranking when logits are perturbed",
        representation: "top-k indices per perturbed pass",
        comparison: "normalized inversion counts between passes",
        aggregation: "mean over pass pairs",
        score: "negated instability",
        grid: &[
            ("passes", &["3", "5", "8"]),
            ("sigma", &["0.05", "0.1", "0.2"]),
            ("k", &["5", "10"]),
        ],
    },
    Family {
        name: "log_ratio_variance",
        idea: "Position-decayed variance of log-ratio gaps between the true token and its alternatives",
        justification: "Members show a distinctive margin profile early in the sequence",
        representation: "true-token log-probability and restricted softmax of top alternatives",
        comparison: "gap vector variance with exponential decay",
        aggregation: "mean of the upper tail",
        score: "decayed variance",
        grid: &[
            ("decay_scale", &["4", "8", "16"]),
            ("top_fraction", &["0.05", "0.1", "0.25"]),
        ],
    },
    Family {
        name: "topk_confidence",
        idea: "Mean log-probability of the top-k tokens at the most confident positions",
        justification: "Members concentrate probability mass on few candidates",
        representation: "full softmax per position",
        comparison: "mean top-k log-probability",
        aggregation: "mean over the upper tail of positions",
        score: "confidence, higher for members",
        grid: &[
            ("k", &["1", "3", "5", "10"]),
            ("top_fraction", &["0.05", "0.1", "0.25"]),
        ],
    },
    Family {
        name: "neighbor_entropy_contrast",
        idea: "True-token log-probability contrasted with entropy of similar positions",
        justification: "Members are confident where similar contexts are uncertain",
        representation: "normalized leading logit dimensions as position embeddings",
        comparison: "log-probability minus mean neighbor entropy",
        aggregation: "mean over positions",
        score: "contrast, higher for members",
        grid: &[("embed_dims", &["32", "64", "128"]), ("k", &["3", "5", "8"])],
    },
];

fn family(name: &str) -> Option<&'static Family> {
    FAMILIES.iter().find(|f| f.name == name)
}

fn families_for(kind: DatasetKind) -> Vec<&'static Family> {
    FAMILIES
        .iter()
        .filter(|f| {
            SignalSpec::default_for(f.name)
                .map(|s| s.kind() == kind)
                .unwrap_or(false)
        })
        .collect()
}

fn family_of(design: &Design) -> Option<&'static str> {
    let name = design.implementation_instruction.split_whitespace().next()?;
    SIGNAL_NAMES.iter().copied().find(|n| *n == name)
}

/// Renders a signal as a design.
pub fn design_for(signal: &Signal) -> DesignReply {
    let f = family(signal.name()).expect("every registered signal has a template");
    let params: Vec<String> = signal
        .spec
        .params()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    let mut idea = f.idea.to_string();
    if !params.is_empty() {
        idea.push_str(&format!(" ({})", params.join(", ")));
    }
    if signal.flip {
        idea.push_str(", sign flipped");
    }
    DesignReply {
        idea,
        design_justification: f.justification.into(),
        implementation_instruction: signal.to_string(),
    }
}

/// Four-line REPRESENTATION / COMPARISON / AGGREGATION / SCORE summary.
pub fn describe(design: &Design) -> String {
    match family_of(design).and_then(family) {
        Some(f) => format!(
            "REPRESENTATION: {}\nCOMPARISON: {}\nAGGREGATION: {}\nSCORE: {}",
            f.representation, f.comparison, f.aggregation, f.score
        ),
        None => format!(
            "REPRESENTATION: unknown\nCOMPARISON: unknown\nAGGREGATION: unknown\nSCORE: {}",
            design.idea
        ),
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

/// Writes `<workdir>/<slot>.sh`, an executable that runs `candidate_bin
/// --spec <spec>`.
pub fn write_wrapper(
    candidate_bin: &Path,
    workdir: &Path,
    slot: &str,
    spec: &str,
) -> Result<PathBuf, PluginError> {
    let path = workdir.join(format!("{slot}.sh"));
    let script = format!(
        "#!/bin/sh\nexec {} --spec {}\n",
        quote(&candidate_bin.display().to_string()),
        quote(spec)
    );
    let io = |e: std::io::Error| PluginError(format!("{}: {e}", path.display()));
    std::fs::create_dir_all(workdir).map_err(io)?;
    std::fs::write(&path, script).map_err(io)?;
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).map_err(io)?;
    Ok(path)
}

/// Template-mutating generator. Candidates are wrapper scripts around
/// `candidate_bin`.
#[derive(Debug, Clone)]
pub struct OfflineGenerator {
    pub candidate_bin: PathBuf,
}

impl OfflineGenerator {
    pub fn new(candidate_bin: impl Into<PathBuf>) -> Self {
        Self {
            candidate_bin: candidate_bin.into(),
        }
    }

    /// A family not used by `avoid` when possible, chosen by `nonce`.
    fn pick_family(kind: DatasetKind, avoid: &HashSet<&str>, nonce: u64) -> &'static Family {
        let all = families_for(kind);
        let fresh: Vec<&Family> = all.iter().copied().filter(|f| !avoid.contains(f.name)).collect();
        let pool = if fresh.is_empty() { &all } else { &fresh };
        pool[(nonce % pool.len() as u64) as usize]
    }

    fn generate(&self, ctx: &GenerateContext) -> DesignReply {
        let used: HashSet<&str> = ctx.seeds.iter().filter_map(|r| family_of(&r.design)).collect();
        let f = Self::pick_family(ctx.kind, &used, ctx.nonce);
        let signal = Signal::new(SignalSpec::default_for(f.name).expect("known family"));
        design_for(&signal)
    }

    fn revise(&self, ctx: &ReviseContext) -> DesignReply {
        let mut avoid: HashSet<&str> = ctx
            .neighbors
            .iter()
            .filter_map(|r| family_of(&r.design))
            .collect();
        avoid.extend(family_of(&ctx.design));
        let f = Self::pick_family(ctx.kind, &avoid, ctx.nonce);
        design_for(&Signal::new(SignalSpec::default_for(f.name).expect("known family")))
    }

    /// Flips a parent that scores below chance; otherwise moves one
    /// parameter to another grid value.
    fn exploit(&self, ctx: &ExploitContext) -> DesignReply {
        let parent = &ctx.parent;
        let mut signal: Signal = match parent.design.implementation_instruction.parse() {
            Ok(s) => s,
            Err(_) => return self.generate(&GenerateContext {
                nonce: ctx.nonce,
                kind: ctx.kind,
                seeds: vec![parent.clone()],
            }),
        };
        let f = family(signal.name()).expect("registered");
        if parent.auc().is_some_and(|a| a < 0.5) || f.grid.is_empty() {
            if parent.auc().is_some_and(|a| a < 0.5) {
                signal.flip = !signal.flip;
            }
            return design_for(&signal);
        }
        let (param, values) = f.grid[(ctx.nonce % f.grid.len() as u64) as usize];
        let current = signal
            .spec
            .params()
            .into_iter()
            .find(|(k, _)| *k == param)
            .map(|(_, v)| v)
            .unwrap_or_default();
        let choices: Vec<&str> = values.iter().copied().filter(|v| *v != current).collect();
        if let Some(v) = choices.get(((ctx.nonce >> 16) % choices.len().max(1) as u64) as usize) {
            signal.spec.set(param, v).expect("grid values parse");
        }
        design_for(&signal)
    }

    fn materialize(&self, workdir: &str, slot: &str, spec: &str) -> Result<String, PluginError> {
        write_wrapper(&self.candidate_bin, Path::new(workdir), slot, spec)
            .map(|p| p.display().to_string())
    }

    fn codegen(&self, ctx: &CodegenContext) -> Result<String, PluginError> {
        self.materialize(&ctx.workdir, &ctx.slot, &ctx.design.implementation_instruction)
    }

    /// Falls back to the family's default parameters.
    fn fix(&self, ctx: &FixContext) -> Result<String, PluginError> {
        let name = family_of(&ctx.design)
            .filter(|n| SignalSpec::default_for(n).is_ok_and(|s| s.kind() == ctx.kind))
            .unwrap_or_else(|| families_for(ctx.kind)[0].name);
        self.materialize(&ctx.workdir, &ctx.slot, name)
    }

    fn analyze(&self, ctx: &AnalyzeContext) -> String {
        format!("{}\nauc: {:.4}", describe(&ctx.design), ctx.metrics.auc)
    }
}

impl DesignGenerator for OfflineGenerator {
    fn call(&mut self, request: &GeneratorRequest) -> Result<GeneratorResponse, PluginError> {
        Ok(match request {
            GeneratorRequest::Generate(ctx) => GeneratorResponse::Design(self.generate(ctx)),
            GeneratorRequest::Revise(ctx) => GeneratorResponse::Design(self.revise(ctx)),
            GeneratorRequest::Exploit(ctx) => GeneratorResponse::Design(self.exploit(ctx)),
            GeneratorRequest::Codegen(ctx) => GeneratorResponse::Code {
                code_ref: self.codegen(ctx)?,
            },
            GeneratorRequest::Fix(ctx) => GeneratorResponse::Code {
                code_ref: self.fix(ctx)?,
            },
            GeneratorRequest::Analyze(ctx) => GeneratorResponse::Analysis {
                analysis: self.analyze(ctx),
            },
        })
    }
}

/// Accepts a design unless its idea + justification embedding is within
/// [`NOVELTY_THRESHOLD`] cosine of some neighbor.
#[derive(Debug, Clone)]
pub struct OfflineJudge {
    pub dim: usize,
}

impl Default for OfflineJudge {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

fn design_text(d: &Design) -> String {
    format!("{} {}", d.idea, d.design_justification)
}

impl OfflineJudge {
    pub fn verdict(&self, design: &Design, neighbors: &[ExperimentRecord]) -> JudgeVerdict {
        let v = embed_text(&design_text(design), self.dim);
        let closest = neighbors
            .iter()
            .map(|r| (r.id, cosine(&v, &embed_text(&design_text(&r.design), self.dim))))
            .fold(None, |best: Option<(_, f64)>, (id, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((id, s)),
            });
        let max_sim = closest.map_or(0.0, |(_, s)| s);
        let novelty = (1.0 - max_sim).clamp(0.0, 1.0);
        match closest {
            Some((id, sim)) if sim >= NOVELTY_THRESHOLD => JudgeVerdict {
                action: JudgeAction::Revise,
                novelty_score: novelty,
                suggestions: format!(
                    "too close to experiment {id} (cosine {sim:.3}); change the signal family or its aggregation"
                ),
            },
            _ => JudgeVerdict {
                action: JudgeAction::Accept,
                novelty_score: novelty,
                suggestions: String::new(),
            },
        }
    }
}

impl NoveltyJudge for OfflineJudge {
    fn judge(&mut self, request: &JudgeRequest) -> Result<JudgeVerdict, PluginError> {
        Ok(self.verdict(&request.design, &request.neighbors))
    }
}
