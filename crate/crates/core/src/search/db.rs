//! Experiment database with lineage, retrieval and an append-only journal.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::bm25::Bm25Index;
use super::embed::{cosine, embed_text};
use super::{ExperimentId, ExperimentRecord, RecordDraft, SearchError, Status};

/// Stored text field used for semantic retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Idea,
    Justification,
    Analysis,
}

#[derive(Debug)]
struct Journal {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Journal {
    fn append(&mut self, line: &str) -> Result<(), SearchError> {
        let err = |source| SearchError::Journal {
            path: self.path.display().to_string(),
            source,
        };
        writeln!(self.out, "{line}").map_err(err)?;
        self.out.flush().map_err(err)
    }
}

/// Opens (truncating) a JSON Lines journal.
pub fn create_journal_file(path: &Path) -> Result<File, SearchError> {
    File::create(path).map_err(|source| SearchError::Journal {
        path: path.display().to_string(),
        source,
    })
}

/// Bookkeeping for retrieval: all three field embeddings and the BM25
/// document (idea followed by justification).
#[derive(Debug)]
pub struct ExperimentDb {
    records: Vec<ExperimentRecord>,
    idea_vecs: Vec<Vec<f64>>,
    justification_vecs: Vec<Vec<f64>>,
    analysis_vecs: Vec<Vec<f64>>,
    bm25: Bm25Index,
    dim: usize,
    journal: Option<Journal>,
}

impl ExperimentDb {
    /// In-memory database embedding text into `dim` buckets.
    pub fn new(dim: usize) -> Self {
        Self {
            records: Vec::new(),
            idea_vecs: Vec::new(),
            justification_vecs: Vec::new(),
            analysis_vecs: Vec::new(),
            bm25: Bm25Index::new(),
            dim,
            journal: None,
        }
    }

    /// Database that appends every insert to a fresh journal at `path`.
    pub fn with_journal(path: &Path, dim: usize) -> Result<Self, SearchError> {
        let file = create_journal_file(path)?;
        let mut db = Self::new(dim);
        db.journal = Some(Journal {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        });
        Ok(db)
    }

    /// Rebuilds a database from a journal, re-validating every record and
    /// recomputing embeddings. The result has no journal attached.
    pub fn load(path: &Path, dim: usize) -> Result<Self, SearchError> {
        let file = File::open(path).map_err(|source| SearchError::Journal {
            path: path.display().to_string(),
            source,
        })?;
        let mut db = Self::new(dim);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| SearchError::Journal {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ExperimentRecord =
                serde_json::from_str(&line).map_err(|source| SearchError::JournalParse {
                    path: path.display().to_string(),
                    line: i + 1,
                    source,
                })?;
            if record.id != db.next_id() {
                return Err(SearchError::InvalidRecord(format!(
                    "line {}: expected id {}, found {}",
                    i + 1,
                    db.next_id(),
                    record.id
                )));
            }
            let draft = RecordDraft {
                design: record.design,
                code_ref: record.code_ref,
                status: record.status,
                metrics: record.metrics,
                analysis: record.analysis,
                iteration: record.iteration,
                mode: record.mode,
            };
            db.insert(draft)?;
        }
        Ok(db)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn next_id(&self) -> ExperimentId {
        ExperimentId(self.records.len() as u64)
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn get(&self, id: ExperimentId) -> Option<&ExperimentRecord> {
        self.records.get(usize::try_from(id.0).ok()?)
    }

    /// Validates and stores a record, assigning the next id.
    pub fn insert(&mut self, draft: RecordDraft) -> Result<ExperimentId, SearchError> {
        if draft.design.idea.trim().is_empty() {
            return Err(SearchError::InvalidRecord("design idea is empty".into()));
        }
        match (draft.status, &draft.metrics) {
            (Status::Ok, None) => {
                return Err(SearchError::InvalidRecord("status ok without metrics".into()))
            }
            (Status::Fail | Status::Timeout, Some(_)) => {
                return Err(SearchError::InvalidRecord(format!(
                    "status {} with metrics",
                    draft.status
                )))
            }
            _ => {}
        }
        let id = self.next_id();
        if let Some(parent) = draft.design.parent_id {
            if parent >= id {
                return Err(SearchError::DanglingParent { parent, next: id });
            }
        }
        let record = ExperimentRecord {
            id,
            design: draft.design,
            code_ref: draft.code_ref,
            status: draft.status,
            metrics: draft.metrics,
            analysis: draft.analysis,
            iteration: draft.iteration,
            mode: draft.mode,
        };
        if let Some(journal) = &mut self.journal {
            let line = serde_json::to_string(&record).expect("records always serialize");
            journal.append(&line)?;
        }
        self.idea_vecs.push(embed_text(&record.design.idea, self.dim));
        self.justification_vecs
            .push(embed_text(&record.design.design_justification, self.dim));
        self.analysis_vecs.push(embed_text(&record.analysis, self.dim));
        self.bm25.add(&format!(
            "{} {}",
            record.design.idea, record.design.design_justification
        ));
        self.records.push(record);
        Ok(id)
    }

    fn field_vecs(&self, field: Field) -> &[Vec<f64>] {
        match field {
            Field::Idea => &self.idea_vecs,
            Field::Justification => &self.justification_vecs,
            Field::Analysis => &self.analysis_vecs,
        }
    }

    /// Stored embedding of one field of one record.
    pub fn embedding(&self, id: ExperimentId, field: Field) -> Option<&[f64]> {
        self.field_vecs(field).get(id.0 as usize).map(Vec::as_slice)
    }

    /// Top `k` records by cosine similarity of `query` to `field`; ties go
    /// to the lower id.
    pub fn retrieve_semantic(&self, query: &str, field: Field, k: usize) -> Vec<&ExperimentRecord> {
        let q = embed_text(query, self.dim);
        let sims: Vec<f64> = self.field_vecs(field).iter().map(|v| cosine(&q, v)).collect();
        let mut idx: Vec<usize> = (0..sims.len()).collect();
        idx.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| &self.records[i]).collect()
    }

    /// Top `k` records by BM25 over idea + justification.
    pub fn retrieve_bm25(&self, query: &str, k: usize) -> Vec<&ExperimentRecord> {
        self.bm25
            .top_k(query, k)
            .into_iter()
            .map(|i| &self.records[i])
            .collect()
    }

    /// Ancestors of `id`, root first, not including `id` itself.
    pub fn ancestors(&self, id: ExperimentId) -> Vec<&ExperimentRecord> {
        let mut chain = Vec::new();
        let mut cursor = self.get(id).and_then(|r| r.design.parent_id);
        while let Some(pid) = cursor {
            let Some(rec) = self.get(pid) else { break };
            chain.push(rec);
            cursor = rec.design.parent_id;
        }
        chain.reverse();
        chain
    }

    pub fn root_of(&self, id: ExperimentId) -> ExperimentId {
        self.ancestors(id).first().map_or(id, |r| r.id)
    }

    /// Records whose parent is `id`, in id order.
    pub fn children(&self, id: ExperimentId) -> Vec<&ExperimentRecord> {
        self.records
            .iter()
            .filter(|r| r.design.parent_id == Some(id))
            .collect()
    }

    /// Records that carry metrics.
    pub fn scored(&self) -> impl Iterator<Item = &ExperimentRecord> {
        self.records.iter().filter(|r| r.metrics.is_some())
    }

    /// Highest-AUC record; ties go to the lower id.
    pub fn best(&self) -> Option<&ExperimentRecord> {
        self.scored().fold(None, |best: Option<&ExperimentRecord>, r| match best {
            Some(b) if b.auc() >= r.auc() => Some(b),
            _ => Some(r),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::MetricsReport;
    use crate::search::{Design, Mode};
    use std::collections::BTreeMap;

    pub(crate) fn draft(idea: &str, parent: Option<u64>, auc: Option<f64>) -> RecordDraft {
        let mut design = Design::new(idea, &format!("because {idea}"), "do it");
        design.parent_id = parent.map(ExperimentId);
        RecordDraft {
            design,
            code_ref: format!("{idea}.sh"),
            status: if auc.is_some() { Status::Ok } else { Status::Fail },
            metrics: auc.map(|auc| MetricsReport {
                signal: "x".into(),
                auc,
                tpr: BTreeMap::new(),
                n_members: 1,
                n_nonmembers: 1,
                params: BTreeMap::new(),
                flipped: false,
                raw_auc: None,
            }),
            analysis: String::new(),
            iteration: 0,
            mode: Mode::Explore,
        }
    }

    #[test]
    fn ids_are_sequential() {
        let mut db = ExperimentDb::new(32);
        for i in 0..50u64 {
            assert_eq!(db.insert(draft(&format!("idea {i}"), None, Some(0.5))).unwrap(), ExperimentId(i));
        }
        assert_eq!(db.len(), 50);
    }

    #[test]
    fn rejects_invalid_records() {
        let mut db = ExperimentDb::new(32);
        assert!(matches!(
            db.insert(draft("a", Some(99), Some(0.6))),
            Err(SearchError::DanglingParent { .. })
        ));
        let mut ok_without_metrics = draft("a", None, None);
        ok_without_metrics.status = Status::Ok;
        assert!(db.insert(ok_without_metrics).is_err());
        let mut failed_with_metrics = draft("a", None, Some(0.5));
        failed_with_metrics.status = Status::Fail;
        assert!(db.insert(failed_with_metrics).is_err());
        assert!(db.insert(draft(" ", None, Some(0.5))).is_err());
        assert!(db.is_empty());
    }

    #[test]
    fn lineage_queries() {
        let mut db = ExperimentDb::new(32);
        db.insert(draft("root", None, Some(0.6))).unwrap();
        db.insert(draft("child", Some(0), Some(0.7))).unwrap();
        db.insert(draft("grandchild", Some(1), Some(0.8))).unwrap();
        db.insert(draft("other child", Some(0), Some(0.65))).unwrap();
        let chain: Vec<u64> = db.ancestors(ExperimentId(2)).iter().map(|r| r.id.0).collect();
        assert_eq!(chain, vec![0, 1]);
        assert_eq!(db.root_of(ExperimentId(2)), ExperimentId(0));
        assert_eq!(db.root_of(ExperimentId(0)), ExperimentId(0));
        let kids: Vec<u64> = db.children(ExperimentId(0)).iter().map(|r| r.id.0).collect();
        assert_eq!(kids, vec![1, 3]);
        assert_eq!(db.best().unwrap().id, ExperimentId(2));
    }

    #[test]
    fn semantic_retrieval_finds_exact_idea() {
        let mut db = ExperimentDb::new(128);
        for idea in ["edit distance median", "rare trigram weights", "renyi entropy tail"] {
            db.insert(draft(idea, None, Some(0.5))).unwrap();
        }
        let hits = db.retrieve_semantic("rare trigram weights", Field::Idea, 2);
        assert_eq!(hits[0].id, ExperimentId(1));
        assert_eq!(db.retrieve_semantic("x", Field::Idea, 10).len(), 3);
        assert_eq!(db.retrieve_bm25("entropy", 1)[0].id, ExperimentId(2));
    }

    #[test]
    fn journal_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.jsonl");
        let mut db = ExperimentDb::with_journal(&path, 32).unwrap();
        db.insert(draft("root", None, Some(0.6))).unwrap();
        db.insert(draft("child", Some(0), Some(0.7))).unwrap();
        drop(db);
        let loaded = ExperimentDb::load(&path, 32).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.records()[1].design.parent_id, Some(ExperimentId(0)));
        assert_eq!(
            loaded.embedding(ExperimentId(0), Field::Idea).unwrap(),
            &embed_text("root", 32)[..]
        );
    }
}
