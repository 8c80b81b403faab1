//! Make-subset workflow engine with checksum-validated data fetching.
//!
//! A pipeline file is a list of rules (`target: prerequisites` plus
//! tab-indented recipe lines). Planning walks prerequisites depth-first,
//! schedules stale rules in postorder, and execution runs recipe lines
//! through the shell, stopping at the first failure. Staleness is mtime
//! based like Make, with an opt-in content-hash mode.

mod exec;
mod fetch;
mod manifest;
mod parse;
mod plan;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

pub use exec::{execute, ExecutedCommand, ExecutionReport};
pub use fetch::{fetch, FetchOutcome};
pub use manifest::{
    load_manifest, manifest_from_dir, sha256_bytes, sha256_file, validate_files, FileCheck,
    FileStatus, HashManifest,
};
pub use parse::parse_pipeline;
pub use plan::{collect_involved_files, plan, Staleness};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("line {line}: recipe line before any rule")]
    RecipeWithoutRule { line: usize },
    #[error("line {line}: duplicate target {target:?}")]
    DuplicateTarget { line: usize, target: String },
    #[error("line {line}: expected \"target: prerequisites\", got {content:?}")]
    MissingColon { line: usize, content: String },
    #[error("line {line}: multiple targets {targets:?} are not supported")]
    MultiTarget { line: usize, targets: String },
    #[error("dependency cycle through {target:?}")]
    CycleDetected { target: String },
    #[error("{name:?} is neither a rule nor an existing file")]
    UnknownTarget { name: String },
    #[error("recipe for {target:?} failed with exit status {status}: {command}")]
    RecipeFailed {
        target: String,
        command: String,
        status: i32,
    },
    #[error("malformed manifest: {reason}")]
    MalformedManifest { reason: String },
    #[error("fetch of {url} failed: {reason}")]
    NetworkError { url: String, reason: String },
    #[error("digest mismatch for {name}: expected {expected}, got {actual}")]
    DigestMismatch {
        name: String,
        expected: String,
        actual: String,
    },
    #[error("unsupported URL {0:?} (need http://, https://, or file://)")]
    BadUrl(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One build rule: a target, its prerequisites, and the recipe lines that
/// produce it (stored byte-exact, leading tab stripped).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub target: String,
    pub prerequisites: Vec<String>,
    pub recipe: Vec<String>,
}

/// Parsed pipeline: rules in file order plus the `.PHONY` name set.
#[derive(Debug, Clone, Default)]
pub struct RuleGraph {
    rules: Vec<Rule>,
    index: HashMap<String, usize>,
    phony: HashSet<String>,
}

impl RuleGraph {
    pub fn rule(&self, target: &str) -> Option<&Rule> {
        self.index.get(target).map(|&i| &self.rules[i])
    }

    /// First rule in file order, if any.
    pub fn default_target(&self) -> Option<&str> {
        self.rules.first().map(|r| r.target.as_str())
    }

    pub fn is_phony(&self, name: &str) -> bool {
        self.phony.contains(name)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub(crate) fn push_rule(&mut self, rule: Rule) -> Result<(), String> {
        if self.index.contains_key(&rule.target) {
            return Err(rule.target);
        }
        self.index.insert(rule.target.clone(), self.rules.len());
        self.rules.push(rule);
        Ok(())
    }

    pub(crate) fn add_phony(&mut self, names: impl IntoIterator<Item = String>) {
        self.phony.extend(names);
    }
}
