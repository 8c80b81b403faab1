//! Plan execution: recipe lines run sequentially through `sh -c`,
//! stopping at the first nonzero exit status.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use super::{PipelineError, Rule};

#[derive(Debug, Clone)]
pub struct ExecutedCommand {
    pub target: String,
    pub command: String,
    pub status: i32,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct ExecutionReport {
    pub commands: Vec<ExecutedCommand>,
}

impl ExecutionReport {
    pub fn commands_run(&self) -> usize {
        self.commands.len()
    }
}

/// Run every recipe line of every planned rule in `working_dir`. Recipe
/// lines are echoed to stderr unless `quiet`. The first failing command
/// aborts the run with a [`PipelineError::RecipeFailed`].
pub fn execute(
    plan: &[&Rule],
    working_dir: &Path,
    quiet: bool,
) -> Result<ExecutionReport, PipelineError> {
    let mut report = ExecutionReport::default();
    for rule in plan {
        for line in &rule.recipe {
            if !quiet {
                eprintln!("{line}");
            }
            let start = Instant::now();
            let status = Command::new("sh")
                .arg("-c")
                .arg(line)
                .current_dir(working_dir)
                .status()?;
            let code = status.code().unwrap_or(-1);
            report.commands.push(ExecutedCommand {
                target: rule.target.clone(),
                command: line.clone(),
                status: code,
                wall_time: start.elapsed(),
            });
            if !status.success() {
                return Err(PipelineError::RecipeFailed {
                    target: rule.target.clone(),
                    command: line.clone(),
                    status: code,
                });
            }
        }
    }
    Ok(report)
}
