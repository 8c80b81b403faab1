//! Build planning: depth-first postorder over prerequisites with
//! staleness checks.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::SystemTime;

use super::{manifest, PipelineError, Rule, RuleGraph};

/// How "does the target need rebuilding" is decided for file
/// prerequisites.
#[derive(Debug, Clone, Default)]
pub enum Staleness {
    /// Rebuild when a prerequisite file is strictly newer than the
    /// target (Make semantics).
    #[default]
    Mtime,
    /// Rebuild when a prerequisite file's sha256 differs from the cached
    /// digest (or is not in the cache).
    ContentHash(BTreeMap<String, String>),
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Visiting,
    Done { scheduled: bool },
}

struct Walker<'g, 'a> {
    graph: &'g RuleGraph,
    root: &'a Path,
    mode: &'a Staleness,
    state: HashMap<&'g str, State>,
    plan: Vec<&'g Rule>,
}

/// Plan the rules needed to bring `target` up to date, in execution
/// order. A rule runs if its target is phony, its target file is
/// missing, any prerequisite rule is itself scheduled, or a prerequisite
/// file is out of date under the chosen staleness mode. Prerequisites
/// that name no rule must exist as files under `root`.
pub fn plan<'g>(
    graph: &'g RuleGraph,
    target: &str,
    root: &Path,
    mode: &Staleness,
) -> Result<Vec<&'g Rule>, PipelineError> {
    let mut walker = Walker {
        graph,
        root,
        mode,
        state: HashMap::new(),
        plan: Vec::new(),
    };
    walker.visit(target)?;
    Ok(walker.plan)
}

impl<'g> Walker<'g, '_> {
    fn visit(&mut self, name: &str) -> Result<bool, PipelineError> {
        let Some(rule) = self.graph.rule(name) else {
            if self.root.join(name).exists() {
                return Ok(false);
            }
            return Err(PipelineError::UnknownTarget {
                name: name.to_string(),
            });
        };
        match self.state.get(rule.target.as_str()) {
            Some(State::Visiting) => {
                return Err(PipelineError::CycleDetected {
                    target: rule.target.clone(),
                })
            }
            Some(State::Done { scheduled }) => return Ok(*scheduled),
            None => {}
        }
        self.state.insert(&rule.target, State::Visiting);

        let mut prereq_scheduled = false;
        for p in &rule.prerequisites {
            if self.graph.rule(p).is_some() {
                prereq_scheduled |= self.visit(p)?;
            } else if !self.root.join(p).exists() {
                return Err(PipelineError::UnknownTarget { name: p.clone() });
            }
        }

        let scheduled = prereq_scheduled || self.is_stale(rule)?;
        if scheduled {
            self.plan.push(rule);
        }
        self.state
            .insert(&rule.target, State::Done { scheduled });
        Ok(scheduled)
    }

    fn is_stale(&self, rule: &Rule) -> Result<bool, PipelineError> {
        if self.graph.is_phony(&rule.target) {
            return Ok(true);
        }
        let target_path = self.root.join(&rule.target);
        let Ok(target_meta) = std::fs::metadata(&target_path) else {
            return Ok(true); // target missing
        };
        match self.mode {
            Staleness::Mtime => {
                let target_mtime = target_meta.modified()?;
                for p in &rule.prerequisites {
                    if let Ok(meta) = std::fs::metadata(self.root.join(p)) {
                        let mtime = meta.modified().unwrap_or(SystemTime::UNIX_EPOCH);
                        if mtime > target_mtime {
                            return Ok(true);
                        }
                    }
                }
            }
            Staleness::ContentHash(cache) => {
                for p in &rule.prerequisites {
                    let path = self.root.join(p);
                    if path.is_file() {
                        let digest = manifest::sha256_file(&path)?;
                        if cache.get(p.as_str()) != Some(&digest) {
                            return Ok(true);
                        }
                    }
                }
            }
        }
        Ok(false)
    }
}

/// Every file name involved in building `target`: rule targets plus file
/// prerequisites, in deterministic order. Used to refresh the content
/// hash cache after a run.
pub fn collect_involved_files(
    graph: &RuleGraph,
    target: &str,
) -> Result<Vec<String>, PipelineError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut stack = vec![target.to_string()];
    let mut visited = std::collections::HashSet::new();
    while let Some(name) = stack.pop() {
        if !visited.insert(name.clone()) {
            continue;
        }
        if let Some(rule) = graph.rule(&name) {
            seen.insert(rule.target.clone());
            for p in &rule.prerequisites {
                stack.push(p.clone());
            }
        } else {
            seen.insert(name);
        }
    }
    Ok(seen.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::super::parse_pipeline;
    use super::*;
    use std::process::Command;

    fn touch_at(path: &Path, epoch: u64) {
        std::fs::write(path, b"x").unwrap();
        let ok = Command::new("touch")
            .arg("-d")
            .arg(format!("@{epoch}"))
            .arg(path)
            .status()
            .unwrap()
            .success();
        assert!(ok, "touch failed");
    }

    fn order_of<'a>(plan: &[&'a Rule]) -> Vec<&'a str> {
        plan.iter().map(|r| r.target.as_str()).collect()
    }

    #[test]
    fn chain_plans_in_dependency_order() {
        let dir = tempfile::tempdir().unwrap();
        let g = parse_pipeline("report: analysis\n\tr\nanalysis: data\n\ta\ndata:\n\td\n")
            .unwrap();
        let plan = plan(&g, "report", dir.path(), &Staleness::Mtime).unwrap();
        assert_eq!(order_of(&plan), vec!["data", "analysis", "report"]);
    }

    #[test]
    fn fresh_target_plans_nothing() {
        let dir = tempfile::tempdir().unwrap();
        touch_at(&dir.path().join("in"), 1_000_000_000);
        touch_at(&dir.path().join("out"), 1_100_000_000);
        let g = parse_pipeline("out: in\n\tcp in out\n").unwrap();
        let plan = plan(&g, "out", dir.path(), &Staleness::Mtime).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn newer_prerequisite_forces_rebuild() {
        let dir = tempfile::tempdir().unwrap();
        touch_at(&dir.path().join("in"), 1_200_000_000);
        touch_at(&dir.path().join("out"), 1_100_000_000);
        let g = parse_pipeline("out: in\n\tcp in out\n").unwrap();
        let plan = plan(&g, "out", dir.path(), &Staleness::Mtime).unwrap();
        assert_eq!(order_of(&plan), vec!["out"]);
    }

    #[test]
    fn equal_mtimes_count_as_fresh() {
        let dir = tempfile::tempdir().unwrap();
        touch_at(&dir.path().join("in"), 1_100_000_000);
        touch_at(&dir.path().join("out"), 1_100_000_000);
        let g = parse_pipeline("out: in\n\tcp in out\n").unwrap();
        assert!(plan(&g, "out", dir.path(), &Staleness::Mtime)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn diamond_appears_once_in_postorder() {
        let dir = tempfile::tempdir().unwrap();
        let g =
            parse_pipeline("a: b c\n\tx\nb: d\n\tx\nc: d\n\tx\nd:\n\tx\n").unwrap();
        let plan = plan(&g, "a", dir.path(), &Staleness::Mtime).unwrap();
        let order = order_of(&plan);
        assert_eq!(order.iter().filter(|&&t| t == "d").count(), 1);
        let pos = |t: &str| order.iter().position(|&x| x == t).unwrap();
        assert!(pos("d") < pos("b"));
        assert!(pos("d") < pos("c"));
        assert!(pos("b") < pos("a"));
        assert!(pos("c") < pos("a"));
    }

    #[test]
    fn two_cycle_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let g = parse_pipeline("a: b\nb: a\n").unwrap();
        assert!(matches!(
            plan(&g, "a", dir.path(), &Staleness::Mtime),
            Err(PipelineError::CycleDetected { .. })
        ));
    }

    #[test]
    fn unknown_prerequisite_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let g = parse_pipeline("a: nowhere\n\tx\n").unwrap();
        assert!(matches!(
            plan(&g, "a", dir.path(), &Staleness::Mtime),
            Err(PipelineError::UnknownTarget { name }) if name == "nowhere"
        ));
        assert!(matches!(
            plan(&g, "missing-target", dir.path(), &Staleness::Mtime),
            Err(PipelineError::UnknownTarget { .. })
        ));
    }

    #[test]
    fn file_prerequisite_without_rule_is_a_leaf() {
        let dir = tempfile::tempdir().unwrap();
        touch_at(&dir.path().join("input.txt"), 1_000_000_000);
        let g = parse_pipeline("out: input.txt\n\tx\n").unwrap();
        let plan = plan(&g, "out", dir.path(), &Staleness::Mtime).unwrap();
        assert_eq!(order_of(&plan), vec!["out"]);
    }

    #[test]
    fn phony_targets_always_run() {
        let dir = tempfile::tempdir().unwrap();
        // a file named "check" exists and is fresh, but the target is phony
        touch_at(&dir.path().join("check"), 2_000_000_000);
        let g = parse_pipeline(".PHONY: check\ncheck:\n\tverify\n").unwrap();
        let plan = plan(&g, "check", dir.path(), &Staleness::Mtime).unwrap();
        assert_eq!(order_of(&plan), vec!["check"]);
    }

    #[test]
    fn scheduled_prerequisite_rule_cascades() {
        let dir = tempfile::tempdir().unwrap();
        // out exists and is newer than mid, but mid's own input is missing
        // so mid reruns, which forces out to rerun too
        touch_at(&dir.path().join("out"), 1_300_000_000);
        let g = parse_pipeline("out: mid\n\tx\nmid:\n\ty\n").unwrap();
        let plan = plan(&g, "out", dir.path(), &Staleness::Mtime).unwrap();
        assert_eq!(order_of(&plan), vec!["mid", "out"]);
    }

    #[test]
    fn content_hash_mode_detects_changed_input() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        std::fs::write(&input, b"v1").unwrap();
        touch_at(&dir.path().join("out"), 2_000_000_000);
        let g = parse_pipeline("out: in\n\tcp in out\n").unwrap();

        let digest = manifest::sha256_file(&input).unwrap();
        let mut cache = BTreeMap::new();
        cache.insert("in".to_string(), digest);
        let fresh = plan(&g, "out", dir.path(), &Staleness::ContentHash(cache.clone())).unwrap();
        assert!(fresh.is_empty());

        // same mtime, different content
        std::fs::write(&input, b"v2").unwrap();
        let ok = Command::new("touch")
            .arg("-d")
            .arg("@1000000000")
            .arg(&input)
            .status()
            .unwrap()
            .success();
        assert!(ok);
        let stale = plan(&g, "out", dir.path(), &Staleness::ContentHash(cache)).unwrap();
        assert_eq!(order_of(&stale), vec!["out"]);

        // an empty cache means everything is stale
        let stale =
            plan(&g, "out", dir.path(), &Staleness::ContentHash(BTreeMap::new())).unwrap();
        assert_eq!(order_of(&stale), vec!["out"]);
    }

    #[test]
    fn plan_is_a_topological_order_on_random_dags() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..60 {
            let n = rng.gen_range(2..=8usize);
            // edges only from lower to higher indices: guaranteed acyclic
            let mut text = String::new();
            let mut edges = Vec::new();
            for i in (0..n).rev() {
                let mut prereqs = Vec::new();
                for j in (i + 1)..n {
                    if rng.gen_bool(0.4) {
                        prereqs.push(format!("n{j}"));
                        edges.push((i, j));
                    }
                }
                text.push_str(&format!("n{i}: {}\n\tbuild\n", prereqs.join(" ")));
            }
            let g = parse_pipeline(&text).unwrap();
            let plan = plan(&g, "n0", dir.path(), &Staleness::Mtime).unwrap();
            let order = order_of(&plan);
            let pos: std::collections::HashMap<&str, usize> = order
                .iter()
                .enumerate()
                .map(|(i, &t)| (t, i))
                .collect();
            // every dependency edge: prerequisite runs before dependent
            for (i, j) in edges {
                let (pi, pj) = (format!("n{i}"), format!("n{j}"));
                if let (Some(&a), Some(&b)) = (pos.get(pi.as_str()), pos.get(pj.as_str())) {
                    assert!(b < a, "edge n{i} -> n{j} violated in {order:?}");
                }
            }
            // reachable rules all appear exactly once
            assert_eq!(
                order.len(),
                order.iter().collect::<std::collections::HashSet<_>>().len()
            );
        }
    }

    #[test]
    fn cycle_detection_exhaustive_on_three_node_digraphs() {
        let dir = tempfile::tempdir().unwrap();
        let names = ["a", "b", "c"];
        // all 2^9 digraphs on 3 nodes, self-loops included
        for mask in 0u32..512 {
            let mut adj = [[false; 3]; 3];
            for (bit, slot) in (0..9).zip([(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]) {
                adj[slot.0][slot.1] = mask & (1 << bit) != 0;
            }
            let mut text = String::new();
            for i in 0..3 {
                let prereqs: Vec<&str> = (0..3).filter(|&j| adj[i][j]).map(|j| names[j]).collect();
                text.push_str(&format!("{}: {}\n\tx\n", names[i], prereqs.join(" ")));
            }
            let g = parse_pipeline(&text).unwrap();

            // independent reachable-cycle check by path enumeration
            let reaches_cycle = |start: usize| -> bool {
                // node is on a cycle reachable from start if some reachable
                // node can reach itself
                let reachable = |from: usize| {
                    let mut seen = [false; 3];
                    let mut stack = vec![from];
                    while let Some(u) = stack.pop() {
                        for v in 0..3 {
                            if adj[u][v] && !seen[v] {
                                seen[v] = true;
                                stack.push(v);
                            }
                        }
                    }
                    seen
                };
                let from_start = {
                    let mut s = reachable(start);
                    s[start] = true;
                    s
                };
                (0..3).any(|u| from_start[u] && reachable(u)[u])
            };

            for (i, name) in names.iter().enumerate() {
                let result = plan(&g, name, dir.path(), &Staleness::Mtime);
                if reaches_cycle(i) {
                    assert!(
                        matches!(result, Err(PipelineError::CycleDetected { .. })),
                        "mask {mask} target {name}: expected cycle"
                    );
                } else {
                    assert!(result.is_ok(), "mask {mask} target {name}: unexpected error");
                }
            }
        }
    }

    #[test]
    fn collect_involved_files_covers_closure() {
        let dir = tempfile::tempdir().unwrap();
        touch_at(&dir.path().join("leaf.txt"), 1_000_000_000);
        let g = parse_pipeline("a: b leaf.txt\n\tx\nb:\n\ty\n").unwrap();
        let files = collect_involved_files(&g, "a").unwrap();
        assert_eq!(files, vec!["a", "b", "leaf.txt"]);
    }
}
