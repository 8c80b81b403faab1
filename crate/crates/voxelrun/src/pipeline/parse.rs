//! Parser for the Make-subset pipeline grammar.
//!
//! Supported: `target: prereq ...` rule lines, recipe lines indented by
//! exactly one tab, whole-line `#` comments, blank lines, and the
//! `.PHONY: name ...` directive. Unsupported on purpose: variables,
//! pattern rules, automatic variables, multi-target rules.

use super::{PipelineError, Rule, RuleGraph};

pub fn parse_pipeline(text: &str) -> Result<RuleGraph, PipelineError> {
    let mut graph = RuleGraph::default();
    // index of the rule a recipe line belongs to; None after directives
    let mut open_rule: Option<usize> = None;
    let mut pending: Vec<Rule> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if let Some(recipe_line) = raw.strip_prefix('\t') {
            match open_rule {
                Some(r) => pending[r].recipe.push(recipe_line.to_string()),
                None => return Err(PipelineError::RecipeWithoutRule { line }),
            }
            continue;
        }
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some(colon) = raw.find(':') else {
            return Err(PipelineError::MissingColon {
                line,
                content: raw.to_string(),
            });
        };
        let target = raw[..colon].trim();
        let prerequisites: Vec<String> = raw[colon + 1..]
            .split_whitespace()
            .map(String::from)
            .collect();
        if target == ".PHONY" {
            graph.add_phony(prerequisites);
            open_rule = None;
            continue;
        }
        if target.is_empty() {
            return Err(PipelineError::MissingColon {
                line,
                content: raw.to_string(),
            });
        }
        if target.split_whitespace().count() > 1 {
            return Err(PipelineError::MultiTarget {
                line,
                targets: target.to_string(),
            });
        }
        if pending.iter().any(|r| r.target == target) {
            return Err(PipelineError::DuplicateTarget {
                line,
                target: target.to_string(),
            });
        }
        pending.push(Rule {
            target: target.to_string(),
            prerequisites,
            recipe: Vec::new(),
        });
        open_rule = Some(pending.len() - 1);
    }

    for rule in pending {
        graph
            .push_rule(rule)
            .expect("duplicates were rejected during the scan");
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_rule_with_recipe() {
        let text = "progress.pdf: progress.md\n\tpandoc -t beamer -s progress.md -o progress.pdf\n";
        let g = parse_pipeline(text).unwrap();
        assert_eq!(g.len(), 1);
        let rule = g.rule("progress.pdf").unwrap();
        assert_eq!(rule.prerequisites, vec!["progress.md"]);
        assert_eq!(
            rule.recipe,
            vec!["pandoc -t beamer -s progress.md -o progress.pdf"]
        );
        assert_eq!(g.default_target(), Some("progress.pdf"));
    }

    #[test]
    fn empty_input_is_an_empty_graph() {
        let g = parse_pipeline("").unwrap();
        assert!(g.is_empty());
        assert_eq!(g.default_target(), None);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a comment\n\nout: in\n# another\n\tcp in out\n\n";
        let g = parse_pipeline(text).unwrap();
        assert_eq!(g.rule("out").unwrap().recipe, vec!["cp in out"]);
    }

    #[test]
    fn recipe_lines_are_preserved_byte_exact() {
        let text = "t:\n\techo \"a  b\"   # trailing   \n";
        let g = parse_pipeline(text).unwrap();
        assert_eq!(g.rule("t").unwrap().recipe, vec!["echo \"a  b\"   # trailing   "]);
    }

    #[test]
    fn multiple_recipe_lines_stay_ordered() {
        let text = "t: a b\n\tfirst\n\tsecond\n\tthird\n";
        let g = parse_pipeline(text).unwrap();
        assert_eq!(g.rule("t").unwrap().recipe, vec!["first", "second", "third"]);
        assert_eq!(g.rule("t").unwrap().prerequisites, vec!["a", "b"]);
    }

    #[test]
    fn phony_directive_marks_names() {
        let text = ".PHONY: clean data\nclean:\n\trm -rf out\n";
        let g = parse_pipeline(text).unwrap();
        assert!(g.is_phony("clean"));
        assert!(g.is_phony("data"));
        assert!(!g.is_phony("out"));
        // .PHONY is not a rule
        assert!(g.rule(".PHONY").is_none());
    }

    #[test]
    fn recipe_before_any_rule_is_rejected() {
        assert!(matches!(
            parse_pipeline("\techo hi\n"),
            Err(PipelineError::RecipeWithoutRule { line: 1 })
        ));
        // a recipe directly under .PHONY has no rule either
        assert!(matches!(
            parse_pipeline(".PHONY: x\n\techo hi\n"),
            Err(PipelineError::RecipeWithoutRule { line: 2 })
        ));
    }

    #[test]
    fn duplicate_target_is_rejected() {
        assert!(matches!(
            parse_pipeline("a: b\na: c\n"),
            Err(PipelineError::DuplicateTarget { line: 2, .. })
        ));
    }

    #[test]
    fn missing_colon_is_rejected() {
        assert!(matches!(
            parse_pipeline("just some words\n"),
            Err(PipelineError::MissingColon { line: 1, .. })
        ));
        assert!(matches!(
            parse_pipeline(": prereq\n"),
            Err(PipelineError::MissingColon { .. })
        ));
    }

    #[test]
    fn multi_target_rules_are_rejected() {
        assert!(matches!(
            parse_pipeline("a b: c\n"),
            Err(PipelineError::MultiTarget { .. })
        ));
    }

    #[test]
    fn two_cycle_parses_fine() {
        // cycles are a planning-time error, not a parse error
        let g = parse_pipeline("a: b\nb: a\n").unwrap();
        assert_eq!(g.len(), 2);
    }
}
