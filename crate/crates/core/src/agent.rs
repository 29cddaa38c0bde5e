//! Hypothesis and patch generation/selection through a text backend.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, CallKey, CallMeter, Stage, TextBackend};
use crate::parse::{parse_choice, parse_modifications, parse_solution};
use crate::patch::Patch;
use crate::prompt::{
    assemble_hypothesis_prompt, assemble_hypothesis_select_prompt, assemble_patch_prompt,
    assemble_patch_select_prompt, RepairContext,
};

/// A natural-language root-cause explanation plus mitigation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    pub id: usize,
    pub gen_params: GenParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub backend: String,
}

#[derive(Debug, Error)]
pub enum AgentError {
    /// Every generation call failed after exhausting the retry budget.
    #[error("backend unavailable: all {attempts} calls failed; last error: {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("candidate list is empty")]
    NoCandidates,
}

/// Per-node call-index bookkeeping: one counter per stage, continuing
/// across in-node retries so scripted fixtures see every call.
#[derive(Debug, Clone)]
pub struct CallCursor {
    pub bug_id: String,
    pub tree_id: u32,
    pub node_depth: u32,
    next: [u32; 4],
}

impl CallCursor {
    pub fn new(bug_id: impl Into<String>, tree_id: u32, node_depth: u32) -> Self {
        CallCursor {
            bug_id: bug_id.into(),
            tree_id,
            node_depth,
            next: [0; 4],
        }
    }

    fn next_key(&mut self, stage: Stage) -> CallKey {
        let slot = match stage {
            Stage::HypGen => 0,
            Stage::HypSelect => 1,
            Stage::PatchGen => 2,
            Stage::PatchSelect => 3,
        };
        let call_index = self.next[slot];
        self.next[slot] += 1;
        CallKey {
            bug_id: self.bug_id.clone(),
            stage,
            tree_id: self.tree_id,
            node_depth: self.node_depth,
            call_index,
        }
    }
}

/// Longest fenced code block in a text, in lines.
fn longest_code_block(text: &str) -> usize {
    let mut longest = 0;
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(n) => longest = longest.max(n),
                None => current = Some(0),
            }
        } else if let Some(n) = current.as_mut() {
            *n += 1;
        }
    }
    longest
}

/// Runs the generation and selection steps for one debug cycle's agent
/// side. Holds no state beyond the shared meter; the per-node cursor
/// is passed in by the caller.
pub struct AgentOps<'a> {
    pub backend: &'a dyn TextBackend,
    pub cfg: &'a BackendConfig,
    pub meter: &'a CallMeter,
}

impl<'a> AgentOps<'a> {
    fn call(&self, key: &CallKey, prompt: &str, temperature: f64) -> Result<String, String> {
        match self.backend.complete(key, prompt, temperature) {
            Ok(response) => {
                self.meter.record(prompt, &response);
                Ok(response)
            }
            Err(e) => {
                self.meter.record_failure(prompt);
                Err(e.to_string())
            }
        }
    }

    /// Generates up to `n` hypotheses at the generation temperature.
    /// Unparseable responses are retried up to the retry budget, then
    /// dropped, so the result may be shorter than `n`. Errors only when
    /// every call failed at the transport level.
    pub fn generate_hypotheses(
        &self,
        cursor: &mut CallCursor,
        ctx: &RepairContext,
        n: usize,
    ) -> Result<Vec<Hypothesis>, AgentError> {
        let prompt = assemble_hypothesis_prompt(ctx);
        let mut hypotheses = Vec::new();
        let mut attempts = 0u32;
        let mut transport_failures = 0u32;
        let mut last_error = String::new();
        for id in 0..n {
            for _ in 0..=self.cfg.max_retries {
                attempts += 1;
                let key = cursor.next_key(Stage::HypGen);
                match self.call(&key, &prompt, self.cfg.gen_temperature) {
                    Ok(response) => match parse_solution(&response) {
                        Ok(text) => {
                            let block = longest_code_block(&text);
                            if block > self.cfg.code_block_warn_lines {
                                log::warn!(
                                    "hypothesis {id} contains a {block}-line code block (soft limit {})",
                                    self.cfg.code_block_warn_lines
                                );
                            }
                            hypotheses.push(Hypothesis {
                                text,
                                id,
                                gen_params: GenParams {
                                    temperature: self.cfg.gen_temperature,
                                    backend: self.backend.name().to_string(),
                                },
                            });
                            break;
                        }
                        Err(e) => {
                            last_error = e.to_string();
                            log::debug!("hypothesis {id} unparseable: {last_error}");
                        }
                    },
                    Err(e) => {
                        transport_failures += 1;
                        last_error = e;
                    }
                }
            }
        }
        if hypotheses.is_empty() && transport_failures == attempts && attempts > 0 {
            return Err(AgentError::BackendUnavailable {
                attempts,
                last: last_error,
            });
        }
        Ok(hypotheses)
    }

    /// Self-reflection: one call at the selection temperature over the
    /// full hypothesis set; falls back to index 0 with a warning when
    /// the choice cannot be parsed after retries. A single candidate is
    /// selected without a backend call.
    pub fn select_hypothesis(
        &self,
        cursor: &mut CallCursor,
        ctx: &RepairContext,
        hypotheses: &[Hypothesis],
    ) -> Result<usize, AgentError> {
        if hypotheses.is_empty() {
            return Err(AgentError::NoCandidates);
        }
        if hypotheses.len() == 1 {
            return Ok(0);
        }
        let texts: Vec<String> = hypotheses.iter().map(|h| h.text.clone()).collect();
        let prompt = assemble_hypothesis_select_prompt(ctx, &texts);
        Ok(self.select_choice(cursor, Stage::HypSelect, &prompt, hypotheses.len()))
    }

    /// Generates up to `n` candidate patches for the selected
    /// hypothesis; mirrors [`Self::generate_hypotheses`].
    pub fn generate_patches(
        &self,
        cursor: &mut CallCursor,
        ctx: &RepairContext,
        hypothesis: &Hypothesis,
        n: usize,
    ) -> Result<Vec<Patch>, AgentError> {
        let prompt = assemble_patch_prompt(ctx, &hypothesis.text);
        let mut patches = Vec::new();
        let mut attempts = 0u32;
        let mut transport_failures = 0u32;
        let mut last_error = String::new();
        for i in 0..n {
            for _ in 0..=self.cfg.max_retries {
                attempts += 1;
                let key = cursor.next_key(Stage::PatchGen);
                match self.call(&key, &prompt, self.cfg.gen_temperature) {
                    Ok(response) => match parse_modifications(&response) {
                        Ok(patch) => {
                            patches.push(patch);
                            break;
                        }
                        Err(e) => {
                            last_error = e.to_string();
                            log::debug!("patch candidate {i} unparseable: {last_error}");
                        }
                    },
                    Err(e) => {
                        transport_failures += 1;
                        last_error = e;
                    }
                }
            }
        }
        if patches.is_empty() && transport_failures == attempts && attempts > 0 {
            return Err(AgentError::BackendUnavailable {
                attempts,
                last: last_error,
            });
        }
        Ok(patches)
    }

    /// Self-consistency: selects the compilable patch best aligned with
    /// the hypothesis; same `<choice>` contract and fallback as
    /// hypothesis selection.
    pub fn select_patch(
        &self,
        cursor: &mut CallCursor,
        ctx: &RepairContext,
        hypothesis: &Hypothesis,
        patches: &[Patch],
    ) -> Result<usize, AgentError> {
        if patches.is_empty() {
            return Err(AgentError::NoCandidates);
        }
        if patches.len() == 1 {
            return Ok(0);
        }
        let prompt = assemble_patch_select_prompt(ctx, &hypothesis.text, patches);
        Ok(self.select_choice(cursor, Stage::PatchSelect, &prompt, patches.len()))
    }

    fn select_choice(
        &self,
        cursor: &mut CallCursor,
        stage: Stage,
        prompt: &str,
        candidates: usize,
    ) -> usize {
        for _ in 0..=self.cfg.max_retries {
            let key = cursor.next_key(stage);
            match self.call(&key, prompt, self.cfg.select_temperature) {
                Ok(response) => match parse_choice(&response, candidates) {
                    Ok(index) => return index,
                    Err(e) => log::debug!("{stage} choice unparseable: {e}"),
                },
                Err(e) => log::debug!("{stage} call failed: {e}"),
            }
        }
        log::warn!("{stage}: no valid <choice> after retries, falling back to candidate 1");
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FixtureMatch, FixtureRule, ScriptedBackend, ScriptedFixture};
    use crate::report::{CrashReport, Frame};

    fn ctx() -> RepairContext {
        RepairContext {
            bug_id: "bug".into(),
            report: CrashReport {
                bug_type: "t".into(),
                frames: vec![Frame::new("f", None)],
                raw_text: "boom".into(),
            },
            candidate_files: vec![("a.c".into(), "int x;\n".into())],
            minimized_trace: None,
        }
    }

    fn rule(stage: Stage, call_index: Option<u32>, response: &str) -> FixtureRule {
        FixtureRule {
            key: FixtureMatch {
                stage: Some(stage),
                call_index,
                ..Default::default()
            },
            response: response.into(),
        }
    }

    fn ops<'a>(backend: &'a ScriptedBackend, cfg: &'a BackendConfig, meter: &'a CallMeter) -> AgentOps<'a> {
        AgentOps {
            backend,
            cfg,
            meter,
        }
    }

    #[test]
    fn scripted_hypotheses_in_fixture_order() {
        let backend = ScriptedBackend::new(ScriptedFixture {
            responses: vec![
                rule(Stage::HypGen, Some(0), "<solution>one</solution>"),
                rule(Stage::HypGen, Some(1), "<solution>two</solution>"),
                rule(Stage::HypGen, Some(2), "<solution>three</solution>"),
            ],
        });
        let cfg = BackendConfig::default();
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let hyps = ops(&backend, &cfg, &meter)
            .generate_hypotheses(&mut cursor, &ctx(), 3)
            .unwrap();
        assert_eq!(
            hyps.iter().map(|h| h.text.as_str()).collect::<Vec<_>>(),
            vec!["one", "two", "three"]
        );
        assert_eq!(meter.snapshot().calls, 3);
    }

    #[test]
    fn malformed_response_dropped_without_retries() {
        let backend = ScriptedBackend::new(ScriptedFixture {
            responses: vec![
                rule(Stage::HypGen, Some(0), "<solution>ok0</solution>"),
                rule(Stage::HypGen, Some(1), "garbage"),
                rule(Stage::HypGen, Some(2), "<solution>ok2</solution>"),
            ],
        });
        let cfg = BackendConfig {
            max_retries: 0,
            ..Default::default()
        };
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let hyps = ops(&backend, &cfg, &meter)
            .generate_hypotheses(&mut cursor, &ctx(), 3)
            .unwrap();
        assert_eq!(hyps.len(), 2);
    }

    #[test]
    fn all_calls_failing_is_backend_unavailable() {
        let backend = ScriptedBackend::new(ScriptedFixture { responses: vec![] });
        let cfg = BackendConfig {
            max_retries: 1,
            ..Default::default()
        };
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let err = ops(&backend, &cfg, &meter)
            .generate_hypotheses(&mut cursor, &ctx(), 2)
            .unwrap_err();
        assert!(matches!(err, AgentError::BackendUnavailable { attempts: 4, .. }));
    }

    #[test]
    fn single_hypothesis_selected_without_call() {
        let backend = ScriptedBackend::new(ScriptedFixture { responses: vec![] });
        let cfg = BackendConfig::default();
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let hyp = Hypothesis {
            text: "only".into(),
            id: 0,
            gen_params: GenParams {
                temperature: 0.8,
                backend: "scripted".into(),
            },
        };
        let idx = ops(&backend, &cfg, &meter)
            .select_hypothesis(&mut cursor, &ctx(), &[hyp])
            .unwrap();
        assert_eq!(idx, 0);
        assert_eq!(meter.snapshot().calls, 0);
    }

    #[test]
    fn scripted_choice_selects_index() {
        let backend = ScriptedBackend::new(ScriptedFixture {
            responses: vec![rule(Stage::HypSelect, None, "<choice>2</choice>")],
        });
        let cfg = BackendConfig::default();
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let hyp = |t: &str| Hypothesis {
            text: t.into(),
            id: 0,
            gen_params: GenParams {
                temperature: 0.8,
                backend: "scripted".into(),
            },
        };
        let idx = ops(&backend, &cfg, &meter)
            .select_hypothesis(&mut cursor, &ctx(), &[hyp("a"), hyp("b"), hyp("c")])
            .unwrap();
        assert_eq!(idx, 1);
    }

    #[test]
    fn garbage_choice_falls_back_to_zero() {
        let backend = ScriptedBackend::new(ScriptedFixture {
            responses: vec![rule(Stage::HypSelect, None, "whatever")],
        });
        let cfg = BackendConfig {
            max_retries: 0,
            ..Default::default()
        };
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let hyp = |t: &str| Hypothesis {
            text: t.into(),
            id: 0,
            gen_params: GenParams {
                temperature: 0.8,
                backend: "scripted".into(),
            },
        };
        let idx = ops(&backend, &cfg, &meter)
            .select_hypothesis(&mut cursor, &ctx(), &[hyp("a"), hyp("b")])
            .unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn code_block_length_measured() {
        assert_eq!(longest_code_block("x\n```\na\nb\n```\ny"), 2);
        assert_eq!(longest_code_block("no fences"), 0);
    }

    fn modification_response(file: &str, original: &str, patched: &str) -> String {
        format!(
            "// Modification 1\n<reason>\nr\n</reason>\n<file>\n{file}\n</file>\n<original>\n{original}\n</original>\n<patched>\n{patched}\n</patched>\n"
        )
    }

    #[test]
    fn patches_generated_in_fixture_order_with_malformed_dropped() {
        let backend = ScriptedBackend::new(ScriptedFixture {
            responses: vec![
                rule(
                    Stage::PatchGen,
                    Some(0),
                    &modification_response("a.c", "x", "y"),
                ),
                rule(Stage::PatchGen, Some(1), "not a modification list"),
                rule(
                    Stage::PatchGen,
                    Some(2),
                    &modification_response("b.c", "u", "v"),
                ),
            ],
        });
        let cfg = BackendConfig {
            max_retries: 0,
            ..Default::default()
        };
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let hyp = Hypothesis {
            text: "plan".into(),
            id: 0,
            gen_params: GenParams {
                temperature: 0.8,
                backend: "scripted".into(),
            },
        };
        let patches = ops(&backend, &cfg, &meter)
            .generate_patches(&mut cursor, &ctx(), &hyp, 3)
            .unwrap();
        assert_eq!(patches.len(), 2);
        assert_eq!(patches[0].edits[0].file, "a.c");
        assert_eq!(patches[1].edits[0].file, "b.c");
    }

    #[test]
    fn single_patch_selected_without_call() {
        let backend = ScriptedBackend::new(ScriptedFixture { responses: vec![] });
        let cfg = BackendConfig::default();
        let meter = CallMeter::default();
        let mut cursor = CallCursor::new("bug", 1, 1);
        let hyp = Hypothesis {
            text: "plan".into(),
            id: 0,
            gen_params: GenParams {
                temperature: 0.8,
                backend: "scripted".into(),
            },
        };
        let patch = crate::parse::parse_modifications(&modification_response("a.c", "x", "y")).unwrap();
        let idx = ops(&backend, &cfg, &meter)
            .select_patch(&mut cursor, &ctx(), &hyp, &[patch])
            .unwrap();
        assert_eq!(idx, 0);
        assert_eq!(meter.snapshot().calls, 0);
    }
}
