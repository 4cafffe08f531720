//! The three stages (strategy, induct, inference) and the per-method runs
//! built from them.
//!
//! ZCoT and SCoT go straight to inference with the task's short phrase as
//! the instruction. INDUCT induces an instruction from the sampled bare
//! questions; StrategyInduct first asks for one strategy per sampled
//! question and induces from the strategy-question pairs. Task-level
//! instructions are induced once and reused for every evaluated item.

mod pool;

pub use pool::parallel_map;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{sample_items, DatasetError, QAItem, TaskSpec};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, ModelProfile};
use crate::tags::{extract, Tag};
use crate::templates::{serialize_pairs, serialize_questions, SlotValues, TemplateError, TemplateKind, TemplateSet};
pub use crate::Method;

pub const DEFAULT_N: usize = 3;
pub const DEFAULT_SAMPLE_SIZE: usize = 25;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("task `{task}`: no <strategy> block for item `{item_id}`")]
    StrategyExtractionFailed { task: String, item_id: String },
    #[error("task `{task}`: no <task_instruction> block in the induction response")]
    InstructionExtractionFailed { task: String },
    #[error("{0} does not induce instructions")]
    NotTaskLevel(Method),
    #[error("{method} needs an induced instruction for task `{task}`")]
    MissingInstruction { task: String, method: Method },
    #[error("item `{item_id}`: {source}")]
    Item {
        item_id: String,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl PipelineError {
    /// True when the failure came from the spend cap.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            PipelineError::Gateway(GatewayError::BudgetExceeded { .. })
                | PipelineError::Item {
                    source: GatewayError::BudgetExceeded { .. },
                    ..
                }
        )
    }
}

/// A sampled question and the strategy generated for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyPair {
    pub item_id: String,
    pub question: String,
    pub strategy: String,
}

/// What the induct stage synthesizes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InductionSource {
    /// Bare questions, for the INDUCT baseline.
    Questions(Vec<QAItem>),
    /// Strategy-question pairs, for StrategyInduct.
    StrategyPairs(Vec<StrategyPair>),
}

impl InductionSource {
    fn item_ids(&self) -> Vec<String> {
        match self {
            InductionSource::Questions(items) => items.iter().map(|i| i.id.clone()).collect(),
            InductionSource::StrategyPairs(pairs) => pairs.iter().map(|p| p.item_id.clone()).collect(),
        }
    }
}

/// A reusable task instruction and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InducedPrompt {
    pub task: String,
    pub method: Method,
    pub inducing_model: String,
    pub provider_id: String,
    pub n: usize,
    pub seed: u64,
    pub source_item_ids: Vec<String>,
    pub instruction: String,
}

impl InducedPrompt {
    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("induced prompt serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub item_id: String,
    pub method: Method,
    pub inference_model: String,
    pub provider_id: String,
    /// Cache key of the inference request.
    pub prompt_digest: String,
    pub raw_response: String,
    pub deduction: Option<String>,
    pub final_answer: Option<String>,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    /// Questions sampled for induction.
    pub n: usize,
    pub seed: u64,
    /// Items evaluated per task; capped at the task size.
    pub sample_size: usize,
    pub workers: usize,
    /// Extra asks when a strategy or instruction block is missing.
    pub extraction_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            seed: 0,
            sample_size: DEFAULT_SAMPLE_SIZE,
            workers: 4,
            extraction_retries: 1,
        }
    }
}

/// Records plus the items that could not be completed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InferenceOutcome {
    /// Sorted by item id.
    pub records: Vec<InferenceRecord>,
    pub failures: Vec<ItemFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodOutcome {
    pub induced: Option<InducedPrompt>,
    pub inference: InferenceOutcome,
}

pub struct Pipeline<'a> {
    gateway: &'a Gateway,
    templates: &'a TemplateSet,
    config: PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(gateway: &'a Gateway, templates: &'a TemplateSet, config: PipelineConfig) -> Self {
        Self {
            gateway,
            templates,
            config,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Questions used for induction: the first `n` of the seeded order.
    pub fn induction_sample(&self, task: &TaskSpec) -> Result<Vec<QAItem>, PipelineError> {
        Ok(sample_items(task, self.config.n, self.config.seed)?)
    }

    /// Items evaluated for every method, sorted by id.
    pub fn evaluation_sample(&self, task: &TaskSpec) -> Result<Vec<QAItem>, PipelineError> {
        let m = self.config.sample_size.min(task.items.len());
        let mut items = sample_items(task, m, self.config.seed)?;
        items.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(items)
    }

    /// Asks until `tag` is present, up to `extraction_retries` extra times.
    fn complete_extracting(&self, profile: &ModelProfile, prompt: &str, tag: Tag) -> Result<Option<String>, GatewayError> {
        for attempt in 0..=self.config.extraction_retries {
            let req = CompletionRequest::new(profile, prompt).with_attempt(attempt);
            let completion = self.gateway.complete(&req)?;
            match extract(&completion.text, tag) {
                Some(found) if !found.is_empty() => return Ok(Some(found)),
                _ => tracing::debug!(tag = tag.name(), attempt, "tag missing from response"),
            }
        }
        Ok(None)
    }

    /// One strategy per sampled question, in sampling order. Any failure
    /// aborts the stage so that induction always sees exactly `n` pairs.
    pub fn run_strategy_stage(&self, task: &TaskSpec, model: &ModelProfile) -> Result<Vec<StrategyPair>, PipelineError> {
        let items = self.induction_sample(task)?;
        let results = parallel_map(&items, self.config.workers, |item| -> Result<StrategyPair, PipelineError> {
            let slots = SlotValues::new(&task.short_phrase, &task.answer_format).with_question(&item.question);
            let prompt = self.templates.render(TemplateKind::StrategyDesign, &slots)?;
            let strategy = self
                .complete_extracting(model, prompt.as_str(), Tag::Strategy)
                .map_err(|source| PipelineError::Item {
                    item_id: item.id.clone(),
                    source,
                })?
                .ok_or_else(|| PipelineError::StrategyExtractionFailed {
                    task: task.key().to_string(),
                    item_id: item.id.clone(),
                })?;
            Ok(StrategyPair {
                item_id: item.id.clone(),
                question: item.question.clone(),
                strategy,
            })
        });
        results.into_iter().collect()
    }

    pub fn run_induct_stage(
        &self,
        task: &TaskSpec,
        source: &InductionSource,
        model: &ModelProfile,
    ) -> Result<InducedPrompt, PipelineError> {
        let (kind, method, examples) = match source {
            InductionSource::Questions(items) => {
                let questions: Vec<&str> = items.iter().map(|i| i.question.as_str()).collect();
                (TemplateKind::InductBaseline, Method::InductBaseline, serialize_questions(&questions)?)
            }
            InductionSource::StrategyPairs(pairs) => (
                TemplateKind::StrategyInduction,
                Method::StrategyInduct,
                serialize_pairs(pairs)?,
            ),
        };
        let slots = SlotValues::new(&task.short_phrase, &task.answer_format).with_examples(examples);
        let prompt = self.templates.render(kind, &slots)?;
        let instruction = self
            .complete_extracting(model, prompt.as_str(), Tag::TaskInstruction)?
            .ok_or_else(|| PipelineError::InstructionExtractionFailed {
                task: task.key().to_string(),
            })?;
        let ids = source.item_ids();
        Ok(InducedPrompt {
            task: task.key().to_string(),
            method,
            inducing_model: model.name.clone(),
            provider_id: model.provider_id.clone(),
            n: ids.len(),
            seed: self.config.seed,
            source_item_ids: ids,
            instruction,
        })
    }

    /// Runs whichever stages `method` needs to produce its instruction.
    pub fn induce(&self, task: &TaskSpec, method: Method, model: &ModelProfile) -> Result<InducedPrompt, PipelineError> {
        let source = match method {
            Method::InductBaseline => InductionSource::Questions(self.induction_sample(task)?),
            Method::StrategyInduct => InductionSource::StrategyPairs(self.run_strategy_stage(task, model)?),
            other => return Err(PipelineError::NotTaskLevel(other)),
        };
        self.run_induct_stage(task, &source, model)
    }

    /// One inference call. `instruction` is the short phrase for
    /// instance-level methods and the induced instruction otherwise.
    pub fn run_inference(
        &self,
        instruction: &str,
        method: Method,
        item: &QAItem,
        answer_format: &str,
        model: &ModelProfile,
    ) -> Result<InferenceRecord, PipelineError> {
        let kind = match method {
            Method::ZCoT => TemplateKind::InferenceZCoT,
            Method::SCoT => TemplateKind::InferenceSCoT,
            Method::InductBaseline | Method::StrategyInduct => TemplateKind::InferenceInduced,
        };
        let slots = SlotValues::new("", answer_format)
            .with_instruction(instruction)
            .with_question(&item.question);
        let prompt = self.templates.render(kind, &slots)?;
        let req = CompletionRequest::new(model, prompt.text);
        let completion = self.gateway.complete(&req).map_err(|source| PipelineError::Item {
            item_id: item.id.clone(),
            source,
        })?;
        Ok(InferenceRecord {
            item_id: item.id.clone(),
            method,
            inference_model: model.name.clone(),
            provider_id: model.provider_id.clone(),
            prompt_digest: completion.key.to_string(),
            deduction: extract(&completion.text, Tag::Deduction),
            final_answer: extract(&completion.text, Tag::FinalAnswer),
            raw_response: completion.text,
            correct: None,
        })
    }

    /// Inference over the evaluation sample. Failed items are reported and
    /// the rest still run.
    pub fn infer_items(
        &self,
        task: &TaskSpec,
        method: Method,
        instruction: &str,
        model: &ModelProfile,
    ) -> Result<InferenceOutcome, PipelineError> {
        let items = self.evaluation_sample(task)?;
        let results = parallel_map(&items, self.config.workers, |item| {
            self.run_inference(instruction, method, item, &task.answer_format, model)
        });
        let mut outcome = InferenceOutcome::default();
        for (item, result) in items.iter().zip(results) {
            match result {
                Ok(record) => outcome.records.push(record),
                Err(e) => outcome.failures.push(ItemFailure {
                    item_id: item.id.clone(),
                    error: e.to_string(),
                }),
            }
        }
        Ok(outcome)
    }

    /// Runs `method` end to end. For task-level methods `induced` is reused
    /// when given, otherwise induction runs first with `inducing`.
    pub fn run_method(
        &self,
        method: Method,
        task: &TaskSpec,
        inducing: &ModelProfile,
        inference: &ModelProfile,
        induced: Option<&InducedPrompt>,
    ) -> Result<MethodOutcome, PipelineError> {
        if !method.is_task_level() {
            let inference = self.infer_items(task, method, &task.short_phrase, inference)?;
            return Ok(MethodOutcome {
                induced: None,
                inference,
            });
        }
        let induced = match induced {
            Some(p) => p.clone(),
            None => self.induce(task, method, inducing)?,
        };
        let inference = self.infer_items(task, method, &induced.instruction, inference)?;
        Ok(MethodOutcome {
            induced: Some(induced),
            inference,
        })
    }
}
