//! Reasoner consortium: every decision is fanned out to several independent
//! reasoners and synthesized into one value with a dispersion score.
//!
//! Numeric answers are combined by the lower median, categorical answers by
//! plurality, text answers fall back to the deterministic template. High
//! dispersion flags the decision for human review.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    OrderQuantity,
    SupplierChoice,
    AllocationWeights,
    AlertActionText,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskKind::OrderQuantity => "order_quantity",
            TaskKind::SupplierChoice => "supplier_choice",
            TaskKind::AllocationWeights => "allocation_weights",
            TaskKind::AlertActionText => "alert_action_text",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum TaskValue {
    Number(f64),
    Choice { id: String, score: f64 },
    Weights(Vec<f64>),
    Text(String),
}

impl TaskValue {
    pub fn matches(&self, kind: TaskKind) -> bool {
        matches!(
            (kind, self),
            (TaskKind::OrderQuantity, TaskValue::Number(_))
                | (TaskKind::SupplierChoice, TaskValue::Choice { .. })
                | (TaskKind::AllocationWeights, TaskValue::Weights(_))
                | (TaskKind::AlertActionText, TaskValue::Text(_))
        )
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            TaskValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_choice(&self) -> Option<&str> {
        match self {
            TaskValue::Choice { id, .. } => Some(id),
            _ => None,
        }
    }

    pub fn as_weights(&self) -> Option<&[f64]> {
        match self {
            TaskValue::Weights(w) => Some(w),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            TaskValue::Text(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerTask {
    pub kind: TaskKind,
    /// Kind-specific payload describing the decision.
    pub context: serde_json::Value,
    /// The deterministic module's own answer.
    pub baseline_hint: TaskValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub reasoner_id: String,
    pub value: TaskValue,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub task_kind: TaskKind,
    pub proposals: Vec<Proposal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    pub synthesized: TaskValue,
    pub dispersion: f64,
    pub synthesis_note: String,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReasonerError {
    #[error("reasoner timed out")]
    Timeout,
    #[error("reasoner unavailable: {0}")]
    Unavailable(String),
    #[error("malformed proposal: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsortiumError {
    #[error("no reasoners configured")]
    NoReasoners,
    #[error("all reasoners failed: {}", .0.join("; "))]
    AllReasonersFailed(Vec<String>),
    #[error("no proposals to synthesize")]
    EmptyProposals,
}

/// A pluggable decision backend.
pub trait Reasoner: Send + Sync {
    fn id(&self) -> &str;

    fn propose(&self, task: &ReasonerTask) -> Result<Proposal, ReasonerError>;

    /// Whether a call may block on I/O; such reasoners are invoked concurrently.
    fn is_remote(&self) -> bool {
        false
    }
}

/// Returns the module's own deterministic answer.
#[derive(Debug, Clone)]
pub struct BaselineReasoner {
    id: String,
}

impl BaselineReasoner {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Reasoner for BaselineReasoner {
    fn id(&self) -> &str {
        &self.id
    }

    fn propose(&self, task: &ReasonerTask) -> Result<Proposal, ReasonerError> {
        Ok(Proposal {
            reasoner_id: self.id.clone(),
            value: task.baseline_hint.clone(),
            rationale: format!("deterministic {} rule", task.kind),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Perturbation {
    Fixed { epsilon: f64 },
    /// ε drawn uniformly from `[-amplitude, amplitude]`, keyed on (seed, reasoner, task).
    Seeded { amplitude: f64, seed: u64 },
}

/// Scales the baseline's numeric answers by `1 + ε`. Categorical and text answers keep
/// the baseline choice with the reported score scaled the same way.
#[derive(Debug, Clone)]
pub struct PerturbedReasoner {
    id: String,
    perturbation: Perturbation,
}

impl PerturbedReasoner {
    pub fn fixed(id: impl Into<String>, epsilon: f64) -> Self {
        Self {
            id: id.into(),
            perturbation: Perturbation::Fixed { epsilon },
        }
    }

    pub fn seeded(id: impl Into<String>, amplitude: f64, seed: u64) -> Self {
        Self {
            id: id.into(),
            perturbation: Perturbation::Seeded { amplitude, seed },
        }
    }

    pub fn epsilon_for(&self, task: &ReasonerTask) -> f64 {
        match self.perturbation {
            Perturbation::Fixed { epsilon } => epsilon,
            Perturbation::Seeded { amplitude, seed } => {
                let mut h = Sha256::new();
                h.update(seed.to_le_bytes());
                h.update(self.id.as_bytes());
                h.update(serde_json::to_vec(task).expect("task serializes"));
                let digest = h.finalize();
                let mut bytes = [0u8; 8];
                bytes.copy_from_slice(&digest[..8]);
                let u = (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64;
                amplitude * (2.0 * u - 1.0)
            }
        }
    }
}

impl Reasoner for PerturbedReasoner {
    fn id(&self) -> &str {
        &self.id
    }

    fn propose(&self, task: &ReasonerTask) -> Result<Proposal, ReasonerError> {
        let eps = self.epsilon_for(task);
        let k = 1.0 + eps;
        let value = match &task.baseline_hint {
            TaskValue::Number(x) => TaskValue::Number(x * k),
            TaskValue::Choice { id, score } => TaskValue::Choice {
                id: id.clone(),
                score: score * k,
            },
            TaskValue::Weights(w) => TaskValue::Weights(w.iter().map(|x| x * k).collect()),
            TaskValue::Text(t) => TaskValue::Text(t.clone()),
        };
        Ok(Proposal {
            reasoner_id: self.id.clone(),
            value,
            rationale: format!("baseline scaled by 1{eps:+.4}"),
        })
    }
}

/// Proposals gathered from a fan-out plus the reasons for any missing ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FanOut {
    pub proposals: Vec<Proposal>,
    pub failures: Vec<String>,
}

fn collect(task: &ReasonerTask, r: &dyn Reasoner) -> Result<Proposal, String> {
    match r.propose(task) {
        Ok(p) if p.value.matches(task.kind) => Ok(p),
        Ok(_) => Err(format!("{}: proposal type does not match {}", r.id(), task.kind)),
        Err(e) => Err(format!("{}: {e}", r.id())),
    }
}

/// Invokes every reasoner with the same task. Failures become absent proposals.
pub fn fan_out(task: &ReasonerTask, reasoners: &[Arc<dyn Reasoner>]) -> Result<FanOut, ConsortiumError> {
    if reasoners.is_empty() {
        return Err(ConsortiumError::NoReasoners);
    }
    let results: Vec<Result<Proposal, String>> = if reasoners.len() > 1 && reasoners.iter().any(|r| r.is_remote()) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = reasoners
                .iter()
                .map(|r| scope.spawn(move || collect(task, r.as_ref())))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("reasoner panicked".to_string())))
                .collect()
        })
    } else {
        reasoners.iter().map(|r| collect(task, r.as_ref())).collect()
    };
    let mut out = FanOut {
        proposals: Vec::new(),
        failures: Vec::new(),
    };
    for r in results {
        match r {
            Ok(p) => out.proposals.push(p),
            Err(e) => out.failures.push(e),
        }
    }
    if out.proposals.is_empty() {
        return Err(ConsortiumError::AllReasonersFailed(out.failures));
    }
    Ok(out)
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

fn spread(values: &[f64], median: f64) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min) / median.abs().max(1.0)
}

/// Combines proposals into one value: lower median for numbers (elementwise for weight
/// vectors), plurality for categorical choices, the baseline template for text.
pub fn synthesize(
    proposals: &[Proposal],
    task: &ReasonerTask,
    dispersion_threshold: f64,
) -> Result<(TaskValue, ReasoningTrace), ConsortiumError> {
    let usable: Vec<&Proposal> = proposals.iter().filter(|p| p.value.matches(task.kind)).collect();
    if usable.is_empty() {
        return Err(ConsortiumError::EmptyProposals);
    }
    let (value, dispersion, note) = match task.kind {
        TaskKind::OrderQuantity => {
            let mut xs: Vec<f64> = usable.iter().filter_map(|p| p.value.as_number()).collect();
            let m = lower_median(&mut xs);
            let d = spread(&xs, m);
            (TaskValue::Number(m), d, format!("lower median of {} numeric proposals", xs.len()))
        }
        TaskKind::AllocationWeights => {
            let vecs: Vec<&[f64]> = usable.iter().filter_map(|p| p.value.as_weights()).collect();
            let dim = vecs.iter().map(|v| v.len()).min().unwrap_or(0);
            let mut out = Vec::with_capacity(dim);
            let mut d: f64 = 0.0;
            for i in 0..dim {
                let mut col: Vec<f64> = vecs.iter().map(|v| v[i]).collect();
                let m = lower_median(&mut col);
                d = d.max(spread(&col, m));
                out.push(m);
            }
            (
                TaskValue::Weights(out),
                d,
                format!("elementwise lower median of {} weight vectors", vecs.len()),
            )
        }
        TaskKind::SupplierChoice => {
            let mut tally: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for p in &usable {
                if let TaskValue::Choice { id, score } = &p.value {
                    tally.entry(id.as_str()).or_default().push(*score);
                }
            }
            // BTreeMap iterates ascending ids, so the first strict winner is the tie-break winner
            let mut best: Option<(&str, usize, f64)> = None;
            for (id, scores) in &tally {
                let (count, total) = (scores.len(), scores.iter().sum::<f64>());
                let better = match best {
                    None => true,
                    Some((_, bc, bs)) => count > bc || (count == bc && total > bs),
                };
                if better {
                    best = Some((id, count, total));
                }
            }
            let (id, count, _) = best.expect("non-empty tally");
            // median rather than mean so that agreeing reasoners reproduce the score exactly
            let score = lower_median(&mut tally[id].clone());
            let d = 1.0 - count as f64 / usable.len() as f64;
            (
                TaskValue::Choice { id: id.to_string(), score },
                d,
                format!("plurality {count}/{} for {id}", usable.len()),
            )
        }
        TaskKind::AlertActionText => {
            let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
            for p in &usable {
                if let Some(t) = p.value.as_text() {
                    *tally.entry(t).or_default() += 1;
                }
            }
            let top = tally.values().copied().max().unwrap_or(0);
            let d = 1.0 - top as f64 / usable.len() as f64;
            (
                task.baseline_hint.clone(),
                d,
                "deterministic template retained for text decisions".to_string(),
            )
        }
    };
    let flagged = dispersion > dispersion_threshold;
    let trace = ReasoningTrace {
        task_kind: task.kind,
        proposals: usable.into_iter().cloned().collect(),
        failures: Vec::new(),
        synthesized: value.clone(),
        dispersion,
        synthesis_note: if flagged {
            format!("{note}; dispersion {dispersion:.3} above {dispersion_threshold} - flagged for review")
        } else {
            note
        },
        flagged,
    };
    Ok((value, trace))
}

/// A configured set of reasoners plus the review threshold.
#[derive(Clone)]
pub struct Consortium {
    reasoners: Vec<Arc<dyn Reasoner>>,
    dispersion_threshold: f64,
}

impl fmt::Debug for Consortium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Consortium")
            .field("reasoners", &self.reasoner_ids())
            .field("dispersion_threshold", &self.dispersion_threshold)
            .finish()
    }
}

impl Consortium {
    pub fn new(reasoners: Vec<Arc<dyn Reasoner>>, dispersion_threshold: f64) -> Self {
        Self {
            reasoners,
            dispersion_threshold,
        }
    }

    /// A single deterministic reasoner.
    pub fn baseline(dispersion_threshold: f64) -> Self {
        Self::new(vec![Arc::new(BaselineReasoner::new("baseline"))], dispersion_threshold)
    }

    /// Baseline flanked by two reasoners at `1 ± epsilon`; the median is the baseline.
    pub fn trio(epsilon: f64, dispersion_threshold: f64) -> Self {
        Self::new(
            vec![
                Arc::new(BaselineReasoner::new("baseline")),
                Arc::new(PerturbedReasoner::fixed("low", -epsilon)),
                Arc::new(PerturbedReasoner::fixed("high", epsilon)),
            ],
            dispersion_threshold,
        )
    }

    pub fn reasoner_ids(&self) -> Vec<String> {
        self.reasoners.iter().map(|r| r.id().to_string()).collect()
    }

    pub fn threshold(&self) -> f64 {
        self.dispersion_threshold
    }

    pub fn decide(&self, task: &ReasonerTask) -> Result<(TaskValue, ReasoningTrace), ConsortiumError> {
        let fan = fan_out(task, &self.reasoners)?;
        let (value, mut trace) = synthesize(&fan.proposals, task, self.dispersion_threshold)?;
        trace.failures = fan.failures;
        Ok((value, trace))
    }

    /// Like [`decide`](Self::decide), but degrades to the baseline hint with a note when
    /// every reasoner fails.
    pub fn decide_or_baseline(&self, task: &ReasonerTask) -> (TaskValue, ReasoningTrace) {
        match self.decide(task) {
            Ok(r) => r,
            Err(e) => (
                task.baseline_hint.clone(),
                ReasoningTrace {
                    task_kind: task.kind,
                    proposals: Vec::new(),
                    failures: vec![e.to_string()],
                    synthesized: task.baseline_hint.clone(),
                    dispersion: 0.0,
                    synthesis_note: "consortium unavailable; deterministic answer used and flagged".into(),
                    flagged: true,
                },
            ),
        }
    }
}
