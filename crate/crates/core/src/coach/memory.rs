use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Default token budget for the concatenated memory block.
pub const DEFAULT_MEMORY_BUDGET_TOKENS: usize = 3500;

/// Upper bound on a single stored summary, in characters.
pub const MAX_SUMMARY_CHARS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemorySummary {
    pub timestamp: DateTime<Utc>,
    pub session_id: String,
    pub text: String,
}

impl MemorySummary {
    pub fn render(&self) -> String {
        format!(
            "[{}] {}",
            self.timestamp.format("%Y-%m-%d %H:%M UTC"),
            self.text
        )
    }
}

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Record of summaries left out of a context because of the budget.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemoryAudit {
    pub budget_tokens: usize,
    pub used_tokens: usize,
    pub dropped_session_ids: Vec<String>,
}

/// Chronological memory block within `budget_tokens`, dropping the oldest
/// summaries first. Returns `None` when there is nothing to include.
pub fn memory_block(
    summaries: &[MemorySummary],
    budget_tokens: usize,
) -> (Option<String>, MemoryAudit) {
    let mut ordered: Vec<&MemorySummary> = summaries.iter().collect();
    ordered.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    let header = "Notes from earlier conversations with this user:";
    let lines: Vec<String> = ordered.iter().map(|s| s.render()).collect();
    // characters of the block when it starts at line `first`: header plus "\n" + line each
    let mut chars =
        header.chars().count() + lines.iter().map(|l| l.chars().count() + 1).sum::<usize>();
    let mut first = 0;
    while first < lines.len() && chars.div_ceil(4) > budget_tokens {
        chars -= lines[first].chars().count() + 1;
        first += 1;
    }
    let audit = MemoryAudit {
        budget_tokens,
        used_tokens: if first < lines.len() {
            chars.div_ceil(4)
        } else {
            0
        },
        dropped_session_ids: ordered[..first]
            .iter()
            .map(|s| s.session_id.clone())
            .collect(),
    };
    if !audit.dropped_session_ids.is_empty() {
        tracing::info!(dropped = ?audit.dropped_session_ids, budget_tokens, "memory over budget; oldest summaries dropped");
    }
    if first == lines.len() {
        return (None, audit);
    }
    let mut block = header.to_string();
    for l in &lines[first..] {
        block.push('\n');
        block.push_str(l);
    }
    (Some(block), audit)
}
