//! Cloze prompts for relation type prediction:
//! `[USER-i] said <target> [MASK]×k [USER-j] said <source>`, appended to the
//! serialized thread. The target is the component being referred to, the
//! source the one referring to it, so the prompt reads in thread order.

use crate::{ModelError, Result};
use argmine_core::corpus::{user_token, SerializedThread, MASK};
use argmine_core::labels::ComponentSpan;
use serde::{Deserialize, Serialize};

/// Surface form of the joining word inside the prompt.
pub const SAID_TOKEN: &str = " said";
pub const DEFAULT_MASKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub context_tokens: Vec<String>,
    pub context_global: Vec<bool>,
    /// Tokens dropped from the front of the thread to make room.
    pub context_dropped: usize,
    pub prompt_tokens: Vec<String>,
    /// Indices into [`tokens`](Self::tokens) of the mask tokens.
    pub mask_positions: Vec<usize>,
    pub label: Option<String>,
}

impl PromptInstance {
    pub fn tokens(&self) -> Vec<String> {
        self.context_tokens.iter().chain(&self.prompt_tokens).cloned().collect()
    }

    /// Global flags of the context; prompt tokens are local.
    pub fn global(&self) -> Vec<bool> {
        let mut g = self.context_global.clone();
        g.resize(self.context_tokens.len() + self.prompt_tokens.len(), false);
        g
    }

    pub fn len(&self) -> usize {
        self.context_tokens.len() + self.prompt_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn component_user(st: &SerializedThread, c: &ComponentSpan) -> Result<usize> {
    let post = st
        .post_of(c.token_start)
        .ok_or_else(|| ModelError::Prompt(format!("component {} lies outside the thread", c.component_id)))?;
    Ok(st.post_users[post])
}

fn component_tokens<'a>(st: &'a SerializedThread, c: &ComponentSpan) -> Result<&'a [String]> {
    if c.token_start >= c.token_end || c.token_end > st.len() {
        return Err(ModelError::Prompt(format!("component {} has no text in the thread", c.component_id)));
    }
    Ok(&st.tokens[c.token_start..c.token_end])
}

/// Template tokens alone, with mask offsets relative to the template.
pub fn prompt_template(
    st: &SerializedThread,
    source: &ComponentSpan,
    target: &ComponentSpan,
    k: usize,
) -> Result<(Vec<String>, Vec<usize>)> {
    if k == 0 {
        return Err(ModelError::Prompt("at least one mask token is required".into()));
    }
    let mut t = vec![user_token(component_user(st, target)?), SAID_TOKEN.to_string()];
    t.extend_from_slice(component_tokens(st, target)?);
    let masks: Vec<usize> = (t.len()..t.len() + k).collect();
    t.extend(std::iter::repeat_n(MASK.to_string(), k));
    t.push(user_token(component_user(st, source)?));
    t.push(SAID_TOKEN.to_string());
    t.extend_from_slice(component_tokens(st, source)?);
    Ok((t, masks))
}

/// Appends the prompt to `st`, dropping the oldest context tokens when the
/// whole would exceed `max_positions`.
pub fn build_prompt(
    st: &SerializedThread,
    source: &ComponentSpan,
    target: &ComponentSpan,
    k: usize,
    max_positions: usize,
) -> Result<PromptInstance> {
    let (prompt, masks) = prompt_template(st, source, target, k)?;
    if prompt.len() > max_positions {
        return Err(ModelError::Prompt(format!(
            "prompt of {} tokens exceeds max_positions {max_positions}",
            prompt.len()
        )));
    }
    let room = max_positions - prompt.len();
    let dropped = st.len().saturating_sub(room);
    let context_tokens = st.tokens[dropped..].to_vec();
    let base = context_tokens.len();
    Ok(PromptInstance {
        context_global: st.global_attention[dropped..].to_vec(),
        context_tokens,
        context_dropped: dropped,
        prompt_tokens: prompt,
        mask_positions: masks.into_iter().map(|m| m + base).collect(),
        label: None,
    })
}
