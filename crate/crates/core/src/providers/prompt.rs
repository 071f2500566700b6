use serde::{Deserialize, Serialize};

pub const SYSTEM_PROMPT: &str = "You are a Summarizing Text Portal";
pub const USER_TEMPLATE: &str =
    "Write a summary of the following, including as many key details as possible: {context}:";
const PLACEHOLDER: &str = "{context}";

/// The two chat messages sent for every summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizationPrompt {
    pub system: String,
    pub user_template: String,
}

impl Default for SummarizationPrompt {
    fn default() -> Self {
        Self {
            system: SYSTEM_PROMPT.to_string(),
            user_template: USER_TEMPLATE.to_string(),
        }
    }
}

impl SummarizationPrompt {
    /// Substitute `context` into the user template. Only the template's own
    /// placeholder is replaced; braces inside `context` are left alone.
    pub fn user_message(&self, context: &str) -> String {
        match self.user_template.split_once(PLACEHOLDER) {
            Some((head, tail)) => format!("{head}{context}{tail}"),
            None => format!("{}{context}", self.user_template),
        }
    }
}
