//! A deterministic backend with canned responses, for driving the pipeline
//! in tests and for recording the replay fixtures.

use ros_core::backend::{Backend, BackendError, ChatRequest, GenerationConfig};
use ros_core::pipeline::{build_ner_prompt, CLS_SYSTEM_PROMPT, NER_SYSTEM_PROMPT};

/// Answers recognition requests keyed by the ROS body text and
/// classification requests keyed by the extract. Unknown requests fail
/// loudly so a fixture gap cannot pass silently.
#[derive(Debug, Default, Clone)]
pub struct ScriptedBackend {
    ner: Vec<(String, String)>,
    cls: Vec<(String, String)>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Respond to recognition over `ros_body` (the exact section body the
    /// segmenter yields) with `response`.
    pub fn ner_response(mut self, ros_body: &str, response: impl Into<String>) -> Self {
        let key = build_ner_prompt(ros_body).user_message;
        self.ner.push((key, response.into()));
        self
    }

    /// Respond to classification of `extract` with `response`.
    pub fn cls_response(mut self, extract: &str, response: impl Into<String>) -> Self {
        self.cls.push((extract.to_string(), response.into()));
        self
    }
}

impl Backend for ScriptedBackend {
    fn complete(
        &self,
        request: &ChatRequest,
        _config: &GenerationConfig,
    ) -> Result<String, BackendError> {
        let table = if request.system_prompt == NER_SYSTEM_PROMPT {
            &self.ner
        } else if request.system_prompt == CLS_SYSTEM_PROMPT {
            &self.cls
        } else {
            return Err(BackendError::Transport {
                backend: "scripted",
                digest: String::new(),
                message: "unknown system prompt".to_string(),
            });
        };
        table
            .iter()
            .find(|(key, _)| *key == request.user_message)
            .map(|(_, response)| response.clone())
            .ok_or_else(|| BackendError::Transport {
                backend: "scripted",
                digest: String::new(),
                message: format!("no scripted response for {:?}", request.user_message),
            })
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}
