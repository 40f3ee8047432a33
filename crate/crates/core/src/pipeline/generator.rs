use std::fmt;
use std::fs;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::embedder::{words, MockEmbedder, PageInput};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorIdentity {
    pub name: String,
    pub version: String,
}

impl GeneratorIdentity {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            version: version.into(),
        }
    }
}

impl fmt::Display for GeneratorIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

/// Pages in rank order plus the question. Pages are separate images; they
/// are never concatenated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub question: String,
    pub pages: Vec<PageInput>,
    pub max_new_tokens: usize,
}

/// Answers a question from page images.
///
/// Return [`crate::Error::Transport`] for failures worth retrying. Any
/// returned string, refusals included, is taken verbatim.
pub trait AnswerGenerator: Send + Sync {
    fn identity(&self) -> GeneratorIdentity;
    fn max_pages(&self) -> usize;
    fn generate(&self, request: &GenerationRequest) -> Result<String>;
}

/// Returns the question unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl AnswerGenerator for EchoGenerator {
    fn identity(&self) -> GeneratorIdentity {
        GeneratorIdentity::new("echo", "1")
    }

    fn max_pages(&self) -> usize {
        usize::MAX
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        Ok(request.question.clone())
    }
}

/// Reads each page's sidecar text, picks the page sharing the most distinct
/// words with the question (earlier rank wins ties) and returns the text
/// after `answer:` on that page. Returns an empty answer if nothing matches.
#[derive(Debug, Clone, Copy)]
pub struct KeywordGenerator {
    pub max_pages: usize,
}

impl Default for KeywordGenerator {
    fn default() -> Self {
        Self { max_pages: 4 }
    }
}

pub(crate) fn answer_line(text: &str) -> Option<&str> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix("answer:"))
        .map(str::trim)
}

impl AnswerGenerator for KeywordGenerator {
    fn identity(&self) -> GeneratorIdentity {
        GeneratorIdentity::new("keyword-stub", "1")
    }

    fn max_pages(&self) -> usize {
        self.max_pages
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let question: std::collections::HashSet<String> =
            words(&request.question).into_iter().collect();
        let mut best: Option<(usize, String)> = None;
        for page in &request.pages {
            let Ok(text) = fs::read_to_string(MockEmbedder::sidecar_path(&page.image_path)) else {
                continue;
            };
            let page_words: std::collections::HashSet<String> = words(&text).into_iter().collect();
            let overlap = question.intersection(&page_words).count();
            if best.as_ref().is_none_or(|(b, _)| overlap > *b) {
                best = Some((overlap, text));
            }
        }
        Ok(best
            .as_ref()
            .and_then(|(_, text)| answer_line(text))
            .unwrap_or_default()
            .to_string())
    }
}

/// Wraps a closure; handy for tests and custom stubs.
pub struct FnGenerator<F> {
    identity: GeneratorIdentity,
    max_pages: usize,
    f: F,
}

impl<F> FnGenerator<F>
where
    F: Fn(&GenerationRequest) -> Result<String> + Send + Sync,
{
    pub fn new(name: impl Into<String>, max_pages: usize, f: F) -> Self {
        Self {
            identity: GeneratorIdentity::new(name, "1"),
            max_pages,
            f,
        }
    }
}

impl<F> AnswerGenerator for FnGenerator<F>
where
    F: Fn(&GenerationRequest) -> Result<String> + Send + Sync,
{
    fn identity(&self) -> GeneratorIdentity {
        self.identity.clone()
    }

    fn max_pages(&self) -> usize {
        self.max_pages
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        (self.f)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PageRef;

    fn page(dir: &std::path::Path, i: usize, text: &str) -> PageInput {
        let img = dir.join(format!("p{i}.png"));
        fs::write(img.with_extension("txt"), text).unwrap();
        PageInput {
            page: PageRef {
                doc: "d".into(),
                page_index: i,
                global_id: i,
            },
            image_path: img,
        }
    }

    #[test]
    fn keyword_stub_picks_best_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let pages = vec![
            page(dir.path(), 0, "about cats\nanswer: wrong"),
            page(dir.path(), 1, "topic: quasar\nanswer: Blue Harbor"),
            page(dir.path(), 2, "nothing here"),
        ];
        let req = GenerationRequest {
            question: "What is the quasar answer?".into(),
            pages,
            max_new_tokens: 32,
        };
        assert_eq!(
            KeywordGenerator::default().generate(&req).unwrap(),
            "Blue Harbor"
        );
    }

    #[test]
    fn echo_returns_question() {
        let req = GenerationRequest {
            question: "why?".into(),
            pages: vec![],
            max_new_tokens: 1,
        };
        assert_eq!(EchoGenerator.generate(&req).unwrap(), "why?");
    }
}
