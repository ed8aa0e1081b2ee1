//! Generation prompt templates and tagged-output parsing.

use thiserror::Error;

use crate::certainty::HardLabel;

/// Few-shot examples beyond this count are dropped.
pub const MAX_FEWSHOT_EXAMPLES: usize = 4;

const INITIAL_PREAMBLE: &str = "Human: You are given the following document wrapped in <document> </document> tags:\n";

const INITIAL_HEADER: &str = "Your task is to generate summaries from a document. Here are some examples of how the summaries could look like:\n\
\n\
Note however that some of the samples contain incorrect information that is not part of the document!\n\
Here are the examples:\n";

const ENTAILED_TASK: &str = "Now your task is to generate {n} summaries from the document. \
However, unlike some of the examples given above, the summaries must be entirely supported by the document. \
Only include information that is directly inferrable from the document. \
It is also important that the summaries reflect the style, length and wording of examples. \
If there are common patterns or sentence structures in the examples summaries, the created summaries should reflect those. \
Each summary is identified with an integer from 0 to {last}. \
The summaries must be wrapped in <summary #></summary #> tags, where # is replaced with the summary id. Assistant:";

const NOT_ENTAILED_TASK: &str = "Your task is to generate {n} summaries from the document. \
However, now all of the summaries must contain at least one piece of non-factual information. \
This can be some information that is not present in the document or some information that is contradictory to the information in the document, but intuitively appears to make sense. \
Otherwise they reflect the style, length and wording of examples. \
If there are common patterns or sentence structures in the examples summaries, the created summaries should reflect those. \
Modify different pieces of information at different places in the document. \
Each summary is identified with an integer from 0 to {last}. \
The summaries must be wrapped in <summary #></summary #> tags, where # is replaced with the summary id. Assistant:";

const REPHRASE_TEMPLATE: &str = "Your task is to fill in the gaps in a document indicated with \"_\" with additional details. \
If there is no gaps, please output the input text. \
The number of \"_\" indicates the approximate number of words that should be filled into each gap. \
While slight deviations (e.g., one word more or less) are permissible, the filled in text should respect the length indicated through the number of \"_\". \
**Do not change the text outside the gaps and do not include gaps in the final output.** \
You will generate {n} different completions of the document. \
Each completed document is identified with an integer from 0 to {last}. \
The document with the blanks filled must be wrapped in <answer #></answer #> tags, where # is replaced with the id of the filled-in document. \
You will now see the original document, but you will have to generate different versions that preserve the meaning by filling the gaps.\n\
Here is the original:\n";

/// Marker distinguishing an initial-generation prompt's label.
pub const ENTAILED_MARKER: &str = "entirely supported by the document";
pub const NOT_ENTAILED_MARKER: &str = "at least one piece of non-factual information";
pub const REPHRASE_MARKER: &str = "The document including the gaps is:";

/// Few-shot generation prompt for claims of `target_label`.
///
/// At most [`MAX_FEWSHOT_EXAMPLES`] example claims are included.
pub fn render_initial_prompt(evidence: &str, example_claims: &[&str], n: usize, target_label: HardLabel) -> String {
    let n = n.max(1);
    let mut out = format!("{INITIAL_PREAMBLE}<document>{evidence}</document>\n{INITIAL_HEADER}");
    for (i, claim) in example_claims.iter().take(MAX_FEWSHOT_EXAMPLES).enumerate() {
        out.push_str(&format!("<example {i}>{claim}</example {i}>\n"));
    }
    let task = match target_label {
        HardLabel::Entailed => ENTAILED_TASK,
        HardLabel::NotEntailed => NOT_ENTAILED_TASK,
    };
    out.push_str(&task.replace("{n}", &n.to_string()).replace("{last}", &(n - 1).to_string()));
    out
}

/// Gap-filling prompt for one masked version of `original`.
pub fn render_rephrase_prompt(original: &str, masked: &str, n: usize) -> String {
    let n = n.max(1);
    let instructions = REPHRASE_TEMPLATE.replace("{n}", &n.to_string()).replace("{last}", &(n - 1).to_string());
    format!(
        "{instructions}<document>{original}</document>\n{REPHRASE_MARKER}\n<document>{masked}</document>\nAssistant:"
    )
}

/// The item count a rendered prompt asks for.
pub fn requested_count(prompt: &str) -> Option<usize> {
    prompt.match_indices("generate ").find_map(|(i, m)| {
        let digits: String = prompt[i + m.len()..].chars().take_while(char::is_ascii_digit).collect();
        digits.parse().ok()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no <{tag} k> items could be parsed")]
pub struct TagParseError {
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedItems {
    /// Parsed contents in index order, trimmed.
    pub items: Vec<String>,
    /// Indices in `0..n` that were missing, unterminated or empty.
    pub skipped: Vec<usize>,
}

/// Extracts `<tag k>…</tag k>` for `k = 0..n`.
pub fn parse_tagged(text: &str, tag: &str, n: usize) -> Result<TaggedItems, TagParseError> {
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..n {
        let open = format!("<{tag} {k}>");
        let close = format!("</{tag} {k}>");
        let content = text.find(&open).and_then(|start| {
            let body = &text[start + open.len()..];
            body.find(&close).map(|end| body[..end].trim())
        });
        match content {
            Some(c) if !c.is_empty() => items.push(c.to_string()),
            _ => skipped.push(k),
        }
    }
    if items.is_empty() {
        return Err(TagParseError { tag: tag.to_string() });
    }
    if !skipped.is_empty() {
        log::warn!("skipped malformed <{tag}> items {skipped:?}");
    }
    Ok(TaggedItems { items, skipped })
}

/// Contents of every non-blank `<document>…</document>` block, in order.
/// The blank pair in the instruction text is skipped.
pub fn documents(prompt: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = prompt;
    while let Some(s) = rest.find("<document>") {
        let body = &rest[s + "<document>".len()..];
        match body.find("</document>") {
            Some(e) => {
                if !body[..e].trim().is_empty() {
                    out.push(&body[..e]);
                }
                rest = &body[e + "</document>".len()..];
            }
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_markers() {
        let pos = render_initial_prompt("Doc.", &["a"], 2, HardLabel::Entailed);
        assert!(pos.contains(ENTAILED_MARKER));
        assert!(!pos.contains(NOT_ENTAILED_MARKER));
        let neg = render_initial_prompt("Doc.", &["a"], 2, HardLabel::NotEntailed);
        assert!(neg.contains(NOT_ENTAILED_MARKER));
    }

    #[test]
    fn indexes_run_to_n_minus_one() {
        let p = render_initial_prompt("Doc.", &["a"], 3, HardLabel::Entailed);
        assert!(p.contains("generate 3 summaries"));
        assert!(p.contains("integer from 0 to 2."));
    }

    #[test]
    fn caps_examples() {
        let ex = ["a", "b", "c", "d", "e", "f"];
        let p = render_initial_prompt("Doc.", &ex, 1, HardLabel::Entailed);
        assert!(p.contains("<example 3>d</example 3>"));
        assert!(!p.contains("<example 4>"));
        let one = render_initial_prompt("Doc.", &["only"], 1, HardLabel::Entailed);
        assert_eq!(one.matches("<example ").count(), 1);
    }

    #[test]
    fn parse_examples() {
        let r = parse_tagged("<summary 0>A</summary 0><summary 1>B</summary 1>", "summary", 2).unwrap();
        assert_eq!(r.items, ["A", "B"]);
        assert!(r.skipped.is_empty());

        let r = parse_tagged("x <summary 0> A </summary 0> junk <summary 2>C</summary 2>", "summary", 3).unwrap();
        assert_eq!(r.items, ["A", "C"]);
        assert_eq!(r.skipped, [1]);

        assert!(parse_tagged("no tags here", "summary", 3).is_err());

        let r = parse_tagged("<answer 0>a</answer 0><answer 1>b<answer 2>c</answer 2>", "answer", 3).unwrap();
        assert_eq!(r.items, ["a", "c"]);
        assert_eq!(r.skipped, [1]);
    }

    #[test]
    fn counts_from_prompts() {
        assert_eq!(requested_count(&render_initial_prompt("D.", &["a"], 7, HardLabel::NotEntailed)), Some(7));
        assert_eq!(requested_count(&render_rephrase_prompt("a b", "a _", 2)), Some(2));
        assert_eq!(requested_count("nothing"), None);
    }

    #[test]
    fn document_blocks() {
        let p = render_rephrase_prompt("orig text", "orig _", 3);
        assert_eq!(documents(&p), ["orig text", "orig _"]);
        let q = render_initial_prompt("Doc text.", &["a"], 1, HardLabel::Entailed);
        assert_eq!(documents(&q), ["Doc text."]);
        assert!(p.contains(REPHRASE_MARKER));
    }
}
