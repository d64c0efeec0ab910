//! Prompt templates. Substitution is literal: braces or percent signs in the
//! inserted text are never interpreted.

pub const ANSWER_PREFIX: &str = "Additional Information:\n";
const ANSWER_INSTRUCTION: &str = "\n\nInstruction: You are a smart LLM who gives an answer to the question in as little words as possible using the additional information provided above.\n\nQuestion: ";
const ANSWER_SUFFIX: &str = "\n\nShort Answer:";

pub const QUESTION_PREFIX: &str =
    "Instruction: Your task is to create a small question out of the below information.\n\nInformation: \n";
const QUESTION_SUFFIX: &str = "\n\nAnswer:";

pub const EXTRACTION_PREFIX: &str = "Instruction: Extract the entities and relationships stated in the text below. \
Write one fact per line in the form\nsubject | predicate | object | description\n\
where subject and object are short entity names, predicate is a short verb phrase and description is one sentence \
about the fact. Write nothing else.\n\nText:\n";
pub const EXTRACTION_SUFFIX: &str = "\n\nFacts:";

pub const SUMMARY_PREFIX: &str =
    "Summarize the following text concisely, keeping every name, number and date.\n\nText:\n";
const SUMMARY_SUFFIX: &str = "\n\nSummary:";

/// Final-answer prompt shared by every pipeline.
pub fn generation_prompt(context: &str, question: &str) -> String {
    [ANSWER_PREFIX, context, ANSWER_INSTRUCTION, question, ANSWER_SUFFIX].concat()
}

/// Sub-question prompt for one chunk of knowledge-graph output.
pub fn question_prompt(chunk: &str) -> String {
    [QUESTION_PREFIX, chunk, QUESTION_SUFFIX].concat()
}

pub fn extraction_prompt(chunk: &str) -> String {
    [EXTRACTION_PREFIX, chunk, EXTRACTION_SUFFIX].concat()
}

pub fn summary_prompt(text: &str) -> String {
    [SUMMARY_PREFIX, text, SUMMARY_SUFFIX].concat()
}

/// Inverse of [`generation_prompt`]: `(context, question)`.
pub fn parse_generation_prompt(prompt: &str) -> Option<(&str, &str)> {
    let rest = prompt.strip_prefix(ANSWER_PREFIX)?.strip_suffix(ANSWER_SUFFIX)?;
    let split = rest.rfind(ANSWER_INSTRUCTION)?;
    Some((&rest[..split], &rest[split + ANSWER_INSTRUCTION.len()..]))
}

pub fn parse_question_prompt(prompt: &str) -> Option<&str> {
    prompt.strip_prefix(QUESTION_PREFIX)?.strip_suffix(QUESTION_SUFFIX)
}

pub fn parse_extraction_prompt(prompt: &str) -> Option<&str> {
    prompt.strip_prefix(EXTRACTION_PREFIX)?.strip_suffix(EXTRACTION_SUFFIX)
}
