//! Metadata prompts and a byte-level BPE tokenizer.

mod bpe;
mod prompt;

pub use bpe::{tokenize, BpeModel, TokenSequence, CLS_ID, CONTEXT_LENGTH, PAD_ID, UNUSED_ID};
pub use prompt::{serialize_metadata, TextPrompt, SECTION_ORDER};
