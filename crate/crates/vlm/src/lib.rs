//! Vision-language model integration: prompt construction, response
//! parsing, an HTTP gateway with retries and a response cache, and a
//! labeler built on top of them.

pub mod gateway;
pub mod labeler;
pub mod parse;
pub mod prompts;

pub use gateway::{Gateway, GatewayConfig, GatewayError, HttpTransport, Transport, TransportError};
pub use labeler::{Mode, VlmLabeler};
pub use parse::{parse_label_response, ParsedLabels};
pub use prompts::{
    build_double_check_prompt, build_label_prompt_t, build_label_prompt_t0, build_proposal_prompt, PromptBundle,
    PromptError, ProposalPromptConfig,
};
