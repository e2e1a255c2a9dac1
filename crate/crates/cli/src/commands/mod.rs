//! One module per pipeline stage; each `run` takes the resolved config and
//! the workspace, reads its upstream artifacts, and writes its own.

pub mod codec;
pub mod curate;
pub mod eval;
pub mod flow;
pub mod grpo;
pub mod report;
pub mod sft;
