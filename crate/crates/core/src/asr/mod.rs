//! Uniform transcription interface over external-command, HTTP and mock recognizers,
//! and the forced-choice rule that turns a transcript into a test response.

mod backend;
mod choice;
mod mock;

pub use backend::{
    build_backend, transcribe, BackendConfig, CommandBackend, HttpBackend, MockBackend,
    MockBackendConfig, Transcriber, TranscriptionRequest, CLEAN, DEFAULT_TIMEOUT_S, NORMAL_HEARING,
};
pub use choice::{forced_choice, output_pronunciation, ChoiceMode};
pub use mock::{
    apply_channel, default_confusion_bias, mock_transcribe, ChannelOutcome, ConfusionBias,
    MockChannelParams,
};
