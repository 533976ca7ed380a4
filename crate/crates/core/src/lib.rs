//! Summary boosting: an ensemble of language-model summaries over
//! textualized tabular records, with the sampling, discretization, prompting,
//! baseline and cost machinery around it.

pub mod baselines;
pub mod boosting;
pub mod cost;
pub mod dataset;
pub mod discretize;
pub mod error;
pub mod llm;
pub mod mock_oracle;
pub mod pipeline;
pub mod sampling;
pub mod summary_learner;
pub mod textualize;
pub mod util;

pub use boosting::{BoostConfig, EnsembleModel, RoundTrace};
pub use dataset::{load_dataset, split, SplitAssignment, TabularDataset};
pub use discretize::{ColumnEncoders, Encoding};
pub use error::{Error, ErrorClass, Result};
pub use llm::{Backend, ClientConfig, EmbeddingVector, LlmClient};
pub use pipeline::{evaluate, EvaluationReport, Method, RunConfig};
pub use summary_learner::{PromptConfig, PromptSettings, SummaryHypothesis};
pub use textualize::{DataDescription, DescriptionMethod};
