//! Many documents at once. Each document is still a strictly sequential run
//! with its own session and network; only whole documents run side by side.
//!
//! With the `parallel` feature (on by default) [`run_parallel`] spreads the
//! documents over the rayon pool. Without it, [`run`] always takes the
//! sequential path.

use std::sync::Arc;

use crate::backend::ChatBackend;
use crate::pipeline::{process_document, DocumentResult, InputError, PipelineConfig};
use crate::prompts::PromptCatalog;

#[derive(Clone)]
pub struct DocumentJob {
    pub id: String,
    pub text: String,
    pub topic: String,
    pub backend: Arc<dyn ChatBackend>,
}

pub type JobOutcome = (String, Result<DocumentResult, InputError>);

fn run_one(job: &DocumentJob, catalog: &PromptCatalog, config: &PipelineConfig) -> JobOutcome {
    (
        job.id.clone(),
        process_document(&job.text, &job.topic, job.backend.as_ref(), catalog, config),
    )
}

pub fn run_sequential(
    jobs: &[DocumentJob],
    catalog: &PromptCatalog,
    config: &PipelineConfig,
) -> Vec<JobOutcome> {
    jobs.iter().map(|j| run_one(j, catalog, config)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_parallel(
    jobs: &[DocumentJob],
    catalog: &PromptCatalog,
    config: &PipelineConfig,
) -> Vec<JobOutcome> {
    use rayon::prelude::*;
    jobs.par_iter()
        .map(|j| run_one(j, catalog, config))
        .collect()
}

/// Results come back in job order either way.
pub fn run(
    jobs: &[DocumentJob],
    catalog: &PromptCatalog,
    config: &PipelineConfig,
    parallel: bool,
) -> Vec<JobOutcome> {
    #[cfg(feature = "parallel")]
    if parallel {
        return run_parallel(jobs, catalog, config);
    }
    let _ = parallel;
    run_sequential(jobs, catalog, config)
}

/// Order-preserving map, parallel when the feature is on and asked for.
pub fn map<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
