//! Shared setup for the criterion benches: a mid-sized synthetic shortlist
//! with the provider and context wiring the programs expect.

use ttc_core::encoder::{CostMeter, EncoderProvider, ProviderConfig};
use ttc_core::fixtures::{generate, FixtureFamily, FixtureSpec};
use ttc_core::programs::{Constants, TaskData};
use ttc_core::task::Task;

pub const BENCH_DIM: usize = 256;

pub fn bench_task(n_queries: usize, n_docs: usize) -> Task {
    generate(&FixtureSpec {
        seed: 17,
        n_queries,
        n_docs,
        n_topics: 10,
        doc_sentences_min: 4,
        doc_sentences_max: 8,
        words_per_sentence: 18,
        family: FixtureFamily::Topical,
        namespace: "bench".into(),
        ..FixtureSpec::default()
    })
}

pub fn bench_provider() -> EncoderProvider {
    EncoderProvider::new(ProviderConfig::synthetic(BENCH_DIM, 17)).unwrap()
}

pub fn bench_data(provider: &EncoderProvider, meter: &CostMeter, task: &Task) -> TaskData {
    let queries: Vec<String> = task.queries.values().cloned().collect();
    let docs: Vec<String> = task.corpus.values().cloned().collect();
    TaskData::from_texts(queries, docs, provider, meter, None, Constants::default()).unwrap()
}
