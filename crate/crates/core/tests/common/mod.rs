//! Shared fixtures for the integration suites.
#![allow(dead_code)]

pub mod oracle;

use ttc_core::encoder::{CostMeter, EncoderProvider, ProviderConfig};
use ttc_core::programs::{Constants, TaskData};

pub const FIXTURE_DIM: usize = 48;
pub const FIXTURE_SEED: u64 = 7;

/// Four queries by eight documents with structured token overlap: exact
/// phrase matches, scattered term spam, multi-paragraph documents, a
/// near-empty document, and plain background noise.
pub fn shared_texts() -> (Vec<String>, Vec<String>) {
    let queries = vec![
        "municipal bond tax exemption".to_string(),
        "quarterly revenue growth forecast".to_string(),
        "patent infringement damages appeal".to_string(),
        "data retention policy europe".to_string(),
    ];
    let docs = vec![
        // d0: strong phrase match for q0, two paragraphs.
        "Municipal bond tax exemption rules changed this year. Issuers must file notice early.\n\nThe exemption applies to qualified municipal bond programs. Tax counsel reviews each issue."
            .to_string(),
        // d1: scattered q0 terms, high frequency, no phrase.
        "The tax on tax was a tax story. Bond prices and bond yields moved. Exemption talk faded while municipal budgets and municipal staff argued about tax."
            .to_string(),
        // d2: q1 relevant with needle-like sentence placement.
        "Weather stayed calm across the coast this week. Shipping lanes reopened after the storm. Quarterly revenue growth forecast beats analyst consensus again. Port traffic normalized by friday."
            .to_string(),
        // d3: partial q1 overlap, finance background.
        "Revenue recognition follows the new accounting standard. Growth depends on subscription renewals. The forecast committee meets every quarter."
            .to_string(),
        // d4: q2 exact terms across sentences, three paragraphs.
        "The patent covers a compression method. Infringement was alleged in the district court.\n\nDamages were estimated by an expert panel. The appeal is scheduled for spring.\n\nOutside counsel expects a split ruling."
            .to_string(),
        // d5: legal background, weak q2 overlap.
        "Court procedure requires timely filing. An appeal bond secures the judgment. Expert testimony faces a reliability challenge."
            .to_string(),
        // d6: q3 relevant.
        "Data retention policy in europe tightened under the new regulation. Controllers must document storage periods. Policy reviews happen annually."
            .to_string(),
        // d7: short noise document.
        "Lunch menu posted."
            .to_string(),
    ];
    (queries, docs)
}

pub fn provider() -> EncoderProvider {
    EncoderProvider::new(ProviderConfig::synthetic(FIXTURE_DIM, FIXTURE_SEED)).unwrap()
}

pub fn adapterless_provider() -> EncoderProvider {
    let mut config = ProviderConfig::synthetic(FIXTURE_DIM, FIXTURE_SEED);
    config.has_adapters = false;
    EncoderProvider::new(config).unwrap()
}

pub fn shared_data(provider: &EncoderProvider, meter: &CostMeter) -> TaskData {
    let (queries, docs) = shared_texts();
    TaskData::from_texts(queries, docs, provider, meter, None, Constants::default()).unwrap()
}

/// The six frontier programs expressible in the pipeline primitive set.
pub fn expressible_programs() -> Vec<(&'static str, &'static str)> {
    vec![
        ("p0", "fuse rrf(dense)\n"),
        ("bidir_zscore", "channel b = bidir()\nfuse rrf(b)\n"),
        (
            "sent_maxsim",
            "channel m = maxsim(granularity=sentence)\nfuse rrf(m)\n",
        ),
        (
            "adapt_granularity",
            "channel p = maxsim(granularity=paragraph)\nchannel s = maxsim(granularity=sentence)\nfuse zmax(p, s)\n",
        ),
        (
            "lex_hybrid_rrf",
            "channel d = dense()\nchannel m = maxsim(granularity=sentence)\nchannel i = idf_overlap()\nchannel g = bigram()\nfuse rrf(d, m, i, g)\n",
        ),
        (
            "cross_round_rrf",
            "channel d = dense()\nchannel m = maxsim(granularity=sentence)\nchannel i = idf_overlap()\nchannel g = bigram()\nchannel c = coverage()\nchannel r = rare_term()\nround r1 = rrf(d, m, i, g, c, r)\nround f = rocchio(r1)\nround e = residual(r1)\nfuse rrf(r1, f, e)\n",
        ),
    ]
}
