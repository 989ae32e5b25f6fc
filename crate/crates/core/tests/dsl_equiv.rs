//! Native-versus-compiled equivalence on the shared fixture, parse/print
//! round trips over generated pipelines, and exact agreement between the
//! static cost prediction and the runtime meter.

mod common;

use common::expressible_programs;
use ttc_core::dsl::{compile_source, parse, round_trip, CostInputs};
use ttc_core::encoder::CostMeter;
use ttc_core::programs::{find_program, Constants};
use ttc_core::rng::SplitMix64;

#[test]
fn compiled_pipelines_match_natives_bit_exactly() {
    let provider = common::provider();
    let meter = CostMeter::new();
    let data = common::shared_data(&provider, &meter);
    let ctx = data.context(&provider, &meter);
    for (id, source) in expressible_programs() {
        let native = find_program(id).unwrap().run(&ctx).unwrap();
        let compiled = compile_source(source).unwrap().run(&ctx).unwrap();
        assert_eq!(native.n_queries(), compiled.n_queries(), "{id}");
        for qi in 0..native.n_queries() {
            assert_eq!(
                native.row(qi),
                compiled.row(qi),
                "{id}: compiled DSL diverges from the native program on query {qi}"
            );
        }
    }
}

#[test]
fn static_cost_prediction_equals_meter() {
    let provider = common::provider();
    let (query_texts, doc_texts) = common::shared_texts();
    let inputs = CostInputs::from_texts(query_texts.len(), &doc_texts, &Constants::default());
    for (id, source) in expressible_programs() {
        let pipeline = compile_source(source).unwrap();
        let meter = CostMeter::new();
        let data = common::shared_data(&provider, &meter);
        let ctx = data.context(&provider, &meter);
        pipeline.run(&ctx).unwrap();
        assert_eq!(
            pipeline.predicted_extra_texts(&inputs),
            meter.program_texts(),
            "{id}: static prediction and meter disagree"
        );
        let base = meter.baseline_texts();
        let predicted = pipeline.predicted_cost_ratio(&inputs);
        let measured = (base + meter.program_texts()) as f64 / base as f64;
        assert_eq!(predicted, measured, "{id}: cost ratio mismatch");
    }
}

#[test]
fn trivial_pipeline_costs_exactly_one() {
    let inputs = CostInputs {
        n_queries: 15_916,
        n_docs: 3_196,
        sentence_chunks: 0,
        pair_chunks: 0,
        paragraph_chunks: 0,
    };
    let p0 = compile_source("fuse rrf(dense)\n").unwrap();
    assert_eq!(p0.predicted_cost_ratio(&inputs), 1.0);

    // The doc re-encode pipeline predicts exactly |D| extra texts.
    let bidir = compile_source("channel b = bidir()\nfuse rrf(b)\n").unwrap();
    assert_eq!(bidir.predicted_extra_texts(&inputs), 3_196);
    let ratio = bidir.predicted_cost_ratio(&inputs);
    assert!((ratio - 1.167).abs() < 0.001, "ratio {ratio}");
}

#[test]
fn compiled_rrf_of_identical_channels_keeps_order() {
    let provider = common::provider();
    let meter = CostMeter::new();
    let data = common::shared_data(&provider, &meter);
    let ctx = data.context(&provider, &meter);
    let single = compile_source("channel d = dense()\nfuse rrf(d)\n")
        .unwrap()
        .run(&ctx)
        .unwrap();
    let doubled = compile_source("channel a = dense()\nchannel b = dense()\nfuse rrf(a, b)\n")
        .unwrap()
        .run(&ctx)
        .unwrap();
    for qi in 0..single.n_queries() {
        let a = ttc_core::fusion::ranks_from_scores(single.row(qi));
        let b = ttc_core::fusion::ranks_from_scores(doubled.row(qi));
        assert_eq!(a.order, b.order);
    }
}

/// Build a random but valid pipeline source.
fn random_pipeline(g: &mut SplitMix64) -> String {
    let channel_prims = [
        "dense",
        "maxsim",
        "topmean",
        "idf_overlap",
        "bigram",
        "coverage",
        "rare_term",
        "bidir",
    ];
    let granularities = ["sentence", "pair", "paragraph"];
    let round_prims = ["rrf", "zmax", "zmean", "rocchio", "residual", "fisher", "stability"];
    let fuse_ops = ["rrf", "zmax", "zmean"];

    let n_channels = 1 + g.next_below(5);
    let mut names: Vec<String> = Vec::new();
    let mut out = String::new();
    for i in 0..n_channels {
        let prim = channel_prims[g.next_below(channel_prims.len())];
        let name = format!("c{i}");
        if prim == "maxsim" || prim == "topmean" {
            let gran = granularities[g.next_below(3)];
            out.push_str(&format!("channel {name} = {prim}(granularity={gran})\n"));
        } else {
            out.push_str(&format!("channel {name} = {prim}()\n"));
        }
        names.push(name);
    }
    let n_rounds = g.next_below(3);
    for i in 0..n_rounds {
        let prim = round_prims[g.next_below(round_prims.len())];
        let n_args = 1 + g.next_below(names.len().min(3));
        let mut args = Vec::new();
        for k in 0..n_args {
            args.push(names[(g.next_below(names.len()) + k) % names.len()].clone());
        }
        args.dedup();
        let name = format!("r{i}");
        out.push_str(&format!("round {name} = {prim}({})\n", args.join(", ")));
        names.push(name);
    }
    let op = fuse_ops[g.next_below(3)];
    let n_args = 1 + g.next_below(names.len().min(4));
    let mut args = Vec::new();
    for k in 0..n_args {
        args.push(names[(g.next_below(names.len()) + k) % names.len()].clone());
    }
    args.dedup();
    out.push_str(&format!("fuse {op}({})\n", args.join(", ")));
    out
}

#[test]
fn parse_print_round_trips_on_generated_pipelines() {
    let mut g = SplitMix64::new(31);
    for i in 0..200 {
        let source = random_pipeline(&mut g);
        let ast = parse(&source).unwrap_or_else(|e| panic!("pipeline {i} failed: {e}\n{source}"));
        let printed = round_trip(&ast);
        let reparsed = parse(&printed).unwrap();
        assert_eq!(ast, reparsed, "round trip changed structure:\n{source}");
        // Printing is idempotent after one pass.
        assert_eq!(printed, round_trip(&reparsed));
    }
}
