use std::sync::Arc;

use citefn::corpus::{PairRecord, Role};
use citefn::jats::PlainText;
use citefn::llm::{ChatClient, GenerationConfig, MockClock, MockScript, MockTransport};
use citefn::orchestrator::{run_chat, MachineOutput, OrchestratorError, PromptTree};
use proptest::prelude::*;

const REPLIES: &[&str] = &[
    "TRUE",
    "FALSE",
    "true.",
    "False. The accession is only cited in the introduction.",
    "I am not sure.",
    "1. PhyML\n2. RAxML 8.2.11",
    "- Outgroup selection\n- Rooting of the phylogenetic tree",
    "BLAST, MUMmer and GLIMMER",
    "The identifier appears in the methods section.",
    "",
];

fn pair() -> PairRecord {
    PairRecord {
        pair_id: "p1".into(),
        pub_id: "pub1".into(),
        accession: "NC_003317".into(),
    }
}

fn run(tree: &PromptTree, replies: &[&str]) -> (Result<MachineOutput, OrchestratorError>, u64) {
    let client = ChatClient::new(
        MockTransport::new(MockScript::replies(replies.iter().copied())),
        Arc::new(MockClock::new()),
    );
    let out = run_chat(
        &pair(),
        &PlainText::from_blocks(["The genome NC_003317 was compared using BLAST."]),
        "The accession \"NC_003317\" refers to a Nucleotide Sequence record.",
        tree,
        &client,
        &GenerationConfig::default(),
    );
    (out, client.request_count())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn short_circuit_is_never_violated(script in proptest::collection::vec(prop::sample::select(REPLIES), 0..12)) {
        let tree = PromptTree::builtin();
        let (first, requests) = run(&tree, &script);
        let (second, _) = run(&tree, &script);
        match (first, second) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
                let trace = a.node_trace();
                prop_assert!(tree.is_valid_path(trace), "{:?}", trace);
                let elicited = trace.iter().any(|n| n == "use_cases" || n == "tools");
                if !a.record.data_accessed {
                    prop_assert!(a.record.use_cases.is_empty() && a.record.tools.is_empty());
                    prop_assert!(!elicited, "{:?}", trace);
                } else {
                    prop_assert_eq!(trace.last().map(String::as_str), Some("tools"));
                }
                prop_assert!(a.record.validate().is_ok());
                prop_assert!(a.transcript.validate_turns().is_ok());
                let asked = a.transcript.turns.iter().filter(|t| t.role == Role::User).count() as u64;
                prop_assert_eq!(asked, requests);
                prop_assert!(requests as usize <= script.len());
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "runs diverged: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }
}

#[test]
fn unreadable_boolean_gets_one_reprompt() {
    let tree = PromptTree::builtin();
    let (out, requests) = run(&tree, &["maybe", "TRUE", "mentions", "FALSE"]);
    let out = out.unwrap();
    assert_eq!(requests, 4);
    assert_eq!(out.node_trace(), ["experiments", "mentions", "accessed"]);
    // system, question, bad answer, reprompt
    assert_eq!(out.transcript.turns[3].content, tree.reprompt);

    let (out, _) = run(&tree, &["maybe", "still unsure"]);
    assert!(matches!(out, Err(OrchestratorError::ParseFailure { .. })));
}
