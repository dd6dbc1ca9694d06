mod common;

use std::collections::BTreeSet;

use kes_core::kg_store::{GraphBuilder, KnowledgeGraph};
use kes_core::linker::{link_concepts, tokenize, StopList, TokenSequence, DEFAULT_MAX_LINK_LEN};
use proptest::prelude::*;

const WORDS: [&str; 5] = ["red", "big", "dog", "car", "run"];

fn graph_of(labels: &[Vec<usize>]) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    for l in labels {
        let label: Vec<&str> = l.iter().map(|&i| WORDS[i]).collect();
        b.add_concept(&label.join("_"));
    }
    b.build()
}

/// Every `(start, end)` span whose joined tokens name a concept, honoring the
/// stop-list for single tokens.
fn all_matches(
    toks: &[String],
    g: &KnowledgeGraph,
    max_len: usize,
    stop: &StopList,
) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..toks.len() {
        for j in i + 1..=toks.len().min(i + max_len) {
            if j - i == 1 && stop.contains(&toks[i]) {
                continue;
            }
            if g.concept_id(&toks[i..j].join("_")).is_some() {
                out.insert((i, j));
            }
        }
    }
    out
}

proptest! {
    /// The mentions are exactly the leftmost-longest tiling: disjoint, each one
    /// the longest match at its start, and no match starts at an uncovered
    /// position.
    #[test]
    fn greedy_tiling_characterization(
        labels in prop::collection::vec(prop::collection::vec(0usize..5, 1..4), 1..8),
        text in prop::collection::vec(0usize..5, 0..14),
        max_len in 1usize..5,
        stop_red in any::<bool>(),
    ) {
        let g = graph_of(&labels);
        let toks: TokenSequence = text.iter().map(|&i| WORDS[i]).collect();
        let stop = if stop_red { StopList::parse("red") } else { StopList::empty() };
        let got = link_concepts(&toks, &g, max_len, &stop).unwrap();
        let matches = all_matches(toks.tokens(), &g, max_len, &stop);

        let mut covered = vec![false; toks.len()];
        let mut last_end = 0;
        for m in got.mentions() {
            prop_assert!(m.start >= last_end);
            last_end = m.end;
            prop_assert!(matches.contains(&(m.start, m.end)));
            let longest = matches.iter().filter(|s| s.0 == m.start).map(|s| s.1).max().unwrap();
            prop_assert_eq!(m.end, longest);
            let label = toks.tokens()[m.start..m.end].join("_");
            prop_assert_eq!(Some(m.concept), g.concept_id(&label));
            for c in &mut covered[m.start..m.end] {
                *c = true;
            }
        }
        for (t, &c) in covered.iter().enumerate() {
            if !c {
                prop_assert!(!matches.iter().any(|s| s.0 == t));
            }
        }
    }

    #[test]
    fn linking_is_deterministic(text in "[a-z ]{0,40}") {
        let g = common::fixture_graph();
        let stop = StopList::default();
        let a = link_concepts(&tokenize(&text), &g, DEFAULT_MAX_LINK_LEN, &stop).unwrap();
        let b = link_concepts(&tokenize(&text), &g, DEFAULT_MAX_LINK_LEN, &stop).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn fixture_sentences() {
    let g = common::fixture_graph();
    let stop = StopList::default();
    let link = |s: &str| -> Vec<String> {
        link_concepts(&tokenize(s), &g, DEFAULT_MAX_LINK_LEN, &stop)
            .unwrap()
            .mentions()
            .iter()
            .map(|m| g.concept_label(m.concept).unwrap().to_string())
            .collect()
    };
    assert_eq!(link("Someone eats a hot dog."), ["hot_dog"]);
    assert_eq!(link("A dog runs in the park."), ["dog", "park"]);
    assert_eq!(link("The sky is blue."), Vec::<String>::new());
    assert_eq!(link("DOG, cat; Fur!"), ["dog", "cat", "fur"]);
}
