//! Prompt assembly: system prefix, query, context, answer cue, and the
//! token spans that capture and steering address.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::synthkb::{templates, ArbitrationExample, EvalScenario, Topology};

use super::vocab::Vocab;
use super::Result;

/// Extraction/injection location within a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Subj,
    ObjCf,
    Last,
}

impl Location {
    pub const ALL: [Location; 3] = [Location::Subj, Location::ObjCf, Location::Last];

    pub fn as_str(&self) -> &'static str {
        match self {
            Location::Subj => "subj",
            Location::ObjCf => "obj_cf",
            Location::Last => "last",
        }
    }

    pub fn parse(s: &str) -> Option<Location> {
        match s {
            "subj" => Some(Location::Subj),
            "obj_cf" => Some(Location::ObjCf),
            "last" => Some(Location::Last),
            _ => None,
        }
    }
}

/// An assembled prompt: token ids per segment, the full sequence ending in
/// the answer cue, and resolved token spans. `subj`/`obj_cf` spans point at
/// occurrences inside the context segment; locations absent from the
/// context are simply unavailable rather than errors.
#[derive(Debug, Clone)]
pub struct PromptSpec {
    pub system: Vec<u32>,
    pub context: Vec<u32>,
    pub query: Vec<u32>,
    pub topology: Topology,
    pub tokens: Vec<u32>,
    pub spans: BTreeMap<Location, Vec<usize>>,
}

impl PromptSpec {
    pub fn span(&self, loc: Location) -> Option<&[usize]> {
        self.spans.get(&loc).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Assembles `[system, query, context, ANS:]` (query-first) or
/// `[system, context, query, ANS:]` (context-first) and resolves spans by
/// exact token match within the context segment. The `last` span is always
/// the final prompt token.
pub fn assemble_prompt(
    vocab: &Vocab,
    context_words: &[String],
    query_words: &[String],
    topology: Topology,
    subj_surface: Option<&str>,
    cf_surface: Option<&str>,
) -> Result<PromptSpec> {
    let system: Vec<u32> = templates::SYSTEM_PROMPT
        .iter()
        .map(|w| vocab.id(w))
        .collect::<Result<_>>()?;
    let context = vocab.tokenize(context_words)?;
    let query = vocab.tokenize(query_words)?;

    let mut tokens = system.clone();
    let context_offset;
    match topology {
        Topology::QueryFirst => {
            tokens.extend_from_slice(&query);
            context_offset = tokens.len();
            tokens.extend_from_slice(&context);
        }
        Topology::ContextFirst => {
            context_offset = tokens.len();
            tokens.extend_from_slice(&context);
            tokens.extend_from_slice(&query);
        }
    }
    tokens.push(vocab.ans_id());

    let mut spans = BTreeMap::new();
    let find_in_context = |surface: &str| -> Result<Vec<usize>> {
        let id = vocab.id(surface)?;
        Ok(context
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == id)
            .map(|(i, _)| context_offset + i)
            // Generators emit exactly one occurrence; take the first for
            // robustness against unconstrained inputs.
            .take(1)
            .collect())
    };
    if let Some(subj) = subj_surface {
        let span = find_in_context(subj)?;
        if !span.is_empty() {
            spans.insert(Location::Subj, span);
        }
    }
    if let Some(cf) = cf_surface {
        let span = find_in_context(cf)?;
        if !span.is_empty() {
            spans.insert(Location::ObjCf, span);
        }
    }
    spans.insert(Location::Last, vec![tokens.len() - 1]);

    Ok(PromptSpec {
        system,
        context,
        query,
        topology,
        tokens,
        spans,
    })
}

/// Prompt for an arbitration example, in the example's own topology.
pub fn prompt_for_example(vocab: &Vocab, ex: &ArbitrationExample) -> Result<PromptSpec> {
    assemble_prompt(
        vocab,
        &ex.sentence,
        &ex.query,
        ex.topology,
        Some(&ex.record.base.subject.surface),
        Some(&ex.record.cf_object.surface),
    )
}

/// Prompt for an evaluation scenario, optionally overriding its topology.
pub fn prompt_for_scenario(
    vocab: &Vocab,
    sc: &EvalScenario,
    topology: Option<Topology>,
) -> Result<PromptSpec> {
    assemble_prompt(
        vocab,
        &sc.context,
        &sc.query,
        topology.unwrap_or(sc.topology),
        Some(&sc.record.base.subject.surface),
        Some(&sc.record.cf_object.surface),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkb::{generate_kb, make_arbitration_pairs, Mode};

    #[test]
    fn rc_context_first_has_all_spans() {
        let kb = generate_kb(3, 3, 6).unwrap();
        let vocab = Vocab::build(&kb);
        let set = make_arbitration_pairs(&kb, 3);
        let rc = set
            .examples
            .iter()
            .find(|e| e.mode == Mode::RC && e.topology == Topology::ContextFirst)
            .unwrap();
        let p = prompt_for_example(&vocab, rc).unwrap();
        assert_eq!(p.span(Location::Subj).unwrap().len(), 1);
        assert_eq!(p.span(Location::ObjCf).unwrap().len(), 1);
        assert_eq!(p.span(Location::Last).unwrap(), &[p.tokens.len() - 1]);
        // Spans index the context segment.
        for (&loc, span) in &p.spans {
            if loc != Location::Last {
                let t = p.tokens[span[0]];
                assert!(p.context.contains(&t));
            }
        }
    }

    #[test]
    fn ic_prompt_lacks_subj_span() {
        let kb = generate_kb(3, 3, 6).unwrap();
        let vocab = Vocab::build(&kb);
        let set = make_arbitration_pairs(&kb, 3);
        let ic = set.examples.iter().find(|e| e.mode == Mode::IC).unwrap();
        let p = prompt_for_example(&vocab, ic).unwrap();
        assert!(p.span(Location::Subj).is_none());
        assert!(p.span(Location::ObjCf).is_some());
    }

    #[test]
    fn empty_context_leaves_only_last() {
        let kb = generate_kb(3, 2, 4).unwrap();
        let vocab = Vocab::build(&kb);
        let query = crate::synthkb::query_tokens(
            crate::synthkb::relation(kb[0].relation).unwrap(),
            &kb[0].subject.surface,
        );
        let p = assemble_prompt(
            &vocab,
            &[],
            &query,
            Topology::QueryFirst,
            Some(&kb[0].subject.surface),
            None,
        )
        .unwrap();
        assert_eq!(p.spans.len(), 1);
        assert!(p.span(Location::Last).is_some());
        assert_eq!(*p.tokens.last().unwrap(), vocab.ans_id());
    }

    #[test]
    fn topology_orders_segments() {
        let kb = generate_kb(9, 2, 4).unwrap();
        let vocab = Vocab::build(&kb);
        let set = make_arbitration_pairs(&kb, 9);
        let ex = &set.examples[0];
        let qf = assemble_prompt(&vocab, &ex.sentence, &ex.query, Topology::QueryFirst, None, None).unwrap();
        let cf = assemble_prompt(&vocab, &ex.sentence, &ex.query, Topology::ContextFirst, None, None).unwrap();
        let sys_len = templates::SYSTEM_PROMPT.len();
        assert_eq!(&qf.tokens[sys_len..sys_len + qf.query.len()], &qf.query[..]);
        assert_eq!(&cf.tokens[sys_len..sys_len + cf.context.len()], &cf.context[..]);
        assert_eq!(qf.tokens.len(), cf.tokens.len());
    }
}
