//! Synthetic knowledge base, arbitration dataset, and evaluation benchmarks.
//!
//! Facts are (subject, relation, object) triples over nonce entities that
//! are single tokens by construction. The arbitration dataset pairs each
//! counterfactual with an irrelevant-context (IC) and a relevant-context
//! (RC) sentence; evaluation benchmarks instantiate archive frames (forcing
//! recall) and relation-specific authoritative templates (forcing copy).
//! Every generator is a pure function of its seed.

pub mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use templates::{Relation, ARCHIVE_FRAMES, FILLER_FRAMES, RELATIONS, SYSTEM_PROMPT};

/// Entity-token budget inside the default vocabulary. The word bank plus
/// special tokens occupy the rest.
pub const ENTITY_BUDGET: usize = 4900;

/// Evaluation benchmarks cover a relation subset, mirroring open-domain QA
/// benchmarks that span fewer relations than the arbitration dataset.
pub const EVAL_RELATION_LIMIT: usize = 16;

/// Fraction of each relation's facts that feeds arbitration-pair
/// extraction; the remainder is held out for evaluation scenarios.
pub const ARBITRATION_SPLIT: f64 = 0.8;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("requested {requested} relations but only {available} are defined")]
    TooManyRelations { requested: usize, available: usize },
    #[error("entities_per_relation must be at least 2, got {got}")]
    TooFewEntities { got: usize },
    #[error("vocabulary overflow: {needed} entity tokens exceed the {budget} reserved slots")]
    VocabularyOverflow { needed: usize, budget: usize },
    #[error("stratified sample of {n} is too small; need at least {minimum} for {relations} relations")]
    SampleTooSmall {
        n: usize,
        minimum: usize,
        relations: usize,
    },
    #[error("no evaluation facts available (kb too small for a held-out split)")]
    NoEvalFacts,
    #[error("unknown relation id {0}")]
    UnknownRelation(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("jsonl: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KbError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u32,
    pub surface: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PopularityTier {
    High,
    Low,
}

/// A (subject, relation, object) triple with popularity metadata; the atom
/// of parametric knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactRecord {
    pub subject: Entity,
    pub relation: u32,
    pub object: Entity,
    pub pop_subject: u64,
    pub pop_object: u64,
    pub popularity_tier: PopularityTier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Same,
    Different,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub base: FactRecord,
    pub cf_object: Entity,
    pub domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    IC,
    RC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topology {
    QueryFirst,
    ContextFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    CopyToRecall,
    RecallToCopy,
}

/// One irrelevant- or relevant-context sentence with its counterfactual
/// record, resolved query, and prompt topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationExample {
    pub record: CounterfactualRecord,
    pub mode: Mode,
    pub sentence: Vec<String>,
    pub query: Vec<String>,
    pub topology: Topology,
}

/// One evaluation prompt: an archive context (forcing recall) or an
/// authoritative context (forcing copy) plus the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScenario {
    pub record: CounterfactualRecord,
    pub regime: Regime,
    pub context: Vec<String>,
    pub query: Vec<String>,
    pub topology: Topology,
}

/// Output of [`make_arbitration_pairs`]: retained examples plus the count
/// of examples dropped by the sentence-rule filter.
#[derive(Debug, Clone)]
pub struct ArbitrationSet {
    pub examples: Vec<ArbitrationExample>,
    pub skipped: usize,
}

pub fn relation(id: u32) -> Result<&'static Relation> {
    RELATIONS
        .get(id as usize)
        .ok_or(KbError::UnknownRelation(id))
}

// ---------------------------------------------------------------------------
// Nonce entity generation
// ---------------------------------------------------------------------------

const ONSETS: &[&str] = &[
    "b", "br", "ch", "cl", "d", "dr", "f", "fl", "g", "gl", "gr", "h", "j", "k", "kr", "l", "m",
    "n", "p", "pl", "pr", "r", "s", "sk", "sl", "sm", "sn", "sp", "st", "str", "t", "tr", "v",
    "w", "y", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ee", "oa", "oo"];
const CODAS: &[&str] = &["", "l", "m", "n", "r", "s", "x", "th"];

fn nonce_word(rng: &mut ChaCha8Rng) -> String {
    let mut w = String::new();
    w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
    w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
    w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
    w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
    w.push_str(CODAS[rng.gen_range(0..CODAS.len())]);
    w
}

struct EntityMint {
    used: BTreeSet<String>,
    next_id: u32,
}

impl EntityMint {
    fn new() -> Self {
        let used = templates::word_bank().into_iter().collect();
        Self { used, next_id: 0 }
    }

    fn mint(&mut self, rng: &mut ChaCha8Rng) -> Entity {
        loop {
            let surface = nonce_word(rng);
            if self.used.insert(surface.clone()) {
                let id = self.next_id;
                self.next_id += 1;
                return Entity { id, surface };
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Knowledge-base generation
// ---------------------------------------------------------------------------

fn log_uniform_pop(rng: &mut ChaCha8Rng) -> u64 {
    let lo = 50f64.ln();
    let hi = 1e7f64.ln();
    rng.gen_range(lo..hi).exp() as u64
}

/// Generates the synthetic knowledge base: `entities_per_relation` unique
/// subjects per relation, each mapped onto a per-relation object pool with
/// at least two distinct values. Deterministic given the seed.
pub fn generate_kb(
    seed: u64,
    num_relations: usize,
    entities_per_relation: usize,
) -> Result<Vec<FactRecord>> {
    if num_relations > RELATIONS.len() {
        return Err(KbError::TooManyRelations {
            requested: num_relations,
            available: RELATIONS.len(),
        });
    }
    if entities_per_relation < 2 {
        return Err(KbError::TooFewEntities {
            got: entities_per_relation,
        });
    }
    let pool_size = entities_per_relation.min(20).max(2);
    let needed = num_relations * (entities_per_relation + pool_size);
    if needed > ENTITY_BUDGET {
        return Err(KbError::VocabularyOverflow {
            needed,
            budget: ENTITY_BUDGET,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mint = EntityMint::new();
    let mut facts = Vec::with_capacity(num_relations * entities_per_relation);
    let mut pops = Vec::with_capacity(facts.capacity());

    for rel in &RELATIONS[..num_relations] {
        let pool: Vec<Entity> = (0..pool_size).map(|_| mint.mint(&mut rng)).collect();
        for i in 0..entities_per_relation {
            let subject = mint.mint(&mut rng);
            // The first two facts cover distinct pool entries so every
            // relation's used objects hold at least two distinct values.
            let object = if i < 2 {
                pool[i % pool.len()].clone()
            } else {
                pool[rng.gen_range(0..pool.len())].clone()
            };
            let pop_subject = log_uniform_pop(&mut rng);
            let pop_object = log_uniform_pop(&mut rng);
            pops.push(pop_subject);
            facts.push(FactRecord {
                subject,
                relation: rel.id,
                object,
                pop_subject,
                pop_object,
                popularity_tier: PopularityTier::Low, // assigned below
            });
        }
    }

    // Tier split at the median subject popularity, giving ~50/50.
    let mut sorted = pops.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2];
    for f in &mut facts {
        f.popularity_tier = if f.pop_subject >= median {
            PopularityTier::High
        } else {
            PopularityTier::Low
        };
    }
    Ok(facts)
}

/// Splits KB indices per relation: the first ~80% (by generation order)
/// feed arbitration-pair extraction, the rest are held out for evaluation.
/// The split depends only on the KB, so every consumer agrees on it.
pub fn split_for_arbitration(kb: &[FactRecord]) -> (Vec<usize>, Vec<usize>) {
    let mut by_rel: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, f) in kb.iter().enumerate() {
        by_rel.entry(f.relation).or_default().push(i);
    }
    let mut arb = Vec::new();
    let mut eval = Vec::new();
    for (_, idxs) in by_rel {
        let cut = ((idxs.len() as f64) * ARBITRATION_SPLIT).ceil() as usize;
        let cut = cut.min(idxs.len());
        arb.extend_from_slice(&idxs[..cut]);
        eval.extend_from_slice(&idxs[cut..]);
    }
    arb.sort_unstable();
    eval.sort_unstable();
    (arb, eval)
}

// ---------------------------------------------------------------------------
// Context construction
// ---------------------------------------------------------------------------

pub fn query_tokens(rel: &Relation, subject: &str) -> Vec<String> {
    templates::fill(rel.query, Some(subject), "")
}

pub fn filler_context(frame: usize, object: &str) -> Vec<String> {
    templates::fill(FILLER_FRAMES[frame % FILLER_FRAMES.len()], None, object)
}

pub fn archive_context(frame: usize, object: &str) -> Vec<String> {
    templates::fill(ARCHIVE_FRAMES[frame % ARCHIVE_FRAMES.len()], None, object)
}

/// Relation assertion wrapped into one of the authoritative variants.
pub fn authoritative_context(
    rel: &Relation,
    subject: &str,
    object: &str,
    variant: usize,
) -> Vec<String> {
    let core = templates::fill(rel.assertion, Some(subject), object);
    let wrapper = templates::AUTHORITATIVE_WRAPPERS
        [variant % templates::AUTHORITATIVE_WRAPPERS.len()];
    let mut out = Vec::new();
    for w in templates::words(wrapper) {
        if w == "{a}" {
            out.extend(core.iter().cloned());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

/// Relevant-context sentence: assertion core padded with an archival tail
/// into the 12-16 word window. `None` when no tail length fits.
fn rc_sentence(rel: &Relation, subject: &str, cf: &str, rng: &mut ChaCha8Rng) -> Option<Vec<String>> {
    let mut sentence = templates::fill(rel.assertion, Some(subject), cf);
    let core = sentence.len();
    let lo = 12usize.saturating_sub(core).max(templates::TAIL_MIN_WORDS);
    let hi = (16usize.checked_sub(core)?).min(templates::TAIL_MAX_WORDS);
    if lo > hi {
        return None;
    }
    let tail_len = rng.gen_range(lo..=hi);
    let group = templates::TAILS[tail_len - templates::TAIL_MIN_WORDS];
    let tail = group[rng.gen_range(0..group.len())];
    sentence.extend(templates::words(tail).iter().map(|w| w.to_string()));
    Some(sentence)
}

fn count_occurrences(tokens: &[String], word: &str) -> usize {
    tokens.iter().filter(|t| t.as_str() == word).count()
}

fn ic_valid(sentence: &[String], rec: &CounterfactualRecord) -> bool {
    (12..=16).contains(&sentence.len())
        && count_occurrences(sentence, &rec.cf_object.surface) == 1
        && count_occurrences(sentence, &rec.base.subject.surface) == 0
        && count_occurrences(sentence, &rec.base.object.surface) == 0
}

fn rc_valid(sentence: &[String], rec: &CounterfactualRecord) -> bool {
    (12..=16).contains(&sentence.len())
        && count_occurrences(sentence, &rec.base.subject.surface) == 1
        && count_occurrences(sentence, &rec.cf_object.surface) == 1
        && count_occurrences(sentence, &rec.base.object.surface) == 0
}

// ---------------------------------------------------------------------------
// Arbitration dataset
// ---------------------------------------------------------------------------

/// Distinct objects per relation, in first-appearance order.
fn object_pools(kb: &[FactRecord]) -> BTreeMap<u32, Vec<Entity>> {
    let mut pools: BTreeMap<u32, Vec<Entity>> = BTreeMap::new();
    for f in kb {
        let pool = pools.entry(f.relation).or_default();
        if !pool.iter().any(|e| e.id == f.object.id) {
            pool.push(f.object.clone());
        }
    }
    pools
}

fn pick_same_domain(
    pools: &BTreeMap<u32, Vec<Entity>>,
    fact: &FactRecord,
    rng: &mut ChaCha8Rng,
) -> Option<Entity> {
    let pool = pools.get(&fact.relation)?;
    let candidates: Vec<&Entity> = pool.iter().filter(|e| e.id != fact.object.id).collect();
    if candidates.is_empty() {
        return None;
    }
    Some(candidates[rng.gen_range(0..candidates.len())].clone())
}

fn pick_different_domain(
    pools: &BTreeMap<u32, Vec<Entity>>,
    fact: &FactRecord,
    rng: &mut ChaCha8Rng,
) -> Option<Entity> {
    let others: Vec<&u32> = pools.keys().filter(|&&r| r != fact.relation).collect();
    if others.is_empty() {
        return None;
    }
    let rel = *others[rng.gen_range(0..others.len())];
    let pool = &pools[&rel];
    let candidates: Vec<&Entity> = pool.iter().filter(|e| e.id != fact.object.id).collect();
    if candidates.is_empty() {
        return None;
    }
    Some(candidates[rng.gen_range(0..candidates.len())].clone())
}

/// Builds the arbitration dataset over the 80% split: for each fact, a
/// same-domain and (when another relation exists) a different-domain
/// counterfactual, each yielding an IC/RC pair that shares the record and
/// topology. Only pairs whose sentences satisfy the occurrence rules and
/// the 12-16 word bound are retained.
pub fn make_arbitration_pairs(kb: &[FactRecord], seed: u64) -> ArbitrationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5b1_7a1e);
    let pools = object_pools(kb);
    let (arb_idx, _) = split_for_arbitration(kb);
    let mut examples = Vec::new();
    let mut skipped = 0usize;
    let mut pair_counter = 0usize;

    for &fi in &arb_idx {
        let fact = &kb[fi];
        let rel = match relation(fact.relation) {
            Ok(r) => r,
            Err(_) => {
                skipped += 2;
                continue;
            }
        };
        let cfs = [
            pick_same_domain(&pools, fact, &mut rng).map(|e| (e, Domain::Same)),
            pick_different_domain(&pools, fact, &mut rng).map(|e| (e, Domain::Different)),
        ];
        for cf in cfs.into_iter().flatten() {
            let (cf_object, domain) = cf;
            let record = CounterfactualRecord {
                base: fact.clone(),
                cf_object,
                domain,
            };
            let topology = if pair_counter % 2 == 0 {
                Topology::QueryFirst
            } else {
                Topology::ContextFirst
            };
            pair_counter += 1;

            let ic_frame = rng.gen_range(0..FILLER_FRAMES.len());
            let ic = filler_context(ic_frame, &record.cf_object.surface);
            let rc = rc_sentence(rel, &fact.subject.surface, &record.cf_object.surface, &mut rng);
            let query = query_tokens(rel, &fact.subject.surface);

            match rc {
                Some(rc) if ic_valid(&ic, &record) && rc_valid(&rc, &record) => {
                    examples.push(ArbitrationExample {
                        record: record.clone(),
                        mode: Mode::IC,
                        sentence: ic,
                        query: query.clone(),
                        topology,
                    });
                    examples.push(ArbitrationExample {
                        record,
                        mode: Mode::RC,
                        sentence: rc,
                        query,
                        topology,
                    });
                }
                _ => skipped += 2,
            }
        }
    }
    ArbitrationSet { examples, skipped }
}

// ---------------------------------------------------------------------------
// Evaluation benchmark
// ---------------------------------------------------------------------------

/// Deterministic relation subset used by the evaluation benchmark.
pub fn eval_relation_subset(kb: &[FactRecord], seed: u64) -> Vec<u32> {
    let mut present: Vec<u32> = kb.iter().map(|f| f.relation).collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_a21e);
    present.shuffle(&mut rng);
    present.truncate(EVAL_RELATION_LIMIT);
    present.sort_unstable();
    present
}

/// Builds evaluation scenarios over the held-out 20% of facts, restricted
/// to the benchmark relation subset. Copy→Recall scenarios embed the
/// counterfactual in a relation-specific authoritative template; the
/// Recall→Copy side uses generic archive frames that mention only the
/// counterfactual.
pub fn make_eval_scenarios(kb: &[FactRecord], seed: u64, per_regime: usize) -> Result<Vec<EvalScenario>> {
    if per_regime == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1_be4c);
    let pools = object_pools(kb);
    let subset: BTreeSet<u32> = eval_relation_subset(kb, seed).into_iter().collect();
    let (_, eval_idx) = split_for_arbitration(kb);
    let facts: Vec<&FactRecord> = eval_idx
        .iter()
        .map(|&i| &kb[i])
        .filter(|f| subset.contains(&f.relation))
        .collect();
    if facts.is_empty() {
        return Err(KbError::NoEvalFacts);
    }

    let mut scenarios = Vec::with_capacity(per_regime * 2);
    for regime in [Regime::CopyToRecall, Regime::RecallToCopy] {
        for i in 0..per_regime {
            let fact = facts[i % facts.len()];
            let rel = relation(fact.relation)?;
            let want_domain = if i % 2 == 0 { Domain::Same } else { Domain::Different };
            let cf = match want_domain {
                Domain::Same => pick_same_domain(&pools, fact, &mut rng)
                    .map(|e| (e, Domain::Same))
                    .or_else(|| pick_different_domain(&pools, fact, &mut rng).map(|e| (e, Domain::Different))),
                Domain::Different => pick_different_domain(&pools, fact, &mut rng)
                    .map(|e| (e, Domain::Different))
                    .or_else(|| pick_same_domain(&pools, fact, &mut rng).map(|e| (e, Domain::Same))),
            };
            let Some((cf_object, domain)) = cf else {
                continue;
            };
            let record = CounterfactualRecord {
                base: fact.clone(),
                cf_object,
                domain,
            };
            let topology = if (i / 2) % 2 == 0 {
                Topology::QueryFirst
            } else {
                Topology::ContextFirst
            };
            let context = match regime {
                Regime::CopyToRecall => {
                    let variant = rng.gen_range(0..templates::AUTHORITATIVE_WRAPPERS.len());
                    authoritative_context(rel, &fact.subject.surface, &record.cf_object.surface, variant)
                }
                Regime::RecallToCopy => {
                    let frame = rng.gen_range(0..ARCHIVE_FRAMES.len());
                    archive_context(frame, &record.cf_object.surface)
                }
            };
            scenarios.push(EvalScenario {
                query: query_tokens(rel, &fact.subject.surface),
                record,
                regime,
                context,
                topology,
            });
        }
    }
    Ok(scenarios)
}

// ---------------------------------------------------------------------------
// Relation-stratified sampling
// ---------------------------------------------------------------------------

/// Relation-stratified benchmark selection: at least two scenarios per
/// relation present, remaining slots proportional to relation frequency
/// (floor allocation, then largest remainder). Deterministic given seed.
pub fn stratified_sample(scenarios: &[EvalScenario], n: usize, seed: u64) -> Result<Vec<EvalScenario>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in scenarios.iter().enumerate() {
        groups.entry(s.record.base.relation).or_default().push(i);
    }
    let relations = groups.len();
    if n < 2 * relations {
        return Err(KbError::SampleTooSmall {
            n,
            minimum: 2 * relations,
            relations,
        });
    }
    let total: usize = scenarios.len();
    let rel_ids: Vec<u32> = groups.keys().copied().collect();

    // Proportional floor allocation plus largest-remainder distribution.
    let mut alloc: Vec<usize> = Vec::with_capacity(relations);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(relations);
    let mut assigned = 0usize;
    for (slot, rid) in rel_ids.iter().enumerate() {
        let f = groups[rid].len() as f64 / total as f64;
        let exact = n as f64 * f;
        let fl = exact.floor() as usize;
        alloc.push(fl);
        assigned += fl;
        remainders.push((exact - fl as f64, slot));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut left = n.saturating_sub(assigned);
    let mut cursor = 0usize;
    while left > 0 && !remainders.is_empty() {
        let (_, slot) = remainders[cursor % remainders.len()];
        alloc[slot] += 1;
        left -= 1;
        cursor += 1;
    }

    // Enforce the minimum of two per relation, taking from the largest.
    loop {
        let Some(short) = alloc.iter().position(|&a| a < 2) else {
            break;
        };
        let donor = alloc
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != short && a > 2)
            .max_by_key(|&(_, &a)| a)
            .map(|(i, _)| i);
        match donor {
            Some(d) => {
                alloc[d] -= 1;
                alloc[short] += 1;
            }
            None => break,
        }
    }
    // Clamp to availability, pushing overflow to relations with room.
    for slot in 0..relations {
        let cap = groups[&rel_ids[slot]].len();
        if alloc[slot] > cap {
            let mut excess = alloc[slot] - cap;
            alloc[slot] = cap;
            for other in 0..relations {
                if excess == 0 {
                    break;
                }
                let ocap = groups[&rel_ids[other]].len();
                if alloc[other] < ocap {
                    let take = excess.min(ocap - alloc[other]);
                    alloc[other] += take;
                    excess -= take;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57a7_1f1e);
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    for (slot, rid) in rel_ids.iter().enumerate() {
        let idxs = &groups[rid];
        let k = alloc[slot].min(idxs.len());
        let picked = rand::seq::index::sample(&mut rng, idxs.len(), k);
        for p in picked.iter() {
            chosen.insert(idxs[p]);
        }
    }
    Ok(chosen.into_iter().map(|i| scenarios[i].clone()).collect())
}

// ---------------------------------------------------------------------------
// JSON-lines persistence
// ---------------------------------------------------------------------------

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut f, item)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts_give_4050_facts() {
        let kb = generate_kb(7, 27, 150).unwrap();
        assert_eq!(kb.len(), 4050);
    }

    #[test]
    fn minimal_kb_two_facts_one_relation() {
        let kb = generate_kb(7, 1, 2).unwrap();
        assert_eq!(kb.len(), 2);
        assert!(kb.iter().all(|f| f.relation == 0));
        // Used objects cover two distinct values.
        assert_ne!(kb[0].object.id, kb[1].object.id);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = serde_json::to_string(&generate_kb(11, 3, 5).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_kb(11, 3, 5).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_kb(12, 3, 5).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn vocabulary_overflow_is_reported() {
        let err = generate_kb(7, 27, 180).unwrap_err();
        assert!(matches!(err, KbError::VocabularyOverflow { .. }));
    }

    #[test]
    fn subjects_are_unique_single_tokens() {
        let kb = generate_kb(3, 5, 30).unwrap();
        let mut seen = BTreeSet::new();
        for f in &kb {
            assert!(f.subject.surface.chars().all(|c| c.is_ascii_lowercase()));
            assert!(!f.subject.surface.contains(' '));
            assert!(seen.insert(f.subject.surface.clone()), "duplicate subject");
        }
    }

    #[test]
    fn tiers_split_roughly_in_half() {
        let kb = generate_kb(5, 10, 50).unwrap();
        let high = kb.iter().filter(|f| f.popularity_tier == PopularityTier::High).count();
        let frac = high as f64 / kb.len() as f64;
        assert!((0.4..=0.6).contains(&frac), "high tier fraction {frac}");
    }

    #[test]
    fn pairs_share_record_and_topology() {
        let kb = generate_kb(21, 4, 10).unwrap();
        let set = make_arbitration_pairs(&kb, 21);
        assert!(set.examples.len() >= 2);
        assert_eq!(set.skipped, 0);
        for pair in set.examples.chunks(2) {
            let (ic, rc) = (&pair[0], &pair[1]);
            assert_eq!(ic.mode, Mode::IC);
            assert_eq!(rc.mode, Mode::RC);
            assert_eq!(ic.record, rc.record);
            assert_eq!(ic.topology, rc.topology);
            assert_eq!(ic.query, rc.query);
        }
    }

    #[test]
    fn pair_sentences_satisfy_occurrence_rules() {
        let kb = generate_kb(9, 6, 12).unwrap();
        let set = make_arbitration_pairs(&kb, 9);
        for ex in &set.examples {
            let subj = &ex.record.base.subject.surface;
            let cf = &ex.record.cf_object.surface;
            let obj = &ex.record.base.object.surface;
            assert!((12..=16).contains(&ex.sentence.len()), "{:?}", ex.sentence);
            match ex.mode {
                Mode::IC => {
                    assert_eq!(count_occurrences(&ex.sentence, cf), 1);
                    assert_eq!(count_occurrences(&ex.sentence, subj), 0);
                    assert_eq!(count_occurrences(&ex.sentence, obj), 0);
                }
                Mode::RC => {
                    assert_eq!(count_occurrences(&ex.sentence, subj), 1);
                    assert_eq!(count_occurrences(&ex.sentence, cf), 1);
                    assert_eq!(count_occurrences(&ex.sentence, obj), 0);
                }
            }
        }
    }

    #[test]
    fn single_relation_kb_has_no_different_domain() {
        let kb = generate_kb(13, 1, 2).unwrap();
        let set = make_arbitration_pairs(&kb, 13);
        assert!(!set.examples.is_empty());
        assert!(set.examples.iter().all(|e| e.record.domain == Domain::Same));
    }

    #[test]
    fn continent_pair_structure_matches_table_shape() {
        // Same shape as the P30-style running example: the RC sentence
        // asserts the located-in-continent relation over subject and
        // counterfactual, the IC sentence mentions only the counterfactual.
        let kb = generate_kb(31, 1, 4).unwrap(); // relation 0 = continent
        let set = make_arbitration_pairs(&kb, 31);
        let rc = set.examples.iter().find(|e| e.mode == Mode::RC).unwrap();
        let joined = rc.sentence.join(" ");
        assert!(joined.contains("is located in the continent of"), "{joined}");
        let ic = set.examples.iter().find(|e| e.record == rc.record && e.mode == Mode::IC).unwrap();
        assert_eq!(count_occurrences(&ic.sentence, &ic.record.cf_object.surface), 1);
    }

    #[test]
    fn both_domains_and_topologies_appear() {
        let kb = generate_kb(17, 4, 20).unwrap();
        let set = make_arbitration_pairs(&kb, 17);
        let domains: BTreeSet<_> = set.examples.iter().map(|e| e.record.domain).collect();
        assert_eq!(domains.len(), 2);
        let topos: BTreeSet<_> = set.examples.iter().map(|e| e.topology).collect();
        assert_eq!(topos.len(), 2);
    }

    #[test]
    fn eval_scenarios_templates_by_regime() {
        let kb = generate_kb(19, 6, 10).unwrap();
        let scenarios = make_eval_scenarios(&kb, 19, 12).unwrap();
        assert_eq!(scenarios.len(), 24);
        for s in &scenarios {
            let subj = &s.record.base.subject.surface;
            let cf = &s.record.cf_object.surface;
            match s.regime {
                Regime::CopyToRecall => {
                    assert_eq!(count_occurrences(&s.context, subj), 1, "{:?}", s.context);
                    assert_eq!(count_occurrences(&s.context, cf), 1);
                }
                Regime::RecallToCopy => {
                    assert_eq!(count_occurrences(&s.context, subj), 0, "{:?}", s.context);
                    assert_eq!(count_occurrences(&s.context, cf), 1);
                }
            }
            assert_eq!(count_occurrences(&s.context, &s.record.base.object.surface), 0);
        }
    }

    #[test]
    fn eval_uses_held_out_facts_only() {
        let kb = generate_kb(23, 4, 10).unwrap();
        let (arb_idx, _) = split_for_arbitration(&kb);
        let arb_subjects: BTreeSet<_> = arb_idx.iter().map(|&i| kb[i].subject.id).collect();
        let scenarios = make_eval_scenarios(&kb, 23, 20).unwrap();
        for s in &scenarios {
            assert!(!arb_subjects.contains(&s.record.base.subject.id));
        }
    }

    #[test]
    fn zero_per_regime_is_empty() {
        let kb = generate_kb(3, 2, 4).unwrap();
        assert!(make_eval_scenarios(&kb, 3, 0).unwrap().is_empty());
    }

    #[test]
    fn stratified_rejects_small_n() {
        let kb = generate_kb(29, 5, 10).unwrap();
        let scenarios = make_eval_scenarios(&kb, 29, 40).unwrap();
        let relations: BTreeSet<_> = scenarios.iter().map(|s| s.record.base.relation).collect();
        let err = stratified_sample(&scenarios, 2 * relations.len() - 1, 1).unwrap_err();
        assert!(matches!(err, KbError::SampleTooSmall { .. }));
    }

    #[test]
    fn stratified_min_two_per_relation() {
        let kb = generate_kb(29, 5, 10).unwrap();
        let scenarios = make_eval_scenarios(&kb, 29, 60).unwrap();
        let sample = stratified_sample(&scenarios, 50, 5).unwrap();
        assert_eq!(sample.len(), 50);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for s in &sample {
            *counts.entry(s.record.base.relation).or_default() += 1;
        }
        for (&rel, &c) in &counts {
            assert!(c >= 2, "relation {rel} got {c} samples");
        }
    }

    #[test]
    fn stratified_single_relation_takes_all() {
        let kb = generate_kb(13, 1, 6).unwrap();
        let scenarios = make_eval_scenarios(&kb, 13, 10).unwrap();
        let sample = stratified_sample(&scenarios, 5, 3).unwrap();
        assert_eq!(sample.len(), 5);
        assert!(sample.iter().all(|s| s.record.base.relation == scenarios[0].record.base.relation));
    }

    #[test]
    fn proportional_allocation_floor_largest_remainder() {
        // Frequencies 40/10 with n=10 must split 8/2.
        let kb = generate_kb(37, 2, 20).unwrap();
        let mut scenarios = Vec::new();
        let base = make_eval_scenarios(&kb, 37, 25).unwrap();
        let rel_a = base[0].record.base.relation;
        let a: Vec<_> = base.iter().filter(|s| s.record.base.relation == rel_a).cloned().collect();
        let b: Vec<_> = base.iter().filter(|s| s.record.base.relation != rel_a).cloned().collect();
        assert!(a.len() >= 40 / 4 && b.len() >= 10 / 4, "need enough raw scenarios");
        for i in 0..40 {
            scenarios.push(a[i % a.len()].clone());
        }
        for i in 0..10 {
            scenarios.push(b[i % b.len()].clone());
        }
        // Duplicate indices are fine for allocation arithmetic; dedup by
        // cloning fresh scenario values is not needed here.
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        let sample = stratified_sample(&scenarios, 10, 7).unwrap();
        for s in &sample {
            *counts.entry(s.record.base.relation).or_default() += 1;
        }
        let ca = counts[&rel_a];
        let cb: usize = counts.iter().filter(|(&r, _)| r != rel_a).map(|(_, &c)| c).sum();
        assert_eq!((ca, cb), (8, 2), "allocation {counts:?}");
    }

    #[test]
    fn jsonl_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let kb = generate_kb(41, 3, 6).unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        write_jsonl(&p1, &kb).unwrap();
        let back: Vec<FactRecord> = read_jsonl(&p1).unwrap();
        assert_eq!(back, kb);
        write_jsonl(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn fact_jsonl_field_names() {
        let kb = generate_kb(1, 1, 2).unwrap();
        let line = serde_json::to_value(&kb[0]).unwrap();
        for key in ["subject", "relation", "object", "pop_subject", "pop_object", "popularity_tier"] {
            assert!(line.get(key).is_some(), "missing field {key}");
        }
        assert!(line["subject"].get("id").is_some());
        assert!(line["subject"].get("surface").is_some());
    }
}
