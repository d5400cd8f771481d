//! Fixed template banks: relation verbalizations, irrelevant-context filler
//! frames, archive frames, and padding tails.
//!
//! Templates are word lists; `{s}` and `{o}` mark the subject and object
//! slots. All template words are lowercase single tokens and together form
//! the non-entity part of the vocabulary.

/// A synthetic relation: question template plus declarative assertion core.
#[derive(Debug, Clone, Copy)]
pub struct Relation {
    pub id: u32,
    pub name: &'static str,
    pub query: &'static str,
    pub assertion: &'static str,
}

/// The built-in relation table. The default knowledge base uses all 27.
pub const RELATIONS: &[Relation] = &[
    Relation { id: 0, name: "continent", query: "which continent holds {s}", assertion: "{s} is located in the continent of {o}" },
    Relation { id: 1, name: "birthplace", query: "where was {s} born", assertion: "{s} was born in {o}" },
    Relation { id: 2, name: "capital", query: "what is the capital of {s}", assertion: "the capital of {s} is {o}" },
    Relation { id: 3, name: "owner", query: "who owns {s}", assertion: "{s} is owned by {o}" },
    Relation { id: 4, name: "employer", query: "who employs {s}", assertion: "{s} is employed by {o}" },
    Relation { id: 5, name: "citizenship", query: "which nation claims {s}", assertion: "{s} is a citizen of {o}" },
    Relation { id: 6, name: "headquarters", query: "where is the headquarters of {s}", assertion: "the headquarters of {s} is in {o}" },
    Relation { id: 7, name: "network", query: "which network airs {s}", assertion: "{s} premieres on the network {o}" },
    Relation { id: 8, name: "maker", query: "who created {s}", assertion: "{s} was created by {o}" },
    Relation { id: 9, name: "developer", query: "who developed {s}", assertion: "{s} was developed by {o}" },
    Relation { id: 10, name: "origin", query: "where did {s} originate", assertion: "{s} originated in {o}" },
    Relation { id: 11, name: "spoken_language", query: "which language is spoken in {s}", assertion: "the language spoken in {s} is {o}" },
    Relation { id: 12, name: "native_language", query: "what is the native language of {s}", assertion: "the native language of {s} is {o}" },
    Relation { id: 13, name: "original_language", query: "what is the original language of {s}", assertion: "the original language of {s} is {o}" },
    Relation { id: 14, name: "used_language", query: "which language did {s} use", assertion: "the language used by {s} is {o}" },
    Relation { id: 15, name: "death_place", query: "where did {s} pass away", assertion: "{s} passed away in {o}" },
    Relation { id: 16, name: "location", query: "where is {s} located", assertion: "{s} is located in {o}" },
    Relation { id: 17, name: "province", query: "which province contains {s}", assertion: "{s} is in the province of {o}" },
    Relation { id: 18, name: "country", query: "which country surrounds {s}", assertion: "{s} is located in the country of {o}" },
    Relation { id: 19, name: "field", query: "which field does {s} study", assertion: "{s} specializes in the study of {o}" },
    Relation { id: 20, name: "instrument", query: "which instrument does {s} play", assertion: "{s} performs on the {o}" },
    Relation { id: 21, name: "religion", query: "which religion does {s} follow", assertion: "{s} follows the religion of {o}" },
    Relation { id: 22, name: "profession", query: "what is the profession of {s}", assertion: "{s} works as a {o}" },
    Relation { id: 23, name: "genre", query: "which genre fits {s}", assertion: "the genre of {s} is {o}" },
    Relation { id: 24, name: "playing_role", query: "which role does {s} play", assertion: "{s} plays as a {o}" },
    Relation { id: 25, name: "sport", query: "which sport does {s} play", assertion: "{s} plays the sport of {o}" },
    Relation { id: 26, name: "work_city", query: "in which city did {s} work", assertion: "{s} worked in the city of {o}" },
];

/// Off-topic filler frames for irrelevant contexts. Each contains exactly
/// one `{o}` slot and, with the slot filled by a single token, lands inside
/// the 12-16 word bound.
pub const FILLER_FRAMES: &[&str] = &[
    "many gardeners say {o} seeds sprout quickly when spring soil stays damp and warm",
    "the morning market sold fresh {o} bread beside crates of apples and winter squash",
    "commuters waited while the {o} tram rolled slowly past the wet station platform",
    "a light {o} rain kept the afternoon cool and the garden paths quiet",
    "the stationery shop stocked {o} pens in blue boxes near the folded paper",
    "weekend shoppers compared {o} baskets while the checkout line moved slowly forward",
    "fresh {o} soup simmered on the stove while rain tapped the kitchen window",
    "the laundry basket held {o} towels folded neatly beside the warm dryer door",
    "cyclists passed the {o} bakery early before the narrow street filled with carts",
    "a small {o} kettle whistled softly while tea leaves settled in the pot",
    "the evening bus carried {o} crates of flowers toward the quiet market square",
    "neighbors swept {o} leaves from the porch steps after the windy autumn night",
    "the pantry shelf kept {o} jars of honey beside bags of dried beans",
    "morning joggers circled the {o} fountain while sprinklers ticked across the park lawn",
    "the hardware stall sold {o} nails and rope coils under a canvas awning",
    "a worn {o} notebook sat on the desk beside pencils and a ruler",
    "the corner cafe served {o} muffins warm from the oven every market day",
    "children stacked {o} blocks on the rug while the radio played softly",
    "the ferry hauled {o} barrels across the calm harbor before the fog lifted",
    "dusty {o} boots dried by the door after the long muddy trail walk",
    "the allotment keeper watered {o} vines at dusk while bees drifted over the low fence",
    "slow {o} traffic filled the bridge lane while cold drizzle settled over the toll booth signs",
];

/// Generic archive frames: they mention the object in a vague documentary
/// voice with no subject slot, so they assert nothing about the query.
pub const ARCHIVE_FRAMES: &[&str] = &[
    "the {o} was documented in the official records",
    "local sources reference the {o} in their archives",
    "the {o} appears in the standard documentation",
    "historical files mention the {o} briefly",
    "the {o} is listed in the reference materials",
    "official logs include the {o} entry",
    "the {o} was noted in the meeting minutes",
    "records from that period show the {o}",
    "the {o} is included in the database",
    "standard reports contain the {o}",
];

/// Neutral archival tails used to pad relevant-context sentences into the
/// 12-16 word window, grouped by word count (3 through 9, two per length).
pub const TAILS: &[&[&str]] = &[
    &["according to records", "per archived records"],
    &["as official files note", "according to archived notes"],
    &["as the filed records confirm", "according to several archive entries"],
    &["as noted in several archived files", "based on the filed survey entries"],
    &["as noted across several archived survey files", "based on the widely filed survey entries"],
    &["as noted across several widely archived survey files", "as stated in several widely filed survey entries"],
    &["as noted across several widely archived regional survey files", "as stated across several widely filed regional survey entries"],
];

pub const TAIL_MIN_WORDS: usize = 3;
pub const TAIL_MAX_WORDS: usize = 9;

/// Wrapper variants that turn a bare assertion into an authoritative
/// context sentence. `{a}` marks where the assertion core goes.
pub const AUTHORITATIVE_WRAPPERS: &[&str] = &[
    "according to records {a}",
    "{a}",
    "{a} as official files note",
    "records state that {a}",
];

/// Fixed system prefix prepended to every prompt.
pub const SYSTEM_PROMPT: &[&str] = &["copy", "relevant", "context", "else", "recall"];

/// Splits a template string into words.
pub fn words(template: &str) -> Vec<&str> {
    template.split_whitespace().collect()
}

/// Instantiates a template, replacing `{s}` and `{o}` slots.
pub fn fill(template: &str, subject: Option<&str>, object: &str) -> Vec<String> {
    words(template)
        .into_iter()
        .map(|w| match w {
            "{s}" => subject.expect("template has no subject slot").to_string(),
            "{o}" => object.to_string(),
            other => other.to_string(),
        })
        .collect()
}

/// Every distinct non-slot word used by any template bank, sorted. This is
/// the non-entity word portion of the vocabulary.
pub fn word_bank() -> Vec<String> {
    let mut set = std::collections::BTreeSet::new();
    let mut put = |t: &str| {
        for w in words(t) {
            if w != "{s}" && w != "{o}" && w != "{a}" {
                set.insert(w.to_string());
            }
        }
    };
    for r in RELATIONS {
        put(r.query);
        put(r.assertion);
    }
    for f in FILLER_FRAMES {
        put(f);
    }
    for f in ARCHIVE_FRAMES {
        put(f);
    }
    for group in TAILS {
        for t in *group {
            put(t);
        }
    }
    for w in AUTHORITATIVE_WRAPPERS {
        put(w);
    }
    for w in SYSTEM_PROMPT {
        set.insert((*w).to_string());
    }
    set.into_iter().collect()
}
