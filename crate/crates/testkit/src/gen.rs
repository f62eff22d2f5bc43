//! Random French-like text and synthetic corpora.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use rexkb_core::interchange::{Envelope, Record};
use rexkb_core::{ContentStatus, ElementType, KnowledgeElement, Section, Timestamp};

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

const ONSETS: &[&str] = &[
    "b", "c", "ch", "d", "f", "g", "l", "m", "n", "p", "pr", "r", "s", "t", "tr", "v", "gr", "br",
];
const NUCLEI: &[&str] = &[
    "a", "e", "é", "i", "o", "ou", "u", "è", "an", "on", "ai", "eu",
];
const CODAS: &[&str] = &["", "", "", "r", "l", "n", "s", "x", "t"];

/// Words that double as stopwords, so generated text exercises removal.
const FUNCTION_WORDS: &[&str] = &[
    "de", "la", "le", "des", "sur", "et", "en", "du", "pour", "les",
];

/// A reproducible vocabulary of pronounceable, partly accented words.
pub fn vocabulary(rng: &mut impl Rng, size: usize) -> Vec<String> {
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(NUCLEI.choose(rng).unwrap());
        }
        w.push_str(CODAS.choose(rng).unwrap());
        words.insert(w);
    }
    words.into_iter().collect()
}

/// A sentence of `len` words drawn with a skew towards the head of the
/// vocabulary, mixed with function words and occasional capitals.
pub fn sentence(rng: &mut impl Rng, vocab: &[String], len: usize) -> String {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        if rng.gen_bool(0.2) {
            out.push(FUNCTION_WORDS.choose(rng).unwrap().to_string());
            continue;
        }
        // squaring a uniform draw favours low indices
        let u: f64 = rng.gen();
        let idx = ((u * u) * vocab.len() as f64) as usize;
        let mut word = vocab[idx.min(vocab.len() - 1)].clone();
        if rng.gen_bool(0.1) {
            word = word.to_uppercase();
        }
        out.push(word);
    }
    out.join(" ")
}

/// Body text for each template section of `element_type`.
pub fn sections_for(
    rng: &mut impl Rng,
    vocab: &[String],
    element_type: ElementType,
) -> Vec<Section> {
    element_type
        .template()
        .iter()
        .map(|name| {
            let len = rng.gen_range(3..10);
            Section::new(*name, sentence(rng, vocab, len))
        })
        .collect()
}

pub fn fixed_time() -> Timestamp {
    use rexkb_core::Timestamp;
    "2024-03-01T08:00:00Z".parse::<Timestamp>().unwrap()
}

/// `n` synthetic element records as JSON Lines, ids `syn-0000001`...
pub fn synthetic_elements_jsonl(seed: u64, n: usize) -> String {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 5000);
    let at = fixed_time();
    let mut out = String::with_capacity(n * 400);
    for i in 0..n {
        let element_type = ElementType::ALL[i % ElementType::ALL.len()];
        let title_len = rng.gen_range(3..8);
        let el = KnowledgeElement {
            id: format!("syn-{:07}", i + 1).into(),
            element_type,
            title: sentence(&mut rng, &vocab, title_len),
            sections: sections_for(&mut rng, &vocab, element_type),
            tags: Default::default(),
            content_status: ContentStatus::Validated,
            author: "import".into(),
            created_at: at,
            updated_at: at,
            validated_by: None,
            validated_at: None,
        };
        out.push_str(&Envelope::new(Record::Element(el)).to_line());
        out.push('\n');
    }
    out
}
