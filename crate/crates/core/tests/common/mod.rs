//! Shared helpers for integration tests: a small generative dependency
//! grammar that produces deterministic treebanks.

#![allow(dead_code)]

use mtparse::data::{Sentence, Token};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DET: &[&str] = &["the", "a", "this", "every", "some", "that"];
const ADJ: &[&str] = &[
    "big", "small", "red", "old", "new", "quiet", "bright", "cold", "early", "famous", "local",
    "strange", "quick", "heavy", "rich", "young", "green", "dark", "simple", "global",
];
const NOUN: &[&str] = &[
    "dog", "cat", "market", "city", "teacher", "report", "price", "company", "river", "garden",
    "student", "window", "letter", "government", "child", "engine", "song", "island", "doctor",
    "bank", "plan", "road", "painter", "farmer", "bridge", "village", "storm", "museum", "court",
    "ship", "forest", "train", "voter", "film", "studio", "kitchen", "player", "council", "tower",
    "harbor",
];
const TRANSITIVE: &[&str] = &[
    "sees", "likes", "builds", "sells", "finds", "paints", "moves", "reads", "opens", "closes",
    "visits", "follows", "carries", "watches", "changes",
];
const INTRANSITIVE: &[&str] = &["sleeps", "runs", "falls", "waits", "smiles", "arrives", "rests", "grows"];
const SAYS: &[&str] = &["says", "thinks", "believes", "claims"];
/// Prepositions that attach to verbs.
const VERB_PREP: &[&str] = &["during", "after", "before", "despite"];
/// Prepositions that attach to nouns.
const NOUN_PREP: &[&str] = &["of", "with", "near", "behind"];
const ADV: &[&str] = &["quickly", "often", "rarely", "today", "slowly", "again", "soon", "here"];

struct Node {
    form: String,
    pos: &'static str,
    label: &'static str,
    left: Vec<Node>,
    right: Vec<Node>,
}

fn node(form: &str, pos: &'static str, label: &'static str) -> Node {
    Node {
        form: form.to_string(),
        pos,
        label,
        left: Vec::new(),
        right: Vec::new(),
    }
}

fn pick<R: Rng>(rng: &mut R, words: &[&str]) -> String {
    // Skewed towards the front of each list so that frequencies vary.
    let i = (rng.gen::<f64>().powi(2) * words.len() as f64) as usize;
    words[i.min(words.len() - 1)].to_string()
}

fn noun_phrase<R: Rng>(rng: &mut R, label: &'static str, depth: usize) -> Node {
    let plural = rng.gen_bool(0.2);
    let mut form = pick(rng, NOUN);
    if plural {
        form.push('s');
    }
    let mut n = node(&form, if plural { "NNS" } else { "NN" }, label);
    if !plural || rng.gen_bool(0.5) {
        n.left.push(node(&pick(rng, DET), "DT", "det"));
    }
    for _ in 0..rng.gen_range(0..=2usize) {
        n.left.insert(n.left.len(), node(&pick(rng, ADJ), "JJ", "amod"));
    }
    if depth < 2 && rng.gen_bool(0.3) {
        let mut p = node(&pick(rng, NOUN_PREP), "IN", "prep");
        p.right.push(noun_phrase(rng, "pobj", depth + 1));
        n.right.push(p);
    }
    n
}

fn clause<R: Rng>(rng: &mut R, label: &'static str, depth: usize) -> Node {
    let kind = rng.gen_range(0..10);
    let mut v;
    if kind < 6 {
        v = node(&pick(rng, TRANSITIVE), "VBZ", label);
        v.right.push(noun_phrase(rng, "dobj", depth));
    } else if kind < 8 || depth > 0 {
        v = node(&pick(rng, INTRANSITIVE), "VBZ", label);
    } else {
        v = node(&pick(rng, SAYS), "VBZ", label);
        let mut comp = clause(rng, "ccomp", depth + 1);
        comp.left.insert(0, node("that", "IN", "mark"));
        v.right.push(comp);
    }
    v.left.push(noun_phrase(rng, "nsubj", depth));
    if rng.gen_bool(0.3) {
        let adv = node(&pick(rng, ADV), "RB", "advmod");
        if rng.gen_bool(0.5) {
            v.left.push(adv);
        } else {
            v.right.insert(0, adv);
        }
    }
    if rng.gen_bool(0.35) {
        let mut p = node(&pick(rng, VERB_PREP), "IN", "prep");
        p.right.push(noun_phrase(rng, "pobj", depth + 1));
        v.right.push(p);
    }
    v
}

fn flatten(n: Node, out: &mut Vec<Token>) -> usize {
    let mut lefts = Vec::new();
    for child in n.left {
        lefts.push(flatten(child, out));
    }
    out.push(Token {
        pos: Some(n.pos.to_string()),
        cpos: Some(n.pos.get(..2).unwrap_or(n.pos).to_string()),
        deprel: Some(n.label.to_string()),
        head: Some(0),
        ..Token::new(n.form)
    });
    let me = out.len();
    for i in lefts {
        out[i - 1].head = Some(me);
    }
    for child in n.right {
        let i = flatten(child, out);
        out[i - 1].head = Some(me);
    }
    me
}

/// Generates one sentence ending in a period attached to the main verb.
pub fn sentence<R: Rng>(rng: &mut R) -> Sentence {
    let mut root = clause(rng, "root", 0);
    if rng.gen_bool(0.2) {
        let first = root.left.remove(0);
        let mut capitalized = first;
        // Sentence-initial capitalization exercises form normalization.
        let mut chars = capitalized.form.chars();
        if let Some(c) = chars.next() {
            capitalized.form = c.to_uppercase().chain(chars).collect();
        }
        root.left.insert(0, capitalized);
    }
    root.right.push(node(".", ".", "punct"));
    let mut tokens = Vec::new();
    flatten(root, &mut tokens);
    Sentence::new(tokens)
}

pub fn treebank(seed: u64, size: usize) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size).map(|_| sentence(&mut rng)).collect()
}

/// Deterministic shuffle, for order-invariance checks.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}
