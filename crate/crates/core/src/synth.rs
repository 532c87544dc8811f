//! Seeded synthetic workspace: a SQuAD-layout corpus, a triple file, mock
//! client fixtures and a pipeline configuration that runs end to end without
//! network access. Also produces synthetic model outputs for `eval`.

use crate::clients::mock::{FixtureEntry, MockCompletionClient, SearchFixture, COMPLETION_FIXTURES, SEARCH_FIXTURES};
use crate::clients::{LlmService, RetryPolicy, SearchResult, TemplateSet, HEAD_ENTITIES};
use crate::corpus::{write_jsonl, CorpusError};
use crate::eval::ModelOutput;
use crate::scenarios::ScenarioSample;
use crate::textops::{Language, TfIdfModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

const FIRST: [&str; 25] = [
    "Ada", "Bruno", "Celia", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ingrid", "Jonas", "Kira", "Lucio", "Marta",
    "Nils", "Olga", "Pavel", "Rosa", "Soren", "Tamsin", "Umberto", "Vera", "Wendell", "Xenia", "Yusuf", "Zora",
];
const LAST: [&str; 25] = [
    "Okafor",
    "Lindqvist",
    "Moreau",
    "Baptiste",
    "Castellan",
    "Drummond",
    "Esposito",
    "Fairbanks",
    "Gallagher",
    "Haverford",
    "Ishikawa",
    "Jablonski",
    "Kowalczyk",
    "Laurent",
    "Marchetti",
    "Novak",
    "Oyelaran",
    "Pemberton",
    "Quintero",
    "Rasmussen",
    "Sandoval",
    "Thorne",
    "Underhill",
    "Valdez",
    "Whitcombe",
];
const ADJ: [&str; 20] = [
    "Crimson",
    "Northgate",
    "Silver",
    "Harbor",
    "Willow",
    "Granite",
    "Eastfield",
    "Lantern",
    "Juniper",
    "Copper",
    "Meridian",
    "Foxglove",
    "Ironbridge",
    "Saltmarsh",
    "Bellwether",
    "Oakridge",
    "Stonecrest",
    "Riverside",
    "Highmoor",
    "Amberley",
];
const BUILDING: [&str; 12] = [
    "Library",
    "Tower",
    "Observatory",
    "Concert Hall",
    "Chapel",
    "Museum",
    "Bridge",
    "Theatre",
    "Market Hall",
    "Lighthouse",
    "Gallery",
    "Station",
];
const CITY: [&str; 10] = [
    "Arden",
    "Brockton",
    "Calder",
    "Dunmore",
    "Elsworth",
    "Fennick",
    "Glenrock",
    "Halvard",
    "Inverleigh",
    "Kestrel Bay",
];
const RIVER: [&str; 6] = ["Tamar", "Wensum", "Colne", "Avonside", "Lune", "Brent"];
const MATERIAL: [&str; 5] = ["sandstone", "red brick", "limestone", "slate", "granite blocks"];
const EVENT: [&str; 5] = ["a book fair", "an organ festival", "a lantern parade", "a winter market", "a film season"];
const FILM_NOUN: [&str; 8] = ["Tower", "Harbor", "Winter", "Signal", "Orchard", "Meridian", "Crossing", "Lantern"];
const FILM_ADJ: [&str; 8] =
    ["The Deadly", "The Last", "A Quiet", "The Silent", "The Broken", "The Long", "A Distant", "The Hidden"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    pub records: usize,
    /// Records drawn into dev/test by the generated config; the rest is train.
    pub split_n: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { records: 600, split_n: 500, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSummary {
    pub config: PathBuf,
    pub records: usize,
    pub triples: usize,
    pub completion_fixtures: usize,
    pub search_fixtures: usize,
}

struct Record {
    id: String,
    subject: String,
    question: String,
    context: String,
    answer: String,
    year: u32,
    single_sentence: bool,
}

fn person(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", FIRST.choose(rng).unwrap(), LAST.choose(rng).unwrap())
}

fn subject(rng: &mut ChaCha8Rng) -> String {
    format!("the {} {} in {}", ADJ.choose(rng).unwrap(), BUILDING.choose(rng).unwrap(), CITY.choose(rng).unwrap())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn record(i: usize, rng: &mut ChaCha8Rng) -> Record {
    let subject = subject(rng);
    let answer = person(rng);
    let year = rng.gen_range(1820..1990);
    let single_sentence = rng.gen_bool(0.12);
    let mut sentences = vec![format!("{} was designed by {answer}.", capitalize(&subject))];
    if !single_sentence {
        let mut filler = vec![
            format!("It was completed in {year} after {} years of work.", rng.gen_range(2..9)),
            format!("The building stands beside the {} River.", RIVER.choose(rng).unwrap()),
            format!("Its facade is faced with {} quarried nearby.", MATERIAL.choose(rng).unwrap()),
            format!("Today it hosts {} every year.", EVENT.choose(rng).unwrap()),
            format!("Restoration work in {} replaced the original roof.", year + rng.gen_range(30..90)),
        ];
        filler.shuffle(rng);
        filler.truncate(rng.gen_range(2..=4));
        let at = rng.gen_range(0..=filler.len());
        sentences.splice(0..0, filler.drain(..at));
        sentences.extend(filler);
    }
    Record {
        id: format!("synth-{i:04}"),
        question: format!("Who designed {subject}?"),
        context: sentences.join(" "),
        subject,
        answer,
        year,
        single_sentence,
    }
}

fn squad_json(records: &[Record]) -> serde_json::Value {
    let paragraphs: Vec<_> = records
        .iter()
        .map(|r| {
            let start = r.context.find(&r.answer).expect("answer sentence is present");
            json!({
                "context": r.context,
                "qas": [{"id": r.id, "question": r.question, "answers": [{"text": r.answer, "answer_start": start}]}],
            })
        })
        .collect();
    json!({"version": "synthetic", "data": [{"title": "Synthetic landmarks", "paragraphs": paragraphs}]})
}

fn noise_triples(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = BTreeSet::new();
    while out.len() < 900 {
        let line = match rng.gen_range(0..4) {
            0 => format!("{}\tdesigned by\t{}", capitalize(&subject(rng)), person(rng)),
            1 => format!("{}\tborn in\t{}", person(rng), CITY.choose(rng).unwrap()),
            2 => format!("{}\tlocated near\t{} River", capitalize(&subject(rng)), RIVER.choose(rng).unwrap()),
            _ => format!(
                "{} {}\tdirected by\t{}",
                FILM_ADJ.choose(rng).unwrap(),
                FILM_NOUN.choose(rng).unwrap(),
                person(rng)
            ),
        };
        out.insert(line);
    }
    out.into_iter().collect()
}

fn config_toml(opts: &SynthOptions) -> String {
    let s = opts.seed;
    format!(
        r#"output_dir = "out"
triples = "triples.tsv"

[[datasets]]
id = "synth"
format = "squad"
path = "squad.json"

[split]
n = {}
seed = {s}

[augment]
seed = {}

[clients]
mock_fixtures = "fixtures"

[eval]
model = "synthetic"

[pairs]
target_n = 200
seed = {}

[review]
n = 20
seed = {}
"#,
        opts.split_n,
        s + 1,
        s + 2,
        s + 3
    )
}

/// Writes `squad.json`, `triples.tsv`, `fixtures/` and `robustqa.toml` into
/// `dir`. Output bytes depend only on `opts`.
pub fn write_workspace(dir: &Path, opts: &SynthOptions) -> Result<SynthSummary, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let records: Vec<Record> = (0..opts.records).map(|i| record(i, &mut rng)).collect();

    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let squad = dir.join("squad.json");
    let text = serde_json::to_string_pretty(&squad_json(&records)).expect("corpus serializes");
    std::fs::write(&squad, text).map_err(io(&squad))?;

    let triples = noise_triples(&mut rng);
    let triples_path = dir.join("triples.tsv");
    std::fs::write(&triples_path, triples.join("\n") + "\n").map_err(io(&triples_path))?;

    let templates = TemplateSet::default();
    let probe = MockCompletionClient::default();
    let svc = LlmService::new(&probe, RetryPolicy::immediate(1), &templates);
    let contexts: Vec<&str> = records.iter().map(|r| r.context.as_str()).collect();
    let tfidf = TfIdfModel::fit(&contexts, Language::English).expect("non-empty corpus");

    let mut completions = vec![FixtureEntry::any(HEAD_ENTITIES, "")];
    let mut searches = Vec::new();
    for r in &records {
        let tr = svc.triple_request(&r.question, &r.context).expect("templates render");
        let subject = capitalize(&r.subject);
        let reply = match rng.gen_range(0..100) {
            0..=79 => format!("{subject} ||| designed by ||| {}\n{subject} ||| completed in ||| {}", r.answer, r.year),
            80..=89 => format!("{subject} ||| completed in ||| {}", r.year),
            90..=94 => String::new(),
            _ => format!("{subject} ||| designed by ||| {}\nthis line has no separators", r.answer),
        };
        completions.push(FixtureEntry::exact(&tr.template, &tr.digest(), &reply));

        let fr = svc.false_answer_request(&r.question, &r.answer).expect("templates render");
        let false_answer = if rng.gen_bool(0.08) {
            r.answer.to_uppercase()
        } else {
            loop {
                let p = person(&mut rng);
                if p != r.answer {
                    break p;
                }
            }
        };
        completions.push(FixtureEntry::exact(&fr.template, &fr.digest(), &false_answer));

        if r.single_sentence {
            let query = tfidf.keywords(&r.question, 3).expect("question has tokens").join(" ");
            let hit = SearchResult {
                title: subject.clone(),
                snippet: format!("{subject} was designed by {} according to the city archive.", r.answer),
                url: format!("https://example.org/{}/archive", r.id),
            };
            let miss = SearchResult {
                title: subject.clone(),
                snippet: format!("{subject} is a landmark visited by thousands every year."),
                url: format!("https://example.org/{}/guide", r.id),
            };
            let results = match rng.gen_range(0..10) {
                0..=4 => vec![hit, miss],
                5..=7 => vec![miss],
                _ => vec![hit],
            };
            searches.push(SearchFixture { query, results });
        }
    }
    let fixtures = dir.join("fixtures");
    write_jsonl(&fixtures.join(COMPLETION_FIXTURES), &completions)?;
    write_jsonl(&fixtures.join(SEARCH_FIXTURES), &searches)?;

    let config = dir.join("robustqa.toml");
    std::fs::write(&config, config_toml(opts)).map_err(io(&config))?;
    Ok(SynthSummary {
        config,
        records: records.len(),
        triples: triples.len(),
        completion_fixtures: completions.len(),
        search_fixtures: searches.len(),
    })
}

/// One simulated model answer per sample, in id order: the gold answer, a
/// wrong name, or a refusal.
pub fn model_outputs(samples: &[ScenarioSample], seed: u64) -> Vec<ModelOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted: Vec<&ScenarioSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    sorted
        .into_iter()
        .map(|s| {
            let roll = rng.gen_range(0..100);
            let model_output = if roll < 45 {
                format!("It was {}.", s.gold_answer)
            } else if roll < 80 {
                let mut p = person(&mut rng);
                while p == s.gold_answer {
                    p = person(&mut rng);
                }
                p
            } else {
                "The context is not sufficient to answer the question.".to_string()
            };
            ModelOutput { sample_id: s.id.clone(), scenario: s.scenario, model_output }
        })
        .collect()
}
