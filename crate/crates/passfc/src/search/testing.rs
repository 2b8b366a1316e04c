//! Procedural search backend for randomized property suites: answers every
//! query with a deterministic page derived from the seed, mixing in hosts
//! that must be filtered and publish dates straddling any cutoff.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::backend::{SearchBackend, DEFAULT_SEARCH_ENDPOINT};
use super::{SearchError, SearchQuery};
use crate::provider::testing::Splitmix;

/// Hosts the property suite expects to see filtered out.
pub const GUARDED_HOSTS: [&str; 3] = ["blocked.test", "denied.test", "reddit.com"];

const CLEAN_HOSTS: [&str; 5] = [
    "ok.example.com",
    "news.bbc.co.uk",
    "data.gov",
    "archive.example.org",
    "paper.nature.com",
];

#[derive(Debug, Clone, Copy)]
pub struct ProceduralSearch {
    pub seed: u64,
}

impl ProceduralSearch {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl SearchBackend for ProceduralSearch {
    fn fetch(&self, query: &SearchQuery) -> Result<Value, SearchError> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(query.query_string.as_bytes());
        hasher.update(query.language.as_bytes());
        let digest = hasher.finalize();
        let mut rng = Splitmix(u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")));

        let count = rng.below(query.num_results as u64 + 3);
        let mut organic = Vec::new();
        for i in 0..count {
            let host = if rng.chance(30) {
                *rng.pick(&GUARDED_HOSTS)
            } else {
                *rng.pick(&CLEAN_HOSTS)
            };
            let mut entry = json!({
                "title": format!("result {i} for {}", query.language),
                "snippet": format!("snippet {} covering the claim", rng.below(10_000)),
                "link": format!("https://{host}/article/{}", rng.below(100_000)),
            });
            if rng.chance(60) {
                // Dates from 2020-06 through 2021-early; cutoffs in the suite
                // fall inside this window so both sides occur.
                let day_offset = rng.below(300);
                let date = crate::model::date(2020, 6, 1) + chrono::Days::new(day_offset);
                entry["date"] = json!(date.format("%Y-%m-%d").to_string());
            }
            if rng.chance(8) {
                entry["link"] = json!("not a parseable url");
            }
            organic.push(entry);
        }
        Ok(json!({ "organic": organic }))
    }

    fn endpoint(&self) -> &str {
        DEFAULT_SEARCH_ENDPOINT
    }
}
