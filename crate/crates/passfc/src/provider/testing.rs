//! Test-support backends: a per-template FIFO provider for scripting whole
//! runs, and a procedural provider that answers any request
//! deterministically from a seed (used by randomized property suites and
//! benches).

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatProvider, ChatRequest, ProviderError, ProviderResponse, TemplateId};
use crate::model::estimate_tokens;

/// FIFO queue of canned completions per template. Useful when recording
/// fixtures: it does not require knowing request fingerprints up front.
#[derive(Debug, Default)]
pub struct SequenceProvider {
    queues: Mutex<HashMap<TemplateId, VecDeque<String>>>,
}

impl SequenceProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, template: TemplateId, text: impl Into<String>) {
        self.queues
            .lock()
            .expect("queue lock")
            .entry(template)
            .or_default()
            .push_back(text.into());
    }

    pub fn remaining(&self, template: TemplateId) -> usize {
        self.queues
            .lock()
            .expect("queue lock")
            .get(&template)
            .map_or(0, |q| q.len())
    }

    pub fn all_consumed(&self) -> bool {
        self.queues
            .lock()
            .expect("queue lock")
            .values()
            .all(|q| q.is_empty())
    }
}

impl ChatProvider for SequenceProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let prompt = request.render()?;
        let text = self
            .queues
            .lock()
            .expect("queue lock")
            .get_mut(&request.template_id)
            .and_then(|q| q.pop_front())
            .ok_or(ProviderError::ScriptMiss {
                template: request.template_id,
                fingerprint: request.fingerprint(),
            })?;
        Ok(ProviderResponse {
            prompt_tokens: estimate_tokens(&prompt) as u64,
            completion_tokens: estimate_tokens(&text) as u64,
            text,
            model_id: "sequence".to_string(),
        })
    }
}

/// Tiny deterministic generator (splitmix64) so the procedural provider does
/// not depend on an RNG crate.
#[derive(Debug, Clone)]
pub struct Splitmix(pub u64);

impl Splitmix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }

    /// True with probability `percent`/100.
    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u64) as usize]
    }
}

/// Derives a per-request seed: same seed + same request = same response.
fn request_seed(seed: u64, request: &ChatRequest) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(request.template_id.name().as_bytes());
    hasher.update(request.fingerprint().as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Answers every template with plausible, format-conforming (usually) output
/// derived deterministically from the seed. A slice of responses is
/// deliberately malformed to exercise parse-failure fallbacks.
#[derive(Debug, Clone, Copy)]
pub struct ProceduralProvider {
    pub seed: u64,
}

impl ProceduralProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn respond(&self, request: &ChatRequest) -> String {
        let mut rng = Splitmix(request_seed(self.seed, request));
        match request.template_id {
            TemplateId::Decompose => {
                let input = request.variables.get("input").cloned().unwrap_or_default();
                let claims: Vec<serde_json::Value> = input
                    .split(['.', '\n'])
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| json!({ "claim": format!("{s}.") }))
                    .collect();
                if claims.is_empty() {
                    "[]".to_string()
                } else {
                    serde_json::to_string(&claims).expect("json")
                }
            }
            TemplateId::Ground => {
                if rng.chance(8) {
                    return "I cannot produce a dict right now".to_string();
                }
                let claim = request
                    .variables
                    .get("claim")
                    .cloned()
                    .unwrap_or_else(|| "the claim".to_string());
                let revised = if rng.chance(20) {
                    format!("As of Now, {claim}")
                } else {
                    claim
                };
                let time = *rng.pick(&[
                    "Now",
                    "2010",
                    "three years ago",
                    "last month",
                    "2021-05-04",
                    "two weeks ago",
                    "in 2019",
                    "sometime around the festival",
                ]);
                let mut map = serde_json::Map::new();
                map.insert("reasoning".into(), json!("procedural grounding"));
                map.insert("revised_claim".into(), json!(revised));
                map.insert("time".into(), json!(time));
                if rng.chance(40) {
                    map.insert("Entity A".into(), json!("a disambiguating description"));
                }
                if rng.chance(20) {
                    map.insert("Entity B".into(), json!("another description"));
                }
                serde_json::to_string(&serde_json::Value::Object(map)).expect("json")
            }
            TemplateId::Css => {
                if rng.chance(10) {
                    return "no domains to suggest".to_string();
                }
                if rng.chance(25) {
                    return "[]".to_string();
                }
                let mut items: Vec<&str> = Vec::new();
                let allow = [".gov", ".who.int", "wikipedia.org", "example.org", "nature.com"];
                let deny = ["-denied.test", "-reddit.com", "-tripadvisor.com"];
                for _ in 0..rng.below(4) {
                    items.push(rng.pick(&allow));
                }
                for _ in 0..rng.below(3) {
                    items.push(rng.pick(&deny));
                }
                super::serialize_bracketed_list(
                    &items.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                )
            }
            TemplateId::Xle => {
                let pools: [&[&str]; 6] = [
                    &[],
                    &["German"],
                    &["Russian", "Ukrainian"],
                    &["Spanish", "Klingon"],
                    &["Portuguese (Brazil)", "Japanese", "Korean"],
                    &["English"],
                ];
                let picked = rng.pick(&pools);
                if picked.is_empty() {
                    "None".to_string()
                } else {
                    super::serialize_bracketed_list(
                        &picked.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    )
                }
            }
            TemplateId::Sqg => {
                if rng.chance(10) {
                    return "queries: hmm, let me think".to_string();
                }
                let precision = *rng.pick(&[
                    "\"nuclear reactors\" count 2023",
                    "covid deaths total site:cdc.gov",
                    "(tesla OR edison) alternating current",
                    "election results -opinion",
                    "\"rock * roll\" origin",
                ]);
                let recall = *rng.pick(&[
                    "how many reactors operate in the US?",
                    "history of the dispute",
                    "who won the championship",
                    "background of the announcement",
                ]);
                super::serialize_bracketed_list(&[precision.to_string(), recall.to_string()])
            }
            TemplateId::Verify => {
                if rng.chance(8) {
                    return "verdict unclear".to_string();
                }
                let factuality = match rng.below(5) {
                    0 => json!(true),
                    1 => json!(false),
                    2 => json!("True"),
                    3 => json!("False"),
                    _ => json!("Inconclusive"),
                };
                json!({
                    "reasoning": format!("procedural verdict {}", rng.below(1000)),
                    "error": if factuality == json!(true) || factuality == json!("True") {
                        "None".to_string()
                    } else {
                        "procedural error note".to_string()
                    },
                    "correction": "None",
                    "factuality": factuality,
                })
                .to_string()
            }
            TemplateId::Reflect => {
                if rng.chance(12) {
                    return "cannot decide".to_string();
                }
                let decision = rng.chance(55);
                let mut tools: Vec<&str> = Vec::new();
                if decision {
                    let pool = ["advanced", "multilingual", "site", "reevaluate", "bogus_tool"];
                    for _ in 0..=rng.below(2) {
                        tools.push(rng.pick(&pool));
                    }
                }
                json!({
                    "decision": decision,
                    "tool": tools,
                    "feedback": format!("procedural feedback {}", rng.below(1000)),
                })
                .to_string()
            }
            TemplateId::Summarize => {
                format!("Earlier rounds, condensed: outcome code {}.", rng.below(1000))
            }
        }
    }
}

impl ChatProvider for ProceduralProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let prompt = request.render()?;
        let text = self.respond(request);
        Ok(ProviderResponse {
            prompt_tokens: estimate_tokens(&prompt) as u64,
            completion_tokens: estimate_tokens(&text) as u64,
            text,
            model_id: format!("procedural-{}", self.seed),
        })
    }
}
