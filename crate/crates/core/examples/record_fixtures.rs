//! Regenerates the replay cache of the mini experiment from canned replies.
//!
//! Runs IEMT and the NRIEMT pipeline in record mode against a scripted
//! transport, so the cache holds exactly the requests the real commands make.
//!
//! cargo run -p ctlab-core --example record_fixtures [-- <mini dir>]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ctlab_core::corpus::load_topics;
use ctlab_core::gateway::{Gateway, GatewayConfig, GatewayMode, ManualClock, ResponseCache, ScriptedTransport};
use ctlab_core::negation::{AssertionBackend, NriemtPipeline, RulesProvider};
use ctlab_core::prompts::{PromptRegistry, StrategyId};
use serde_json::Value;

const FIXTURE_MODEL: &str = "gpt-3.5-turbo";
const RECORDED_AT: u64 = 1_700_000_000;

fn topic_of(prompt: &str) -> u32 {
    if prompt.contains("astrocytoma") {
        1
    } else if prompt.contains("Colorado") {
        2
    } else if prompt.contains("HbA1c") {
        3
    } else {
        panic!("prompt matches no fixture topic")
    }
}

fn last_user(req: &Value) -> String {
    req["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string()
}

fn canned(dir: &Path, name: &str) -> String {
    let p = dir.join("canned").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display())).trim_end().to_string()
}

fn gateway(cache: Arc<ResponseCache>, reply: impl Fn(&str) -> String + Send + Sync + 'static) -> Gateway {
    let transport = ScriptedTransport::new(move |req| ScriptedTransport::completion(&reply(&last_user(req))));
    let config = GatewayConfig {
        endpoint: "http://fixture.invalid/v1/chat/completions".into(),
        model: FIXTURE_MODEL.into(),
        requests_per_minute: 0,
        ..GatewayConfig::default()
    };
    Gateway::with_transport(
        GatewayMode::Record,
        config,
        Some(cache),
        Arc::new(transport),
        Arc::new(ManualClock::new(RECORDED_AT)),
    )
    .unwrap()
}

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini"));
    let topics = load_topics(&dir.join("topics.xml")).unwrap();
    let registry = PromptRegistry::bundled().unwrap();
    let cache = Arc::new(ResponseCache::open(dir.join("cache")).unwrap());

    let d = dir.clone();
    let iemt = gateway(cache.clone(), move |p| canned(&d, &format!("iemt.{}.txt", topic_of(p))));
    for t in &topics {
        iemt.run_conversation(registry.get(StrategyId::Iemt).unwrap(), t).unwrap();
    }

    let d = dir.clone();
    let nriemt = gateway(cache.clone(), move |p| {
        let step = if p.contains("[entity]") { "nriemt_tag" } else { "nriemt_iemt" };
        canned(&d, &format!("{step}.{}.txt", topic_of(p)))
    });
    let pipeline = NriemtPipeline {
        tag_strategy: registry.get(StrategyId::NriemtTag).unwrap().clone(),
        extract_strategy: registry.get(StrategyId::Iemt).unwrap().clone(),
        backend: Arc::new(AssertionBackend::Rules(RulesProvider::default())),
        scrub_triggers: None,
    };
    for t in &topics {
        let trace = pipeline.run(&nriemt, t).unwrap();
        println!("topic {}: removed {:?}", t.id, trace.absent_texts());
    }
    println!("cache entries: {}", cache.keys().unwrap().len());
}
