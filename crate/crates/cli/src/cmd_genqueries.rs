use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use ctlab_core::corpus::{load_topics, PatientTopic};
use ctlab_core::gateway::{CacheKey, Gateway, GatewayConfig, GatewayMode, ResponseCache};
use ctlab_core::negation::{
    AssertionBackend, AssertionClient, NriemtPipeline, NriemtTrace, RulesProvider, TriggerSet, ENV_ASSERTION_ENDPOINT,
};
use ctlab_core::parsing::{derive_queries, format_sidecar, QueryOptions, RecordField, SidecarEntry};
use ctlab_core::prompts::{PromptRegistry, PromptStrategy, StrategyId};
use rayon::prelude::*;

use crate::config::FileConfig;
use crate::error::{Failure, Result};
use crate::{require_file, write_output};

/// Pseudo-strategy name for the four-step negation pipeline.
pub const NRIEMT: &str = "NRIEMT";

#[derive(Args)]
pub struct GenArgs {
    /// Topic file (XML or `id<TAB>text`).
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Strategy ids, comma-separated or repeated; `NRIEMT` runs the negation pipeline.
    #[arg(long)]
    strategy: Vec<String>,
    /// `replay`, `record` or `live`.
    #[arg(long)]
    mode: Option<String>,
    /// Response cache directory (required for replay and record).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Chat completions URL (live and record modes).
    #[arg(long)]
    endpoint: Option<String>,
    /// Requests per minute, 0 for no limit.
    #[arg(long)]
    rpm: Option<u32>,
    /// Request timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Replace every strategy's system role with a named bundled role.
    #[arg(long)]
    system_role: Option<String>,
    /// Template directory with its own manifest.toml.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[command(flatten)]
    negation: NegationArgs,
    /// Record fields used to build IEMDMT queries, comma-separated.
    #[arg(long)]
    fields: Vec<String>,
    /// Append MeSH terms to IEMDMT queries (default true).
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    include_mesh: Option<bool>,
}

#[derive(Args)]
struct NegationArgs {
    /// Assertion service base URL; the rules provider is used when unset.
    #[arg(long)]
    assertion_url: Option<String>,
    /// Fall back to the rules provider when the assertion service is unreachable.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    fallback_rules: Option<bool>,
    /// Also remove the negation trigger scoping each removed entity.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    scrub_triggers: Option<bool>,
    #[arg(long)]
    negation_triggers: Option<PathBuf>,
    #[arg(long)]
    speculation_triggers: Option<PathBuf>,
}

enum Job {
    Strategy(PromptStrategy),
    Nriemt(NriemtPipeline),
}

/// Everything validated up front, before any request is made.
struct Plan {
    topics: Vec<PatientTopic>,
    jobs: Vec<(String, Job)>,
    gateway: Gateway,
    options: QueryOptions,
    out: PathBuf,
    role_suffix: String,
}

struct TopicResult {
    entries: Vec<SidecarEntry>,
    keys: Vec<CacheKey>,
    log: Vec<String>,
    degraded: bool,
    artifact: Option<(PathBuf, String)>,
}

pub fn run(a: GenArgs, cfg: &FileConfig) -> Result<()> {
    let plan = plan(a, cfg)?;
    for (name, job) in &plan.jobs {
        let results: Vec<Result<TopicResult>> = plan.topics.par_iter().map(|t| run_topic(&plan, job, t)).collect();
        let results = results.into_iter().collect::<Result<Vec<_>>>().map_err(|f| f.context(name))?;
        write_job(&plan, name, job, results)?;
    }
    Ok(())
}

fn plan(a: GenArgs, cfg: &FileConfig) -> Result<Plan> {
    let topics_path = cfg.require_path(a.topics, "topics")?;
    let out = cfg.require_path(a.out, "out")?;
    require_file(&topics_path, "topics")?;
    let mode: GatewayMode = cfg.pick::<String>(a.mode, "mode")?.unwrap_or_else(|| "replay".into()).parse()?;
    let cache_dir = cfg.pick_path(a.cache, "cache");
    let cache = match (mode, cache_dir) {
        (GatewayMode::Replay, Some(dir)) => {
            require_file(&dir, "cache")?;
            Some(Arc::new(ResponseCache::open_existing(dir)?))
        }
        (GatewayMode::Replay, None) => return Err(Failure::config("--cache is required in replay mode")),
        (_, Some(dir)) => Some(Arc::new(ResponseCache::open(dir)?)),
        (_, None) => None,
    };
    let timeout = Duration::from_secs(cfg.pick(a.timeout, "timeout")?.unwrap_or(120));
    let gateway_config = GatewayConfig {
        endpoint: cfg.pick(a.endpoint, "endpoint")?.unwrap_or_default(),
        model: cfg.pick(a.model, "model")?.unwrap_or_default(),
        requests_per_minute: cfg.pick(a.rpm, "rpm")?.unwrap_or(60),
        timeout,
        ..GatewayConfig::default()
    }
    .with_env();
    let gateway = match mode {
        GatewayMode::Replay => Gateway::replay(gateway_config, cache.expect("checked above"))?,
        _ => Gateway::http(mode, gateway_config, cache)?,
    };

    let registry = match cfg.pick_path(a.prompts, "prompts") {
        Some(dir) => PromptRegistry::load_dir(&dir)?,
        None => PromptRegistry::bundled()?,
    };
    let role_name = cfg.pick::<String>(a.system_role, "system-role")?;
    let role = match &role_name {
        Some(name) => Some(registry.role(name).map(str::to_string).ok_or_else(|| {
            let known: Vec<&str> = registry.role_names().collect();
            Failure::config(format!("unknown system role '{name}' (known: {})", known.join(", ")))
        })?),
        None => None,
    };
    let strategy = |id: StrategyId| -> Result<PromptStrategy> {
        let s = registry.get(id)?;
        Ok(match &role {
            Some(r) => s.with_system_role(r.clone()),
            None => s.clone(),
        })
    };

    let names = cfg.pick_list(a.strategy, "strategy");
    if names.is_empty() {
        return Err(Failure::config("--strategy is required"));
    }
    let mut jobs = Vec::new();
    let mut seen = BTreeSet::new();
    for name in names {
        let upper = name.to_ascii_uppercase();
        if !seen.insert(upper.clone()) {
            return Err(Failure::config(format!("strategy {upper} listed twice")));
        }
        if upper == NRIEMT {
            let backend = backend(cfg, &a.negation, timeout)?;
            let scrub = cfg.pick_bool(a.negation.scrub_triggers, "scrub-triggers", false)?;
            let pipeline = NriemtPipeline {
                tag_strategy: strategy(StrategyId::NriemtTag)?,
                extract_strategy: strategy(StrategyId::Iemt)?,
                scrub_triggers: scrub.then(|| rules_provider(cfg, &a.negation)).transpose()?,
                backend: Arc::new(backend),
            };
            jobs.push((NRIEMT.to_string(), Job::Nriemt(pipeline)));
            continue;
        }
        let id: StrategyId = name.parse()?;
        if id == StrategyId::NriemtTag {
            return Err(Failure::config("NRIEMT_TAG is one step of the negation pipeline; use --strategy NRIEMT"));
        }
        jobs.push((id.to_string(), Job::Strategy(strategy(id)?)));
    }

    let fields = cfg.pick_list(a.fields, "fields");
    let record_fields = if fields.is_empty() {
        RecordField::DEFAULT_QUERY_FIELDS.to_vec()
    } else {
        fields.iter().map(|f| f.parse::<RecordField>().map_err(Failure::config)).collect::<Result<_>>()?
    };
    let options = QueryOptions { record_fields, include_mesh: cfg.pick_bool(a.include_mesh, "include-mesh", true)? };

    let topics = load_topics(&topics_path)?;
    let role_suffix = role_name.map(|r| format!("@{r}")).unwrap_or_default();
    Ok(Plan { topics, jobs, gateway, options, out, role_suffix })
}

fn rules_provider(cfg: &FileConfig, a: &NegationArgs) -> Result<RulesProvider> {
    let load = |flag: &Option<PathBuf>, key: &str, bundled: fn() -> TriggerSet| -> Result<TriggerSet> {
        match cfg.pick_path(flag.clone(), key) {
            Some(p) => Ok(TriggerSet::from_path(&p)?),
            None => Ok(bundled()),
        }
    };
    Ok(RulesProvider::new(
        load(&a.negation_triggers, "negation-triggers", TriggerSet::bundled_negation)?,
        load(&a.speculation_triggers, "speculation-triggers", TriggerSet::bundled_speculation)?,
    ))
}

fn backend(cfg: &FileConfig, a: &NegationArgs, timeout: Duration) -> Result<AssertionBackend> {
    let url = cfg
        .pick::<String>(a.assertion_url.clone(), "assertion-url")?
        .or_else(|| std::env::var(ENV_ASSERTION_ENDPOINT).ok().filter(|v| !v.is_empty()));
    let rules = rules_provider(cfg, a)?;
    Ok(match url {
        None => AssertionBackend::Rules(rules),
        Some(url) => {
            let fallback = cfg.pick_bool(a.fallback_rules, "fallback-rules", false)?.then_some(rules);
            AssertionBackend::Remote { client: AssertionClient::http(&url, timeout), fallback }
        }
    })
}

fn run_topic(plan: &Plan, job: &Job, topic: &PatientTopic) -> Result<TopicResult> {
    let context = |f: Failure| f.context(format!("topic {}", topic.id));
    match job {
        Job::Strategy(strategy) => {
            let conv = plan.gateway.run_conversation(strategy, topic).map_err(|e| context(e.into()))?;
            let mut log = Vec::new();
            let mut artifact = None;
            let entries = match derive_queries(strategy.id, &conv.replies, &plan.options) {
                Ok(d) => {
                    log.extend(d.warnings.iter().map(|w| format!("{}\twarning\t{w}", topic.id)));
                    log.extend(d.repairs.iter().map(|r| format!("{}\trepair\t{r}", topic.id)));
                    if let Some(record) = &d.record {
                        let mut body = serde_json::to_string_pretty(record).expect("record serializes");
                        body.push('\n');
                        artifact = Some((PathBuf::from(format!("{}.json", topic.id)), body));
                    }
                    d.variants
                        .into_iter()
                        .map(|(variant, keywords)| SidecarEntry {
                            topic_id: topic.id,
                            variant: format!("{variant}{}", plan.role_suffix),
                            keywords,
                        })
                        .collect()
                }
                Err(e) => {
                    log::warn!("topic {}: {}: {e}", topic.id, strategy.id);
                    log.push(format!("{}\tparse-error\t{}", topic.id, one_line(&e.to_string())));
                    vec![SidecarEntry {
                        topic_id: topic.id,
                        variant: format!("{}{}", strategy.id, plan.role_suffix),
                        keywords: Vec::new(),
                    }]
                }
            };
            Ok(TopicResult { entries, keys: conv.keys, log, degraded: false, artifact })
        }
        Job::Nriemt(pipeline) => {
            let trace: NriemtTrace = pipeline.run(&plan.gateway, topic).map_err(|e| context(e.into()))?;
            let mut log: Vec<String> =
                trace.tag_warnings.iter().map(|w| format!("{}\twarning\t{}", topic.id, one_line(w))).collect();
            for removed in trace.absent_texts() {
                log.push(format!("{}\tremoved\t{removed}", topic.id));
            }
            let mut body = serde_json::to_string_pretty(&trace).expect("trace serializes");
            body.push('\n');
            Ok(TopicResult {
                entries: vec![SidecarEntry {
                    topic_id: topic.id,
                    variant: String::new(),
                    keywords: trace.keywords.clone(),
                }],
                keys: trace.tag_keys.iter().chain(&trace.extraction_keys).cloned().collect(),
                log,
                degraded: trace.degraded,
                artifact: Some((PathBuf::from(format!("{}.json", topic.id)), body)),
            })
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn write_job(plan: &Plan, name: &str, job: &Job, results: Vec<TopicResult>) -> Result<()> {
    let file_name = format!("{name}{}", plan.role_suffix);
    let queries = plan.out.join("queries");
    let mut entries = Vec::new();
    let mut keys = BTreeSet::new();
    let mut log = Vec::new();
    let degraded = results.iter().any(|r| r.degraded);
    let artifact_dir: Option<PathBuf> = match job {
        Job::Nriemt(_) => Some(plan.out.join("nriemt").join(&file_name)),
        Job::Strategy(s) if s.id == StrategyId::Iemdmt => Some(plan.out.join("records").join(&file_name)),
        Job::Strategy(_) => None,
    };
    let nriemt_variant = match job {
        Job::Nriemt(p) => {
            let mut v = format!("{NRIEMT}{}", plan.role_suffix);
            if p.scrub_triggers.is_some() {
                v.push_str(".scrub-triggers");
            }
            if degraded {
                v.push_str(".degraded");
            }
            Some(v)
        }
        Job::Strategy(_) => None,
    };
    for r in results {
        for mut e in r.entries {
            if let Some(v) = &nriemt_variant {
                e.variant = v.clone();
            }
            entries.push(e);
        }
        keys.extend(r.keys);
        log.extend(r.log);
        if let (Some(dir), Some((file, body))) = (&artifact_dir, r.artifact) {
            write_output(&dir.join(file), body.as_bytes())?;
        }
    }
    if degraded {
        log::warn!("{name}: assertion service unavailable for some topics; rules fallback used, run is degraded");
    }
    let sidecar = queries.join(format!("{file_name}.tsv"));
    write_output(&sidecar, format_sidecar(&entries).as_bytes())?;
    let key_text: String = keys.iter().map(|k| format!("{k}\n")).collect();
    write_output(&queries.join(format!("{file_name}.keys")), key_text.as_bytes())?;
    let log_text: String = log.iter().map(|l| format!("{l}\n")).collect();
    write_output(&queries.join(format!("{file_name}.log")), log_text.as_bytes())?;
    println!("{name}: {} topics, {} exchanges -> {}", plan.topics.len(), keys.len(), sidecar.display());
    Ok(())
}
