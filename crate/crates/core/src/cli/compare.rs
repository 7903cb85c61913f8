use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use super::sample::{check_prand, load_prompts};
use super::settings::{BackendFlags, SamplingFlags, Settings};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::samplers::{sweep_depth, tree_summary, write_sweep_csv, Sampler};
use crate::select::mean_std;
use crate::types::{Method, SampleTree};

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Methods to compare, each optionally with its own budget: "rand,prs" or
    /// "rand:32,prs:32".
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    /// Histogram bins shared by all methods.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub sampling: SamplingFlags,
    #[command(flatten)]
    pub backend: BackendFlags,
}

fn parse_method_spec(spec: &str, default_n: usize) -> Result<(Method, usize)> {
    match spec.split_once(':') {
        None => Ok((spec.trim().parse()?, default_n)),
        Some((m, n)) => {
            let n = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad budget in method spec {spec:?}")))?;
            Ok((m.trim().parse()?, n))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PromptRow {
    pub prompt_id: String,
    pub best: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub n: usize,
    pub mean_top3: f64,
    pub mean_best: f64,
    pub std_best: f64,
    pub per_prompt: Vec<PromptRow>,
    /// Candidate counts per histogram bin.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub n: usize,
    pub prompts: usize,
    pub histogram_edges: Vec<f64>,
    pub methods: Vec<MethodReport>,
    /// Method names ordered by mean best reward, highest first.
    pub ranking: Vec<Method>,
}

/// Equal-width bins over `[lo, hi]`; the top edge is inclusive.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let b = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    counts
}

pub fn compare_report(runs: &[(Method, usize, Vec<SampleTree>)], bins: usize) -> Result<CompareReport> {
    if bins == 0 {
        return Err(Error::Config("--bins must be >= 1".into()));
    }
    let all: Vec<f64> = runs
        .iter()
        .flat_map(|(_, _, trees)| trees.iter().flat_map(|t| t.candidates()))
        .map(|c| c.scored_reward())
        .collect::<Result<_>>()?;
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();

    let mut methods = Vec::new();
    for (method, n, trees) in runs {
        let mut per_prompt = Vec::with_capacity(trees.len());
        for t in trees {
            let (best, top3) = tree_summary(t)?;
            per_prompt.push(PromptRow {
                prompt_id: t.prompt.id.clone(),
                best,
                top3,
            });
        }
        let bests: Vec<f64> = per_prompt.iter().map(|r| r.best).collect();
        let (mean_best, std_best) = mean_std(&bests);
        let mean_top3 = per_prompt.iter().map(|r| r.top3).sum::<f64>() / per_prompt.len() as f64;
        let rewards: Vec<f64> = trees
            .iter()
            .flat_map(|t| t.candidates())
            .filter_map(|c| c.reward)
            .collect();
        methods.push(MethodReport {
            method: *method,
            n: *n,
            mean_top3,
            mean_best,
            std_best,
            per_prompt,
            histogram: histogram(&rewards, lo, hi, bins),
        });
    }
    let mut ranking: Vec<&MethodReport> = methods.iter().collect();
    ranking.sort_by(|a, b| b.mean_best.total_cmp(&a.mean_best));
    Ok(CompareReport {
        n: runs[0].1,
        prompts: runs[0].2.len(),
        histogram_edges: edges,
        ranking: ranking.iter().map(|m| m.method).collect(),
        methods,
    })
}

fn report_csv(r: &CompareReport) -> String {
    let mut s = String::from("method,prompt_id,best,top3\n");
    for m in &r.methods {
        for p in &m.per_prompt {
            let _ = writeln!(s, "{},{},{},{}", m.method, p.prompt_id, p.best, p.top3);
        }
        let _ = writeln!(s, "{},ALL,{},{}", m.method, m.mean_best, m.mean_top3);
    }
    s
}

fn histogram_csv(r: &CompareReport) -> String {
    let mut s = String::from("method,bin_lo,bin_hi,count\n");
    for m in &r.methods {
        for (i, c) in m.histogram.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                m.method,
                r.histogram_edges[i],
                r.histogram_edges[i + 1],
                c
            );
        }
    }
    s
}

pub fn cmd_compare(mut settings: Settings, args: &CompareArgs) -> Result<Value> {
    settings.apply_sampling(&args.sampling);
    settings.apply_backend(&args.backend);
    let specs = args
        .methods
        .iter()
        .map(|s| parse_method_spec(s, settings.n))
        .collect::<Result<Vec<_>>>()?;
    if specs.len() < 2 {
        return Err(Error::Config("compare needs at least two methods".into()));
    }
    if specs.iter().any(|s| s.1 != specs[0].1) {
        let listed: Vec<String> = specs.iter().map(|(m, n)| format!("{m}={n}")).collect();
        return Err(Error::UnequalBudgets(listed.join(", ")));
    }
    let (prompts, _) = load_prompts(&args.prompts)?;
    for (m, _) in &specs {
        check_prand(*m, &prompts)?;
    }
    let templates = settings.templates()?;
    let generator = settings.generator()?;
    let reward = settings.reward_backend()?;
    let sampler = Sampler::new(&templates, generator.as_ref(), reward.as_ref());

    let mut runs = Vec::new();
    for &(method, n) in &specs {
        let mut s = settings.clone();
        s.method = method;
        s.n = n;
        if method != Method::Prs {
            s.schedule = None;
        }
        let cfg = s.sampling_config()?;
        let trees = settings.install(|| {
            sampler
                .run_all(&prompts, &cfg)
                .into_iter()
                .map(|r| r.map_err(|i| i.error))
                .collect::<Result<Vec<_>>>()
        })??;
        jsonl::write_jsonl(&args.out.join(format!("trees_{method}.jsonl")), &trees)?;
        runs.push((method, n, trees));
    }
    let report = compare_report(&runs, args.bins)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    jsonl::write_atomic(&args.out.join("compare.json"), text.as_bytes())?;
    jsonl::write_atomic(&args.out.join("compare.csv"), report_csv(&report).as_bytes())?;
    jsonl::write_atomic(&args.out.join("histogram.csv"), histogram_csv(&report).as_bytes())?;
    Ok(json!({
        "ranking": report.ranking,
        "methods": report.methods.iter().map(|m| json!({
            "method": m.method,
            "mean_top3": m.mean_top3,
            "mean_best": m.mean_best,
        })).collect::<Vec<_>>(),
    }))
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    /// Directory for sweep.csv; the table is also printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub depths: Vec<usize>,
    #[command(flatten)]
    pub sampling: SamplingFlags,
    #[command(flatten)]
    pub backend: BackendFlags,
}

pub fn cmd_sweep(mut settings: Settings, args: &SweepArgs) -> Result<Value> {
    settings.apply_sampling(&args.sampling);
    settings.apply_backend(&args.backend);
    settings.method = Method::Prs;
    settings.schedule = None;
    let base = settings.sampling_config()?;
    let (prompts, _) = load_prompts(&args.prompts)?;
    let templates = settings.templates()?;
    let generator = settings.generator()?;
    let reward = settings.reward_backend()?;
    let sampler = Sampler::new(&templates, generator.as_ref(), reward.as_ref());
    let rows = settings.install(|| sweep_depth(&sampler, &prompts, settings.n, &args.depths, &base))??;
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).expect("in-memory write");
    if let Some(out) = &args.out {
        jsonl::write_atomic(&out.join("sweep.csv"), &csv)?;
    }
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(json!({ "rows": rows }))
}
