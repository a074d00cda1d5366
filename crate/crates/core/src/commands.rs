//! The `simulate`, `infer`, `diagnose` and `summarize` pipelines.
//!
//! Each command takes a resolved [`RunConfig`] and an output directory,
//! writes its artifacts plus `manifest.toml`, and returns the list of files
//! it wrote (relative to the output directory).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{sha256_hex, Mode, RunConfig};
use crate::diagnostics::{ess, hpd_interval, network_metrics, psrf, rejection_rate, running_psrf};
use crate::error::{Error, Result};
use crate::io::{
    format_attachments, format_dataset, format_expected, format_networks, format_trace, read_attachments, read_dataset,
    read_expected, read_networks, read_text, read_trace, write_text, Meta, TraceFile,
};
use crate::posterior::expected_network;
use crate::sampler::{run_chains_parallel, TimeCourse};
use crate::simulator::{simulate, SimConfig};

pub const MANIFEST: &str = "manifest.toml";

/// Warnings emitted while running a command (printed by the binary).
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Writer {
            dir,
            outputs: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(&self.dir.join(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, cfg: &RunConfig, command: &str, inputs: BTreeMap<String, String>) -> Result<Vec<String>> {
        let manifest = cfg.manifest(command, self.outputs.clone(), inputs)?;
        write_text(&self.dir.join(MANIFEST), &manifest)?;
        self.outputs.push(MANIFEST.to_string());
        Ok(self.outputs)
    }
}

fn provenance_meta(cfg: &RunConfig) -> Result<Meta> {
    Ok(vec![
        ("seed".to_string(), cfg.seed.to_string()),
        ("config_hash".to_string(), cfg.hash()?),
    ])
}

fn comment_line(cfg: &RunConfig) -> Result<String> {
    Ok(format!("# seed={} config_hash={}\n", cfg.seed, cfg.hash()?))
}

fn hash_input(inputs: &mut BTreeMap<String, String>, given: &str) -> Result<PathBuf> {
    let path = PathBuf::from(given);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    inputs.insert(given.to_string(), sha256_hex(&bytes));
    Ok(path)
}

fn need<'c>(value: &'c Option<String>, what: &str, flag: &str) -> Result<&'c str> {
    value.as_deref().ok_or_else(|| {
        Error::invalid(format!(
            "no {what} given; set data.{flag} in the config or pass --{flag}"
        ))
    })
}

/// Writes noisy and clean data, truth networks and attachments.
///
/// Without a `[simulation]` section the default design is used and
/// recorded in the manifest.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    cfg.simulation.get_or_insert_with(SimConfig::default);
    let cfg = &cfg;
    let sim = cfg.simulation_config().expect("section filled in above");
    let truth = simulate(&sim)?;
    let meta = provenance_meta(cfg)?;
    let mut w = Writer::new(out);
    w.put("noisy.txt", &format_dataset(&truth.noisy_data, &meta)?)?;
    w.put("clean.txt", &format_dataset(&truth.clean_data, &meta)?)?;
    w.put("truth.txt", &format_networks(&truth.networks, &meta)?)?;
    w.put("attachments.csv", &format_attachments(&truth.attachments))?;
    Ok(Outcome {
        outputs: w.finish(cfg, "simulate", BTreeMap::new())?,
        warnings: Vec::new(),
    })
}

/// Runs the configured chains and writes traces, the overall expected
/// network and its binarisation.
pub fn cmd_infer(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut inputs = BTreeMap::new();
    let data_path = hash_input(&mut inputs, need(&cfg.data.dataset, "dataset", "dataset")?)?;
    let file = read_dataset(&data_path)?;
    let mode = match file.timepoints[0].observations().mode_name() {
        "binary" => Mode::Binary,
        _ => Mode::Probability,
    };
    if let Some(want) = cfg.data.mode {
        if want != mode {
            return Err(Error::ModeMismatch(format!(
                "--mode {} conflicts with the {} dataset in {}",
                want.name(),
                mode.name(),
                data_path.display()
            )));
        }
    }
    let mut datasets = file.timepoints;
    if let Some(att) = &cfg.data.attachments {
        let path = hash_input(&mut inputs, att)?;
        let map = read_attachments(&path)?;
        datasets = datasets
            .into_iter()
            .map(|d| d.with_attachments(map.clone()))
            .collect::<Result<_>>()?;
    } else if mode == Mode::Probability {
        return Err(Error::ModeMismatch(
            "probability-mode data needs an attachment map (--attachments)".into(),
        ));
    }

    let course = TimeCourse::new(&datasets)?;
    let sampler = cfg.sampler_config();
    let traces = run_chains_parallel(&sampler, &course, cfg.sampler.chains)?;
    let hash = cfg.hash()?;
    let meta = provenance_meta(cfg)?;
    let mut w = Writer::new(out);
    for tr in &traces {
        w.put(
            &format!("trace_{}.csv", tr.chain),
            &format_trace(&TraceFile::from_trace(tr, &hash)),
        )?;
    }
    let en = expected_network(&traces, sampler.burn_in)?;
    w.put("expected.txt", &format_expected(&en, &meta))?;
    w.put(
        "binarized.txt",
        &format_networks(&en.binarize(cfg.sampler.cutoff), &meta)?,
    )?;
    Ok(Outcome {
        outputs: w.finish(cfg, "infer", inputs)?,
        warnings: Vec::new(),
    })
}

/// Summary statistics of one group of chains that share a proposal width.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub proposal_sd: f64,
    pub chains: usize,
    pub posterior_mean: f64,
    pub ess: f64,
    pub rejection_rate: f64,
}

fn group_by_sigma(traces: &[TraceFile], burn_in: &dyn Fn(&TraceFile) -> usize) -> Result<Vec<GroupSummary>> {
    let mut sigmas: Vec<f64> = traces.iter().map(|t| t.proposal_sd).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    sigmas
        .into_iter()
        .map(|sd| {
            let group: Vec<&TraceFile> = traces.iter().filter(|t| t.proposal_sd == sd).collect();
            let (mut sum, mut count, mut ess_total, mut rejected, mut kept) = (0.0, 0usize, 0.0, 0usize, 0usize);
            for t in &group {
                let b = burn_in(t);
                sum += t.lambda[b..].iter().sum::<f64>();
                count += t.lambda.len() - b;
                ess_total += ess(&t.lambda, b)?.ess;
                let r = rejection_rate(&t.kappa_accepted, b);
                rejected += (r * (t.kappa_accepted.len() - b) as f64).round() as usize;
                kept += t.kappa_accepted.len() - b;
            }
            Ok(GroupSummary {
                proposal_sd: sd,
                chains: group.len(),
                posterior_mean: sum / count as f64,
                ess: ess_total,
                rejection_rate: rejected as f64 / kept as f64,
            })
        })
        .collect()
}

/// Per-chain and pooled convergence diagnostics of saved traces.
pub fn cmd_diagnose(cfg: &RunConfig, burn_in_override: Option<usize>, out: &Path) -> Result<Outcome> {
    if cfg.data.traces.is_empty() {
        return Err(Error::invalid("no trace files given"));
    }
    let mut inputs = BTreeMap::new();
    let mut traces = Vec::new();
    for given in &cfg.data.traces {
        let path = hash_input(&mut inputs, given)?;
        traces.push(read_trace(&path)?);
    }
    let burn_in = |t: &TraceFile| burn_in_override.unwrap_or(t.burn_in);
    for (t, given) in traces.iter().zip(&cfg.data.traces) {
        if burn_in(t) + 2 > t.iterations {
            return Err(Error::invalid(format!(
                "burn-in {} leaves fewer than 2 samples in {given}",
                burn_in(t)
            )));
        }
    }
    let coverage = cfg.diagnostics.coverage;
    let header = comment_line(cfg)?;
    let mut warnings = Vec::new();
    let mut w = Writer::new(out);

    let mut per_chain = header.clone();
    per_chain.push_str(
        "file,chain,sigma,iterations,burn_in,posterior_mean_lambda,ess_lambda,ess_log_joint,rejection_rate,\
         lambda_hpd_lower,lambda_hpd_upper,log_joint_hpd_lower,log_joint_hpd_upper\n",
    );
    for (t, given) in traces.iter().zip(&cfg.data.traces) {
        let b = burn_in(t);
        let kept = &t.lambda[b..];
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        let (lh, jh) = if kept.len() >= crate::diagnostics::HPD_MIN_SAMPLES {
            (
                Some(hpd_interval(kept, coverage)?),
                Some(hpd_interval(&t.log_joint[b..], coverage)?),
            )
        } else {
            warnings.push(format!("{given}: too few samples for HPD intervals"));
            (None, None)
        };
        let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            per_chain,
            "{given},{},{},{},{b},{mean},{},{},{},{},{},{},{}",
            t.chain,
            t.proposal_sd,
            t.iterations,
            ess(&t.lambda, b)?.ess,
            ess(&t.log_joint, b)?.ess,
            rejection_rate(&t.kappa_accepted, b),
            fmt(lh.map(|h| h.lower)),
            fmt(lh.map(|h| h.upper)),
            fmt(jh.map(|h| h.lower)),
            fmt(jh.map(|h| h.upper)),
        );
    }
    w.put("diagnostics.csv", &per_chain)?;

    let groups = group_by_sigma(&traces, &burn_in)?;
    let mut summary = header.clone();
    let _ = writeln!(
        summary,
        "{:>8} {:>7} {:>15} {:>10} {:>15}",
        "sigma", "chains", "posterior_mean", "ess", "rejection_rate"
    );
    for g in &groups {
        let _ = writeln!(
            summary,
            "{:>8} {:>7} {:>15.4} {:>10.0} {:>15.4}",
            g.proposal_sd, g.chains, g.posterior_mean, g.ess, g.rejection_rate
        );
    }

    if traces.len() < 2 {
        warnings.push("only one chain: potential scale reduction omitted".into());
    } else {
        let same_len = traces.iter().all(|t| t.iterations == traces[0].iterations);
        let b = burn_in(&traces[0]);
        let same_burn = traces.iter().all(|t| burn_in(t) == b);
        if !same_len || !same_burn {
            return Err(Error::shape(
                "potential scale reduction needs chains of equal length and burn-in",
            ));
        }
        let lambdas: Vec<&[f64]> = traces.iter().map(|t| t.lambda.as_slice()).collect();
        let joints: Vec<&[f64]> = traces.iter().map(|t| t.log_joint.as_slice()).collect();
        let pl = psrf(&lambdas, b)?;
        let pj = psrf(&joints, b)?;
        let mut table = header.clone();
        table.push_str("statistic,sqrt_r_hat,degenerate\n");
        let _ = writeln!(table, "lambda,{},{}", pl.sqrt_r_hat, pl.degenerate);
        let _ = writeln!(table, "log_joint,{},{}", pj.sqrt_r_hat, pj.degenerate);
        w.put("psrf.csv", &table)?;
        let _ = writeln!(
            summary,
            "sqrt_r_hat lambda {:.4} log_joint {:.4}",
            pl.sqrt_r_hat, pj.sqrt_r_hat
        );

        let kept = traces[0].iterations - b;
        let window = cfg.diagnostics.window.unwrap_or((kept / 10).max(2)).min(kept);
        let stride = cfg.diagnostics.stride.unwrap_or((window / 2).max(1));
        let rl = running_psrf(&lambdas, b, window, stride)?;
        let rj = running_psrf(&joints, b, window, stride)?;
        let mut running = header.clone();
        running.push_str("end_iteration,lambda,log_joint\n");
        for ((end, a), (_, j)) in rl.iter().zip(&rj) {
            let _ = writeln!(running, "{end},{},{}", a.sqrt_r_hat, j.sqrt_r_hat);
        }
        w.put("running_psrf.csv", &running)?;
    }
    w.put("summary.txt", &summary)?;
    Ok(Outcome {
        outputs: w.finish(cfg, "diagnose", inputs)?,
        warnings,
    })
}

/// Long-format heatmap table, binarised networks and, with a truth file,
/// recovery metrics.
pub fn cmd_summarize(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut inputs = BTreeMap::new();
    let path = hash_input(&mut inputs, need(&cfg.data.expected, "expected network", "expected")?)?;
    let (en, _) = read_expected(&path)?;
    let header = comment_line(cfg)?;
    let meta = provenance_meta(cfg)?;
    let mut w = Writer::new(out);

    let mut heat = header.clone();
    heat.push_str("t,from,to,mean\n");
    for t in 0..en.timepoints() {
        for r in 0..en.n() {
            for c in (0..en.n()).filter(|&c| c != r) {
                let _ = writeln!(heat, "{},{r},{c},{}", t + 1, en.get(t, r, c));
            }
        }
    }
    w.put("heatmap.csv", &heat)?;
    let binarized = en.binarize(cfg.sampler.cutoff);
    w.put("binarized.txt", &format_networks(&binarized, &meta)?)?;

    if let Some(truth) = &cfg.data.truth {
        let tpath = hash_input(&mut inputs, truth)?;
        let (truth_nets, _) = read_networks(&tpath)?;
        let m = network_metrics(&binarized, &truth_nets)?;
        let mut table = header;
        table.push_str("tp,tn,fp,fn,sensitivity,specificity,accuracy\n");
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            m.tp, m.tn, m.fp, m.fn_, m.sensitivity, m.specificity, m.accuracy
        );
        w.put("metrics.csv", &table)?;
    }
    Ok(Outcome {
        outputs: w.finish(cfg, "summarize", inputs)?,
        warnings: Vec::new(),
    })
}

/// Reads an optional config file; returns the config and its source text.
pub fn load_config(path: Option<&Path>) -> Result<(RunConfig, Option<String>)> {
    match path {
        Some(p) => {
            let text = read_text(p)?;
            Ok((RunConfig::parse(p, &text)?, Some(text)))
        }
        None => Ok((RunConfig::default(), None)),
    }
}
