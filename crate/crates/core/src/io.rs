//! Text file formats.
//!
//! Datasets and network stacks share one layout: `# key: value` header
//! lines, then one comma-separated block per timepoint introduced by
//! `@timepoint <t>` (1-based). Header keys the reader does not know are kept
//! as metadata and written back unchanged, which is how seeds and config
//! hashes travel with every artifact.
//!
//! ```text
//! # hmnem dataset
//! # n: 3
//! # m: 2
//! # timepoints: 2
//! # mode: binary
//! # alpha: 0.1
//! # beta: 0.1
//! # targets: 0 1 2
//! # columns: 0:0 1:0 2:0
//! @timepoint 1
//! 1,0,0
//! 0,1,1
//! @timepoint 2
//! ...
//! ```
//!
//! Traces are one header comment followed by a CSV table with columns
//! `iteration,lambda,log_joint,kappa_accepted`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::likelihood::{ColumnLabel, EffectDataset, ErrorRates, Observations};
use crate::posterior::ExpectedNetwork;
use crate::sampler::Trace;

pub type Meta = Vec<(String, String)>;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Block<'a> {
    line: usize,
    rows: Vec<(usize, Vec<&'a str>)>,
}

struct Parsed<'a> {
    header: Vec<(usize, String, String)>,
    blocks: Vec<Block<'a>>,
}

fn parse_blocks<'a>(path: &Path, text: &'a str, kind: &str) -> Result<Parsed<'a>> {
    let mut header = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    let mut saw_title = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if !blocks.is_empty() {
                return Err(parse_err(path, line_no, "header line after the first timepoint block"));
            }
            let rest = rest.trim();
            if !saw_title {
                if rest != format!("hmnem {kind}") {
                    return Err(parse_err(path, line_no, format!("expected '# hmnem {kind}'")));
                }
                saw_title = true;
                continue;
            }
            let (k, v) = rest
                .split_once(':')
                .ok_or_else(|| parse_err(path, line_no, "header lines must read '# key: value'"))?;
            header.push((line_no, k.trim().to_string(), v.trim().to_string()));
        } else if let Some(rest) = line.strip_prefix("@timepoint") {
            let t: usize = rest
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, "bad timepoint marker"))?;
            if t != blocks.len() + 1 {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected timepoint {}, found {t}", blocks.len() + 1),
                ));
            }
            blocks.push(Block {
                line: line_no,
                rows: Vec::new(),
            });
        } else {
            let block = blocks
                .last_mut()
                .ok_or_else(|| parse_err(path, line_no, "data row before any '@timepoint' marker"))?;
            block.rows.push((line_no, line.split(',').map(str::trim).collect()));
        }
    }
    if !saw_title {
        return Err(parse_err(path, 1, format!("empty file; expected '# hmnem {kind}'")));
    }
    Ok(Parsed { header, blocks })
}

struct Header<'p> {
    path: &'p Path,
    fields: Vec<(usize, String, String)>,
    used: Vec<bool>,
}

impl<'p> Header<'p> {
    fn new(path: &'p Path, fields: Vec<(usize, String, String)>) -> Self {
        let used = vec![false; fields.len()];
        Header { path, fields, used }
    }

    fn get(&mut self, key: &str) -> Option<(usize, String)> {
        let i = self.fields.iter().position(|(_, k, _)| k == key)?;
        self.used[i] = true;
        Some((self.fields[i].0, self.fields[i].2.clone()))
    }

    fn require(&mut self, key: &str) -> Result<(usize, String)> {
        self.get(key)
            .ok_or_else(|| parse_err(self.path, 1, format!("missing header field '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, v) = self.require(key)?;
        v.parse()
            .map_err(|_| parse_err(self.path, line, format!("cannot parse {key} value '{v}'")))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<(usize, Vec<T>)> {
        let (line, v) = self.require(key)?;
        let items = v
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| parse_err(self.path, line, format!("cannot parse '{s}' in {key}")))
            })
            .collect::<Result<Vec<T>>>()?;
        Ok((line, items))
    }

    fn rest(self) -> Meta {
        self.fields
            .into_iter()
            .zip(self.used)
            .filter(|(_, used)| !used)
            .map(|((_, k, v), _)| (k, v))
            .collect()
    }
}

fn write_meta(out: &mut String, meta: &[(String, String)]) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
}

/// Effect data for every timepoint plus pass-through header metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub timepoints: Vec<EffectDataset>,
    pub meta: Meta,
}

pub fn format_dataset(datasets: &[EffectDataset], meta: &[(String, String)]) -> Result<String> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::invalid("no timepoints to write"))?;
    let mut out = String::from("# hmnem dataset\n");
    let _ = writeln!(out, "# n: {}", first.n());
    let _ = writeln!(out, "# m: {}", first.m());
    let _ = writeln!(out, "# timepoints: {}", datasets.len());
    let _ = writeln!(out, "# mode: {}", first.observations().mode_name());
    if let Some(r) = first.rates() {
        let _ = writeln!(out, "# alpha: {}", r.alpha);
        let _ = writeln!(out, "# beta: {}", r.beta);
    }
    let targets: Vec<String> = first.targets().iter().map(|t| t.to_string()).collect();
    let _ = writeln!(out, "# targets: {}", targets.join(" "));
    let cols: Vec<String> = first
        .columns()
        .iter()
        .map(|c| format!("{}:{}", c.perturbation, c.replicate))
        .collect();
    let _ = writeln!(out, "# columns: {}", cols.join(" "));
    write_meta(&mut out, meta);
    for (t, ds) in datasets.iter().enumerate() {
        if ds.n() != first.n() || ds.columns() != first.columns() || ds.targets() != first.targets() {
            return Err(Error::shape(format!(
                "timepoint {} differs in design from timepoint 1",
                t + 1
            )));
        }
        let _ = writeln!(out, "@timepoint {}", t + 1);
        match ds.observations() {
            Observations::Binary { rows, .. } => {
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
            Observations::Probability { rows } => {
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, datasets: &[EffectDataset], meta: &[(String, String)]) -> Result<()> {
    write_text(path, &format_dataset(datasets, meta)?)
}

pub fn parse_dataset(path: &Path, text: &str) -> Result<DatasetFile> {
    let parsed = parse_blocks(path, text, "dataset")?;
    let mut h = Header::new(path, parsed.header);
    let n: usize = h.parse("n")?;
    let m: usize = h.parse("m")?;
    let t: usize = h.parse("timepoints")?;
    let (mode_line, mode) = h.require("mode")?;
    let rates = match mode.as_str() {
        "binary" => Some(ErrorRates::new(h.parse("alpha")?, h.parse("beta")?)?),
        "probability" => None,
        other => {
            return Err(parse_err(
                path,
                mode_line,
                format!("mode must be 'binary' or 'probability', got '{other}'"),
            ))
        }
    };
    let (_, targets) = h.list::<usize>("targets")?;
    let (col_line, col_text) = h.list::<String>("columns")?;
    let columns = col_text
        .iter()
        .map(|c| {
            let (p, r) = c.split_once(':').unwrap_or(("", ""));
            match (p.parse(), r.parse()) {
                (Ok(perturbation), Ok(replicate)) => Ok(ColumnLabel {
                    perturbation,
                    replicate,
                }),
                _ => Err(parse_err(
                    path,
                    col_line,
                    format!("column label '{c}' is not 'perturbation:replicate'"),
                )),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = h.rest();
    if parsed.blocks.len() != t {
        return Err(parse_err(
            path,
            text.lines().count().max(1),
            format!("header declares {t} timepoints, file has {}", parsed.blocks.len()),
        ));
    }
    let mut timepoints = Vec::with_capacity(t);
    for block in &parsed.blocks {
        if block.rows.len() != m {
            return Err(parse_err(
                path,
                block.line,
                format!("expected {m} reporter rows, found {}", block.rows.len()),
            ));
        }
        for (line, cells) in &block.rows {
            if cells.len() != columns.len() {
                return Err(parse_err(
                    path,
                    *line,
                    format!("expected {} columns, found {}", columns.len(), cells.len()),
                ));
            }
        }
        let ds = match rates {
            Some(rates) => {
                let rows = block
                    .rows
                    .iter()
                    .map(|(line, cells)| {
                        cells
                            .iter()
                            .map(|c| match *c {
                                "0" => Ok(0u8),
                                "1" => Ok(1u8),
                                other => Err(parse_err(path, *line, format!("binary cell '{other}' is not 0 or 1"))),
                            })
                            .collect::<Result<Vec<u8>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                EffectDataset::binary(n, targets.clone(), columns.clone(), rows, rates)
            }
            None => {
                let rows = block
                    .rows
                    .iter()
                    .map(|(line, cells)| {
                        cells
                            .iter()
                            .map(|c| {
                                c.parse::<f64>()
                                    .ok()
                                    .filter(|p| (0.0..=1.0).contains(p))
                                    .ok_or_else(|| parse_err(path, *line, format!("'{c}' is not a probability")))
                            })
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                EffectDataset::probability(n, targets.clone(), columns.clone(), rows)
            }
        }
        .map_err(|e| parse_err(path, block.line, e.to_string()))?;
        timepoints.push(ds);
    }
    Ok(DatasetFile { timepoints, meta })
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    parse_dataset(path, &read_text(path)?)
}

/// Reporter attachments as `reporter,component` rows under that header.
pub fn format_attachments(attachments: &[usize]) -> String {
    let mut out = String::from("reporter,component\n");
    for (i, j) in attachments.iter().enumerate() {
        let _ = writeln!(out, "{i},{j}");
    }
    out
}

pub fn parse_attachments(path: &Path, text: &str) -> Result<Vec<usize>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == "reporter,component" => {}
        Some((i, _)) => return Err(parse_err(path, i + 1, "expected header 'reporter,component'")),
        None => return Err(parse_err(path, 1, "empty attachment file")),
    }
    let mut out = Vec::new();
    for (i, l) in lines {
        let bad = || {
            parse_err(
                path,
                i + 1,
                format!("expected 'reporter,component', got '{}'", l.trim()),
            )
        };
        let (r, c) = l.trim().split_once(',').ok_or_else(bad)?;
        let (r, c): (usize, usize) = (
            r.trim().parse().map_err(|_| bad())?,
            c.trim().parse().map_err(|_| bad())?,
        );
        if r != out.len() {
            return Err(parse_err(
                path,
                i + 1,
                format!("reporters must be listed in order; expected {}", out.len()),
            ));
        }
        out.push(c);
    }
    Ok(out)
}

pub fn read_attachments(path: &Path) -> Result<Vec<usize>> {
    parse_attachments(path, &read_text(path)?)
}

fn format_stack(kind: &str, n: usize, mats: &[Vec<Vec<String>>], meta: &[(String, String)]) -> String {
    let mut out = format!("# hmnem {kind}\n# n: {n}\n# timepoints: {}\n", mats.len());
    write_meta(&mut out, meta);
    for (t, m) in mats.iter().enumerate() {
        let _ = writeln!(out, "@timepoint {}", t + 1);
        for row in m {
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn format_networks(networks: &[Network], meta: &[(String, String)]) -> Result<String> {
    let n = networks
        .first()
        .ok_or_else(|| Error::invalid("no networks to write"))?
        .n();
    let mats: Vec<Vec<Vec<String>>> = networks
        .iter()
        .map(|g| {
            g.to_matrix()
                .iter()
                .map(|r| r.iter().map(|v| v.to_string()).collect())
                .collect()
        })
        .collect();
    Ok(format_stack("networks", n, &mats, meta))
}

pub fn format_expected(en: &ExpectedNetwork, meta: &[(String, String)]) -> String {
    let mats: Vec<Vec<Vec<String>>> = (0..en.timepoints())
        .map(|t| {
            en.matrix(t)
                .iter()
                .map(|r| r.iter().map(|v| v.to_string()).collect())
                .collect()
        })
        .collect();
    format_stack("expected-network", en.n(), &mats, meta)
}

type Stack = (usize, Vec<Vec<Vec<f64>>>, Meta);

fn parse_stack(path: &Path, text: &str, kind: &str) -> Result<Stack> {
    let parsed = parse_blocks(path, text, kind)?;
    let mut h = Header::new(path, parsed.header);
    let n: usize = h.parse("n")?;
    let t: usize = h.parse("timepoints")?;
    let meta = h.rest();
    if parsed.blocks.len() != t {
        return Err(parse_err(
            path,
            text.lines().count().max(1),
            format!("header declares {t} timepoints, file has {}", parsed.blocks.len()),
        ));
    }
    let mut mats = Vec::with_capacity(t);
    for block in &parsed.blocks {
        if block.rows.len() != n {
            return Err(parse_err(
                path,
                block.line,
                format!("expected {n} rows, found {}", block.rows.len()),
            ));
        }
        let mut m = Vec::with_capacity(n);
        for (line, cells) in &block.rows {
            if cells.len() != n {
                return Err(parse_err(
                    path,
                    *line,
                    format!("expected {n} columns, found {}", cells.len()),
                ));
            }
            m.push(
                cells
                    .iter()
                    .map(|c| {
                        c.parse::<f64>()
                            .map_err(|_| parse_err(path, *line, format!("'{c}' is not a number")))
                    })
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        mats.push(m);
    }
    Ok((n, mats, meta))
}

pub fn parse_networks(path: &Path, text: &str) -> Result<(Vec<Network>, Meta)> {
    let (_, mats, meta) = parse_stack(path, text, "networks")?;
    let parsed = parse_blocks(path, text, "networks")?;
    let networks = mats
        .iter()
        .zip(&parsed.blocks)
        .map(|(m, block)| {
            let rows: Vec<Vec<u8>> = m
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|&v| {
                            if v == 1.0 {
                                1
                            } else if v == 0.0 {
                                0
                            } else {
                                2
                            }
                        })
                        .collect()
                })
                .collect();
            Network::from_matrix(&rows).map_err(|e| parse_err(path, block.line, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((networks, meta))
}

pub fn read_networks(path: &Path) -> Result<(Vec<Network>, Meta)> {
    parse_networks(path, &read_text(path)?)
}

pub fn parse_expected(path: &Path, text: &str) -> Result<(ExpectedNetwork, Meta)> {
    let (n, mats, meta) = parse_stack(path, text, "expected-network")?;
    let t = mats.len();
    let flat: Vec<f64> = mats.into_iter().flatten().flatten().collect();
    let en = ExpectedNetwork::from_means(t, n, flat).map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok((en, meta))
}

pub fn read_expected(path: &Path) -> Result<(ExpectedNetwork, Meta)> {
    parse_expected(path, &read_text(path)?)
}

/// Per-iteration trace records of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    pub chain: usize,
    pub seed: u64,
    pub config_hash: String,
    pub proposal_sd: f64,
    pub burn_in: usize,
    pub iterations: usize,
    pub lambda: Vec<f64>,
    pub log_joint: Vec<f64>,
    pub kappa_accepted: Vec<bool>,
}

impl TraceFile {
    pub fn from_trace(trace: &Trace, config_hash: &str) -> Self {
        TraceFile {
            chain: trace.chain,
            seed: trace.seed,
            config_hash: config_hash.to_string(),
            proposal_sd: trace.proposal_sd,
            burn_in: trace.burn_in,
            iterations: trace.iterations,
            lambda: trace.lambda.clone(),
            log_joint: trace.log_joint.clone(),
            kappa_accepted: trace.kappa_accepted.clone(),
        }
    }
}

const TRACE_COLUMNS: &str = "iteration,lambda,log_joint,kappa_accepted";

pub fn format_trace(tf: &TraceFile) -> String {
    let mut out = format!(
        "# chain={} seed={} config_hash={} sigma={} burn_in={} iterations={}\n{TRACE_COLUMNS}\n",
        tf.chain, tf.seed, tf.config_hash, tf.proposal_sd, tf.burn_in, tf.iterations
    );
    for i in 0..tf.lambda.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            tf.lambda[i],
            tf.log_joint[i],
            tf.kappa_accepted[i] as u8
        );
    }
    out
}

pub fn parse_trace(path: &Path, text: &str) -> Result<TraceFile> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_err(path, 1, "empty trace file"))?;
    let header = first
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, 1, "trace must start with a '# chain=… ' header"))?;
    let mut fields = std::collections::HashMap::new();
    for kv in header.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, format!("header entry '{kv}' is not key=value")))?;
        fields.insert(k, v);
    }
    fn field<T: std::str::FromStr>(
        path: &Path,
        fields: &std::collections::HashMap<&str, &str>,
        key: &str,
    ) -> Result<T> {
        fields
            .get(key)
            .ok_or_else(|| parse_err(path, 1, format!("trace header lacks '{key}'")))?
            .parse()
            .map_err(|_| parse_err(path, 1, format!("bad value for '{key}'")))
    }
    let mut tf = TraceFile {
        chain: field(path, &fields, "chain")?,
        seed: field(path, &fields, "seed")?,
        config_hash: field(path, &fields, "config_hash")?,
        proposal_sd: field(path, &fields, "sigma")?,
        burn_in: field(path, &fields, "burn_in")?,
        iterations: field(path, &fields, "iterations")?,
        lambda: Vec::new(),
        log_joint: Vec::new(),
        kappa_accepted: Vec::new(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == TRACE_COLUMNS => {}
        Some((i, _)) => {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected column header '{TRACE_COLUMNS}'"),
            ))
        }
        None => return Err(parse_err(path, 2, "trace has no column header")),
    }
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let cells: Vec<&str> = l.trim().split(',').collect();
        if cells.len() != 4 {
            return Err(parse_err(
                path,
                line,
                format!("expected 4 fields, found {}", cells.len()),
            ));
        }
        let iter: usize = cells[0].parse().map_err(|_| parse_err(path, line, "bad iteration"))?;
        if iter != tf.lambda.len() + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected iteration {}", tf.lambda.len() + 1),
            ));
        }
        tf.lambda
            .push(cells[1].parse().map_err(|_| parse_err(path, line, "bad lambda"))?);
        tf.log_joint
            .push(cells[2].parse().map_err(|_| parse_err(path, line, "bad log joint"))?);
        tf.kappa_accepted.push(match cells[3] {
            "1" => true,
            "0" => false,
            _ => return Err(parse_err(path, line, "kappa_accepted must be 0 or 1")),
        });
    }
    if tf.lambda.len() != tf.iterations {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!(
                "header declares {} iterations, found {}",
                tf.iterations,
                tf.lambda.len()
            ),
        ));
    }
    if tf.burn_in >= tf.iterations {
        return Err(parse_err(path, 1, "burn-in leaves no samples"));
    }
    Ok(tf)
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    parse_trace(path, &read_text(path)?)
}

/// Resolves `p` against `base` unless it is absolute.
pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
