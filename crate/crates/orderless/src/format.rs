//! Line-oriented text formats: datasets, checkpoints and probability matrices.
//!
//! All formats are UTF-8, one record per line, with `#` comment lines
//! allowed in matrix files only. Floats are written with Rust's shortest
//! round-trip representation, so save → load is lossless. See
//! `docs/formats.md` for the full grammar.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use orderless_core::{LabelVocabulary, ModelDims, ModelParameters, OrderingStrategy, SampleRecord};
use thiserror::Error;

pub const DATASET_MAGIC: &str = "orderless-dataset";
pub const CHECKPOINT_MAGIC: &str = "orderless-checkpoint";
pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A vocabulary with its samples, plus the generator seed when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: LabelVocabulary,
    pub samples: Vec<SampleRecord>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.global_feature.len())
    }

    pub fn cells(&self) -> usize {
        self.samples.first().map_or(0, |s| s.spatial_features.len())
    }
}

fn push_floats(out: &mut String, xs: &[f64]) {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{x}").unwrap();
    }
}

/// Renders the dataset text.
pub fn dataset_to_string(ds: &Dataset) -> Result<String, FormatError> {
    let dim = ds.feature_dim();
    let cells = ds.cells();
    let mut out = String::new();
    write!(
        out,
        "{DATASET_MAGIC} {FORMAT_VERSION} classes={} samples={} feature_dim={dim} cells={cells}",
        ds.vocab.n_classes(),
        ds.samples.len()
    )
    .unwrap();
    if let Some(seed) = ds.seed {
        write!(out, " seed={seed}").unwrap();
    }
    out.push('\n');
    for (i, (name, freq)) in ds.vocab.names().iter().zip(ds.vocab.frequencies()).enumerate() {
        if name.is_empty() || name.chars().any(char::is_whitespace) || name.starts_with('<') {
            return Err(FormatError::Invalid(format!("class name {name:?} cannot be written")));
        }
        writeln!(out, "class {i} {name} {freq}").unwrap();
    }
    for (i, s) in ds.samples.iter().enumerate() {
        if s.global_feature.len() != dim || s.spatial_features.len() != cells {
            return Err(FormatError::Invalid(format!("sample {i} has inconsistent feature shapes")));
        }
        let labels: Vec<String> = s.labels.iter().map(|l| l.to_string()).collect();
        write!(out, "sample {i} {} ; ", labels.join(",")).unwrap();
        push_floats(&mut out, &s.global_feature);
        out.push_str(" ;");
        for cell in &s.spatial_features {
            out.push(' ');
            push_floats(&mut out, cell);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<(), FormatError> {
    write_text(path, &dataset_to_string(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, FormatError> {
    parse_dataset(&read_text(path)?)
}

/// `key=value` fields of a header line.
fn header_fields<'a>(
    parts: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Vec<(&'a str, &'a str)>, FormatError> {
    parts
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected key=value, got {p:?}")))
        })
        .collect()
}

fn field<T: FromStr>(fields: &[(&str, &str)], key: &str, line: usize) -> Result<T, FormatError> {
    let (_, v) = fields
        .iter()
        .find(|(k, _)| *k == key)
        .ok_or_else(|| parse_err(line, format!("missing {key}=")))?;
    v.parse()
        .map_err(|_| parse_err(line, format!("bad value {v:?} for {key}")))
}

fn parse_num<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T, FormatError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("bad {what} {tok:?}")))
}

fn parse_floats(text: &str, line: usize) -> Result<Vec<f64>, FormatError> {
    text.split_whitespace()
        .map(|t| {
            let x: f64 = parse_num(t, line, "number")?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(parse_err(line, format!("non-finite number {t:?}")))
            }
        })
        .collect()
}

pub fn parse_dataset(text: &str) -> Result<Dataset, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(DATASET_MAGIC) {
        return Err(parse_err(ln, format!("expected {DATASET_MAGIC} header")));
    }
    match parts.next() {
        Some(FORMAT_VERSION) => {}
        other => return Err(parse_err(ln, format!("unsupported version {other:?}"))),
    }
    let fields = header_fields(parts, ln)?;
    let n_classes: usize = field(&fields, "classes", ln)?;
    let n_samples: usize = field(&fields, "samples", ln)?;
    let dim: usize = field(&fields, "feature_dim", ln)?;
    let cells: usize = field(&fields, "cells", ln)?;
    let seed = match fields.iter().any(|(k, _)| *k == "seed") {
        true => Some(field(&fields, "seed", ln)?),
        false => None,
    };

    let mut names = Vec::with_capacity(n_classes);
    let mut freqs = Vec::with_capacity(n_classes);
    for i in 0..n_classes {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(ln + i + 1, "truncated file: missing class line"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "class" {
            return Err(parse_err(ln, "expected `class <index> <name> <frequency>`"));
        }
        let idx: usize = parse_num(toks[1], ln, "class index")?;
        if idx != i {
            return Err(parse_err(ln, format!("class index {idx}, expected {i}")));
        }
        names.push(toks[2].to_string());
        freqs.push(parse_num(toks[3], ln, "frequency")?);
    }
    let vocab = LabelVocabulary::new(names, freqs).map_err(|e| FormatError::Invalid(e.to_string()))?;

    let mut samples = Vec::with_capacity(n_samples);
    let mut last = ln + n_classes;
    for i in 0..n_samples {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(last + 1, format!("truncated file: expected {n_samples} samples, found {i}")))?;
        last = ln;
        let mut sections = l.splitn(3, ';');
        let head = sections.next().unwrap_or("");
        let (global, spatial) = match (sections.next(), sections.next()) {
            (Some(g), Some(s)) => (g, s),
            _ => return Err(parse_err(ln, "expected `sample <i> <labels> ; <global> ; <spatial>`")),
        };
        let toks: Vec<&str> = head.split_whitespace().collect();
        if toks.len() != 3 || toks[0] != "sample" {
            return Err(parse_err(ln, "expected `sample <index> <labels>`"));
        }
        let idx: usize = parse_num(toks[1], ln, "sample index")?;
        if idx != i {
            return Err(parse_err(ln, format!("sample index {idx}, expected {i}")));
        }
        let labels = toks[2]
            .split(',')
            .map(|t| parse_num::<usize>(t, ln, "label"))
            .collect::<Result<Vec<_>, _>>()?;
        let global = parse_floats(global, ln)?;
        if global.len() != dim {
            return Err(parse_err(ln, format!("global feature has {} values, expected {dim}", global.len())));
        }
        let flat = parse_floats(spatial, ln)?;
        if flat.len() != dim * cells {
            return Err(parse_err(
                ln,
                format!("spatial grid has {} values, expected {}", flat.len(), dim * cells),
            ));
        }
        let spatial_features = if dim == 0 {
            vec![Vec::new(); cells]
        } else {
            flat.chunks(dim).map(<[f64]>::to_vec).collect()
        };
        let s = SampleRecord {
            global_feature: global,
            spatial_features,
            labels,
        };
        s.validate(n_classes).map_err(|m| parse_err(ln, m))?;
        samples.push(s);
    }
    if let Some((ln, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(ln, format!("unexpected trailing content {l:?}")));
    }
    // A cut inside the last record can still leave valid numbers.
    if !text.ends_with('\n') {
        return Err(parse_err(last, "truncated file: last record has no line end"));
    }
    Ok(Dataset { vocab, samples, seed })
}

/// Parameters with the training metadata stored next to them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParameters,
    pub strategy: Option<OrderingStrategy>,
    pub use_attention: bool,
}

pub fn checkpoint_to_string(ck: &Checkpoint) -> String {
    let d = ck.params.dims;
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC} {FORMAT_VERSION}").unwrap();
    writeln!(
        out,
        "dims n_classes={} hidden={} embed={} feature={} attention={}",
        d.n_classes, d.hidden, d.embed, d.feature, d.attention
    )
    .unwrap();
    let strategy = ck.strategy.map_or("none", |s| s.name());
    writeln!(out, "trained strategy={strategy} use_attention={}", ck.use_attention).unwrap();
    for ((name, rows, cols), values) in d.block_shapes().iter().zip(ck.params.blocks()) {
        writeln!(out, "block {name} {rows} {cols}").unwrap();
        push_floats(&mut out, values);
        out.push('\n');
    }
    out
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), FormatError> {
    write_text(path, &checkpoint_to_string(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, FormatError> {
    parse_checkpoint(&read_text(path)?)
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(0, format!("truncated checkpoint: missing {what}")))
    };
    let (ln, magic) = next("header")?;
    if magic.trim() != format!("{CHECKPOINT_MAGIC} {FORMAT_VERSION}") {
        return Err(parse_err(ln, format!("expected `{CHECKPOINT_MAGIC} {FORMAT_VERSION}`")));
    }
    let (ln, dims_line) = next("dims line")?;
    let mut parts = dims_line.split_whitespace();
    if parts.next() != Some("dims") {
        return Err(parse_err(ln, "expected dims line"));
    }
    let f = header_fields(parts, ln)?;
    let dims = ModelDims {
        n_classes: field(&f, "n_classes", ln)?,
        hidden: field(&f, "hidden", ln)?,
        embed: field(&f, "embed", ln)?,
        feature: field(&f, "feature", ln)?,
        attention: field(&f, "attention", ln)?,
    };
    let (ln, meta) = next("trained line")?;
    let mut parts = meta.split_whitespace();
    if parts.next() != Some("trained") {
        return Err(parse_err(ln, "expected trained line"));
    }
    let f = header_fields(parts, ln)?;
    let strategy_name: String = field(&f, "strategy", ln)?;
    let strategy = match strategy_name.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|e: orderless_core::alignment::UnknownStrategy| parse_err(ln, e.to_string()))?),
    };
    let use_attention: bool = field(&f, "use_attention", ln)?;

    let mut params = ModelParameters::zeros(dims);
    for ((name, rows, cols), block) in dims.block_shapes().into_iter().zip(params.blocks_mut()) {
        let (ln, head) = next("block header")?;
        let want = format!("block {name} {rows} {cols}");
        if head.split_whitespace().collect::<Vec<_>>().join(" ") != want {
            return Err(parse_err(ln, format!("expected `{want}`")));
        }
        let (ln, values) = next("block values")?;
        let values = parse_floats(values, ln)?;
        if values.len() != rows * cols {
            return Err(parse_err(ln, format!("block {name}: {} values, expected {}", values.len(), rows * cols)));
        }
        block.copy_from_slice(&values);
    }
    Ok(Checkpoint {
        params,
        strategy,
        use_attention,
    })
}

/// Per-step class distributions read for one-shot alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    /// Column names; the last column is the end token.
    pub classes: Vec<String>,
    /// One row per decoder step.
    pub steps: Vec<Vec<f64>>,
}

/// Parses a matrix file: optional `classes <names...>` line, optional
/// `costs` line (entries are `-log p` instead of probabilities), then one
/// whitespace-separated row per step. `#` starts a comment line.
pub fn parse_probability_table(text: &str) -> Result<ProbabilityTable, FormatError> {
    let mut classes: Option<Vec<String>> = None;
    let mut costs = false;
    let mut steps: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some(rest) = l.strip_prefix("classes") {
            if !steps.is_empty() || classes.is_some() {
                return Err(parse_err(ln, "classes line must come first and only once"));
            }
            let names: Vec<String> = rest.split_whitespace().map(String::from).collect();
            if names.len() < 2 {
                return Err(parse_err(ln, "need at least one class and the end token"));
            }
            width = Some(names.len());
            classes = Some(names);
            continue;
        }
        if l == "costs" {
            if !steps.is_empty() {
                return Err(parse_err(ln, "costs directive must precede the rows"));
            }
            costs = true;
            continue;
        }
        let mut row = parse_floats(l, ln)?;
        match width {
            Some(w) if w != row.len() => {
                return Err(parse_err(ln, format!("row has {} entries, expected {w}", row.len())))
            }
            None if row.len() < 2 => return Err(parse_err(ln, "row needs at least 2 entries")),
            _ => width = Some(row.len()),
        }
        if costs {
            row.iter_mut().for_each(|c| *c = (-*c).exp());
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(parse_err(ln, format!("row is not a probability distribution (sum {sum})")));
        }
        steps.push(row);
    }
    let width = width.ok_or_else(|| parse_err(text.lines().count().max(1), "no matrix rows"))?;
    if steps.is_empty() {
        return Err(parse_err(text.lines().count().max(1), "no matrix rows"));
    }
    let classes = classes.unwrap_or_else(|| {
        (0..width)
            .map(|i| if i + 1 == width { "<end>".into() } else { i.to_string() })
            .collect()
    });
    Ok(ProbabilityTable { classes, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use orderless_core::{generate, GeneratorConfig};

    fn tiny() -> Dataset {
        let (vocab, samples) = generate(&GeneratorConfig {
            n_classes: 5,
            n_samples: 7,
            labels_per_sample: (1, 3),
            correlation_pairs: vec![(0, 1, 0.5)],
            feature_dim: 3,
            grid_size: 2,
            ..GeneratorConfig::default()
        })
        .unwrap();
        Dataset { vocab, samples, seed: Some(42) }
    }

    #[test]
    fn dataset_round_trip() {
        let ds = tiny();
        let text = dataset_to_string(&ds).unwrap();
        assert_eq!(parse_dataset(&text).unwrap(), ds);
    }

    #[test]
    fn truncated_dataset_is_rejected() {
        let text = dataset_to_string(&tiny()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let cut = lines[..lines.len() - 2].join("\n");
        match parse_dataset(&cut) {
            Err(FormatError::Parse { line, message }) => {
                assert_eq!(line, lines.len() - 1);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        // A cut mid-line fails on that line.
        let half = &text[..text.len() - 20];
        let r = parse_dataset(half);
        assert!(matches!(r, Err(FormatError::Parse { line, .. }) if line == lines.len()), "{r:?}");
    }

    #[test]
    fn malformed_lines_name_their_line() {
        let mut text = dataset_to_string(&tiny()).unwrap();
        text = text.replacen("class 2 ", "klass 2 ", 1);
        assert!(matches!(parse_dataset(&text), Err(FormatError::Parse { line: 4, .. })));
        assert!(parse_dataset("hello v1").is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let dims = ModelDims { n_classes: 3, hidden: 4, embed: 2, feature: 3, attention: 2 };
        let ck = Checkpoint {
            params: ModelParameters::random(dims, 0.08, 5),
            strategy: Some(OrderingStrategy::Pla),
            use_attention: true,
        };
        let text = checkpoint_to_string(&ck);
        assert_eq!(parse_checkpoint(&text).unwrap(), ck);
        let broken = text.replace("block out_w", "block out_x");
        assert!(matches!(parse_checkpoint(&broken), Err(FormatError::Parse { .. })));
        let short: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(parse_checkpoint(&short).is_err());
    }

    #[test]
    fn probability_tables() {
        let t = parse_probability_table("# fig\nclasses A B end\n0.4 0.5 0.1\n0 0 1\n").unwrap();
        assert_eq!(t.classes, vec!["A", "B", "end"]);
        assert_eq!(t.steps.len(), 2);
        let c = parse_probability_table("costs\n0 1000\n").unwrap();
        assert_eq!(c.steps[0][0], 1.0);
        assert!(matches!(
            parse_probability_table("classes A end\n0.5 0.5\n0.5 x\n"),
            Err(FormatError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_probability_table("0.5 0.6\n"),
            Err(FormatError::Parse { line: 1, .. })
        ));
        assert!(parse_probability_table("# nothing\n").is_err());
    }
}
