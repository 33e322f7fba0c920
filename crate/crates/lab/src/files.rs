//! File formats. Everything user-facing is 1-based: feature indices inside
//! family documents and `members` columns, and the `group_index` column in
//! score tables and reports. Conversion to the library's 0-based indexing
//! happens at the boundary, in this module.
//!
//! Writers are plain string assembly so outputs are byte-identical across
//! runs; floats go through Rust's shortest round-trip formatting.

use kelp_core::family::{FamilyError, HypothesisFamily, PartitionSpec};
use serde::Deserialize;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilesError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl FilesError {
    pub fn kind(&self) -> &'static str {
        match self {
            FilesError::Io { .. } => "io",
            FilesError::Format { .. } => "format",
        }
    }

    fn format(path: &Path, message: impl Into<String>) -> Self {
        FilesError::Format { path: path.display().to_string(), message: message.into() }
    }
}

fn read_file(path: &Path) -> Result<String, FilesError> {
    std::fs::read_to_string(path)
        .map_err(|source| FilesError::Io { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, content: &str) -> Result<(), FilesError> {
    std::fs::write(path, content)
        .map_err(|source| FilesError::Io { path: path.display().to_string(), source })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), FilesError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Machine-readable error report printed on validation failures.
pub fn error_report(kind: &str, message: &str) -> String {
    let value = serde_json::json!({ "error": { "kind": kind, "message": message } });
    let mut text = serde_json::to_string_pretty(&value).expect("error report serializes");
    text.push('\n');
    text
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyDoc {
    p: usize,
    resolutions: Vec<ResolutionDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolutionDoc {
    id: String,
    /// Groups of 1-based feature indices.
    groups: Vec<Vec<usize>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

/// Family document: `{"p": N, "resolutions": [{"id", "groups", "weights"?}]}`
/// with 1-based feature indices; partition invariants are checked after
/// conversion and reported with the offending location.
pub fn load_family(path: &Path) -> Result<HypothesisFamily, FilesError> {
    load_family_opts(path, true)
}

/// As `load_family`; with `honor_weights` false any document weights are
/// dropped so every group falls back to inverse size.
pub fn load_family_opts(path: &Path, honor_weights: bool) -> Result<HypothesisFamily, FilesError> {
    let text = read_file(path)?;
    let doc: FamilyDoc = serde_json::from_str(&text)
        .map_err(|e| FilesError::format(path, format!("family document: {e}")))?;
    if doc.resolutions.is_empty() {
        return Err(FilesError::format(path, "family document: resolutions is empty"));
    }
    let mut specs = Vec::with_capacity(doc.resolutions.len());
    for (m, res) in doc.resolutions.iter().enumerate() {
        let mut groups = Vec::with_capacity(res.groups.len());
        for (g, members) in res.groups.iter().enumerate() {
            let mut converted = Vec::with_capacity(members.len());
            for &j in members {
                if j == 0 || j > doc.p {
                    return Err(FilesError::format(
                        path,
                        format!(
                            "resolutions[{m}].groups[{g}]: feature index {j} is outside 1..={}",
                            doc.p
                        ),
                    ));
                }
                converted.push(j - 1);
            }
            groups.push(converted);
        }
        let mut spec = PartitionSpec::new(res.id.clone(), groups);
        if let Some(weights) = res.weights.as_ref().filter(|_| honor_weights) {
            if weights.len() != res.groups.len() {
                return Err(FilesError::format(
                    path,
                    format!(
                        "resolutions[{m}].weights: {} weights for {} groups",
                        weights.len(),
                        res.groups.len()
                    ),
                ));
            }
            if let Some(&w) = weights.iter().find(|&&w| !(w > 0.0) || !w.is_finite()) {
                return Err(FilesError::format(
                    path,
                    format!("resolutions[{m}].weights: weight {w} is not positive and finite"),
                ));
            }
            spec = spec.with_weights(weights.clone());
        }
        specs.push(spec);
    }
    HypothesisFamily::new(doc.p, specs)
        .map_err(|e| FilesError::format(path, family_error_message(&e)))
}

/// Core family errors carry zero-based positions; the file format is
/// one-based, so shift before showing them to the user.
fn family_error_message(e: &FamilyError) -> String {
    match e {
        FamilyError::Overlap { partition, index, group_a, group_b } => format!(
            "resolution '{partition}': feature {} is in both group {} and group {}",
            index + 1,
            group_a + 1,
            group_b + 1
        ),
        FamilyError::CoverageGap { partition, index } => format!(
            "resolution '{partition}': feature {} is in no group",
            index + 1
        ),
        FamilyError::EmptyGroup { partition, group } => {
            format!("resolution '{partition}': group {} is empty", group + 1)
        }
        FamilyError::SingletonConvention { partition, group } => format!(
            "resolution '{partition}': group {} is not a singleton",
            group + 1
        ),
        FamilyError::InvalidWeight { partition, group } => format!(
            "resolution '{partition}': group {} has a nonpositive weight",
            group + 1
        ),
        other => format!("family invariants: {other}"),
    }
}

/// Score table: CSV with header `resolution_id,group_index,<value_col>`,
/// 1-based group indices, every family group present exactly once.
pub fn load_scores(
    path: &Path,
    family: &HypothesisFamily,
    value_col: &str,
) -> Result<Vec<Vec<f64>>, FilesError> {
    let text = read_file(path)?;
    if text.trim().is_empty() {
        return Err(FilesError::format(path, "no scores"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| FilesError::format(path, format!("header: {e}")))?
        .clone();
    let expected = ["resolution_id", "group_index", value_col];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(FilesError::format(
            path,
            format!(
                "header must be exactly `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let resolution_of: HashMap<&str, usize> = (0..family.n_resolutions())
        .map(|m| (family.partition(m).id(), m))
        .collect();
    let mut values: Vec<Vec<Option<f64>>> = (0..family.n_resolutions())
        .map(|m| vec![None; family.partition(m).len()])
        .collect();
    let mut any_record = false;
    for (i, record) in reader.records().enumerate() {
        any_record = true;
        let line = i + 2;
        let record = record.map_err(|e| FilesError::format(path, format!("line {line}: {e}")))?;
        if record.len() != 3 {
            return Err(FilesError::format(
                path,
                format!("line {line}: expected 3 fields, found {}", record.len()),
            ));
        }
        let &m = resolution_of.get(&record[0]).ok_or_else(|| {
            FilesError::format(
                path,
                format!("line {line}: unknown resolution_id `{}`", &record[0]),
            )
        })?;
        let g: usize = record[1].parse().map_err(|_| {
            FilesError::format(path, format!("line {line}: bad group_index `{}`", &record[1]))
        })?;
        let len = family.partition(m).len();
        if g == 0 || g > len {
            return Err(FilesError::format(
                path,
                format!("line {line}: group_index {g} is outside 1..={len} for `{}`", &record[0]),
            ));
        }
        let v: f64 = record[2].parse().map_err(|_| {
            FilesError::format(path, format!("line {line}: bad {value_col} `{}`", &record[2]))
        })?;
        let slot = &mut values[m][g - 1];
        if slot.is_some() {
            return Err(FilesError::format(
                path,
                format!("line {line}: duplicate entry for ({}, {g})", &record[0]),
            ));
        }
        *slot = Some(v);
    }
    if !any_record {
        return Err(FilesError::format(path, "no scores"));
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, column) in values.into_iter().enumerate() {
        let mut filled = Vec::with_capacity(column.len());
        for (g, v) in column.into_iter().enumerate() {
            match v {
                Some(v) => filled.push(v),
                None => {
                    return Err(FilesError::format(
                        path,
                        format!(
                            "missing entry for ({}, {})",
                            family.partition(m).id(),
                            g + 1
                        ),
                    ))
                }
            }
        }
        out.push(filled);
    }
    Ok(out)
}

/// Rejection report rows: sorted by (resolution, group), members joined with
/// `;`, all indices 1-based.
pub fn rejections_csv(
    family: &HypothesisFamily,
    rejected: &[kelp_core::family::GroupRef],
    evalue_of: impl Fn(kelp_core::family::GroupRef) -> f64,
) -> String {
    let mut sorted = rejected.to_vec();
    sorted.sort_by_key(|gref| (gref.resolution, gref.group));
    let mut out = String::from("resolution_id,group_index,members,evalue,weight\n");
    for gref in sorted {
        let members = family
            .members(gref)
            .iter()
            .map(|&j| (j + 1).to_string())
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            family.partition(gref.resolution).id(),
            gref.group + 1,
            members,
            evalue_of(gref),
            family.weight(gref),
        );
    }
    out
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn replicates_csv(rows: &[crate::simlab::MetricsRow]) -> String {
    let mut out = String::from(
        "n_over_p,replicate,method,fdp,power,size,precision,mean_group_size,realized_snr,seed\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n_over_p,
            r.replicate,
            r.method,
            r.fdp,
            r.power,
            r.size,
            opt_cell(r.precision),
            opt_cell(r.mean_group_size),
            r.realized_snr,
            r.seed,
        );
    }
    out
}

pub fn summary_csv(rows: &[crate::simlab::SummaryRow]) -> String {
    let mut out = String::from("method,n_over_p,metric,mean,se\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.method, r.n_over_p, r.metric, r.mean, r.se);
    }
    out
}

pub fn failures_csv(failures: &[crate::simlab::FailureRecord]) -> String {
    let mut out = String::from("n_over_p,replicate,error\n");
    for f in failures {
        let escaped = f.error.replace('"', "\"\"");
        let _ = writeln!(out, "{},{},\"{}\"", f.n_over_p, f.replicate, escaped);
    }
    out
}
