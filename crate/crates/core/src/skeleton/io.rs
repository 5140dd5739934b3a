//! Line-delimited text format for datasets.
//!
//! ```text
//! SKEL1 <num_classes> <N> <T> <d>
//! <label> <subject_id> <sample_id> <N*T*d floats, joint-major, then frame, then coordinate>
//! ...
//! ```
//!
//! Floats are written with 17 significant digits so they parse back to the
//! identical double. Every line, including the last, ends with `\n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, SkeletonSequence, Split};
use crate::error::{Error, Result};

const MAGIC: &str = "SKEL1";

pub fn render(ds: &Dataset) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {} {} {} {}", ds.num_classes, ds.joints, ds.frames, ds.dims).unwrap();
    for s in &ds.sequences {
        write!(out, "{} {} {}", s.label, s.subject_id, s.sample_id).unwrap();
        for v in &s.features {
            write!(out, " {v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::write(path, render(ds))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let text = fs::read(path)?;
    let text = String::from_utf8(text).map_err(|e| Error::Parse {
        record: None,
        offset: e.utf8_error().valid_up_to(),
        msg: "file is not UTF-8".into(),
    })?;
    parse(&text, split)
}

fn parse_err(record: Option<usize>, offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        record,
        offset,
        msg: msg.into(),
    }
}

/// Whitespace-separated tokens of `line` with their absolute byte offsets.
fn tokens(line: &str, base: usize) -> impl Iterator<Item = (usize, &str)> {
    line.split_ascii_whitespace()
        .map(move |tok| (base + (tok.as_ptr() as usize - line.as_ptr() as usize), tok))
}

fn parse_usize(tok: Option<(usize, &str)>, record: Option<usize>, end: usize, what: &str) -> Result<usize> {
    let (off, t) = tok.ok_or_else(|| parse_err(record, end, format!("missing {what}")))?;
    t.parse().map_err(|_| parse_err(record, off, format!("invalid {what} {t:?}")))
}

pub fn parse(text: &str, split: Split) -> Result<Dataset> {
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(parse_err(None, text.len(), "truncated file: missing final newline"));
    }
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n').map(|l| {
        let start = offset;
        offset += l.len();
        (start, l.trim_end_matches('\n'))
    });

    let (hstart, header) = lines.next().ok_or_else(|| parse_err(None, 0, "empty file"))?;
    let hend = hstart + header.len();
    let mut toks = tokens(header, hstart);
    match toks.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(parse_err(None, hstart, format!("expected header starting with {MAGIC}"))),
    }
    let num_classes = parse_usize(toks.next(), None, hend, "num_classes")?;
    let joints = parse_usize(toks.next(), None, hend, "joint count")?;
    let frames = parse_usize(toks.next(), None, hend, "frame count")?;
    let dims = parse_usize(toks.next(), None, hend, "coordinate dimension")?;
    if let Some((off, _)) = toks.next() {
        return Err(parse_err(None, off, "trailing header fields"));
    }
    if num_classes == 0 || joints == 0 || frames == 0 || dims == 0 {
        return Err(parse_err(None, hstart, "header sizes must be positive"));
    }
    let width = joints * frames * dims;

    let mut sequences = Vec::new();
    for (index, (start, line)) in lines.enumerate() {
        let rec = Some(index);
        let end = start + line.len();
        let mut toks = tokens(line, start);
        let label = parse_usize(toks.next(), rec, end, "label")?;
        if label >= num_classes {
            return Err(parse_err(rec, start, format!("label {label} >= num_classes {num_classes}")));
        }
        let subject = parse_usize(toks.next(), rec, end, "subject_id")? as u64;
        let sample = parse_usize(toks.next(), rec, end, "sample_id")? as u64;
        let mut features = Vec::with_capacity(width);
        for (off, t) in toks {
            if features.len() == width {
                return Err(parse_err(rec, off, format!("more than {width} feature values")));
            }
            let v: f64 = t.parse().map_err(|_| parse_err(rec, off, format!("invalid float {t:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(rec, off, "non-finite feature value"));
            }
            features.push(v);
        }
        if features.len() != width {
            return Err(parse_err(
                rec,
                end,
                format!("truncated record: expected {width} values, found {}", features.len()),
            ));
        }
        let mut s = SkeletonSequence::new(joints, frames, dims, features, label)?;
        s.subject_id = subject;
        s.sample_id = sample;
        sequences.push(s);
    }
    Dataset::new(sequences, num_classes, (joints, frames, dims), split)
}
