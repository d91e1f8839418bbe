//! Text corpus format.
//!
//! One record per utterance: a header line
//! `id speaker gender nuisance rate T D words:<hex>` followed by `T` rows of
//! `D` whitespace-separated decimals. Values are written in shortest
//! round-trip form, so read-after-write is bit-exact. The companion speaker
//! table has one `speaker gender cluster` line per speaker.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{LabeledUtterance, SpeakerInfo, WordSet};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::moments::FrameSequence;

pub fn format_corpus(utts: &[LabeledUtterance]) -> String {
    let mut out = String::new();
    for u in utts {
        let (t, d) = (u.frames.len(), u.frames.dim());
        writeln!(
            out,
            "{} {} {} {} {} {} {} words:{:x}",
            u.id, u.speaker, u.gender, u.nuisance, u.rate, t, d, u.words
        )
        .unwrap();
        for row in u.frames.view().rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

fn field<T: std::str::FromStr>(tok: Option<&str>, name: &str, origin: &str, line: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(origin, line, format!("missing `{name}`")))?;
    tok.parse()
        .map_err(|_| Error::parse(origin, line, format!("bad `{name}` value `{tok}`")))
}

pub fn parse_corpus(text: &str, origin: &str) -> Result<Vec<LabeledUtterance>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let mut tok = header.split_whitespace();
        let id: String = field(tok.next(), "id", origin, ln)?;
        let speaker = field(tok.next(), "speaker", origin, ln)?;
        let gender = field(tok.next(), "gender", origin, ln)?;
        let nuisance = field(tok.next(), "nuisance", origin, ln)?;
        let rate = field(tok.next(), "rate", origin, ln)?;
        let t: usize = field(tok.next(), "T", origin, ln)?;
        let d: usize = field(tok.next(), "D", origin, ln)?;
        let words_tok = tok
            .next()
            .and_then(|w| w.strip_prefix("words:"))
            .ok_or_else(|| Error::parse(origin, ln, "missing `words:<hex>`"))?;
        let bits = u128::from_str_radix(words_tok, 16)
            .map_err(|_| Error::parse(origin, ln, format!("bad word bitset `{words_tok}`")))?;
        if tok.next().is_some() {
            return Err(Error::parse(origin, ln, "trailing fields in header"));
        }
        let mut data = Vec::with_capacity(t * d);
        for _ in 0..t {
            let (rl, row) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, ln, format!("utterance `{id}` is truncated")))?;
            let before = data.len();
            for v in row.split_whitespace() {
                data.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(origin, rl, format!("bad value `{v}`")))?,
                );
            }
            if data.len() - before != d {
                return Err(Error::parse(
                    origin,
                    rl,
                    format!("expected {d} values, found {}", data.len() - before),
                ));
            }
        }
        let frames = Array2::from_shape_vec((t, d), data)
            .map_err(|e| Error::parse(origin, ln, e.to_string()))?;
        let frames = FrameSequence::new(frames).map_err(|e| Error::parse(origin, ln, e.to_string()))?;
        out.push(LabeledUtterance {
            id,
            frames,
            speaker,
            gender,
            nuisance,
            rate,
            words: WordSet::from_bits(bits),
        });
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, utts: &[LabeledUtterance]) -> Result<()> {
    write_atomic(path, format_corpus(utts).as_bytes())
}

pub fn read_corpus(path: &Path) -> Result<Vec<LabeledUtterance>> {
    parse_corpus(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn write_speakers(path: &Path, speakers: &[SpeakerInfo]) -> Result<()> {
    let mut out = String::new();
    for (i, s) in speakers.iter().enumerate() {
        writeln!(out, "{i} {} {}", s.gender, s.cluster).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_speakers(path: &Path) -> Result<Vec<SpeakerInfo>> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut tok = line.split_whitespace();
        let idx: usize = field(tok.next(), "speaker", &origin, i + 1)?;
        if idx != out.len() {
            return Err(Error::parse(&origin, i + 1, "speakers must be listed in order"));
        }
        out.push(SpeakerInfo {
            gender: field(tok.next(), "gender", &origin, i + 1)?,
            cluster: field(tok.next(), "cluster", &origin, i + 1)?,
        });
    }
    Ok(out)
}
