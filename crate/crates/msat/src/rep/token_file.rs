//! Plain-text token files: a one-line version header naming the scale, then
//! one event per line as six space-separated integer codes. Integers only,
//! bit-exact across platforms.

use thiserror::Error;

use super::events::{Event, Scale, ScaledSequence, NUM_FIELDS};
use super::vocab::VOCAB_SIZES;

const HEADER_PREFIX: &str = "msat-tokens v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenFileError {
    #[error("bad token file header: {0:?}")]
    BadHeader(String),
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
}

pub fn write_tokens(seq: &ScaledSequence) -> String {
    let mut out = String::new();
    out.push_str(HEADER_PREFIX);
    out.push(' ');
    out.push_str(seq.scale.name());
    out.push('\n');
    for e in &seq.events {
        let codes: Vec<String> = e.codes.iter().map(u16::to_string).collect();
        out.push_str(&codes.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_tokens(text: &str) -> Result<ScaledSequence, TokenFileError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| TokenFileError::BadHeader("empty file".to_string()))?;
    let scale = header
        .strip_prefix(HEADER_PREFIX)
        .map(str::trim)
        .and_then(Scale::from_name)
        .ok_or_else(|| TokenFileError::BadHeader(header.to_string()))?;

    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut codes = [0u16; NUM_FIELDS];
        let mut fields = line.split_whitespace();
        for (f, slot) in codes.iter_mut().enumerate() {
            let tok = fields.next().ok_or_else(|| TokenFileError::BadLine {
                line: i + 1,
                reason: format!("expected {NUM_FIELDS} codes, got {f}"),
            })?;
            let code: u16 = tok.parse().map_err(|_| TokenFileError::BadLine {
                line: i + 1,
                reason: format!("not an integer: {tok:?}"),
            })?;
            if usize::from(code) >= VOCAB_SIZES[f] {
                return Err(TokenFileError::BadLine {
                    line: i + 1,
                    reason: format!("code {code} out of range for field {f}"),
                });
            }
            *slot = code;
        }
        if fields.next().is_some() {
            return Err(TokenFileError::BadLine {
                line: i + 1,
                reason: format!("more than {NUM_FIELDS} codes"),
            });
        }
        events.push(Event { codes });
    }
    Ok(ScaledSequence::from_events(scale, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::{encode, serialize};
    use crate::midi::{CanonicalSong, Note, Track};

    fn sample() -> ScaledSequence {
        let song = CanonicalSong::from_tracks(vec![Track {
            program: 4,
            notes: vec![
                Note { beat: 0, position: 0, pitch: 60, duration: 12 },
                Note { beat: 2, position: 6, pitch: 67, duration: 24 },
            ],
        }]);
        serialize(&encode(&song), Scale::Bar)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let seq = sample();
        let text = write_tokens(&seq);
        assert!(text.starts_with("msat-tokens v1 bar\n"));
        let back = parse_tokens(&text).unwrap();
        assert_eq!(back.scale, seq.scale);
        assert_eq!(back.events, seq.events);
        assert_eq!(back.alignment, seq.alignment);
        assert_eq!(write_tokens(&back), text);
    }

    #[test]
    fn header_must_name_a_scale() {
        assert!(matches!(
            parse_tokens("msat-tokens v1 houseboat\n0 0 0 0 0 0\n"),
            Err(TokenFileError::BadHeader(_))
        ));
        assert!(matches!(
            parse_tokens("msat-tokens v2 note\n"),
            Err(TokenFileError::BadHeader(_))
        ));
    }

    #[test]
    fn short_and_out_of_range_lines_rejected() {
        assert_eq!(
            parse_tokens("msat-tokens v1 note\n0 0 0\n"),
            Err(TokenFileError::BadLine {
                line: 2,
                reason: "expected 6 codes, got 3".to_string()
            })
        );
        assert!(matches!(
            parse_tokens("msat-tokens v1 note\n9 0 0 0 0 0\n"),
            Err(TokenFileError::BadLine { line: 2, .. })
        ));
    }
}
