//! Normalization of parsed MIDI into [`CanonicalSong`], and the deterministic
//! corpus split.
//!
//! A song survives normalization only if it is entirely in 4/4 (no
//! time-signature events counts as 4/4) and has at least one pitched note
//! left after the percussion channel is removed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::song::{MAX_BEATS, MAX_DURATION};
use super::{CanonicalSong, EventKind, Note, RawMidi, Track, RESOLUTION};
use crate::rep::snap_duration;

/// The General MIDI percussion channel (0-based).
const DRUM_CHANNEL: u8 = 9;

#[derive(Debug, Clone, Copy)]
pub struct NormalizeOptions {
    /// Songs longer than this many beats are truncated (notes starting at or
    /// after the cut dropped). At most [`MAX_BEATS`].
    pub max_beats: u16,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions { max_beats: MAX_BEATS }
    }
}

/// Why a song was dropped from the corpus. Rejections are expected data
/// conditions, not errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// Some time-signature event is not 4/4.
    NonCommonTime,
    /// Nothing left after removing percussion (or the file had no notes).
    NoPitchedNotes,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("corpus split needs at least 10 songs, got {0}")]
    TooFewSongs(usize),
}

/// Map an absolute tick to grid units (12 per beat), round half up.
/// Equivalent to round(tick * 12 / division) with .5 going up, in exact
/// integer arithmetic.
pub(crate) fn quantize_units(tick: u64, division: u16) -> u64 {
    let d = u64::from(division);
    (24 * tick + d) / (2 * d)
}

/// Reduce a parsed file to the canonical form: drums removed, 4/4 enforced,
/// onsets and durations quantized to the 12-per-beat grid, durations snapped
/// to the vocabulary table, duplicates resolved, tracks merged per program.
pub fn normalize(raw: &RawMidi, opts: NormalizeOptions) -> Result<CanonicalSong, Rejection> {
    assert!(opts.max_beats <= MAX_BEATS);

    for track in &raw.tracks {
        for ev in &track.events {
            if let EventKind::TimeSignature { numerator, denominator } = ev.kind {
                if (numerator, denominator) != (4, 4) {
                    return Err(Rejection::NonCommonTime);
                }
            }
        }
    }

    // (program, beat, position, pitch, duration) for every surviving note.
    let mut notes: Vec<(u8, u16, u8, u8, u16)> = Vec::new();
    for track in &raw.tracks {
        for n in &track.notes {
            if n.channel == DRUM_CHANNEL {
                continue;
            }
            let on = quantize_units(n.on_tick, raw.division);
            let off = quantize_units(n.off_tick, raw.division);
            let beat = on / u64::from(RESOLUTION);
            if beat >= u64::from(opts.max_beats) {
                continue;
            }
            let position = (on % u64::from(RESOLUTION)) as u8;
            let duration = (off - on).clamp(1, u64::from(MAX_DURATION)) as u16;
            notes.push((n.program, beat as u16, position, n.pitch, snap_duration(duration)));
        }
    }
    if notes.is_empty() {
        return Err(Rejection::NoPitchedNotes);
    }

    // Merge per program, then keep the longest duration per (beat, position,
    // pitch) within the merged track.
    notes.sort();
    let mut tracks: Vec<Track> = Vec::new();
    for (program, beat, position, pitch, duration) in notes {
        if tracks.last().map(|t| t.program) != Some(program) {
            tracks.push(Track { program, notes: Vec::new() });
        }
        let track_notes = &mut tracks.last_mut().unwrap().notes;
        let note = Note { beat, position, pitch, duration };
        match track_notes.last_mut() {
            Some(last) if (last.beat, last.position, last.pitch) == (beat, position, pitch) => {
                last.duration = last.duration.max(duration);
            }
            _ => track_notes.push(note),
        }
    }

    Ok(CanonicalSong::from_tracks(tracks))
}

/// Shuffle by seed and split 80/10/10 by count: validation and test each get
/// floor(n/10) songs, training gets the remainder.
pub fn split_corpus(
    songs: Vec<CanonicalSong>,
    seed: u64,
) -> Result<(Vec<CanonicalSong>, Vec<CanonicalSong>, Vec<CanonicalSong>), IngestError> {
    let n = songs.len();
    if n < 10 {
        return Err(IngestError::TooFewSongs(n));
    }
    let n_valid = n / 10;
    let n_test = n / 10;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = songs;
    shuffled.shuffle(&mut rng);

    let test = shuffled.split_off(n - n_test);
    let valid = shuffled.split_off(n - n_test - n_valid);
    Ok((shuffled, valid, test))
}
