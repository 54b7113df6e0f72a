//! MIDI ingestion: Standard MIDI File parsing and normalization into the
//! quantized, 4/4-only, pitched-instrument-only [`CanonicalSong`] that every
//! downstream stage consumes.

mod normalize;
mod smf;
mod song;

pub use normalize::{normalize, split_corpus, IngestError, NormalizeOptions, Rejection};
pub use smf::{parse_smf, song_to_smf, write_smf, SmfError};
pub use song::{CanonicalSong, Note, Track, SongJsonError, RESOLUTION};

/// A decoded Standard MIDI File: header fields plus per-track event lists and
/// the matched notes derived from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMidi {
    /// SMF format id (0 or 1).
    pub format: u16,
    /// Ticks per quarter note. Always > 0; SMPTE division is rejected at parse.
    pub division: u16,
    pub tracks: Vec<RawTrack>,
}

impl RawMidi {
    pub fn matched_note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }

    pub fn unmatched_note_ons(&self) -> u32 {
        self.tracks.iter().map(|t| t.unmatched_note_ons).sum()
    }
}

/// One MTrk chunk: the raw timed events plus the note-on/off pairs matched
/// while parsing (FIFO per channel+pitch; note-on with velocity 0 counts as
/// note-off).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawTrack {
    pub events: Vec<TimedEvent>,
    pub notes: Vec<RawNote>,
    /// Note-ons left open at end of track, dropped with this count.
    pub unmatched_note_ons: u32,
}

/// A channel or meta event with its absolute tick time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedEvent {
    pub tick: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8 },
    ProgramChange { channel: u8, program: u8 },
    TimeSignature { numerator: u8, denominator: u8 },
    /// Microseconds per quarter note. Parsed but discarded by normalization;
    /// the canonical representation is tempo-free.
    Tempo { us_per_quarter: u32 },
}

/// A matched note with absolute tick endpoints. `off_tick >= on_tick` always.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawNote {
    pub channel: u8,
    /// Program active on the note's channel at note-on time (default 0).
    pub program: u8,
    pub pitch: u8,
    pub on_tick: u64,
    pub off_tick: u64,
}
