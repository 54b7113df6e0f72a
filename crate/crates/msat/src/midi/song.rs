//! The canonical quantized song: tempo-free beat/position timing on a fixed
//! 12-positions-per-beat grid, one track per instrument program. This is the
//! interchange form every downstream stage consumes, stored as versioned JSON.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grid positions per beat. Divisible by 3 and 4, so triplets and sixteenths
/// both land on the grid.
pub const RESOLUTION: u8 = 12;

/// Longest representable note, in positions (8 bars of 4/4).
pub const MAX_DURATION: u16 = 384;

/// Songs are truncated to this many beats at ingest.
pub const MAX_BEATS: u16 = 256;

/// One quantized note. `duration` is measured in positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Note {
    pub beat: u16,
    pub position: u8,
    pub pitch: u8,
    pub duration: u16,
}

/// All notes for one General MIDI program, sorted by (beat, position, pitch)
/// with that triple unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Track {
    pub program: u8,
    pub notes: Vec<Note>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalSong {
    /// Positions per beat; always [`RESOLUTION`].
    pub resolution: u8,
    /// Total beats; every note starts strictly before this.
    pub length_beats: u16,
    /// Sorted by program ascending, at most one track per program.
    pub tracks: Vec<Track>,
}

impl CanonicalSong {
    pub fn new(tracks: Vec<Track>, length_beats: u16) -> Self {
        let song = CanonicalSong {
            resolution: RESOLUTION,
            length_beats,
            tracks,
        };
        song.assert_valid();
        song
    }

    /// Build a song whose length is computed from the notes themselves: the
    /// smallest beat count covering every onset and sounding tail, capped at
    /// [`MAX_BEATS`]. Ingest and deserialization both construct songs this
    /// way, so the two agree on length without storing it in token form.
    pub fn from_tracks(tracks: Vec<Track>) -> Self {
        let max_end = tracks
            .iter()
            .flat_map(|t| &t.notes)
            .map(|n| {
                u32::from(n.beat) * u32::from(RESOLUTION)
                    + u32::from(n.position)
                    + u32::from(n.duration)
            })
            .max()
            .unwrap_or(0);
        let beats = max_end.div_ceil(u32::from(RESOLUTION));
        Self::new(tracks, beats.min(u32::from(MAX_BEATS)) as u16)
    }

    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }

    /// Panics unless every type invariant holds. Cheap relative to anything
    /// that follows it, so called on every construction path.
    pub fn assert_valid(&self) {
        assert_eq!(self.resolution, RESOLUTION, "resolution is fixed");
        assert!(self.length_beats <= MAX_BEATS);
        for w in self.tracks.windows(2) {
            assert!(
                w[0].program < w[1].program,
                "tracks must be strictly ascending by program"
            );
        }
        for track in &self.tracks {
            assert!(track.program <= 127);
            for w in track.notes.windows(2) {
                let a = (w[0].beat, w[0].position, w[0].pitch);
                let b = (w[1].beat, w[1].position, w[1].pitch);
                assert!(a < b, "notes must be strictly sorted by (beat, position, pitch)");
            }
            for n in &track.notes {
                assert!(n.beat < self.length_beats, "note beat out of range");
                assert!(n.position < RESOLUTION);
                assert!(n.pitch <= 127);
                assert!(n.duration >= 1 && n.duration <= MAX_DURATION);
            }
        }
    }

    pub fn to_json(&self) -> String {
        let doc = SongDoc {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            resolution: self.resolution,
            length_beats: self.length_beats,
            tracks: self
                .tracks
                .iter()
                .map(|t| TrackDoc {
                    program: u16::from(t.program),
                    notes: t
                        .notes
                        .iter()
                        .map(|n| [n.beat, u16::from(n.position), u16::from(n.pitch), n.duration])
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("song serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, SongJsonError> {
        let doc: SongDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT_NAME {
            return Err(SongJsonError::WrongFormat(doc.format));
        }
        if doc.version != FORMAT_VERSION {
            return Err(SongJsonError::WrongVersion(doc.version));
        }
        if doc.resolution != RESOLUTION {
            return Err(SongJsonError::Invalid(format!(
                "resolution {} (expected {RESOLUTION})",
                doc.resolution
            )));
        }
        let mut tracks = Vec::with_capacity(doc.tracks.len());
        for t in doc.tracks {
            if t.program > 127 {
                return Err(SongJsonError::Invalid(format!("program {}", t.program)));
            }
            let mut notes = Vec::with_capacity(t.notes.len());
            for [beat, position, pitch, duration] in t.notes {
                if beat >= doc.length_beats
                    || position >= u16::from(RESOLUTION)
                    || pitch > 127
                    || duration == 0
                    || duration > MAX_DURATION
                {
                    return Err(SongJsonError::Invalid(format!(
                        "note [{beat}, {position}, {pitch}, {duration}]"
                    )));
                }
                notes.push(Note {
                    beat,
                    position: position as u8,
                    pitch: pitch as u8,
                    duration,
                });
            }
            for w in notes.windows(2) {
                let a = (w[0].beat, w[0].position, w[0].pitch);
                let b = (w[1].beat, w[1].position, w[1].pitch);
                if a >= b {
                    return Err(SongJsonError::Invalid(format!(
                        "unsorted or duplicate note at {b:?}"
                    )));
                }
            }
            tracks.push(Track {
                program: t.program as u8,
                notes,
            });
        }
        for w in tracks.windows(2) {
            if w[0].program >= w[1].program {
                return Err(SongJsonError::Invalid(format!(
                    "track order at program {}",
                    w[1].program
                )));
            }
        }
        if doc.length_beats > MAX_BEATS {
            return Err(SongJsonError::Invalid(format!(
                "length_beats {}",
                doc.length_beats
            )));
        }
        Ok(CanonicalSong {
            resolution: RESOLUTION,
            length_beats: doc.length_beats,
            tracks,
        })
    }
}

const FORMAT_NAME: &str = "canonical-song";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SongDoc {
    format: String,
    version: u32,
    resolution: u8,
    length_beats: u16,
    tracks: Vec<TrackDoc>,
}

#[derive(Serialize, Deserialize)]
struct TrackDoc {
    program: u16,
    /// Each note as [beat, position, pitch, duration].
    notes: Vec<[u16; 4]>,
}

#[derive(Debug, Error)]
pub enum SongJsonError {
    #[error("not a song document: format {0:?}")]
    WrongFormat(String),
    #[error("unsupported song document version {0}")]
    WrongVersion(u32),
    #[error("invalid song data: {0}")]
    Invalid(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}
