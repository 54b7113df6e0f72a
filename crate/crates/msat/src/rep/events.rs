//! Events, event lists, and the three scale serializations.

use thiserror::Error;

use super::vocab::{
    beat_code, duration_code, duration_from_code, instrument_code, pitch_code, position_code,
    snap_duration, NULL, VOCAB_SIZES,
};
use crate::midi::{CanonicalSong, Note, Track};

pub const NUM_FIELDS: usize = 6;

pub const FIELD_TYPE: usize = 0;
pub const FIELD_BEAT: usize = 1;
pub const FIELD_POSITION: usize = 2;
pub const FIELD_PITCH: usize = 3;
pub const FIELD_DURATION: usize = 4;
pub const FIELD_INSTRUMENT: usize = 5;

pub const TYPE_SOS: u16 = 0;
pub const TYPE_INSTRUMENT: u16 = 1;
pub const TYPE_SON: u16 = 2;
pub const TYPE_NOTE: u16 = 3;
pub const TYPE_EOS: u16 = 4;

/// One event as six integer codes in field order (type, beat, position,
/// pitch, duration, instrument). Structural events carry NULL in every value
/// field they do not use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub codes: [u16; NUM_FIELDS],
}

impl Event {
    pub fn sos() -> Self {
        Event { codes: [TYPE_SOS, NULL, NULL, NULL, NULL, NULL] }
    }

    pub fn son() -> Self {
        Event { codes: [TYPE_SON, NULL, NULL, NULL, NULL, NULL] }
    }

    pub fn eos() -> Self {
        Event { codes: [TYPE_EOS, NULL, NULL, NULL, NULL, NULL] }
    }

    pub fn instrument(program: u8) -> Self {
        Event { codes: [TYPE_INSTRUMENT, NULL, NULL, NULL, NULL, instrument_code(program)] }
    }

    pub fn note(beat: u16, position: u8, pitch: u8, duration: u16, program: u8) -> Self {
        Event {
            codes: [
                TYPE_NOTE,
                beat_code(beat),
                position_code(position),
                pitch_code(pitch),
                duration_code(duration),
                instrument_code(program),
            ],
        }
    }

    pub fn ty(&self) -> u16 {
        self.codes[FIELD_TYPE]
    }

    pub fn is_note(&self) -> bool {
        self.ty() == TYPE_NOTE
    }

    /// Beat value of a NOTE event.
    pub fn beat(&self) -> u16 {
        debug_assert!(self.is_note());
        self.codes[FIELD_BEAT] - 1
    }

    /// Bar index of a NOTE event (four beats per bar).
    pub fn bar(&self) -> u16 {
        self.beat() / 4
    }

    /// True when every code is in range and the NULL pattern matches the
    /// event type.
    pub fn is_valid(&self) -> bool {
        for (f, &code) in self.codes.iter().enumerate() {
            if usize::from(code) >= VOCAB_SIZES[f] {
                return false;
            }
        }
        let [_, beat, position, pitch, duration, instrument] = self.codes;
        match self.ty() {
            TYPE_SOS | TYPE_SON | TYPE_EOS => {
                [beat, position, pitch, duration, instrument].iter().all(|&c| c == NULL)
            }
            TYPE_INSTRUMENT => {
                [beat, position, pitch, duration].iter().all(|&c| c == NULL)
                    && instrument != NULL
            }
            TYPE_NOTE => {
                [beat, position, pitch, duration, instrument].iter().all(|&c| c != NULL)
            }
            _ => false,
        }
    }

    /// Sort key for the scale orders: (beat, position, program, pitch,
    /// duration) plus the coarse bar/track prefixes. Codes order the same way
    /// as values (every code map is monotone).
    fn note_key(&self) -> (u16, u16, u16, u16, u16) {
        let [_, beat, position, pitch, duration, instrument] = self.codes;
        (beat, position, instrument, pitch, duration)
    }
}

/// The canonical event sequence of one song:
/// SOS, one INSTRUMENT per track (ascending program), SON, NOTE events in
/// note-scale order, EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventList {
    pub events: Vec<Event>,
}

impl EventList {
    /// Index of the SON event; NOTE events occupy son_index()+1 .. len-1.
    pub fn son_index(&self) -> usize {
        self.events
            .iter()
            .position(|e| e.ty() == TYPE_SON)
            .expect("event list has no SON")
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn assert_valid(&self) {
        assert!(self.events.len() >= 3, "shorter than SOS/SON/EOS");
        assert_eq!(self.events[0].ty(), TYPE_SOS);
        assert_eq!(self.events.last().unwrap().ty(), TYPE_EOS);
        assert_eq!(self.events.iter().filter(|e| e.ty() == TYPE_SOS).count(), 1);
        assert_eq!(self.events.iter().filter(|e| e.ty() == TYPE_EOS).count(), 1);
        let son = self.son_index();
        for (i, e) in self.events.iter().enumerate() {
            assert!(e.is_valid(), "invalid event {e:?} at {i}");
            match e.ty() {
                TYPE_INSTRUMENT => assert!(i < son, "INSTRUMENT after SON"),
                TYPE_NOTE => assert!(i > son, "NOTE before SON"),
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    Note,
    Bar,
    Track,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Note, Scale::Bar, Scale::Track];

    pub fn name(&self) -> &'static str {
        match self {
            Scale::Note => "note",
            Scale::Bar => "bar",
            Scale::Track => "track",
        }
    }

    pub fn from_name(name: &str) -> Option<Scale> {
        Scale::ALL.into_iter().find(|s| s.name() == name)
    }

    /// The scale's total order over NOTE events, as a comparable key.
    pub(crate) fn sort_key(&self, e: &Event) -> (u16, u16, u16, u16, u16, u16) {
        let (beat, position, instrument, pitch, duration) = e.note_key();
        match self {
            Scale::Note => (beat, position, instrument, pitch, duration, 0),
            Scale::Bar => (e.bar(), instrument, beat, position, pitch, duration),
            Scale::Track => (instrument, beat, position, pitch, duration, 0),
        }
    }
}

/// An event sequence ordered for one scale. `alignment[k]` is the index in
/// the canonical [`EventList`] of the event at position k here; structural
/// events are fixed points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledSequence {
    pub scale: Scale,
    pub events: Vec<Event>,
    pub alignment: Vec<usize>,
}

impl ScaledSequence {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Rebuild a sequence (with its alignment) from bare events, e.g. a
    /// parsed token file or a generated prefix. The canonical position of
    /// each NOTE event is its rank under the note-scale order, ties broken by
    /// sequence position.
    pub fn from_events(scale: Scale, events: Vec<Event>) -> Self {
        let mut note_positions: Vec<usize> =
            (0..events.len()).filter(|&i| events[i].is_note()).collect();
        let first_note = note_positions.iter().copied().min().unwrap_or(events.len());
        note_positions.sort_by_key(|&i| (Scale::Note.sort_key(&events[i]), i));
        let mut alignment: Vec<usize> = (0..events.len()).collect();
        for (rank, &pos) in note_positions.iter().enumerate() {
            alignment[pos] = first_note + rank;
        }
        ScaledSequence { scale, events, alignment }
    }
}

/// Encode a song as its canonical event list.
pub fn encode(song: &CanonicalSong) -> EventList {
    song.assert_valid();
    let mut events = Vec::with_capacity(song.note_count() + song.tracks.len() + 3);
    events.push(Event::sos());
    for track in &song.tracks {
        events.push(Event::instrument(track.program));
    }
    events.push(Event::son());

    let mut notes: Vec<Event> = song
        .tracks
        .iter()
        .flat_map(|t| {
            t.notes.iter().map(|n| {
                Event::note(n.beat, n.position, n.pitch, snap_duration(n.duration), t.program)
            })
        })
        .collect();
    notes.sort_by_key(|e| e.note_key());
    events.extend(notes);
    events.push(Event::eos());

    let list = EventList { events };
    list.assert_valid();
    list
}

/// Reorder the NOTE events of a canonical list into the scale's total order,
/// recording where each event came from.
pub fn serialize(ev: &EventList, scale: Scale) -> ScaledSequence {
    let son = ev.son_index();
    let last = ev.len() - 1;

    let mut note_indices: Vec<usize> = (son + 1..last).collect();
    note_indices.sort_by_key(|&i| (scale.sort_key(&ev.events[i]), i));

    let mut events = Vec::with_capacity(ev.len());
    let mut alignment = Vec::with_capacity(ev.len());
    for i in 0..=son {
        events.push(ev.events[i]);
        alignment.push(i);
    }
    for &i in &note_indices {
        events.push(ev.events[i]);
        alignment.push(i);
    }
    events.push(ev.events[last]);
    alignment.push(last);

    ScaledSequence { scale, events, alignment }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MalformedSequence {
    #[error("sequence does not start with SOS")]
    MissingSos,
    #[error("sequence has no EOS")]
    MissingEos,
    #[error("NOTE event at position {0} before SON")]
    NoteBeforeSon(usize),
}

/// A decoded song plus diagnostics about what had to be discarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deserialized {
    pub song: CanonicalSong,
    /// NOTE events dropped for carrying an instrument absent from the header.
    pub dropped_notes: u32,
}

/// Rebuild a song from any scale's sequence. Duplicate (beat, position,
/// pitch) notes within an instrument keep the longest duration, mirroring
/// ingest.
pub fn deserialize(seq: &ScaledSequence) -> Result<Deserialized, MalformedSequence> {
    let events = &seq.events;
    if events.first().map(|e| e.ty()) != Some(TYPE_SOS) {
        return Err(MalformedSequence::MissingSos);
    }
    let eos = events
        .iter()
        .position(|e| e.ty() == TYPE_EOS)
        .ok_or(MalformedSequence::MissingEos)?;

    let mut programs: Vec<u8> = Vec::new();
    let mut seen_son = false;
    let mut notes: Vec<(u8, Note)> = Vec::new();
    let mut dropped = 0u32;

    for (i, e) in events[..eos].iter().enumerate() {
        match e.ty() {
            TYPE_INSTRUMENT => {
                let program = (e.codes[FIELD_INSTRUMENT] - 1) as u8;
                if !programs.contains(&program) {
                    programs.push(program);
                }
            }
            TYPE_SON => seen_son = true,
            TYPE_NOTE => {
                if !seen_son {
                    return Err(MalformedSequence::NoteBeforeSon(i));
                }
                let program = (e.codes[FIELD_INSTRUMENT] - 1) as u8;
                if !programs.contains(&program) {
                    dropped += 1;
                    continue;
                }
                notes.push((
                    program,
                    Note {
                        beat: e.codes[FIELD_BEAT] - 1,
                        position: (e.codes[FIELD_POSITION] - 1) as u8,
                        pitch: (e.codes[FIELD_PITCH] - 1) as u8,
                        duration: duration_from_code(e.codes[FIELD_DURATION]),
                    },
                ));
            }
            _ => {}
        }
    }

    programs.sort_unstable();
    notes.sort_by_key(|(p, n)| (*p, n.beat, n.position, n.pitch, n.duration));
    let mut tracks: Vec<Track> = programs
        .into_iter()
        .map(|program| Track { program, notes: Vec::new() })
        .collect();
    for (program, note) in notes {
        let track = tracks.iter_mut().find(|t| t.program == program).unwrap();
        match track.notes.last_mut() {
            Some(last)
                if (last.beat, last.position, last.pitch)
                    == (note.beat, note.position, note.pitch) =>
            {
                last.duration = last.duration.max(note.duration);
            }
            _ => track.notes.push(note),
        }
    }

    Ok(Deserialized { song: CanonicalSong::from_tracks(tracks), dropped_notes: dropped })
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("realign length mismatch: {actual} vectors for {expected} positions")]
pub struct LengthMismatch {
    pub expected: usize,
    pub actual: usize,
}

/// Reorder per-position vectors from one serialization's order to another's.
/// Output position j holds the vector of the event occupying position j in
/// the target ordering.
pub fn realign<T: Clone>(
    h: &[T],
    alignment: &[usize],
    target_alignment: &[usize],
) -> Result<Vec<T>, LengthMismatch> {
    if h.len() != alignment.len() || alignment.len() != target_alignment.len() {
        return Err(LengthMismatch { expected: target_alignment.len(), actual: h.len() });
    }
    let mut from_canonical = vec![usize::MAX; alignment.len()];
    for (pos, &canon) in alignment.iter().enumerate() {
        from_canonical[canon] = pos;
    }
    Ok(target_alignment.iter().map(|&canon| h[from_canonical[canon]].clone()).collect())
}
