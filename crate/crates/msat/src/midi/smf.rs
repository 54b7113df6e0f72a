//! Standard MIDI File reader and writer.
//!
//! Reads format 0/1 files with tick-based division: chunk grammar, running
//! status, variable-length quantities, meta events. Unknown chunk types are
//! skipped per the SMF spec. The writer serializes a [`RawMidi`] back to bytes
//! (used to check that parse→write→parse preserves the matched notes) and
//! [`song_to_smf`] renders a [`CanonicalSong`] so generated output is
//! auditionable.

use std::collections::HashMap;

use thiserror::Error;

use super::{CanonicalSong, EventKind, RawMidi, RawNote, RawTrack, TimedEvent, RESOLUTION};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmfError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("SMPTE division is not supported")]
    SmpteDivisionUnsupported,
    #[error("truncated chunk: {0}")]
    TruncatedChunk(String),
    #[error("variable-length quantity longer than 4 bytes")]
    VlqOverflow,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], SmfError> {
        if self.remaining() < n {
            return Err(SmfError::TruncatedChunk(what.to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, SmfError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, SmfError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, SmfError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most 4 bytes.
    fn vlq(&mut self) -> Result<u32, SmfError> {
        let mut value: u32 = 0;
        for i in 0.. {
            if i == 4 {
                return Err(SmfError::VlqOverflow);
            }
            let b = self.u8("vlq")?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                break;
            }
        }
        Ok(value)
    }
}

/// Parse a Standard MIDI File.
///
/// Running status is handled, note-on with velocity 0 is treated as note-off,
/// and note-ons left unmatched at end of track are dropped (counted in
/// [`RawTrack::unmatched_note_ons`]).
pub fn parse_smf(bytes: &[u8]) -> Result<RawMidi, SmfError> {
    let mut r = Reader::new(bytes);
    let tag = r.take(4, "header tag")?;
    if tag != b"MThd" {
        return Err(SmfError::MalformedHeader(format!(
            "expected chunk tag MThd, got {:?}",
            String::from_utf8_lossy(tag)
        )));
    }
    let len = r.u32("header length")?;
    if len != 6 {
        return Err(SmfError::MalformedHeader(format!(
            "header length {len}, expected 6"
        )));
    }
    let format = r.u16("format")?;
    if format > 1 {
        return Err(SmfError::MalformedHeader(format!(
            "format {format} not supported (only 0 and 1)"
        )));
    }
    let n_tracks = r.u16("track count")?;
    let division_raw = r.u16("division")?;
    if division_raw & 0x8000 != 0 {
        return Err(SmfError::SmpteDivisionUnsupported);
    }
    if division_raw == 0 {
        return Err(SmfError::MalformedHeader("division is zero".to_string()));
    }

    let mut tracks = Vec::new();
    while tracks.len() < usize::from(n_tracks) {
        if r.remaining() == 0 {
            return Err(SmfError::TruncatedChunk(format!(
                "expected {n_tracks} tracks, file ended after {}",
                tracks.len()
            )));
        }
        let tag = r.take(4, "chunk tag")?;
        let len = r.u32("chunk length")? as usize;
        let body = r.take(len, "chunk body")?;
        if tag == b"MTrk" {
            tracks.push(parse_track(body)?);
        }
        // Unknown chunk types are skipped.
    }
    Ok(RawMidi {
        format,
        division: division_raw,
        tracks,
    })
}

fn parse_track(body: &[u8]) -> Result<RawTrack, SmfError> {
    let mut r = Reader::new(body);
    let mut events = Vec::new();
    let mut tick: u64 = 0;
    let mut running_status: Option<u8> = None;

    while r.remaining() > 0 {
        tick += u64::from(r.vlq()?);
        let first = r.u8("event status")?;
        let status = if first & 0x80 != 0 {
            if first < 0xf0 {
                running_status = Some(first);
            }
            first
        } else {
            // Data byte: reuse running status and unread the byte.
            r.pos -= 1;
            running_status.ok_or_else(|| {
                SmfError::TruncatedChunk("data byte with no running status".to_string())
            })?
        };

        match status {
            0xff => {
                let meta_type = r.u8("meta type")?;
                let len = r.vlq()? as usize;
                let data = r.take(len, "meta data")?;
                match meta_type {
                    0x58 if len >= 2 => events.push(TimedEvent {
                        tick,
                        kind: EventKind::TimeSignature {
                            numerator: data[0],
                            // Stored as a power of two in the file.
                            denominator: 1u8.checked_shl(u32::from(data[1])).unwrap_or(255),
                        },
                    }),
                    0x51 if len >= 3 => events.push(TimedEvent {
                        tick,
                        kind: EventKind::Tempo {
                            us_per_quarter: u32::from(data[0]) << 16
                                | u32::from(data[1]) << 8
                                | u32::from(data[2]),
                        },
                    }),
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                let len = r.vlq()? as usize;
                r.take(len, "sysex data")?;
            }
            _ => {
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x80 => {
                        let pitch = r.u8("note-off pitch")? & 0x7f;
                        let _velocity = r.u8("note-off velocity")?;
                        events.push(TimedEvent {
                            tick,
                            kind: EventKind::NoteOff { channel, pitch },
                        });
                    }
                    0x90 => {
                        let pitch = r.u8("note-on pitch")? & 0x7f;
                        let velocity = r.u8("note-on velocity")? & 0x7f;
                        let kind = if velocity == 0 {
                            EventKind::NoteOff { channel, pitch }
                        } else {
                            EventKind::NoteOn {
                                channel,
                                pitch,
                                velocity,
                            }
                        };
                        events.push(TimedEvent { tick, kind });
                    }
                    0xc0 => {
                        let program = r.u8("program")? & 0x7f;
                        events.push(TimedEvent {
                            tick,
                            kind: EventKind::ProgramChange { channel, program },
                        });
                    }
                    // Two data bytes: aftertouch, controller, pitch bend.
                    0xa0 | 0xb0 | 0xe0 => {
                        r.take(2, "channel event data")?;
                    }
                    // One data byte: channel pressure.
                    0xd0 => {
                        r.take(1, "channel event data")?;
                    }
                    _ => {
                        return Err(SmfError::TruncatedChunk(format!(
                            "unexpected status byte {status:#04x}"
                        )))
                    }
                }
            }
        }
    }

    let (notes, unmatched) = match_notes(&events);
    Ok(RawTrack {
        events,
        notes,
        unmatched_note_ons: unmatched,
    })
}

/// Pair note-ons with note-offs, FIFO per (channel, pitch). Returns matched
/// notes (sorted by on-tick, then channel/pitch) and the count of note-ons
/// that never saw an off.
fn match_notes(events: &[TimedEvent]) -> (Vec<RawNote>, u32) {
    let mut program: [u8; 16] = [0; 16];
    let mut open: HashMap<(u8, u8), Vec<(u64, u8)>> = HashMap::new();
    let mut notes = Vec::new();

    for ev in events {
        match ev.kind {
            EventKind::ProgramChange { channel, program: p } => {
                program[usize::from(channel & 0x0f)] = p;
            }
            EventKind::NoteOn {
                channel, pitch, ..
            } => {
                open.entry((channel, pitch))
                    .or_default()
                    .push((ev.tick, program[usize::from(channel & 0x0f)]));
            }
            EventKind::NoteOff { channel, pitch } => {
                if let Some(queue) = open.get_mut(&(channel, pitch)) {
                    if !queue.is_empty() {
                        let (on_tick, prog) = queue.remove(0);
                        notes.push(RawNote {
                            channel,
                            program: prog,
                            pitch,
                            on_tick,
                            off_tick: ev.tick,
                        });
                    }
                }
            }
            _ => {}
        }
    }

    let unmatched = open.values().map(|q| q.len() as u32).sum();
    notes.sort_by_key(|n| (n.on_tick, n.channel, n.pitch, n.off_tick));
    (notes, unmatched)
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 4];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        value >>= 7;
        n += 1;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let mut b = stack[i];
        if i > 0 {
            b |= 0x80;
        }
        out.push(b);
    }
}

/// Serialize a [`RawMidi`] back to SMF bytes. Event streams are written as
/// stored, without running status.
pub fn write_smf(raw: &RawMidi) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&raw.format.to_be_bytes());
    out.extend_from_slice(&(raw.tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&raw.division.to_be_bytes());

    for track in &raw.tracks {
        let mut body = Vec::new();
        let mut last_tick = 0u64;
        for ev in &track.events {
            push_vlq(&mut body, (ev.tick - last_tick) as u32);
            last_tick = ev.tick;
            match ev.kind {
                EventKind::NoteOn {
                    channel,
                    pitch,
                    velocity,
                } => body.extend_from_slice(&[0x90 | channel, pitch, velocity.max(1)]),
                EventKind::NoteOff { channel, pitch } => {
                    body.extend_from_slice(&[0x80 | channel, pitch, 0x40])
                }
                EventKind::ProgramChange { channel, program } => {
                    body.extend_from_slice(&[0xc0 | channel, program])
                }
                EventKind::TimeSignature {
                    numerator,
                    denominator,
                } => {
                    let pow = denominator.trailing_zeros() as u8;
                    body.extend_from_slice(&[0xff, 0x58, 0x04, numerator, pow, 24, 8]);
                }
                EventKind::Tempo { us_per_quarter } => {
                    let b = us_per_quarter.to_be_bytes();
                    body.extend_from_slice(&[0xff, 0x51, 0x03, b[1], b[2], b[3]]);
                }
            }
        }
        // End-of-track meta.
        body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);

        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

/// Render a [`CanonicalSong`] as a format-0 SMF at fixed 120 BPM, 4/4,
/// velocity 64, one channel per track (skipping the drum channel 10).
pub fn song_to_smf(song: &CanonicalSong) -> Vec<u8> {
    // 12 positions per beat maps directly to a division of 12.
    let division = u16::from(RESOLUTION);
    let mut events: Vec<TimedEvent> = vec![
        TimedEvent {
            tick: 0,
            kind: EventKind::TimeSignature {
                numerator: 4,
                denominator: 4,
            },
        },
        TimedEvent {
            tick: 0,
            kind: EventKind::Tempo {
                us_per_quarter: 500_000,
            },
        },
    ];

    for (i, track) in song.tracks.iter().enumerate() {
        // Channels 0..16 minus the percussion channel 9.
        let channel = {
            let c = (i % 15) as u8;
            if c >= 9 {
                c + 1
            } else {
                c
            }
        };
        events.push(TimedEvent {
            tick: 0,
            kind: EventKind::ProgramChange {
                channel,
                program: track.program,
            },
        });
        for note in &track.notes {
            let on = u64::from(note.beat) * u64::from(RESOLUTION) + u64::from(note.position);
            let off = on + u64::from(note.duration);
            events.push(TimedEvent {
                tick: on,
                kind: EventKind::NoteOn {
                    channel,
                    pitch: note.pitch,
                    velocity: 64,
                },
            });
            events.push(TimedEvent {
                tick: off,
                kind: EventKind::NoteOff {
                    channel,
                    pitch: note.pitch,
                },
            });
        }
    }
    events.sort_by_key(|e| (e.tick, event_sort_rank(&e.kind)));

    let raw = RawMidi {
        format: 0,
        division,
        tracks: vec![RawTrack {
            events,
            notes: Vec::new(),
            unmatched_note_ons: 0,
        }],
    };
    write_smf(&raw)
}

/// Offs before ons at the same tick so zero-gap repeats stay paired.
fn event_sort_rank(kind: &EventKind) -> u8 {
    match kind {
        EventKind::TimeSignature { .. } => 0,
        EventKind::Tempo { .. } => 1,
        EventKind::ProgramChange { .. } => 2,
        EventKind::NoteOff { .. } => 3,
        EventKind::NoteOn { .. } => 4,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Build the smallest legal format-0 file byte by byte: one track with a
    /// single pitch-60 note-on/note-off pair.
    pub(crate) fn minimal_format0() -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd");
        f.extend_from_slice(&[0, 0, 0, 6]); // header length
        f.extend_from_slice(&[0, 0]); // format 0
        f.extend_from_slice(&[0, 1]); // one track
        f.extend_from_slice(&[0x01, 0xe0]); // division 480
        let body = [
            0x00, 0x90, 60, 64, // tick 0: note-on C4 vel 64
            0x83, 0x60, 0x80, 60, 0x00, // tick +480: note-off C4
            0x00, 0xff, 0x2f, 0x00, // end of track
        ];
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(body.len() as u32).to_be_bytes());
        f.extend_from_slice(&body);
        f
    }

    #[test]
    fn minimal_file_one_matched_note() {
        let raw = parse_smf(&minimal_format0()).unwrap();
        assert_eq!(raw.format, 0);
        assert_eq!(raw.division, 480);
        assert_eq!(raw.tracks.len(), 1);
        assert_eq!(raw.tracks[0].notes.len(), 1);
        let n = raw.tracks[0].notes[0];
        assert_eq!((n.pitch, n.on_tick, n.off_tick), (60, 0, 480));
        assert_eq!(raw.unmatched_note_ons(), 0);
    }

    #[test]
    fn bad_header_tag_rejected() {
        let mut f = minimal_format0();
        f[0..4].copy_from_slice(b"XXXX");
        match parse_smf(&f) {
            Err(SmfError::MalformedHeader(_)) => {}
            other => panic!("expected MalformedHeader, got {other:?}"),
        }
    }

    #[test]
    fn smpte_division_rejected() {
        let mut f = minimal_format0();
        f[12] = 0xe8; // high bit set
        assert_eq!(parse_smf(&f), Err(SmfError::SmpteDivisionUnsupported));
    }

    #[test]
    fn truncated_chunk_rejected() {
        let f = minimal_format0();
        let cut = &f[..f.len() - 5];
        assert!(matches!(parse_smf(cut), Err(SmfError::TruncatedChunk(_))));
    }

    #[test]
    fn vlq_overflow_rejected() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd");
        f.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xe0]);
        let body = [0x81, 0x81, 0x81, 0x81, 0x01, 0x90, 60, 64]; // 5-byte delta
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(body.len() as u32).to_be_bytes());
        f.extend_from_slice(&body);
        assert_eq!(parse_smf(&f), Err(SmfError::VlqOverflow));
    }

    #[test]
    fn note_on_velocity_zero_is_note_off() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd");
        f.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xe0]);
        let body = [
            0x00, 0x90, 60, 64, // on
            0x60, 60, 0x00, // running status: vel-0 note-on == off
            0x00, 0xff, 0x2f, 0x00,
        ];
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(body.len() as u32).to_be_bytes());
        f.extend_from_slice(&body);
        let raw = parse_smf(&f).unwrap();
        assert_eq!(raw.tracks[0].notes.len(), 1);
        assert_eq!(raw.tracks[0].notes[0].off_tick, 0x60);
    }

    /// Independent two-track writer used as the parse oracle: 3 notes on
    /// program 0, 2 notes on program 33, counted by hand.
    pub(crate) fn two_track_format1() -> Vec<u8> {
        fn track(events: &[u8]) -> Vec<u8> {
            let mut t = Vec::new();
            t.extend_from_slice(b"MTrk");
            let mut body = events.to_vec();
            body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
            t.extend_from_slice(&(body.len() as u32).to_be_bytes());
            t.extend_from_slice(&body);
            t
        }
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd");
        f.extend_from_slice(&[0, 0, 0, 6, 0, 1, 0, 2, 0x00, 0x60]); // format 1, 2 tracks, division 96
        #[rustfmt::skip]
        let t0 = [
            0x00, 0xc0, 0x00,       // program 0 on channel 0
            0x00, 0x90, 60, 80,     // beat 0: C4 on
            0x60, 0x80, 60, 0,      // +96 off
            0x00, 0x90, 64, 80,     // beat 1: E4 on
            0x60, 0x80, 64, 0,      // +96 off
            0x00, 0x90, 67, 80,     // beat 2: G4 on
            0x60, 0x80, 67, 0,      // +96 off
        ];
        #[rustfmt::skip]
        let t1 = [
            0x00, 0xc1, 33,         // program 33 on channel 1
            0x00, 0x91, 36, 80,     // beat 0: C2 on
            0x60, 0x81, 36, 0,
            0x60, 0x91, 43, 80,     // beat 2: G2 on
            0x60, 0x81, 43, 0,
        ];
        f.extend_from_slice(&track(&t0));
        f.extend_from_slice(&track(&t1));
        f
    }

    #[test]
    fn two_track_file_five_matched_notes() {
        let raw = parse_smf(&two_track_format1()).unwrap();
        assert_eq!(raw.tracks.len(), 2);
        assert_eq!(raw.matched_note_count(), 5);
        assert_eq!(raw.tracks[0].notes.len(), 3);
        assert_eq!(raw.tracks[1].notes.len(), 2);
        assert!(raw.tracks[0].notes.iter().all(|n| n.program == 0));
        assert!(raw.tracks[1].notes.iter().all(|n| n.program == 33));
    }

    #[test]
    fn write_then_parse_preserves_matched_notes() {
        let raw = parse_smf(&two_track_format1()).unwrap();
        let rewritten = write_smf(&raw);
        let reparsed = parse_smf(&rewritten).unwrap();
        let mut a: Vec<RawNote> = raw.tracks.iter().flat_map(|t| t.notes.clone()).collect();
        let mut b: Vec<RawNote> = reparsed
            .tracks
            .iter()
            .flat_map(|t| t.notes.clone())
            .collect();
        a.sort_by_key(|n| (n.on_tick, n.channel, n.pitch, n.off_tick));
        b.sort_by_key(|n| (n.on_tick, n.channel, n.pitch, n.off_tick));
        assert_eq!(a, b);
    }
}
