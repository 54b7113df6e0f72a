//! Per-field vocabularies: integer code ranges for the six event fields and
//! the quantized duration table.
//!
//! Value fields (beat, position, pitch, duration, instrument) reserve code 0
//! as NULL for structural events, so a value v maps to code v + 1 (durations
//! go through the table index instead).

/// Code 0 in every non-type field: "no value" for structural events.
pub const NULL: u16 = 0;

/// Vocabulary size per field, in field order (type, beat, position, pitch,
/// duration, instrument). Value fields are 1 (NULL) + their value range.
pub const VOCAB_SIZES: [usize; 6] = [5, 257, 13, 129, 65, 129];

/// All representable note durations in grid positions, strictly increasing.
/// Resolution is finest at short durations: every length up to two beats,
/// then progressively coarser steps out to eight bars.
pub const DURATION_TABLE: [u16; 64] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, //
    26, 28, 30, 32, 34, 36, 38, 40, 42, 44, 46, 48, //
    52, 56, 60, 64, 68, 72, 76, 80, 84, 88, 92, 96, //
    104, 112, 120, 128, 136, 144, 152, 160, 168, 176, 184, 192, //
    240, 288, 336, 384,
];

/// Nearest table entry to `d`, ties toward the larger entry.
pub fn snap_duration(d: u16) -> u16 {
    assert!(d >= 1 && d <= *DURATION_TABLE.last().unwrap());
    let i = DURATION_TABLE.partition_point(|&e| e < d);
    if i == 0 {
        return DURATION_TABLE[0];
    }
    if i == DURATION_TABLE.len() {
        return *DURATION_TABLE.last().unwrap();
    }
    let below = DURATION_TABLE[i - 1];
    let above = DURATION_TABLE[i];
    if d - below < above - d {
        below
    } else {
        above
    }
}

pub fn beat_code(beat: u16) -> u16 {
    assert!(beat < 256, "beat {beat} outside vocabulary");
    beat + 1
}

pub fn position_code(position: u8) -> u16 {
    assert!(position < 12);
    u16::from(position) + 1
}

pub fn pitch_code(pitch: u8) -> u16 {
    assert!(pitch <= 127);
    u16::from(pitch) + 1
}

/// Code for a duration that is already a table entry (snap first otherwise).
pub fn duration_code(duration: u16) -> u16 {
    let i = DURATION_TABLE
        .binary_search(&duration)
        .unwrap_or_else(|_| panic!("duration {duration} not in table"));
    (i + 1) as u16
}

pub fn duration_from_code(code: u16) -> u16 {
    DURATION_TABLE[usize::from(code) - 1]
}

pub fn instrument_code(program: u8) -> u16 {
    assert!(program <= 127);
    u16::from(program) + 1
}
