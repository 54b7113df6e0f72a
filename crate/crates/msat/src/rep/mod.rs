//! Event representation: the six-token event tuple, the canonical event list,
//! and the three scale-ordered serializations (note, bar, track) with
//! alignment permutations between them.

mod events;
mod token_file;
mod vocab;

pub use events::{
    deserialize, encode, realign, serialize, Deserialized, Event, EventList, LengthMismatch,
    MalformedSequence, Scale, ScaledSequence, FIELD_BEAT, FIELD_DURATION, FIELD_INSTRUMENT,
    FIELD_PITCH, FIELD_POSITION, FIELD_TYPE, NUM_FIELDS, TYPE_EOS, TYPE_INSTRUMENT, TYPE_NOTE,
    TYPE_SON, TYPE_SOS,
};
pub use token_file::{parse_tokens, write_tokens, TokenFileError};
pub use vocab::{
    beat_code, duration_code, duration_from_code, instrument_code, pitch_code, position_code,
    snap_duration, DURATION_TABLE, NULL, VOCAB_SIZES,
};
