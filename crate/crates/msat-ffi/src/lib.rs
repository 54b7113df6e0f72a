//! C bindings for the msat library. Songs and models are opaque handles,
//! every function reports a status code, and everything the library
//! allocates has a matching free function. The header is generated into
//! include/msat.h at build time.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use msat::gen::{attn_report, generate, GenerationTask, SamplingConfig};
use msat::metrics::song_metrics;
use msat::midi::{normalize, parse_smf, song_to_smf, CanonicalSong, NormalizeOptions};
use msat::nn::{load_msat, CheckpointError, MsatParams};
use msat::rep::{encode, serialize, write_tokens, Scale};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsatStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument,
    /// An argument was out of range (bad scale name, zero top_k, ...).
    BadArgument,
    /// A string argument was not valid UTF-8.
    InvalidUtf8,
    /// The bytes are not a Standard MIDI File this library reads.
    BadMidi,
    /// The MIDI parsed but was rejected by corpus normalization
    /// (not 4/4 throughout, or no pitched notes).
    Rejected,
    /// The text is not a valid song document.
    BadJson,
    Io,
    /// The file is not a model checkpoint this library reads.
    BadCheckpoint,
    /// Sampling failed (bad prompt, no instruments, ...).
    GenerationFailed,
    /// The operation needs the other fusion mode.
    WrongFusionMode,
    /// The library panicked; the call had no effect.
    Panic,
}

/// Sampling knobs for the generate calls. Pass null for defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MsatSampling {
    pub seed: u64,
    /// Softmax temperature for every field; must be positive.
    pub temperature: f64,
    /// Top-k cutoff for every field; must be at least 1.
    pub top_k: u32,
    /// Hard cap on generated events.
    pub max_events: u32,
    /// Reject grammar-breaking samples before drawing.
    pub validity_filter: bool,
}

pub struct MsatSong {
    inner: CanonicalSong,
}

pub struct MsatModel {
    inner: MsatParams,
}

fn guard(f: impl FnOnce() -> MsatStatus) -> MsatStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(MsatStatus::Panic)
}

/// Give ownership of a string to the caller.
fn put_string(out: *mut *mut c_char, text: String) -> MsatStatus {
    let c = CString::new(text).expect("library strings never contain NUL");
    unsafe { *out = c.into_raw() };
    MsatStatus::Ok
}

fn put_song(out: *mut *mut MsatSong, song: CanonicalSong) -> MsatStatus {
    unsafe { *out = Box::into_raw(Box::new(MsatSong { inner: song })) };
    MsatStatus::Ok
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, MsatStatus> {
    if ptr.is_null() {
        return Err(MsatStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| MsatStatus::InvalidUtf8)
}

fn sampling(opts: *const MsatSampling) -> Result<SamplingConfig, MsatStatus> {
    let mut cfg = SamplingConfig::default();
    if let Some(o) = unsafe { opts.as_ref() } {
        if !(o.temperature > 0.0) || o.top_k == 0 {
            return Err(MsatStatus::BadArgument);
        }
        cfg.seed = o.seed;
        cfg.temperature = [o.temperature; 6];
        cfg.top_k = [o.top_k as usize; 6];
        cfg.max_events = o.max_events as usize;
        cfg.validity_filter = o.validity_filter;
    }
    Ok(cfg)
}

/// Fill `out` with the default sampling configuration.
#[no_mangle]
pub extern "C" fn msat_sampling_default(out: *mut MsatSampling) -> MsatStatus {
    let Some(out) = (unsafe { out.as_mut() }) else {
        return MsatStatus::NullArgument;
    };
    let d = SamplingConfig::default();
    *out = MsatSampling {
        seed: d.seed,
        temperature: d.temperature[0],
        top_k: d.top_k[0] as u32,
        max_events: d.max_events as u32,
        validity_filter: d.validity_filter,
    };
    MsatStatus::Ok
}

/// Parse a Standard MIDI File and normalize it into a song.
#[no_mangle]
pub extern "C" fn msat_song_from_midi(
    bytes: *const u8,
    len: usize,
    out: *mut *mut MsatSong,
) -> MsatStatus {
    if bytes.is_null() || out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let data = unsafe { std::slice::from_raw_parts(bytes, len) };
        let raw = match parse_smf(data) {
            Ok(raw) => raw,
            Err(_) => return MsatStatus::BadMidi,
        };
        match normalize(&raw, NormalizeOptions::default()) {
            Ok(song) => put_song(out, song),
            Err(_) => MsatStatus::Rejected,
        }
    })
}

/// Parse a song document (the JSON the library writes).
#[no_mangle]
pub extern "C" fn msat_song_from_json(text: *const c_char, out: *mut *mut MsatSong) -> MsatStatus {
    if out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let text = match unsafe { read_str(text) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        match CanonicalSong::from_json(text) {
            Ok(song) => put_song(out, song),
            Err(_) => MsatStatus::BadJson,
        }
    })
}

#[no_mangle]
pub extern "C" fn msat_song_free(song: *mut MsatSong) {
    if !song.is_null() {
        drop(unsafe { Box::from_raw(song) });
    }
}

/// Total notes across all tracks; 0 for null.
#[no_mangle]
pub extern "C" fn msat_song_note_count(song: *const MsatSong) -> usize {
    unsafe { song.as_ref() }.map_or(0, |s| s.inner.note_count())
}

/// Length in beats; 0 for null.
#[no_mangle]
pub extern "C" fn msat_song_length_beats(song: *const MsatSong) -> u16 {
    unsafe { song.as_ref() }.map_or(0, |s| s.inner.length_beats)
}

/// Render the song document as JSON. Free with msat_string_free.
#[no_mangle]
pub extern "C" fn msat_song_to_json(song: *const MsatSong, out: *mut *mut c_char) -> MsatStatus {
    let Some(song) = (unsafe { song.as_ref() }) else {
        return MsatStatus::NullArgument;
    };
    if out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| put_string(out, song.inner.to_json()))
}

/// Render the song as a Standard MIDI File. Free with msat_bytes_free.
#[no_mangle]
pub extern "C" fn msat_song_to_midi(
    song: *const MsatSong,
    out: *mut *mut u8,
    out_len: *mut usize,
) -> MsatStatus {
    let Some(song) = (unsafe { song.as_ref() }) else {
        return MsatStatus::NullArgument;
    };
    if out.is_null() || out_len.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let bytes = song_to_smf(&song.inner).into_boxed_slice();
        unsafe {
            *out_len = bytes.len();
            *out = Box::into_raw(bytes) as *mut u8;
        }
        MsatStatus::Ok
    })
}

/// Serialize the song as token text at the named scale ("note", "bar", or
/// "track"). Free with msat_string_free.
#[no_mangle]
pub extern "C" fn msat_song_tokens(
    song: *const MsatSong,
    scale: *const c_char,
    out: *mut *mut c_char,
) -> MsatStatus {
    let Some(song) = (unsafe { song.as_ref() }) else {
        return MsatStatus::NullArgument;
    };
    if out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let name = match unsafe { read_str(scale) } {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(scale) = Scale::from_name(name) else {
            return MsatStatus::BadArgument;
        };
        put_string(out, write_tokens(&serialize(&encode(&song.inner), scale)))
    })
}

/// Score one song against a reference and return the metrics (values and
/// degeneracy flags) as JSON. Free with msat_string_free.
#[no_mangle]
pub extern "C" fn msat_song_metrics_json(
    song: *const MsatSong,
    reference: *const MsatSong,
    out: *mut *mut c_char,
) -> MsatStatus {
    let (Some(song), Some(reference)) = (unsafe { song.as_ref() }, unsafe { reference.as_ref() })
    else {
        return MsatStatus::NullArgument;
    };
    if out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let m = song_metrics(&song.inner, &reference.inner);
        put_string(out, serde_json::to_string_pretty(&m).expect("metrics are plain numbers"))
    })
}

/// Load a multi-scale checkpoint from a file.
#[no_mangle]
pub extern "C" fn msat_model_load(path: *const c_char, out: *mut *mut MsatModel) -> MsatStatus {
    if out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let path = match unsafe { read_str(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_msat(path.as_ref()) {
            Ok(model) => {
                unsafe { *out = Box::into_raw(Box::new(MsatModel { inner: model })) };
                MsatStatus::Ok
            }
            Err(CheckpointError::Io(_)) => MsatStatus::Io,
            Err(_) => MsatStatus::BadCheckpoint,
        }
    })
}

#[no_mangle]
pub extern "C" fn msat_model_free(model: *mut MsatModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Generate a song from scratch for the given General MIDI programs.
#[no_mangle]
pub extern "C" fn msat_generate_instruments(
    model: *const MsatModel,
    programs: *const u8,
    n_programs: usize,
    opts: *const MsatSampling,
    out: *mut *mut MsatSong,
) -> MsatStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return MsatStatus::NullArgument;
    };
    if programs.is_null() || out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let programs = unsafe { std::slice::from_raw_parts(programs, n_programs) };
        if programs.iter().any(|&p| p > 127) {
            return MsatStatus::BadArgument;
        }
        let cfg = match sampling(opts) {
            Ok(cfg) => cfg,
            Err(s) => return s,
        };
        let task = GenerationTask::InstrumentInformed { programs: programs.to_vec() };
        match generate(&model.inner, &task, &cfg) {
            Ok((song, _)) => put_song(out, song),
            Err(_) => MsatStatus::GenerationFailed,
        }
    })
}

/// Continue a prompt song past its first `beats` beats.
#[no_mangle]
pub extern "C" fn msat_generate_continuation(
    model: *const MsatModel,
    prompt: *const MsatSong,
    beats: u16,
    opts: *const MsatSampling,
    out: *mut *mut MsatSong,
) -> MsatStatus {
    let (Some(model), Some(prompt)) = (unsafe { model.as_ref() }, unsafe { prompt.as_ref() })
    else {
        return MsatStatus::NullArgument;
    };
    if out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| {
        let cfg = match sampling(opts) {
            Ok(cfg) => cfg,
            Err(s) => return s,
        };
        let task = GenerationTask::Continuation { prompt: prompt.inner.clone(), beats };
        match generate(&model.inner, &task, &cfg) {
            Ok((song, _)) => put_song(out, song),
            Err(_) => MsatStatus::GenerationFailed,
        }
    })
}

/// The per-token-type fusion attention table of a global-fusion model.
/// Free with msat_string_free.
#[no_mangle]
pub extern "C" fn msat_model_attn_report(
    model: *const MsatModel,
    out: *mut *mut c_char,
) -> MsatStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return MsatStatus::NullArgument;
    };
    if out.is_null() {
        return MsatStatus::NullArgument;
    }
    guard(|| match attn_report(&model.inner) {
        Ok(table) => put_string(out, table),
        Err(_) => MsatStatus::WrongFusionMode,
    })
}

/// Free a string returned by this library.
#[no_mangle]
pub extern "C" fn msat_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(unsafe { CString::from_raw(text) });
    }
}

/// Free a byte buffer returned by this library.
#[no_mangle]
pub extern "C" fn msat_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(unsafe { Box::from_raw(std::ptr::slice_from_raw_parts_mut(bytes, len)) });
    }
}

/// Static name for a status code.
#[no_mangle]
pub extern "C" fn msat_status_name(status: MsatStatus) -> *const c_char {
    let name: &CStr = match status {
        MsatStatus::Ok => c"ok",
        MsatStatus::NullArgument => c"null argument",
        MsatStatus::BadArgument => c"bad argument",
        MsatStatus::InvalidUtf8 => c"invalid utf-8",
        MsatStatus::BadMidi => c"unreadable midi",
        MsatStatus::Rejected => c"rejected by normalization",
        MsatStatus::BadJson => c"bad song document",
        MsatStatus::Io => c"io error",
        MsatStatus::BadCheckpoint => c"unreadable checkpoint",
        MsatStatus::GenerationFailed => c"generation failed",
        MsatStatus::WrongFusionMode => c"wrong fusion mode",
        MsatStatus::Panic => c"internal panic",
    };
    name.as_ptr()
}
