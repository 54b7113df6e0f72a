//! Training data preparation: bar-boundary segmentation of long songs and
//! per-segment serialization under the three scales.

use crate::midi::{CanonicalSong, Note, Track};
use crate::rep::{encode, realign, serialize, Scale, ScaledSequence};

/// One training example: the three serializations of one song segment.
/// Inputs for scale s are `seqs[s].events[..T-1]`; targets are the bar
/// sequence shifted by one.
#[derive(Debug, Clone)]
pub struct Batch {
    pub seqs: [ScaledSequence; 3],
}

impl Batch {
    /// Serialize a segment under all three scales and check the cross-scale
    /// consistency invariant: every scale's events, realigned to bar order,
    /// are the bar events, so in particular the shifted targets agree.
    pub fn new(song: &CanonicalSong) -> Self {
        let ev = encode(song);
        let seqs: [ScaledSequence; 3] = std::array::from_fn(|s| serialize(&ev, Scale::ALL[s]));
        let bar = &seqs[Scale::Bar as usize];
        for seq in &seqs {
            let mapped = realign(&seq.events, &seq.alignment, &bar.alignment)
                .expect("serializations of one segment share their event set");
            assert_eq!(
                mapped, bar.events,
                "cross-scale target mismatch within a segment"
            );
        }
        Batch { seqs }
    }

    pub fn len(&self) -> usize {
        self.seqs[0].events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Number of events the segment's serialization will have: frame (SOS, SON,
/// EOS) + one INSTRUMENT per track + the notes.
fn event_count(n_tracks: usize, n_notes: usize) -> usize {
    3 + n_tracks + n_notes
}

/// Split a song at bar boundaries into segments whose serializations fit in
/// `max_seq_len` events. Beats stay absolute. A single bar too large for the
/// budget is truncated to its first notes in note order.
pub fn segment_song(song: &CanonicalSong, max_seq_len: usize) -> Vec<CanonicalSong> {
    assert!(max_seq_len >= 5, "need room for a frame and at least one note");
    if encode(song).events.len() <= max_seq_len {
        return vec![song.clone()];
    }

    // Notes tagged (bar, program), in note order within each bar.
    let mut tagged: Vec<(u16, u8, Note)> = Vec::new();
    for track in &song.tracks {
        for &n in &track.notes {
            tagged.push((n.beat / 4, track.program, n));
        }
    }
    tagged.sort_by_key(|&(bar, program, n)| {
        (bar, n.beat, n.position, program, n.pitch, n.duration)
    });

    let mut segments: Vec<CanonicalSong> = Vec::new();
    let mut current: Vec<(u8, Note)> = Vec::new();
    let mut current_programs: Vec<u8> = Vec::new();
    let mut i = 0;
    while i < tagged.len() {
        // All notes of one bar.
        let bar = tagged[i].0;
        let mut j = i;
        while j < tagged.len() && tagged[j].0 == bar {
            j += 1;
        }
        let bar_notes = &tagged[i..j];
        let bar_programs: Vec<u8> = {
            let mut p: Vec<u8> = bar_notes.iter().map(|&(_, prog, _)| prog).collect();
            p.sort_unstable();
            p.dedup();
            p
        };
        let merged_programs = {
            let mut p = current_programs.clone();
            p.extend_from_slice(&bar_programs);
            p.sort_unstable();
            p.dedup();
            p
        };
        let fits = event_count(merged_programs.len(), current.len() + bar_notes.len())
            <= max_seq_len;
        if fits {
            current.extend(bar_notes.iter().map(|&(_, prog, n)| (prog, n)));
            current_programs = merged_programs;
        } else if current.is_empty() {
            // One bar alone exceeds the budget: keep a prefix of its notes.
            let mut kept: Vec<(u8, Note)> = Vec::new();
            let mut programs: Vec<u8> = Vec::new();
            for &(_, prog, n) in bar_notes {
                let mut with = programs.clone();
                if !with.contains(&prog) {
                    with.push(prog);
                }
                if event_count(with.len(), kept.len() + 1) > max_seq_len {
                    break;
                }
                kept.push((prog, n));
                programs = with;
            }
            if !kept.is_empty() {
                segments.push(notes_to_song(&kept));
            }
        } else {
            segments.push(notes_to_song(&current));
            current.clear();
            current_programs.clear();
            continue; // retry this bar against the empty segment
        }
        i = j;
    }
    if !current.is_empty() {
        segments.push(notes_to_song(&current));
    }
    segments
}

fn notes_to_song(notes: &[(u8, Note)]) -> CanonicalSong {
    let mut programs: Vec<u8> = notes.iter().map(|&(p, _)| p).collect();
    programs.sort_unstable();
    programs.dedup();
    let tracks: Vec<Track> = programs
        .iter()
        .map(|&program| {
            let mut ns: Vec<Note> = notes
                .iter()
                .filter(|&&(p, _)| p == program)
                .map(|&(_, n)| n)
                .collect();
            ns.sort_by_key(|n| (n.beat, n.position, n.pitch, n.duration));
            Track { program, notes: ns }
        })
        .collect();
    CanonicalSong::from_tracks(tracks)
}

/// Segment every song and serialize each segment under one scale.
pub fn prepare_single(
    songs: &[CanonicalSong],
    scale: Scale,
    max_seq_len: usize,
) -> Vec<ScaledSequence> {
    songs
        .iter()
        .flat_map(|song| segment_song(song, max_seq_len))
        .map(|seg| serialize(&encode(&seg), scale))
        .collect()
}

/// Segment every song and build the three-scale batches.
pub fn prepare_msat(songs: &[CanonicalSong], max_seq_len: usize) -> Vec<Batch> {
    songs
        .iter()
        .flat_map(|song| segment_song(song, max_seq_len))
        .map(|seg| Batch::new(&seg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn song_with_bars(n_bars: u16, notes_per_bar: u16) -> CanonicalSong {
        let mut notes = Vec::new();
        for b in 0..n_bars {
            for k in 0..notes_per_bar {
                notes.push(Note {
                    beat: b * 4 + (k % 4),
                    position: 0,
                    pitch: (40 + (k % 40)) as u8,
                    duration: 6,
                });
            }
        }
        notes.sort();
        CanonicalSong::from_tracks(vec![Track { program: 0, notes }])
    }

    #[test]
    fn short_song_is_one_segment() {
        let song = song_with_bars(2, 3);
        let segs = segment_song(&song, 1024);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0], song);
    }

    #[test]
    fn segments_respect_the_budget_and_split_at_bars() {
        let song = song_with_bars(10, 8);
        let max = 30;
        let segs = segment_song(&song, max);
        assert!(segs.len() > 1);
        let mut total = 0;
        for seg in &segs {
            let ev = encode(seg);
            assert!(ev.events.len() <= max);
            total += seg.note_count();
            // Bar boundary: all notes of one bar stay in one segment, so the
            // bar sets of consecutive segments are disjoint.
        }
        assert_eq!(total, song.note_count());
        for w in segs.windows(2) {
            let last_bar = w[0]
                .tracks
                .iter()
                .flat_map(|t| &t.notes)
                .map(|n| n.beat / 4)
                .max()
                .unwrap();
            let first_bar = w[1]
                .tracks
                .iter()
                .flat_map(|t| &t.notes)
                .map(|n| n.beat / 4)
                .min()
                .unwrap();
            assert!(first_bar > last_bar);
        }
    }

    #[test]
    fn beats_stay_absolute() {
        let song = song_with_bars(10, 8);
        let segs = segment_song(&song, 30);
        let first_beats: Vec<u16> = segs[1]
            .tracks
            .iter()
            .flat_map(|t| t.notes.iter().map(|n| n.beat))
            .collect();
        assert!(first_beats.iter().all(|&b| b >= 4), "later segments keep their beats");
    }

    #[test]
    fn oversized_single_bar_is_truncated() {
        let mut notes: Vec<Note> = (0..40)
            .map(|k| Note { beat: 0, position: (k % 12) as u8, pitch: 30 + k as u8, duration: 3 })
            .collect();
        notes.sort();
        let song = CanonicalSong::from_tracks(vec![Track { program: 0, notes }]);
        let segs = segment_song(&song, 20);
        assert_eq!(segs.len(), 1);
        assert_eq!(encode(&segs[0]).events.len(), 20);
    }

    #[test]
    fn batch_invariant_holds_for_multi_track_songs() {
        let song = CanonicalSong::from_tracks(vec![
            Track {
                program: 0,
                notes: vec![
                    Note { beat: 0, position: 0, pitch: 60, duration: 12 },
                    Note { beat: 5, position: 3, pitch: 64, duration: 6 },
                ],
            },
            Track {
                program: 48,
                notes: vec![
                    Note { beat: 1, position: 0, pitch: 55, duration: 24 },
                    Note { beat: 4, position: 0, pitch: 57, duration: 12 },
                ],
            },
        ]);
        let batches = prepare_msat(&[song], 1024);
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].seqs[0].events.len(), batches[0].seqs[1].events.len());
    }

    #[test]
    fn prepare_single_counts_segments() {
        let songs = vec![song_with_bars(10, 8), song_with_bars(2, 2)];
        let seqs = prepare_single(&songs, Scale::Track, 30);
        assert!(seqs.len() > 2);
        assert!(seqs.iter().all(|s| s.scale == Scale::Track));
        assert!(seqs.iter().all(|s| s.events.len() <= 30));
    }
}
