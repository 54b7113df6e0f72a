//! The six objective evaluation metrics, per song and pooled over a corpus.
//! Degenerate inputs (empty songs, single bars, single instruments, constant
//! series) get defined values plus flags instead of errors, so corpus
//! aggregation never aborts.

use serde::Serialize;

use crate::midi::{CanonicalSong, Track};

const PITCH_CLASSES: usize = 12;
const MAJOR: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const NATURAL_MINOR: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
/// Onset slots per bar: 4 beats of 12 positions.
const BAR_SLOTS: u32 = 48;

/// One row of the evaluation table, columns in report order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    /// Pitch-class entropy in bits, in [0, log2 12].
    pub pce: f64,
    /// Scale consistency percentage: best of 24 major/minor scales.
    pub scale: f64,
    /// Groove consistency percentage across consecutive bars.
    pub groove: f64,
    /// Empty measure rate percentage, averaged across instruments.
    pub emr: f64,
    /// Population std of per-instrument pitch-class entropies (lower =
    /// more similar).
    pub inter_instrument_similarity: f64,
    /// Pearson correlation of per-bar instrument counts against the
    /// reference, in [-1, 1].
    pub instrument_consistency: f64,
}

impl MetricsRow {
    pub const COLUMNS: [&'static str; 6] = ["pce", "scale", "groove", "emr", "iis", "ic"];

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.pce,
            self.scale,
            self.groove,
            self.emr,
            self.inter_instrument_similarity,
            self.instrument_consistency,
        ]
    }

    fn mean(rows: &[MetricsRow]) -> MetricsRow {
        let n = rows.len() as f64;
        let mut sums = [0.0; 6];
        for row in rows {
            for (s, v) in sums.iter_mut().zip(row.as_array()) {
                *s += v;
            }
        }
        MetricsRow {
            pce: sums[0] / n,
            scale: sums[1] / n,
            groove: sums[2] / n,
            emr: sums[3] / n,
            inter_instrument_similarity: sums[4] / n,
            instrument_consistency: sums[5] / n,
        }
    }
}

/// Which degenerate-input conventions fired while scoring a song.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MetricFlags {
    /// No notes at all: entropy 0, scale and empty-measure rate 100.
    pub empty_song: bool,
    /// Fewer than two bars: groove consistency 100.
    pub few_bars: bool,
    /// At most one instrument: inter-instrument similarity 0.
    pub single_instrument: bool,
    /// A constant instrument-count series: correlation 1 when the series
    /// match exactly, else 0.
    pub degenerate_variance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SongMetrics {
    pub row: MetricsRow,
    pub flags: MetricFlags,
}

fn add_pitch_classes(hist: &mut [u64; PITCH_CLASSES], track: &Track) {
    for note in &track.notes {
        hist[usize::from(note.pitch) % PITCH_CLASSES] += 1;
    }
}

fn entropy_bits(hist: &[u64; PITCH_CLASSES]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

fn pce_core(song: &CanonicalSong) -> (f64, bool) {
    let mut hist = [0u64; PITCH_CLASSES];
    for track in &song.tracks {
        add_pitch_classes(&mut hist, track);
    }
    if hist.iter().all(|&c| c == 0) {
        (0.0, true)
    } else {
        (entropy_bits(&hist), false)
    }
}

/// Shannon entropy (base 2) of the pooled 12-bin pitch-class histogram.
pub fn pitch_class_entropy(song: &CanonicalSong) -> f64 {
    pce_core(song).0
}

fn scale_core(song: &CanonicalSong) -> (f64, bool) {
    let mut hist = [0u64; PITCH_CLASSES];
    for track in &song.tracks {
        add_pitch_classes(&mut hist, track);
    }
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return (100.0, true);
    }
    let mut best = 0u64;
    for root in 0..PITCH_CLASSES {
        for intervals in [MAJOR, NATURAL_MINOR] {
            let hits: u64 = intervals
                .iter()
                .map(|&iv| hist[(root + usize::from(iv)) % PITCH_CLASSES])
                .sum();
            best = best.max(hits);
        }
    }
    (best as f64 / total as f64 * 100.0, false)
}

/// Best fraction of notes covered by one of the 24 major/natural-minor
/// scales, as a percentage.
pub fn scale_consistency(song: &CanonicalSong) -> f64 {
    scale_core(song).0
}

/// Number of bars up to and including the last one with an onset.
fn bar_count(song: &CanonicalSong) -> usize {
    song.tracks
        .iter()
        .flat_map(|t| &t.notes)
        .map(|n| usize::from(n.beat / 4) + 1)
        .max()
        .unwrap_or(0)
}

/// Per-bar 48-bit onset patterns pooled over every instrument.
fn onset_patterns(song: &CanonicalSong, bars: usize) -> Vec<u64> {
    let mut patterns = vec![0u64; bars];
    for track in &song.tracks {
        for note in &track.notes {
            let slot = u32::from(note.beat % 4) * 12 + u32::from(note.position);
            patterns[usize::from(note.beat / 4)] |= 1u64 << slot;
        }
    }
    patterns
}

fn groove_core(song: &CanonicalSong) -> (f64, bool) {
    let bars = bar_count(song);
    if bars < 2 {
        return (100.0, true);
    }
    let patterns = onset_patterns(song, bars);
    let mean_distance = patterns
        .windows(2)
        .map(|w| f64::from((w[0] ^ w[1]).count_ones()) / f64::from(BAR_SLOTS))
        .sum::<f64>()
        / (bars - 1) as f64;
    ((1.0 - mean_distance) * 100.0, false)
}

/// Mean hamming similarity of consecutive bars' onset patterns, as a
/// percentage.
pub fn groove_consistency(song: &CanonicalSong) -> f64 {
    groove_core(song).0
}

fn emr_core(song: &CanonicalSong) -> (f64, bool) {
    let bars = bar_count(song);
    if bars == 0 || song.tracks.is_empty() {
        return (100.0, true);
    }
    let mean_rate = song
        .tracks
        .iter()
        .map(|track| {
            let mut sounded = vec![false; bars];
            for note in &track.notes {
                sounded[usize::from(note.beat / 4)] = true;
            }
            sounded.iter().filter(|&&s| !s).count() as f64 / bars as f64
        })
        .sum::<f64>()
        / song.tracks.len() as f64;
    (mean_rate * 100.0, false)
}

/// Fraction of bars with no onset, per instrument, averaged and reported as
/// a percentage. Bars run up to the song's last sounded bar.
pub fn empty_measure_rate(song: &CanonicalSong) -> f64 {
    emr_core(song).0
}

fn iis_core(song: &CanonicalSong) -> (f64, bool) {
    if song.tracks.len() <= 1 {
        return (0.0, true);
    }
    let entropies: Vec<f64> = song
        .tracks
        .iter()
        .map(|track| {
            let mut hist = [0u64; PITCH_CLASSES];
            add_pitch_classes(&mut hist, track);
            entropy_bits(&hist)
        })
        .collect();
    let n = entropies.len() as f64;
    let mean = entropies.iter().sum::<f64>() / n;
    let var = entropies.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n;
    (var.sqrt(), false)
}

/// Population standard deviation of the per-instrument pitch-class
/// entropies.
pub fn inter_instrument_similarity(song: &CanonicalSong) -> f64 {
    iis_core(song).0
}

/// Distinct instruments with at least one onset, per bar.
fn instrument_counts(song: &CanonicalSong, bars: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bars];
    for track in &song.tracks {
        let mut sounded = vec![false; bars];
        for note in &track.notes {
            let bar = usize::from(note.beat / 4);
            if bar < bars {
                sounded[bar] = true;
            }
        }
        for (c, s) in counts.iter_mut().zip(sounded) {
            *c += usize::from(s);
        }
    }
    counts
}

fn is_constant(series: &[usize]) -> bool {
    series.windows(2).all(|w| w[0] == w[1])
}

fn ic_core(generated: &CanonicalSong, reference: &CanonicalSong) -> (f64, bool) {
    let bars = bar_count(generated).min(bar_count(reference));
    let x = instrument_counts(generated, bars);
    let y = instrument_counts(reference, bars);
    if is_constant(&x) || is_constant(&y) {
        return (if x == y { 1.0 } else { 0.0 }, true);
    }
    let n = bars as f64;
    let mx = x.iter().sum::<usize>() as f64 / n;
    let my = y.iter().sum::<usize>() as f64 / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(&y) {
        let dx = xi as f64 - mx;
        let dy = yi as f64 - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Clamp away the ulp of rounding that can push a perfect correlation
    // past one.
    ((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), false)
}

/// Pearson correlation between the per-bar instrument counts of the two
/// songs, over the shorter one. A constant series yields 1 when both series
/// are identical, else 0, with the degenerate-variance flag.
pub fn instrument_consistency(generated: &CanonicalSong, reference: &CanonicalSong) -> f64 {
    ic_core(generated, reference).0
}

/// All six metrics for one song, scored against its paired reference.
pub fn song_metrics(song: &CanonicalSong, reference: &CanonicalSong) -> SongMetrics {
    let (pce, empty_song) = pce_core(song);
    let (scale, _) = scale_core(song);
    let (groove, few_bars) = groove_core(song);
    let (emr, _) = emr_core(song);
    let (iis, single_instrument) = iis_core(song);
    let (ic, degenerate_variance) = ic_core(song, reference);
    SongMetrics {
        row: MetricsRow {
            pce,
            scale,
            groove,
            emr,
            inter_instrument_similarity: iis,
            instrument_consistency: ic,
        },
        flags: MetricFlags { empty_song, few_bars, single_instrument, degenerate_variance },
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PairingMismatch {
    #[error("evaluation needs at least one generated song")]
    Empty,
    #[error("evaluation needs a 1:1 pairing, got {generated} generated vs {reference} reference")]
    Counts { generated: usize, reference: usize },
}

/// Corpus evaluation: per-song metrics for the generated set (each scored
/// against its paired reference), the corpus means, and the ground-truth row
/// (the reference set scored against itself).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub generated: MetricsRow,
    pub reference: MetricsRow,
    pub songs: Vec<SongMetrics>,
    pub reference_songs: Vec<SongMetrics>,
}

pub fn evaluate_corpus(
    generated: &[CanonicalSong],
    reference: &[CanonicalSong],
) -> Result<CorpusReport, PairingMismatch> {
    if generated.is_empty() {
        return Err(PairingMismatch::Empty);
    }
    if generated.len() != reference.len() {
        return Err(PairingMismatch::Counts {
            generated: generated.len(),
            reference: reference.len(),
        });
    }
    let songs: Vec<SongMetrics> =
        generated.iter().zip(reference).map(|(g, r)| song_metrics(g, r)).collect();
    let reference_songs: Vec<SongMetrics> =
        reference.iter().map(|r| song_metrics(r, r)).collect();
    let rows: Vec<MetricsRow> = songs.iter().map(|s| s.row).collect();
    let ref_rows: Vec<MetricsRow> = reference_songs.iter().map(|s| s.row).collect();
    Ok(CorpusReport {
        generated: MetricsRow::mean(&rows),
        reference: MetricsRow::mean(&ref_rows),
        songs,
        reference_songs,
    })
}

/// Aligned text table, one row per corpus.
pub fn render_table(rows: &[(&str, MetricsRow)]) -> String {
    let mut out = format!("{:<12}", "corpus");
    for col in MetricsRow::COLUMNS {
        out.push_str(&format!(" {col:>9}"));
    }
    out.push('\n');
    for (name, row) in rows {
        out.push_str(&format!("{name:<12}"));
        for v in row.as_array() {
            out.push_str(&format!(" {v:>9.4}"));
        }
        out.push('\n');
    }
    out
}

impl CorpusReport {
    pub fn table(&self) -> String {
        render_table(&[("generated", self.generated), ("reference", self.reference)])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::Note;

    fn note(beat: u16, position: u8, pitch: u8) -> Note {
        Note { beat, position, pitch, duration: 12 }
    }

    fn one_track(notes: Vec<Note>) -> CanonicalSong {
        CanonicalSong::from_tracks(vec![Track { program: 0, notes }])
    }

    /// A track sounding at beat 4b for each listed bar.
    fn track_on_bars(program: u8, bars: &[u16]) -> Track {
        Track { program, notes: bars.iter().map(|&b| note(4 * b, 0, 60)).collect() }
    }

    #[test]
    fn entropy_spans_silence_to_uniformity() {
        let monotone = one_track((0..4).map(|b| note(b, 0, 60)).collect());
        assert_eq!(pitch_class_entropy(&monotone), 0.0);

        let chromatic = one_track((0..12).map(|k| note(k, 0, 60 + k as u8)).collect());
        assert!((pitch_class_entropy(&chromatic) - 12f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn skewed_entropy_matches_the_hand_value() {
        // Three C's and one E.
        let song = one_track(vec![note(0, 0, 60), note(1, 0, 60), note(2, 0, 60), note(3, 0, 64)]);
        assert!((pitch_class_entropy(&song) - 0.8112781244591328).abs() < 1e-9);
    }

    #[test]
    fn scale_consistency_is_total_in_key() {
        // C major scale, one note per class.
        let pitches = [60, 62, 64, 65, 67, 69, 71];
        let song = one_track(pitches.iter().enumerate().map(|(k, &p)| note(k as u16, 0, p)).collect());
        assert_eq!(scale_consistency(&song), 100.0);
    }

    #[test]
    fn chromatic_spread_hits_seven_twelfths() {
        let song = one_track((0..12).map(|k| note(k, 0, 60 + k as u8)).collect());
        assert!((scale_consistency(&song) - 700.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn empty_songs_use_the_stated_conventions() {
        let empty = CanonicalSong::from_tracks(Vec::<Track>::new());
        let m = song_metrics(&empty, &empty);
        assert_eq!(m.row.pce, 0.0);
        assert_eq!(m.row.scale, 100.0);
        assert_eq!(m.row.groove, 100.0);
        assert_eq!(m.row.emr, 100.0);
        assert_eq!(m.row.inter_instrument_similarity, 0.0);
        assert_eq!(m.row.instrument_consistency, 1.0);
        assert!(m.flags.empty_song && m.flags.few_bars);
        assert!(m.flags.single_instrument && m.flags.degenerate_variance);
    }

    #[test]
    fn identical_bars_have_full_groove() {
        let song = one_track((0..4).map(|b| note(4 * b, 0, 60)).collect());
        assert_eq!(groove_consistency(&song), 100.0);
    }

    #[test]
    fn disjoint_complement_bars_have_zero_groove() {
        // Bar 0 fills slots 0..24, bar 1 fills slots 24..48: all 48 differ.
        let mut notes = Vec::new();
        for beat in 0..2u16 {
            for pos in 0..12u8 {
                notes.push(note(beat, pos, 60));
            }
        }
        for beat in 6..8u16 {
            for pos in 0..12u8 {
                notes.push(note(beat, pos, 60));
            }
        }
        assert_eq!(groove_consistency(&one_track(notes)), 0.0);
    }

    #[test]
    fn groove_matches_the_hand_average() {
        // Bar 0: six onsets; bar 1: none; bar 2: twelve onsets.
        // Distances 6 and 12 out of 48 average to 18.75 percent.
        let mut notes: Vec<Note> = (0..6u8).map(|p| note(0, p, 60)).collect();
        notes.extend((0..12u8).map(|p| note(8, p, 60)));
        assert!((groove_consistency(&one_track(notes)) - 81.25).abs() < 1e-9);
    }

    #[test]
    fn empty_measure_rate_matches_the_hand_count() {
        let song = CanonicalSong::from_tracks(vec![
            track_on_bars(0, &[0, 1, 2, 3]),
            track_on_bars(1, &[0, 1]),
        ]);
        assert!((empty_measure_rate(&song) - 25.0).abs() < 1e-9);
        let solo = CanonicalSong::from_tracks(vec![track_on_bars(0, &[0, 1, 2, 3])]);
        assert_eq!(empty_measure_rate(&solo), 0.0);
    }

    #[test]
    fn similarity_matches_the_hand_std() {
        // Entropies 1.0 (two classes) and 2.0 (four classes).
        let song = CanonicalSong::from_tracks(vec![
            Track { program: 0, notes: vec![note(0, 0, 60), note(1, 0, 64)] },
            Track {
                program: 1,
                notes: vec![note(0, 0, 60), note(1, 0, 62), note(2, 0, 64), note(3, 0, 65)],
            },
        ]);
        assert!((inter_instrument_similarity(&song) - 0.5).abs() < 1e-12);

        let twin = CanonicalSong::from_tracks(vec![
            Track { program: 0, notes: vec![note(0, 0, 60), note(1, 0, 64)] },
            Track { program: 1, notes: vec![note(0, 0, 60), note(1, 0, 64)] },
        ]);
        assert_eq!(inter_instrument_similarity(&twin), 0.0);
    }

    #[test]
    fn correlation_matches_the_hand_series() {
        // Counts (1,2,1,2) against (2,1,2,1).
        let g = CanonicalSong::from_tracks(vec![
            track_on_bars(0, &[0, 1, 2, 3]),
            track_on_bars(1, &[1, 3]),
        ]);
        let r = CanonicalSong::from_tracks(vec![
            track_on_bars(0, &[0, 1, 2, 3]),
            track_on_bars(1, &[0, 2]),
        ]);
        assert!((instrument_consistency(&g, &r) + 1.0).abs() < 1e-12);

        // Counts (1,2,3,4) against (2,4,6,8): perfectly linear.
        let ramp = CanonicalSong::from_tracks(
            (0..4u8)
                .map(|i| track_on_bars(i, &(u16::from(i)..4).collect::<Vec<_>>()))
                .collect(),
        );
        let steep = CanonicalSong::from_tracks(
            (0..8u8)
                .map(|i| {
                    let bars: Vec<u16> =
                        (0..4u16).filter(|&b| usize::from(i) < [2, 4, 6, 8][usize::from(b)]).collect();
                    track_on_bars(i, &bars)
                })
                .collect(),
        );
        assert_eq!(instrument_counts(&ramp, 4), vec![1, 2, 3, 4]);
        assert_eq!(instrument_counts(&steep, 4), vec![2, 4, 6, 8]);
        assert!((instrument_consistency(&ramp, &steep) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_truncates_the_longer_song() {
        // Two bars against six: only the shared prefix is compared, and
        // notes past it must not be counted (or crash).
        let short = CanonicalSong::from_tracks(vec![
            track_on_bars(0, &[0, 1]),
            track_on_bars(1, &[1]),
        ]);
        let long = CanonicalSong::from_tracks(vec![
            track_on_bars(0, &[0, 1, 2, 3, 4, 5]),
            track_on_bars(1, &[1, 3, 5]),
        ]);
        let (r, flag) = ic_core(&short, &long);
        assert!(!flag);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_use_the_degenerate_rule() {
        let a = CanonicalSong::from_tracks(vec![track_on_bars(0, &[0, 1])]);
        let b = CanonicalSong::from_tracks(vec![
            track_on_bars(0, &[0, 1]),
            track_on_bars(1, &[0, 1]),
        ]);
        let (same, flag) = ic_core(&a, &a);
        assert_eq!((same, flag), (1.0, true));
        let (diff, flag) = ic_core(&a, &b);
        assert_eq!((diff, flag), (0.0, true));
    }

    #[test]
    fn self_comparison_reproduces_the_reference_row() {
        let corpus = vec![
            CanonicalSong::from_tracks(vec![
                track_on_bars(0, &[0, 1, 2, 3]),
                track_on_bars(1, &[1, 3]),
            ]),
            one_track((0..12).map(|k| note(k, 0, 60 + k as u8)).collect()),
        ];
        let report = evaluate_corpus(&corpus, &corpus).unwrap();
        assert_eq!(report.generated, report.reference);
        for song in &report.songs {
            assert_eq!(song.row.instrument_consistency, 1.0);
        }
    }

    #[test]
    fn evaluation_requires_a_pairing() {
        let song = one_track(vec![note(0, 0, 60)]);
        assert_eq!(evaluate_corpus(&[], &[]), Err(PairingMismatch::Empty));
        assert_eq!(
            evaluate_corpus(&[song.clone()], &[song.clone(), song.clone()]),
            Err(PairingMismatch::Counts { generated: 1, reference: 2 })
        );
    }

    #[test]
    fn report_renders_and_serializes() {
        let corpus = vec![one_track((0..8).map(|k| note(k, 0, 60 + (k % 5) as u8)).collect())];
        let report = evaluate_corpus(&corpus, &corpus).unwrap();
        let table = report.table();
        assert_eq!(table.lines().count(), 3);
        assert!(table.starts_with("corpus"));
        assert!(table.contains("generated") && table.contains("reference"));

        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in ["pce", "scale", "groove", "emr"] {
            assert!(json["generated"][key].is_number(), "missing column {key}");
        }
        assert_eq!(json["songs"].as_array().unwrap().len(), 1);
        assert_eq!(json["songs"][0]["flags"]["single_instrument"], true);
    }

    use proptest::prelude::*;

    prop_compose! {
        /// Random valid song with midrange pitches so octave and chromatic
        /// shifts stay in range.
        fn arb_song()(
            tracks in proptest::collection::btree_map(
                0u8..16,
                proptest::collection::btree_set((0u16..32, 0u8..12, 24u8..96), 1..10),
                1..4,
            )
        ) -> CanonicalSong {
            let tracks = tracks
                .into_iter()
                .map(|(program, notes)| Track {
                    program,
                    notes: notes
                        .into_iter()
                        .map(|(beat, position, pitch)| note(beat, position, pitch))
                        .collect(),
                })
                .collect();
            CanonicalSong::from_tracks(tracks)
        }
    }

    /// Remap pitches, deduplicating colliding notes; a collision leaves its
    /// onset slot occupied by the surviving note.
    fn shift_pitches(song: &CanonicalSong, delta: &dyn Fn(usize, u8) -> u8) -> CanonicalSong {
        let tracks = song
            .tracks
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut seen = std::collections::BTreeMap::new();
                for n in &t.notes {
                    let shifted = Note { pitch: delta(k, n.pitch), ..*n };
                    seen.entry((shifted.beat, shifted.position, shifted.pitch)).or_insert(shifted);
                }
                Track { program: t.program, notes: seen.into_values().collect() }
            })
            .collect();
        CanonicalSong::from_tracks(tracks)
    }

    proptest! {
        #[test]
        fn metric_ranges_hold(song in arb_song()) {
            let m = song_metrics(&song, &song);
            prop_assert!(m.row.pce >= 0.0 && m.row.pce <= 12f64.log2() + 1e-12);
            for v in [m.row.scale, m.row.groove, m.row.emr] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
            prop_assert!(m.row.inter_instrument_similarity >= 0.0);
            prop_assert!((-1.0..=1.0).contains(&m.row.instrument_consistency));
        }

        #[test]
        fn self_consistency_is_one(song in arb_song()) {
            prop_assert!((instrument_consistency(&song, &song) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn entropy_ignores_octaves(song in arb_song(), up in proptest::collection::vec(any::<bool>(), 4)) {
            // Whole-track octave shifts preserve every pitch class.
            let shifted = shift_pitches(&song, &|k, p| {
                if up[k % up.len()] { p + 12 } else { p.saturating_sub(12).max(p % 12) }
            });
            prop_assert!((pitch_class_entropy(&song) - pitch_class_entropy(&shifted)).abs() < 1e-12);
            prop_assert!(
                (inter_instrument_similarity(&song) - inter_instrument_similarity(&shifted)).abs()
                    < 1e-12
            );
        }

        #[test]
        fn scale_consistency_ignores_transposition(song in arb_song(), k in 0u8..12) {
            let shifted = shift_pitches(&song, &|_, p| p + k);
            prop_assert!((scale_consistency(&song) - scale_consistency(&shifted)).abs() < 1e-9);
        }

        #[test]
        fn groove_ignores_pitch_content(song in arb_song(), k in 0u8..12) {
            // Any onset-preserving pitch change keeps the bar patterns.
            let shifted = shift_pitches(&song, &|t, p| if t % 2 == 0 { p + k } else { 96 });
            prop_assert!((groove_consistency(&song) - groove_consistency(&shifted)).abs() < 1e-12);
            prop_assert!((empty_measure_rate(&song) - empty_measure_rate(&shifted)).abs() < 1e-12);
        }
    }
}
