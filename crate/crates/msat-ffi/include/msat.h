/* C interface to the msat library. */

#ifndef MSAT_H
#define MSAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MsatStatus {
  MSAT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MSAT_STATUS_NULL_ARGUMENT,
  /**
   * An argument was out of range (bad scale name, zero top_k, ...).
   */
  MSAT_STATUS_BAD_ARGUMENT,
  /**
   * A string argument was not valid UTF-8.
   */
  MSAT_STATUS_INVALID_UTF8,
  /**
   * The bytes are not a Standard MIDI File this library reads.
   */
  MSAT_STATUS_BAD_MIDI,
  /**
   * The MIDI parsed but was rejected by corpus normalization
   * (not 4/4 throughout, or no pitched notes).
   */
  MSAT_STATUS_REJECTED,
  /**
   * The text is not a valid song document.
   */
  MSAT_STATUS_BAD_JSON,
  MSAT_STATUS_IO,
  /**
   * The file is not a model checkpoint this library reads.
   */
  MSAT_STATUS_BAD_CHECKPOINT,
  /**
   * Sampling failed (bad prompt, no instruments, ...).
   */
  MSAT_STATUS_GENERATION_FAILED,
  /**
   * The operation needs the other fusion mode.
   */
  MSAT_STATUS_WRONG_FUSION_MODE,
  /**
   * The library panicked; the call had no effect.
   */
  MSAT_STATUS_PANIC,
} MsatStatus;

typedef struct MsatModel MsatModel;

typedef struct MsatSong MsatSong;

/**
 * Sampling knobs for the generate calls. Pass null for defaults.
 */
typedef struct MsatSampling {
  uint64_t seed;
  /**
   * Softmax temperature for every field; must be positive.
   */
  double temperature;
  /**
   * Top-k cutoff for every field; must be at least 1.
   */
  uint32_t top_k;
  /**
   * Hard cap on generated events.
   */
  uint32_t max_events;
  /**
   * Reject grammar-breaking samples before drawing.
   */
  bool validity_filter;
} MsatSampling;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Fill `out` with the default sampling configuration.
 */
enum MsatStatus msat_sampling_default(struct MsatSampling *out);

/**
 * Parse a Standard MIDI File and normalize it into a song.
 */
enum MsatStatus msat_song_from_midi(const uint8_t *bytes, uintptr_t len, struct MsatSong **out);

/**
 * Parse a song document (the JSON the library writes).
 */
enum MsatStatus msat_song_from_json(const char *text, struct MsatSong **out);

void msat_song_free(struct MsatSong *song);

/**
 * Total notes across all tracks; 0 for null.
 */
uintptr_t msat_song_note_count(const struct MsatSong *song);

/**
 * Length in beats; 0 for null.
 */
uint16_t msat_song_length_beats(const struct MsatSong *song);

/**
 * Render the song document as JSON. Free with msat_string_free.
 */
enum MsatStatus msat_song_to_json(const struct MsatSong *song, char **out);

/**
 * Render the song as a Standard MIDI File. Free with msat_bytes_free.
 */
enum MsatStatus msat_song_to_midi(const struct MsatSong *song, uint8_t **out, uintptr_t *out_len);

/**
 * Serialize the song as token text at the named scale ("note", "bar", or
 * "track"). Free with msat_string_free.
 */
enum MsatStatus msat_song_tokens(const struct MsatSong *song, const char *scale, char **out);

/**
 * Score one song against a reference and return the metrics (values and
 * degeneracy flags) as JSON. Free with msat_string_free.
 */
enum MsatStatus msat_song_metrics_json(const struct MsatSong *song,
                                       const struct MsatSong *reference,
                                       char **out);

/**
 * Load a multi-scale checkpoint from a file.
 */
enum MsatStatus msat_model_load(const char *path, struct MsatModel **out);

void msat_model_free(struct MsatModel *model);

/**
 * Generate a song from scratch for the given General MIDI programs.
 */
enum MsatStatus msat_generate_instruments(const struct MsatModel *model,
                                          const uint8_t *programs,
                                          uintptr_t n_programs,
                                          const struct MsatSampling *opts,
                                          struct MsatSong **out);

/**
 * Continue a prompt song past its first `beats` beats.
 */
enum MsatStatus msat_generate_continuation(const struct MsatModel *model,
                                           const struct MsatSong *prompt,
                                           uint16_t beats,
                                           const struct MsatSampling *opts,
                                           struct MsatSong **out);

/**
 * The per-token-type fusion attention table of a global-fusion model.
 * Free with msat_string_free.
 */
enum MsatStatus msat_model_attn_report(const struct MsatModel *model, char **out);

/**
 * Free a string returned by this library.
 */
void msat_string_free(char *text);

/**
 * Free a byte buffer returned by this library.
 */
void msat_bytes_free(uint8_t *bytes, uintptr_t len);

/**
 * Static name for a status code.
 */
const char *msat_status_name(enum MsatStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSAT_H */
