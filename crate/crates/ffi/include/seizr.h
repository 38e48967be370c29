/* C interface to the seizr neonatal seizure detector.
 *
 * All functions return a seizr_status unless noted; on failure the message is
 * available from seizr_last_error() until the next seizr call on that thread.
 * Handles are opaque and must be released with the matching _free function.
 */
#ifndef SEIZR_H
#define SEIZR_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum seizr_status {
    SEIZR_OK = 0,
    SEIZR_ERR_NULL_POINTER = 1,
    SEIZR_ERR_INVALID_ARGUMENT = 2,
    SEIZR_ERR_INVALID_DATA = 3,
    SEIZR_ERR_UNSUPPORTED_RATE = 4,
    SEIZR_ERR_IO = 5,
    SEIZR_ERR_INTERNAL = 6
} seizr_status;

typedef struct seizr_detector seizr_detector;
typedef struct seizr_prediction seizr_prediction;

/* Library version as a static NUL-terminated string. */
const char *seizr_version(void);

/* Message for the last failure on this thread; empty after a success. */
const char *seizr_last_error(void);

/* Loads a detector from a weights file written by the trainer. */
seizr_status seizr_detector_open(const char *weights_path, seizr_detector **out);

/* Builds a freshly initialized detector ("nano" .. "xl") from a seed. */
seizr_status seizr_detector_create(const char *variant, uint64_t seed,
                                   seizr_detector **out);

void seizr_detector_free(seizr_detector *det);

/* Scalar parameter count, or 0 for a null handle. */
uint64_t seizr_detector_params(const seizr_detector *det);

/* Writes the NUL-terminated variant name into buf (len bytes). */
seizr_status seizr_detector_variant(const seizr_detector *det, char *buf,
                                    size_t len);

/* Runs the full pipeline over channel-major samples: channel c occupies
 * samples[c * n_samples .. (c + 1) * n_samples]. Supported rates: 64, 200,
 * 256, 500 Hz. threshold is in [0, 1]; pass 0.5 for the default policy. */
seizr_status seizr_detector_predict(const seizr_detector *det,
                                    const float *samples, size_t n_channels,
                                    size_t n_samples, uint32_t rate_hz,
                                    double threshold, seizr_prediction **out);

void seizr_prediction_free(seizr_prediction *pred);

/* Recording length in seconds, or 0 for a null handle. */
double seizr_prediction_duration_s(const seizr_prediction *pred);

/* Samples per second of the probability trace (constant). */
uint32_t seizr_prediction_trace_rate(void);

/* Length of the global probability trace; 0 when the recording was shorter
 * than one model window. */
size_t seizr_prediction_trace_len(const seizr_prediction *pred);

/* Copies the smoothed global probability trace into out; len must equal
 * seizr_prediction_trace_len(). */
seizr_status seizr_prediction_trace(const seizr_prediction *pred, double *out,
                                    size_t len);

/* Number of detected global events, or 0 for a null handle. */
size_t seizr_prediction_event_count(const seizr_prediction *pred);

/* Onset and offset (seconds from recording start) of event index. */
seizr_status seizr_prediction_event(const seizr_prediction *pred, size_t index,
                                    double *onset_s, double *offset_s);

#ifdef __cplusplus
}
#endif

#endif /* SEIZR_H */
