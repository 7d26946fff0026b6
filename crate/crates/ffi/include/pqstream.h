#ifndef PQSTREAM_H
#define PQSTREAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Most values any record carries (a harmonics record).
 */
#define PQS_RECORD_MAX_VALUES 205

typedef enum PqsStatus {
  PQS_STATUS_OK = 0,
  PQS_STATUS_NULL_POINTER = 1,
  PQS_STATUS_INVALID_ARGUMENT = 2,
  PQS_STATUS_ANALYSIS = 3,
  PQS_STATUS_IO = 4,
  PQS_STATUS_DATABASE = 5,
  /*
   Nothing to pop.
   */
  PQS_STATUS_EMPTY = 6,
  /*
   The call was rejected because the handle was already finished.
   */
  PQS_STATUS_FINISHED = 7,
  PQS_STATUS_PANIC = 99,
} PqsStatus;

typedef enum PqsRecordKind {
  PQS_RECORD_KIND_RMS = 0,
  PQS_RECORD_KIND_FREQUENCY = 1,
  PQS_RECORD_KIND_POWER = 2,
  PQS_RECORD_KIND_HARMONICS = 3,
  PQS_RECORD_KIND_DEMAND = 4,
  PQS_RECORD_KIND_FLICKER_PST = 5,
  PQS_RECORD_KIND_FLICKER_PLT = 6,
} PqsRecordKind;

typedef enum PqsEventType {
  PQS_EVENT_TYPE_SAG = 0,
  PQS_EVENT_TYPE_SWELL = 1,
  PQS_EVENT_TYPE_INTERRUPTION = 2,
  PQS_EVENT_TYPE_UNBALANCE = 3,
} PqsEventType;

/*
 Opaque monitor handle.
 */
typedef struct PqsMonitor PqsMonitor;

/*
 One record. `values[0..value_count]` follow the transfer-file column
 order of the record's parameter (see [`pqs_record_column_name`]);
 undefined values are NaN.
 */
typedef struct PqsRecord {
  enum PqsRecordKind kind;
  /*
   Sample index one past the record's window.
   */
  uint64_t end_sample;
  size_t value_count;
  double values[PQS_RECORD_MAX_VALUES];
} PqsRecord;

typedef struct PqsEvent {
  uint64_t event_id;
  enum PqsEventType event_type;
  uint64_t start_sample;
  uint64_t end_sample;
  uint64_t size_in_samples;
  /*
   First sample of the raw capture and its length per channel.
   */
  uint64_t capture_start;
  uint64_t capture_samples;
  /*
   Non-zero if the stream ended while the event was active.
   */
  uint8_t truncated;
} PqsEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next failing call on the same thread.
 */
const char *pqs_last_error(void);

/*
 Creates a monitor with default thresholds around the nominal values.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum PqsStatus pqs_monitor_new(double nominal_frequency,
                               double nominal_voltage_rms,
                               double nominal_current_rms,
                               struct PqsMonitor **out);

/*
 Releases a monitor; NULL is ignored.

 # Safety
 `monitor` must come from [`pqs_monitor_new`] and not be used afterwards.
 */
void pqs_monitor_free(struct PqsMonitor *monitor);

/*
 Index of the next sample the monitor expects.

 # Safety
 `monitor` must be a live handle or NULL.
 */
uint64_t pqs_monitor_next_sample(const struct PqsMonitor *monitor);

/*
 Feeds `n` contiguous samples of each of the six channels.

 # Safety
 `monitor` must be a live handle; each channel pointer must address `n`
 readable doubles.
 */
enum PqsStatus pqs_monitor_push(struct PqsMonitor *monitor,
                                const double *va,
                                const double *vb,
                                const double *vc,
                                const double *ia,
                                const double *ib,
                                const double *ic,
                                size_t n);

/*
 Ends the stream: still-active events are closed and become poppable.
 Further pushes fail with `FINISHED`.

 # Safety
 `monitor` must be a live handle.
 */
enum PqsStatus pqs_monitor_finish(struct PqsMonitor *monitor);

/*
 Records waiting to be popped.

 # Safety
 `monitor` must be a live handle or NULL.
 */
size_t pqs_monitor_pending_records(const struct PqsMonitor *monitor);

/*
 Pops the oldest record into `out`; `EMPTY` when none is waiting.

 # Safety
 `monitor` must be a live handle and `out` writable.
 */
enum PqsStatus pqs_monitor_pop_record(struct PqsMonitor *monitor, struct PqsRecord *out);

/*
 Pops the oldest closed event into `out`; `EMPTY` when none is waiting.

 # Safety
 `monitor` must be a live handle and `out` writable.
 */
enum PqsStatus pqs_monitor_pop_event(struct PqsMonitor *monitor, struct PqsEvent *out);

/*
 Name of value `index` of records of `kind`, or NULL if out of range. The
 string is static.
 */
const char *pqs_record_column_name(enum PqsRecordKind kind, size_t index);

/*
 THD in percent from harmonic magnitudes (`magnitudes[0]` is the
 fundamental). Writes NaN when the fundamental is at or below `floor`.

 # Safety
 `magnitudes` must address `n` doubles and `out` be writable.
 */
enum PqsStatus pqs_compute_thd(const double *magnitudes, size_t n, double floor, double *out);

/*
 Long-term flicker from exactly 12 short-term values.

 # Safety
 `pst` must address `n` doubles and `out` be writable.
 */
enum PqsStatus pqs_compute_plt(const double *pst, size_t n, double *out);

/*
 Total outgoing data rate (bits/s) of one measurement point with the
 default precision and cadences.

 # Safety
 Both pointers must be writable.
 */
enum PqsStatus pqs_traffic_budget(double *with_events, double *without_events);

/*
 Ingests the transfer-file tree at `root` into the database file `db`.
 `rows_inserted` (may be NULL) receives the number of new rows.

 # Safety
 `root` and `db` must be NUL-terminated strings.
 */
enum PqsStatus pqs_ingest_directory(const char *root, const char *db, uint64_t *rows_inserted);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PQSTREAM_H */
