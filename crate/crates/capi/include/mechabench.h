#ifndef MECHABENCH_H
#define MECHABENCH_H

/* Generated by cbindgen from mechabench-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every FFI entry point.
typedef enum MbStatus {
  // Success.
  MB_STATUS_OK = 0,
  // A required pointer argument was NULL.
  MB_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  MB_STATUS_INVALID_UTF8 = 2,
  // Input could not be parsed (catalog, action JSON).
  MB_STATUS_PARSE_ERROR = 3,
  // The action was dispatched and rejected; the response JSON carries the
  // taxonomized error.
  MB_STATUS_ACTION_REJECTED = 4,
  // No active scene for the requested operation.
  MB_STATUS_NO_SCENE = 5,
  // Export or internal engine failure.
  MB_STATUS_ENGINE_ERROR = 6,
  // A panic was caught at the FFI boundary.
  MB_STATUS_PANIC = 7,
} MbStatus;

// Opaque construction session handle.
typedef struct MbSession MbSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *mb_version(void);

// Create a session over the embedded default catalog.
struct MbSession *mb_session_new(void);

// Create a session from a catalog document.
//
// # Safety
// `catalog_toml` must be a valid NUL-terminated string and `out_session` a
// valid pointer; the returned session must be freed with `mb_session_free`.
enum MbStatus mb_session_new_with_catalog(const char *catalog_toml, struct MbSession **out_session);

// Destroy a session. NULL is ignored.
//
// # Safety
// `session` must be NULL or a pointer returned by a session constructor, not
// yet freed.
void mb_session_free(struct MbSession *session);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a pointer produced by a `mb_*` out-parameter, not yet
// freed.
void mb_string_free(char *s);

// Apply one action given as the JSON envelope
// `{"name": ..., "arguments": {...}, "note": ...}` and return the full
// ActionResult as JSON in `out_response_json` (set on both accepted and
// rejected actions).
//
// # Safety
// `session`, `action_json`, and `out_response_json` must be valid pointers.
enum MbStatus mb_apply_json(struct MbSession *session,
                            const char *action_json,
                            char **out_response_json);

// Machine summary prose for the live scene.
//
// # Safety
// `session` and `out_text` must be valid pointers.
enum MbStatus mb_machine_summary(struct MbSession *session, char **out_text);

// Deterministic digest of the live scene.
//
// # Safety
// `session` and `out_hash` must be valid pointers.
enum MbStatus mb_state_hash(struct MbSession *session, char **out_hash);

// Export the live scene plus trajectory log as the native JSON document.
//
// # Safety
// `session` and `out_json` must be valid pointers.
enum MbStatus mb_export_native(struct MbSession *session, char **out_json);

// Export the live scene as the machine-file markup document. The scene must
// be finalized.
//
// # Safety
// `session`, `name`, and `out_xml` must be valid pointers.
enum MbStatus mb_export_machine_file(struct MbSession *session, const char *name, char **out_xml);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MECHABENCH_H */
