/* C interface to the depsim deterministic mock engines. */

#ifndef DEPSIM_H
#define DEPSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this interface.
 */
typedef enum DepsimStatus {
  /**
   * The call succeeded.
   */
  DEPSIM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DEPSIM_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  DEPSIM_STATUS_INVALID_UTF8 = 2,
  /**
   * Input files could not be read, parsed, or compiled into an engine.
   */
  DEPSIM_STATUS_LOAD_FAILED = 3,
  /**
   * The request JSON was malformed or broke a request invariant.
   */
  DEPSIM_STATUS_INVALID_REQUEST = 4,
  /**
   * A bug: the library panicked and the call was absorbed at the
   * boundary.
   */
  DEPSIM_STATUS_INTERNAL_PANIC = 5,
} DepsimStatus;

/**
 * An opened mock engine. Opaque to C; obtain from one of the
 * `depsim_mock_open_*` functions and release with [`depsim_mock_close`].
 */
typedef struct DepsimMock DepsimMock;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message from the calling thread's most recent failing call, or null if
 * none has failed yet. The pointer stays valid until the next failing
 * call on the same thread; do not free it.
 */
const char *depsim_last_error(void);

/**
 * The library version as a static string; do not free it.
 */
const char *depsim_version(void);

/**
 * Opens a tiered replay engine over a JSONL trace file. `id_patterns` is an
 * optional array of `id_pattern_count` whole-segment regexes (such as
 * `item-[0-9]+`) folded to `{id}` when matching by endpoint shape; all-digit
 * and UUID segments are always folded.
 *
 * # Safety
 * `traces_path` must be a valid C string, `id_patterns` an array of
 * `id_pattern_count` valid C strings (or null when the count is 0), and
 * `out` a valid location to store the handle.
 */
enum DepsimStatus depsim_mock_open_replay(const char *traces_path,
                                          const char *const *id_patterns,
                                          uintptr_t id_pattern_count,
                                          struct DepsimMock **out);

/**
 * Opens a pattern engine: mines rules and entity lifecycles from a JSONL
 * trace file and serves from them. Arguments as for
 * [`depsim_mock_open_replay`].
 *
 * # Safety
 * Same contract as [`depsim_mock_open_replay`].
 */
enum DepsimStatus depsim_mock_open_pattern(const char *traces_path,
                                           const char *const *id_patterns,
                                           uintptr_t id_pattern_count,
                                           struct DepsimMock **out);

/**
 * Opens a contract engine from a contract document. The document is
 * validated; any diagnostic rejects it with [`DepsimStatus::LoadFailed`]
 * and the full list in [`depsim_last_error`].
 *
 * # Safety
 * `contract_path` must be a valid C string and `out` a valid location to
 * store the handle.
 */
enum DepsimStatus depsim_mock_open_contract(const char *contract_path, struct DepsimMock **out);

/**
 * Answers one request. `request_json` must carry `method` and `path`
 * (path starting with `/`); `query`, `body`, and `headers` are optional.
 * On success `*out_response_json` receives a JSON rendering of the
 * engine's answer — release it with [`depsim_string_free`].
 *
 * # Safety
 * `mock` must be a live handle from an open function, `request_json` a
 * valid C string, and `out_response_json` a valid location to store the
 * string.
 */
enum DepsimStatus depsim_mock_respond(struct DepsimMock *mock,
                                      const char *request_json,
                                      char **out_response_json);

/**
 * Drops the handle's session state: the pattern engine forgets created
 * entities and restarts its id counter, the contract engine restores its
 * declared initial variables. Replay is stateless, so this is a no-op.
 *
 * # Safety
 * `mock` must be a live handle from an open function.
 */
enum DepsimStatus depsim_mock_reset(struct DepsimMock *mock);

/**
 * Releases a handle. Null is accepted and ignored.
 *
 * # Safety
 * `mock` must be null or a handle not closed before; the handle must not
 * be used afterwards.
 */
void depsim_mock_close(struct DepsimMock *mock);

/**
 * Releases a string returned through an out-parameter. Null is accepted
 * and ignored.
 *
 * # Safety
 * `s` must be null or a string this library returned, freed at most once.
 */
void depsim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEPSIM_H */
