#ifndef PDO_H
#define PDO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PdoStatus {
  PDO_STATUS_OK = 0,
  PDO_STATUS_NULL_POINTER = 1,
  PDO_STATUS_INVALID_ARGUMENT = 2,
  PDO_STATUS_CONFIG = 3,
  PDO_STATUS_NOT_ELLIPTIC = 4,
  PDO_STATUS_NUMERICAL = 5,
  PDO_STATUS_ESTIMATE_VIOLATION = 6,
  PDO_STATUS_IO = 7,
  PDO_STATUS_PANIC = 8,
} PdoStatus;

typedef struct PdoField PdoField;

typedef struct PdoGrid PdoGrid;

typedef struct PdoSymbol PdoSymbol;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *pdo_last_error_message(void);

// Library version as a static string.
const char *pdo_version(void);

// Periodic grid on `[-half_width, half_width)^dim` with `n` points per axis.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum PdoStatus pdo_grid_new(size_t dim, size_t n, double half_width, struct PdoGrid **out);

// Number of grid nodes, or 0 for a null handle.
//
// # Safety
// `grid` must be null or a live handle from [`pdo_grid_new`].
size_t pdo_grid_len(const struct PdoGrid *grid);

// # Safety
// `grid` must be null or a handle from [`pdo_grid_new`] not yet freed.
void pdo_grid_free(struct PdoGrid *grid);

// Builds a symbol from its JSON description, e.g. `{"kind": "heat"}`.
//
// # Safety
// `json` must be a NUL-terminated string, `grid` a live handle and `out`
// writable.
enum PdoStatus pdo_symbol_from_json(const char *json,
                                    const struct PdoGrid *grid,
                                    struct PdoSymbol **out);

// # Safety
// `symbol` must be null or a handle from [`pdo_symbol_from_json`] not yet freed.
void pdo_symbol_free(struct PdoSymbol *symbol);

// Field from nodal values. `im` may be null for real data.
//
// # Safety
// `re` (and `im` when non-null) must point to `len` readable doubles,
// `grid` must be live and `out` writable.
enum PdoStatus pdo_field_from_values(const struct PdoGrid *grid,
                                     const double *re,
                                     const double *im,
                                     size_t len,
                                     struct PdoField **out);

// Copies nodal values out. `im` may be null to skip imaginary parts.
//
// # Safety
// `re` (and `im` when non-null) must point to `len` writable doubles.
enum PdoStatus pdo_field_values(const struct PdoField *field, double *re, double *im, size_t len);

// # Safety
// `field` must be null or a field handle not yet freed.
void pdo_field_free(struct PdoField *field);

// Evolves `u0` from time 0 to `t`. Non-elliptic symbols are rejected.
//
// # Safety
// Handles must be live and `out` writable.
enum PdoStatus pdo_solve(const struct PdoSymbol *symbol,
                         const struct PdoField *u0,
                         double t,
                         struct PdoField **out);

// Runs one verification scenario given as JSON and returns its summary
// JSON through `out`, to be released with [`pdo_string_free`].
//
// # Safety
// `scenario_json` must be a NUL-terminated string and `out` writable.
enum PdoStatus pdo_verify_json(const char *scenario_json, char **out);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void pdo_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDO_H */
