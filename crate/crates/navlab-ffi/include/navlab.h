#ifndef NAVLAB_H
#define NAVLAB_H

/* Generated by cbindgen from navlab-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum NavStatus {
  NavOk = 0,
  NavNullPointer = 1,
  NavInvalidArgument = 2,
  NavParseError = 3,
  NavUnsupported = 4,
  NavNumericError = 5,
  NavIoError = 6,
  NavInternalPanic = 7,
} NavStatus;

/**
 * Opaque cost-geometry handle.
 */
typedef struct NavCostGeometry NavCostGeometry;

/**
 * Opaque sampled edge-set handle.
 */
typedef struct NavEdgeSet NavEdgeSet;

/**
 * Opaque geometry handle.
 */
typedef struct NavGeometry NavGeometry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *nav_last_error(void);

/**
 * Frees a string returned by any `_json` entry point.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void nav_string_free(char *s);

/**
 * Builds a geometry from a spec string such as `cycle:n=1024`,
 * `torus:side=64,dims=2`, or `setsystem:branch=2,depth=10`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NavStatus nav_geometry_new(const char *spec, struct NavGeometry **out);

/**
 * # Safety
 * `g` must come from `nav_geometry_new` and not be freed twice.
 */
void nav_geometry_free(struct NavGeometry *g);

/**
 * # Safety
 * `g` must be a live geometry handle.
 */
uint64_t nav_geometry_vertex_count(const struct NavGeometry *g);

/**
 * # Safety
 * `g` must be a live geometry handle.
 */
uint64_t nav_geometry_scale_count(const struct NavGeometry *g);

/**
 * # Safety
 * `g` must be a live geometry handle.
 */
double nav_geometry_gamma(const struct NavGeometry *g);

/**
 * Semi-metric distance between two vertices.
 *
 * # Safety
 * `g` must be a live geometry handle; `out` a valid pointer.
 */
enum NavStatus nav_geometry_distance(const struct NavGeometry *g,
                                     uint32_t u,
                                     uint32_t v,
                                     double *out);

/**
 * Runs the empirical coherence verification; writes a JSON report.
 *
 * # Safety
 * `g` must be a live geometry handle; `out_json` a valid pointer.
 */
enum NavStatus nav_geometry_coherence_json(const struct NavGeometry *g,
                                           double rho,
                                           uint64_t sample_pairs,
                                           uint64_t seed,
                                           char **out_json);

/**
 * Attaches per-scale costs to a geometry. Cost specs: `indexing:alpha=1.0`,
 * `logdensity:alpha=1.0`, `explicit:c1,c2,...`.
 *
 * # Safety
 * `g` must be a live geometry handle; `spec` NUL-terminated; `out` valid.
 */
enum NavStatus nav_cost_geometry_new(const struct NavGeometry *g,
                                     const char *spec,
                                     struct NavCostGeometry **out);

/**
 * # Safety
 * `cg` must come from `nav_cost_geometry_new` and not be freed twice.
 */
void nav_cost_geometry_free(struct NavCostGeometry *cg);

/**
 * Solves the entropic profile at a budget; the JSON object carries the
 * solution and its sandwich parameters.
 *
 * # Safety
 * `cg` must be a live cost-geometry handle; `out_json` valid.
 */
enum NavStatus nav_solve_json(const struct NavCostGeometry *cg, double budget, char **out_json);

/**
 * Budget thresholds at exponent slack `theta`, as JSON.
 *
 * # Safety
 * `cg` must be a live cost-geometry handle; `out_json` valid.
 */
enum NavStatus nav_thresholds_json(const struct NavCostGeometry *cg, double theta, char **out_json);

/**
 * Samples long-range edges from the entropic product measure at `budget`.
 *
 * # Safety
 * `cg` must be a live cost-geometry handle; `out` valid.
 */
enum NavStatus nav_sample_product(const struct NavCostGeometry *cg,
                                  double budget,
                                  uint64_t seed,
                                  struct NavEdgeSet **out);

/**
 * Samples one exact uniform bounded-cost edge set.
 *
 * # Safety
 * `cg` must be a live cost-geometry handle; `out` valid.
 */
enum NavStatus nav_sample_exact(const struct NavCostGeometry *cg,
                                double budget,
                                uint64_t seed,
                                struct NavEdgeSet **out);

/**
 * Samples rank-based-augmentation edges, `edges_per_vertex` per vertex.
 *
 * # Safety
 * `g` must be a live geometry handle; `out` valid.
 */
enum NavStatus nav_sample_rba(const struct NavGeometry *g,
                              uint32_t edges_per_vertex,
                              uint64_t seed,
                              struct NavEdgeSet **out);

/**
 * # Safety
 * `set` must come from a sampler and not be freed twice.
 */
void nav_edge_set_free(struct NavEdgeSet *set);

/**
 * # Safety
 * `set` must be a live edge-set handle.
 */
uint64_t nav_edge_set_len(const struct NavEdgeSet *set);

/**
 * The `index`-th edge of the set (sorted order).
 *
 * # Safety
 * `set` must be a live edge-set handle; `u`, `v` valid pointers.
 */
enum NavStatus nav_edge_set_edge(const struct NavEdgeSet *set,
                                 uint64_t index,
                                 uint32_t *u,
                                 uint32_t *v);

/**
 * Routes a batch of random pairs over substrate + edge set and writes the
 * statistics as JSON. `step_budget = 0` selects the default `10 (ln n)^2`.
 *
 * # Safety
 * `g` and `set` must be live handles; `out_json` valid.
 */
enum NavStatus nav_route_batch_json(const struct NavGeometry *g,
                                    const struct NavEdgeSet *set,
                                    uint64_t pairs,
                                    uint64_t step_budget,
                                    uint64_t seed,
                                    char **out_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* NAVLAB_H */
