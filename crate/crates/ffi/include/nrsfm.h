#ifndef NRSFM_H
#define NRSFM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NrsfmGenerator {
  NRSFM_GENERATOR_ISOMETRIC = 0,
  NRSFM_GENERATOR_EQUIAREAL = 1,
} NrsfmGenerator;

typedef enum NrsfmMethod {
  NRSFM_METHOD_SNR_DSL = 0,
  NRSFM_METHOD_SNR_PP = 1,
  NRSFM_METHOD_QNR_DSL = 2,
  NRSFM_METHOD_QNR_PP = 3,
  NRSFM_METHOD_HNR_DSL = 4,
  NRSFM_METHOD_HNR_PP = 5,
  NRSFM_METHOD_HNR_PP_ACCEL = 6,
} NrsfmMethod;

// Result codes shared by all calls.
typedef enum NrsfmStatus {
  NRSFM_STATUS_OK = 0,
  NRSFM_STATUS_NULL_POINTER = 1,
  NRSFM_STATUS_INVALID_INPUT = 2,
  NRSFM_STATUS_GENERATION = 3,
  NRSFM_STATUS_SOLVER = 4,
  NRSFM_STATUS_INCOMPATIBLE = 5,
  NRSFM_STATUS_IO = 6,
  NRSFM_STATUS_PANIC = 7,
} NrsfmStatus;

// Solved point clouds and the graph they were solved on.
typedef struct NrsfmReconstruction NrsfmReconstruction;

// Observations, with optional ground truth and graph.
typedef struct NrsfmScene NrsfmScene;

// Synthetic scene parameters. Start from [`nrsfm_generator_params_default`].
typedef struct NrsfmGeneratorParams {
  enum NrsfmGenerator generator;
  size_t m_a;
  size_t m_b;
  size_t n;
  double x_sigma;
  double chi_e;
  uint64_t seed;
  size_t knn;
  double depth_ratio;
  double max_bend;
  double hide_fraction;
  // Non-zero places folds on grid lines.
  uint8_t aligned_folds;
  // Non-zero draws Gaussian rather than uniform pixel noise.
  uint8_t gaussian_noise;
} NrsfmGeneratorParams;

// Reconstruction parameters. Start from [`nrsfm_reconstruct_params_default`].
typedef struct NrsfmReconstructParams {
  enum NrsfmMethod method;
  double lambda_i;
  double lambda_e;
  // Neighbours per point when the graph is rebuilt.
  size_t knn;
  // Pseudo-neighbours for hidden points; 0 disables completion.
  size_t completion;
  double tol;
  size_t max_iter;
  // Non-zero reuses the graph stored with the scene when there is one.
  uint8_t use_scene_graph;
} NrsfmReconstructParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *nrsfm_version(void);

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *nrsfm_last_error(void);

struct NrsfmGeneratorParams nrsfm_generator_params_default(void);

struct NrsfmReconstructParams nrsfm_reconstruct_params_default(void);

// Generates a synthetic scene.
//
// # Safety
// `params` must point to a valid struct and `out` to writable storage.
enum NrsfmStatus nrsfm_scene_generate(const struct NrsfmGeneratorParams *params,
                                      struct NrsfmScene **out);

// Builds a scene from pixel tracks laid out image-major as
// `pixels[(i * m + j) * 2 + {0, 1}]`. `visibility` holds `n * m` bytes
// (non-zero for visible) or is null when every point is visible.
//
// # Safety
// The arrays must hold the stated number of elements.
enum NrsfmStatus nrsfm_scene_from_pixels(size_t n,
                                         size_t m,
                                         const double *pixels,
                                         const uint8_t *visibility,
                                         double fx,
                                         double fy,
                                         double cx,
                                         double cy,
                                         struct NrsfmScene **out);

// Parses a scene from its JSON text.
//
// # Safety
// `json` must be a NUL-terminated string.
enum NrsfmStatus nrsfm_scene_from_json(const char *json, struct NrsfmScene **out);

// Serializes a scene. Release the string with [`nrsfm_string_free`].
//
// # Safety
// `scene` must be a live handle and `out` writable.
enum NrsfmStatus nrsfm_scene_to_json(const struct NrsfmScene *scene, char **out);

// Writes the image and point counts.
//
// # Safety
// `scene` must be a live handle; `n` and `m` writable.
enum NrsfmStatus nrsfm_scene_dims(const struct NrsfmScene *scene, size_t *n, size_t *m);

// Copies the ground truth as `n * m * 3` doubles, image-major.
//
// # Safety
// `scene` must be a live handle and `buf` hold `len` doubles.
enum NrsfmStatus nrsfm_scene_ground_truth(const struct NrsfmScene *scene, double *buf, size_t len);

// # Safety
// `scene` must be null or a handle not yet freed.
void nrsfm_scene_free(struct NrsfmScene *scene);

// Solves one of the relaxations on a scene.
//
// # Safety
// `scene` must be a live handle, `params` valid and `out` writable.
enum NrsfmStatus nrsfm_reconstruct(const struct NrsfmScene *scene,
                                   const struct NrsfmReconstructParams *params,
                                   struct NrsfmReconstruction **out);

// Writes the image and point counts of a reconstruction.
//
// # Safety
// `rec` must be a live handle; `n` and `m` writable.
enum NrsfmStatus nrsfm_reconstruction_dims(const struct NrsfmReconstruction *rec,
                                           size_t *n,
                                           size_t *m);

// Copies the unscaled points as `n * m * 3` doubles, image-major.
//
// # Safety
// `rec` must be a live handle and `buf` hold `len` doubles.
enum NrsfmStatus nrsfm_reconstruction_points(const struct NrsfmReconstruction *rec,
                                             double *buf,
                                             size_t len);

// Scale-aligned RMS against the scene ground truth over visible points,
// absolute and as a fraction of the scene diameter. Either output may be null.
//
// # Safety
// Both handles must be live.
enum NrsfmStatus nrsfm_reconstruction_rms(const struct NrsfmReconstruction *rec,
                                          const struct NrsfmScene *scene,
                                          double *rms,
                                          double *relative);

// # Safety
// `rec` must be null or a handle not yet freed.
void nrsfm_reconstruction_free(struct NrsfmReconstruction *rec);

// Runs the area-compensation sampler and writes the fractions of real
// compensating depths for one and two displaced vertices.
//
// # Safety
// `first` and `second` must be writable.
enum NrsfmStatus nrsfm_lemma1(size_t samples,
                              double h1_max,
                              double h2_max,
                              double edge_scale,
                              uint64_t seed,
                              double *first,
                              double *second);

// # Safety
// `s` must be null or a string returned by this library.
void nrsfm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NRSFM_H */
