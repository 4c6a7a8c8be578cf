#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cortenc/surface.hpp"
#include "cortenc/tensor.hpp"

namespace cortenc {

// Linear latent-factor cohort: frame(subject s, stimulus i) =
// gain_s * (z_i . Mixing_s . Basis) + N(0, sigma). The z_i are the
// ground-truth stimulus embeddings used for decoding evaluation.
struct SyntheticCohortConfig {
  int64_t n_subjects = 4;
  int64_t n_stimuli = 250;
  int64_t latent_dim = 6;
  Tensor basis_patterns;                // [S, V], rows unit norm
  std::vector<Tensor> subject_mixings;  // per subject [S, S], orthogonal
  std::vector<Tensor> subject_gains;    // per subject [V]
  double noise_sigma = 0.1;
  uint64_t seed = 0;

  // Orthogonality to 1e-6, unit-norm basis rows, consistent shapes.
  void validate() const;
};

struct SyntheticCohort {
  std::vector<SurfaceSession> sessions;  // one per subject, frames = stimuli
  Tensor stimulus_embeddings;            // [n_stimuli, S]
};

// Fills basis/mixings/gains from the seed. Subject mixings are small
// random rotations around the identity (rotation_scale ~ radians), so
// subjects share functional structure the way anatomically aligned
// cortices do; gains jitter per vertex around 1.
SyntheticCohortConfig make_synthetic_config(int64_t n_subjects, int64_t n_stimuli,
                                            int64_t latent_dim, int64_t n_vertices,
                                            double noise_sigma, uint64_t seed,
                                            double rotation_scale = 0.25,
                                            double gain_jitter = 0.2);

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortConfig& cfg);

enum class MapStyle { full, ellipse, two_lobes };

MapStyle map_style_from_name(const std::string& name);
const char* map_style_name(MapStyle s);

// Builds a canonical (row-major numbered) vertex->pixel map for the
// requested mask shape.
VertexPixelMap make_vertex_map(MapStyle style, int64_t height, int64_t width);

}  // namespace cortenc
