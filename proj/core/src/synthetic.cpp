#include "cortenc/synthetic.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "cortenc/errors.hpp"
#include "cortenc/rng.hpp"

namespace cortenc {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void SyntheticCohortConfig::validate() const {
  if (n_subjects <= 0 || n_stimuli <= 0 || latent_dim <= 0)
    throw ConfigError("synthetic config: counts must be positive");
  if (noise_sigma < 0) throw ConfigError("synthetic config: negative noise sigma");
  if (!basis_patterns.defined() || basis_patterns.rank() != 2 ||
      basis_patterns.dim(0) != latent_dim)
    throw ConfigError("synthetic config: basis must be [latent_dim, V]");
  const int64_t S = latent_dim;
  const int64_t V = basis_patterns.dim(1);

  for (int64_t s = 0; s < S; ++s) {
    double norm2 = 0.0;
    for (int64_t v = 0; v < V; ++v) {
      const double x = basis_patterns.at(s, v);
      norm2 += x * x;
    }
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6)
      throw ConfigError("synthetic config: basis row " + std::to_string(s) + " is not unit norm");
  }

  if (static_cast<int64_t>(subject_mixings.size()) != n_subjects ||
      static_cast<int64_t>(subject_gains.size()) != n_subjects)
    throw ConfigError("synthetic config: per-subject lists must have n_subjects entries");

  for (int64_t s = 0; s < n_subjects; ++s) {
    const Tensor& M = subject_mixings[static_cast<size_t>(s)];
    if (M.rank() != 2 || M.dim(0) != S || M.dim(1) != S)
      throw ConfigError("synthetic config: mixing " + std::to_string(s) + " must be [S, S]");
    ECMap m(M.data(), S, S);
    const double dev = (m.transpose() * m - EMat::Identity(S, S)).cwiseAbs().maxCoeff();
    if (dev > 1e-6)
      throw ConfigError("synthetic config: mixing " + std::to_string(s) +
                        " is not orthogonal (max deviation " + std::to_string(dev) + ")");
    const Tensor& g = subject_gains[static_cast<size_t>(s)];
    if (g.rank() != 1 || g.dim(0) != V)
      throw ConfigError("synthetic config: gains " + std::to_string(s) + " must be length V");
  }
}

SyntheticCohortConfig make_synthetic_config(int64_t n_subjects, int64_t n_stimuli,
                                            int64_t latent_dim, int64_t n_vertices,
                                            double noise_sigma, uint64_t seed,
                                            double rotation_scale, double gain_jitter) {
  if (n_vertices < latent_dim)
    throw ConfigError("make_synthetic_config: need at least latent_dim vertices");
  SyntheticCohortConfig cfg;
  cfg.n_subjects = n_subjects;
  cfg.n_stimuli = n_stimuli;
  cfg.latent_dim = latent_dim;
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;

  Rng rng(seed ^ 0x636f686f72740001ULL);
  const int64_t S = latent_dim, V = n_vertices;

  cfg.basis_patterns = Tensor({S, V});
  rng.fill_normal(cfg.basis_patterns);
  for (int64_t s = 0; s < S; ++s) {
    double norm2 = 0.0;
    for (int64_t v = 0; v < V; ++v) norm2 += cfg.basis_patterns.at(s, v) * cfg.basis_patterns.at(s, v);
    const double inv = 1.0 / std::sqrt(norm2);
    for (int64_t v = 0; v < V; ++v) cfg.basis_patterns.at(s, v) *= inv;
  }

  // Cayley transform of a small skew-symmetric draw: exactly orthogonal,
  // near the identity for small rotation_scale. Shared structure across
  // subjects is what makes cross-subject transfer possible at all.
  for (int64_t s = 0; s < n_subjects; ++s) {
    EMat A = EMat::Zero(S, S);
    const double scale = rotation_scale / std::sqrt(static_cast<double>(S));
    for (int64_t i = 0; i < S; ++i)
      for (int64_t j = i + 1; j < S; ++j) {
        const double a = rng.normal(0.0, scale);
        A(i, j) = a;
        A(j, i) = -a;
      }
    EMat Q = (EMat::Identity(S, S) - A) * (EMat::Identity(S, S) + A).inverse();
    Tensor M({S, S});
    EMap(M.data(), S, S) = Q;
    cfg.subject_mixings.push_back(M);

    Tensor g({V});
    rng.fill_uniform(g, 1.0 - gain_jitter, 1.0 + gain_jitter);
    cfg.subject_gains.push_back(g);
  }
  return cfg;
}

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortConfig& cfg) {
  cfg.validate();
  const int64_t S = cfg.latent_dim;
  const int64_t V = cfg.basis_patterns.dim(1);
  const int64_t N = cfg.n_stimuli;

  Rng rng(cfg.seed ^ 0x636f686f72740002ULL);

  SyntheticCohort out;
  out.stimulus_embeddings = Tensor({N, S});
  rng.fill_normal(out.stimulus_embeddings);

  ECMap Z(out.stimulus_embeddings.data(), N, S);
  ECMap B(cfg.basis_patterns.data(), S, V);

  for (int64_t s = 0; s < cfg.n_subjects; ++s) {
    ECMap M(cfg.subject_mixings[static_cast<size_t>(s)].data(), S, S);
    const Tensor& gains = cfg.subject_gains[static_cast<size_t>(s)];

    SurfaceSession sess;
    sess.subject_id = "sub-" + std::to_string(s + 1);
    sess.vertex_count = V;
    sess.values = Tensor({N, V});
    EMap R(sess.values.data(), N, V);
    R = (Z * M) * B;

    double* p = sess.values.data();
    const double* g = gains.data();
    for (int64_t i = 0; i < N; ++i)
      for (int64_t v = 0; v < V; ++v) p[i * V + v] *= g[v];
    if (cfg.noise_sigma > 0) {
      for (int64_t i = 0; i < N * V; ++i) p[i] += rng.normal(0.0, cfg.noise_sigma);
    }
    out.sessions.push_back(std::move(sess));
  }
  return out;
}

MapStyle map_style_from_name(const std::string& name) {
  if (name == "full") return MapStyle::full;
  if (name == "ellipse") return MapStyle::ellipse;
  if (name == "two_lobes") return MapStyle::two_lobes;
  throw ConfigError("unknown map style '" + name + "' (full|ellipse|two_lobes)");
}

const char* map_style_name(MapStyle s) {
  switch (s) {
    case MapStyle::full: return "full";
    case MapStyle::ellipse: return "ellipse";
    case MapStyle::two_lobes: return "two_lobes";
  }
  throw ConfigError("map_style_name: unhandled style");
}

VertexPixelMap make_vertex_map(MapStyle style, int64_t height, int64_t width) {
  if (height <= 0 || width <= 0) throw ConfigError("make_vertex_map: non-positive dimensions");
  auto inside_ellipse = [](double r, double c, double cy, double cx, double ry, double rx) {
    const double dy = (r - cy) / ry, dx = (c - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  };

  std::vector<VertexPixelMap::Entry> entries;
  int64_t v = 0;
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < width; ++c) {
      bool valid = false;
      const double rc = static_cast<double>(r), cc = static_cast<double>(c);
      const double H = static_cast<double>(height), W = static_cast<double>(width);
      switch (style) {
        case MapStyle::full:
          valid = true;
          break;
        case MapStyle::ellipse:
          valid = inside_ellipse(rc, cc, 0.5 * (H - 1), 0.5 * (W - 1), 0.46 * H, 0.46 * W);
          break;
        case MapStyle::two_lobes:
          // Left and right hemisphere lobes, disjoint by construction.
          valid = inside_ellipse(rc, cc, 0.5 * (H - 1), 0.25 * W, 0.42 * H, 0.21 * W) ||
                  inside_ellipse(rc, cc, 0.5 * (H - 1), 0.75 * W, 0.42 * H, 0.21 * W);
          break;
      }
      if (valid) entries.push_back({v++, r, c});
    }
  }
  return VertexPixelMap(height, width, std::move(entries));
}

}  // namespace cortenc
