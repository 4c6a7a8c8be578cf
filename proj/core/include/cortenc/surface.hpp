#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "cortenc/tensor.hpp"

namespace cortenc {

// Per-subject time series over a fixed vertex set. values is [T, V].
struct SurfaceSession {
  std::string subject_id;
  Tensor values;
  int64_t vertex_count = 0;

  int64_t frames() const { return values.defined() ? values.dim(0) : 0; }

  // Throws DataError on NaN/Inf (names the offending vertex) and
  // ShapeError on a [T, V] mismatch.
  void validate() const;
};

// Injective vertex -> pixel assignment. Every non-background pixel is
// hit by exactly one vertex, so V equals the number of valid pixels.
class VertexPixelMap {
 public:
  struct Entry {
    int64_t vertex;
    int64_t row;
    int64_t col;
  };

  VertexPixelMap(int64_t height, int64_t width, std::vector<Entry> entries);

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t vertex_count() const { return static_cast<int64_t>(entries_.size()); }
  const std::vector<Entry>& entries() const { return entries_; }

  // true = background (no vertex maps there), flattened row-major.
  const std::vector<uint8_t>& background_mask() const { return background_; }

  // Vertex indices enumerate valid pixels in row-major order. Canonical
  // maps make project/extract exact inverses; arbitrary injective maps
  // still round-trip through unproject_frame.
  bool row_major_canonical() const { return canonical_; }

  // File format: JSON header line {height, width, n_vertices}, then a
  // CSV body "vertex,row,col" (header row included), UTF-8, LF newlines.
  static VertexPixelMap load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  int64_t height_;
  int64_t width_;
  std::vector<Entry> entries_;
  std::vector<uint8_t> background_;
  bool canonical_ = false;
};

// H x W scalar grid plus validity mask (true = carries signal).
struct Flatmap {
  Tensor grid;                    // [H, W]
  std::vector<uint8_t> mask;      // flattened row-major, 1 = valid

  int64_t height() const { return grid.dim(0); }
  int64_t width() const { return grid.dim(1); }
  int64_t valid_count() const;
};

// Named vertex subset. Empty sets are rejected at construction.
class ROIMask {
 public:
  ROIMask(std::string name, std::set<int64_t> vertex_indices, int64_t vertex_count);

  const std::string& name() const { return name_; }
  const std::set<int64_t>& vertex_indices() const { return indices_; }
  int64_t vertex_count() const { return vertex_count_; }

  static ROIMask load(const std::filesystem::path& path, int64_t vertex_count);
  void save(const std::filesystem::path& path) const;

 private:
  std::string name_;
  std::set<int64_t> indices_;
  int64_t vertex_count_;
};

// Per-vertex standardization across the session's frames, population
// standard deviation. Vertices with stddev below eps become all-zero.
SurfaceSession zscore_session(const SurfaceSession& session, double eps = 1e-8);

Flatmap project_to_flatmap(const Tensor& frame, const VertexPixelMap& map, double fill = 0.0);

// Valid-pixel values in row-major scan order.
std::vector<double> extract_valid_vector(const Flatmap& fm);

// Inverse of project_to_flatmap for any injective map: value per vertex.
Tensor unproject_frame(const Flatmap& fm, const VertexPixelMap& map);

// Zeroes every vertex outside the ROI.
Tensor apply_roi(const Tensor& frame, const ROIMask& roi);

}  // namespace cortenc
