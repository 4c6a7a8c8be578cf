#include "cortenc/surface.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cortenc/errors.hpp"

namespace cortenc {

using nlohmann::json;

void SurfaceSession::validate() const {
  if (!values.defined() || values.rank() != 2)
    throw ShapeError("session '" + subject_id + "': values must be [T, V]");
  if (values.dim(1) != vertex_count)
    throw ShapeError("session '" + subject_id + "': vertex_count " +
                     std::to_string(vertex_count) + " does not match values " +
                     values.shape_str());
  const double* p = values.data();
  const int64_t T = values.dim(0), V = values.dim(1);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t v = 0; v < V; ++v)
      if (!std::isfinite(p[t * V + v]))
        throw DataError("session '" + subject_id + "': non-finite value at frame " +
                        std::to_string(t) + ", vertex " + std::to_string(v));
}

VertexPixelMap::VertexPixelMap(int64_t height, int64_t width, std::vector<Entry> entries)
    : height_(height), width_(width), entries_(std::move(entries)) {
  if (height_ <= 0 || width_ <= 0) throw ConfigError("vertex map: non-positive dimensions");
  const int64_t V = static_cast<int64_t>(entries_.size());
  if (V == 0) throw DataError("vertex map: no entries");

  background_.assign(static_cast<size_t>(height_ * width_), 1);
  std::vector<uint8_t> vertex_seen(static_cast<size_t>(V), 0);
  for (const Entry& e : entries_) {
    if (e.vertex < 0 || e.vertex >= V)
      throw DataError("vertex map: vertex index " + std::to_string(e.vertex) +
                      " outside [0, " + std::to_string(V) + ")");
    if (vertex_seen[static_cast<size_t>(e.vertex)]++)
      throw DataError("vertex map: duplicate vertex " + std::to_string(e.vertex));
    if (e.row < 0 || e.row >= height_ || e.col < 0 || e.col >= width_)
      throw DataError("vertex map: pixel (" + std::to_string(e.row) + "," +
                      std::to_string(e.col) + ") out of bounds");
    uint8_t& bg = background_[static_cast<size_t>(e.row * width_ + e.col)];
    if (!bg)
      throw DataError("vertex map: two vertices share pixel (" + std::to_string(e.row) +
                      "," + std::to_string(e.col) + ")");
    bg = 0;
  }

  // Canonical iff vertex order equals the row-major scan of valid pixels.
  canonical_ = true;
  std::vector<int64_t> pixel_of_vertex(static_cast<size_t>(V));
  for (const Entry& e : entries_)
    pixel_of_vertex[static_cast<size_t>(e.vertex)] = e.row * width_ + e.col;
  for (int64_t v = 1; v < V && canonical_; ++v)
    if (pixel_of_vertex[static_cast<size_t>(v - 1)] >= pixel_of_vertex[static_cast<size_t>(v)])
      canonical_ = false;
}

VertexPixelMap VertexPixelMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vertex map: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("vertex map: empty file " + path.string());
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError("vertex map: bad JSON header in " + path.string() + ": " + e.what());
  }
  const int64_t height = h.at("height").get<int64_t>();
  const int64_t width = h.at("width").get<int64_t>();
  const int64_t n_vertices = h.at("n_vertices").get<int64_t>();

  std::vector<Entry> entries;
  entries.reserve(static_cast<size_t>(n_vertices));
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line == "vertex,row,col") {
      first = false;
      continue;
    }
    first = false;
    Entry e;
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> e.vertex >> c1 >> e.row >> c2 >> e.col) || c1 != ',' || c2 != ',')
      throw IoError("vertex map: bad CSV line '" + line + "' in " + path.string());
    entries.push_back(e);
  }
  if (static_cast<int64_t>(entries.size()) != n_vertices)
    throw IoError("vertex map: header says " + std::to_string(n_vertices) + " vertices, body has " +
                  std::to_string(entries.size()));
  return VertexPixelMap(height, width, std::move(entries));
}

void VertexPixelMap::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vertex map: " + path.string());
  json h;
  h["height"] = height_;
  h["width"] = width_;
  h["n_vertices"] = vertex_count();
  out << h.dump() << "\n";
  out << "vertex,row,col\n";
  for (const Entry& e : entries_) out << e.vertex << "," << e.row << "," << e.col << "\n";
  if (!out) throw IoError("short write: " + path.string());
}

int64_t Flatmap::valid_count() const {
  int64_t n = 0;
  for (uint8_t m : mask) n += m;
  return n;
}

ROIMask::ROIMask(std::string name, std::set<int64_t> vertex_indices, int64_t vertex_count)
    : name_(std::move(name)), indices_(std::move(vertex_indices)), vertex_count_(vertex_count) {
  if (indices_.empty()) throw ConfigError("ROI '" + name_ + "': empty vertex set");
  for (int64_t v : indices_)
    if (v < 0 || v >= vertex_count_)
      throw ConfigError("ROI '" + name_ + "': vertex " + std::to_string(v) + " outside [0, " +
                        std::to_string(vertex_count_) + ")");
}

ROIMask ROIMask::load(const std::filesystem::path& path, int64_t vertex_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ROI: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("ROI: bad JSON in " + path.string() + ": " + e.what());
  }
  std::set<int64_t> idx;
  for (const auto& v : j.at("vertices")) idx.insert(v.get<int64_t>());
  return ROIMask(j.value("name", std::string("roi")), std::move(idx), vertex_count);
}

void ROIMask::save(const std::filesystem::path& path) const {
  json j;
  j["name"] = name_;
  j["vertices"] = std::vector<int64_t>(indices_.begin(), indices_.end());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write ROI: " + path.string());
  out << j.dump(2) << "\n";
}

SurfaceSession zscore_session(const SurfaceSession& session, double eps) {
  session.validate();
  const int64_t T = session.values.dim(0), V = session.values.dim(1);
  if (T < 2)
    throw DataError("session '" + session.subject_id + "': z-scoring needs at least 2 frames, got " +
                    std::to_string(T));

  SurfaceSession out;
  out.subject_id = session.subject_id;
  out.vertex_count = session.vertex_count;
  out.values = Tensor({T, V});

  const double* src = session.values.data();
  double* dst = out.values.data();
  for (int64_t v = 0; v < V; ++v) {
    double mean = 0.0;
    for (int64_t t = 0; t < T; ++t) mean += src[t * V + v];
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (int64_t t = 0; t < T; ++t) {
      const double d = src[t * V + v] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(T));
    if (sd < eps) {
      for (int64_t t = 0; t < T; ++t) dst[t * V + v] = 0.0;
    } else {
      for (int64_t t = 0; t < T; ++t) dst[t * V + v] = (src[t * V + v] - mean) / sd;
    }
  }
  return out;
}

Flatmap project_to_flatmap(const Tensor& frame, const VertexPixelMap& map, double fill) {
  if (frame.rank() != 1 || frame.dim(0) != map.vertex_count())
    throw ShapeError("project_to_flatmap: frame length " + frame.shape_str() +
                     " does not match map vertex count " + std::to_string(map.vertex_count()));
  Flatmap fm;
  fm.grid = Tensor::full({map.height(), map.width()}, fill);
  const auto& bg = map.background_mask();
  fm.mask.resize(bg.size());
  for (size_t i = 0; i < bg.size(); ++i) fm.mask[i] = bg[i] ? 0 : 1;
  double* g = fm.grid.data();
  const double* f = frame.data();
  const int64_t W = map.width();
  for (const auto& e : map.entries()) g[e.row * W + e.col] = f[e.vertex];
  return fm;
}

std::vector<double> extract_valid_vector(const Flatmap& fm) {
  if (fm.grid.rank() != 2 || fm.mask.size() != static_cast<size_t>(fm.grid.size()))
    throw ShapeError("extract_valid_vector: grid/mask shape mismatch");
  std::vector<double> out;
  const double* g = fm.grid.data();
  for (size_t i = 0; i < fm.mask.size(); ++i)
    if (fm.mask[i]) out.push_back(g[i]);
  if (out.empty()) throw DataError("extract_valid_vector: all-background flatmap");
  return out;
}

Tensor unproject_frame(const Flatmap& fm, const VertexPixelMap& map) {
  if (fm.height() != map.height() || fm.width() != map.width())
    throw ShapeError("unproject_frame: flatmap does not match map dimensions");
  Tensor frame({map.vertex_count()});
  const double* g = fm.grid.data();
  double* f = frame.data();
  const int64_t W = map.width();
  for (const auto& e : map.entries()) f[e.vertex] = g[e.row * W + e.col];
  return frame;
}

Tensor apply_roi(const Tensor& frame, const ROIMask& roi) {
  if (frame.rank() != 1)
    throw ShapeError("apply_roi: frame must be a vector");
  if (frame.dim(0) != roi.vertex_count())
    throw ConfigError("apply_roi: frame length " + std::to_string(frame.dim(0)) +
                      " does not match ROI vertex count " + std::to_string(roi.vertex_count()));
  Tensor out({frame.dim(0)});
  const double* src = frame.data();
  double* dst = out.data();
  for (int64_t v : roi.vertex_indices()) dst[v] = src[v];
  return out;
}

}  // namespace cortenc
