#include "cortenc/dataset.hpp"

#include <string>

#include "cortenc/errors.hpp"

namespace cortenc {

void FlatmapDataset::validate() const {
  if (!frames.defined() || frames.rank() != 4 || frames.dim(1) != 1)
    throw ShapeError("FlatmapDataset: frames must be [N,1,H,W]");
  if (!mask.defined() || mask.rank() != 2 || mask.dim(0) != frames.dim(2) ||
      mask.dim(1) != frames.dim(3))
    throw ShapeError("FlatmapDataset: mask must be [H,W] matching frames");
  if (!frame_ids.empty() && static_cast<int64_t>(frame_ids.size()) != frames.dim(0))
    throw ShapeError("FlatmapDataset: frame_ids count mismatch");
  if (!frames.all_finite()) throw DataError("FlatmapDataset: non-finite frame value");
  for (int64_t i = 0; i < mask.size(); ++i)
    if (mask[i] != 0.0 && mask[i] != 1.0)
      throw DataError("FlatmapDataset: mask must be 0/1");
}

FlatmapDataset project_session(const SurfaceSession& session, const VertexPixelMap& map) {
  session.validate();
  if (session.vertex_count != map.vertex_count())
    throw ShapeError("project_session: session has " + std::to_string(session.vertex_count) +
                     " vertices, map expects " + std::to_string(map.vertex_count()));
  const int64_t T = session.frames();
  const int64_t H = map.height(), W = map.width();
  FlatmapDataset ds;
  ds.frames = Tensor({T, 1, H, W});
  ds.mask = Tensor({H, W});
  const auto& bg = map.background_mask();
  for (int64_t i = 0; i < H * W; ++i) ds.mask[i] = bg[static_cast<size_t>(i)] ? 0.0 : 1.0;
  for (int64_t f = 0; f < T; ++f) {
    for (const auto& e : map.entries())
      ds.frames[(f * H + e.row) * W + e.col] = session.values.at(f, e.vertex);
    ds.frame_ids.push_back(session.subject_id + "/" + std::to_string(f));
  }
  return ds;
}

FlatmapDataset concat_datasets(const std::vector<FlatmapDataset>& parts) {
  if (parts.empty()) throw DataError("concat_datasets: no parts");
  const int64_t H = parts[0].height(), W = parts[0].width();
  int64_t N = 0;
  for (const auto& p : parts) {
    if (p.height() != H || p.width() != W)
      throw ShapeError("concat_datasets: frame shape mismatch");
    for (int64_t i = 0; i < H * W; ++i)
      if (p.mask[i] != parts[0].mask[i])
        throw DataError("concat_datasets: datasets have different masks");
    N += p.size();
  }
  FlatmapDataset out;
  out.frames = Tensor({N, 1, H, W});
  out.mask = parts[0].mask.clone();
  int64_t off = 0;
  for (const auto& p : parts) {
    for (int64_t i = 0; i < p.frames.size(); ++i) out.frames[off + i] = p.frames[i];
    off += p.frames.size();
    for (const auto& id : p.frame_ids) out.frame_ids.push_back(id);
  }
  return out;
}

FlatmapDataset subset_dataset(const FlatmapDataset& ds, const std::vector<int64_t>& rows) {
  const int64_t H = ds.height(), W = ds.width();
  FlatmapDataset out;
  out.frames = Tensor({static_cast<int64_t>(rows.size()), 1, H, W});
  out.mask = ds.mask.clone();
  const int64_t px = H * W;
  for (size_t r = 0; r < rows.size(); ++r) {
    const int64_t src = rows[r];
    if (src < 0 || src >= ds.size()) throw ShapeError("subset_dataset: row out of range");
    for (int64_t i = 0; i < px; ++i)
      out.frames[static_cast<int64_t>(r) * px + i] = ds.frames[src * px + i];
    if (!ds.frame_ids.empty()) out.frame_ids.push_back(ds.frame_ids[static_cast<size_t>(src)]);
  }
  return out;
}

}  // namespace cortenc
