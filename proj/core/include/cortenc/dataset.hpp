#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cortenc/surface.hpp"
#include "cortenc/tensor.hpp"

namespace cortenc {

// Training view of projected frames: a stack of single-channel
// flatmaps plus the shared validity mask.
struct FlatmapDataset {
  Tensor frames;  // [N, 1, H, W]
  Tensor mask;    // [H, W], 1 = valid
  std::vector<std::string> frame_ids;

  int64_t size() const { return frames.defined() ? frames.dim(0) : 0; }
  int64_t height() const { return frames.dim(2); }
  int64_t width() const { return frames.dim(3); }
  void validate() const;
};

// Projects every frame of a (typically z-scored) session through the
// vertex map. Frame ids are "<subject>/<frame index>".
FlatmapDataset project_session(const SurfaceSession& session, const VertexPixelMap& map);

// Concatenates datasets that share mask and shape.
FlatmapDataset concat_datasets(const std::vector<FlatmapDataset>& parts);

// Row subset in the given order.
FlatmapDataset subset_dataset(const FlatmapDataset& ds, const std::vector<int64_t>& rows);

}  // namespace cortenc
