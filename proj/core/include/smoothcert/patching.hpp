#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "smoothcert/tensor.hpp"

namespace smoothcert {

enum class SamplingMode { random, dense };

/// How the emulated ensemble is cut out of one image.
struct PatchSpec {
  std::size_t resize_to = 36;   // input is resized to resize_to x resize_to first
  std::size_t patch_side = 32;
  std::size_t count = 25;       // k
  SamplingMode mode = SamplingMode::dense;
  std::size_t stride = 1;       // dense mode only
  bool include_center = false;  // append the center crop as the last patch
  std::uint64_t seed = 0;       // random mode
  std::size_t classifier_side = 0;  // 0: emit patches at patch_side

  void validate() const;
};

struct PatchOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PatchOrigin&) const = default;
};

struct PatchSet {
  std::vector<InputTensor> patches;
  std::vector<PatchOrigin> origins;  // top-left corner in the resized image

  std::size_t size() const noexcept { return patches.size(); }
};

/// Bilinear resize to target_side x target_side using half-pixel centers
/// (align_corners = false); source coordinates are clamped to the image and
/// output values clamped to [0,1].
InputTensor resize_bilinear(const InputTensor& x, std::size_t target_side);

/// side x side window at `origin`.
InputTensor crop(const InputTensor& x, PatchOrigin origin, std::size_t side);

/// Number of dense-grid positions along one axis.
std::size_t dense_axis_positions(std::size_t image_side, std::size_t patch_side, std::size_t stride);

/// Builds the patch ensemble. Random origins are drawn uniformly with
/// replacement from the valid grid, keyed by (spec.seed, stream); dense mode
/// walks the stride grid row-major and keeps the first k positions.
PatchSet sample_patches(const InputTensor& x, const PatchSpec& spec, std::uint64_t stream = 0);

struct SubVideoSpec {
  std::size_t subvideo_frames = 64;  // t
  std::size_t chunk_frames = 16;     // m
  std::size_t subvideo_count = 0;    // 0: every window that fits
  std::size_t stride_frames = 0;     // 0: t/2

  void validate() const;
  std::size_t effective_stride() const noexcept;
};

struct SubVideo {
  VideoTensor video;
  std::size_t start_frame = 0;
  std::size_t chunk_frames = 0;

  std::size_t chunks() const noexcept { return video.frame_count() / chunk_frames; }
};

/// Overlapping temporal windows of t frames starting at 0, stride, 2*stride...
std::vector<SubVideo> sample_subvideos(const VideoTensor& v, const SubVideoSpec& spec);

}  // namespace smoothcert
