#include "smoothcert/patching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smoothcert/error.hpp"
#include "smoothcert/noise.hpp"

namespace smoothcert {

namespace {

// Tag word that keeps origin draws out of the noise counter space.
constexpr std::uint32_t kOriginDomain = 0x50415443u;

std::size_t bounded(std::uint32_t hi, std::uint32_t lo, std::size_t range) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  const double u = static_cast<double>(bits) * 0x1.0p-53;
  return std::min(range - 1, static_cast<std::size_t>(u * static_cast<double>(range)));
}

}  // namespace

void PatchSpec::validate() const {
  if (resize_to == 0 || patch_side == 0) throw SpecError("resize_to and patch_side must be positive");
  if (patch_side > resize_to) {
    throw SpecError("patch_side " + std::to_string(patch_side) + " exceeds resize_to " + std::to_string(resize_to));
  }
  if (count == 0) throw SpecError("patch count must be at least 1");
  if (mode == SamplingMode::dense && stride == 0) throw SpecError("dense sampling needs stride >= 1");
}

InputTensor resize_bilinear(const InputTensor& x, std::size_t target_side) {
  if (target_side == 0) throw InvalidInput("resize target must be positive");
  const Shape& s = x.shape();
  if (s.height == target_side && s.width == target_side) return x;

  const double sy = static_cast<double>(s.height) / static_cast<double>(target_side);
  const double sx = static_cast<double>(s.width) / static_cast<double>(target_side);
  const Shape out_shape{s.channels, target_side, target_side};
  std::vector<float> out(out_shape.elements());

  auto source = [](std::size_t i, double scale, std::size_t n, std::size_t& i0, std::size_t& i1, double& frac) {
    double pos = (static_cast<double>(i) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, n - 1);
    frac = pos - static_cast<double>(i0);
  };

  for (std::size_t oy = 0; oy < target_side; ++oy) {
    std::size_t y0, y1;
    double fy;
    source(oy, sy, s.height, y0, y1, fy);
    for (std::size_t ox = 0; ox < target_side; ++ox) {
      std::size_t x0, x1;
      double fx;
      source(ox, sx, s.width, x0, x1, fx);
      for (std::size_t c = 0; c < s.channels; ++c) {
        const double top = (1.0 - fx) * x.at(c, y0, x0) + fx * x.at(c, y0, x1);
        const double bottom = (1.0 - fx) * x.at(c, y1, x0) + fx * x.at(c, y1, x1);
        const double v = (1.0 - fy) * top + fy * bottom;
        out[(c * target_side + oy) * target_side + ox] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return InputTensor(out_shape, std::move(out));
}

InputTensor crop(const InputTensor& x, PatchOrigin origin, std::size_t side) {
  const Shape& s = x.shape();
  if (side == 0 || origin.row + side > s.height || origin.col + side > s.width) {
    throw InvalidInput("crop window outside image " + s.str());
  }
  std::vector<float> out;
  out.reserve(s.channels * side * side);
  auto data = x.data();
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = 0; y < side; ++y) {
      const auto* row = data.data() + (c * s.height + origin.row + y) * s.width + origin.col;
      out.insert(out.end(), row, row + side);
    }
  }
  return InputTensor(Shape{s.channels, side, side}, std::move(out));
}

std::size_t dense_axis_positions(std::size_t image_side, std::size_t patch_side, std::size_t stride) {
  if (patch_side > image_side || stride == 0) return 0;
  return (image_side - patch_side) / stride + 1;
}

PatchSet sample_patches(const InputTensor& x, const PatchSpec& spec, std::uint64_t stream) {
  spec.validate();
  const InputTensor resized = resize_bilinear(x, spec.resize_to);
  const std::size_t max_origin = spec.resize_to - spec.patch_side;

  std::vector<PatchOrigin> origins;
  if (spec.mode == SamplingMode::dense) {
    const std::size_t per_axis = dense_axis_positions(spec.resize_to, spec.patch_side, spec.stride);
    const std::size_t grid = per_axis * per_axis;
    // The center crop may fill a single missing slot; anything more is unsatisfiable.
    if (grid < spec.count && !(spec.include_center && grid + 1 >= spec.count)) {
      throw SpecError("dense grid has " + std::to_string(grid) + " positions but " + std::to_string(spec.count) +
                      " patches were requested");
    }
    const std::size_t take = std::min(grid, spec.count);
    for (std::size_t i = 0; i < take; ++i) {
      origins.push_back({(i / per_axis) * spec.stride, (i % per_axis) * spec.stride});
    }
  } else {
    const philox::Key key{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32)};
    for (std::size_t i = 0; i < spec.count; ++i) {
      const auto r = philox::philox4x32_10(
          {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(stream),
           static_cast<std::uint32_t>(stream >> 32), kOriginDomain},
          key);
      origins.push_back({bounded(r[0], r[1], max_origin + 1), bounded(r[2], r[3], max_origin + 1)});
    }
  }
  if (spec.include_center) origins.push_back({max_origin / 2, max_origin / 2});

  PatchSet set;
  set.origins = std::move(origins);
  set.patches.reserve(set.origins.size());
  const bool rescale = spec.classifier_side != 0 && spec.classifier_side != spec.patch_side;
  for (const auto& o : set.origins) {
    InputTensor p = crop(resized, o, spec.patch_side);
    set.patches.push_back(rescale ? resize_bilinear(p, spec.classifier_side) : std::move(p));
  }
  return set;
}

void SubVideoSpec::validate() const {
  if (chunk_frames == 0) throw SpecError("chunk_frames must be positive");
  if (subvideo_frames < chunk_frames) throw SpecError("sub-video shorter than one chunk");
  if (subvideo_frames % chunk_frames != 0) {
    throw SpecError("sub-video length " + std::to_string(subvideo_frames) + " is not a multiple of chunk length " +
                    std::to_string(chunk_frames));
  }
}

std::size_t SubVideoSpec::effective_stride() const noexcept {
  if (stride_frames != 0) return stride_frames;
  return std::max<std::size_t>(1, subvideo_frames / 2);
}

std::vector<SubVideo> sample_subvideos(const VideoTensor& v, const SubVideoSpec& spec) {
  spec.validate();
  const std::size_t t = spec.subvideo_frames;
  if (t > v.frame_count()) {
    throw SpecError("sub-video of " + std::to_string(t) + " frames exceeds video of " +
                    std::to_string(v.frame_count()));
  }
  const std::size_t stride = spec.effective_stride();
  const std::size_t available = (v.frame_count() - t) / stride + 1;
  const std::size_t count = spec.subvideo_count == 0 ? available : spec.subvideo_count;
  if (count > available) {
    throw SpecError("requested " + std::to_string(count) + " sub-videos but only " + std::to_string(available) +
                    " windows fit");
  }
  std::vector<SubVideo> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * stride;
    std::vector<InputTensor> frames(v.frames().begin() + static_cast<std::ptrdiff_t>(start),
                                    v.frames().begin() + static_cast<std::ptrdiff_t>(start + t));
    out.push_back(SubVideo{VideoTensor(std::move(frames)), start, spec.chunk_frames});
  }
  return out;
}

}  // namespace smoothcert
