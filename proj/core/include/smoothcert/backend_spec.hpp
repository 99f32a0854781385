#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "smoothcert/classifiers.hpp"

namespace smoothcert {

/// Builds a builtin backend from its JSON description:
///   {"kind": "linear", "input_shape": [c,h,w], "weights": [[...], ...], "biases": [...]}
///   {"kind": "prototype", "input_shape": [c,h,w], "prototypes": [[...], ...], "temperature": T}
/// An optional "video": {"chunk_frames": m} wraps the model in a
/// ChunkAveragingVideoClassifier whose inner shape is input_shape.
std::shared_ptr<const ClassifierBackend> backend_from_json(const std::string& text);
std::shared_ptr<const ClassifierBackend> load_backend_spec(const std::filesystem::path& path);

std::string linear_spec_json(const LinearClassifier& c);

}  // namespace smoothcert
