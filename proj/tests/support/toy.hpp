#pragma once

// Small synthetic certification problem written to disk: a binary linear
// model (as a backend spec file) and a manifest dataset labelled by it.

#include <filesystem>
#include <fstream>
#include <random>

#include "smoothcert/backend_spec.hpp"
#include "smoothcert/dataset.hpp"

namespace toy {

struct Problem {
  std::filesystem::path dataset;
  std::filesystem::path backend_spec;
};

inline Problem write_problem(const std::filesystem::path& dir, std::size_t inputs, std::uint64_t seed = 1) {
  using namespace smoothcert;
  std::filesystem::create_directories(dir);
  const Shape shape{1, 4, 4};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> w(2, std::vector<double>(shape.elements()));
  for (auto& row : w) {
    for (auto& v : row) v = g(rng);
  }
  const LinearClassifier model(shape, w, {0.0, 0.0});

  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<DatasetItem> items;
  for (std::size_t i = 0; i < inputs; ++i) {
    std::vector<float> data(shape.elements());
    for (auto& v : data) v = u(rng);
    DatasetItem item;
    item.id = i;
    InputTensor x(shape, std::move(data));
    const auto logits = infer_batch(model, std::vector<InputTensor>{x}).front();
    // every fourth label is flipped so some certificates are wrong
    const std::size_t predicted = logits[1] > logits[0] ? 1 : 0;
    item.label = i % 4 == 3 ? 1 - predicted : predicted;
    item.input = std::move(x);
    items.push_back(std::move(item));
  }
  Problem p{dir / "data", dir / "model.json"};
  write_manifest_dataset(p.dataset, items);
  std::ofstream(p.backend_spec) << linear_spec_json(model);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace toy
