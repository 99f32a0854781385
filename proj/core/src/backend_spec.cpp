#include "smoothcert/backend_spec.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "smoothcert/error.hpp"

namespace smoothcert {

namespace {

using nlohmann::json;

Shape shape_of(const json& j) {
  const auto dims = j.get<std::vector<std::size_t>>();
  if (dims.size() != 3) throw LoadError("input_shape must be [c,h,w]");
  return Shape{dims[0], dims[1], dims[2]};
}

}  // namespace

std::shared_ptr<const ClassifierBackend> backend_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    const auto kind = j.at("kind").get<std::string>();
    const Shape shape = shape_of(j.at("input_shape"));
    std::shared_ptr<const ClassifierBackend> model;
    if (kind == "linear") {
      auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
      auto biases = j.contains("biases") ? j.at("biases").get<std::vector<double>>()
                                         : std::vector<double>(weights.size(), 0.0);
      if (j.contains("n_classes") && j.at("n_classes").get<std::size_t>() != weights.size()) {
        throw LoadError("n_classes disagrees with the number of weight rows");
      }
      model = std::make_shared<LinearClassifier>(shape, std::move(weights), std::move(biases));
    } else if (kind == "prototype") {
      model = std::make_shared<PrototypeClassifier>(shape, j.at("prototypes").get<std::vector<std::vector<double>>>(),
                                                    j.value("temperature", 1.0));
    } else {
      throw LoadError("unknown backend kind '" + kind + "'");
    }
    if (j.contains("video")) {
      model = std::make_shared<ChunkAveragingVideoClassifier>(model, j.at("video").at("chunk_frames").get<std::size_t>());
    }
    return model;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed backend spec: ") + e.what());
  } catch (const InvalidInput& e) {
    throw LoadError(std::string("invalid backend spec: ") + e.what());
  } catch (const SpecError& e) {
    throw LoadError(std::string("invalid backend spec: ") + e.what());
  }
}

std::shared_ptr<const ClassifierBackend> load_backend_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open backend spec " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return backend_from_json(os.str());
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

std::string linear_spec_json(const LinearClassifier& c) {
  json weights = json::array();
  json biases = json::array();
  for (std::size_t k = 0; k < c.n_classes(); ++k) {
    weights.push_back(c.weights(k));
    biases.push_back(c.bias(k));
  }
  const auto s = c.input_shape();
  return json{{"kind", "linear"},
              {"n_classes", c.n_classes()},
              {"input_shape", {s.channels, s.height, s.width}},
              {"weights", weights},
              {"biases", biases}}
      .dump();
}

}  // namespace smoothcert
