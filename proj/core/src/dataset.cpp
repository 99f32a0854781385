#include "smoothcert/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "json.hpp"
#include "smoothcert/error.hpp"

namespace smoothcert {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void check_unit_range(std::span<const float> v, const std::string& where) {
  for (float x : v) {
    if (!std::isfinite(x) || x < 0.0f || x > 1.0f) {
      throw LoadError(where + ": value " + std::to_string(x) + " outside [0,1]");
    }
  }
}

std::size_t check_label(long long label, std::size_t n_classes, const std::string& where) {
  if (label < 0 || static_cast<unsigned long long>(label) >= n_classes) {
    throw LoadError(where + ": label " + std::to_string(label) + " outside [0, " + std::to_string(n_classes) + ")");
  }
  return static_cast<std::size_t>(label);
}

std::variant<InputTensor, VideoTensor> make_input(const std::vector<std::size_t>& dims, std::vector<float> data,
                                                  const std::string& where) {
  try {
    if (dims.size() == 3) return InputTensor(Shape{dims[0], dims[1], dims[2]}, std::move(data));
    if (dims.size() == 4) {
      const Shape frame{dims[1], dims[2], dims[3]};
      if (dims[0] == 0) throw InvalidInput("video has no frames");
      if (frame.elements() * dims[0] != data.size()) throw InvalidInput("data length does not match shape");
      std::vector<InputTensor> frames;
      frames.reserve(dims[0]);
      for (std::size_t t = 0; t < dims[0]; ++t) {
        const auto first = data.begin() + static_cast<std::ptrdiff_t>(t * frame.elements());
        frames.emplace_back(frame, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(frame.elements())));
      }
      return VideoTensor(std::move(frames));
    }
  } catch (const InvalidInput& e) {
    throw LoadError(where + ": " + e.what());
  }
  throw LoadError(where + ": shape must be [c,h,w] or [t,c,h,w]");
}

std::vector<DatasetItem> load_manifest(const fs::path& path, std::size_t n_classes) {
  fs::path manifest = path;
  if (fs::is_directory(path)) manifest = path / "manifest.json";
  json doc;
  try {
    std::ifstream in(manifest);
    if (!in) throw LoadError("cannot open " + manifest.string());
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("malformed manifest " + manifest.string() + ": " + e.what());
  }
  const json& entries = doc.is_object() && doc.contains("items") ? doc.at("items") : doc;
  if (!entries.is_array()) throw LoadError("manifest " + manifest.string() + " has no item list");

  const fs::path base = manifest.parent_path();
  std::vector<DatasetItem> out;
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const json& e = entries[i];
    std::string where = "manifest entry " + std::to_string(i);
    try {
      const auto file = e.at("file").get<std::string>();
      where += " (" + file + ")";
      const auto dims = e.at("shape").get<std::vector<std::size_t>>();
      DatasetItem item;
      item.id = e.contains("id") ? e.at("id").get<std::uint64_t>() : i;
      item.label = check_label(e.at("label").get<long long>(), n_classes, where);
      if (!seen.insert(item.id).second) throw LoadError(where + ": duplicate id " + std::to_string(item.id));

      const auto bytes = read_file(base / file);
      if (bytes.size() % sizeof(float) != 0) throw LoadError(where + ": file size is not a multiple of 4");
      std::vector<float> data(bytes.size() / sizeof(float));
      std::memcpy(data.data(), bytes.data(), bytes.size());
      std::size_t expected = 1;
      for (auto d : dims) expected *= d;
      if (expected != data.size()) {
        throw LoadError(where + ": shape holds " + std::to_string(expected) + " values but file has " +
                        std::to_string(data.size()));
      }
      check_unit_range(data, where);
      item.input = make_input(dims, std::move(data), where);
      out.push_back(std::move(item));
    } catch (const json::exception& ex) {
      throw LoadError(where + ": " + ex.what());
    }
  }
  return out;
}

struct NpyArray {
  std::string descr;
  std::vector<std::size_t> shape;
  std::vector<char> payload;
};

NpyArray read_npy(const fs::path& path) {
  const auto bytes = read_file(path);
  const std::string name = path.filename().string();
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0) throw LoadError(name + ": not an npy file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw LoadError(name + ": truncated header");
    for (int b = 0; b < 4; ++b) header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + b])) << (8 * b);
    offset = 12;
  } else {
    throw LoadError(name + ": unsupported npy version " + std::to_string(major));
  }
  if (offset + header_len > bytes.size()) throw LoadError(name + ": truncated header");
  const std::string header(bytes.data() + offset, header_len);

  NpyArray arr;
  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']+)')"))) throw LoadError(name + ": no descr");
  arr.descr = m[1];
  if (std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*True)"))) {
    throw LoadError(name + ": fortran-ordered arrays are not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) throw LoadError(name + ": no shape");
  const std::string dims = m[1];
  const std::regex num(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it) {
    arr.shape.push_back(std::stoull(it->str()));
  }
  arr.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset + header_len), bytes.end());
  return arr;
}

std::size_t element_size(const std::string& descr, const std::string& name) {
  if (descr.size() < 3 || (descr[0] != '<' && descr[0] != '|' && descr[0] != '=')) {
    throw LoadError(name + ": unsupported dtype " + descr + " (little-endian only)");
  }
  return std::stoul(descr.substr(2));
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

std::vector<double> npy_values(const NpyArray& a, const std::string& name) {
  const std::size_t width = element_size(a.descr, name);
  std::size_t count = 1;
  for (auto d : a.shape) count *= d;
  if (a.payload.size() < count * width) throw LoadError(name + ": payload shorter than shape");
  const char kind = a.descr[1];
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* p = a.payload.data() + i * width;
    if (kind == 'f' && width == 4) out[i] = load_le<float>(p);
    else if (kind == 'f' && width == 8) out[i] = load_le<double>(p);
    else if (kind == 'u' && width == 1) out[i] = static_cast<unsigned char>(*p);
    else if (kind == 'u' && width == 2) out[i] = load_le<std::uint16_t>(p);
    else if (kind == 'u' && width == 4) out[i] = load_le<std::uint32_t>(p);
    else if (kind == 'u' && width == 8) out[i] = static_cast<double>(load_le<std::uint64_t>(p));
    else if (kind == 'i' && width == 1) out[i] = static_cast<signed char>(*p);
    else if (kind == 'i' && width == 2) out[i] = load_le<std::int16_t>(p);
    else if (kind == 'i' && width == 4) out[i] = load_le<std::int32_t>(p);
    else if (kind == 'i' && width == 8) out[i] = static_cast<double>(load_le<std::int64_t>(p));
    else throw LoadError(name + ": unsupported dtype " + a.descr);
  }
  return out;
}

std::vector<DatasetItem> load_npy(const fs::path& dir, std::size_t n_classes) {
  const auto inputs = read_npy(dir / "inputs.npy");
  const auto labels = read_npy(dir / "labels.npy");
  if (inputs.shape.size() != 4 && inputs.shape.size() != 5) {
    throw LoadError("inputs.npy: expected shape (N,C,H,W) or (N,T,C,H,W)");
  }
  const std::size_t n = inputs.shape[0];
  if (labels.shape.size() != 1 || labels.shape[0] != n) {
    throw LoadError("labels.npy: expected " + std::to_string(n) + " labels");
  }
  if (labels.descr[1] == 'f') throw LoadError("labels.npy: labels must be integers");
  const bool bytes = inputs.descr.size() >= 3 && inputs.descr[1] == 'u' && inputs.descr.substr(2) == "1";
  const auto values = npy_values(inputs, "inputs.npy");
  const auto label_values = npy_values(labels, "labels.npy");

  const std::vector<std::size_t> dims(inputs.shape.begin() + 1, inputs.shape.end());
  std::size_t per_item = 1;
  for (auto d : dims) per_item *= d;

  std::vector<DatasetItem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string where = "inputs.npy item " + std::to_string(i);
    std::vector<float> data(per_item);
    for (std::size_t j = 0; j < per_item; ++j) {
      const double v = values[i * per_item + j];
      data[j] = static_cast<float>(bytes ? v / 255.0 : v);
    }
    check_unit_range(data, where);
    DatasetItem item;
    item.id = i;
    item.label = check_label(static_cast<long long>(label_values[i]), n_classes, "labels.npy item " + std::to_string(i));
    item.input = make_input(dims, std::move(data), where);
    out.push_back(std::move(item));
  }
  return out;
}

InputTensor read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw LoadError(path.filename().string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw LoadError(path.filename().string() + ": " + msg);
  }
  const std::size_t c = color ? 3 : 1;
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  std::vector<float> data(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        data[(ch * h + y) * w + x] = static_cast<float>(buffer[(y * w + x) * c + ch]) / 255.0f;
      }
    }
  }
  return InputTensor(Shape{c, h, w}, std::move(data));
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<DatasetItem> load_png_dir(const fs::path& dir, std::size_t n_classes) {
  std::ifstream in(dir / "labels.csv");
  if (!in) throw LoadError("cannot open " + (dir / "labels.csv").string());
  std::vector<DatasetItem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = "labels.csv line " + std::to_string(line_no);
    if (comma == std::string::npos) throw LoadError(where + ": expected file,label");
    const std::string file = trim(line.substr(0, comma));
    const std::string label_text = trim(line.substr(comma + 1));
    if (line_no == 1 && file == "file") continue;
    long long label = 0;
    try {
      std::size_t used = 0;
      label = std::stoll(label_text, &used);
      if (used != label_text.size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw LoadError(where + " (" + file + "): label '" + label_text + "' is not an integer");
    }
    DatasetItem item;
    item.id = out.size();
    item.label = check_label(label, n_classes, where + " (" + file + ")");
    item.input = read_png(dir / file);
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace

DatasetFormat parse_dataset_format(const std::string& s) {
  if (s == "manifest" || s == "raw") return DatasetFormat::manifest;
  if (s == "npy") return DatasetFormat::npy;
  if (s == "png") return DatasetFormat::png;
  throw SpecError("unknown dataset format '" + s + "'");
}

std::string to_string(DatasetFormat f) {
  switch (f) {
    case DatasetFormat::manifest: return "manifest";
    case DatasetFormat::npy: return "npy";
    case DatasetFormat::png: return "png";
  }
  return "?";
}

std::vector<DatasetItem> load_dataset(const fs::path& path, DatasetFormat format, std::size_t n_classes) {
  if (!fs::exists(path)) throw LoadError("dataset " + path.string() + " does not exist");
  switch (format) {
    case DatasetFormat::manifest: return load_manifest(path, n_classes);
    case DatasetFormat::npy: return load_npy(path, n_classes);
    case DatasetFormat::png: return load_png_dir(path, n_classes);
  }
  throw SpecError("unknown dataset format");
}

void write_manifest_dataset(const fs::path& dir, const std::vector<DatasetItem>& items) {
  fs::create_directories(dir);
  json entries = json::array();
  for (const auto& item : items) {
    const std::string file = "item_" + std::to_string(item.id) + ".f32";
    std::vector<std::size_t> dims;
    InputTensor flat;
    if (const auto* v = std::get_if<VideoTensor>(&item.input)) {
      const auto& s = v->frame_shape();
      dims = {v->frame_count(), s.channels, s.height, s.width};
      flat = v->flatten();
    } else {
      flat = std::get<InputTensor>(item.input);
      const auto& s = flat.shape();
      dims = {s.channels, s.height, s.width};
    }
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(flat.data().data()), static_cast<std::streamsize>(flat.size() * sizeof(float)));
    if (!out) throw Error("cannot write " + (dir / file).string());
    entries.push_back({{"id", item.id}, {"file", file}, {"shape", dims}, {"label", item.label}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << json{{"items", entries}}.dump(2) << "\n";
  if (!out) throw Error("cannot write manifest in " + dir.string());
}

}  // namespace smoothcert
