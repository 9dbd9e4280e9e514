#include "zog/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "zog/errors.hpp"
#include "zog/rng.hpp"

namespace zog {

namespace {

constexpr char kMagic[] = "ZOGMLP1\n";
constexpr std::size_t kMagicLen = 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

MlpModel::MlpModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ModelFormatError(ModelErrorKind::DimensionMismatch, "model has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.inputs == 0 || layer.outputs == 0) {
      throw ModelFormatError(ModelErrorKind::DimensionMismatch,
                             "layer " + std::to_string(l) + " has a zero dimension");
    }
    if (l > 0 && layers_[l - 1].outputs != layer.inputs) {
      throw ModelFormatError(ModelErrorKind::DimensionMismatch,
                             "layer " + std::to_string(l) + " input width does not match previous output");
    }
    if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
      throw ModelFormatError(ModelErrorKind::DimensionMismatch,
                             "layer " + std::to_string(l) + " parameter count does not match its shape");
    }
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
      throw ModelFormatError(ModelErrorKind::NonFiniteWeight,
                             "layer " + std::to_string(l) + " has a non-finite parameter");
    }
  }
}

std::vector<std::size_t> MlpModel::dims() const {
  std::vector<std::size_t> d{layers_.front().inputs};
  for (const auto& layer : layers_) d.push_back(layer.outputs);
  return d;
}

std::vector<double> MlpModel::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("MlpModel::forward: input dimension mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    next.assign(layer.bias.begin(), layer.bias.end());
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* row = layer.weights.data() + o * layer.inputs;
      double acc = 0.0;
      for (std::size_t i = 0; i < layer.inputs; ++i) acc += row[i] * cur[i];
      next[o] += acc;
    }
    if (l + 1 < layers_.size()) {
      for (auto& v : next) v = std::max(v, 0.0);
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<std::uint8_t> save_mlp(const MlpModel& model) {
  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLen);
  const auto dims = model.dims();
  put_u32(out, static_cast<std::uint32_t>(model.layers().size()));
  for (auto d : dims) put_u32(out, static_cast<std::uint32_t>(d));
  for (const auto& layer : model.layers()) {
    for (double w : layer.weights) put_f64(out, w);
    for (double b : layer.bias) put_f64(out, b);
  }
  return out;
}

MlpModel load_mlp(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw ModelFormatError(ModelErrorKind::MalformedHeader, "missing ZOGMLP1 magic");
  }
  Reader in(bytes);
  in.skip(kMagicLen);
  const std::uint32_t layer_count = in.u32();
  if (layer_count == 0) throw ModelFormatError(ModelErrorKind::MalformedHeader, "layer count is zero");
  if (in.remaining() / 4 < std::size_t{layer_count} + 1) {
    throw ModelFormatError(ModelErrorKind::MalformedHeader, "header truncated");
  }
  std::vector<std::size_t> dims(layer_count + 1);
  for (auto& d : dims) d = in.u32();
  if (std::find(dims.begin(), dims.end(), 0) != dims.end()) {
    throw ModelFormatError(ModelErrorKind::DimensionMismatch, "zero layer dimension");
  }

  std::size_t expected = 0;
  for (std::size_t l = 0; l < layer_count; ++l) expected += (dims[l] + 1) * dims[l + 1];
  if (in.remaining() != expected * 8) {
    throw ModelFormatError(ModelErrorKind::DimensionMismatch,
                           "payload holds " + std::to_string(in.remaining()) + " bytes, header implies " +
                               std::to_string(expected * 8));
  }

  std::vector<DenseLayer> layers(layer_count);
  for (std::size_t l = 0; l < layer_count; ++l) {
    auto& layer = layers[l];
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    layer.weights.resize(layer.inputs * layer.outputs);
    layer.bias.resize(layer.outputs);
    for (auto& w : layer.weights) w = in.f64();
    for (auto& b : layer.bias) b = in.f64();
  }
  return MlpModel(std::move(layers));
}

MlpModel load_mlp_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_mlp(bytes);
}

void save_mlp_file(const MlpModel& model, const std::filesystem::path& path) {
  const auto bytes = save_mlp(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write model file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

std::string format_probes(const std::vector<Probe>& probes) {
  std::string out;
  for (const auto& p : probes) {
    for (double v : p.x) {
      out += fmt_real(v);
      out += ',';
    }
    out += std::to_string(p.label);
    out += '\n';
  }
  return out;
}

std::vector<Probe> parse_probes(const std::string& text) {
  std::vector<Probe> probes;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 2) throw Error("probe line " + std::to_string(lineno) + ": need features and a label");
    Probe p;
    try {
      for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
        std::size_t used = 0;
        p.x.push_back(std::stod(fields[i], &used));
        if (used != fields[i].size()) throw std::invalid_argument(fields[i]);
      }
      std::size_t used = 0;
      const auto label = std::stoull(fields.back(), &used);
      if (used != fields.back().size()) throw std::invalid_argument(fields.back());
      p.label = static_cast<std::size_t>(label);
    } catch (const std::logic_error&) {
      throw Error("probe line " + std::to_string(lineno) + ": malformed number");
    }
    if (!probes.empty() && probes.front().x.size() != p.x.size()) {
      throw Error("probe line " + std::to_string(lineno) + ": inconsistent dimension");
    }
    probes.push_back(std::move(p));
  }
  return probes;
}

std::vector<Probe> load_probes_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open probe file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_probes(buf.str());
}

void save_probes_file(const std::vector<Probe>& probes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write probe file " + path.string());
  out << format_probes(probes);
  if (!out) throw Error("short write to " + path.string());
}

GeneratedBenchmark gen_model(std::span<const std::size_t> dims, std::size_t num_classes,
                             std::size_t num_probes, std::uint64_t seed, double probe_contrast) {
  if (dims.empty() || num_classes == 0 || std::find(dims.begin(), dims.end(), 0) != dims.end()) {
    throw std::invalid_argument("gen_model: dimensions and class count must be positive");
  }
  std::vector<std::size_t> widths(dims.begin(), dims.end());
  widths.push_back(num_classes);

  Rng weight_rng(split_seed(seed, 0));
  std::vector<DenseLayer> layers;
  std::vector<double> centre(widths.front(), 0.5);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.inputs = widths[l];
    layer.outputs = widths[l + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.inputs));
    layer.weights.resize(layer.inputs * layer.outputs);
    for (auto& w : layer.weights) w = scale * weight_rng.gaussian();
    layer.bias.assign(layer.outputs, 0.0);
    std::vector<double> next(layer.outputs);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < layer.inputs; ++i) acc += layer.weights[o * layer.inputs + i] * centre[i];
      layer.bias[o] = -acc;
      next[o] = 0.0;
    }
    centre = std::move(next);
    layers.push_back(std::move(layer));
  }

  GeneratedBenchmark out{MlpModel(std::move(layers)), {}};
  Rng probe_rng(split_seed(seed, 1));
  out.probes.reserve(num_probes);
  for (std::size_t p = 0; p < num_probes; ++p) {
    Probe probe;
    probe.x.resize(widths.front());
    for (auto& v : probe.x) v = std::clamp(0.5 + probe_contrast * probe_rng.gaussian(), 0.0, 1.0);
    probe.label = argmax(out.model.forward(probe.x));
    out.probes.push_back(std::move(probe));
  }
  return out;
}

}  // namespace zog
