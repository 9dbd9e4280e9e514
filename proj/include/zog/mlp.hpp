#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zog/oracle.hpp"

namespace zog {

/// One dense layer, y = W x + b with W stored row-major (outputs x inputs).
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward classifier: ReLU between layers, raw logits out of the last.
class MlpModel {
 public:
  MlpModel() = default;
  /// Validates the layer chain; throws ModelFormatError on inconsistency.
  explicit MlpModel(std::vector<DenseLayer> layers);

  std::size_t input_dim() const { return layers_.front().inputs; }
  std::size_t num_classes() const { return layers_.back().outputs; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  /// Layer widths, input first: L + 1 entries.
  std::vector<std::size_t> dims() const;

  std::vector<double> forward(std::span<const double> x) const;

  bool operator==(const MlpModel&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Binary format, all integers and reals little-endian, no padding:
///   "ZOGMLP1\n"
///   u32 L, then L + 1 u32 dimensions
///   per layer: f64 weights (row-major, out x in), then f64 bias (out)
std::vector<std::uint8_t> save_mlp(const MlpModel& model);
MlpModel load_mlp(std::span<const std::uint8_t> bytes);
MlpModel load_mlp_file(const std::filesystem::path& path);
void save_mlp_file(const MlpModel& model, const std::filesystem::path& path);

struct Probe {
  Point x;
  std::size_t label = 0;
  bool operator==(const Probe&) const = default;
};

/// One probe per line: comma-separated reals, then the integer label.
std::string format_probes(const std::vector<Probe>& probes);
std::vector<Probe> parse_probes(const std::string& text);
std::vector<Probe> load_probes_file(const std::filesystem::path& path);
void save_probes_file(const std::vector<Probe>& probes, const std::filesystem::path& path);

struct GeneratedBenchmark {
  MlpModel model;
  std::vector<Probe> probes;
};

/// Deterministic random classifier plus probes labelled by its own argmax.
///
/// `dims` lists the input width followed by any hidden widths; the final
/// layer maps to `num_classes`. Weights are He-scaled Gaussians and each
/// layer's bias re-centres it so the mid-grey input (all 0.5) lands on the
/// ReLU kink / the all-zero logit vector. Probes are low-contrast images
/// x_j = clamp(0.5 + contrast * z_j, 0, 1) with contrast 0.05 by default, z_j standard normal.
GeneratedBenchmark gen_model(std::span<const std::size_t> dims, std::size_t num_classes,
                             std::size_t num_probes, std::uint64_t seed, double probe_contrast = 0.05);

class MlpOracle final : public LocalOracle {
 public:
  explicit MlpOracle(std::shared_ptr<const MlpModel> model, std::uint64_t budget = kDefaultBudget)
      : LocalOracle(budget), model_(std::move(model)) {}

  std::size_t input_dim() const override { return model_->input_dim(); }
  std::size_t num_classes() const override { return model_->num_classes(); }
  const MlpModel& model() const { return *model_; }

 protected:
  std::vector<double> evaluate(std::span<const double> x) const override {
    return model_->forward(x);
  }

 private:
  std::shared_ptr<const MlpModel> model_;
};

}  // namespace zog
