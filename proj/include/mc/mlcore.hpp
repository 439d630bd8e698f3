#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mc/lexicon.hpp"
#include "mc/util.hpp"

// Linear and one-hidden-layer (tanh) feedforward models trained with seeded
// mini-batch gradient descent.
namespace mc::ml {

enum class Task { binary_classification, regression };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

struct ModelSpec {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // 0 means a linear model
  std::size_t output_dim = 1;
  Task task = Task::binary_classification;
  std::string feature_schema_id;
  // Regression outputs are clamped to this range at inference only.
  double output_min = -1.0;
  double output_max = 1.0;

  // Throws ContractViolation when the invariants do not hold.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct Layer {
  std::size_t rows = 0;  // outputs
  std::size_t cols = 0;  // inputs
  std::vector<double> weights;  // row-major rows x cols
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;

  bool operator==(const TrainMeta&) const = default;
};

struct Hyperparams {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double l2 = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  std::vector<double> x;
  std::vector<double> target;  // output_dim values
};

class Model {
 public:
  Model() = default;
  // All-zero weights.
  explicit Model(ModelSpec spec);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static Model initialized(ModelSpec spec, Rng& rng);

  const ModelSpec& spec() const { return spec_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  TrainMeta& train_meta() { return meta_; }
  const TrainMeta& train_meta() const { return meta_; }

  // Output before the sigmoid / clamp.
  std::vector<double> raw_output(std::span<const double> x) const;
  // Sigmoid for classification, clamped value for regression.
  std::vector<double> predict(std::span<const double> x) const;
  // Single-output convenience; checks schema and length.
  double forward(const lexicon::FeatureVector& x) const;

  // Per-sample data loss (cross-entropy on the logit, or mean squared error).
  double loss(std::span<const double> x, std::span<const double> target) const;
  // Gradient of loss() w.r.t. every parameter, in parameter order.
  std::vector<double> gradient(std::span<const double> x, std::span<const double> target) const;

  // Flat view over all parameters: per layer, weights then bias.
  std::size_t parameter_count() const;
  double& parameter(std::size_t i);
  double parameter(std::size_t i) const;

  bool operator==(const Model&) const = default;

 private:
  ModelSpec spec_;
  std::vector<Layer> layers_;
  TrainMeta meta_;
};

// Throws TrainingError on an empty dataset or a non-finite epoch loss.
Model train(const ModelSpec& spec, std::span<const Sample> dataset, const Hyperparams& hyper);

// Max over parameters of |analytic - central difference| / max(|a|, |n|, 1e-8)
// with step 1e-5.
double grad_check(const Model& model, std::span<const double> x, std::span<const double> target);

Json to_json(const Model& model);
// Throws ModelError on version mismatch, checksum mismatch or bad shapes.
Model model_from_json(const Json& j);

void save_model(const Model& model, const std::filesystem::path& path);
// expected_schema, when given, must equal the stored feature schema.
Model load_model(const std::filesystem::path& path, std::optional<std::string_view> expected_schema = std::nullopt);

}  // namespace mc::ml
