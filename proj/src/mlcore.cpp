#include "mc/mlcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mc/error.hpp"

namespace mc::ml {

namespace {

constexpr std::string_view kModelFormat = "mc-model";
constexpr int kModelVersion = 1;

double sigmoid(double z) {
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void affine(const Layer& layer, std::span<const double> in, std::vector<double>& out) {
  out.assign(layer.rows, 0.0);
  for (std::size_t r = 0; r < layer.rows; ++r) {
    double acc = layer.bias[r];
    const double* w = layer.weights.data() + r * layer.cols;
    for (std::size_t c = 0; c < layer.cols; ++c) acc += w[c] * in[c];
    out[r] = acc;
  }
}

Layer zero_layer(std::size_t rows, std::size_t cols) {
  Layer l;
  l.rows = rows;
  l.cols = cols;
  l.weights.assign(rows * cols, 0.0);
  l.bias.assign(rows, 0.0);
  return l;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

Json layers_to_json(const std::vector<Layer>& layers) {
  Json arr = Json::array();
  for (const auto& l : layers) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < l.rows; ++r) {
      Json row = Json::array();
      for (std::size_t c = 0; c < l.cols; ++c) row.push_back(l.weights[r * l.cols + c]);
      rows.push_back(std::move(row));
    }
    arr.push_back(Json{{"weights", std::move(rows)}, {"bias", l.bias}});
  }
  return arr;
}

}  // namespace

std::string_view to_string(Task task) {
  return task == Task::binary_classification ? "binary_classification" : "regression";
}

Task task_from_string(std::string_view name) {
  if (name == "binary_classification") return Task::binary_classification;
  if (name == "regression") return Task::regression;
  throw ModelError("unknown task '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ContractViolation("model dims must be positive");
  if (task == Task::binary_classification && output_dim != 1) {
    throw ContractViolation("binary classification requires output_dim = 1");
  }
  if (task == Task::regression && !(output_max > output_min)) {
    throw ContractViolation("regression output range must be non-empty");
  }
}

void Hyperparams::validate() const {
  if (!(learning_rate > 0) || epochs == 0 || batch_size == 0 || !(l2 >= 0)) {
    throw ContractViolation("invalid hyperparameters");
  }
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.hidden_dim == 0) {
    layers_.push_back(zero_layer(spec_.output_dim, spec_.input_dim));
  } else {
    layers_.push_back(zero_layer(spec_.hidden_dim, spec_.input_dim));
    layers_.push_back(zero_layer(spec_.output_dim, spec_.hidden_dim));
  }
}

Model Model::initialized(ModelSpec spec, Rng& rng) {
  Model m(std::move(spec));
  for (auto& layer : m.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.cols));
    for (auto& w : layer.weights) w = rng.uniform(-bound, bound);
  }
  return m;
}

std::vector<double> Model::raw_output(std::span<const double> x) const {
  if (x.size() != spec_.input_dim) {
    throw ContractViolation("input length " + std::to_string(x.size()) + " does not match model input_dim " +
                            std::to_string(spec_.input_dim));
  }
  std::vector<double> out;
  if (layers_.size() == 1) {
    affine(layers_[0], x, out);
    return out;
  }
  std::vector<double> hidden;
  affine(layers_[0], x, hidden);
  for (auto& h : hidden) h = std::tanh(h);
  affine(layers_[1], hidden, out);
  return out;
}

std::vector<double> Model::predict(std::span<const double> x) const {
  auto out = raw_output(x);
  for (auto& v : out) {
    v = spec_.task == Task::binary_classification ? sigmoid(v) : std::clamp(v, spec_.output_min, spec_.output_max);
  }
  return out;
}

double Model::forward(const lexicon::FeatureVector& x) const {
  if (x.schema_id != spec_.feature_schema_id) {
    throw ContractViolation("feature schema '" + x.schema_id + "' does not match model schema '" +
                            spec_.feature_schema_id + "'");
  }
  if (spec_.output_dim != 1) throw ContractViolation("forward requires a single-output model");
  return predict(x.values).front();
}

double Model::loss(std::span<const double> x, std::span<const double> target) const {
  if (target.size() != spec_.output_dim) throw ContractViolation("target length does not match output_dim");
  const auto z = raw_output(x);
  if (spec_.task == Task::binary_classification) {
    return softplus(z[0]) - target[0] * z[0];
  }
  double acc = 0;
  for (std::size_t k = 0; k < z.size(); ++k) acc += (z[k] - target[k]) * (z[k] - target[k]);
  return acc / static_cast<double>(z.size());
}

std::vector<double> Model::gradient(std::span<const double> x, std::span<const double> target) const {
  if (x.size() != spec_.input_dim) throw ContractViolation("input length does not match model input_dim");
  if (target.size() != spec_.output_dim) throw ContractViolation("target length does not match output_dim");
  const Layer& last = layers_.back();

  std::vector<double> hidden;
  std::span<const double> last_in = x;
  if (layers_.size() == 2) {
    affine(layers_[0], x, hidden);
    for (auto& h : hidden) h = std::tanh(h);
    last_in = hidden;
  }
  std::vector<double> z;
  affine(last, last_in, z);

  std::vector<double> dz(z.size());
  if (spec_.task == Task::binary_classification) {
    dz[0] = sigmoid(z[0]) - target[0];
  } else {
    for (std::size_t k = 0; k < z.size(); ++k) dz[k] = 2.0 * (z[k] - target[k]) / static_cast<double>(z.size());
  }

  std::vector<double> grad(parameter_count(), 0.0);
  std::size_t offset = 0;
  if (layers_.size() == 2) {
    const Layer& first = layers_[0];
    std::vector<double> da(first.rows, 0.0);
    for (std::size_t r = 0; r < last.rows; ++r) {
      for (std::size_t c = 0; c < last.cols; ++c) da[c] += last.weights[r * last.cols + c] * dz[r];
    }
    for (std::size_t c = 0; c < first.rows; ++c) da[c] *= 1.0 - hidden[c] * hidden[c];
    for (std::size_t r = 0; r < first.rows; ++r) {
      for (std::size_t c = 0; c < first.cols; ++c) grad[offset + r * first.cols + c] = da[r] * x[c];
    }
    offset += first.weights.size();
    for (std::size_t r = 0; r < first.rows; ++r) grad[offset + r] = da[r];
    offset += first.bias.size();
  }
  for (std::size_t r = 0; r < last.rows; ++r) {
    for (std::size_t c = 0; c < last.cols; ++c) grad[offset + r * last.cols + c] = dz[r] * last_in[c];
  }
  offset += last.weights.size();
  for (std::size_t r = 0; r < last.rows; ++r) grad[offset + r] = dz[r];
  return grad;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

double& Model::parameter(std::size_t i) {
  for (auto& l : layers_) {
    if (i < l.weights.size()) return l.weights[i];
    i -= l.weights.size();
    if (i < l.bias.size()) return l.bias[i];
    i -= l.bias.size();
  }
  throw ContractViolation("parameter index out of range");
}

double Model::parameter(std::size_t i) const { return const_cast<Model&>(*this).parameter(i); }

Model train(const ModelSpec& spec, std::span<const Sample> dataset, const Hyperparams& hyper) {
  spec.validate();
  hyper.validate();
  if (dataset.empty()) throw TrainingError("training dataset is empty");
  for (const auto& s : dataset) {
    if (s.x.size() != spec.input_dim || s.target.size() != spec.output_dim) {
      throw ContractViolation("training sample shape does not match model spec");
    }
    if (!all_finite(s.x) || !all_finite(s.target)) throw TrainingError("training sample contains non-finite values");
    if (spec.task == Task::binary_classification && s.target[0] != 0.0 && s.target[0] != 1.0) {
      throw TrainingError("classification targets must be 0 or 1");
    }
  }

  Rng rng(hyper.seed);
  Model model = Model::initialized(spec, rng);
  const std::size_t params = model.parameter_count();
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  // Weight (not bias) positions receive the L2 penalty.
  std::vector<bool> penalized(params, false);
  {
    std::size_t at = 0;
    for (const auto& l : model.layers()) {
      std::fill_n(penalized.begin() + static_cast<std::ptrdiff_t>(at), l.weights.size(), true);
      at += l.weights.size() + l.bias.size();
    }
  }

  auto& meta = model.train_meta();
  meta.seed = hyper.seed;
  std::vector<double> grad_sum(params);
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = dataset[order[b]];
        const auto g = model.gradient(s.x, s.target);
        for (std::size_t p = 0; p < params; ++p) grad_sum[p] += g[p];
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t p = 0; p < params; ++p) {
        double g = grad_sum[p] * scale;
        if (penalized[p]) g += hyper.l2 * model.parameter(p);
        model.parameter(p) -= hyper.learning_rate * g;
      }
    }
    double total = 0;
    for (const auto& s : dataset) total += model.loss(s.x, s.target);
    double epoch_loss = total / static_cast<double>(dataset.size());
    if (hyper.l2 > 0) {
      double sq = 0;
      for (std::size_t p = 0; p < params; ++p) {
        if (penalized[p]) sq += model.parameter(p) * model.parameter(p);
      }
      epoch_loss += 0.5 * hyper.l2 * sq;
    }
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
    }
    meta.epoch_losses.push_back(epoch_loss);
    meta.epochs_run = epoch;
    meta.final_loss = epoch_loss;
  }
  return model;
}

double grad_check(const Model& model, std::span<const double> x, std::span<const double> target) {
  constexpr double h = 1e-5;
  const auto analytic = model.gradient(x, target);
  Model probe = model;
  double worst = 0;
  for (std::size_t p = 0; p < probe.parameter_count(); ++p) {
    const double saved = probe.parameter(p);
    probe.parameter(p) = saved + h;
    const double up = probe.loss(x, target);
    probe.parameter(p) = saved - h;
    const double down = probe.loss(x, target);
    probe.parameter(p) = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic[p]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[p] - numeric) / denom);
  }
  return worst;
}

Json to_json(const Model& model) {
  const auto& s = model.spec();
  Json weights = layers_to_json(model.layers());
  const std::string checksum = sha256_hex(weights.dump());
  const auto& m = model.train_meta();
  return Json{{"format", kModelFormat},
              {"version", kModelVersion},
              {"spec",
               {{"input_dim", s.input_dim},
                {"hidden_dim", s.hidden_dim},
                {"output_dim", s.output_dim},
                {"task", std::string(to_string(s.task))},
                {"output_min", s.output_min},
                {"output_max", s.output_max}}},
              {"schema_id", s.feature_schema_id},
              {"seed", m.seed},
              {"train_meta", {{"epochs_run", m.epochs_run}, {"final_loss", m.final_loss}, {"epoch_losses", m.epoch_losses}}},
              {"weights", std::move(weights)},
              {"checksum", checksum}};
}

Model model_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw ModelError("not a model file");
    if (j.at("version").get<int>() != kModelVersion) {
      throw ModelError("unsupported model version " + std::to_string(j.at("version").get<int>()));
    }
    const auto& sj = j.at("spec");
    ModelSpec spec;
    spec.input_dim = sj.at("input_dim").get<std::size_t>();
    spec.hidden_dim = sj.at("hidden_dim").get<std::size_t>();
    spec.output_dim = sj.at("output_dim").get<std::size_t>();
    spec.task = task_from_string(sj.at("task").get<std::string>());
    spec.output_min = sj.at("output_min").get<double>();
    spec.output_max = sj.at("output_max").get<double>();
    spec.feature_schema_id = j.at("schema_id").get<std::string>();
    try {
      spec.validate();
    } catch (const ContractViolation& e) {
      throw ModelError(std::string("invalid model spec: ") + e.what());
    }
    const auto& wj = j.at("weights");
    if (sha256_hex(wj.dump()) != j.at("checksum").get<std::string>()) {
      throw ModelError("weight checksum mismatch (corrupted model file)");
    }
    Model model(spec);
    if (wj.size() != model.layers().size()) throw ModelError("layer count does not match spec");
    for (std::size_t li = 0; li < wj.size(); ++li) {
      auto& layer = model.layers()[li];
      const auto& rows = wj[li].at("weights");
      const auto& bias = wj[li].at("bias");
      if (rows.size() != layer.rows || bias.size() != layer.rows) throw ModelError("layer shape does not match spec");
      for (std::size_t r = 0; r < layer.rows; ++r) {
        if (rows[r].size() != layer.cols) throw ModelError("layer shape does not match spec");
        for (std::size_t c = 0; c < layer.cols; ++c) layer.weights[r * layer.cols + c] = rows[r][c].get<double>();
        layer.bias[r] = bias[r].get<double>();
      }
      if (!all_finite(layer.weights) || !all_finite(layer.bias)) throw ModelError("non-finite weight");
    }
    auto& meta = model.train_meta();
    meta.seed = j.at("seed").get<std::uint64_t>();
    const auto& tm = j.at("train_meta");
    meta.epochs_run = tm.at("epochs_run").get<std::size_t>();
    meta.final_loss = tm.at("final_loss").get<double>();
    meta.epoch_losses = tm.at("epoch_losses").get<std::vector<double>>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(model).dump(1) + "\n");
}

Model load_model(const std::filesystem::path& path, std::optional<std::string_view> expected_schema) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const ConfigError& e) {
    throw ModelError(e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(path.string() + ": corrupted model file: " + e.what());
  }
  Model model = model_from_json(j);
  if (expected_schema && model.spec().feature_schema_id != *expected_schema) {
    throw ModelError(path.string() + ": model schema '" + model.spec().feature_schema_id + "' but expected '" +
                     std::string(*expected_schema) + "'");
  }
  return model;
}

}  // namespace mc::ml
