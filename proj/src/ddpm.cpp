#include "cubetrack/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cubetrack/errors.hpp"

namespace cubetrack::ddpm {

using ordered_json = nlohmann::ordered_json;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

DenoiseSchedule DenoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
    throw std::invalid_argument("betas must satisfy 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i)
    betas[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
  return from_betas(betas);
}

DenoiseSchedule DenoiseSchedule::from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw std::invalid_argument("schedule needs at least one step");
  DenoiseSchedule s;
  double alpha_bar_prev = 1.0;
  for (double beta : betas) {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("every beta must lie in (0, 1)");
    const double alpha_bar = alpha_bar_prev * (1.0 - beta);
    s.alpha.push_back(1.0 / std::sqrt(1.0 - beta));
    s.gamma.push_back(beta / std::sqrt(1.0 - alpha_bar));
    s.sigma.push_back(std::sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar)));
    s.alpha_bar.push_back(alpha_bar);
    alpha_bar_prev = alpha_bar;
  }
  return s;
}

DenoiseSchedule DenoiseSchedule::from_coefficients(std::vector<double> alpha, std::vector<double> gamma,
                                                   std::vector<double> sigma, std::vector<double> alpha_bar) {
  DenoiseSchedule s{std::move(alpha), std::move(gamma), std::move(sigma), std::move(alpha_bar)};
  s.validate();
  return s;
}

void DenoiseSchedule::validate() const {
  const std::size_t n = alpha.size();
  if (n == 0) throw std::invalid_argument("schedule needs at least one step");
  if (gamma.size() != n || sigma.size() != n || alpha_bar.size() != n)
    throw std::invalid_argument("schedule coefficient vectors differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(alpha[i]) || !(alpha[i] > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!std::isfinite(gamma[i])) throw std::invalid_argument("gamma must be finite");
    if (!std::isfinite(sigma[i]) || sigma[i] < 0.0) throw std::invalid_argument("sigma must be non-negative");
    if (!(alpha_bar[i] >= 0.0 && alpha_bar[i] <= 1.0)) throw std::invalid_argument("alpha_bar must lie in [0, 1]");
  }
}

void DenoiseSchedule::check_step(int k) const {
  if (k < 1 || k > steps())
    throw StepOutOfRange("step " + std::to_string(k) + " outside [1, " + std::to_string(steps()) + "]");
}

namespace {

Vector gaussian(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

NoisedAction forward_noise(const Vector& a0, int k, const DenoiseSchedule& schedule, Rng& rng) {
  schedule.check_step(k);
  const double ab = schedule.alpha_bar[k - 1];
  Vector eps = gaussian(static_cast<int>(a0.size()), rng);
  return {std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps, eps};
}

Vector denoise_step(const Vector& ak, int k, const Vector& obs, const EpsilonModel& model,
                    const DenoiseSchedule& schedule, Rng& rng) {
  schedule.check_step(k);
  const Vector eps = model.predict(obs, ak, k);
  Vector out = schedule.alpha[k - 1] * (ak - schedule.gamma[k - 1] * eps);
  if (k > 1 && schedule.sigma[k - 1] > 0.0) out += schedule.sigma[k - 1] * gaussian(static_cast<int>(ak.size()), rng);
  return out;
}

NoisedBatch draw_noised_batch(const std::vector<const Example*>& batch, const DenoiseSchedule& schedule, Rng& rng) {
  if (batch.empty()) throw EmptyBatch("training batch has no examples");
  const int n = static_cast<int>(batch.size());
  const int od = static_cast<int>(batch.front()->obs.size());
  const int ad = static_cast<int>(batch.front()->action.size());
  NoisedBatch out{Matrix(od, n), Matrix(ad, n), std::vector<int>(n), Matrix(ad, n)};
  std::uniform_int_distribution<int> step(1, schedule.steps());
  for (int i = 0; i < n; ++i) {
    const Example& ex = *batch[i];
    if (ex.obs.size() != od || ex.action.size() != ad) throw std::invalid_argument("ragged batch dimensions");
    const int k = step(rng);
    const NoisedAction na = forward_noise(ex.action, k, schedule, rng);
    out.obs.col(i) = ex.obs;
    out.noisy_action.col(i) = na.action;
    out.step[i] = k;
    out.noise.col(i) = na.noise;
  }
  return out;
}

double noised_batch_loss(const NoisedBatch& batch, const EpsilonModel& model) {
  const auto n = batch.noise.cols();
  if (n == 0) throw EmptyBatch("training batch has no examples");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    sum += (batch.noise.col(i) - model.predict(batch.obs.col(i), batch.noisy_action.col(i), batch.step[i]))
               .squaredNorm();
  return sum / static_cast<double>(n);
}

double training_loss(const std::vector<Example>& batch, const EpsilonModel& model, const DenoiseSchedule& schedule,
                     Rng& rng) {
  std::vector<const Example*> ptrs;
  for (const auto& ex : batch) ptrs.push_back(&ex);
  return noised_batch_loss(draw_noised_batch(ptrs, schedule, rng), model);
}

Vector step_embedding(int k, int dim) {
  if (dim < 0 || dim % 2 != 0) throw std::invalid_argument("embedding size must be even and non-negative");
  const int half = dim / 2;
  Vector e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(100.0) * i / std::max(half - 1, 1));
    e[2 * i] = std::sin(k * freq);
    e[2 * i + 1] = std::cos(k * freq);
  }
  return e;
}

Mlp::Mlp(int obs_dim, int action_dim, int hidden, int embed_dim, std::uint64_t seed)
    : obs_dim_(obs_dim), action_dim_(action_dim), hidden_(hidden), embed_dim_(embed_dim) {
  if (obs_dim < 0 || action_dim < 1 || hidden < 1 || embed_dim < 0 || embed_dim % 2 != 0)
    throw std::invalid_argument("invalid perceptron dimensions");
  build_layers();
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const double limit = std::sqrt(6.0 / (layer.rows + layer.cols));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (int i = 0; i < layer.rows * layer.cols; ++i) theta_[layer.offset + i] = uniform(rng);
  }
}

void Mlp::build_layers() {
  const int in = obs_dim_ + action_dim_ + embed_dim_;
  const int dims[4] = {in, hidden_, hidden_, action_dim_};
  layers_.clear();
  std::size_t offset = 0;
  for (int l = 0; l < 3; ++l) {
    layers_.push_back({dims[l + 1], dims[l], offset});
    offset += static_cast<std::size_t>(dims[l + 1]) * (dims[l] + 1);
  }
  theta_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

Eigen::Map<const RowMajorMatrix> Mlp::weights(int l) const {
  const Layer& layer = layers_[l];
  return {theta_.data() + layer.offset, layer.rows, layer.cols};
}

Eigen::Map<const Vector> Mlp::bias(int l) const {
  const Layer& layer = layers_[l];
  return {theta_.data() + layer.offset + static_cast<std::size_t>(layer.rows) * layer.cols, layer.rows};
}

void Mlp::set_parameters(const Vector& theta) {
  if (theta.size() != theta_.size()) throw std::invalid_argument("parameter vector has the wrong size");
  theta_ = theta;
}

Matrix Mlp::input_matrix(const NoisedBatch& batch) const {
  const auto n = batch.noisy_action.cols();
  Matrix x(obs_dim_ + action_dim_ + embed_dim_, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.col(i).head(obs_dim_) = batch.obs.col(i);
    x.col(i).segment(obs_dim_, action_dim_) = batch.noisy_action.col(i);
    x.col(i).tail(embed_dim_) = step_embedding(batch.step[i], embed_dim_);
  }
  return x;
}

Vector Mlp::predict(const Vector& obs, const Vector& noisy_action, int k) const {
  if (obs.size() != obs_dim_ || noisy_action.size() != action_dim_)
    throw std::invalid_argument("model input has the wrong dimension");
  NoisedBatch one{obs, noisy_action, {k}, Matrix(action_dim_, 1)};
  return predict_batch(one).col(0);
}

Matrix Mlp::predict_batch(const NoisedBatch& batch) const {
  Matrix h = input_matrix(batch);
  for (int l = 0; l < 3; ++l) {
    Matrix z = weights(l) * h;
    z.colwise() += bias(l);
    h = l < 2 ? Matrix(z.unaryExpr([](double v) { return v * sigmoid(v); })) : z;
  }
  return h;
}

double Mlp::loss_and_gradient(const NoisedBatch& batch, Vector* gradient) const {
  const auto n = batch.noisy_action.cols();
  if (n == 0) throw EmptyBatch("training batch has no examples");
  Matrix acts[4];
  Matrix pre[3];
  acts[0] = input_matrix(batch);
  for (int l = 0; l < 3; ++l) {
    pre[l] = weights(l) * acts[l];
    pre[l].colwise() += bias(l);
    acts[l + 1] = l < 2 ? Matrix(pre[l].unaryExpr([](double v) { return v * sigmoid(v); })) : pre[l];
  }
  const Matrix diff = acts[3] - batch.noise;
  const double loss = diff.squaredNorm() / static_cast<double>(n);
  if (!gradient) return loss;

  gradient->setZero(theta_.size());
  Matrix delta = (2.0 / static_cast<double>(n)) * diff;
  for (int l = 2; l >= 0; --l) {
    const Layer& layer = layers_[l];
    Eigen::Map<RowMajorMatrix>(gradient->data() + layer.offset, layer.rows, layer.cols) = delta * acts[l].transpose();
    Eigen::Map<Vector>(gradient->data() + layer.offset + static_cast<std::size_t>(layer.rows) * layer.cols,
                       layer.rows) = delta.rowwise().sum();
    if (l == 0) break;
    Matrix back = weights(l).transpose() * delta;
    delta = back.binaryExpr(pre[l - 1], [](double g, double z) {
      const double s = sigmoid(z);
      return g * s * (1.0 + z * (1.0 - s));
    });
  }
  return loss;
}

void Mlp::save(std::ostream& out) const {
  ordered_json j;
  j["obs_dim"] = obs_dim_;
  j["action_dim"] = action_dim_;
  j["hidden"] = hidden_;
  j["embed_dim"] = embed_dim_;
  j["activation"] = "silu";
  ordered_json layers = ordered_json::array();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    ordered_json entry;
    entry["rows"] = layer.rows;
    entry["cols"] = layer.cols;
    const std::size_t nw = static_cast<std::size_t>(layer.rows) * layer.cols;
    entry["weights"] = std::vector<double>(theta_.data() + layer.offset, theta_.data() + layer.offset + nw);
    entry["bias"] =
        std::vector<double>(theta_.data() + layer.offset + nw, theta_.data() + layer.offset + nw + layer.rows);
    layers.push_back(std::move(entry));
  }
  j["layers"] = std::move(layers);
  out << j.dump(1) << '\n';
}

void Mlp::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save(out);
}

Mlp Mlp::load(std::istream& in, const std::string& source) {
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaViolation(source, 0, std::string("invalid JSON: ") + e.what());
  }
  try {
    Mlp m;
    m.obs_dim_ = j.at("obs_dim").get<int>();
    m.action_dim_ = j.at("action_dim").get<int>();
    m.hidden_ = j.at("hidden").get<int>();
    m.embed_dim_ = j.at("embed_dim").get<int>();
    if (j.at("activation").get<std::string>() != "silu") throw SchemaViolation(source, 0, "unsupported activation");
    if (m.obs_dim_ < 0 || m.action_dim_ < 1 || m.hidden_ < 1 || m.embed_dim_ < 0 || m.embed_dim_ % 2 != 0)
      throw SchemaViolation(source, 0, "invalid dimensions");
    m.build_layers();
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != m.layers_.size())
      throw SchemaViolation(source, 0, "expected " + std::to_string(m.layers_.size()) + " layers");
    for (std::size_t l = 0; l < m.layers_.size(); ++l) {
      const Layer& layer = m.layers_[l];
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      if (layers[l].at("rows").get<int>() != layer.rows || layers[l].at("cols").get<int>() != layer.cols ||
          w.size() != static_cast<std::size_t>(layer.rows) * layer.cols || b.size() != static_cast<std::size_t>(layer.rows))
        throw SchemaViolation(source, 0, "layer " + std::to_string(l) + " has the wrong shape");
      std::copy(w.begin(), w.end(), m.theta_.data() + layer.offset);
      std::copy(b.begin(), b.end(), m.theta_.data() + layer.offset + w.size());
    }
    if (!m.theta_.allFinite()) throw SchemaViolation(source, 0, "non-finite parameter");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(source, 0, e.what());
  }
}

Mlp Mlp::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaViolation(path.string(), 0, "cannot open file");
  return load(in, path.string());
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning rate must be positive");
  if (hidden < 1) throw std::invalid_argument("hidden width must be positive");
  if (embed_dim < 0 || embed_dim % 2 != 0) throw std::invalid_argument("embedding size must be even");
}

TrainResult train_toy_policy(const std::vector<Example>& dataset, const DenoiseSchedule& schedule,
                             const TrainConfig& config) {
  config.validate();
  schedule.validate();
  if (dataset.empty()) throw EmptyBatch("training dataset is empty");
  const int od = static_cast<int>(dataset.front().obs.size());
  const int ad = static_cast<int>(dataset.front().action.size());
  for (const auto& ex : dataset)
    if (ex.obs.size() != od || ex.action.size() != ad || !ex.obs.allFinite() || !ex.action.allFinite())
      throw std::invalid_argument("dataset examples must be finite and share dimensions");

  TrainResult result{Mlp(od, ad, config.hidden, config.embed_dim, config.seed), {}};
  Mlp& model = result.model;
  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  Vector m = Vector::Zero(static_cast<Eigen::Index>(model.parameter_count()));
  Vector v = m;
  Vector grad;
  Vector theta = model.parameters();
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Example*> batch;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset[order[i]]);
      const NoisedBatch nb = draw_noised_batch(batch, schedule, rng);
      const double loss = model.loss_and_gradient(nb, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": loss " +
                            std::to_string(loss) + ", learning rate " + std::to_string(config.learning_rate));
      ++step;
      m = beta1 * m + (1.0 - beta1) * grad;
      v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      theta.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + adam_eps);
      model.set_parameters(theta);
      epoch_loss += loss;
      ++batches;
    }
    result.loss_curve.push_back(epoch_loss / batches);
  }
  return result;
}

double untrained_sample_variance(const DenoiseSchedule& schedule) {
  schedule.validate();
  double var = 1.0;
  for (int k = schedule.steps(); k >= 1; --k) {
    const double a = schedule.alpha[k - 1];
    var = a * a * var + (k > 1 ? schedule.sigma[k - 1] * schedule.sigma[k - 1] : 0.0);
  }
  return var;
}

Vector sample(const Vector& obs, const EpsilonModel& model, const DenoiseSchedule& schedule, Rng& rng) {
  Vector a = gaussian(model.action_dim(), rng);
  for (int k = schedule.steps(); k >= 1; --k) a = denoise_step(a, k, obs, model, schedule, rng);
  return a;
}

BimodalityReport bimodality_report(const std::vector<Vector>& samples, const Vector& mode_a, const Vector& mode_b,
                                   double max_center_error, double min_fraction) {
  BimodalityReport r;
  r.center[0] = mode_a;
  r.center[1] = mode_b;
  if (samples.empty()) return r;
  std::vector<int> assign(samples.size(), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const int c = (samples[i] - r.center[0]).squaredNorm() <= (samples[i] - r.center[1]).squaredNorm() ? 0 : 1;
      if (c != assign[i]) changed = true;
      assign[i] = c;
    }
    if (!changed && iter > 0) break;
    for (int c = 0; c < 2; ++c) {
      Vector sum = Vector::Zero(mode_a.size());
      std::size_t count = 0;
      for (std::size_t i = 0; i < samples.size(); ++i)
        if (assign[i] == c) {
          sum += samples[i];
          ++count;
        }
      if (count > 0) r.center[c] = sum / static_cast<double>(count);
    }
  }
  r.passed = true;
  for (int c = 0; c < 2; ++c) {
    r.count[c] = static_cast<std::size_t>(std::count(assign.begin(), assign.end(), c));
    r.fraction[c] = static_cast<double>(r.count[c]) / static_cast<double>(samples.size());
    r.center_error[c] = (r.center[c] - (c == 0 ? mode_a : mode_b)).norm();
    r.passed = r.passed && r.count[c] > 0 && r.center_error[c] <= max_center_error && r.fraction[c] >= min_fraction;
  }
  return r;
}

std::vector<Example> read_dataset(std::istream& in, const std::string& source) {
  std::vector<Example> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaViolation(source, line, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || j.size() != 2 || !j.contains("obs") || !j.contains("action"))
      throw SchemaViolation(source, line, "expected exactly the keys 'obs' and 'action'");
    Example ex;
    for (const char* key : {"obs", "action"}) {
      const auto& arr = j[key];
      if (!arr.is_array()) throw SchemaViolation(source, line, std::string("'") + key + "' must be an array");
      Vector v(static_cast<Eigen::Index>(arr.size()));
      for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number() || !std::isfinite(arr[i].get<double>()))
          throw SchemaViolation(source, line, std::string("'") + key + "' must hold finite numbers");
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
      }
      (std::string(key) == "obs" ? ex.obs : ex.action) = v;
    }
    if (ex.action.size() == 0) throw SchemaViolation(source, line, "'action' must not be empty");
    if (!out.empty() && (ex.obs.size() != out.front().obs.size() || ex.action.size() != out.front().action.size()))
      throw SchemaViolation(source, line, "dimensions differ from the first example");
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw SchemaViolation(source, 0, "dataset has no examples");
  return out;
}

std::vector<Example> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaViolation(path.string(), 0, "cannot open file");
  return read_dataset(in, path.string());
}

void write_dataset(std::ostream& out, const std::vector<Example>& dataset) {
  for (const auto& ex : dataset) {
    ordered_json j;
    j["obs"] = std::vector<double>(ex.obs.data(), ex.obs.data() + ex.obs.size());
    j["action"] = std::vector<double>(ex.action.data(), ex.action.data() + ex.action.size());
    out << j.dump() << '\n';
  }
}

}  // namespace cubetrack::ddpm
