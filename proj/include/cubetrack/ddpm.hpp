#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace cubetrack::ddpm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Per-step coefficients of the reverse update
///   a_{k-1} = alpha_k (a_k - gamma_k eps(o, a_k, k)) + sigma_k z
/// plus the cumulative signal fraction alpha_bar_k used by forward noising
///   a_k = sqrt(alpha_bar_k) a_0 + sqrt(1 - alpha_bar_k) eps.
/// Vectors are indexed by k - 1 for k = 1..K.
struct DenoiseSchedule {
  std::vector<double> alpha;
  std::vector<double> gamma;
  std::vector<double> sigma;
  std::vector<double> alpha_bar;

  int steps() const { return static_cast<int>(alpha.size()); }

  /// Linear variance schedule beta_1..beta_K mapped to alpha = 1/sqrt(1-beta),
  /// gamma = beta/sqrt(1-alpha_bar), sigma^2 = posterior variance
  /// beta (1 - alpha_bar_{k-1}) / (1 - alpha_bar_k).
  static DenoiseSchedule linear(int steps = 50, double beta_start = 1e-4, double beta_end = 0.2);
  static DenoiseSchedule from_betas(const std::vector<double>& betas);
  /// Raw per-step coefficients, validated but otherwise taken as given.
  static DenoiseSchedule from_coefficients(std::vector<double> alpha, std::vector<double> gamma,
                                           std::vector<double> sigma, std::vector<double> alpha_bar);

  /// Throws std::invalid_argument for empty or ragged vectors, non-finite
  /// values, alpha <= 0, sigma < 0, or alpha_bar outside [0, 1].
  void validate() const;
  /// Throws StepOutOfRange unless 1 <= k <= K.
  void check_step(int k) const;
};

/// Noise predictor eps_theta(obs, a_k, k).
class EpsilonModel {
 public:
  virtual ~EpsilonModel() = default;
  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vector predict(const Vector& obs, const Vector& noisy_action, int k) const = 0;
};

/// Wraps a callable; used for analytic test models.
class FunctionModel : public EpsilonModel {
 public:
  using Fn = std::function<Vector(const Vector& obs, const Vector& noisy_action, int k)>;
  FunctionModel(int obs_dim, int action_dim, Fn fn) : obs_dim_(obs_dim), action_dim_(action_dim), fn_(std::move(fn)) {}
  int obs_dim() const override { return obs_dim_; }
  int action_dim() const override { return action_dim_; }
  Vector predict(const Vector& obs, const Vector& noisy_action, int k) const override {
    return fn_(obs, noisy_action, k);
  }

 private:
  int obs_dim_;
  int action_dim_;
  Fn fn_;
};

struct Example {
  Vector obs;
  Vector action;
};

/// Training inputs with their noise already drawn.
struct NoisedBatch {
  Matrix obs;            ///< obs_dim x B
  Matrix noisy_action;   ///< action_dim x B
  std::vector<int> step; ///< k per column
  Matrix noise;          ///< action_dim x B, the injected eps
};

struct NoisedAction {
  Vector action;
  Vector noise;
};

/// Throws StepOutOfRange.
NoisedAction forward_noise(const Vector& a0, int k, const DenoiseSchedule& schedule, Rng& rng);

/// One reverse step; the noise term is dropped at k = 1. Throws StepOutOfRange.
Vector denoise_step(const Vector& ak, int k, const Vector& obs, const EpsilonModel& model,
                    const DenoiseSchedule& schedule, Rng& rng);

/// Draws k uniformly in [1, K] and the noise for every example. Throws
/// EmptyBatch.
NoisedBatch draw_noised_batch(const std::vector<const Example*>& batch, const DenoiseSchedule& schedule, Rng& rng);

/// Mean over the batch of ||eps - eps_theta||^2. Throws EmptyBatch.
double training_loss(const std::vector<Example>& batch, const EpsilonModel& model, const DenoiseSchedule& schedule,
                     Rng& rng);
double noised_batch_loss(const NoisedBatch& batch, const EpsilonModel& model);

/// Sinusoidal encoding of the step index: sin and cos at `dim / 2`
/// geometrically spaced frequencies.
Vector step_embedding(int k, int dim);

/// Perceptron with two SiLU hidden layers over [obs, a_k, embedding(k)].
class Mlp : public EpsilonModel {
 public:
  Mlp() = default;
  /// Hidden weights drawn uniformly in +-sqrt(6 / (fan_in + fan_out)); output
  /// weights and all biases start at zero, so an untrained model predicts 0.
  Mlp(int obs_dim, int action_dim, int hidden = 64, int embed_dim = 16, std::uint64_t seed = 0);

  int obs_dim() const override { return obs_dim_; }
  int action_dim() const override { return action_dim_; }
  int hidden() const { return hidden_; }
  int embed_dim() const { return embed_dim_; }
  Vector predict(const Vector& obs, const Vector& noisy_action, int k) const override;

  /// Predictions for a whole batch, action_dim x B.
  Matrix predict_batch(const NoisedBatch& batch) const;

  /// Loss of noised_batch_loss and its gradient with respect to parameters().
  double loss_and_gradient(const NoisedBatch& batch, Vector* gradient) const;

  /// All weights and biases, layer by layer, each weight matrix row-major.
  const Vector& parameters() const { return theta_; }
  void set_parameters(const Vector& theta);
  std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }

  /// Checkpoint JSON: dimensions plus per-layer row-major weights and biases.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static Mlp load(std::istream& in, const std::string& source = "<stream>");
  static Mlp load(const std::filesystem::path& path);

 private:
  struct Layer {
    int rows, cols;
    std::size_t offset;  ///< weights at offset, biases follow
  };
  Matrix input_matrix(const NoisedBatch& batch) const;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weights(int l) const;
  Eigen::Map<const Vector> bias(int l) const;
  void build_layers();

  int obs_dim_ = 0;
  int action_dim_ = 0;
  int hidden_ = 0;
  int embed_dim_ = 0;
  std::vector<Layer> layers_;
  Vector theta_;
};

struct TrainConfig {
  int epochs = 300;
  int batch_size = 256;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
  int hidden = 64;
  int embed_dim = 16;

  void validate() const;
};

struct TrainResult {
  Mlp model;
  std::vector<double> loss_curve;  ///< mean minibatch loss per epoch
};

/// Adam on training_loss over shuffled minibatches; deterministic for a seed.
/// Throws EmptyBatch for an empty dataset and NonFiniteLoss (with epoch and
/// step) when the loss diverges.
TrainResult train_toy_policy(const std::vector<Example>& dataset, const DenoiseSchedule& schedule,
                             const TrainConfig& config);

/// a_K ~ N(0, I), then denoise_step for k = K..1.
Vector sample(const Vector& obs, const EpsilonModel& model, const DenoiseSchedule& schedule, Rng& rng);

/// Per-dimension variance of `sample` under a model that always predicts
/// zero noise: the spread the schedule alone gives an untrained policy.
double untrained_sample_variance(const DenoiseSchedule& schedule);

/// Two-means clustering of 2-D or higher samples compared against two modes.
struct BimodalityReport {
  Vector center[2];
  std::size_t count[2] = {0, 0};
  double fraction[2] = {0.0, 0.0};
  double center_error[2] = {0.0, 0.0};  ///< distance from each center to its matched mode
  bool passed = false;
};

/// Clusters `samples` into two groups (seeded at the two given modes) and
/// checks that each center lies within `max_center_error` of a distinct mode
/// and each cluster holds at least `min_fraction` of the samples.
BimodalityReport bimodality_report(const std::vector<Vector>& samples, const Vector& mode_a, const Vector& mode_b,
                                   double max_center_error = 0.25, double min_fraction = 0.3);

/// Dataset JSONL, one {"obs": [...], "action": [...]} object per line. Throws
/// SchemaViolation with the line number.
std::vector<Example> read_dataset(std::istream& in, const std::string& source = "<stream>");
std::vector<Example> read_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const std::vector<Example>& dataset);

}  // namespace cubetrack::ddpm
