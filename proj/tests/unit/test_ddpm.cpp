#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cubetrack/ddpm.hpp"
#include "cubetrack/errors.hpp"

using namespace cubetrack;
using namespace cubetrack::ddpm;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("linear schedule coefficients by hand") {
  const DenoiseSchedule s = DenoiseSchedule::linear(50, 1e-4, 0.2);
  REQUIRE(s.steps() == 50);
  double alpha_bar = 1.0;
  for (int k = 1; k <= 50; ++k) {
    const double beta = 1e-4 + (0.2 - 1e-4) * (k - 1) / 49.0;
    const double prev = alpha_bar;
    alpha_bar *= 1.0 - beta;
    CHECK(s.alpha_bar[k - 1] == doctest::Approx(alpha_bar).epsilon(1e-12));
    CHECK(s.alpha[k - 1] == doctest::Approx(1.0 / std::sqrt(1.0 - beta)).epsilon(1e-12));
    CHECK(s.gamma[k - 1] == doctest::Approx(beta / std::sqrt(1.0 - alpha_bar)).epsilon(1e-12));
    CHECK(s.sigma[k - 1] == doctest::Approx(std::sqrt(beta * (1.0 - prev) / (1.0 - alpha_bar))).epsilon(1e-12));
  }
  CHECK(s.sigma[0] == 0.0);
  CHECK_THROWS_AS(s.check_step(0), StepOutOfRange);
  CHECK_THROWS_AS(s.check_step(51), StepOutOfRange);
  CHECK_THROWS_AS(DenoiseSchedule::from_betas({0.1, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(DenoiseSchedule::from_coefficients({1.0}, {0.1}, {-0.1}, {0.5}), std::invalid_argument);
}

TEST_CASE("forward noise has the closed-form moments") {
  const DenoiseSchedule s = DenoiseSchedule::linear();
  Rng rng(61);
  const Vector a0 = vec2(1.0, -2.0);
  const int k = 20;
  Vector sum = Vector::Zero(2);
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const NoisedAction na = forward_noise(a0, k, s, rng);
    CHECK((na.action - (std::sqrt(s.alpha_bar[k - 1]) * a0 + std::sqrt(1 - s.alpha_bar[k - 1]) * na.noise)).norm() <
          1e-12);
    sum += na.action;
    sq += (na.action - std::sqrt(s.alpha_bar[k - 1]) * a0).squaredNorm();
  }
  CHECK((sum / n - std::sqrt(s.alpha_bar[k - 1]) * a0).norm() < 0.03);
  CHECK(sq / (2 * n) == doctest::Approx(1 - s.alpha_bar[k - 1]).epsilon(0.03));
}

TEST_CASE("denoise step with an oracle noise predictor") {
  const DenoiseSchedule s = DenoiseSchedule::linear();
  const FunctionModel ones(1, 2, [](const Vector&, const Vector& a, int) { return Vector::Ones(a.size()); });
  Rng rng(62);
  const Vector a = vec2(0.5, 0.25);
  const Vector out = denoise_step(a, 1, Vector::Zero(1), ones, s, rng);
  CHECK((out - s.alpha[0] * (a - s.gamma[0] * Vector::Ones(2))).norm() < 1e-15);
  CHECK_THROWS_AS(denoise_step(a, 0, Vector::Zero(1), ones, s, rng), StepOutOfRange);
}

TEST_CASE("untrained sampling spread matches the closed form") {
  const DenoiseSchedule s = DenoiseSchedule::linear();
  const FunctionModel zero(1, 2, [](const Vector&, const Vector& a, int) { return Vector::Zero(a.size()); });
  Rng rng(63);
  double sq = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) sq += sample(Vector::Zero(1), zero, s, rng).squaredNorm();
  CHECK(sq / (2 * n) == doctest::Approx(untrained_sample_variance(s)).epsilon(0.05));
}

TEST_CASE("step embedding") {
  const Vector e = step_embedding(3, 16);
  REQUIRE(e.size() == 16);
  for (int i = 0; i < 8; ++i) {
    const double freq = std::pow(100.0, -static_cast<double>(i) / 7.0);
    CHECK(e[2 * i] == doctest::Approx(std::sin(3 * freq)));
    CHECK(e[2 * i + 1] == doctest::Approx(std::cos(3 * freq)));
  }
}

TEST_CASE("mlp gradient matches central differences") {
  Mlp mlp(3, 2, 8, 4, 64);
  Rng rng(64);
  std::normal_distribution<double> n(0.0, 0.3);
  Vector theta = mlp.parameters();
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += n(rng);
  mlp.set_parameters(theta);
  std::vector<Example> data;
  for (int i = 0; i < 5; ++i) data.push_back({Vector::Random(3), Vector::Random(2)});
  std::vector<const Example*> ptrs;
  for (const auto& d : data) ptrs.push_back(&d);
  const NoisedBatch batch = draw_noised_batch(ptrs, DenoiseSchedule::linear(), rng);
  Vector grad;
  const double loss = mlp.loss_and_gradient(batch, &grad);
  CHECK(loss == doctest::Approx(noised_batch_loss(batch, mlp)).epsilon(1e-12));
  const double h = 1e-6;
  double err = 0.0, scale = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    Mlp a = mlp, b = mlp;
    a.set_parameters(tp);
    b.set_parameters(tm);
    const double fd = (noised_batch_loss(batch, a) - noised_batch_loss(batch, b)) / (2 * h);
    err += (fd - grad[i]) * (fd - grad[i]);
    scale += fd * fd;
  }
  CHECK(std::sqrt(err / scale) < 1e-6);
}

TEST_CASE("untrained mlp predicts zero noise") {
  const Mlp mlp(2, 2, 16, 8, 1);
  CHECK(mlp.predict(Vector::Ones(2), Vector::Ones(2), 5).norm() == 0.0);
}

TEST_CASE("mlp checkpoint round trip") {
  Mlp mlp(2, 3, 8, 4, 65);
  Vector theta = mlp.parameters() + Vector::Constant(mlp.parameter_count(), 0.125);
  mlp.set_parameters(theta);
  std::stringstream ss;
  mlp.save(ss);
  const Mlp back = Mlp::load(ss);
  CHECK(back.parameters() == mlp.parameters());
  CHECK(back.hidden() == 8);
  CHECK(back.embed_dim() == 4);
  std::stringstream broken("{\"activation\":\"relu\"}");
  CHECK_THROWS_AS(Mlp::load(broken), SchemaViolation);
}

TEST_CASE("training is deterministic and reduces the loss") {
  std::vector<Example> data;
  for (int i = 0; i < 256; ++i) data.push_back({Vector::Zero(1), vec2(i % 2 ? 1.0 : -1.0, 0.0)});
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 64;
  cfg.seed = 66;
  cfg.hidden = 32;
  const DenoiseSchedule s = DenoiseSchedule::linear();
  const TrainResult a = train_toy_policy(data, s, cfg);
  const TrainResult b = train_toy_policy(data, s, cfg);
  CHECK(a.model.parameters() == b.model.parameters());
  REQUIRE(a.loss_curve.size() == 40);
  CHECK(a.loss_curve.back() < a.loss_curve.front());
  CHECK_THROWS_AS(train_toy_policy({}, s, cfg), EmptyBatch);
  cfg.learning_rate = 1e300;
  CHECK_THROWS_AS(train_toy_policy(data, s, cfg), NonFiniteLoss);
}

TEST_CASE("bimodality report") {
  std::vector<Vector> samples;
  for (int i = 0; i < 100; ++i) samples.push_back(vec2(i < 40 ? -1.0 : 1.0, 0.01 * (i % 5)));
  const BimodalityReport r = bimodality_report(samples, vec2(-1, 0), vec2(1, 0));
  CHECK(r.passed);
  CHECK(r.count[0] == 40);
  CHECK(r.count[1] == 60);
  std::vector<Vector> collapsed(100, vec2(1.0, 0.0));
  CHECK_FALSE(bimodality_report(collapsed, vec2(-1, 0), vec2(1, 0)).passed);
}

TEST_CASE("dataset JSONL round trip and errors") {
  const std::vector<Example> data = {{vec2(0.5, 1.0), vec2(-1.0, 0.25)}, {vec2(0.0, 0.0), vec2(1.0, 0.0)}};
  std::stringstream ss;
  write_dataset(ss, data);
  const auto back = read_dataset(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].obs == data[0].obs);
  CHECK(back[1].action == data[1].action);
  std::stringstream bad("{\"obs\":[0],\"action\":[1]}\n{\"obs\":[0,1],\"action\":[1]}\n");
  try {
    read_dataset(bad);
    FAIL("expected SchemaViolation");
  } catch (const SchemaViolation& e) {
    CHECK(e.line() == 2);
  }
}
