#include <cmath>
#include <filesystem>
#include <numbers>
#include <fstream>
#include <set>

#include "adaplan/checkpoint.hpp"
#include "adaplan/errors.hpp"
#include "adaplan/mlp.hpp"
#include "adaplan/optim.hpp"
#include "adaplan/prob.hpp"
#include "adaplan/rng.hpp"
#include "doctest.h"

using namespace adaplan;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// sum of squares against a fixed target; larger gradients than a mean keep
// the finite differences far above rounding noise
BatchLoss sum_squares(const Matrix& target) {
  return [target](const Matrix& out, Matrix& d) {
    Matrix diff = out - target;
    d = 2.0 * diff;
    return diff.squaredNorm();
  };
}

}  // namespace

TEST_CASE("rng streams are reproducible and splits ignore position") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  const Rng child_fresh = Rng(42).split("x");
  for (int i = 0; i < 10; ++i) c.next_u64();
  Rng child_late = c.split("x");
  Rng child_copy = child_fresh;
  CHECK(child_late.next_u64() == child_copy.next_u64());
  CHECK(Rng(42).split("x").next_u64() != Rng(42).split("y").next_u64());
  CHECK(Rng(42).split(std::uint64_t{1}).next_u64() != Rng(42).split(std::uint64_t{2}).next_u64());
}

TEST_CASE("rng uniform and normal moments") {
  Rng rng(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(rng.uniform_int(5));
  CHECK(seen == std::set<std::uint64_t>{0, 1, 2, 3, 4});
}

TEST_CASE("netspec validation and parameter count") {
  const NetSpec spec = NetSpec::mlp(3, {4, 5}, 2, Activation::kRelu);
  CHECK(spec.param_count() == (3 * 4 + 4) + (4 * 5 + 5) + (5 * 2 + 2));
  CHECK(NetParams(spec).size() == spec.param_count());
  NetSpec bad;
  bad.widths = {3};
  CHECK_THROWS(bad.validate());
  bad.widths = {3, 0, 2};
  bad.activations = {Activation::kRelu};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("forward: zero weights give zero output, identity layer copies input") {
  const NetSpec deep = NetSpec::mlp(4, {8, 8}, 3, Activation::kGelu);
  const auto out = forward(deep, NetParams(deep), std::vector<double>{1, -2, 3, 4});
  for (double v : out) CHECK(v == 0.0);

  const NetSpec lin = NetSpec::mlp(3, {}, 3, Activation::kRelu);
  NetParams p(lin);
  for (int i = 0; i < 3; ++i) p.weights(0)[i * 3 + i] = 1.0;
  const std::vector<double> v{0.5, -1.5, 2.0};
  CHECK(forward(lin, p, v) == v);
  CHECK_THROWS_AS(forward(lin, p, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("forward: output head none activates the last layer") {
  const NetSpec spec = NetSpec::mlp(2, {}, 2, Activation::kRelu, OutputHead::kNone);
  NetParams p(spec);
  p.weights(0)[0] = 1.0;
  p.weights(0)[3] = 1.0;
  const auto out = forward(spec, p, std::vector<double>{-1.0, 2.0});
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("forward_batch rows match single forward bit for bit") {
  Rng rng(42);
  const NetSpec spec = NetSpec::mlp(7, {33, 65}, 5, Activation::kGelu);
  const NetParams p = NetParams::glorot(spec, rng);
  const Matrix x = random_matrix(9, 7, rng);
  const Matrix y = forward_batch(spec, p, x);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto single = forward(spec, p, std::span<const double>(x.row(r).data(), 7));
    for (int c = 0; c < 5; ++c) CHECK(single[c] == y(r, c));
  }
  const Matrix part = forward_batch(spec, p, x.topRows(3));
  CHECK(part == y.topRows(3));
}

TEST_CASE("gradient check on small relu and gelu networks") {
  Rng rng(3);
  for (Activation act : {Activation::kRelu, Activation::kGelu}) {
    const NetSpec spec = NetSpec::mlp(6, {10, 10}, 4, act);
    const NetParams p = NetParams::glorot(spec, rng);
    const Matrix x = random_matrix(5, 6, rng);
    const Matrix t = random_matrix(5, 4, rng);
    GradCheckOptions opts;
    opts.max_coords = 100000;
    CHECK(grad_check(spec, p, x, sum_squares(t), opts) < 1e-4);
  }
}

TEST_CASE("train_step: zero gradient leaves params, counter advances") {
  const NetSpec spec = NetSpec::mlp(2, {3}, 1, Activation::kRelu);
  Rng rng(1);
  NetParams p = NetParams::glorot(spec, rng);
  const NetParams before = p;
  OptimState opt(p.size());
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  BatchLoss zero = [](const Matrix& out, Matrix& d) {
    d = Matrix::Zero(out.rows(), out.cols());
    return 0.0;
  };
  train_step(spec, p, opt, x, zero);
  CHECK(p == before);
  CHECK(opt.step == 1);
  CHECK_THROWS(train_step(spec, p, opt, Matrix(0, 2), zero));
}

TEST_CASE("adam: quadratic (w - 3)^2 converges") {
  std::vector<double> w{2.0};
  OptimState opt(1, AdamConfig{1e-2, 0.9, 0.999, 1e-8});
  // bias-corrected moments written out step by step
  double ref = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 500; ++t) {
    const std::vector<double> g{2.0 * (w[0] - 3.0)};
    adam_update(w, g, opt);
    const double gr = 2.0 * (ref - 3.0);
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    ref -= 1e-2 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(w[0] == doctest::Approx(ref).epsilon(1e-12));
  }
  CHECK(std::abs(w[0] - 3.0) < 1e-3);
  CHECK(opt.step == 500);
}

TEST_CASE("train_step: identical seeds give identical trajectories") {
  auto run = [] {
    Rng rng(42);
    const NetSpec spec = NetSpec::mlp(3, {8}, 2, Activation::kGelu);
    NetParams p = NetParams::glorot(spec, rng);
    OptimState opt(p.size());
    for (int i = 0; i < 20; ++i) {
      const Matrix x = random_matrix(4, 3, rng);
      const Matrix t = random_matrix(4, 2, rng);
      BatchLoss loss = [&](const Matrix& out, Matrix& d) { return mse_loss(out, t, d); };
      train_step(spec, p, opt, x, loss);
    }
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("train_step: non-finite loss or gradient names the problem") {
  const NetSpec spec = NetSpec::mlp(1, {2}, 1, Activation::kRelu);
  NetParams p(spec);
  OptimState opt(p.size());
  Matrix x(1, 1);
  x(0, 0) = 1.0;
  BatchLoss nan_loss = [](const Matrix& out, Matrix& d) {
    d = Matrix::Zero(out.rows(), out.cols());
    return std::nan("");
  };
  CHECK_THROWS_AS(train_step(spec, p, opt, x, nan_loss), NumericError);
  BatchLoss inf_grad = [](const Matrix& out, Matrix& d) {
    d = Matrix::Constant(out.rows(), out.cols(), INFINITY);
    return 1.0;
  };
  try {
    train_step(spec, p, opt, x, inf_grad);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
  CHECK(opt.step == 0);
}

TEST_CASE("softmax, cross entropy and argmax") {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, 1000.0, 1000.0, 1000.0});
  double sum = 0;
  for (double v : p) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(std::abs(cross_entropy(p, 2) - std::log(5.0)) < 1e-12);
  const auto q = softmax(std::vector<double>{1.0, 2.0, 3.0});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(q[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK_THROWS(softmax(std::vector<double>{}));
  CHECK_THROWS(softmax(std::vector<double>{1.0, NAN}));
  CHECK_THROWS_AS(cross_entropy(q, 3), std::out_of_range);
  CHECK(cross_entropy(std::vector<double>{1.0, 0.0}, 1) == doctest::Approx(-std::log(1e-12)));
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax(std::vector<double>{0.2, 0.2, 0.2, 0.2, 0.2}) == 0);
}

TEST_CASE("checkpoint round trip is exact and rejects corruption") {
  Rng rng(42);
  const NetSpec spec = NetSpec::mlp(5, {7}, 3, Activation::kGelu);
  const NetParams p = NetParams::glorot(spec, rng);
  const auto dir = std::filesystem::temp_directory_path() / "adaplan_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.ckpt";
  save_checkpoint(path, spec, p, {{"seed", 42}});
  const Checkpoint c = load_checkpoint(path);
  CHECK(c.spec == spec);
  CHECK(c.params == p);
  CHECK(c.meta["seed"] == 42);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "nonsense";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove_all(dir);
}
