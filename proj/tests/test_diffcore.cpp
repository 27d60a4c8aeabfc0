#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mplexnet/diffcore/checkpoint.hpp"
#include "mplexnet/diffcore/nn.hpp"
#include "mplexnet/diffcore/ops.hpp"
#include "mplexnet/diffcore/optim.hpp"
#include "mplexnet/error.hpp"

using namespace mplexnet::diffcore;
using mplexnet::DimensionError;

namespace {
std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
}  // namespace

TEST_CASE("affine examples") {
  auto x = Tensor::from({1, 2}, {1, 2});
  CHECK(vals(affine(x, Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::from({2}, {0, 0}))) == std::vector<double>{1, 2});
  CHECK(vals(affine(x, Tensor::from({2, 2}, {0, 0, 0, 0}), Tensor::from({2}, {3, 4}))) == std::vector<double>{3, 4});
  CHECK(vals(affine(Tensor::from({1, 2}, {1, 1}), Tensor::from({2, 2}, {2, 3, 4, 5}), Tensor::from({2}, {1, 1}))) ==
        std::vector<double>{7, 9});
}

TEST_CASE("affine shape mismatch names both shapes") {
  auto x = Tensor::from({1, 3}, {1, 2, 3});
  auto w = Tensor::zeros({2, 2});
  try {
    affine(x, w, Tensor::zeros({2}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[1x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("leaky_relu examples") {
  auto y = leaky_relu(Tensor::from({3}, {5.0, -1.0, 0.0}));
  CHECK(y.values()[0] == 5.0);
  CHECK(y.values()[1] == doctest::Approx(-0.01));
  CHECK(y.values()[2] == 0.0);
}

TEST_CASE("mse_loss examples") {
  auto a = Tensor::from({2}, {1, 3});
  CHECK(mse_loss(a, a).item() == 0.0);
  CHECK(mse_loss(Tensor::from({2}, {1, 1}), Tensor::from({2}, {0, 0})).item() == 1.0);
  CHECK(mse_loss(a, Tensor::from({2}, {0, 1})).item() == 2.5);
  CHECK_THROWS_AS(mse_loss(a, Tensor::from({3}, {0, 1, 2})), DimensionError);
}

TEST_CASE("softmax_cross_entropy examples") {
  std::vector<int> l0{0};
  CHECK(softmax_cross_entropy(Tensor::from({1, 2}, {0, 0}), l0).item() == doctest::Approx(std::log(2.0)));
  auto big = softmax_cross_entropy(Tensor::from({1, 2}, {1000, 0}), l0).item();
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(0.0));
  std::vector<int> l2{2};
  // -log(e^3 / (e^1 + e^2 + e^3)) = log(1 + e^-1 + e^-2)
  const double expected = std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
  CHECK(expected == doctest::Approx(0.407606).epsilon(1e-6));
  CHECK(softmax_cross_entropy(Tensor::from({1, 3}, {1, 2, 3}), l2).item() == doctest::Approx(expected).epsilon(1e-12));
  std::vector<int> bad{3};
  CHECK_THROWS(softmax_cross_entropy(Tensor::from({1, 3}, {1, 2, 3}), bad));
}

TEST_CASE("cross entropy is non-negative on random logits") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> lab(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    auto logits = gradcheck::random_tensor({3, 5}, rng, false, -30, 30);
    std::vector<int> labels{lab(rng), lab(rng), lab(rng)};
    CHECK(softmax_cross_entropy(logits, labels).item() >= 0.0);
  }
}

TEST_CASE("backward analytic examples") {
  auto w = Tensor::scalar(3.0, true);
  backward(mse_loss(w, Tensor::scalar(0.0)));  // w^2
  CHECK(w.grad()[0] == doctest::Approx(6.0));

  auto v = Tensor::scalar(-2.0, true);
  backward(leaky_relu(v));
  CHECK(v.grad()[0] == doctest::Approx(0.01));

  // Accumulation over multiple uses: f = w*w via scale_by -> df/dw = 2w.
  auto u = Tensor::scalar(1.5, true);
  backward(scale_by(u, u));
  CHECK(u.grad()[0] == doctest::Approx(3.0));

  CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), DimensionError);
}

TEST_CASE("gradient fidelity of every op against central differences") {
  std::mt19937_64 rng(5);
  auto x = gradcheck::random_tensor({4, 3}, rng);
  auto w = gradcheck::random_tensor({3, 5}, rng);
  auto b = gradcheck::random_tensor({5}, rng);
  auto wt = gradcheck::random_tensor({5, 3}, rng);
  auto bt = gradcheck::random_tensor({5}, rng);
  auto y = gradcheck::random_tensor({4, 2}, rng);
  auto s = gradcheck::random_tensor({1}, rng);
  auto r12 = gradcheck::random_weights(12, rng);
  auto r20 = gradcheck::random_weights(20, rng);
  auto r15 = gradcheck::random_weights(15, rng);
  auto r5 = gradcheck::random_weights(5, rng);
  auto r3 = gradcheck::random_weights(3, rng);

  auto sp = std::make_shared<mplexnet::kernels::CsrMatrix<double>>(mplexnet::kernels::CsrMatrix<double>::from_triplets(
      3, 4, {{0, 1, 2.0}, {0, 3, 1.0}, {1, 0, -1.5}, {2, 2, 3.0}, {2, 1, 1.0}}));
  auto r9 = gradcheck::random_weights(9, rng);
  // Blocks consume 2 + 2 + 2 rows of a [6 x 2] input and emit 3 + 2 + 3 rows.
  auto sp2 = std::make_shared<mplexnet::kernels::CsrMatrix<double>>(
      mplexnet::kernels::CsrMatrix<double>::from_triplets(2, 2, {{0, 0, 1.0}, {0, 1, -2.0}, {1, 1, 0.5}}));
  auto spb = std::make_shared<mplexnet::kernels::CsrMatrix<double>>(mplexnet::kernels::CsrMatrix<double>::from_triplets(
      3, 2, {{0, 1, 2.0}, {1, 0, -1.5}, {2, 0, 3.0}, {2, 1, 1.0}}));
  auto r16 = gradcheck::random_weights(16, rng);
  auto r3t = gradcheck::random_tensor({3}, rng);
  auto target = gradcheck::random_tensor({4, 3}, rng);
  std::vector<int> labels{0, 4, 2, 1};

  struct Case {
    const char* name;
    std::function<Tensor()> f;
    std::vector<Tensor> in;
  };
  std::vector<Case> cases{
      {"affine", [&] { return weighted_sum(affine(x, w, b), r20); }, {x, w, b}},
      {"affine_transposed", [&] { return weighted_sum(affine_transposed(x, wt, bt), r20); }, {x, wt, bt}},
      {"matmul", [&] { return weighted_sum(matmul(x, w), r20); }, {x, w}},
      {"leaky_relu", [&] { return weighted_sum(leaky_relu(x), r12); }, {x}},
      {"add", [&] { return weighted_sum(add(x, target), r12); }, {x, target}},
      {"add_bias", [&] { return weighted_sum(add_bias(x, r3t), r12); }, {x, r3t}},
      {"scale", [&] { return weighted_sum(scale(x, -1.7), r12); }, {x}},
      {"scale_by", [&] { return weighted_sum(scale_by(x, s), r12); }, {x, s}},
      {"concat_cols", [&] { return weighted_sum(concat_cols(x, y), gradcheck::random_weights(20, rng)); }, {x, y}},
      {"reshape", [&] { return weighted_sum(reshape(x, {12}), r12); }, {x}},
      {"stack_rows", [&] { return weighted_sum(stack_rows({b, bt, b}), r15); }, {b, bt}},
      {"mean_rows", [&] { return weighted_sum(mean_rows(x), r3); }, {x}},
      {"spmm", [&] { return weighted_sum(spmm(sp, reshape(x, {4, 3})), r9); }, {x}},
      {"block_spmm", [&] { return weighted_sum(block_spmm({spb, sp2, spb}, reshape(x, {6, 2})), r16); }, {x}},
      {"mse_loss", [&] { return mse_loss(x, target); }, {x, target}},
      {"softmax_cross_entropy", [&] { return softmax_cross_entropy(affine(x, w, b), labels); }, {x, w, b}},
  };
  (void)r5;
  for (auto& c : cases) {
    CAPTURE(c.name);
    // The concat case draws fresh weights per call; pin them first.
    if (std::string(c.name) == "concat_cols") {
      auto r = gradcheck::random_weights(20, rng);
      c.f = [&, r] { return weighted_sum(concat_cols(x, y), r); };
    }
    auto res = gradcheck::check(c.f, c.in);
    CHECK(res.checked > 0);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("two-layer MLP gradients match finite differences") {
  Rng rng(17);
  ParameterSet params;
  Mlp mlp({6, 8, 3}, rng, params, "mlp");
  std::mt19937_64 drng(18);
  auto x = gradcheck::random_tensor({5, 6}, drng, false);
  std::vector<int> labels{0, 1, 2, 1, 0};
  std::vector<Tensor> ps;
  for (auto& [n, t] : params) ps.push_back(t);
  // Perturb biases away from zero so the check is not degenerate.
  for (auto& t : ps) {
    std::uniform_real_distribution<double> d(-0.3, 0.3);
    for (auto& v : t.mutable_values()) v += d(drng);
  }
  auto res = gradcheck::check([&] { return softmax_cross_entropy(mlp(x), labels); }, ps);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("no-grad mode records nothing") {
  auto w = Tensor::scalar(2.0, true);
  Tensor y;
  {
    NoGradGuard ng;
    y = scale(w, 3.0);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("AdamW examples") {
  SUBCASE("one step with decay") {
    ParameterSet p;
    auto& t = p.add("theta", Tensor::scalar(1.0, true));
    t.mutable_grad()[0] = 1.0;
    AdamW opt({.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 0.0, .weight_decay = 1e-3});
    opt.step(p);
    CHECK(t.item() == doctest::Approx(0.998999).epsilon(1e-12));
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("zero gradient, no decay leaves theta unchanged") {
    ParameterSet p;
    auto& t = p.add("theta", Tensor::scalar(0.37, true));
    t.mutable_grad()[0] = 0.0;
    AdamW opt({.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0});
    opt.step(p);
    CHECK(t.item() == 0.37);
  }
  SUBCASE("pure decay term") {
    ParameterSet p;
    auto& t = p.add("theta", Tensor::scalar(1.0, true));
    t.mutable_grad()[0] = 0.0;
    AdamW opt({.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 1e-3});
    opt.step(p);
    CHECK(t.item() == doctest::Approx(0.999999).epsilon(1e-15));
  }
  SUBCASE("non-finite gradient names the parameter") {
    ParameterSet p;
    auto& t = p.add("readout.0.weight", Tensor::scalar(1.0, true));
    t.mutable_grad()[0] = std::nan("");
    AdamW opt;
    try {
      opt.step(p);
      FAIL("expected NumericalError");
    } catch (const mplexnet::NumericalError& e) {
      CHECK(std::string(e.what()).find("readout.0.weight") != std::string::npos);
    }
    CHECK(opt.step_count() == 0);
  }
}

TEST_CASE("lr schedule with default settings") {
  LrSchedule s{0.001, 0.1, 20};
  for (int e = 0; e < 20; ++e) CHECK(s.lr(e) == 0.001);
  for (int e = 20; e < 40; ++e) CHECK(s.lr(e) == doctest::Approx(0.0001).epsilon(1e-15));
}

TEST_CASE("training trajectories are deterministic") {
  auto run = [] {
    Rng rng(99);
    ParameterSet params;
    Mlp mlp({4, 6, 3}, rng, params, "m");
    AdamW opt;
    auto x = Tensor::from({3, 4}, {1, 2, 3, 4, -1, 0, 1, 0, 0.5, 0.5, -2, 1});
    std::vector<int> labels{0, 1, 2};
    for (int i = 0; i < 25; ++i) {
      params.zero_grad();
      backward(softmax_cross_entropy(mlp(x), labels));
      opt.step(params);
    }
    return params.snapshot();
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip preserves bits, shapes and optimizer state") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "mplexnet_ckpt_test";
  fs::remove_all(dir);
  Rng rng(3);
  ParameterSet params;
  Mlp mlp({3, 4, 2}, rng, params, "m");
  AdamW opt;
  auto x = Tensor::from({1, 3}, {0.1, -0.2, 0.3});
  std::vector<int> lab{1};
  backward(softmax_cross_entropy(mlp(x), lab));
  opt.step(params);

  Checkpoint ck;
  append_parameters(ck, params);
  append_optimizer(ck, opt, params);
  ck.meta["note"] = "hello";
  save_checkpoint(dir / "model", ck);

  auto loaded = load_checkpoint(dir / "model");
  CHECK(loaded.meta["note"] == "hello");
  Rng rng2(4);
  ParameterSet other;
  Mlp mlp2({3, 4, 2}, rng2, other, "m");
  restore_parameters(loaded, other);
  CHECK(other.snapshot() == params.snapshot());
  AdamW opt2;
  restore_optimizer(loaded, opt2, other);
  CHECK(opt2.step_count() == 1);
  CHECK(opt2.first_moments() == opt.first_moments());
  CHECK(opt2.second_moments() == opt.second_moments());

  auto manifest = std::ifstream(dir / "model.json");
  auto j = nlohmann::json::parse(manifest);
  CHECK(j["format"] == "mplexnet-ckpt-v1");
  CHECK(j["arrays"][1]["offset"] == 3 * 4 * 8);
  fs::remove_all(dir);
}

TEST_CASE("block_spmm equals a product with the explicit block diagonal") {
  using mplexnet::kernels::CsrMatrix;
  using mplexnet::kernels::Triplet;
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::shared_ptr<const CsrMatrix<double>>> blocks;
    std::vector<Triplet<double>> diag;
    std::size_t r0 = 0, c0 = 0;
    const std::size_t nb = 1 + rng() % 4;
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t rows = 1 + rng() % 4, cols = 1 + rng() % 4;
      std::vector<Triplet<double>> t;
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          if (rng() % 2) {
            const double v = static_cast<double>(rng() % 7) - 3.0;
            t.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), v});
            diag.push_back({static_cast<std::uint32_t>(r0 + i), static_cast<std::uint32_t>(c0 + j), v});
          }
      blocks.push_back(std::make_shared<CsrMatrix<double>>(CsrMatrix<double>::from_triplets(rows, cols, t)));
      r0 += rows;
      c0 += cols;
    }
    auto full = std::make_shared<CsrMatrix<double>>(CsrMatrix<double>::from_triplets(r0, c0, diag));
    auto h = gradcheck::random_tensor({c0, 3}, rng, false);
    auto a = block_spmm(blocks, h);
    auto b = spmm(full, h);
    CHECK(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-14));
  }
}
