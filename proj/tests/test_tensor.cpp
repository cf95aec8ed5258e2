#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mrlf/rng.hpp"
#include "mrlf/tensor.hpp"
#include "oracles.hpp"

using namespace mrlf;

namespace {

Tensor leafv(Shape shape, std::vector<double> v) { return Tensor::param(std::move(shape), std::move(v)); }

}  // namespace

TEST_CASE("conv1d matches hand-derived windows") {
  // frozen from the sliding-window oracle
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tensor k = Tensor::from({1, 1, 3}, {1, 0, -1});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv1d(x, k, b);
  REQUIRE(y.shape() == Shape{1, 3});
  CHECK(y.values()[0] == doctest::Approx(-2).epsilon(1e-12));
  CHECK(y.values()[1] == doctest::Approx(-2).epsilon(1e-12));
  CHECK(y.values()[2] == doctest::Approx(2).epsilon(1e-12));

  Tensor x2 = Tensor::from({1, 3}, {5, 7, 9});
  Tensor ident = Tensor::from({1, 1, 3}, {0, 1, 0});
  Tensor y2 = conv1d(x2, ident, b);
  CHECK(y2.values() == std::vector<double>{5, 7, 9});

  Tensor zerok = Tensor::zeros({1, 1, 3});
  Tensor bias = Tensor::from({1}, {4.5});
  Tensor y3 = conv1d(x2, zerok, bias);
  CHECK(y3.values() == std::vector<double>{4.5, 4.5, 4.5});
}

TEST_CASE("conv1d rejects even kernels and bad shapes") {
  Tensor x = Tensor::from({1, 4}, {1, 2, 3, 4});
  Tensor k4 = Tensor::zeros({1, 1, 4});
  Tensor b = Tensor::zeros({1});
  CHECK_THROWS_AS(conv1d(x, k4, b), std::invalid_argument);
  Tensor kbad = Tensor::zeros({1, 2, 3});
  CHECK_THROWS_AS(conv1d(x, kbad, b), std::invalid_argument);
  CHECK_THROWS_AS(conv1d(x, Tensor::zeros({1, 1, 3}), Tensor::zeros({2})),
                  std::invalid_argument);
}

TEST_CASE("conv1d equals the brute-force oracle for L<=16, K in {1,3,5,7}") {
  Rng rng(11);
  for (std::size_t len = 1; len <= 16; ++len) {
    for (std::size_t k : {1u, 3u, 5u, 7u}) {
      std::size_t c_in = 1 + rng.uniform_index(3);
      std::size_t c_out = 1 + rng.uniform_index(3);
      std::vector<double> xv(c_in * len), kv(c_out * c_in * k), bv(c_out);
      for (auto& v : xv) v = rng.uniform(-2, 2);
      for (auto& v : kv) v = rng.uniform(-2, 2);
      for (auto& v : bv) v = rng.uniform(-2, 2);
      Tensor y = conv1d(Tensor::from({c_in, len}, xv), Tensor::from({c_out, c_in, k}, kv),
                        Tensor::from({c_out}, bv));
      auto want = oracle::conv1d(xv, c_in, len, kv, c_out, k, bv,
                                 static_cast<std::ptrdiff_t>((k - 1) / 2), len);
      REQUIRE(y.values().size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d_pad asymmetric padding matches the oracle") {
  Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t len = 4 + rng.uniform_index(8);
    std::size_t k = 2 + rng.uniform_index(3);  // includes even sizes
    std::size_t pl = (k - 1) / 2, pr = k / 2;
    std::vector<double> xv(2 * len), kv(3 * 2 * k), bv(3);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    for (auto& v : kv) v = rng.uniform(-1, 1);
    for (auto& v : bv) v = rng.uniform(-1, 1);
    Tensor y = conv1d_pad(Tensor::from({2, len}, xv), Tensor::from({3, 2, k}, kv),
                          Tensor::from({3}, bv), pl, pr);
    auto want = oracle::conv1d(xv, 2, len, kv, 3, k, bv, static_cast<std::ptrdiff_t>(pl),
                               len + pl + pr - k + 1);
    REQUIRE(y.values().size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("maxpool1d enumerated windows") {
  Tensor x = Tensor::from({1, 5}, {3, 1, 4, 1, 5});
  Tensor y = maxpool1d(x, 3, 2);
  CHECK(y.values() == std::vector<double>{4, 5});

  CHECK(maxpool1d(Tensor::from({1, 4}, {2, 2, 2, 2}), 2, 2).values() ==
        std::vector<double>{2, 2});
  CHECK(maxpool1d(Tensor::from({1, 2}, {1, 2}), 2, 1).values() == std::vector<double>{2});
  CHECK_THROWS_AS(maxpool1d(Tensor::from({1, 2}, {1, 2}), 3, 1), std::invalid_argument);
}

TEST_CASE("maxpool1d drops trailing partial windows and matches the oracle") {
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t len = 3 + rng.uniform_index(12);
    std::size_t window = 1 + rng.uniform_index(len);
    std::size_t stride = 1 + rng.uniform_index(3);
    std::vector<double> xv = oracle::well_separated(rng, 2 * len, -3, 3, 0.01, false);
    xv.resize(2 * len);
    Tensor y = maxpool1d(Tensor::from({2, len}, xv), window, stride);
    auto want = oracle::maxpool1d(xv, 2, len, window, stride);
    CHECK(y.values() == want);
  }
}

TEST_CASE("linear examples") {
  CHECK(linear(Tensor::from({2}, {1, 2}), Tensor::from({2, 2}, {1, 0, 0, 1}),
               Tensor::zeros({2}))
            .values() == std::vector<double>{1, 2});
  CHECK(linear(Tensor::from({2}, {1, 1}), Tensor::from({2, 1}, {2, 3}),
               Tensor::from({1}, {1}))
            .scalar_value() == doctest::Approx(6).epsilon(1e-12));
  CHECK(linear(Tensor::zeros({3}), Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}),
               Tensor::from({2}, {7, 8}))
            .values() == std::vector<double>{7, 8});
  CHECK_THROWS_AS(linear(Tensor::zeros({3}), Tensor::zeros({2, 2}), Tensor::zeros({2})),
                  std::invalid_argument);
}

TEST_CASE("softmax examples and stability") {
  CHECK(softmax(Tensor::from({2}, {0, 0})).values() == std::vector<double>{0.5, 0.5});

  Tensor p = softmax(Tensor::from({3}, {1, 2, 3}));
  CHECK(p.values()[0] == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(p.values()[1] == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(p.values()[2] == doctest::Approx(0.6652).epsilon(1e-3));
  auto want = oracle::softmax_row({1, 2, 3});
  for (int i = 0; i < 3; ++i) CHECK(p.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));

  Tensor q = softmax(Tensor::from({2}, {1000, 0}));
  CHECK(q.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.values()[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to 1 across 1000 extreme rows") {
  Rng rng(17);
  for (int rep = 0; rep < 1000; ++rep) {
    std::size_t n = 2 + rng.uniform_index(15);
    std::vector<double> row(n);
    for (auto& v : row) v = rng.uniform(-1e3, 1e3);
    Tensor p = softmax(Tensor::from({n}, row));
    double s = 0.0;
    for (double v : p.values()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("layer_norm examples") {
  Tensor y = layer_norm(Tensor::from({3}, {1, 2, 3}), Tensor::full({3}, 1.0),
                        Tensor::zeros({3}));
  CHECK(y.values()[0] == doctest::Approx(-1.2247).epsilon(1e-3));
  CHECK(y.values()[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(y.values()[2] == doctest::Approx(1.2247).epsilon(1e-3));
  auto want = oracle::layer_norm({1, 2, 3}, {1, 1, 1}, {0, 0, 0});
  for (int i = 0; i < 3; ++i) CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));

  Tensor c = layer_norm(Tensor::full({3}, 4.2), Tensor::full({3}, 1.0), Tensor::zeros({3}));
  for (double v : c.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

  Tensor s = layer_norm(Tensor::from({3}, {5, -1, 2}), Tensor::zeros({3}),
                        Tensor::full({3}, 0.25));
  for (double v : s.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("primitive suite: relu, dropout, embedding, concat") {
  CHECK(relu(Tensor::from({3}, {-1, 0, 2})).values() == std::vector<double>{0, 0, 2});

  Rng rng(5);
  Tensor x = Tensor::from({4}, {1, 2, 3, 4});
  CHECK(dropout(x, 0.5, false, rng).values() == x.values());
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);

  // training mode: survivors are scaled by 1/(1-rate)
  Rng rng2(99);
  Tensor d = dropout(Tensor::full({1000}, 1.0), 0.5, true, rng2);
  std::size_t kept = 0;
  for (double v : d.values()) {
    CHECK((v == 0.0 || v == doctest::Approx(2.0).epsilon(1e-12)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 380);
  CHECK(kept < 620);

  Tensor table = Tensor::from({3, 2}, {0, 1, 10, 11, 20, 21});
  Tensor rows = embedding_lookup({2}, table);
  CHECK(rows.values() == std::vector<double>{20, 21});
  CHECK_THROWS_AS(embedding_lookup({3}, table), std::invalid_argument);

  Tensor cat = concat({Tensor::from({2}, {1, 2}), Tensor::from({1}, {3})}, 0);
  CHECK(cat.values() == std::vector<double>{1, 2, 3});
  Tensor cat2 = concat({Tensor::from({2, 1}, {1, 3}), Tensor::from({2, 2}, {4, 5, 6, 7})}, 1);
  CHECK(cat2.shape() == Shape{2, 3});
  CHECK(cat2.values() == std::vector<double>{1, 4, 5, 3, 6, 7});
  CHECK_THROWS_AS(concat({Tensor::zeros({2, 2}), Tensor::zeros({3, 3})}, 0),
                  std::invalid_argument);
}

TEST_CASE("backward basics") {
  SUBCASE("sum gradient is ones") {
    Tensor x = leafv({3}, {1, 2, 3});
    Tape tape;
    {
      Tape::Scope scope(tape);
      Tensor loss = sum(x);
      tape.backward(loss);
    }
    CHECK(x.grad() == std::vector<double>{1, 1, 1});
  }
  SUBCASE("sum of squares gradient is 2x") {
    Tensor x = leafv({2}, {1, 2});
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(mul(x, x)));
    }
    CHECK(x.grad() == std::vector<double>{2, 4});
  }
  SUBCASE("relu subgradient is 0 on the negative side") {
    Tensor x = leafv({2}, {-1, 1});
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(relu(x)));
    }
    CHECK(x.grad() == std::vector<double>{0, 1});
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = leafv({2}, {1, 2});
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = relu(x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
  SUBCASE("untouched leaves read zero grads") {
    Tensor x = leafv({2}, {1, 2});
    Tensor unused = leafv({2}, {5, 5});
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(x));
    }
    CHECK(unused.grad() == std::vector<double>{0, 0});
  }
}

TEST_CASE("maxpool backward conserves gradient mass") {
  Rng rng(23);
  for (int rep = 0; rep < 25; ++rep) {
    std::size_t len = 4 + rng.uniform_index(10);
    std::size_t window = 1 + rng.uniform_index(3);
    if (window > len) window = len;
    std::size_t stride = 1 + rng.uniform_index(3);
    auto xv = oracle::well_separated(rng, len, -2, 2, 0.01, false);
    Tensor x = leafv({1, len}, xv);
    Tape tape;
    double out_mass = 0.0;
    {
      Tape::Scope scope(tape);
      Tensor pooled = maxpool1d(x, window, stride);
      out_mass = static_cast<double>(pooled.size());
      tape.backward(sum(pooled));
    }
    double in_mass = 0.0;
    for (double g : x.grad()) in_mass += g;
    CHECK(in_mass == doctest::Approx(out_mass).epsilon(1e-12));
  }
}

TEST_CASE("non-finite results are hard errors") {
  Tensor big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(add(big, big), std::runtime_error);
  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), std::runtime_error);
  Tensor p = Tensor::from({2}, {1.0, 0.0});
  CHECK_THROWS_AS(nll_loss(p, 1), std::runtime_error);  // -log(0)
}

TEST_CASE("determinism: same seed gives bitwise-identical forward and backward") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> xv(24), wv(24 * 6);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    for (auto& v : wv) v = rng.uniform(-1, 1);
    Tensor x = leafv({4, 6}, xv);
    Tensor w = leafv({6, 4}, wv.size() > 24 ? std::vector<double>(wv.begin(), wv.begin() + 24) : wv);
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      Tensor h = relu(matmul(x, w));
      Rng drop_rng(seed + 1);
      h = dropout(h, 0.3, true, drop_rng);
      loss = mean_all(softmax(h));
      tape.backward(loss);
    }
    std::pair<std::vector<double>, double> out{x.grad(), loss.scalar_value()};
    return out;
  };
  auto a = run(7), b = run(7);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("cross entropy: fused logits path agrees with -log softmax route") {
  Rng rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t m = 2 + rng.uniform_index(8);
    std::vector<double> v(m);
    for (auto& x : v) x = rng.uniform(-5, 5);
    std::size_t label = rng.uniform_index(m);
    Tensor logits = Tensor::from({m}, v);
    double fused = cross_entropy_logits(logits, label).scalar_value();
    double chained = nll_loss(softmax(logits), label).scalar_value();
    CHECK(fused == doctest::Approx(chained).epsilon(1e-10));
  }
  CHECK_THROWS_AS(cross_entropy_logits(Tensor::from({2}, {0, 0}), 2), std::invalid_argument);
}

TEST_CASE("finite-difference gradients for every op") {
  Rng rng(41);
  double worst = 0.0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  for (int rep = 0; rep < 4; ++rep) {
    // conv1d + maxpool + relu chain
    {
      std::size_t len = 5 + rng.uniform_index(5);
      std::size_t c_in = 1 + rng.uniform_index(2), c_out = 1 + rng.uniform_index(2);
      std::size_t k = 1 + 2 * rng.uniform_index(3);
      oracle::GradCheck gc;
      Tensor x = leafv({c_in, len}, oracle::well_separated(rng, c_in * len, -2, 2));
      Tensor w = leafv({c_out, c_in, k}, oracle::well_separated(rng, c_out * c_in * k, -2, 2));
      Tensor b = leafv({c_out}, oracle::well_separated(rng, c_out, -1, 1));
      gc.add(x);
      gc.add(w);
      gc.add(b);
      track(gc.max_rel_err([&]() {
        return sum(relu(maxpool1d(conv1d(x, w, b), 2, 2)));
      }));
    }
    // conv2d + GAP
    {
      oracle::GradCheck gc;
      Tensor x = leafv({2, 4, 4}, oracle::well_separated(rng, 32, -2, 2));
      Tensor w = leafv({3, 2, 3, 3}, oracle::well_separated(rng, 54, -2, 2));
      Tensor b = leafv({3}, oracle::well_separated(rng, 3, -1, 1));
      gc.add(x);
      gc.add(w);
      gc.add(b);
      track(gc.max_rel_err([&]() { return sum(global_avg_pool2d(conv2d(x, w, b))); }));
    }
    // linear / matmul / transpose / slice / concat / layer_norm / softmax
    {
      oracle::GradCheck gc;
      Tensor x = leafv({3, 4}, oracle::well_separated(rng, 12, -2, 2));
      Tensor w = leafv({4, 6}, oracle::well_separated(rng, 24, -1, 1));
      Tensor b = leafv({6}, oracle::well_separated(rng, 6, -1, 1));
      Tensor g = leafv({3}, oracle::well_separated(rng, 3, 0.5, 2));
      Tensor s = leafv({3}, oracle::well_separated(rng, 3, -1, 1));
      gc.add(x);
      gc.add(w);
      gc.add(b);
      gc.add(g);
      gc.add(s);
      track(gc.max_rel_err([&]() {
        Tensor y = linear(x, w, b);               // [3, 6]
        Tensor left = slice_cols(y, 0, 3);        // [3, 3]
        Tensor right = slice_cols(y, 3, 3);       // [3, 3]
        Tensor z = matmul(left, transpose(right));
        Tensor n = layer_norm(z, g, s);
        Tensor sm = softmax(concat({n, z}, 1));
        return mean_all(sm);
      }));
    }
    // max_over_axis both axes, mean_of, scale, sub
    {
      oracle::GradCheck gc;
      Tensor a = leafv({3, 5}, oracle::well_separated(rng, 15, -2, 2));
      Tensor b = leafv({3, 5}, oracle::well_separated(rng, 15, -2, 2));
      gc.add(a);
      gc.add(b);
      track(gc.max_rel_err([&]() {
        Tensor m0 = max_over_axis(a, 0);
        Tensor m1 = max_over_axis(b, 1);
        Tensor avg = mean_of({scale(a, 1.5), sub(b, a)});
        return add(add(sum(m0), sum(m1)), sum(avg));
      }));
    }
    // embedding + dropout (fixed mask via seeded rng) + cross entropy
    {
      oracle::GradCheck gc;
      Tensor table = leafv({5, 4}, oracle::well_separated(rng, 20, -2, 2));
      Tensor w = leafv({4, 3}, oracle::well_separated(rng, 12, -1, 1));
      gc.add(table);
      gc.add(w);
      std::vector<int> ids = {1, 4, 2, 4};
      track(gc.max_rel_err([&]() {
        Tensor e = embedding_lookup(ids, table);
        Rng drop_rng(1234);
        Tensor d = dropout(e, 0.4, true, drop_rng);
        Tensor logits = max_over_axis(linear(d, w), 0);
        return cross_entropy_logits(logits, 1);
      }));
    }
    // nll on explicit probabilities
    {
      oracle::GradCheck gc;
      Tensor x = leafv({4}, oracle::well_separated(rng, 4, -2, 2));
      gc.add(x);
      track(gc.max_rel_err([&]() { return nll_loss(softmax(x), 2); }));
    }
  }
  CHECK(worst < 1e-4);
}
