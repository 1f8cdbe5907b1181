#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "oracles.hpp"
#include "vmp/error.hpp"
#include "vmp/nn/checkpoint.hpp"
#include "vmp/nn/layers.hpp"
#include "vmp/nn/params.hpp"
#include "vmp/nn/tape.hpp"

using vmp::nn::ParamStore;
using vmp::nn::Tape;
using vmp::nn::Tensor;
using vmp::nn::Var;

TEST_CASE("softmax rows: equal values, normalization, shift invariance") {
  Tape tape;
  Var x = tape.constant(Tensor::row({2.0, 2.0, 2.0, 2.0}));
  const Tensor& y = tape.value(tape.softmax_rows(x));
  for (double v : y.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor base = testutil::random_tensor(3, 6, rng, -2.0, 2.0);
    Tensor shifted = base;
    const double c = vmp::uniform_real(rng, -5.0, 5.0);
    for (std::size_t r = 0; r < shifted.rows(); ++r)
      for (std::size_t col = 0; col < shifted.cols(); ++col) shifted.at(r, col) += c;
    Tape t2;
    const Tensor& a = t2.value(t2.softmax_rows(t2.constant(base)));
    const Tensor& b = t2.value(t2.softmax_rows(t2.constant(shifted)));
    for (std::size_t r = 0; r < a.rows(); ++r) {
      double sum = 0.0;
      for (std::size_t col = 0; col < a.cols(); ++col) {
        sum += a.at(r, col);
        CHECK(a.at(r, col) == doctest::Approx(b.at(r, col)).epsilon(1e-12));
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("max_over_set: elementwise max and permutation invariance") {
  Tape tape;
  Var x = tape.constant(Tensor::matrix(2, 2, {3.0, 0.0, 0.0, 4.0}));
  const Tensor& y = tape.value(tape.max_over_set(x));
  CHECK(y.at(0, 0) == 3.0);
  CHECK(y.at(0, 1) == 4.0);

  std::mt19937_64 rng(7);
  Tensor rows = testutil::random_tensor(6, 4, rng);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor permuted = Tensor::zeros({6, 4});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) permuted.at(r, c) = rows.at(perm[r], c);
  Tape t2;
  const Tensor& a = t2.value(t2.max_over_set(t2.constant(rows)));
  const Tensor& b = t2.value(t2.max_over_set(t2.constant(permuted)));
  for (std::size_t c = 0; c < 4; ++c) CHECK(a.at(0, c) == b.at(0, c));
}

TEST_CASE("matmul identity") {
  std::mt19937_64 rng(3);
  Tensor a = testutil::random_tensor(4, 4, rng);
  Tensor eye = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  Tape tape;
  const Tensor& out = tape.value(tape.matmul(tape.constant(eye), tape.constant(a)));
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(out.values[i] == a.values[i]);
}

TEST_CASE("backward: outer-product structure of d(sum(Wx))/dW") {
  std::mt19937_64 rng(5);
  ParamStore store;
  store.create("w", 3, 2) = testutil::random_tensor(3, 2, rng);
  const Tensor x = testutil::random_tensor(2, 4, rng);
  const double err = testutil::max_grad_error(store, [&](Tape& tape) {
    return tape.sum_all(tape.matmul(tape.param(store, "w"), tape.constant(x)));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("backward: constant loss leaves all gradients zero") {
  ParamStore store;
  store.create("w", 2, 2).values = {1.0, 2.0, 3.0, 4.0};
  store.zero_grads();
  Tape tape;
  tape.param(store, "w");  // on the tape but unreachable from the loss
  Var loss = tape.constant(Tensor::scalar(42.0));
  tape.backward(loss);
  for (double g : store.grad("w").values) CHECK(g == 0.0);
}

TEST_CASE("backward: grad of ||W||^2 is 2W") {
  std::mt19937_64 rng(9);
  ParamStore store;
  Tensor w = testutil::random_tensor(3, 3, rng);
  store.create("w", 3, 3) = w;
  store.zero_grads();
  Tape tape;
  Var wv = tape.param(store, "w");
  tape.backward(tape.sum_all(tape.mul(wv, wv)));
  for (std::size_t i = 0; i < w.values.size(); ++i)
    CHECK(store.grad("w").values[i] == doctest::Approx(2.0 * w.values[i]).epsilon(1e-12));
}

TEST_CASE("gradcheck: every op against central finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    ParamStore store;
    store.create("a", 3, 4) = testutil::random_tensor_away_from_zero(3, 4, rng);
    store.create("b", 4, 3) = testutil::random_tensor(4, 3, rng);
    store.create("c", 3, 4) = testutil::random_tensor(3, 4, rng);
    store.create("row", 1, 4) = testutil::random_tensor(1, 4, rng);

    auto check = [&](const std::function<Var(Tape&)>& f) {
      CHECK(testutil::max_grad_error(store, f) < 1e-4);
    };
    check([&](Tape& t) { return t.sum_all(t.matmul(t.param(store, "a"), t.param(store, "b"))); });
    check([&](Tape& t) { return t.sum_all(t.mul(t.add(t.param(store, "a"), t.param(store, "c")),
                                                t.param(store, "c"))); });
    check([&](Tape& t) { return t.sum_all(t.add(t.param(store, "a"), t.param(store, "row"))); });
    check([&](Tape& t) { return t.sum_all(t.mul(t.param(store, "a"), t.param(store, "row"))); });
    check([&](Tape& t) {
      return t.sum_all(t.mul(t.concat_cols(t.param(store, "a"), t.param(store, "c")),
                             t.concat_cols(t.param(store, "c"), t.param(store, "a"))));
    });
    check([&](Tape& t) { return t.sum_all(t.mul(t.slice_cols(t.param(store, "a"), 1, 3),
                                                t.slice_cols(t.param(store, "c"), 0, 2))); });
    check([&](Tape& t) {
      Var g = t.gather_rows(t.param(store, "a"), {2, 0, 1, 2});
      return t.sum_all(t.mul(g, g));
    });
    check([&](Tape& t) {
      Var sm = t.segment_max(t.param(store, "a"), {0, 1, 0}, 2);
      return t.sum_all(t.mul(sm, sm));
    });
    check([&](Tape& t) { return t.sum_all(t.relu(t.param(store, "a"))); });
    check([&](Tape& t) { return t.sum_all(t.cosine(t.param(store, "a"))); });
    check([&](Tape& t) { return t.sum_all(t.scale(t.param(store, "a"), -1.7)); });
    check([&](Tape& t) {
      Var tr = t.transpose(t.param(store, "a"));
      return t.sum_all(t.mul(tr, t.param(store, "b")));
    });
    check([&](Tape& t) {
      Var sm = t.softmax_rows(t.param(store, "a"));
      return t.sum_all(t.mul(sm, t.param(store, "c")));
    });
    check([&](Tape& t) {
      Var ln = t.layer_norm_rows(t.param(store, "a"));
      return t.sum_all(t.mul(ln, t.param(store, "c")));
    });
    check([&](Tape& t) { return t.sum_all(t.logsumexp_rows(t.param(store, "a"))); });
    check([&](Tape& t) { return t.sum_all(t.mul(t.row_sum(t.param(store, "a")),
                                                t.row_sum(t.param(store, "c")))); });
    check([&](Tape& t) {
      Var r = t.reshape(t.param(store, "a"), 4, 3);
      return t.sum_all(t.mul(r, t.param(store, "b")));
    });
  }
}

TEST_CASE("tape errors: non-scalar backward, NaN trap, shape mismatch") {
  Tape tape;
  Var m = tape.constant(Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0}));
  CHECK_THROWS_AS(tape.backward(m), vmp::ValueError);
  CHECK_THROWS_AS(tape.constant(Tensor::row({std::nan("")})), vmp::NumericError);
  Tape t2;
  Var big = t2.constant(Tensor::row({1e308, 1e308}));
  CHECK_THROWS_AS(t2.add(big, big), vmp::NumericError);
  Tape t3;
  Var a = t3.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Var b = t3.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK_THROWS_AS(t3.matmul(a, b), vmp::ValueError);
}

TEST_CASE("adam: first step matches the hand-rolled recursion") {
  ParamStore store;
  store.create("p", 1, 1).values = {0.5};
  store.zero_grads();
  store.accumulate_grad("p", Tensor::scalar(1.0));
  store.adam_step(0.001);
  double m = 0.0;
  double v = 0.0;
  const double expected = testutil::adam_reference_step(0.5, 1.0, m, v, 1, 0.001);
  CHECK(store.value("p").values[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(store.value("p").values[0] == doctest::Approx(0.5 - 0.001).epsilon(1e-6));
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  ParamStore store;
  store.create("p", 1, 1).values = {1.25};
  store.zero_grads();
  store.accumulate_grad("p", Tensor::scalar(0.0));
  store.adam_step(0.01);
  CHECK(store.value("p").values[0] == 1.25);
}

TEST_CASE("adam: sign-flipping gradients move less than aligned ones") {
  auto run = [](double g1, double g2) {
    ParamStore store;
    store.create("p", 1, 1).values = {0.0};
    store.zero_grads();
    store.accumulate_grad("p", Tensor::scalar(g1));
    store.adam_step(0.001);
    store.zero_grads();
    store.accumulate_grad("p", Tensor::scalar(g2));
    store.adam_step(0.001);
    return std::abs(store.value("p").values[0]);
  };
  // Matches the two-step reference recursion as well.
  double m = 0.0;
  double v = 0.0;
  double value = testutil::adam_reference_step(0.0, 1.0, m, v, 1, 0.001);
  value = testutil::adam_reference_step(value, -1.0, m, v, 2, 0.001);
  CHECK(run(1.0, -1.0) == doctest::Approx(std::abs(value)).epsilon(1e-12));
  CHECK(run(1.0, -1.0) < run(1.0, 1.0));
}

TEST_CASE("adam: stepping before any backward is an error") {
  ParamStore store;
  store.create("p", 1, 1);
  store.zero_grads();
  CHECK_THROWS_AS(store.adam_step(0.001), vmp::ValueError);
}

TEST_CASE("lr schedule: multistep decay") {
  vmp::nn::LrSchedule s{0.001, {6, 12}, 0.3};
  vmp::nn::validate_schedule(s);
  CHECK(vmp::nn::lr_at(s, 0) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(vmp::nn::lr_at(s, 5) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(vmp::nn::lr_at(s, 6) == doctest::Approx(0.0003).epsilon(1e-12));
  CHECK(vmp::nn::lr_at(s, 11) == doctest::Approx(0.0003).epsilon(1e-12));
  CHECK(vmp::nn::lr_at(s, 12) == doctest::Approx(9e-5).epsilon(1e-12));
  CHECK_THROWS_AS(vmp::nn::validate_schedule(vmp::nn::LrSchedule{0.001, {6, 6}, 0.3}), vmp::ValueError);
  CHECK_THROWS_AS(vmp::nn::lr_at(s, -1), vmp::ValueError);
}

TEST_CASE("checkpoint: bit-exact round-trip") {
  std::mt19937_64 rng(21);
  vmp::nn::NamedTensors entries;
  entries.emplace_back("alpha", testutil::random_tensor(3, 5, rng));
  entries.emplace_back("beta.gamma", testutil::random_tensor(1, 7, rng));
  entries.emplace_back("vec", Tensor{{4}, {1.0, -2.0, 3.0e-17, 4.0e17}});
  const std::string path = "ckpt_roundtrip.bin";
  vmp::nn::save_checkpoint(entries, path);
  const auto loaded = vmp::nn::load_checkpoint(path);
  REQUIRE(loaded.size() == entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(loaded[i].first == entries[i].first);
    CHECK(loaded[i].second.shape == entries[i].second.shape);
    for (std::size_t k = 0; k < entries[i].second.values.size(); ++k)
      CHECK(loaded[i].second.values[k] == entries[i].second.values[k]);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: corrupted inputs are rejected") {
  const std::string path = "ckpt_bad.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOPE", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(vmp::nn::load_checkpoint(path), vmp::SchemaError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(vmp::nn::load_checkpoint("does_not_exist.bin"), vmp::IoError);
}

TEST_CASE("determinism: identical seeds give identical init and adam trajectories") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamStore store;
    vmp::nn::init_linear(store, "fc", 4, 3, rng);
    const Tensor x = testutil::random_tensor(2, 4, rng);
    for (int step = 0; step < 3; ++step) {
      store.zero_grads();
      Tape tape;
      Var y = vmp::nn::linear(tape, store, tape.constant(x), "fc");
      tape.backward(tape.sum_all(tape.mul(y, y)));
      store.adam_step(0.001);
    }
    return store.value("fc.w").values;
  };
  const auto a = run(42);
  const auto b = run(42);
  const auto c = run(43);
  CHECK(a == b);
  CHECK(a != c);
}
