#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "naive_ref.hpp"
#include "ppspeech/nn_ops.hpp"
#include "test_util.hpp"

using namespace ppspeech;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("conv2d: delta kernel on 2x2 input samples the top-left element") {
  Tensor input({1, 2, 2});
  input.data = {1.5f, 2.5f, 3.5f, 4.5f};
  Tensor kernel({1, 1, 3, 3});
  kernel.at(0, 0, 1 * 3 + 1) = 1.0f;  // delta at center
  const Tensor out = nn::conv2d_stride2(input, kernel);
  REQUIRE(out.shape == std::vector<std::size_t>({1, 1, 1}));
  CHECK(out.data[0] == doctest::Approx(1.5f));
  // The naive oracle fixes the same alignment.
  CHECK(max_abs_diff(out, naive::conv2d_stride2(input, kernel)) == 0.0f);
}

TEST_CASE("conv2d: zero kernel gives zero output") {
  SeededRng rng(7);
  const Tensor input = random_tensor({2, 5, 4}, rng);
  const Tensor kernel({3, 2, 3, 3});
  const Tensor out = nn::conv2d_stride2(input, kernel);
  for (float v : out.data) CHECK(v == 0.0f);
}

TEST_CASE("conv2d matches the naive oracle on random shapes") {
  SeededRng rng(11);
  for (int it = 0; it < 100; ++it) {
    const std::size_t c_in = 1 + rng.next_below(3);
    const std::size_t c_out = 1 + rng.next_below(3);
    const std::size_t h = 1 + rng.next_below(10);
    const std::size_t w = 1 + rng.next_below(10);
    const Tensor input = random_tensor({c_in, h, w}, rng);
    const Tensor kernel = random_tensor({c_out, c_in, 3, 3}, rng);
    const Tensor got = nn::conv2d_stride2(input, kernel);
    REQUIRE(got.shape == std::vector<std::size_t>({c_out, (h + 1) / 2, (w + 1) / 2}));
    CHECK(max_abs_diff(got, naive::conv2d_stride2(input, kernel)) < 1e-5f);
  }
}

TEST_CASE("conv2d output shape is (C_out, ceil(H/2), ceil(W/2)) for all H,W in [1,10]") {
  SeededRng rng(13);
  for (std::size_t h = 1; h <= 10; ++h) {
    for (std::size_t w = 1; w <= 10; ++w) {
      const Tensor input = random_tensor({1, h, w}, rng);
      const Tensor kernel = random_tensor({2, 1, 3, 3}, rng);
      const Tensor out = nn::conv2d_stride2(input, kernel);
      CHECK(out.shape == std::vector<std::size_t>({2, (h + 1) / 2, (w + 1) / 2}));
    }
  }
}

TEST_CASE("conv2d rejects mismatched shapes") {
  Tensor input({2, 4, 4});
  Tensor kernel({1, 3, 3, 3});
  CHECK_THROWS_AS(nn::conv2d_stride2(input, kernel), ShapeMismatch);
}

TEST_CASE("conv1d matches the naive oracle") {
  SeededRng rng(17);
  for (int it = 0; it < 100; ++it) {
    const std::size_t t = 1 + rng.next_below(9);
    const std::size_t c_in = 1 + rng.next_below(4);
    const std::size_t c_out = 1 + rng.next_below(4);
    const std::size_t k = 1 + 2 * rng.next_below(3);  // 1, 3, 5
    const Tensor input = random_tensor({t, c_in}, rng);
    const Tensor kernel = random_tensor({c_out, c_in, k}, rng);
    CHECK(max_abs_diff(nn::conv1d_same(input, kernel), naive::conv1d_same(input, kernel)) <
          1e-5f);
  }
}

TEST_CASE("batch_norm: identity parameters pass input through") {
  SeededRng rng(19);
  Tensor x = random_tensor({3, 4, 5}, rng);
  const Tensor expect = x;
  Tensor mean({3}), var({3}), gamma({3}), beta({3});
  std::fill(var.data.begin(), var.data.end(), 1.0f);
  std::fill(gamma.data.begin(), gamma.data.end(), 1.0f);
  nn::batch_norm_inference(x, 0, mean, var, gamma, beta);
  CHECK(max_abs_diff(x, expect) < 1e-5f);
}

TEST_CASE("batch_norm: beta shifts a zero input") {
  Tensor x({2, 3});
  Tensor mean({3}), var({3}), gamma({3}), beta({3});
  std::fill(var.data.begin(), var.data.end(), 1.0f);
  std::fill(gamma.data.begin(), gamma.data.end(), 1.0f);
  std::fill(beta.data.begin(), beta.data.end(), 5.0f);
  nn::batch_norm_inference(x, 1, mean, var, gamma, beta);
  for (float v : x.data) CHECK(v == doctest::Approx(5.0f).epsilon(1e-4));
}

TEST_CASE("batch_norm matches a scalar recomputation on random parameters") {
  SeededRng rng(23);
  Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor orig = x;
  const Tensor mean = random_tensor({3}, rng);
  const Tensor var = random_tensor({3}, rng, 0.2f, 2.0f);
  const Tensor gamma = random_tensor({3}, rng);
  const Tensor beta = random_tensor({3}, rng);
  nn::batch_norm_inference(x, 1, mean, var, gamma, beta, 1e-5f);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      for (std::size_t i = 0; i < 4; ++i) {
        const double expect = (static_cast<double>(orig.at(c, ch, i)) - mean.data[ch]) /
                                  std::sqrt(static_cast<double>(var.data[ch]) + 1e-5) *
                                  gamma.data[ch] +
                              beta.data[ch];
        CHECK(x.at(c, ch, i) == doctest::Approx(expect).epsilon(1e-4));
      }
    }
  }
}

namespace {

nn::GruParams random_gru(std::size_t d_in, std::size_t hidden, SeededRng& rng) {
  return nn::GruParams{random_tensor({d_in, 3 * hidden}, rng),
                       random_tensor({hidden, 3 * hidden}, rng),
                       random_tensor({3 * hidden}, rng)};
}

nn::LstmParams random_lstm(std::size_t d_in, std::size_t hidden, SeededRng& rng) {
  return nn::LstmParams{random_tensor({d_in, 4 * hidden}, rng),
                        random_tensor({hidden, 4 * hidden}, rng),
                        random_tensor({4 * hidden}, rng)};
}

}  // namespace

TEST_CASE("gru: zero weights and zero state stay at zero") {
  nn::GruParams p{Tensor({3, 12}), Tensor({4, 12}), Tensor({12})};
  SeededRng rng(29);
  const Tensor inputs = random_tensor({5, 3}, rng);
  const nn::GruResult res = nn::gru_forward(inputs, p, Tensor({4}));
  for (float v : res.outputs.data) CHECK(v == 0.0f);
}

TEST_CASE("gru matches the scalar oracle and h_final is the last output row") {
  SeededRng rng(31);
  for (int it = 0; it < 100; ++it) {
    const std::size_t d_in = 1 + rng.next_below(4);
    const std::size_t hidden = 1 + rng.next_below(4);
    const std::size_t t_len = 1 + rng.next_below(4);
    const nn::GruParams p = random_gru(d_in, hidden, rng);
    const Tensor inputs = random_tensor({t_len, d_in}, rng);
    const Tensor h0 = random_tensor({hidden}, rng);

    const nn::GruResult res = nn::gru_forward(inputs, p, h0);

    std::vector<double> h(h0.data.begin(), h0.data.end());
    for (std::size_t t = 0; t < t_len; ++t) {
      std::vector<double> x(d_in);
      for (std::size_t d = 0; d < d_in; ++d) x[d] = inputs.at(t, d);
      h = naive::gru_step(p.w_ih, p.w_hh, p.bias, x, h);
      for (std::size_t j = 0; j < hidden; ++j) {
        CHECK(res.outputs.at(t, j) == doctest::Approx(h[j]).epsilon(2e-5));
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      CHECK(res.h_final.data[j] == res.outputs.at(t_len - 1, j));
    }
  }
}

TEST_CASE("lstm: zero weights give zero outputs") {
  nn::LstmParams p{Tensor({2, 8}), Tensor({2, 8}), Tensor({8})};
  SeededRng rng(37);
  const Tensor inputs = random_tensor({4, 2}, rng);
  const nn::LstmResult res = nn::lstm_forward(inputs, p, nn::lstm_zero_state(2));
  for (float v : res.outputs.data) CHECK(v == 0.0f);
}

TEST_CASE("lstm matches the scalar oracle and final state is consistent") {
  SeededRng rng(41);
  for (int it = 0; it < 100; ++it) {
    const std::size_t d_in = 1 + rng.next_below(3);
    const std::size_t hidden = 1 + rng.next_below(3);
    const std::size_t t_len = 1 + rng.next_below(4);
    const nn::LstmParams p = random_lstm(d_in, hidden, rng);
    const Tensor inputs = random_tensor({t_len, d_in}, rng);

    const nn::LstmResult res = nn::lstm_forward(inputs, p, nn::lstm_zero_state(hidden));

    std::vector<double> h(hidden, 0.0), c(hidden, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
      std::vector<double> x(d_in);
      for (std::size_t d = 0; d < d_in; ++d) x[d] = inputs.at(t, d);
      naive::lstm_step(p.w_ih, p.w_hh, p.bias, x, h, c);
      for (std::size_t j = 0; j < hidden; ++j) {
        CHECK(res.outputs.at(t, j) == doctest::Approx(h[j]).epsilon(2e-5));
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      CHECK(res.state.h.data[j] == res.outputs.at(t_len - 1, j));
      CHECK(res.state.c.data[j] == doctest::Approx(c[j]).epsilon(2e-5));
    }
  }
}

TEST_CASE("softmax basics") {
  Tensor x({2});
  x.data = {0.0f, 0.0f};
  Tensor out = nn::softmax_last(x);
  CHECK(out.data[0] == doctest::Approx(0.5f));
  CHECK(out.data[1] == doctest::Approx(0.5f));

  x.data = {1000.0f, 0.0f};
  out = nn::softmax_last(x);
  CHECK(out.data[0] == doctest::Approx(1.0f));
  CHECK(out.data[1] == doctest::Approx(0.0f));
  CHECK(std::isfinite(out.data[0]));
}

TEST_CASE("softmax: positivity, normalization, shift invariance, high-precision match") {
  SeededRng rng(43);
  for (int it = 0; it < 100; ++it) {
    const std::size_t d = 1 + rng.next_below(8);
    Tensor x = random_tensor({d}, rng, -5.0f, 5.0f);
    const Tensor out = nn::softmax_last(x);

    float sum = 0.0f;
    for (float v : out.data) {
      CHECK(v > 0.0f);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-6));

    Tensor shifted = x;
    for (float& v : shifted.data) v += 3.25f;
    CHECK(max_abs_diff(nn::softmax_last(shifted), out) < 1e-6f);

    const auto precise = naive::softmax(naive::to_double(x.data));
    for (std::size_t i = 0; i < d; ++i) {
      CHECK(std::fabs(out.data[i] - static_cast<float>(precise[i])) < 1e-7f);
    }
  }
}

TEST_CASE("linear: identity and zero input") {
  Tensor w({3, 3});
  for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0f;
  Tensor b({3});
  b.data = {1.0f, 2.0f, 3.0f};

  SeededRng rng(47);
  const Tensor x = random_tensor({2, 3}, rng);
  Tensor ident = nn::linear(x, w, Tensor{});
  CHECK(max_abs_diff(ident, x) == 0.0f);

  const Tensor zero({3});
  const Tensor out = nn::linear(zero, w, b);
  CHECK(max_abs_diff(out, b) == 0.0f);
}

TEST_CASE("linear matches naive loops on random shapes") {
  SeededRng rng(53);
  for (int it = 0; it < 100; ++it) {
    const std::size_t rows = 1 + rng.next_below(4);
    const std::size_t d_in = 1 + rng.next_below(6);
    const std::size_t d_out = 1 + rng.next_below(6);
    const Tensor x = random_tensor({rows, d_in}, rng);
    const Tensor w = random_tensor({d_in, d_out}, rng);
    const Tensor b = random_tensor({d_out}, rng);
    const Tensor got = nn::linear(x, w, b);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> xr(d_in);
      for (std::size_t i = 0; i < d_in; ++i) xr[i] = x.at(r, i);
      const auto expect = naive::mat_vec(w, xr, naive::to_double(b.data));
      for (std::size_t o = 0; o < d_out; ++o) {
        CHECK(got.at(r, o) == doctest::Approx(expect[o]).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("dot_attention: single key takes all the weight") {
  SeededRng rng(59);
  const Tensor query = random_tensor({4}, rng);
  const Tensor keys = random_tensor({1, 3}, rng);
  const Tensor values = random_tensor({1, 5}, rng);
  const Tensor wq = random_tensor({4, 6}, rng);
  const Tensor wk = random_tensor({3, 6}, rng);
  const nn::AttentionResult res = nn::dot_attention(query, keys, values, wq, wk);
  CHECK(res.weights.data[0] == doctest::Approx(1.0f));
  for (std::size_t d = 0; d < 5; ++d) CHECK(res.context.data[d] == values.at(0, d));
}

TEST_CASE("dot_attention: identical keys give uniform weights") {
  SeededRng rng(61);
  const Tensor query = random_tensor({4}, rng);
  Tensor keys({5, 3});
  const Tensor row = random_tensor({3}, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t d = 0; d < 3; ++d) keys.at(i, d) = row.data[d];
  }
  const Tensor values = random_tensor({5, 2}, rng);
  const Tensor wq = random_tensor({4, 6}, rng);
  const Tensor wk = random_tensor({3, 6}, rng);
  const nn::AttentionResult res = nn::dot_attention(query, keys, values, wq, wk);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(res.weights.data[i] == doctest::Approx(0.2f).epsilon(1e-5));
  }
}

TEST_CASE("dot_attention matches a naive recomputation") {
  SeededRng rng(67);
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 1 + rng.next_below(6);
    const std::size_t d_q = 1 + rng.next_below(4);
    const std::size_t d_k = 1 + rng.next_below(4);
    const std::size_t d_v = 1 + rng.next_below(4);
    const std::size_t proj = 1 + rng.next_below(4);
    const Tensor query = random_tensor({d_q}, rng);
    const Tensor keys = random_tensor({n, d_k}, rng);
    const Tensor values = random_tensor({n, d_v}, rng);
    const Tensor wq = random_tensor({d_q, proj}, rng);
    const Tensor wk = random_tensor({d_k, proj}, rng);

    const nn::AttentionResult res = nn::dot_attention(query, keys, values, wq, wk);
    const auto [context, weights] = naive::attention(query, keys, values, wq, wk);

    float wsum = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(res.weights.data[i] == doctest::Approx(weights[i]).epsilon(1e-5));
      wsum += res.weights.data[i];
    }
    CHECK(wsum == doctest::Approx(1.0f).epsilon(1e-6));
    for (std::size_t d = 0; d < d_v; ++d) {
      CHECK(res.context.data[d] == doctest::Approx(context[d]).epsilon(2e-5));
    }
  }
}

TEST_CASE("init_weights: determinism, bounds, and name-salted streams") {
  const std::vector<nn::TensorSpec> specs = {
      {"a.weight", {16, 8}, nn::InitKind::kXavier},
      {"b.weight", {16, 8}, nn::InitKind::kXavier},
      {"a.bias", {8}, nn::InitKind::kZeros},
      {"a.gamma", {8}, nn::InitKind::kOnes},
  };
  const auto first = nn::init_weights(specs, 99);
  const auto second = nn::init_weights(specs, 99);
  CHECK(first.at("a.weight").data == second.at("a.weight").data);

  const float bound = std::sqrt(6.0f / (16 + 8));
  int nonzero = 0;
  for (float v : first.at("a.weight").data) {
    CHECK(std::fabs(v) < bound);
    if (v != 0.0f) ++nonzero;
  }
  CHECK(nonzero > 0);

  // Same shape, different name -> different stream.
  CHECK(first.at("a.weight").data != first.at("b.weight").data);

  for (float v : first.at("a.bias").data) CHECK(v == 0.0f);
  for (float v : first.at("a.gamma").data) CHECK(v == 1.0f);

  const auto other_seed = nn::init_weights(specs, 100);
  CHECK(first.at("a.weight").data != other_seed.at("a.weight").data);
}

TEST_CASE("init_weights: xavier bound respected over many draws") {
  const nn::TensorSpec spec{"t", {1000}, nn::InitKind::kXavier};
  const Tensor t = nn::init_tensor(spec, 5);
  const auto [fan_in, fan_out] = nn::fan_in_out(spec.shape);
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  for (float v : t.data) CHECK(std::fabs(v) <= bound);
}
