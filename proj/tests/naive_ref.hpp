#pragma once

// Naive reference implementations used as oracles. These are deliberately
// written as plain nested loops over explicitly padded buffers, independent
// of the kernels in src/, and accumulate in double.

#include <cmath>
#include <cstddef>
#include <vector>

#include "ppspeech/tensor.hpp"

namespace naive {

using ppspeech::Tensor;

// Zero-pads with begin-heavy "same-ceil" padding and convolves without any
// bounds logic in the inner loops.
inline Tensor conv2d_stride2(const Tensor& input, const Tensor& kernel) {
  const std::size_t c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
  const std::size_t c_out = kernel.shape[0];
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;

  auto pad_begin = [](std::size_t in, std::size_t out) {
    const std::size_t span = (out - 1) * 2 + 3;
    const std::size_t total = span > in ? span - in : 0;
    return (total + 1) / 2;
  };
  const std::size_t ph = pad_begin(h, oh), pw = pad_begin(w, ow);
  const std::size_t hp = h + 2 + 2, wp = w + 2 + 2;  // generous padded buffer

  std::vector<double> padded(c_in * hp * wp, 0.0);
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        padded[(c * hp + y + ph) * wp + x + pw] = input.at(c, y, x);
      }
    }
  }

  Tensor out({c_out, oh, ow});
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              acc += static_cast<double>(kernel.data[((co * c_in + ci) * 3 + ky) * 3 + kx]) *
                     padded[(ci * hp + oy * 2 + ky) * wp + ox * 2 + kx];
            }
          }
        }
        out.at(co, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

inline Tensor conv1d_same(const Tensor& input, const Tensor& kernel) {
  const std::size_t t_len = input.shape[0], c_in = input.shape[1];
  const std::size_t c_out = kernel.shape[0], k = kernel.shape[2];
  const std::size_t pad = k / 2;

  std::vector<double> padded((t_len + 2 * pad) * c_in, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t c = 0; c < c_in; ++c) padded[(t + pad) * c_in + c] = input.at(t, c);
  }

  Tensor out({t_len, c_out});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t co = 0; co < c_out; ++co) {
      double acc = 0.0;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          acc += static_cast<double>(kernel.at(co, ci, kk)) * padded[(t + kk) * c_in + ci];
        }
      }
      out.at(t, co) = static_cast<float>(acc);
    }
  }
  return out;
}

inline std::vector<double> mat_vec(const Tensor& w, const std::vector<double>& x,
                                   const std::vector<double>& b) {
  const std::size_t d_in = w.shape[0], d_out = w.shape[1];
  std::vector<double> y(d_out, 0.0);
  for (std::size_t o = 0; o < d_out; ++o) {
    double acc = b.empty() ? 0.0 : b[o];
    for (std::size_t i = 0; i < d_in; ++i) acc += static_cast<double>(w.at(i, o)) * x[i];
    y[o] = acc;
  }
  return y;
}

inline std::vector<double> to_double(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// One GRU step, gate order (z, r, n).
inline std::vector<double> gru_step(const Tensor& w_ih, const Tensor& w_hh, const Tensor& bias,
                                    const std::vector<double>& x, const std::vector<double>& h) {
  const std::size_t hidden = w_hh.shape[0];
  const auto gx = mat_vec(w_ih, x, to_double(bias.data));
  const auto gh = mat_vec(w_hh, h, {});
  std::vector<double> out(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    const double z = sigmoid(gx[j] + gh[j]);
    const double r = sigmoid(gx[hidden + j] + gh[hidden + j]);
    const double n = std::tanh(gx[2 * hidden + j] + r * gh[2 * hidden + j]);
    out[j] = (1.0 - z) * n + z * h[j];
  }
  return out;
}

// One LSTM step, gate order (i, f, g, o); updates h and c in place.
inline void lstm_step(const Tensor& w_ih, const Tensor& w_hh, const Tensor& bias,
                      const std::vector<double>& x, std::vector<double>& h,
                      std::vector<double>& c) {
  const std::size_t hidden = w_hh.shape[0];
  const auto gx = mat_vec(w_ih, x, to_double(bias.data));
  const auto gh = mat_vec(w_hh, h, {});
  for (std::size_t j = 0; j < hidden; ++j) {
    const double i_g = sigmoid(gx[j] + gh[j]);
    const double f_g = sigmoid(gx[hidden + j] + gh[hidden + j]);
    const double g_g = std::tanh(gx[2 * hidden + j] + gh[2 * hidden + j]);
    const double o_g = sigmoid(gx[3 * hidden + j] + gh[3 * hidden + j]);
    c[j] = f_g * c[j] + i_g * g_g;
    h[j] = o_g * std::tanh(c[j]);
  }
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  long double mx = x[0];
  for (double v : x) mx = std::max<long double>(mx, v);
  long double sum = 0.0L;
  std::vector<long double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(x[i]) - mx);
    sum += e[i];
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
  return out;
}

// Scaled dot-product attention recomputed from scratch.
inline std::pair<std::vector<double>, std::vector<double>> attention(
    const Tensor& query, const Tensor& keys, const Tensor& values, const Tensor& wq,
    const Tensor& wk) {
  const std::size_t n = keys.shape[0], d_v = values.shape[1], proj = wq.shape[1];
  const auto q = mat_vec(wq, to_double(query.data), {});
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> key_row(keys.shape[1]);
    for (std::size_t d = 0; d < keys.shape[1]; ++d) key_row[d] = keys.at(i, d);
    const auto k = mat_vec(wk, key_row, {});
    double dot = 0.0;
    for (std::size_t p = 0; p < proj; ++p) dot += q[p] * k[p];
    scores[i] = dot / std::sqrt(static_cast<double>(proj));
  }
  const auto weights = softmax(scores);
  std::vector<double> context(d_v, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < d_v; ++d) context[d] += weights[i] * values.at(i, d);
  }
  return {context, weights};
}

}  // namespace naive
