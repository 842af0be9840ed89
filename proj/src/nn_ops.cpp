#include "ppspeech/nn_ops.hpp"

#include <algorithm>
#include <cmath>

namespace ppspeech::nn {

namespace {

std::size_t ceil_div2(std::size_t n) { return (n + 1) / 2; }

// Begin-heavy padding amount for kernel 3, stride 2: output = ceil(in/2).
std::size_t pad_begin_stride2(std::size_t in) {
  std::size_t out = ceil_div2(in);
  std::size_t total = (out - 1) * 2 + 3 > in ? (out - 1) * 2 + 3 - in : 0;
  return (total + 1) / 2;
}

}  // namespace

Tensor conv2d_stride2(const Tensor& input, const Tensor& kernel) {
  require_shape(input.rank() == 3 && kernel.rank() == 4, "conv2d: input [C,H,W], kernel [O,C,3,3]");
  require_shape(kernel.shape[1] == input.shape[0], "conv2d: channel mismatch");
  require_shape(kernel.shape[2] == 3 && kernel.shape[3] == 3, "conv2d: kernel must be 3x3");

  const std::size_t c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
  const std::size_t c_out = kernel.shape[0];
  const std::size_t oh = ceil_div2(h), ow = ceil_div2(w);
  const std::size_t ph = pad_begin_stride2(h), pw = pad_begin_stride2(w);

  Tensor out({c_out, oh, ow});
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      // Valid kernel-row range for this output row (rows outside read zeros).
      const std::ptrdiff_t y_base = static_cast<std::ptrdiff_t>(oy * 2) -
                                    static_cast<std::ptrdiff_t>(ph);
      const std::size_t ky_lo = y_base < 0 ? static_cast<std::size_t>(-y_base) : 0;
      const std::size_t ky_hi =
          std::min<std::size_t>(3, y_base + 3 <= static_cast<std::ptrdiff_t>(h)
                                       ? 3
                                       : static_cast<std::size_t>(
                                             static_cast<std::ptrdiff_t>(h) - y_base));
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::ptrdiff_t x_base = static_cast<std::ptrdiff_t>(ox * 2) -
                                      static_cast<std::ptrdiff_t>(pw);
        const std::size_t kx_lo = x_base < 0 ? static_cast<std::size_t>(-x_base) : 0;
        const std::size_t kx_hi =
            std::min<std::size_t>(3, x_base + 3 <= static_cast<std::ptrdiff_t>(w)
                                         ? 3
                                         : static_cast<std::size_t>(
                                               static_cast<std::ptrdiff_t>(w) - x_base));
        float acc = 0.0f;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const float* in_ch = &input.data[ci * h * w];
          const float* k_ch = &kernel.data[(co * c_in + ci) * 9];
          for (std::size_t ky = ky_lo; ky < ky_hi; ++ky) {
            const float* in_row = &in_ch[static_cast<std::size_t>(y_base + ky) * w];
            const float* k_row = &k_ch[ky * 3];
            for (std::size_t kx = kx_lo; kx < kx_hi; ++kx) {
              acc += k_row[kx] * in_row[static_cast<std::size_t>(x_base + kx)];
            }
          }
        }
        out.at(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

Tensor conv1d_same(const Tensor& input, const Tensor& kernel) {
  require_shape(input.rank() == 2 && kernel.rank() == 3, "conv1d: input [T,C], kernel [O,C,k]");
  require_shape(kernel.shape[1] == input.shape[1], "conv1d: channel mismatch");
  require_shape(kernel.shape[2] % 2 == 1, "conv1d: kernel width must be odd");

  const std::size_t t_len = input.shape[0], c_in = input.shape[1];
  const std::size_t c_out = kernel.shape[0], k = kernel.shape[2];
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);

  // Transposed kernel [k][C_in][C_out] keeps the innermost accumulation
  // contiguous over output channels. Transposed in 64x64 blocks.
  std::vector<float> kt(k * c_in * c_out);
  constexpr std::size_t kBlock = 64;
  for (std::size_t kk = 0; kk < k; ++kk) {
    for (std::size_t ci0 = 0; ci0 < c_in; ci0 += kBlock) {
      for (std::size_t co0 = 0; co0 < c_out; co0 += kBlock) {
        const std::size_t ci1 = std::min(ci0 + kBlock, c_in);
        const std::size_t co1 = std::min(co0 + kBlock, c_out);
        for (std::size_t ci = ci0; ci < ci1; ++ci) {
          float* dst = &kt[(kk * c_in + ci) * c_out];
          for (std::size_t co = co0; co < co1; ++co) {
            dst[co] = kernel.data[(co * c_in + ci) * k + kk];
          }
        }
      }
    }
  }

  Tensor out({t_len, c_out});
  for (std::size_t t = 0; t < t_len; ++t) {
    float* acc = &out.data[t * c_out];
    for (std::size_t kk = 0; kk < k; ++kk) {
      const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(t + kk) - pad;
      if (it < 0 || it >= static_cast<std::ptrdiff_t>(t_len)) continue;
      const float* in_row = &input.data[static_cast<std::size_t>(it) * c_in];
      const float* kt_rows = &kt[kk * c_in * c_out];
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const float xi = in_row[ci];
        const float* wrow = &kt_rows[ci * c_out];
        for (std::size_t co = 0; co < c_out; ++co) acc[co] += xi * wrow[co];
      }
    }
  }
  return out;
}

void batch_norm_inference(Tensor& x, std::size_t channel_axis, const Tensor& mean,
                          const Tensor& var, const Tensor& gamma, const Tensor& beta,
                          float epsilon) {
  require_shape(channel_axis < x.rank(), "batch_norm: bad channel axis");
  const std::size_t channels = x.shape[channel_axis];
  require_shape(mean.numel() == channels && var.numel() == channels &&
                    gamma.numel() == channels && beta.numel() == channels,
                "batch_norm: parameter length != channel count");

  std::size_t inner = 1;
  for (std::size_t a = channel_axis + 1; a < x.rank(); ++a) inner *= x.shape[a];

  std::vector<float> scale(channels), shift(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    scale[c] = gamma.data[c] / std::sqrt(var.data[c] + epsilon);
    shift[c] = beta.data[c] - mean.data[c] * scale[c];
  }
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const std::size_t c = (i / inner) % channels;
    x.data[i] = x.data[i] * scale[c] + shift[c];
  }
}

float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

namespace {

// y = x W + b for a single row, accumulated input-major.
void row_affine(std::span<const float> x, const Tensor& w, std::span<const float> b,
                std::span<float> y) {
  const std::size_t d_in = w.shape[0], d_out = w.shape[1];
  for (std::size_t o = 0; o < d_out; ++o) y[o] = b.empty() ? 0.0f : b[o];
  for (std::size_t i = 0; i < d_in; ++i) {
    const float xi = x[i];
    const float* wrow = &w.data[i * d_out];
    for (std::size_t o = 0; o < d_out; ++o) y[o] += xi * wrow[o];
  }
}

}  // namespace

GruResult gru_forward(const Tensor& inputs, const GruParams& params, const Tensor& h0) {
  require_shape(inputs.rank() == 2, "gru: inputs [T,D]");
  const std::size_t t_len = inputs.shape[0], d_in = inputs.shape[1];
  const std::size_t hidden = params.w_hh.shape[0];
  require_shape(params.w_ih.shape[0] == d_in && params.w_ih.shape[1] == 3 * hidden,
                "gru: w_ih shape");
  require_shape(params.w_hh.shape[1] == 3 * hidden, "gru: w_hh shape");
  require_shape(params.bias.numel() == 3 * hidden, "gru: bias shape");
  require_shape(h0.numel() == hidden, "gru: h0 shape");

  GruResult res;
  res.outputs = Tensor({t_len, hidden});
  std::vector<float> h(h0.data.begin(), h0.data.end());
  std::vector<float> gx(3 * hidden), gh(3 * hidden);

  for (std::size_t t = 0; t < t_len; ++t) {
    row_affine({&inputs.data[t * d_in], d_in}, params.w_ih, params.bias.data, gx);
    row_affine(h, params.w_hh, {}, gh);
    for (std::size_t j = 0; j < hidden; ++j) {
      const float z = sigmoid(gx[j] + gh[j]);
      const float r = sigmoid(gx[hidden + j] + gh[hidden + j]);
      const float n = std::tanh(gx[2 * hidden + j] + r * gh[2 * hidden + j]);
      h[j] = (1.0f - z) * n + z * h[j];
      res.outputs.at(t, j) = h[j];
    }
  }
  res.h_final = Tensor({hidden});
  res.h_final.data.assign(h.begin(), h.end());
  return res;
}

LstmState lstm_zero_state(std::size_t hidden) {
  return LstmState{Tensor({hidden}), Tensor({hidden})};
}

LstmResult lstm_forward(const Tensor& inputs, const LstmParams& params, const LstmState& s0) {
  require_shape(inputs.rank() == 2, "lstm: inputs [T,D]");
  const std::size_t t_len = inputs.shape[0], d_in = inputs.shape[1];
  const std::size_t hidden = params.w_hh.shape[0];
  require_shape(params.w_ih.shape[0] == d_in && params.w_ih.shape[1] == 4 * hidden,
                "lstm: w_ih shape");
  require_shape(params.w_hh.shape[1] == 4 * hidden, "lstm: w_hh shape");
  require_shape(params.bias.numel() == 4 * hidden, "lstm: bias shape");
  require_shape(s0.h.numel() == hidden && s0.c.numel() == hidden, "lstm: state shape");

  LstmResult res;
  res.outputs = Tensor({t_len, hidden});
  std::vector<float> h(s0.h.data.begin(), s0.h.data.end());
  std::vector<float> c(s0.c.data.begin(), s0.c.data.end());
  std::vector<float> gx(4 * hidden), gh(4 * hidden);

  for (std::size_t t = 0; t < t_len; ++t) {
    row_affine({&inputs.data[t * d_in], d_in}, params.w_ih, params.bias.data, gx);
    row_affine(h, params.w_hh, {}, gh);
    for (std::size_t j = 0; j < hidden; ++j) {
      const float i_g = sigmoid(gx[j] + gh[j]);
      const float f_g = sigmoid(gx[hidden + j] + gh[hidden + j]);
      const float g_g = std::tanh(gx[2 * hidden + j] + gh[2 * hidden + j]);
      const float o_g = sigmoid(gx[3 * hidden + j] + gh[3 * hidden + j]);
      c[j] = f_g * c[j] + i_g * g_g;
      h[j] = o_g * std::tanh(c[j]);
      res.outputs.at(t, j) = h[j];
    }
  }
  res.state.h = Tensor({hidden});
  res.state.h.data.assign(h.begin(), h.end());
  res.state.c = Tensor({hidden});
  res.state.c.data.assign(c.begin(), c.end());
  return res;
}

void softmax_inplace(std::span<float> row) {
  // Internals in double so each output is within half an ulp of the exact
  // normalized value.
  float mx = row[0];
  for (float v : row) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> e(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    e[i] = std::exp(static_cast<double>(row[i]) - static_cast<double>(mx));
    sum += e[i];
  }
  for (std::size_t i = 0; i < row.size(); ++i) {
    row[i] = static_cast<float>(e[i] / sum);
  }
}

Tensor softmax_last(const Tensor& x) {
  require_shape(x.rank() >= 1, "softmax: rank >= 1");
  Tensor out = x;
  const std::size_t d = x.shape.back();
  for (std::size_t i = 0; i + d <= out.data.size(); i += d) softmax_inplace({&out.data[i], d});
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_shape(w.rank() == 2, "linear: w [D_in, D_out]");
  require_shape(x.shape.back() == w.shape[0], "linear: inner dim mismatch");
  require_shape(b.data.empty() || b.data.size() == w.shape[1], "linear: bias dim mismatch");

  const std::size_t d_in = w.shape[0], d_out = w.shape[1];
  const std::size_t rows = x.numel() / d_in;
  Tensor out(x.rank() == 1 ? std::vector<std::size_t>{d_out}
                           : std::vector<std::size_t>{rows, d_out});
  for (std::size_t r = 0; r < rows; ++r) {
    row_affine({&x.data[r * d_in], d_in}, w, std::span<const float>(b.data),
               {&out.data[r * d_out], d_out});
  }
  return out;
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data) v = std::max(v, 0.0f);
}

void tanh_inplace(Tensor& x) {
  for (float& v : x.data) v = std::tanh(v);
}

void sigmoid_inplace(Tensor& x) {
  for (float& v : x.data) v = sigmoid(v);
}

AttentionResult dot_attention(const Tensor& query, const Tensor& keys, const Tensor& values,
                              const Tensor& wq, const Tensor& wk) {
  require_shape(query.rank() == 1 && keys.rank() == 2 && values.rank() == 2,
                "dot_attention: query [D_q], keys [N,D_k], values [N,D_v]");
  require_shape(keys.shape[0] == values.shape[0], "dot_attention: key/value count mismatch");
  require_shape(wq.rank() == 2 && wk.rank() == 2 && wq.shape[1] == wk.shape[1],
                "dot_attention: projection dims disagree");
  require_shape(wq.shape[0] == query.shape[0] && wk.shape[0] == keys.shape[1],
                "dot_attention: projection input dims");

  const std::size_t n = keys.shape[0], d_v = values.shape[1], proj = wq.shape[1];
  const Tensor q = linear(query, wq, Tensor{});
  const Tensor k = linear(keys, wk, Tensor{});
  const float inv_scale = 1.0f / std::sqrt(static_cast<float>(proj));

  AttentionResult res;
  res.weights = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) {
    float dot = 0.0f;
    for (std::size_t p = 0; p < proj; ++p) dot += q.data[p] * k.at(i, p);
    res.weights.data[i] = dot * inv_scale;
  }
  softmax_inplace(res.weights.data);

  res.context = Tensor({d_v});
  for (std::size_t i = 0; i < n; ++i) {
    const float wgt = res.weights.data[i];
    for (std::size_t d = 0; d < d_v; ++d) res.context.data[d] += wgt * values.at(i, d);
  }
  return res;
}

std::pair<std::size_t, std::size_t> fan_in_out(std::span<const std::size_t> shape) {
  if (shape.size() == 1) return {shape[0], shape[0]};
  if (shape.size() == 2) return {shape[0], shape[1]};
  std::size_t receptive = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
  return {shape[1] * receptive, shape[0] * receptive};
}

Tensor init_tensor(const TensorSpec& spec, std::uint64_t seed) {
  Tensor t(spec.shape);
  switch (spec.kind) {
    case InitKind::kZeros:
      break;
    case InitKind::kOnes:
      std::fill(t.data.begin(), t.data.end(), 1.0f);
      break;
    case InitKind::kXavier: {
      auto [fan_in, fan_out] = fan_in_out(spec.shape);
      const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
      SeededRng rng(seed, spec.name);
      for (float& v : t.data) v = rng.next_in(-a, a);
      break;
    }
  }
  return t;
}

std::map<std::string, Tensor> init_weights(std::span<const TensorSpec> specs, std::uint64_t seed) {
  std::map<std::string, Tensor> out;
  for (const TensorSpec& spec : specs) out.emplace(spec.name, init_tensor(spec, seed));
  return out;
}

}  // namespace ppspeech::nn
