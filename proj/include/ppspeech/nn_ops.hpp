#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ppspeech/tensor.hpp"

namespace ppspeech::nn {

// 2-D convolution, 3x3 kernel, 2x2 stride, "same-ceil" zero padding:
// output spatial dims are ceil(in/2) and the padding is begin-heavy
// (pad_begin = ceil(pad_total/2)), so a centered delta kernel on a 2x2
// input samples the top-left element.
//   input  [C_in, H, W], kernel [C_out, C_in, 3, 3] -> [C_out, ceil(H/2), ceil(W/2)]
Tensor conv2d_stride2(const Tensor& input, const Tensor& kernel);

// 1-D convolution over time, stride 1, odd kernel, symmetric zero padding.
//   input [T, C_in], kernel [C_out, C_in, k] -> [T, C_out]
Tensor conv1d_same(const Tensor& input, const Tensor& kernel);

// Inference-mode batch normalization with stored statistics.
// channel_axis selects which axis of x the per-channel parameters index.
void batch_norm_inference(Tensor& x, std::size_t channel_axis, const Tensor& mean,
                          const Tensor& var, const Tensor& gamma, const Tensor& beta,
                          float epsilon = 1e-5f);

// Fused-gate GRU. Gate order in the fused matrices is (update z, reset r,
// candidate n):
//   z = sigmoid(x W_z + h U_z + b_z)
//   r = sigmoid(x W_r + h U_r + b_r)
//   n = tanh(x W_n + r * (h U_n) + b_n)
//   h' = (1 - z) * n + z * h
struct GruParams {
  Tensor w_ih;  // [D_in, 3H]
  Tensor w_hh;  // [H, 3H]
  Tensor bias;  // [3H]
};
struct GruResult {
  Tensor outputs;  // [T, H]
  Tensor h_final;  // [H]
};
GruResult gru_forward(const Tensor& inputs, const GruParams& params, const Tensor& h0);

// Fused-gate LSTM, gate order (input i, forget f, candidate g, output o):
//   c' = f * c + i * g,  h' = o * tanh(c')
struct LstmParams {
  Tensor w_ih;  // [D_in, 4H]
  Tensor w_hh;  // [H, 4H]
  Tensor bias;  // [4H]
};
struct LstmState {
  Tensor h;  // [H]
  Tensor c;  // [H]
};
struct LstmResult {
  Tensor outputs;  // [T, H]
  LstmState state;
};
LstmResult lstm_forward(const Tensor& inputs, const LstmParams& params, const LstmState& s0);
LstmState lstm_zero_state(std::size_t hidden);

// Softmax over the last axis, computed with max subtraction.
Tensor softmax_last(const Tensor& x);
void softmax_inplace(std::span<float> row);

// x [.., D_in] * w [D_in, D_out] + b [D_out]. x may be rank 1 or 2.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

void relu_inplace(Tensor& x);
void tanh_inplace(Tensor& x);
void sigmoid_inplace(Tensor& x);
float sigmoid(float v);

// Scaled dot-product attention with learned query/key projections:
//   weights = softmax((q Wq) . (K Wk)^T / sqrt(P)),  context = weights . V
struct AttentionResult {
  Tensor context;  // [D_v]
  Tensor weights;  // [N]
};
AttentionResult dot_attention(const Tensor& query, const Tensor& keys, const Tensor& values,
                              const Tensor& wq, const Tensor& wk);

// Seeded weight initialization. Xavier tensors are uniform(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)); each tensor draws from its own
// (seed, name)-salted stream so the set is reproducible tensor by tensor.
enum class InitKind { kXavier, kZeros, kOnes };
struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  InitKind kind = InitKind::kXavier;
};
Tensor init_tensor(const TensorSpec& spec, std::uint64_t seed);
std::map<std::string, Tensor> init_weights(std::span<const TensorSpec> specs, std::uint64_t seed);

// fan_in/fan_out used by the Xavier bound, exposed for tests.
std::pair<std::size_t, std::size_t> fan_in_out(std::span<const std::size_t> shape);

}  // namespace ppspeech::nn
