#include <algorithm>
#include <cmath>
#include <cstring>

#include "ppspeech/acoustic.hpp"

namespace ppspeech::model {

namespace {

// Single-row x W + b into a reused buffer.
void affine_into(const float* x, std::size_t d_in, const Tensor& w, const Tensor& b,
                 float* y) {
  const std::size_t d_out = w.shape[1];
  for (std::size_t o = 0; o < d_out; ++o) y[o] = b.data.empty() ? 0.0f : b.data[o];
  for (std::size_t i = 0; i < d_in; ++i) {
    const float xi = x[i];
    const float* wrow = &w.data[i * d_out];
    for (std::size_t o = 0; o < d_out; ++o) y[o] += xi * wrow[o];
  }
}

struct LstmCell {
  const Tensor* w_ih;
  const Tensor* w_hh;
  const Tensor* bias;
  std::size_t hidden;
  std::vector<float> h, c, gx, gh;

  LstmCell(const ModelWeights& w, const std::string& prefix)
      : w_ih(&w.at(prefix + ".w_ih")),
        w_hh(&w.at(prefix + ".w_hh")),
        bias(&w.at(prefix + ".bias")),
        hidden(w_hh->shape[0]),
        h(hidden, 0.0f),
        c(hidden, 0.0f),
        gx(4 * hidden),
        gh(4 * hidden) {}

  void step(const float* x, std::size_t d_in) {
    affine_into(x, d_in, *w_ih, *bias, gx.data());
    affine_into(h.data(), hidden, *w_hh, Tensor{}, gh.data());
    for (std::size_t j = 0; j < hidden; ++j) {
      const float i_g = nn::sigmoid(gx[j] + gh[j]);
      const float f_g = nn::sigmoid(gx[hidden + j] + gh[hidden + j]);
      const float g_g = std::tanh(gx[2 * hidden + j] + gh[2 * hidden + j]);
      const float o_g = nn::sigmoid(gx[3 * hidden + j] + gh[3 * hidden + j]);
      c[j] = f_g * c[j] + i_g * g_g;
      h[j] = o_g * std::tanh(c[j]);
    }
  }
};

Tensor postnet_residual(const Tensor& frames, const ModelWeights& weights) {
  const ModelConfig& cfg = weights.config;
  Tensor x = frames;
  for (std::size_t i = 0; i < cfg.postnet_layers; ++i) {
    const std::string prefix = "postnet.conv" + std::to_string(i);
    x = nn::conv1d_same(x, weights.at(prefix + ".weight"));
    nn::batch_norm_inference(x, 1, weights.at(prefix + ".bn.mean"),
                             weights.at(prefix + ".bn.var"), weights.at(prefix + ".bn.gamma"),
                             weights.at(prefix + ".bn.beta"));
    if (i + 1 < cfg.postnet_layers) nn::tanh_inplace(x);
  }
  return x;
}

}  // namespace

DecodeResult decode_mel(const ConditionedMemory& memory, const ModelWeights& weights,
                        const DecoderLimits& limits) {
  require_shape(memory.m.rank() == 2 && memory.m.shape[1] == kConditionDim,
                "decode_mel: memory must be [T, 896]");
  if (limits.max_frames < 1) throw Error("decode_mel: max_frames must be >= 1");

  const ModelConfig& cfg = weights.config;
  const std::size_t t_len = memory.m.shape[0];

  // Memory-side attention term, computed once per decode.
  const Tensor memory_proj = nn::linear(memory.m, weights.at("decoder.attn.memory_w"), Tensor{});
  const Tensor& loc_conv = weights.at("decoder.attn.loc_conv");
  const Tensor& loc_w = weights.at("decoder.attn.loc_w");
  const Tensor& attn_v = weights.at("decoder.attn.v");
  const Tensor& query_w = weights.at("decoder.attn.query_w");

  LstmCell attn_rnn(weights, "decoder.attn_rnn");
  LstmCell dec_rnn(weights, "decoder.dec_rnn");

  std::vector<float> prev_frame(kMelBins, 0.0f);
  std::vector<float> context(kConditionDim, 0.0f);
  std::vector<float> attn_weights(t_len, 0.0f);
  std::vector<float> attn_cum(t_len, 0.0f);

  std::vector<float> prenet0(cfg.prenet_dim), prenet1(cfg.prenet_dim);
  std::vector<float> attn_in(cfg.prenet_dim + kConditionDim);
  std::vector<float> query(cfg.attn_dim);
  std::vector<float> energies(t_len);
  Tensor loc_signals({t_len, 2});
  std::vector<float> dec_in(cfg.attn_rnn_dim + kConditionDim);
  std::vector<float> proj_in(cfg.dec_rnn_dim + kConditionDim);

  // Prenet dropout is off by default; a nonzero rate uses a fixed-seed mask
  // stream so the decode stays reproducible.
  SeededRng dropout_rng(0x70726e74u);

  std::vector<float> out_frames;
  std::vector<float> out_alignments;
  StopReason reason = StopReason::kFrameLimit;

  for (std::size_t frame = 0; frame < limits.max_frames; ++frame) {
    // Prenet on the previous frame.
    affine_into(prev_frame.data(), kMelBins, weights.at("decoder.prenet.fc0.weight"),
                weights.at("decoder.prenet.fc0.bias"), prenet0.data());
    for (float& v : prenet0) v = std::max(v, 0.0f);
    if (cfg.prenet_dropout > 0.0f) {
      for (float& v : prenet0) {
        if (dropout_rng.next_unit() < cfg.prenet_dropout) v = 0.0f;
      }
    }
    affine_into(prenet0.data(), cfg.prenet_dim, weights.at("decoder.prenet.fc1.weight"),
                weights.at("decoder.prenet.fc1.bias"), prenet1.data());
    for (float& v : prenet1) v = std::max(v, 0.0f);
    if (cfg.prenet_dropout > 0.0f) {
      for (float& v : prenet1) {
        if (dropout_rng.next_unit() < cfg.prenet_dropout) v = 0.0f;
      }
    }

    // Attention RNN over [prenet | previous context].
    std::copy(prenet1.begin(), prenet1.end(), attn_in.begin());
    std::copy(context.begin(), context.end(), attn_in.begin() + cfg.prenet_dim);
    attn_rnn.step(attn_in.data(), attn_in.size());

    // Location-sensitive attention over the conditioned memory.
    affine_into(attn_rnn.h.data(), cfg.attn_rnn_dim, query_w, Tensor{}, query.data());
    for (std::size_t t = 0; t < t_len; ++t) {
      loc_signals.at(t, 0) = attn_weights[t];
      loc_signals.at(t, 1) = attn_cum[t];
    }
    const Tensor loc_feat = nn::conv1d_same(loc_signals, loc_conv);       // [T, loc_filters]
    const Tensor loc_proj = nn::linear(loc_feat, loc_w, Tensor{});        // [T, attn_dim]
    for (std::size_t t = 0; t < t_len; ++t) {
      float e = 0.0f;
      for (std::size_t d = 0; d < cfg.attn_dim; ++d) {
        e += attn_v.data[d] *
             std::tanh(query[d] + memory_proj.at(t, d) + loc_proj.at(t, d));
      }
      energies[t] = e;
    }
    nn::softmax_inplace(energies);
    attn_weights = energies;
    for (std::size_t t = 0; t < t_len; ++t) attn_cum[t] += attn_weights[t];
    out_alignments.insert(out_alignments.end(), attn_weights.begin(), attn_weights.end());

    std::fill(context.begin(), context.end(), 0.0f);
    for (std::size_t t = 0; t < t_len; ++t) {
      const float w = attn_weights[t];
      const float* row = &memory.m.data[t * kConditionDim];
      for (std::size_t d = 0; d < kConditionDim; ++d) context[d] += w * row[d];
    }

    // Decoder RNN over [attention hidden | context].
    std::copy(attn_rnn.h.begin(), attn_rnn.h.end(), dec_in.begin());
    std::copy(context.begin(), context.end(), dec_in.begin() + cfg.attn_rnn_dim);
    dec_rnn.step(dec_in.data(), dec_in.size());

    // Frame and stop projections over [decoder hidden | context].
    std::copy(dec_rnn.h.begin(), dec_rnn.h.end(), proj_in.begin());
    std::copy(context.begin(), context.end(), proj_in.begin() + cfg.dec_rnn_dim);

    const std::size_t base = out_frames.size();
    out_frames.resize(base + kMelBins);
    affine_into(proj_in.data(), proj_in.size(), weights.at("decoder.frame_proj.weight"),
                weights.at("decoder.frame_proj.bias"), &out_frames[base]);
    std::copy_n(&out_frames[base], kMelBins, prev_frame.begin());

    float stop_logit;
    affine_into(proj_in.data(), proj_in.size(), weights.at("decoder.stop_proj.weight"),
                weights.at("decoder.stop_proj.bias"), &stop_logit);

    if (nn::sigmoid(stop_logit) > limits.stop_threshold) {
      reason = StopReason::kStopToken;
      break;
    }
  }

  const std::size_t n_frames = out_frames.size() / kMelBins;
  Tensor frames({n_frames, kMelBins});
  frames.data = std::move(out_frames);

  // Residual postnet over the finished sequence.
  const Tensor residual = postnet_residual(frames, weights);
  for (std::size_t i = 0; i < frames.data.size(); ++i) frames.data[i] += residual.data[i];

  DecodeResult res;
  res.mel.frames = std::move(frames);
  res.stopped_by = reason;
  res.alignments = Tensor({n_frames, t_len});
  res.alignments.data = std::move(out_alignments);
  return res;
}

}  // namespace ppspeech::model
