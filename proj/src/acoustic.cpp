#include "ppspeech/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ppspeech::model {

namespace {

constexpr std::size_t kEncoderConvLayers = 3;
constexpr std::size_t kEncoderConvKernel = 5;
constexpr std::size_t kEncoderLstmDim = 256;  // per direction
constexpr std::size_t kRefConvFilters[kRefConvLayers] = {32, 32, 64, 64, 128, 128};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void push_bn(std::vector<nn::TensorSpec>& specs, const std::string& prefix, std::size_t channels) {
  specs.push_back({prefix + ".bn.gamma", {channels}, nn::InitKind::kOnes});
  specs.push_back({prefix + ".bn.beta", {channels}, nn::InitKind::kZeros});
  specs.push_back({prefix + ".bn.mean", {channels}, nn::InitKind::kZeros});
  specs.push_back({prefix + ".bn.var", {channels}, nn::InitKind::kOnes});
}

void push_lstm(std::vector<nn::TensorSpec>& specs, const std::string& prefix, std::size_t d_in,
               std::size_t hidden) {
  specs.push_back({prefix + ".w_ih", {d_in, 4 * hidden}, nn::InitKind::kXavier});
  specs.push_back({prefix + ".w_hh", {hidden, 4 * hidden}, nn::InitKind::kXavier});
  specs.push_back({prefix + ".bias", {4 * hidden}, nn::InitKind::kZeros});
}

void push_gru(std::vector<nn::TensorSpec>& specs, const std::string& prefix, std::size_t d_in,
              std::size_t hidden) {
  specs.push_back({prefix + ".w_ih", {d_in, 3 * hidden}, nn::InitKind::kXavier});
  specs.push_back({prefix + ".w_hh", {hidden, 3 * hidden}, nn::InitKind::kXavier});
  specs.push_back({prefix + ".bias", {3 * hidden}, nn::InitKind::kZeros});
}

void push_fc(std::vector<nn::TensorSpec>& specs, const std::string& prefix, std::size_t d_in,
             std::size_t d_out) {
  specs.push_back({prefix + ".weight", {d_in, d_out}, nn::InitKind::kXavier});
  specs.push_back({prefix + ".bias", {d_out}, nn::InitKind::kZeros});
}

void push_reference_encoder(std::vector<nn::TensorSpec>& specs, const std::string& prefix,
                            std::size_t feature_width) {
  std::size_t c_in = 1;
  for (std::size_t i = 0; i < kRefConvLayers; ++i) {
    const std::size_t c_out = kRefConvFilters[i];
    specs.push_back({prefix + ".conv" + std::to_string(i) + ".weight",
                     {c_out, c_in, 3, 3},
                     nn::InitKind::kXavier});
    push_bn(specs, prefix + ".conv" + std::to_string(i), c_out);
    c_in = c_out;
  }
  push_gru(specs, prefix + ".gru", reference_gru_input_width(feature_width), kRefGruDim);
  push_fc(specs, prefix + ".fc", kRefGruDim, kRefGruDim);
}

nn::GruParams gru_params(const ModelWeights& w, const std::string& prefix) {
  return nn::GruParams{w.at(prefix + ".w_ih"), w.at(prefix + ".w_hh"), w.at(prefix + ".bias")};
}

nn::LstmParams lstm_params(const ModelWeights& w, const std::string& prefix) {
  return nn::LstmParams{w.at(prefix + ".w_ih"), w.at(prefix + ".w_hh"), w.at(prefix + ".bias")};
}

void apply_bn(Tensor& x, std::size_t channel_axis, const ModelWeights& w,
              const std::string& prefix) {
  nn::batch_norm_inference(x, channel_axis, w.at(prefix + ".bn.mean"), w.at(prefix + ".bn.var"),
                           w.at(prefix + ".bn.gamma"), w.at(prefix + ".bn.beta"));
}

}  // namespace

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.prenet_dim = 64;
  c.attn_rnn_dim = 128;
  c.dec_rnn_dim = 128;
  c.attn_dim = 32;
  c.loc_filters = 8;
  c.loc_kernel = 15;
  c.postnet_channels = 32;
  c.postnet_layers = 3;
  c.postnet_kernel = 5;
  c.token_attn_dim = 32;
  return c;
}

ModelConfig ModelConfig::from_preset(const std::string& name) {
  if (name == "default") return defaults();
  if (name == "small") return small();
  throw Error("unknown model preset '" + name + "' (expected default|small)");
}

const Tensor& ModelWeights::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("model weights missing tensor '" + name + "'");
  return it->second;
}

std::size_t ModelWeights::total_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.numel();
  return n;
}

std::size_t reference_gru_input_width(std::size_t feature_width) {
  std::size_t w = feature_width;
  for (std::size_t i = 0; i < kRefConvLayers; ++i) w = ceil_div(w, 2);
  return kRefGruDim * w;
}

std::vector<nn::TensorSpec> weight_manifest(const ModelConfig& config, std::size_t vocab_size) {
  if (vocab_size == 0) throw Error("weight manifest requires a non-empty phoneme inventory");
  if (config.postnet_layers < 2) throw Error("postnet needs at least 2 layers");
  if (config.token_heads == 0 || config.token_attn_dim % config.token_heads != 0 ||
      kContextDim % config.token_heads != 0 || kAcousticDim % config.token_heads != 0) {
    throw Error("token_heads must divide token_attn_dim and both token widths");
  }

  std::vector<nn::TensorSpec> specs;
  specs.push_back({"embedding", {vocab_size, kEncoderDim}, nn::InitKind::kXavier});

  for (std::size_t i = 0; i < kEncoderConvLayers; ++i) {
    const std::string prefix = "encoder.conv" + std::to_string(i);
    specs.push_back({prefix + ".weight",
                     {kEncoderDim, kEncoderDim, kEncoderConvKernel},
                     nn::InitKind::kXavier});
    push_bn(specs, prefix, kEncoderDim);
  }
  push_lstm(specs, "encoder.lstm_fw", kEncoderDim, kEncoderLstmDim);
  push_lstm(specs, "encoder.lstm_bw", kEncoderDim, kEncoderLstmDim);

  push_reference_encoder(specs, "context_ref", kEncoderDim);
  push_reference_encoder(specs, "acoustic_ref", kMelBins);

  specs.push_back({"context_tokens", {kNumTokens, kContextDim}, nn::InitKind::kXavier});
  specs.push_back({"acoustic_tokens", {kNumTokens, kAcousticDim}, nn::InitKind::kXavier});
  specs.push_back({"context_token_attn.wq", {kContextDim, config.token_attn_dim},
                   nn::InitKind::kXavier});
  specs.push_back({"context_token_attn.wk", {kContextDim, config.token_attn_dim},
                   nn::InitKind::kXavier});
  specs.push_back({"acoustic_token_attn.wq", {kAcousticDim, config.token_attn_dim},
                   nn::InitKind::kXavier});
  specs.push_back({"acoustic_token_attn.wk", {kAcousticDim, config.token_attn_dim},
                   nn::InitKind::kXavier});

  push_fc(specs, "decoder.prenet.fc0", kMelBins, config.prenet_dim);
  push_fc(specs, "decoder.prenet.fc1", config.prenet_dim, config.prenet_dim);
  push_lstm(specs, "decoder.attn_rnn", config.prenet_dim + kConditionDim, config.attn_rnn_dim);
  specs.push_back({"decoder.attn.query_w", {config.attn_rnn_dim, config.attn_dim},
                   nn::InitKind::kXavier});
  specs.push_back({"decoder.attn.memory_w", {kConditionDim, config.attn_dim},
                   nn::InitKind::kXavier});
  specs.push_back({"decoder.attn.loc_conv", {config.loc_filters, 2, config.loc_kernel},
                   nn::InitKind::kXavier});
  specs.push_back({"decoder.attn.loc_w", {config.loc_filters, config.attn_dim},
                   nn::InitKind::kXavier});
  specs.push_back({"decoder.attn.v", {config.attn_dim}, nn::InitKind::kXavier});
  push_lstm(specs, "decoder.dec_rnn", config.attn_rnn_dim + kConditionDim, config.dec_rnn_dim);
  push_fc(specs, "decoder.frame_proj", config.dec_rnn_dim + kConditionDim, kMelBins);
  push_fc(specs, "decoder.stop_proj", config.dec_rnn_dim + kConditionDim, 1);

  for (std::size_t i = 0; i < config.postnet_layers; ++i) {
    const std::size_t c_in = i == 0 ? kMelBins : config.postnet_channels;
    const std::size_t c_out = i + 1 == config.postnet_layers ? kMelBins : config.postnet_channels;
    const std::string prefix = "postnet.conv" + std::to_string(i);
    specs.push_back({prefix + ".weight", {c_out, c_in, config.postnet_kernel},
                     nn::InitKind::kXavier});
    push_bn(specs, prefix, c_out);
  }
  return specs;
}

ModelWeights init_model_weights(const ModelConfig& config, std::size_t vocab_size,
                                std::uint64_t seed) {
  ModelWeights w;
  w.config = config;
  w.vocab_size = vocab_size;
  const std::vector<nn::TensorSpec> manifest = weight_manifest(config, vocab_size);
  w.tensors = nn::init_weights(manifest, seed);
  return w;
}

// --- container I/O ----------------------------------------------------------

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("truncated tensor container: " + path.string());
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) {
    throw IoError("truncated tensor container: " + path.string());
  }
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_tensor_f32(std::ostream& out, const Tensor& t) {
  static_assert(sizeof(float) == 4);
  // Data is already little-endian IEEE-754 on every supported target.
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 4));
}

void write_container(std::ostream& out, const std::vector<std::pair<std::string, const Tensor*>>&
                                            tensors) {
  out.write("PPSW", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(tensor->rank()));
    for (std::size_t d : tensor->shape) put_u32(out, static_cast<std::uint32_t>(d));
    write_tensor_f32(out, *tensor);
  }
}

std::map<std::string, Tensor> read_container(std::istream& in,
                                             const std::filesystem::path& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PPSW", 4) != 0) {
    throw IoError("not a tensor container (bad magic): " + path.string());
  }
  const std::uint32_t version = get_u32(in, path);
  if (version != 1) {
    throw IoError("unsupported tensor container version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(in, path);
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = get_u16(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw IoError("truncated tensor container: " + path.string());
    }
    int rank = in.get();
    if (rank < 0) throw IoError("truncated tensor container: " + path.string());
    std::vector<std::size_t> shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) {
      d = get_u32(in, path);
      if (d == 0) throw IoError("zero dimension in tensor '" + name + "': " + path.string());
    }
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * 4))) {
      throw IoError("truncated tensor data for '" + name + "': " + path.string());
    }
    if (!tensors.emplace(std::move(name), std::move(t)).second) {
      throw IoError("duplicate tensor name in container: " + path.string());
    }
  }
  return tensors;
}

}  // namespace

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open weight file for writing: " + path.string());

  // Manifest order keeps the file byte-stable for a given config and seed.
  const std::vector<nn::TensorSpec> manifest =
      weight_manifest(weights.config, weights.vocab_size);
  std::vector<std::pair<std::string, const Tensor*>> ordered;
  ordered.reserve(manifest.size());
  for (const nn::TensorSpec& spec : manifest) {
    ordered.emplace_back(spec.name, &weights.at(spec.name));
  }
  write_container(out, ordered);
  if (!out) throw IoError("short write to weight file: " + path.string());
}

namespace {

ModelConfig config_from_tensors(const std::map<std::string, Tensor>& tensors,
                                const std::filesystem::path& path) {
  auto shape_of = [&](const std::string& name) -> const std::vector<std::size_t>& {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw IoError("weight file " + path.string() + " is missing tensor '" + name + "'");
    }
    return it->second.shape;
  };

  ModelConfig c;
  c.prenet_dim = shape_of("decoder.prenet.fc0.weight").at(1);
  c.attn_rnn_dim = shape_of("decoder.attn_rnn.w_hh").at(0);
  c.dec_rnn_dim = shape_of("decoder.dec_rnn.w_hh").at(0);
  c.attn_dim = shape_of("decoder.attn.query_w").at(1);
  c.loc_filters = shape_of("decoder.attn.loc_conv").at(0);
  c.loc_kernel = shape_of("decoder.attn.loc_conv").at(2);
  c.token_attn_dim = shape_of("context_token_attn.wq").at(1);
  c.postnet_channels = shape_of("postnet.conv0.weight").at(0);
  c.postnet_kernel = shape_of("postnet.conv0.weight").at(2);
  std::size_t layers = 0;
  while (tensors.count("postnet.conv" + std::to_string(layers) + ".weight")) ++layers;
  c.postnet_layers = layers;
  return c;
}

}  // namespace

ModelWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file: " + path.string());

  ModelWeights w;
  w.tensors = read_container(in, path);

  auto emb = w.tensors.find("embedding");
  if (emb == w.tensors.end() || emb->second.rank() != 2) {
    throw IoError("weight file " + path.string() + " has no phoneme embedding table");
  }
  w.vocab_size = emb->second.shape[0];
  w.config = config_from_tensors(w.tensors, path);

  // Exact manifest validation: names and shapes, nothing extra.
  const std::vector<nn::TensorSpec> manifest = weight_manifest(w.config, w.vocab_size);
  if (manifest.size() != w.tensors.size()) {
    throw IoError("weight file " + path.string() + " has " +
                  std::to_string(w.tensors.size()) + " tensors, manifest expects " +
                  std::to_string(manifest.size()));
  }
  for (const nn::TensorSpec& spec : manifest) {
    auto it = w.tensors.find(spec.name);
    if (it == w.tensors.end()) {
      throw IoError("weight file " + path.string() + " is missing tensor '" + spec.name + "'");
    }
    if (it->second.shape != spec.shape) {
      throw IoError("tensor '" + spec.name + "' in " + path.string() +
                    " has an unexpected shape");
    }
  }
  return w;
}

void save_mel(const MelSpectrogram& mel, const std::filesystem::path& path) {
  if (mel.frames.rank() != 2 || mel.frames.shape[1] != kMelBins) {
    throw ShapeMismatch("mel tensor must be [F, 80]");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open mel file for writing: " + path.string());
  write_container(out, {{"mel", &mel.frames}});
  put_u32(out, mel.frame_period_us);
  if (!out) throw IoError("short write to mel file: " + path.string());
}

MelSpectrogram load_mel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mel file: " + path.string());

  std::map<std::string, Tensor> tensors = read_container(in, path);
  auto it = tensors.find("mel");
  if (tensors.size() != 1 || it == tensors.end()) {
    throw IoError("mel file must contain exactly one tensor named 'mel': " + path.string());
  }
  if (it->second.rank() != 2 || it->second.shape[1] != kMelBins) {
    throw IoError("mel tensor in " + path.string() + " is not [F, 80]");
  }
  MelSpectrogram mel;
  mel.frames = std::move(it->second);
  mel.frame_period_us = get_u32(in, path);
  return mel;
}

// --- network forward passes --------------------------------------------------

EncoderOutput encode_phrase(const frontend::PhonemeSequence& phonemes,
                            const ModelWeights& weights) {
  if (phonemes.ids.empty()) throw Error("encode_phrase: empty phoneme sequence");
  const Tensor& table = weights.at("embedding");
  const std::size_t t_len = phonemes.ids.size();

  Tensor x({t_len, kEncoderDim});
  for (std::size_t t = 0; t < t_len; ++t) {
    const int id = phonemes.ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= table.shape[0]) {
      throw UnknownPhonemeId("phoneme id " + std::to_string(id) +
                             " outside embedding table of size " +
                             std::to_string(table.shape[0]));
    }
    std::copy_n(&table.data[static_cast<std::size_t>(id) * kEncoderDim], kEncoderDim,
                &x.data[t * kEncoderDim]);
  }

  for (std::size_t i = 0; i < kEncoderConvLayers; ++i) {
    const std::string prefix = "encoder.conv" + std::to_string(i);
    x = nn::conv1d_same(x, weights.at(prefix + ".weight"));
    apply_bn(x, 1, weights, prefix);
    nn::relu_inplace(x);
  }

  const nn::LstmResult fw =
      nn::lstm_forward(x, lstm_params(weights, "encoder.lstm_fw"),
                       nn::lstm_zero_state(kEncoderLstmDim));
  Tensor reversed({t_len, kEncoderDim});
  for (std::size_t t = 0; t < t_len; ++t) {
    std::copy_n(&x.data[(t_len - 1 - t) * kEncoderDim], kEncoderDim,
                &reversed.data[t * kEncoderDim]);
  }
  const nn::LstmResult bw =
      nn::lstm_forward(reversed, lstm_params(weights, "encoder.lstm_bw"),
                       nn::lstm_zero_state(kEncoderLstmDim));

  EncoderOutput out;
  out.m = Tensor({t_len, kEncoderDim});
  for (std::size_t t = 0; t < t_len; ++t) {
    std::copy_n(&fw.outputs.data[t * kEncoderLstmDim], kEncoderLstmDim,
                &out.m.data[t * kEncoderDim]);
    std::copy_n(&bw.outputs.data[(t_len - 1 - t) * kEncoderLstmDim], kEncoderLstmDim,
                &out.m.data[t * kEncoderDim + kEncoderLstmDim]);
  }
  return out;
}

Tensor reference_encode(const Tensor& input, const ModelWeights& weights,
                        std::string_view prefix) {
  require_shape(input.rank() == 2 && input.shape[0] >= 1, "reference_encode: input [T, D]");
  const std::string p(prefix);

  // One input channel over (time x feature).
  Tensor x({1, input.shape[0], input.shape[1]});
  x.data = input.data;
  for (std::size_t i = 0; i < kRefConvLayers; ++i) {
    const std::string conv = p + ".conv" + std::to_string(i);
    x = nn::conv2d_stride2(x, weights.at(conv + ".weight"));
    apply_bn(x, 0, weights, conv);
    nn::relu_inplace(x);
  }

  // [C, T', D'] -> sequence [T', C*D'], channel-major per step.
  const std::size_t channels = x.shape[0], steps = x.shape[1], feat = x.shape[2];
  Tensor seq({steps, channels * feat});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t f = 0; f < feat; ++f) {
        seq.at(t, c * feat + f) = x.at(c, t, f);
      }
    }
  }

  const nn::GruResult gru =
      nn::gru_forward(seq, gru_params(weights, p + ".gru"), Tensor({kRefGruDim}));
  Tensor out = nn::linear(gru.h_final, weights.at(p + ".fc.weight"), weights.at(p + ".fc.bias"));
  nn::softmax_inplace(out.data);
  return out;
}

Tensor token_attention(const Tensor& query, const Tensor& table, const Tensor& wq,
                       const Tensor& wk, std::size_t heads) {
  require_shape(query.rank() == 1 && table.rank() == 2, "token_attention: query [D], table [N,D]");
  require_shape(heads >= 1, "token_attention: heads >= 1");

  Tensor values = table;
  nn::tanh_inplace(values);

  if (heads == 1) {
    return nn::dot_attention(query, table, values, wq, wk).context;
  }

  // Multi-head variant: split projected query/keys and the values into equal
  // head slices, attend per head, concatenate the head contexts.
  const Tensor q = nn::linear(query, wq, Tensor{});
  const Tensor k = nn::linear(table, wk, Tensor{});
  const std::size_t proj = q.numel();
  const std::size_t n = table.shape[0], d_v = table.shape[1];
  require_shape(proj % heads == 0 && d_v % heads == 0, "token_attention: heads must divide dims");
  const std::size_t hp = proj / heads, hv = d_v / heads;
  const float inv_scale = 1.0f / std::sqrt(static_cast<float>(hp));

  Tensor out({d_v});
  std::vector<float> scores(n);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      float dot = 0.0f;
      for (std::size_t d = 0; d < hp; ++d) dot += q.data[h * hp + d] * k.at(i, h * hp + d);
      scores[i] = dot * inv_scale;
    }
    nn::softmax_inplace(scores);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < hv; ++d) {
        out.data[h * hv + d] += scores[i] * values.at(i, h * hv + d);
      }
    }
  }
  return out;
}

Tensor context_query(const EncoderOutput* prev, const EncoderOutput* next,
                     const ModelWeights& weights) {
  Tensor query({kContextDim});
  if (prev != nullptr) {
    const Tensor e = reference_encode(prev->m, weights, "context_ref");
    std::copy(e.data.begin(), e.data.end(), query.data.begin());
  }
  if (next != nullptr) {
    const Tensor e = reference_encode(next->m, weights, "context_ref");
    std::copy(e.data.begin(), e.data.end(), query.data.begin() + kRefGruDim);
  }
  return query;
}

ContextEmbedding context_embed(const EncoderOutput* prev, const EncoderOutput* next,
                               const ModelWeights& weights) {
  const Tensor query = context_query(prev, next, weights);
  ContextEmbedding out;
  out.v = token_attention(query, weights.at("context_tokens"),
                          weights.at("context_token_attn.wq"),
                          weights.at("context_token_attn.wk"), weights.config.token_heads);
  return out;
}

AcousticEmbedding acoustic_embed(const MelSpectrogram& reference, const ModelWeights& weights) {
  require_shape(reference.frames.rank() == 2 && reference.frames.shape[1] == kMelBins &&
                    reference.frames.shape[0] >= 1,
                "acoustic_embed: reference mel must be [F, 80]");
  const Tensor query = reference_encode(reference.frames, weights, "acoustic_ref");
  AcousticEmbedding out;
  out.v = token_attention(query, weights.at("acoustic_tokens"),
                          weights.at("acoustic_token_attn.wq"),
                          weights.at("acoustic_token_attn.wk"), weights.config.token_heads);
  return out;
}

ConditionedMemory condition_concat(const EncoderOutput& enc, const ContextEmbedding& ctx,
                                   const AcousticEmbedding& ac) {
  require_shape(enc.m.rank() == 2 && enc.m.shape[1] == kEncoderDim,
                "condition_concat: encoder output must be [T, 512]");
  require_shape(ctx.v.numel() == kContextDim, "condition_concat: context embedding must be 256-d");
  require_shape(ac.v.numel() == kAcousticDim, "condition_concat: acoustic embedding must be 128-d");

  const std::size_t t_len = enc.m.shape[0];
  ConditionedMemory mem;
  mem.m = Tensor({t_len, kConditionDim});
  for (std::size_t t = 0; t < t_len; ++t) {
    float* row = &mem.m.data[t * kConditionDim];
    std::copy_n(&enc.m.data[t * kEncoderDim], kEncoderDim, row);
    std::copy(ctx.v.data.begin(), ctx.v.data.end(), row + kEncoderDim);
    std::copy(ac.v.data.begin(), ac.v.data.end(), row + kEncoderDim + kContextDim);
  }
  return mem;
}

const char* stop_reason_name(StopReason r) {
  return r == StopReason::kStopToken ? "STOP_TOKEN" : "FRAME_LIMIT";
}

std::size_t default_max_frames(std::size_t phoneme_count) { return 30 * std::max<std::size_t>(phoneme_count, 1); }

}  // namespace ppspeech::model
