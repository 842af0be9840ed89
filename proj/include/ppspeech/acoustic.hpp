#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ppspeech/frontend.hpp"
#include "ppspeech/nn_ops.hpp"
#include "ppspeech/tensor.hpp"

namespace ppspeech::model {

// Interface dimensions of the conditioning pathway. These are part of the
// engine's data contract and are not configurable: every conditioned memory
// row is [512 encoder | 256 context | 128 acoustic] and every mel frame has
// 80 bins.
inline constexpr std::size_t kEncoderDim = 512;
inline constexpr std::size_t kContextDim = 256;
inline constexpr std::size_t kAcousticDim = 128;
inline constexpr std::size_t kConditionDim = kEncoderDim + kContextDim + kAcousticDim;
inline constexpr std::size_t kMelBins = 80;
inline constexpr std::size_t kNumTokens = 10;
inline constexpr std::size_t kRefConvLayers = 6;
inline constexpr std::size_t kRefGruDim = 128;
inline constexpr std::uint32_t kFramePeriodUs = 12500;  // 12.5 ms hop
inline constexpr std::uint32_t kWindowUs = 50000;       // 50 ms analysis window

// Reference training schedule of the original recipe, retained as metadata
// only; this engine performs no training.
struct TrainingSchedule {
  double initial_learning_rate = 1e-3;
  double final_learning_rate = 5e-5;
  double decay_factor = 0.95;
  int decay_every_epochs = 10;
};

// Decoder-internal widths. The defaults follow the standard autoregressive
// attention decoder; the "small" preset keeps the interface dims above but
// shrinks everything internal, which is what benchmarks and most tests use.
struct ModelConfig {
  std::size_t prenet_dim = 256;
  std::size_t attn_rnn_dim = 1024;
  std::size_t dec_rnn_dim = 1024;
  std::size_t attn_dim = 128;
  std::size_t loc_filters = 32;
  std::size_t loc_kernel = 31;
  std::size_t postnet_channels = 512;
  std::size_t postnet_layers = 5;
  std::size_t postnet_kernel = 5;
  std::size_t token_attn_dim = 128;
  std::size_t token_heads = 1;
  float prenet_dropout = 0.0f;  // disabled by default: decoding must be deterministic
  TrainingSchedule training;

  static ModelConfig defaults() { return ModelConfig{}; }
  static ModelConfig small();
  static ModelConfig from_preset(const std::string& name);  // "default" | "small"
};

// Named-tensor store for the full conditional network. The context reference
// encoder's parameters appear once and serve both the previous-phrase and
// next-phrase paths.
struct ModelWeights {
  std::map<std::string, Tensor> tensors;
  ModelConfig config;
  std::size_t vocab_size = 0;

  const Tensor& at(const std::string& name) const;
  std::size_t total_parameters() const;
};

// Manifest of required tensor names/shapes for a configuration. Validated
// exactly on load: no missing, extra, or reshaped tensors.
std::vector<nn::TensorSpec> weight_manifest(const ModelConfig& config, std::size_t vocab_size);

ModelWeights init_model_weights(const ModelConfig& config, std::size_t vocab_size,
                                std::uint64_t seed);

// Binary container: magic "PPSW", version u32, tensor count u32, then per
// tensor (name length u16, name, rank u8, dims u32..., f32 data), all
// little-endian. load_weights derives the configuration from tensor shapes
// and then validates the full manifest.
void save_weights(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

struct EncoderOutput {
  Tensor m;  // [T, 512]
};
struct ContextEmbedding {
  Tensor v;  // [256]
};
struct AcousticEmbedding {
  Tensor v;  // [128]
};
struct ConditionedMemory {
  Tensor m;  // [T, 896]; columns [512, 896) constant across rows
};
struct MelSpectrogram {
  Tensor frames;  // [F, 80]
  std::uint32_t frame_period_us = kFramePeriodUs;
  std::uint32_t window_us = kWindowUs;
};

// Mel container: the "PPSW" tensor container holding a single tensor named
// "mel" of shape [F, 80], followed by a u32 frame-period-microseconds trailer.
void save_mel(const MelSpectrogram& mel, const std::filesystem::path& path);
MelSpectrogram load_mel(const std::filesystem::path& path);

// Phoneme embedding lookup, three 1-D convolutions (512 channels, batch norm,
// ReLU) and one bidirectional LSTM (256 per direction) -> [T, 512].
EncoderOutput encode_phrase(const frontend::PhonemeSequence& phonemes,
                            const ModelWeights& weights);

// Six 3x3/2x2 conv+BN+ReLU stages over the input treated as one channel,
// flattened per time step, a 128-wide GRU whose final state summarizes the
// sequence, then FC + softmax: the output is a 128-d probability vector.
// `prefix` selects the parameter set ("context_ref" or "acoustic_ref"); the
// context prefix is shared by the previous- and next-phrase paths.
Tensor reference_encode(const Tensor& input, const ModelWeights& weights,
                        std::string_view prefix);

// GRU input width of the reference encoder after the conv stack, for an
// input feature width d: 128 * ceil(d / 64).
std::size_t reference_gru_input_width(std::size_t feature_width);

// Attention of a summary query over a small token table. Keys are the raw
// token rows, values are tanh(token rows); with token_heads > 1 the projected
// query/keys and the values are split into equal head slices.
Tensor token_attention(const Tensor& query, const Tensor& table, const Tensor& wq,
                       const Tensor& wk, std::size_t heads = 1);

// Query assembled from the neighbor encodings: [ref(prev) | ref(next)], with
// a zero half for an absent neighbor.
Tensor context_query(const EncoderOutput* prev, const EncoderOutput* next,
                     const ModelWeights& weights);

ContextEmbedding context_embed(const EncoderOutput* prev, const EncoderOutput* next,
                               const ModelWeights& weights);

AcousticEmbedding acoustic_embed(const MelSpectrogram& reference, const ModelWeights& weights);

// Per time step: [encoder row | context embedding | acoustic embedding].
ConditionedMemory condition_concat(const EncoderOutput& enc, const ContextEmbedding& ctx,
                                   const AcousticEmbedding& ac);

enum class StopReason { kStopToken, kFrameLimit };
const char* stop_reason_name(StopReason r);

struct DecoderLimits {
  std::size_t max_frames = 1;
  float stop_threshold = 0.5f;
};

// Generous default frame budget for a phrase.
std::size_t default_max_frames(std::size_t phoneme_count);

struct DecodeResult {
  MelSpectrogram mel;
  StopReason stopped_by = StopReason::kFrameLimit;
  Tensor alignments;  // [F, T] attention weights, one row per decoded frame
};

// Autoregressive decode: prenet on the previous frame, location-sensitive
// attention over the conditioned memory, two LSTM stages, linear projections
// to the 80-d frame and the stop logit, residual postnet over the finished
// sequence. Deterministic for fixed inputs.
DecodeResult decode_mel(const ConditionedMemory& memory, const ModelWeights& weights,
                        const DecoderLimits& limits);

}  // namespace ppspeech::model
