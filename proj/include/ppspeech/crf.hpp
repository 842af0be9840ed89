#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ppspeech/frontend.hpp"

namespace ppspeech::crf {

// Label set is fixed and ordered: O (no boundary), L3 (intonation phrase
// boundary). The serialized order must never change.
enum class Label : int { kO = 0, kL3 = 1 };
inline constexpr int kNumLabels = 2;
inline constexpr int kDefaultBeamWidth = 8;

const char* label_name(Label l);
Label parse_label(const std::string& s);  // "O" or "L3"

// Linear-chain CRF over {O, L3}. Emission weights are keyed by feature
// string; `transition[from][to]` carries the label-bigram weight.
struct CrfModel {
  std::unordered_map<std::string, std::array<double, kNumLabels>> weights;
  std::array<std::array<double, kNumLabels>, kNumLabels> transition{};

  double weight(const std::string& feature, Label label) const {
    auto it = weights.find(feature);
    return it == weights.end() ? 0.0 : it->second[static_cast<int>(label)];
  }
};

struct TrainingExample {
  frontend::Sentence sentence;
  std::vector<Label> gold;  // same length as tokens; final label L3 by convention
};

struct BeamHypothesis {
  std::vector<Label> labels;
  double score = 0.0;
  int words_since_l3 = 0;
};

// Per-position active feature sets. The dynamic "distance from previous L3"
// feature depends on label history, so inference over a fixed lattice is only
// exact when that history is frozen: build_lattice freezes it from a given
// label sequence (teacher forcing during training), build_static_lattice
// omits the dynamic feature entirely.
using FeatureLattice = std::vector<std::vector<std::string>>;
FeatureLattice build_lattice(const frontend::Sentence& sentence, std::span<const Label> history);
FeatureLattice build_static_lattice(const frontend::Sentence& sentence);

// Sum of emission weights for `labels` over the lattice plus transition
// weights between consecutive labels. Accumulation order matches the DP
// recursions so scores compare bit-exactly.
double lattice_path_score(const CrfModel& model, const FeatureLattice& lattice,
                          std::span<const Label> labels);

// Log-space score of a labeling; the dynamic feature is evaluated against the
// words-since-L3 trace implied by `labels` itself.
double sequence_score(const CrfModel& model, const frontend::Sentence& sentence,
                      std::span<const Label> labels);

struct ForwardBackwardResult {
  double log_partition = 0.0;
  std::vector<std::array<double, kNumLabels>> node_marginals;            // [T][label]
  std::vector<std::array<std::array<double, kNumLabels>, kNumLabels>> edge_marginals;  // [T-1][from][to]
};
ForwardBackwardResult forward_backward(const CrfModel& model, const FeatureLattice& lattice);

// Negative log-likelihood of a batch and its gradient (expected minus
// empirical feature counts). The dynamic feature is teacher-forced from each
// example's gold labels.
struct Gradient {
  std::unordered_map<std::string, std::array<double, kNumLabels>> weights;
  std::array<std::array<double, kNumLabels>, kNumLabels> transition{};
};
struct NllResult {
  double nll = 0.0;
  Gradient grad;
};
NllResult nll_gradient(const CrfModel& model, std::span<const TrainingExample> batch);

struct TrainConfig {
  int epochs = 200;
  double step = 0.1;
  double step_decay = 0.9;
  int decay_every = 20;
  double l2 = 1e-3;
};

// Full-batch gradient descent on the L2-regularized NLL. Deterministic given
// the corpus order; throws NonFiniteLoss if the objective leaves the finite
// range.
CrfModel train_crf(std::span<const TrainingExample> corpus, const TrainConfig& config);

// Exact argmax decode with the dynamic feature disabled (static lattice).
// Score ties prefer O, then the earlier position.
std::vector<Label> viterbi_decode(const CrfModel& model, const frontend::Sentence& sentence);

// Beam decode where each hypothesis evaluates the dynamic feature against its
// own predicted history. Hypotheses are recombined on (last label, capped
// words-since-L3) — exact for this feature set — and for beam_width >= 2 the
// beam always retains the best hypothesis per last label, so with zero
// dynamic-feature weights the result equals viterbi_decode. beam_width == 1
// degenerates to greedy decoding.
std::vector<Label> beam_decode_dynamic(const CrfModel& model, const frontend::Sentence& sentence,
                                       int beam_width);

// Binary model container: magic "PPCF", version, transition, sorted
// (feature, weight-pair) records; little-endian u32 / f32 throughout.
void save_crf(const CrfModel& model, const std::filesystem::path& path);
CrfModel load_crf(const std::filesystem::path& path);

// Training corpus: one token per line `text<TAB>pos<TAB>syllables<TAB>
// punct_flag<TAB>label`, blank line between sentences.
std::vector<TrainingExample> load_corpus(const std::filesystem::path& path);

struct BoundaryScores {
  double token_accuracy = 0.0;
  double f1 = 0.0;
};
BoundaryScores score_boundaries(const CrfModel& model, std::span<const TrainingExample> corpus,
                                int beam_width = kDefaultBeamWidth);

}  // namespace ppspeech::crf
