#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ppspeech/acoustic.hpp"
#include "ppspeech/crf.hpp"
#include "ppspeech/frontend.hpp"

namespace ppspeech::engine {

// Sliding text window over a sentence's phrases: M previous phrases, K
// current phrases, N next phrases, advancing by `shift`.
struct SlidingWindowConfig {
  std::size_t prev_count = 1;     // M
  std::size_t next_count = 1;     // N
  std::size_t current_count = 1;  // K
  std::size_t shift = 1;
};

struct PhraseWindow {
  std::vector<std::size_t> prev;
  std::vector<std::size_t> current;
  std::vector<std::size_t> next;
};

// Windows start at 0, shift, 2*shift, ... and generation stops with the first
// window whose current block reaches the last phrase; current blocks and
// prev/next context are truncated at the sentence edges.
std::vector<PhraseWindow> build_windows(std::size_t phrase_count,
                                        const SlidingWindowConfig& config);

// Per-sentence store of phrase encodings so each phrase runs the encoder
// exactly once regardless of how many windows reference it.
struct EncoderCache {
  std::vector<model::EncoderOutput> entries;

  const model::EncoderOutput* neighbor(std::size_t index, std::ptrdiff_t offset) const {
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(index) + offset;
    if (i < 0 || i >= static_cast<std::ptrdiff_t>(entries.size())) return nullptr;
    return &entries[static_cast<std::size_t>(i)];
  }
};

struct SynthesisOptions {
  std::size_t worker_count = 1;
  // Per-phrase frame cap: max_frames if set, otherwise
  // round(frames_per_phoneme * phonemes), floor 1.
  std::optional<std::size_t> max_frames;
  double frames_per_phoneme = 30.0;
  float stop_threshold = 0.5f;
};

model::DecoderLimits limits_for(const SynthesisOptions& options, std::size_t phoneme_count);

struct PhraseStats {
  std::size_t phonemes = 0;
  std::size_t frames = 0;
  model::StopReason stopped_by = model::StopReason::kFrameLimit;
  double task_ms = 0.0;
};

struct SynthesisResult {
  model::MelSpectrogram mel;
  std::vector<PhraseStats> phrases;
  double wall_ms = 0.0;
};

// Phrase-parallel synthesis: segment with the CRF, encode every phrase once
// into the cache (encode tasks run on the worker pool), then run one decode
// task per phrase with K=1 / M=N=1 context windows. Output frames are
// concatenated in phrase order and are bit-identical for every worker count.
SynthesisResult synthesize_sentence_parallel(const frontend::Sentence& sentence,
                                             const crf::CrfModel& crf_model,
                                             const frontend::Lexicon& lexicon,
                                             const frontend::PhonemeInventory& inventory,
                                             const model::ModelWeights& weights,
                                             const model::MelSpectrogram& reference_mel,
                                             const SynthesisOptions& options);

// Same pipeline executed phrase by phrase on the calling thread; reference
// output for the parallel path.
SynthesisResult synthesize_sentence_sequential(const frontend::Sentence& sentence,
                                               const crf::CrfModel& crf_model,
                                               const frontend::Lexicon& lexicon,
                                               const frontend::PhonemeInventory& inventory,
                                               const model::ModelWeights& weights,
                                               const model::MelSpectrogram& reference_mel,
                                               const SynthesisOptions& options);

// Sentence-level autoregressive baseline: the whole sentence is one phrase
// (no boundary split, absent neighbors) decoded in a single pass.
SynthesisResult synthesize_sentence_ar_baseline(const frontend::Sentence& sentence,
                                                const crf::CrfModel& crf_model,
                                                const frontend::Lexicon& lexicon,
                                                const frontend::PhonemeInventory& inventory,
                                                const model::ModelWeights& weights,
                                                const model::MelSpectrogram& reference_mel,
                                                const SynthesisOptions& options);

// --- latency benchmark -------------------------------------------------------

struct BenchmarkConfig {
  std::vector<std::size_t> groups = {5, 10, 20, 40};  // phrases per sentence
  std::size_t sentences_per_group = 2;
  std::size_t repeats = 2;
  std::size_t worker_count = 8;
  std::uint64_t seed = 1234;
  // Benchmark decodes run to the frame limit so the workload per group is
  // deterministic; 2 frames per phoneme keeps desk-scale runs short.
  double frames_per_phoneme = 2.0;
  bool warmup = true;
};

struct BenchmarkRow {
  std::size_t phrase_count = 0;
  std::string mode;  // "ar-baseline" | "parallel"
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double speedup = 1.0;  // baseline mean / this mode's mean
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;

  std::string to_csv() const;
  std::string to_table() const;
};

BenchmarkReport run_benchmark(const BenchmarkConfig& config, const model::ModelWeights& weights,
                              const frontend::Lexicon& lexicon,
                              const frontend::PhonemeInventory& inventory);

// Deterministic synthetic sentence with the requested number of phrases, each
// targeting 12-18 phonemes; every phrase-final token is followed by
// punctuation so the punctuation-driven CRF reproduces the intended split.
frontend::Sentence make_synthetic_sentence(std::size_t phrase_count,
                                           const frontend::Lexicon& lexicon, SeededRng& rng);

// Hand-set CRF that fires L3 exactly at punctuation-followed tokens.
crf::CrfModel make_punct_boundary_crf();

// Deterministic reference mel for tests and as the CLI default (all-zero
// frames).
model::MelSpectrogram make_zero_reference_mel(std::size_t frames = 4);

}  // namespace ppspeech::engine
