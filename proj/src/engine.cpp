#include "ppspeech/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

namespace ppspeech::engine {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Runs fn(0..task_count) across at most worker_count threads. Tasks write
// only to their own output slots, so scheduling order cannot affect results.
void run_tasks(std::size_t task_count, std::size_t worker_count,
               const std::function<void(std::size_t)>& fn) {
  if (task_count == 0) return;
  const std::size_t workers = std::min(std::max<std::size_t>(worker_count, 1), task_count);
  if (workers == 1) {
    for (std::size_t i = 0; i < task_count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= task_count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct PhraseTaskOutput {
  model::MelSpectrogram mel;
  PhraseStats stats;
};

// Context embed from the window's cached neighbors, acoustic condition,
// decode. The acoustic embedding is shared across the sentence and passed in
// precomputed.
PhraseTaskOutput run_phrase_task(const PhraseWindow& window,
                                 const frontend::PhonemeSequence& phonemes,
                                 const EncoderCache& cache,
                                 const model::AcousticEmbedding& acoustic,
                                 const model::ModelWeights& weights,
                                 const SynthesisOptions& options) {
  const auto t0 = Clock::now();
  const model::EncoderOutput* prev =
      window.prev.empty() ? nullptr : &cache.entries[window.prev.back()];
  const model::EncoderOutput* next =
      window.next.empty() ? nullptr : &cache.entries[window.next.front()];
  const model::ContextEmbedding ctx = model::context_embed(prev, next, weights);
  const model::ConditionedMemory memory =
      model::condition_concat(cache.entries[window.current.front()], ctx, acoustic);
  model::DecodeResult dec =
      model::decode_mel(memory, weights, limits_for(options, phonemes.size()));

  PhraseTaskOutput out;
  out.stats.phonemes = phonemes.size();
  out.stats.frames = dec.mel.frames.shape[0];
  out.stats.stopped_by = dec.stopped_by;
  out.mel = std::move(dec.mel);
  out.stats.task_ms = ms_between(t0, Clock::now());
  return out;
}

SynthesisResult assemble(std::vector<PhraseTaskOutput> parts, Clock::time_point start) {
  std::size_t total_frames = 0;
  for (const PhraseTaskOutput& p : parts) total_frames += p.mel.frames.shape[0];

  SynthesisResult res;
  res.mel.frames = Tensor({total_frames, model::kMelBins});
  std::size_t row = 0;
  for (PhraseTaskOutput& p : parts) {
    std::copy(p.mel.frames.data.begin(), p.mel.frames.data.end(),
              res.mel.frames.data.begin() + static_cast<std::ptrdiff_t>(row * model::kMelBins));
    row += p.mel.frames.shape[0];
    res.phrases.push_back(p.stats);
  }
  res.wall_ms = ms_between(start, Clock::now());
  return res;
}

SynthesisResult synthesize_phrasewise(const frontend::Sentence& sentence,
                                      const crf::CrfModel& crf_model,
                                      const frontend::Lexicon& lexicon,
                                      const frontend::PhonemeInventory& inventory,
                                      const model::ModelWeights& weights,
                                      const model::MelSpectrogram& reference_mel,
                                      const SynthesisOptions& options, bool threaded) {
  const auto start = Clock::now();
  const std::vector<frontend::Phrase> phrases = frontend::segment_phrases(sentence, crf_model);
  const std::size_t n = phrases.size();

  std::vector<frontend::PhonemeSequence> phonemes(n);
  for (std::size_t i = 0; i < n; ++i) {
    phonemes[i] = frontend::g2p(phrases[i], sentence, lexicon, inventory);
  }

  // Inference windows: one current phrase, one neighbor on each side.
  const std::vector<PhraseWindow> windows = build_windows(n, SlidingWindowConfig{1, 1, 1, 1});

  // Every phrase is encoded exactly once; decode tasks only read the cache.
  EncoderCache cache;
  cache.entries.resize(n);
  const std::size_t encode_workers = threaded ? options.worker_count : 1;
  run_tasks(n, encode_workers,
            [&](std::size_t i) { cache.entries[i] = model::encode_phrase(phonemes[i], weights); });

  const model::AcousticEmbedding acoustic = model::acoustic_embed(reference_mel, weights);

  std::vector<PhraseTaskOutput> parts(n);
  const std::size_t decode_workers = threaded ? options.worker_count : 1;
  run_tasks(n, decode_workers, [&](std::size_t i) {
    parts[i] = run_phrase_task(windows[i], phonemes[i], cache, acoustic, weights, options);
  });

  return assemble(std::move(parts), start);
}

}  // namespace

model::DecoderLimits limits_for(const SynthesisOptions& options, std::size_t phoneme_count) {
  model::DecoderLimits limits;
  limits.stop_threshold = options.stop_threshold;
  if (options.max_frames.has_value()) {
    limits.max_frames = std::max<std::size_t>(*options.max_frames, 1);
  } else {
    const double frames = options.frames_per_phoneme * static_cast<double>(phoneme_count);
    limits.max_frames = std::max<std::size_t>(static_cast<std::size_t>(std::llround(frames)), 1);
  }
  return limits;
}

std::vector<PhraseWindow> build_windows(std::size_t phrase_count,
                                        const SlidingWindowConfig& config) {
  if (phrase_count < 1) throw Error("build_windows: phrase_count must be >= 1");
  if (config.current_count < 1 || config.shift < 1) {
    throw Error("build_windows: K and shift must be >= 1");
  }

  std::vector<PhraseWindow> windows;
  for (std::size_t start = 0; start < phrase_count; start += config.shift) {
    const std::size_t cur_end = std::min(start + config.current_count, phrase_count);

    PhraseWindow w;
    const std::size_t prev_begin = start >= config.prev_count ? start - config.prev_count : 0;
    for (std::size_t i = prev_begin; i < start; ++i) w.prev.push_back(i);
    for (std::size_t i = start; i < cur_end; ++i) w.current.push_back(i);
    const std::size_t next_end = std::min(cur_end + config.next_count, phrase_count);
    for (std::size_t i = cur_end; i < next_end; ++i) w.next.push_back(i);
    windows.push_back(std::move(w));

    // The first window whose current block touches the final phrase covers
    // the tail; later starts would only repeat already-covered phrases.
    if (cur_end == phrase_count) break;
  }
  return windows;
}

SynthesisResult synthesize_sentence_parallel(const frontend::Sentence& sentence,
                                             const crf::CrfModel& crf_model,
                                             const frontend::Lexicon& lexicon,
                                             const frontend::PhonemeInventory& inventory,
                                             const model::ModelWeights& weights,
                                             const model::MelSpectrogram& reference_mel,
                                             const SynthesisOptions& options) {
  if (options.worker_count < 1) throw Error("worker_count must be >= 1");
  return synthesize_phrasewise(sentence, crf_model, lexicon, inventory, weights, reference_mel,
                               options, /*threaded=*/true);
}

SynthesisResult synthesize_sentence_sequential(const frontend::Sentence& sentence,
                                               const crf::CrfModel& crf_model,
                                               const frontend::Lexicon& lexicon,
                                               const frontend::PhonemeInventory& inventory,
                                               const model::ModelWeights& weights,
                                               const model::MelSpectrogram& reference_mel,
                                               const SynthesisOptions& options) {
  return synthesize_phrasewise(sentence, crf_model, lexicon, inventory, weights, reference_mel,
                               options, /*threaded=*/false);
}

SynthesisResult synthesize_sentence_ar_baseline(const frontend::Sentence& sentence,
                                                const crf::CrfModel& /*crf_model*/,
                                                const frontend::Lexicon& lexicon,
                                                const frontend::PhonemeInventory& inventory,
                                                const model::ModelWeights& weights,
                                                const model::MelSpectrogram& reference_mel,
                                                const SynthesisOptions& options) {
  const auto start = Clock::now();
  const frontend::Phrase whole{0, sentence.size(), 0, 1};
  const frontend::PhonemeSequence phonemes = frontend::g2p(whole, sentence, lexicon, inventory);

  const model::EncoderOutput enc = model::encode_phrase(phonemes, weights);
  const model::ContextEmbedding ctx = model::context_embed(nullptr, nullptr, weights);
  const model::AcousticEmbedding acoustic = model::acoustic_embed(reference_mel, weights);
  const model::ConditionedMemory memory = model::condition_concat(enc, ctx, acoustic);
  model::DecodeResult dec =
      model::decode_mel(memory, weights, limits_for(options, phonemes.size()));

  SynthesisResult res;
  res.phrases.push_back(PhraseStats{phonemes.size(), dec.mel.frames.shape[0], dec.stopped_by,
                                    ms_between(start, Clock::now())});
  res.mel = std::move(dec.mel);
  res.wall_ms = ms_between(start, Clock::now());
  return res;
}

// --- benchmark ---------------------------------------------------------------

namespace {

struct Samples {
  std::vector<double> values;

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }
  double stddev() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
  }
};

}  // namespace

frontend::Sentence make_synthetic_sentence(std::size_t phrase_count,
                                           const frontend::Lexicon& lexicon, SeededRng& rng) {
  if (phrase_count < 1) throw Error("make_synthetic_sentence: need >= 1 phrase");

  std::vector<std::string> words;
  for (const std::string& w : lexicon.words()) {
    if (!frontend::is_punct_char(w)) words.push_back(w);
  }
  if (words.empty()) throw Error("make_synthetic_sentence: lexicon has no words");

  frontend::Sentence sentence;
  for (std::size_t p = 0; p < phrase_count; ++p) {
    const std::size_t target = 12 + rng.next_below(7);  // 12..18 phonemes
    std::size_t phones = 0;
    while (phones < target) {
      const std::string& word = words[rng.next_below(words.size())];
      const frontend::LexiconEntry* entry = lexicon.find(word);
      sentence.tokens.push_back(
          frontend::Token{word, entry->pos, entry->syllables, false});
      phones += entry->phonemes.size();
    }
    sentence.tokens.back().followed_by_punct = true;
    sentence.punct_positions.insert(sentence.tokens.size() - 1);
  }
  return sentence;
}

crf::CrfModel make_punct_boundary_crf() {
  crf::CrfModel model;
  model.weights["punct=1"] = {-8.0, 8.0};
  model.weights["punct=0"] = {8.0, -8.0};
  return model;
}

model::MelSpectrogram make_zero_reference_mel(std::size_t frames) {
  model::MelSpectrogram mel;
  mel.frames = Tensor({std::max<std::size_t>(frames, 1), model::kMelBins});
  return mel;
}

std::string BenchmarkReport::to_csv() const {
  std::ostringstream out;
  out << "phrase_count,mode,mean_ms,std_ms,speedup\n";
  for (const BenchmarkRow& row : rows) {
    out << row.phrase_count << ',' << row.mode << ',' << row.mean_ms << ',' << row.std_ms << ','
        << row.speedup << '\n';
  }
  return out.str();
}

std::string BenchmarkReport::to_table() const {
  std::ostringstream out;
  out << "phrases  mode         mean_ms    std_ms   speedup\n";
  for (const BenchmarkRow& row : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%7zu  %-11s %9.2f %9.2f %9.2f\n", row.phrase_count,
                  row.mode.c_str(), row.mean_ms, row.std_ms, row.speedup);
    out << buf;
  }
  return out.str();
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config, const model::ModelWeights& weights,
                              const frontend::Lexicon& lexicon,
                              const frontend::PhonemeInventory& inventory) {
  if (config.groups.empty()) throw Error("benchmark: no groups");

  const crf::CrfModel crf_model = make_punct_boundary_crf();
  const model::MelSpectrogram reference = make_zero_reference_mel();

  SynthesisOptions options;
  options.worker_count = config.worker_count;
  options.frames_per_phoneme = config.frames_per_phoneme;
  // Run to the frame limit: per-group work is then a pure function of the
  // synthetic sentences, not of the random weights.
  options.stop_threshold = 1.0f;

  if (config.warmup) {
    SeededRng rng(config.seed ^ 0xabcdef);
    const frontend::Sentence warm = make_synthetic_sentence(1, lexicon, rng);
    synthesize_sentence_ar_baseline(warm, crf_model, lexicon, inventory, weights, reference,
                                    options);
    synthesize_sentence_parallel(warm, crf_model, lexicon, inventory, weights, reference,
                                 options);
  }

  BenchmarkReport report;
  for (const std::size_t group : config.groups) {
    std::vector<frontend::Sentence> sentences;
    for (std::size_t s = 0; s < config.sentences_per_group; ++s) {
      SeededRng rng(config.seed + group * 1000003ull + s);
      sentences.push_back(make_synthetic_sentence(group, lexicon, rng));
    }

    Samples baseline, parallel;
    for (std::size_t rep = 0; rep < config.repeats; ++rep) {
      for (const frontend::Sentence& sentence : sentences) {
        const SynthesisResult b = synthesize_sentence_ar_baseline(
            sentence, crf_model, lexicon, inventory, weights, reference, options);
        baseline.values.push_back(b.wall_ms);
        const SynthesisResult p = synthesize_sentence_parallel(
            sentence, crf_model, lexicon, inventory, weights, reference, options);
        parallel.values.push_back(p.wall_ms);
      }
    }

    const double base_mean = baseline.mean();
    report.rows.push_back(
        BenchmarkRow{group, "ar-baseline", base_mean, baseline.stddev(), 1.0});
    report.rows.push_back(BenchmarkRow{group, "parallel", parallel.mean(), parallel.stddev(),
                                       base_mean / parallel.mean()});
  }
  return report;
}

}  // namespace ppspeech::engine
