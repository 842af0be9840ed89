#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppspeech/acoustic.hpp"
#include "ppspeech/crf.hpp"
#include "ppspeech/engine.hpp"
#include "ppspeech/frontend.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;    // input/validation errors
constexpr int kExitNumeric = 3;  // numeric failures (non-finite loss)

std::uint64_t seed_from_env_or(std::uint64_t fallback) {
  if (const char* env = std::getenv("PPSPEECH_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ppspeech::Error("PPSPEECH_SEED is not an integer: " + std::string(env));
    }
  }
  return fallback;
}

std::vector<std::string> read_input_lines(const std::string& in_path) {
  std::vector<std::string> lines;
  auto consume = [&lines](std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }
  };
  if (in_path.empty() || in_path == "-") {
    consume(std::cin);
  } else {
    std::ifstream in(in_path);
    if (!in) throw ppspeech::IoError("cannot open input file: " + in_path);
    consume(in);
  }
  return lines;
}

struct TrainArgs {
  std::string corpus, out;
  ppspeech::crf::TrainConfig config;
};

int cmd_train_crf(const TrainArgs& args) {
  const auto corpus = ppspeech::crf::load_corpus(args.corpus);
  const ppspeech::crf::CrfModel model = ppspeech::crf::train_crf(corpus, args.config);
  ppspeech::crf::save_crf(model, args.out);

  const auto final_nll = ppspeech::crf::nll_gradient(model, corpus).nll;
  const auto scores = ppspeech::crf::score_boundaries(model, corpus);
  std::cout << "sentences=" << corpus.size() << " final_nll=" << final_nll
            << " boundary_f1=" << scores.f1 << " token_accuracy=" << scores.token_accuracy
            << "\nmodel written to " << args.out << "\n";
  return kExitOk;
}

struct SegmentArgs {
  std::string lexicon, crf, in;
};

int cmd_segment(const SegmentArgs& args) {
  const auto lexicon = ppspeech::frontend::Lexicon::load(args.lexicon);
  const auto model = ppspeech::crf::load_crf(args.crf);

  for (const std::string& line : read_input_lines(args.in)) {
    const auto sentence = ppspeech::frontend::tokenize(line, lexicon);
    const auto phrases = ppspeech::frontend::segment_phrases(sentence, model);
    for (const auto& phrase : phrases) {
      std::string out;
      for (std::size_t i = phrase.start; i < phrase.end; ++i) {
        if (!out.empty()) out += ' ';
        out += sentence.tokens[i].text;
      }
      // Marker only at predicted internal boundaries; the sentence end closes
      // the final phrase on its own.
      if (phrase.index_in_sentence + 1 < phrase.total_in_sentence) out += " |L3|";
      std::cout << out << '\n';
    }
  }
  return kExitOk;
}

struct InitWeightsArgs {
  std::string phones, out, preset = "default";
  std::uint64_t seed = 0;
};

int cmd_init_weights(const InitWeightsArgs& args) {
  const auto inventory = ppspeech::frontend::PhonemeInventory::load(args.phones);
  const auto config = ppspeech::model::ModelConfig::from_preset(args.preset);
  const auto weights = ppspeech::model::init_model_weights(config, inventory.size(), args.seed);
  ppspeech::model::save_weights(weights, args.out);
  std::cout << "tensors=" << weights.tensors.size()
            << " parameters=" << weights.total_parameters() << "\nweights written to "
            << args.out << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string lexicon, phones, crf, weights, ref_mel, out_dir, in;
  std::string mode = "parallel";
  std::size_t workers = 1;
  std::size_t max_frames = 0;
  double frames_per_phoneme = 30.0;
  float stop_threshold = 0.5f;
};

int cmd_synth(const SynthArgs& args) {
  const auto lexicon = ppspeech::frontend::Lexicon::load(args.lexicon);
  const auto inventory = ppspeech::frontend::PhonemeInventory::load(args.phones);
  const auto crf_model = ppspeech::crf::load_crf(args.crf);
  const auto weights = ppspeech::model::load_weights(args.weights);
  const auto reference = args.ref_mel.empty()
                             ? ppspeech::engine::make_zero_reference_mel()
                             : ppspeech::model::load_mel(args.ref_mel);

  ppspeech::engine::SynthesisOptions options;
  options.worker_count = args.workers;
  options.frames_per_phoneme = args.frames_per_phoneme;
  if (args.max_frames > 0) options.max_frames = args.max_frames;
  options.stop_threshold = args.stop_threshold;

  fs::create_directories(args.out_dir);
  std::ofstream manifest(fs::path(args.out_dir) / "manifest.jsonl");
  if (!manifest) throw ppspeech::IoError("cannot write manifest in " + args.out_dir);

  const auto lines = read_input_lines(args.in);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto sentence = ppspeech::frontend::tokenize(lines[i], lexicon);

    ppspeech::engine::SynthesisResult result;
    if (args.mode == "parallel") {
      result = ppspeech::engine::synthesize_sentence_parallel(
          sentence, crf_model, lexicon, inventory, weights, reference, options);
    } else if (args.mode == "sequential") {
      result = ppspeech::engine::synthesize_sentence_sequential(
          sentence, crf_model, lexicon, inventory, weights, reference, options);
    } else if (args.mode == "ar-baseline") {
      result = ppspeech::engine::synthesize_sentence_ar_baseline(
          sentence, crf_model, lexicon, inventory, weights, reference, options);
    } else {
      throw ppspeech::Error("unknown mode '" + args.mode +
                            "' (expected parallel|sequential|ar-baseline)");
    }

    char name[32];
    std::snprintf(name, sizeof(name), "sent_%04zu.mel", i);
    const fs::path mel_path = fs::path(args.out_dir) / name;
    ppspeech::model::save_mel(result.mel, mel_path);

    json stop_reasons = json::array();
    for (const auto& p : result.phrases) {
      stop_reasons.push_back(ppspeech::model::stop_reason_name(p.stopped_by));
      if (p.stopped_by == ppspeech::model::StopReason::kFrameLimit) {
        std::cerr << "warning: sentence " << i << " hit the frame limit in one phrase\n";
      }
    }
    json row = {{"sentence", i},
                {"phrases", result.phrases.size()},
                {"frames", result.mel.frames.shape[0]},
                {"stop_reasons", stop_reasons},
                {"elapsed_ms", result.wall_ms}};
    manifest << row.dump() << '\n';
    std::cout << name << " frames=" << result.mel.frames.shape[0]
              << " phrases=" << result.phrases.size() << '\n';
  }
  return kExitOk;
}

struct BenchArgs {
  std::string lexicon, phones, weights, out;
  std::string groups = "5,10,20,40";
  ppspeech::engine::BenchmarkConfig config;
};

int cmd_bench(const BenchArgs& args) {
  const auto lexicon = ppspeech::frontend::Lexicon::load(args.lexicon);
  const auto inventory = ppspeech::frontend::PhonemeInventory::load(args.phones);

  ppspeech::engine::BenchmarkConfig config = args.config;
  config.groups.clear();
  std::stringstream groups(args.groups);
  std::string item;
  while (std::getline(groups, item, ',')) {
    if (!item.empty()) config.groups.push_back(std::stoul(item));
  }
  if (config.groups.empty()) throw ppspeech::Error("no benchmark groups given");

  const auto weights =
      args.weights.empty()
          ? ppspeech::model::init_model_weights(ppspeech::model::ModelConfig::small(),
                                                inventory.size(), config.seed)
          : ppspeech::model::load_weights(args.weights);

  const auto report = ppspeech::engine::run_benchmark(config, weights, lexicon, inventory);
  std::ofstream out(args.out);
  if (!out) throw ppspeech::IoError("cannot write benchmark CSV: " + args.out);
  out << report.to_csv();
  std::cout << report.to_table();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phrase-parallel text-to-speech inference engine"};
  app.require_subcommand(1);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train-crf", "Train the phrase boundary CRF");
  train_cmd->add_option("--corpus", train.corpus, "labeled token TSV")->required();
  train_cmd->add_option("--out", train.out, "output model path")->required();
  train_cmd->add_option("--epochs", train.config.epochs);
  train_cmd->add_option("--step", train.config.step);
  train_cmd->add_option("--l2", train.config.l2);

  SegmentArgs segment;
  CLI::App* segment_cmd = app.add_subcommand("segment", "Split text into intonation phrases");
  segment_cmd->add_option("--lexicon", segment.lexicon)->required();
  segment_cmd->add_option("--crf", segment.crf)->required();
  segment_cmd->add_option("--in", segment.in, "input text file (default: stdin)");

  InitWeightsArgs init;
  CLI::App* init_cmd = app.add_subcommand("init-weights", "Write seeded random model weights");
  init_cmd->add_option("--phones", init.phones)->required();
  init_cmd->add_option("--out", init.out)->required();
  init_cmd->add_option("--seed", init.seed);
  init_cmd->add_option("--preset", init.preset, "default|small");

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Synthesize mel-spectrograms");
  synth_cmd->add_option("--lexicon", synth.lexicon)->required();
  synth_cmd->add_option("--phones", synth.phones)->required();
  synth_cmd->add_option("--crf", synth.crf)->required();
  synth_cmd->add_option("--weights", synth.weights)->required();
  synth_cmd->add_option("--ref-mel", synth.ref_mel, "reference mel (default: zero frames)");
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
  synth_cmd->add_option("--in", synth.in, "input text file (default: stdin)");
  synth_cmd->add_option("--workers", synth.workers);
  synth_cmd->add_option("--mode", synth.mode, "parallel|sequential|ar-baseline");
  synth_cmd->add_option("--max-frames", synth.max_frames, "absolute per-phrase frame cap");
  synth_cmd->add_option("--frames-per-phoneme", synth.frames_per_phoneme);
  synth_cmd->add_option("--stop-threshold", synth.stop_threshold);

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Latency benchmark vs the AR baseline");
  bench_cmd->add_option("--lexicon", bench.lexicon)->required();
  bench_cmd->add_option("--phones", bench.phones)->required();
  bench_cmd->add_option("--weights", bench.weights, "weight file (default: seeded small model)");
  bench_cmd->add_option("--out", bench.out, "output CSV path")->required();
  bench_cmd->add_option("--groups", bench.groups, "comma-separated phrase counts");
  bench_cmd->add_option("--sentences", bench.config.sentences_per_group);
  bench_cmd->add_option("--repeats", bench.config.repeats);
  bench_cmd->add_option("--workers", bench.config.worker_count);
  bench_cmd->add_option("--seed", bench.config.seed);
  bench_cmd->add_option("--frames-per-phoneme", bench.config.frames_per_phoneme);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*train_cmd) return cmd_train_crf(train);
    if (*segment_cmd) return cmd_segment(segment);
    if (*init_cmd) {
      if (init_cmd->count("--seed") == 0) init.seed = seed_from_env_or(init.seed);
      return cmd_init_weights(init);
    }
    if (*synth_cmd) return cmd_synth(synth);
    if (*bench_cmd) {
      if (bench_cmd->count("--seed") == 0) bench.config.seed = seed_from_env_or(bench.config.seed);
      return cmd_bench(bench);
    }
  } catch (const ppspeech::NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
