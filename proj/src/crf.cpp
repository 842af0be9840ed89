#include "ppspeech/crf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ppspeech::crf {

namespace {

constexpr int kDistanceCap = 9;  // buckets 0..8 plus "9+"

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double emission(const CrfModel& model, const std::vector<std::string>& features, Label y) {
  double s = 0.0;
  for (const std::string& f : features) s += model.weight(f, y);
  return s;
}

int advance_words_since(int words_since, Label chosen) {
  if (chosen == Label::kL3) return 0;
  return std::min(words_since + 1, kDistanceCap);
}

}  // namespace

const char* label_name(Label l) { return l == Label::kO ? "O" : "L3"; }

Label parse_label(const std::string& s) {
  if (s == "O") return Label::kO;
  if (s == "L3") return Label::kL3;
  throw IoError("unknown CRF label '" + s + "'");
}

FeatureLattice build_lattice(const frontend::Sentence& sentence, std::span<const Label> history) {
  if (history.size() != sentence.size()) {
    throw Error("build_lattice: history length != sentence length");
  }
  FeatureLattice lattice;
  lattice.reserve(sentence.size());
  int words_since = 0;
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    lattice.push_back(frontend::extract_features(sentence, t, words_since));
    words_since = advance_words_since(words_since, history[t]);
  }
  return lattice;
}

FeatureLattice build_static_lattice(const frontend::Sentence& sentence) {
  FeatureLattice lattice;
  lattice.reserve(sentence.size());
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    lattice.push_back(frontend::extract_static_features(sentence, t));
  }
  return lattice;
}

double lattice_path_score(const CrfModel& model, const FeatureLattice& lattice,
                          std::span<const Label> labels) {
  if (labels.size() != lattice.size()) {
    throw Error("lattice_path_score: label length != lattice length");
  }
  double score = 0.0;
  for (std::size_t t = 0; t < lattice.size(); ++t) {
    if (t > 0) {
      score += model.transition[static_cast<int>(labels[t - 1])][static_cast<int>(labels[t])];
    }
    score += emission(model, lattice[t], labels[t]);
  }
  return score;
}

double sequence_score(const CrfModel& model, const frontend::Sentence& sentence,
                      std::span<const Label> labels) {
  return lattice_path_score(model, build_lattice(sentence, labels), labels);
}

ForwardBackwardResult forward_backward(const CrfModel& model, const FeatureLattice& lattice) {
  const std::size_t n = lattice.size();
  ForwardBackwardResult res;
  if (n == 0) return res;

  std::vector<std::array<double, kNumLabels>> emit(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      emit[t][y] = emission(model, lattice[t], static_cast<Label>(y));
    }
  }

  std::vector<std::array<double, kNumLabels>> alpha(n), beta(n);
  alpha[0] = emit[0];
  for (std::size_t t = 1; t < n; ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      double acc = -std::numeric_limits<double>::infinity();
      for (int yp = 0; yp < kNumLabels; ++yp) {
        acc = log_sum_exp(acc, alpha[t - 1][yp] + model.transition[yp][y]);
      }
      alpha[t][y] = acc + emit[t][y];
    }
  }
  beta[n - 1] = {0.0, 0.0};
  for (std::size_t t = n - 1; t-- > 0;) {
    for (int y = 0; y < kNumLabels; ++y) {
      double acc = -std::numeric_limits<double>::infinity();
      for (int yn = 0; yn < kNumLabels; ++yn) {
        acc = log_sum_exp(acc, model.transition[y][yn] + emit[t + 1][yn] + beta[t + 1][yn]);
      }
      beta[t][y] = acc;
    }
  }

  res.log_partition = log_sum_exp(alpha[n - 1][0], alpha[n - 1][1]);
  res.node_marginals.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      res.node_marginals[t][y] = std::exp(alpha[t][y] + beta[t][y] - res.log_partition);
    }
  }
  res.edge_marginals.resize(n > 0 ? n - 1 : 0);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    for (int a = 0; a < kNumLabels; ++a) {
      for (int b = 0; b < kNumLabels; ++b) {
        res.edge_marginals[t][a][b] = std::exp(alpha[t][a] + model.transition[a][b] +
                                               emit[t + 1][b] + beta[t + 1][b] -
                                               res.log_partition);
      }
    }
  }
  return res;
}

NllResult nll_gradient(const CrfModel& model, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw Error("nll_gradient: empty batch");

  NllResult res;
  for (const TrainingExample& ex : batch) {
    if (ex.gold.size() != ex.sentence.size()) {
      throw Error("nll_gradient: gold label length != sentence length");
    }
    const FeatureLattice lattice = build_lattice(ex.sentence, ex.gold);
    const ForwardBackwardResult fb = forward_backward(model, lattice);
    const double gold_score = lattice_path_score(model, lattice, ex.gold);
    res.nll += fb.log_partition - gold_score;

    for (std::size_t t = 0; t < lattice.size(); ++t) {
      const int gold_y = static_cast<int>(ex.gold[t]);
      for (const std::string& f : lattice[t]) {
        auto& g = res.grad.weights[f];
        for (int y = 0; y < kNumLabels; ++y) g[y] += fb.node_marginals[t][y];
        g[gold_y] -= 1.0;
      }
      if (t > 0) {
        for (int a = 0; a < kNumLabels; ++a) {
          for (int b = 0; b < kNumLabels; ++b) {
            res.grad.transition[a][b] += fb.edge_marginals[t - 1][a][b];
          }
        }
        res.grad.transition[static_cast<int>(ex.gold[t - 1])][gold_y] -= 1.0;
      }
    }
  }
  return res;
}

CrfModel train_crf(std::span<const TrainingExample> corpus, const TrainConfig& config) {
  if (corpus.empty()) throw Error("train_crf: empty corpus");

  CrfModel model;
  double step = config.step;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    NllResult r = nll_gradient(model, corpus);
    double l2_term = 0.0;
    for (const auto& [f, w] : model.weights) l2_term += w[0] * w[0] + w[1] * w[1];
    for (int a = 0; a < kNumLabels; ++a) {
      for (int b = 0; b < kNumLabels; ++b) l2_term += model.transition[a][b] * model.transition[a][b];
    }
    const double objective = r.nll + 0.5 * config.l2 * l2_term;
    if (!std::isfinite(objective)) {
      throw NonFiniteLoss("training objective became non-finite at epoch " +
                          std::to_string(epoch));
    }

    for (const auto& [f, g] : r.grad.weights) {
      auto& w = model.weights[f];
      for (int y = 0; y < kNumLabels; ++y) w[y] -= step * (g[y] + config.l2 * w[y]);
    }
    for (int a = 0; a < kNumLabels; ++a) {
      for (int b = 0; b < kNumLabels; ++b) {
        model.transition[a][b] -=
            step * (r.grad.transition[a][b] + config.l2 * model.transition[a][b]);
      }
    }
    if (config.decay_every > 0 && (epoch + 1) % config.decay_every == 0) {
      step *= config.step_decay;
    }
  }

  // Final sanity pass over the trained objective.
  NllResult final_r = nll_gradient(model, corpus);
  if (!std::isfinite(final_r.nll)) throw NonFiniteLoss("final NLL is non-finite");
  return model;
}

std::vector<Label> viterbi_decode(const CrfModel& model, const frontend::Sentence& sentence) {
  const std::size_t n = sentence.size();
  std::vector<Label> out(n, Label::kO);
  if (n == 0) return out;

  const FeatureLattice lattice = build_static_lattice(sentence);
  std::vector<std::array<double, kNumLabels>> delta(n);
  std::vector<std::array<int, kNumLabels>> back(n);

  for (int y = 0; y < kNumLabels; ++y) {
    delta[0][y] = emission(model, lattice[0], static_cast<Label>(y));
    back[0][y] = -1;
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      // Iterating previous labels in order and keeping strict improvements
      // makes ties prefer O.
      int best_prev = 0;
      double best = delta[t - 1][0] + model.transition[0][y];
      for (int yp = 1; yp < kNumLabels; ++yp) {
        const double cand = delta[t - 1][yp] + model.transition[yp][y];
        if (cand > best) {
          best = cand;
          best_prev = yp;
        }
      }
      delta[t][y] = best + emission(model, lattice[t], static_cast<Label>(y));
      back[t][y] = best_prev;
    }
  }

  int last = delta[n - 1][1] > delta[n - 1][0] ? 1 : 0;
  for (std::size_t t = n; t-- > 0;) {
    out[t] = static_cast<Label>(last);
    last = back[t][last];
  }
  return out;
}

namespace {

// Ties between equal-scored hypotheses prefer the lexicographically smaller
// label sequence with O < L3.
bool hypothesis_less(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.labels < b.labels;
}

}  // namespace

std::vector<Label> beam_decode_dynamic(const CrfModel& model, const frontend::Sentence& sentence,
                                       int beam_width) {
  if (beam_width < 1) throw Error("beam_decode_dynamic: beam_width must be >= 1");
  const std::size_t n = sentence.size();
  if (n == 0) return {};

  std::vector<BeamHypothesis> beam = {BeamHypothesis{{}, 0.0, 0}};
  for (std::size_t t = 0; t < n; ++t) {
    // Emission scores per distinct words-since value seen in the beam; the
    // features at (t, ws) are identical across hypotheses.
    std::array<std::array<double, kNumLabels>, kDistanceCap + 1> emit_cache;
    std::array<bool, kDistanceCap + 1> emit_ready{};
    auto emit_at = [&](int ws, int y) {
      if (!emit_ready[ws]) {
        const std::vector<std::string> feats = frontend::extract_features(sentence, t, ws);
        for (int lbl = 0; lbl < kNumLabels; ++lbl) {
          emit_cache[ws][lbl] = emission(model, feats, static_cast<Label>(lbl));
        }
        emit_ready[ws] = true;
      }
      return emit_cache[ws][y];
    };

    std::vector<BeamHypothesis> expanded;
    expanded.reserve(beam.size() * kNumLabels);
    for (const BeamHypothesis& hyp : beam) {
      for (int y = 0; y < kNumLabels; ++y) {
        const Label label = static_cast<Label>(y);
        BeamHypothesis next = hyp;
        if (t > 0) {
          next.score += model.transition[static_cast<int>(hyp.labels.back())][y];
        }
        next.score += emit_at(hyp.words_since_l3, y);
        next.labels.push_back(label);
        next.words_since_l3 = advance_words_since(hyp.words_since_l3, label);
        expanded.push_back(std::move(next));
      }
    }

    // Recombine on (last label, capped words-since-L3): hypotheses sharing
    // that state score every future identically, so keeping the best is exact.
    std::map<std::pair<int, int>, BeamHypothesis> merged;
    for (BeamHypothesis& hyp : expanded) {
      const std::pair<int, int> key{static_cast<int>(hyp.labels.back()), hyp.words_since_l3};
      auto it = merged.find(key);
      if (it == merged.end()) {
        merged.emplace(key, std::move(hyp));
      } else if (hypothesis_less(hyp, it->second)) {
        it->second = std::move(hyp);
      }
    }
    std::vector<BeamHypothesis> survivors;
    survivors.reserve(merged.size());
    for (auto& [key, hyp] : merged) survivors.push_back(std::move(hyp));
    std::sort(survivors.begin(), survivors.end(), hypothesis_less);

    if (static_cast<int>(survivors.size()) > beam_width) {
      if (beam_width >= kNumLabels) {
        // Keep the best hypothesis per last label, then fill by score. This
        // embeds the exact two-state recursion whenever the dynamic feature
        // carries no weight.
        std::vector<BeamHypothesis> kept;
        std::vector<bool> taken(survivors.size(), false);
        for (int y = 0; y < kNumLabels; ++y) {
          for (std::size_t i = 0; i < survivors.size(); ++i) {
            if (!taken[i] && survivors[i].labels.back() == static_cast<Label>(y)) {
              taken[i] = true;
              kept.push_back(survivors[i]);
              break;
            }
          }
        }
        for (std::size_t i = 0; i < survivors.size() && static_cast<int>(kept.size()) < beam_width;
             ++i) {
          if (!taken[i]) {
            taken[i] = true;
            kept.push_back(survivors[i]);
          }
        }
        std::sort(kept.begin(), kept.end(), hypothesis_less);
        survivors = std::move(kept);
      } else {
        survivors.resize(static_cast<std::size_t>(beam_width));
      }
    }
    beam = std::move(survivors);
  }

  const BeamHypothesis* best = &beam.front();
  for (const BeamHypothesis& hyp : beam) {
    if (hypothesis_less(hyp, *best)) best = &hyp;
  }
  return best->labels;
}

void save_crf(const CrfModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open CRF model file for writing: " + path.string());

  auto put_u32 = [&out](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put_f32 = [&put_u32](float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(bits);
  };

  out.write("PPCF", 4);
  put_u32(1);
  for (int a = 0; a < kNumLabels; ++a) {
    for (int b = 0; b < kNumLabels; ++b) put_f32(static_cast<float>(model.transition[a][b]));
  }

  std::vector<std::string> keys;
  keys.reserve(model.weights.size());
  for (const auto& [f, w] : model.weights) keys.push_back(f);
  std::sort(keys.begin(), keys.end());

  put_u32(static_cast<std::uint32_t>(keys.size()));
  for (const std::string& key : keys) {
    put_u32(static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    const auto& w = model.weights.at(key);
    put_f32(static_cast<float>(w[0]));
    put_f32(static_cast<float>(w[1]));
  }
  if (!out) throw IoError("short write to CRF model file: " + path.string());
}

CrfModel load_crf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CRF model file: " + path.string());

  auto get_u32 = [&in, &path]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
      throw IoError("truncated CRF model file: " + path.string());
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  auto get_f32 = [&get_u32]() {
    const std::uint32_t bits = get_u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  };

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PPCF", 4) != 0) {
    throw IoError("not a CRF model file (bad magic): " + path.string());
  }
  const std::uint32_t version = get_u32();
  if (version != 1) {
    throw IoError("unsupported CRF model version " + std::to_string(version));
  }

  CrfModel model;
  for (int a = 0; a < kNumLabels; ++a) {
    for (int b = 0; b < kNumLabels; ++b) model.transition[a][b] = get_f32();
  }
  const std::uint32_t count = get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32();
    std::string key(len, '\0');
    if (!in.read(key.data(), len)) throw IoError("truncated CRF model file: " + path.string());
    const double w0 = get_f32();
    const double w1 = get_f32();
    model.weights[key] = {w0, w1};
  }
  return model;
}

std::vector<TrainingExample> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open training corpus: " + path.string());

  std::vector<TrainingExample> corpus;
  TrainingExample current;
  std::string line;
  std::size_t line_no = 0;

  auto flush_sentence = [&corpus, &current, &path]() {
    if (current.sentence.tokens.empty()) return;
    if (current.gold.back() != Label::kL3) {
      throw IoError("corpus " + path.string() +
                    ": final token of a sentence must be labeled L3");
    }
    corpus.push_back(std::move(current));
    current = TrainingExample{};
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush_sentence();
      continue;
    }
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == '\t') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (fields.size() != 5) {
      throw IoError("corpus " + path.string() + ":" + std::to_string(line_no) +
                    ": expected 5 tab-separated fields");
    }
    frontend::Token tok;
    tok.text = fields[0];
    tok.pos = fields[1];
    try {
      tok.syllables = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw IoError("corpus " + path.string() + ":" + std::to_string(line_no) +
                    ": bad syllable count");
    }
    if (tok.syllables < 1) {
      throw IoError("corpus " + path.string() + ":" + std::to_string(line_no) +
                    ": syllable count must be >= 1");
    }
    if (fields[3] != "0" && fields[3] != "1") {
      throw IoError("corpus " + path.string() + ":" + std::to_string(line_no) +
                    ": punct flag must be 0 or 1");
    }
    tok.followed_by_punct = fields[3] == "1";
    if (tok.followed_by_punct) {
      current.sentence.punct_positions.insert(current.sentence.tokens.size());
    }
    current.sentence.tokens.push_back(std::move(tok));
    current.gold.push_back(parse_label(fields[4]));
  }
  flush_sentence();
  if (corpus.empty()) throw IoError("corpus " + path.string() + " contains no sentences");
  return corpus;
}

BoundaryScores score_boundaries(const CrfModel& model, std::span<const TrainingExample> corpus,
                                int beam_width) {
  std::size_t correct = 0, total = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const TrainingExample& ex : corpus) {
    const std::vector<Label> pred = beam_decode_dynamic(model, ex.sentence, beam_width);
    for (std::size_t t = 0; t < pred.size(); ++t) {
      ++total;
      if (pred[t] == ex.gold[t]) ++correct;
      const bool p = pred[t] == Label::kL3;
      const bool g = ex.gold[t] == Label::kL3;
      if (p && g) ++tp;
      if (p && !g) ++fp;
      if (!p && g) ++fn;
    }
  }
  BoundaryScores s;
  s.token_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
  s.f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 1.0;
  return s;
}

}  // namespace ppspeech::crf

namespace ppspeech::frontend {

std::vector<Phrase> segment_phrases(const Sentence& sentence, const crf::CrfModel& model) {
  if (sentence.tokens.empty()) throw Error("segment_phrases: empty sentence");
  const std::vector<crf::Label> labels =
      crf::beam_decode_dynamic(model, sentence, crf::kDefaultBeamWidth);
  std::vector<bool> boundary(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) boundary[i] = labels[i] == crf::Label::kL3;
  return phrases_from_labels(boundary);
}

}  // namespace ppspeech::frontend
