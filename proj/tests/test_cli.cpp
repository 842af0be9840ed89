#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ppspeech/acoustic.hpp"
#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

CliResult run_cli(const std::string& args, const std::string& stdin_text = "") {
  const fs::path dir = testutil::temp_dir();
  const fs::path out_path = dir / "cli_stdout.txt";
  const fs::path err_path = dir / "cli_stderr.txt";
  const fs::path in_path = dir / "cli_stdin.txt";
  {
    std::ofstream in(in_path);
    in << stdin_text;
  }
  const std::string cmd = std::string(PPSPEECH_CLI_PATH) + " " + args + " < " +
                          in_path.string() + " > " + out_path.string() + " 2> " +
                          err_path.string();
  const int status = std::system(cmd.c_str());
  CliResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.out = slurp(out_path);
  res.err = slurp(err_path);
  return res;
}

fs::path data_file(const char* name) { return testutil::data_dir() / name; }

// Train once, reuse across cases.
const fs::path& trained_crf() {
  static const fs::path path = [] {
    const fs::path p = testutil::temp_dir() / "cli_model.ppcf";
    const CliResult r = run_cli("train-crf --corpus " + data_file("corpus.tsv").string() +
                                " --out " + p.string());
    REQUIRE(r.exit_code == 0);
    return p;
  }();
  return path;
}

const fs::path& small_weights() {
  static const fs::path path = [] {
    const fs::path p = testutil::temp_dir() / "cli_weights.ppsw";
    const CliResult r = run_cli("init-weights --phones " + data_file("phones.txt").string() +
                                " --preset small --seed 7 --out " + p.string());
    REQUIRE(r.exit_code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("train-crf: separable corpus reports perfect boundary F1") {
  const fs::path model = testutil::temp_dir() / "train_a.ppcf";
  const CliResult r = run_cli("train-crf --corpus " + data_file("corpus.tsv").string() +
                              " --out " + model.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("boundary_f1=1") != std::string::npos);
  CHECK(r.out.find("final_nll=") != std::string::npos);

  // Byte-identical rerun.
  const fs::path model_b = testutil::temp_dir() / "train_b.ppcf";
  const CliResult r2 = run_cli("train-crf --corpus " + data_file("corpus.tsv").string() +
                               " --out " + model_b.string());
  CHECK(r2.exit_code == 0);
  CHECK(slurp(model) == slurp(model_b));
}

TEST_CASE("train-crf: empty corpus exits 2") {
  const fs::path empty = testutil::temp_dir() / "empty_corpus.tsv";
  {
    std::ofstream out(empty);
  }
  const CliResult r = run_cli("train-crf --corpus " + empty.string() + " --out " +
                              (testutil::temp_dir() / "nope.ppcf").string());
  CHECK(r.exit_code == 2);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("train-crf: divergent step exits 3") {
  const CliResult r = run_cli("train-crf --corpus " + data_file("corpus.tsv").string() +
                              " --step 1e12 --epochs 40 --out " +
                              (testutil::temp_dir() / "nope2.ppcf").string());
  CHECK(r.exit_code == 3);
}

TEST_CASE("segment: single word prints one line without a marker") {
  const CliResult r = run_cli("segment --lexicon " + data_file("lexicon.tsv").string() +
                                  " --crf " + trained_crf().string(),
                              "beijing\n");
  CHECK(r.exit_code == 0);
  CHECK(r.out == "beijing\n");
}

TEST_CASE("segment: punctuated sentence splits after the punctuation token") {
  const CliResult r = run_cli("segment --lexicon " + data_file("lexicon.tsv").string() +
                                  " --crf " + trained_crf().string(),
                              "wo ai beijing, ni ai shanghai.\n");
  CHECK(r.exit_code == 0);
  CHECK(r.out == "wo ai beijing |L3|\nni ai shanghai\n");
}

TEST_CASE("segment: unsegmentable character exits 2") {
  const CliResult r = run_cli("segment --lexicon " + data_file("lexicon.tsv").string() +
                                  " --crf " + trained_crf().string(),
                              "wo@ni\n");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("no lexicon match") != std::string::npos);
}

TEST_CASE("init-weights: deterministic per seed, distinct across seeds") {
  const fs::path a = testutil::temp_dir() / "w_seed7_a.ppsw";
  const fs::path b = testutil::temp_dir() / "w_seed7_b.ppsw";
  const fs::path c = testutil::temp_dir() / "w_seed8.ppsw";
  const std::string base = "init-weights --phones " + data_file("phones.txt").string() +
                           " --preset small ";
  const CliResult ra = run_cli(base + "--seed 7 --out " + a.string());
  const CliResult rb = run_cli(base + "--seed 7 --out " + b.string());
  const CliResult rc = run_cli(base + "--seed 8 --out " + c.string());
  CHECK(ra.exit_code == 0);
  CHECK(ra.out.find("tensors=") != std::string::npos);
  CHECK(ra.out.find("parameters=") != std::string::npos);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));

  // The file passes manifest validation on load.
  CHECK_NOTHROW(ppspeech::model::load_weights(a));
}

TEST_CASE("init-weights: PPSPEECH_SEED fallback") {
  const fs::path a = testutil::temp_dir() / "w_env_a.ppsw";
  const fs::path b = testutil::temp_dir() / "w_env_b.ppsw";
  const int status_a = std::system(("env PPSPEECH_SEED=7 " + std::string(PPSPEECH_CLI_PATH) +
                                    " init-weights --phones " + data_file("phones.txt").string() +
                                    " --preset small --out " + a.string() + " > /dev/null 2>&1")
                                       .c_str());
  const int status_b = std::system((std::string(PPSPEECH_CLI_PATH) +
                                    " init-weights --phones " + data_file("phones.txt").string() +
                                    " --preset small --seed 7 --out " + b.string() +
                                    " > /dev/null 2>&1")
                                       .c_str());
  REQUIRE(WEXITSTATUS(status_a) == 0);
  REQUIRE(WEXITSTATUS(status_b) == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("synth: writes mel files and a JSON-lines manifest") {
  const fs::path out_dir = testutil::temp_dir() / "synth_out";
  fs::remove_all(out_dir);
  const CliResult r = run_cli(
      "synth --lexicon " + data_file("lexicon.tsv").string() + " --phones " +
          data_file("phones.txt").string() + " --crf " + trained_crf().string() +
          " --weights " + small_weights().string() +
          " --out " + out_dir.string() + " --workers 2 --frames-per-phoneme 0.5",
      "wo ai beijing, ni ai shanghai.\njintian tianqi hen hao.\n");
  CHECK(r.exit_code == 0);

  const auto mel0 = ppspeech::model::load_mel(out_dir / "sent_0000.mel");
  CHECK(mel0.frames.shape[1] == 80);
  CHECK(mel0.frames.shape[0] >= 1);
  CHECK(fs::exists(out_dir / "sent_0001.mel"));

  const std::string manifest = slurp(out_dir / "manifest.jsonl");
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 2);
  CHECK(manifest.find("\"sentence\":0") != std::string::npos);
  CHECK(manifest.find("\"phrases\":2") != std::string::npos);
  CHECK(manifest.find("\"frames\":") != std::string::npos);
  CHECK(manifest.find("\"stop_reasons\":") != std::string::npos);
  CHECK(manifest.find("\"elapsed_ms\":") != std::string::npos);
}

TEST_CASE("synth: identical mel bytes across worker counts and modes") {
  const std::string text = "wo ai beijing, ni ai shanghai, jintian tianqi hen hao.\n";
  const std::string base = "synth --lexicon " + data_file("lexicon.tsv").string() +
                           " --phones " + data_file("phones.txt").string() + " --crf " +
                           trained_crf().string() + " --weights " + small_weights().string() +
                           " --frames-per-phoneme 0.5 --out ";

  const fs::path w1 = testutil::temp_dir() / "synth_w1";
  const fs::path w8 = testutil::temp_dir() / "synth_w8";
  const fs::path sq = testutil::temp_dir() / "synth_seq";
  for (const auto& d : {w1, w8, sq}) fs::remove_all(d);

  CHECK(run_cli(base + w1.string() + " --workers 1", text).exit_code == 0);
  CHECK(run_cli(base + w8.string() + " --workers 8", text).exit_code == 0);
  CHECK(run_cli(base + sq.string() + " --workers 1 --mode sequential", text).exit_code == 0);

  const std::string bytes_w1 = slurp(w1 / "sent_0000.mel");
  CHECK_FALSE(bytes_w1.empty());
  CHECK(bytes_w1 == slurp(w8 / "sent_0000.mel"));
  CHECK(bytes_w1 == slurp(sq / "sent_0000.mel"));
}

TEST_CASE("synth: ar-baseline mode produces a single-phrase decode") {
  const fs::path out_dir = testutil::temp_dir() / "synth_ar";
  fs::remove_all(out_dir);
  const CliResult r = run_cli(
      "synth --lexicon " + data_file("lexicon.tsv").string() + " --phones " +
          data_file("phones.txt").string() + " --crf " + trained_crf().string() +
          " --weights " + small_weights().string() + " --out " + out_dir.string() +
          " --mode ar-baseline --frames-per-phoneme 0.5",
      "wo ai beijing, ni ai shanghai.\n");
  CHECK(r.exit_code == 0);
  const std::string manifest = slurp(out_dir / "manifest.jsonl");
  CHECK(manifest.find("\"phrases\":1") != std::string::npos);
  const auto mel = ppspeech::model::load_mel(out_dir / "sent_0000.mel");
  CHECK(mel.frames.shape[1] == 80);
}

TEST_CASE("synth: an output mel is accepted back as the reference mel") {
  const fs::path first = testutil::temp_dir() / "synth_refgen";
  const fs::path second = testutil::temp_dir() / "synth_refuse";
  for (const auto& d : {first, second}) fs::remove_all(d);
  const std::string base = "synth --lexicon " + data_file("lexicon.tsv").string() +
                           " --phones " + data_file("phones.txt").string() + " --crf " +
                           trained_crf().string() + " --weights " + small_weights().string() +
                           " --frames-per-phoneme 0.5 --out ";
  CHECK(run_cli(base + first.string(), "wo ai beijing.\n").exit_code == 0);
  const CliResult r = run_cli(base + second.string() + " --ref-mel " +
                                  (first / "sent_0000.mel").string(),
                              "ni ai shanghai.\n");
  CHECK(r.exit_code == 0);
  // A different reference changes the output.
  CHECK(slurp(second / "sent_0000.mel") != slurp(first / "sent_0000.mel"));
}

TEST_CASE("bench: CSV layout and single-phrase speedup band") {
  const fs::path csv_path = testutil::temp_dir() / "bench.csv";
  const CliResult r = run_cli("bench --lexicon " + data_file("lexicon.tsv").string() +
                              " --phones " + data_file("phones.txt").string() +
                              " --groups 1,2 --sentences 1 --repeats 2 --workers 4" +
                              " --frames-per-phoneme 1 --seed 5 --out " + csv_path.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("speedup") != std::string::npos);

  std::ifstream csv(csv_path);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "phrase_count,mode,mean_ms,std_ms,speedup");
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(csv, line)) {
    if (!line.empty()) rows.push_back(line);
  }
  REQUIRE(rows.size() == 4);  // 2 modes x 2 groups
  CHECK(rows[0].rfind("1,ar-baseline,", 0) == 0);
  CHECK(rows[1].rfind("1,parallel,", 0) == 0);
  CHECK(rows[2].rfind("2,ar-baseline,", 0) == 0);
  CHECK(rows[3].rfind("2,parallel,", 0) == 0);

  // Group 1 has no parallel work: speedup within noise of 1.
  std::stringstream row1(rows[1]);
  std::string field;
  for (int i = 0; i < 5; ++i) std::getline(row1, field, ',');
  const double speedup = std::stod(field);
  CHECK(speedup > 0.7);
  CHECK(speedup < 1.3);
}

TEST_CASE("usage errors exit 2, --help exits 0") {
  CHECK(run_cli("synth").exit_code == 2);          // missing required flags
  CHECK(run_cli("no-such-command").exit_code == 2);
  CHECK(run_cli("--help").exit_code == 0);
}
