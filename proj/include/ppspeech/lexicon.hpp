#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ppspeech/errors.hpp"

namespace ppspeech::frontend {

struct LexiconEntry {
  std::vector<std::string> phonemes;
  std::string pos;
  int syllables = 1;
};

// Word dictionary backing tokenization, POS/syllable features and G2P.
class Lexicon {
 public:
  void add(std::string word, LexiconEntry entry);
  const LexiconEntry* find(const std::string& word) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t max_word_bytes() const { return max_word_bytes_; }

  // Deterministically ordered word list (used by the synthetic sentence
  // generator and tests).
  std::vector<std::string> words() const;

  // One entry per line: word<TAB>pos<TAB>syllables<TAB>phoneme phoneme ...
  // '#' starts a comment line.
  static Lexicon load(const std::filesystem::path& path);

 private:
  std::map<std::string, LexiconEntry> entries_;
  std::size_t max_word_bytes_ = 0;
};

// Ordered phoneme table; the 0-based line number of a phoneme is its ID.
class PhonemeInventory {
 public:
  void add(std::string phoneme);
  int id_of(const std::string& phoneme) const;  // throws UnknownPhoneme
  const std::string& name_of(int id) const;     // throws UnknownPhonemeId
  std::size_t size() const { return names_.size(); }

  static PhonemeInventory load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace ppspeech::frontend
