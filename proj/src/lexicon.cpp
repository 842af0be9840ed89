#include "ppspeech/lexicon.hpp"

#include <fstream>
#include <sstream>

namespace ppspeech::frontend {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace

void Lexicon::add(std::string word, LexiconEntry entry) {
  if (word.empty()) throw IoError("lexicon: empty word");
  if (entry.phonemes.empty()) throw IoError("lexicon: word '" + word + "' has no phonemes");
  if (entry.syllables < 1) throw IoError("lexicon: word '" + word + "' has syllables < 1");
  max_word_bytes_ = std::max(max_word_bytes_, word.size());
  entries_[std::move(word)] = std::move(entry);
}

const LexiconEntry* Lexicon::find(const std::string& word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> Lexicon::words() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [word, entry] : entries_) out.push_back(word);
  return out;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon file: " + path.string());

  Lexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw IoError("lexicon " + path.string() + ":" + std::to_string(line_no) +
                    ": expected 4 tab-separated fields");
    }
    LexiconEntry entry;
    entry.pos = fields[1];
    try {
      entry.syllables = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw IoError("lexicon " + path.string() + ":" + std::to_string(line_no) +
                    ": bad syllable count '" + fields[2] + "'");
    }
    std::istringstream phones(fields[3]);
    std::string ph;
    while (phones >> ph) entry.phonemes.push_back(ph);
    lex.add(fields[0], std::move(entry));
  }
  return lex;
}

void PhonemeInventory::add(std::string phoneme) {
  if (phoneme.empty()) throw IoError("phoneme inventory: empty phoneme");
  if (ids_.count(phoneme)) throw IoError("phoneme inventory: duplicate phoneme '" + phoneme + "'");
  ids_[phoneme] = static_cast<int>(names_.size());
  names_.push_back(std::move(phoneme));
}

int PhonemeInventory::id_of(const std::string& phoneme) const {
  auto it = ids_.find(phoneme);
  if (it == ids_.end()) throw UnknownPhoneme("phoneme not in inventory: '" + phoneme + "'");
  return it->second;
}

const std::string& PhonemeInventory::name_of(int id) const {
  if (id < 0 || id >= static_cast<int>(names_.size())) {
    throw UnknownPhonemeId("phoneme id out of range: " + std::to_string(id));
  }
  return names_[static_cast<std::size_t>(id)];
}

PhonemeInventory PhonemeInventory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open phoneme inventory: " + path.string());

  // Every line is a phoneme and the 0-based line number is its ID, so blank
  // lines are malformed rather than skipped.
  PhonemeInventory inv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw IoError("phoneme inventory " + path.string() + ":" + std::to_string(line_no) +
                    ": empty line");
    }
    inv.add(line);
  }
  return inv;
}

}  // namespace ppspeech::frontend
