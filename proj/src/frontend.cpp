#include "ppspeech/frontend.hpp"

#include <array>
#include <unordered_set>

namespace ppspeech::frontend {

namespace {

std::size_t utf8_char_len(unsigned char lead) {
  if ((lead & 0x80) == 0x00) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;
}

const std::unordered_set<std::string>& punct_set() {
  static const std::unordered_set<std::string> puncts = {
      ",", ".",  "!",  "?",  ";",  ":",  "、", "，",
      "。", "！", "？", "；", "：", "…",  "—",
  };
  return puncts;
}

bool is_space(std::string_view c) {
  return c == " " || c == "\t" || c == "\n" || c == "\r" || c == "　";
}

}  // namespace

bool is_punct_char(std::string_view utf8_char) {
  return punct_set().count(std::string(utf8_char)) > 0;
}

Sentence tokenize(std::string_view raw, const Lexicon& lexicon) {
  Sentence sentence;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::size_t clen = std::min(utf8_char_len(static_cast<unsigned char>(raw[pos])),
                                      raw.size() - pos);
    const std::string_view ch = raw.substr(pos, clen);

    if (is_space(ch)) {
      pos += clen;
      continue;
    }
    if (is_punct_char(ch)) {
      if (!sentence.tokens.empty()) {
        sentence.tokens.back().followed_by_punct = true;
        sentence.punct_positions.insert(sentence.tokens.size() - 1);
      }
      pos += clen;
      continue;
    }

    // Longest lexicon match starting here.
    const std::size_t max_len = std::min(lexicon.max_word_bytes(), raw.size() - pos);
    const LexiconEntry* entry = nullptr;
    std::size_t match_len = 0;
    for (std::size_t len = max_len; len >= 1; --len) {
      if (const LexiconEntry* e = lexicon.find(std::string(raw.substr(pos, len)))) {
        entry = e;
        match_len = len;
        break;
      }
    }
    if (entry == nullptr) {
      throw UnsegmentableInput("no lexicon match at byte offset " + std::to_string(pos) +
                               " of input '" + std::string(raw) + "'");
    }
    sentence.tokens.push_back(Token{std::string(raw.substr(pos, match_len)), entry->pos,
                                    entry->syllables, false});
    pos += match_len;
  }
  if (sentence.tokens.empty()) {
    throw UnsegmentableInput("input contains no lexical tokens");
  }
  return sentence;
}

std::string distance_bucket(int distance) {
  if (distance >= 9) return "9+";
  return std::to_string(distance);
}

namespace {

struct PunctDistances {
  std::string words_from_prev, words_to_next;
  std::string syls_from_prev, syls_to_next;
};

// Word distances count the tokens between the punctuation mark and the
// current token inclusive of the current one looking backwards ("the i-th
// word after the mark") and inclusive of the mark's carrier looking
// forwards; syllable distances sum syllables over the same token range.
PunctDistances punct_distances(const Sentence& s, std::size_t position) {
  PunctDistances d;
  int prev_punct = -1;
  for (int j = static_cast<int>(position) - 1; j >= 0; --j) {
    if (s.tokens[static_cast<std::size_t>(j)].followed_by_punct) {
      prev_punct = j;
      break;
    }
  }
  if (prev_punct < 0) {
    d.words_from_prev = "BOS";
    d.syls_from_prev = "BOS";
  } else {
    d.words_from_prev = distance_bucket(static_cast<int>(position) - prev_punct);
    int syls = 0;
    for (std::size_t k = static_cast<std::size_t>(prev_punct) + 1; k <= position; ++k) {
      syls += s.tokens[k].syllables;
    }
    d.syls_from_prev = distance_bucket(syls);
  }

  int next_punct = -1;
  for (std::size_t j = position; j < s.size(); ++j) {
    if (s.tokens[j].followed_by_punct) {
      next_punct = static_cast<int>(j);
      break;
    }
  }
  if (next_punct < 0) {
    d.words_to_next = "EOS";
    d.syls_to_next = "EOS";
  } else {
    d.words_to_next = distance_bucket(next_punct - static_cast<int>(position));
    int syls = 0;
    for (std::size_t k = position + 1; k <= static_cast<std::size_t>(next_punct); ++k) {
      syls += s.tokens[k].syllables;
    }
    d.syls_to_next = distance_bucket(syls);
  }
  return d;
}

}  // namespace

std::vector<std::string> extract_static_features(const Sentence& sentence, std::size_t position) {
  const Token& tok = sentence.tokens.at(position);
  const std::string text = tok.text;
  const std::string pos = tok.pos;
  const std::string syl = std::to_string(tok.syllables);
  const std::string punct = tok.followed_by_punct ? "1" : "0";

  std::vector<std::string> feats;
  feats.reserve(20);
  feats.push_back("text=" + text);
  feats.push_back("pos=" + pos);
  feats.push_back("syl=" + syl);
  feats.push_back("punct=" + punct);

  // Pairwise combinations of the four unigram families.
  feats.push_back("text|pos=" + text + "|" + pos);
  feats.push_back("text|syl=" + text + "|" + syl);
  feats.push_back("text|punct=" + text + "|" + punct);
  feats.push_back("pos|syl=" + pos + "|" + syl);
  feats.push_back("pos|punct=" + pos + "|" + punct);
  feats.push_back("syl|punct=" + syl + "|" + punct);

  // Token bigrams with a BOS sentinel.
  const std::string prev_text = position == 0 ? "BOS" : sentence.tokens[position - 1].text;
  const std::string prev_pos = position == 0 ? "BOS" : sentence.tokens[position - 1].pos;
  feats.push_back("text_bi=" + prev_text + "|" + text);
  feats.push_back("pos_bi=" + prev_pos + "|" + pos);

  const PunctDistances d = punct_distances(sentence, position);
  feats.push_back("words_from_prev_punct=" + d.words_from_prev);
  feats.push_back("words_to_next_punct=" + d.words_to_next);
  feats.push_back("syls_from_prev_punct=" + d.syls_from_prev);
  feats.push_back("syls_to_next_punct=" + d.syls_to_next);
  return feats;
}

std::vector<std::string> extract_features(const Sentence& sentence, std::size_t position,
                                          int words_since_prev_l3) {
  std::vector<std::string> feats = extract_static_features(sentence, position);
  feats.push_back("dist_prev_L3=" + distance_bucket(words_since_prev_l3));
  return feats;
}

std::vector<Phrase> phrases_from_labels(const std::vector<bool>& is_boundary) {
  std::vector<Phrase> phrases;
  std::size_t start = 0;
  for (std::size_t i = 0; i < is_boundary.size(); ++i) {
    if (is_boundary[i] || i + 1 == is_boundary.size()) {
      phrases.push_back(Phrase{start, i + 1, phrases.size(), 0});
      start = i + 1;
    }
  }
  for (Phrase& p : phrases) p.total_in_sentence = phrases.size();
  return phrases;
}

PhonemeSequence g2p(const Phrase& phrase, const Sentence& sentence, const Lexicon& lexicon,
                    const PhonemeInventory& inventory) {
  PhonemeSequence seq;
  for (std::size_t i = phrase.start; i < phrase.end; ++i) {
    const std::string& word = sentence.tokens.at(i).text;
    const LexiconEntry* entry = lexicon.find(word);
    if (entry == nullptr) {
      throw UnknownPhoneme("token '" + word + "' missing from lexicon during g2p");
    }
    for (const std::string& ph : entry->phonemes) seq.ids.push_back(inventory.id_of(ph));
  }
  return seq;
}

}  // namespace ppspeech::frontend
