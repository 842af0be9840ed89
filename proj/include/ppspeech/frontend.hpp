#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ppspeech/lexicon.hpp"

namespace ppspeech::crf {
struct CrfModel;
}

namespace ppspeech::frontend {

struct Token {
  std::string text;
  std::string pos;
  int syllables = 1;
  bool followed_by_punct = false;
};

struct Sentence {
  std::vector<Token> tokens;
  std::set<std::size_t> punct_positions;  // indices immediately followed by punctuation

  std::size_t size() const { return tokens.size(); }
};

// A contiguous token span between intonation-phrase boundaries; the unit of
// parallel synthesis.
struct Phrase {
  std::size_t start = 0;  // inclusive token index
  std::size_t end = 0;    // exclusive token index
  std::size_t index_in_sentence = 0;
  std::size_t total_in_sentence = 1;
};

struct PhonemeSequence {
  std::vector<int> ids;

  std::size_t size() const { return ids.size(); }
};

// Greedy longest-match segmentation against the lexicon. Punctuation
// characters are consumed and recorded on the preceding token; whitespace is
// skipped. Throws UnsegmentableInput when no lexicon word matches.
Sentence tokenize(std::string_view raw, const Lexicon& lexicon);

bool is_punct_char(std::string_view utf8_char);

// Static feature families for the boundary CRF at one token position: text,
// POS, syllable count, punctuation flag, all their pairwise combinations,
// text/POS bigrams, and bucketed word/syllable distances to the previous and
// next punctuation. Distance buckets are exact values 0-8 plus "9+"; missing
// punctuation in a direction yields the BOS/EOS sentinel value.
std::vector<std::string> extract_static_features(const Sentence& sentence, std::size_t position);

// Static features plus the dynamic "words since the previous L3 boundary"
// feature, whose value the caller supplies (predicted history at decode time,
// gold history during training).
std::vector<std::string> extract_features(const Sentence& sentence, std::size_t position,
                                          int words_since_prev_l3);

// Bucket used by every capped distance feature.
std::string distance_bucket(int distance);

// Converts a per-token label sequence (true = L3 boundary) into phrases:
// a phrase ends at every boundary label and at the final token.
std::vector<Phrase> phrases_from_labels(const std::vector<bool>& is_boundary);

// Runs the CRF beam decoder over the sentence and splits it at predicted L3
// labels. Declared here, defined with the CRF (it needs the decoder).
std::vector<Phrase> segment_phrases(const Sentence& sentence, const crf::CrfModel& model);

// Concatenates the lexicon phoneme lists of the phrase's tokens, mapped to
// inventory IDs. Throws UnknownPhoneme when lexicon and inventory disagree.
PhonemeSequence g2p(const Phrase& phrase, const Sentence& sentence, const Lexicon& lexicon,
                    const PhonemeInventory& inventory);

}  // namespace ppspeech::frontend
