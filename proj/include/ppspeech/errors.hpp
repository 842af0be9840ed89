#pragma once

#include <stdexcept>
#include <string>

namespace ppspeech {

// Base class for every error the engine raises on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A non-punctuation character has no lexicon match at its position.
struct UnsegmentableInput : Error {
  using Error::Error;
};

// A lexicon phoneme string is missing from the phoneme inventory.
struct UnknownPhoneme : Error {
  using Error::Error;
};

// A phoneme ID is outside the embedding table of the loaded weights.
struct UnknownPhonemeId : Error {
  using Error::Error;
};

// Tensor arguments have inconsistent dimensions.
struct ShapeMismatch : Error {
  using Error::Error;
};

// CRF training produced a NaN/inf objective (step size too large).
struct NonFiniteLoss : Error {
  using Error::Error;
};

// Malformed or unreadable data file (lexicon, corpus, model containers).
struct IoError : Error {
  using Error::Error;
};

}  // namespace ppspeech
