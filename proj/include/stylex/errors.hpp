#pragma once

#include <stdexcept>
#include <string>

namespace stylex {

// Base for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad JSON line, bad lexicon entry, ...).
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input violating a contract (length mismatch, empty
// lexicon, label out of range, ...).
struct ValidationError : Error {
  using Error::Error;
};

// Scalar argument outside its documented range.
struct RangeError : Error {
  using Error::Error;
};

// Word produced zero subwords, or token/word bookkeeping is inconsistent.
struct AlignmentError : Error {
  using Error::Error;
};

// Tensor dimensions incompatible with an operation.
struct ShapeError : Error {
  using Error::Error;
};

// Token id outside the vocabulary.
struct VocabularyError : Error {
  using Error::Error;
};

// Input admits no meaningful result (e.g. a fully masked sequence).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Operation called on an object in the wrong lifecycle state.
struct StateError : Error {
  using Error::Error;
};

// Invalid run/pipeline configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Model and data disagree (vocabulary mismatch, task arity mismatch, ...).
struct CompatibilityError : Error {
  using Error::Error;
};

// Non-finite value or undefined statistic encountered.
struct NumericError : Error {
  using Error::Error;
};

// A multi-stage computation could not proceed (e.g. empty extraction set).
struct PipelineError : Error {
  using Error::Error;
};

// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace stylex
