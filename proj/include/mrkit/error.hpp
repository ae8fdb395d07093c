// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mrkit {

// Every failure the library reports deliberately. Tests match on the kind,
// the CLI prints name(kind) plus the message.
enum class ErrorKind {
  // corpus
  kMalformedDocument,
  kSpanOutOfBounds,
  kSpanMismatch,
  kMalformedLine,
  // textpipe
  kDimensionMismatch,
  kEmptyDataset,
  // engine
  kShapeMismatch,
  kMaskAllZero,
  kNotScalar,
  kTapeConsumed,
  kIdOutOfRange,
  // core
  kPortMismatch,
  kNonFiniteLoss,
  kVersionMismatch,
  kCorruptCheckpoint,
  kNotClassification,
  // dsl
  kUnknownBlock,
  kBadArity,
  kParseError,
  kUndefinedKey,
  kKeyRedefinition,
  kShapeError,
  kMissingTerminal,
  // zoo
  kNoValidSpan,
  // metrics
  kEmptyGolds,
  kEmptyResults,
  kLengthMismatch,
  // plumbing
  kIoError,
};

const char* error_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mrkit
