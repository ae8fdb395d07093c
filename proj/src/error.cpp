// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/error.hpp"

namespace mrkit {

const char* error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedDocument: return "MalformedDocument";
    case ErrorKind::kSpanOutOfBounds: return "SpanOutOfBounds";
    case ErrorKind::kSpanMismatch: return "SpanMismatch";
    case ErrorKind::kMalformedLine: return "MalformedLine";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kMaskAllZero: return "MaskAllZero";
    case ErrorKind::kNotScalar: return "NotScalar";
    case ErrorKind::kTapeConsumed: return "TapeConsumed";
    case ErrorKind::kIdOutOfRange: return "IdOutOfRange";
    case ErrorKind::kPortMismatch: return "PortMismatch";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::kNotClassification: return "NotClassification";
    case ErrorKind::kUnknownBlock: return "UnknownBlock";
    case ErrorKind::kBadArity: return "BadArity";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kUndefinedKey: return "UndefinedKey";
    case ErrorKind::kKeyRedefinition: return "KeyRedefinition";
    case ErrorKind::kShapeError: return "ShapeError";
    case ErrorKind::kMissingTerminal: return "MissingTerminal";
    case ErrorKind::kNoValidSpan: return "NoValidSpan";
    case ErrorKind::kEmptyGolds: return "EmptyGolds";
    case ErrorKind::kEmptyResults: return "EmptyResults";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Error";
}

}  // namespace mrkit
