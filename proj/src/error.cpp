#include "handseg/error.hpp"

namespace handseg {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Shape: return "ShapeError";
    case ErrorKind::Spec: return "SpecError";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::SequenceTooShort: return "SequenceTooShort";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::SingleSubject: return "SingleSubject";
    case ErrorKind::InvalidMor: return "InvalidMor";
    case ErrorKind::InvalidFps: return "InvalidFps";
    case ErrorKind::NoGroundTruth: return "NoGroundTruth";
    case ErrorKind::NoMatches: return "NoMatches";
    case ErrorKind::Internal: return "InternalError";
  }
  return "UnknownError";
}

}  // namespace handseg
