#include "appnet/error.hpp"

namespace appnet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IdOutOfRange: return "IdOutOfRange";
    case ErrorKind::NegativeWeight: return "NegativeWeight";
    case ErrorKind::SelfLoop: return "SelfLoop";
    case ErrorKind::Asymmetric: return "Asymmetric";
    case ErrorKind::NonBinaryWeight: return "NonBinaryWeight";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConflictingTimestamp: return "ConflictingTimestamp";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::MissingTimestamps: return "MissingTimestamps";
  }
  return "Unknown";
}

namespace {
std::string decorate(ErrorKind kind, const std::string& what, std::size_t line) {
  std::string out = to_string(kind);
  if (line > 0) out += " (line " + std::to_string(line) + ")";
  out += ": ";
  out += what;
  return out;
}
}  // namespace

Error::Error(ErrorKind kind, const std::string& what, std::size_t line)
    : std::runtime_error(decorate(kind, what, line)), kind_(kind), line_(line) {}

}  // namespace appnet
