#include "pregate/error.hpp"

namespace pregate {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::RejectOutOfOrder: return "RejectOutOfOrder";
    case ErrorCode::InvalidFormat: return "InvalidFormat";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::FeatureMismatch: return "FeatureMismatch";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::DegeneratePool: return "DegeneratePool";
    case ErrorCode::DivisionByZeroCell: return "DivisionByZeroCell";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DegenerateReport: return "DegenerateReport";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace pregate
