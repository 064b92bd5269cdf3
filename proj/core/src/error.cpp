#include "decompsens/error.hpp"

namespace decompsens {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::collinearity: return "collinearity";
    case ErrorKind::lookup: return "lookup";
    case ErrorKind::domain: return "domain";
    case ErrorKind::no_solution: return "no_solution";
    case ErrorKind::positivity: return "positivity";
    case ErrorKind::search: return "search";
    case ErrorKind::validation: return "validation";
    case ErrorKind::mismatch: return "mismatch";
    case ErrorKind::dependency: return "dependency";
    case ErrorKind::bootstrap: return "bootstrap";
  }
  return "unknown";
}

}  // namespace decompsens
