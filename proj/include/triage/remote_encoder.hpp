#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/encoder.hpp"
#include "triage/errors.hpp"

namespace triage {

class RemoteEncoderError : public Error {
 public:
  enum class Kind { timeout, http_status, dimension_mismatch, transport, malformed };

  RemoteEncoderError(Kind kind, const std::string& message, int status = 0)
      : Error(message), kind_(kind), status_(status) {}
  Kind kind() const noexcept { return kind_; }
  // HTTP status for Kind::http_status, else 0.
  int status() const noexcept { return status_; }

 private:
  Kind kind_;
  int status_;
};

// Client for an external sentence-encoding service. POSTs
// {"texts": [...]} to `endpoint` (http://host[:port]/path) and expects
// {"vectors": [[...], ...]} with one vector per text, all the same length.
// Vectors are re-normalized locally. Each call uses its own connection, so
// concurrent calls are independent.
std::vector<Embedding> remote_encode(std::string_view endpoint,
                                     std::span<const std::string> texts,
                                     int timeout_ms);

}  // namespace triage
