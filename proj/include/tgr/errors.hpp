#pragma once

#include <stdexcept>
#include <string>

namespace tgr {

/// Input violated a documented contract (bad record, bad config, bad argument).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An external transcriber/judge endpoint misbehaved or returned an out-of-contract reply.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File or stream could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tgr
