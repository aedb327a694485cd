#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace iotzsl {

// Error taxonomy used across the library. "validation" covers bad call
// arguments, "config" covers bad run configuration, "state" covers calls
// made before their prerequisites (e.g. predicting with an untrained head),
// "io" covers filesystem and wire failures.
enum class ErrKind { validation, config, state, io };

class Error : public std::runtime_error {
 public:
  Error(ErrKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrKind kind() const { return kind_; }

 private:
  ErrKind kind_;
};

inline const char* err_kind_name(ErrKind k) {
  switch (k) {
    case ErrKind::validation: return "validation";
    case ErrKind::config: return "config";
    case ErrKind::state: return "state";
    case ErrKind::io: return "io";
  }
  return "unknown";
}

inline void warn(const std::string& msg) {
  std::fprintf(stderr, "[iotzsl] warning: %s\n", msg.c_str());
}

}  // namespace iotzsl

#define IOTZSL_REQUIRE(cond, kind, msg)                       \
  do {                                                        \
    if (!(cond)) throw ::iotzsl::Error((kind), (msg));        \
  } while (0)
