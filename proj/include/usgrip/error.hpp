#pragma once

#include <stdexcept>
#include <string>

namespace usgrip {

enum class Errc {
  shape_mismatch,
  numeric,
  missing_cache,
  bad_config,
  empty_dataset,
  bad_magic,
  bad_version,
  truncated,
  bad_layer_graph,
  bad_dtype,
  bad_label,
  bad_split,
  io,
  already_quantized,
  missing_calibration,
  proto,
  bind_failure,
  unreachable,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::shape_mismatch:      return "shape_mismatch";
    case Errc::numeric:             return "numeric";
    case Errc::missing_cache:       return "missing_cache";
    case Errc::bad_config:          return "bad_config";
    case Errc::empty_dataset:       return "empty_dataset";
    case Errc::bad_magic:           return "bad_magic";
    case Errc::bad_version:         return "bad_version";
    case Errc::truncated:           return "truncated";
    case Errc::bad_layer_graph:     return "bad_layer_graph";
    case Errc::bad_dtype:           return "bad_dtype";
    case Errc::bad_label:           return "bad_label";
    case Errc::bad_split:           return "bad_split";
    case Errc::io:                  return "io";
    case Errc::already_quantized:   return "already_quantized";
    case Errc::missing_calibration: return "missing_calibration";
    case Errc::proto:               return "proto";
    case Errc::bind_failure:        return "bind_failure";
    case Errc::unreachable:         return "unreachable";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace usgrip
