// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/error.hpp"

namespace sdaudio {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Io: return "io error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Integrity: return "integrity error";
    case ErrorKind::Degenerate: return "degenerate input";
    case ErrorKind::Usage: return "usage error";
  }
  return "error";
}

}  // namespace sdaudio
