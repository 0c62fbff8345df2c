#include "nrd/errors.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace nrd {

namespace {

std::string divergence_message(int step, std::int64_t cell, const std::string& detail) {
  std::string msg = "divergence at step " + std::to_string(step) + ", cell " + std::to_string(cell);
  if (!detail.empty()) msg += " (" + detail + ")";
  return msg;
}

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler h = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return h;
}

}  // namespace

DivergenceError::DivergenceError(int step, std::int64_t cell, std::string detail)
    : Error(divergence_message(step, cell, detail)), step_(step), cell_(cell) {}

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  return std::exchange(handler_slot(), std::move(handler));
}

void warn(std::string_view message) {
  WarningHandler h;
  {
    std::lock_guard lock(handler_mutex());
    h = handler_slot();
  }
  if (h) h(message);
}

}  // namespace nrd
