#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nrd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on shapes, domains or argument ranges.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file: bad magic, version, truncation or checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File parsed but its embedded self-test does not reproduce.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A simulation produced a non-finite value.
class DivergenceError : public Error {
 public:
  DivergenceError(int step, std::int64_t cell, std::string detail = {});

  int step() const noexcept { return step_; }
  std::int64_t cell() const noexcept { return cell_; }

 private:
  int step_;
  std::int64_t cell_;
};

class TrainingAborted : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(std::string_view)>;

// Installs a process-wide warning sink and returns the previous one. The
// default handler prints to stderr.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace nrd
