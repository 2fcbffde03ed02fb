#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cardioclr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes, invalid hyperparameters, impossible configurations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad data handed to an otherwise well-configured operation.
class InputError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. calling backward on a non-scalar).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A forward op produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

class UndefinedAucError : public InputError {
 public:
  using InputError::InputError;
};

// Config-file schema violation; carries the dotted key path of the offending entry.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string key_path, const std::string& what)
      : ConfigError(key_path + ": " + what), key_path_(std::move(key_path)) {}
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

class LoadError : public Error {
 public:
  LoadError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class MalformedHeaderError : public LoadError {
 public:
  using LoadError::LoadError;
};

class TruncatedFileError : public LoadError {
 public:
  using LoadError::LoadError;
};

class MissingFileError : public LoadError {
 public:
  using LoadError::LoadError;
};

class ManifestMismatchError : public LoadError {
 public:
  using LoadError::LoadError;
};

}  // namespace cardioclr
