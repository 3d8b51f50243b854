#pragma once

#include <stdexcept>
#include <string>

namespace rdmix {

/// Base error carrying the module that raised it. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
  public:
    Error(std::string module, const std::string &what)
        : std::runtime_error(what), module_(std::move(module)) {}

    const std::string &module() const noexcept { return module_; }
    virtual const char *kind() const noexcept { return "error"; }

  private:
    std::string module_;
};

class ConfigError : public Error {
  public:
    using Error::Error;
    const char *kind() const noexcept override { return "config"; }
};

class DataError : public Error {
  public:
    using Error::Error;
    const char *kind() const noexcept override { return "data"; }
};

class NumericError : public Error {
  public:
    using Error::Error;
    const char *kind() const noexcept override { return "numeric"; }
};

} // namespace rdmix
