// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>

namespace thdp {

/// Bad data, bad configuration or a contract violation by the caller.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Sampler bookkeeping no longer matches a full recount.
class ConsistencyError : public std::logic_error {
 public:
  explicit ConsistencyError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace thdp
