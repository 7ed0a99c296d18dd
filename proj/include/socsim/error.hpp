//
// Copyright 2026 The socsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include <stdexcept>
#include <string>

namespace socsim {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: invalid rows, unresolved keys, malformed files. Carries a
// locator such as "responses.jsonl:17" when one is known.
class DataError : public Error {
 public:
  DataError(std::string message, std::string locator = {})
      : Error(locator.empty() ? message : locator + ": " + message),
        locator_(std::move(locator)) {}

  const std::string& locator() const noexcept { return locator_; }

 private:
  std::string locator_;
};

// Missing files, bad flags, inconsistent options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Transport-level failure talking to an external service.
class ServiceError : public Error {
 public:
  ServiceError(std::string message, int status = 0)
      : Error(std::move(message)), status_(status) {}

  int status() const noexcept { return status_; }

  // 401/403/404 mean the run is misconfigured; retrying will not help.
  bool fatal() const noexcept {
    return status_ == 401 || status_ == 403 || status_ == 404;
  }

 private:
  int status_;
};

}  // namespace socsim
