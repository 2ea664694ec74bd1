// p13n/errors.h
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Copyright 2026 The p13n-fusion Authors.

#ifndef P13N_ERRORS_H_
#define P13N_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace p13n {

// Base of everything the library throws. The CLI maps ConfigError to exit
// code 1 and DataError (and subclasses) to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameters: out-of-range weights, vocab mismatches, invalid presets.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public DataError {
 public:
  EncodingError(const std::string &book_id, std::size_t offset)
      : DataError("book '" + book_id +
                  "': undecodable byte sequence at offset " +
                  std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class MalformedBoilerplateError : public DataError {
 public:
  using DataError::DataError;
};

class MissingBookError : public DataError {
 public:
  explicit MissingBookError(std::vector<std::string> ids);
  const std::vector<std::string> &book_ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class EmptySplitError : public DataError {
 public:
  using DataError::DataError;
};

// Token id outside the model's vocabulary.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Raised by operations that need more data than a user has; callers filter
// the user out instead of aborting.
class SkipUser : public Error {
 public:
  using Error::Error;
};

}  // namespace p13n

#endif  // P13N_ERRORS_H_
