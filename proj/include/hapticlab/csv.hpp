// Copyright 2026 The hapticlab Authors
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

#pragma once

#include <charconv>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "hapticlab/geometry.hpp"

namespace hapticlab::csv {

/// Shortest decimal form that parses back to the identical double.
inline std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Builds one CSV line field by field.
class Row {
 public:
  Row& add(double v) { return add_text(number(v)); }
  Row& add(const VectorX& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) add(v[i]);
    return *this;
  }
  Row& add_text(std::string_view s) {
    if (!line_.empty()) line_ += ',';
    line_ += s;
    ++fields_;
    return *this;
  }
  const std::string& str() const { return line_; }
  size_t fields() const { return fields_; }

 private:
  std::string line_;
  size_t fields_ = 0;
};

inline void append_repeated(std::vector<std::string>& cols, const std::string& stem, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) cols.push_back(stem + std::to_string(i));
}

inline std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  return out;
}

}  // namespace hapticlab::csv
