// SPDX-License-Identifier: Apache-2.0
#include "unlearn/param_vector.hpp"

#include <algorithm>
#include <stdexcept>

namespace unlearn {

std::size_t ParamVector::add_segment(std::string name, std::size_t rows, std::size_t cols, double fill) {
  if (has_segment(name)) throw std::invalid_argument("param vector: duplicate segment '" + name + "'");
  const std::size_t offset = values_.size();
  segments_.push_back(Segment{std::move(name), offset, rows, cols});
  values_.resize(offset + rows * cols, fill);
  return offset;
}

const Segment& ParamVector::segment(std::string_view name) const {
  auto it = std::find_if(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.name == name; });
  if (it == segments_.end()) throw std::out_of_range("param vector: no segment '" + std::string(name) + "'");
  return *it;
}

bool ParamVector::has_segment(std::string_view name) const {
  return std::any_of(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.name == name; });
}

}  // namespace unlearn
