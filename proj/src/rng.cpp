// SPDX-License-Identifier: Apache-2.0
#include "unlearn/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace unlearn {

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

std::vector<std::uint64_t> Rng::state() const {
  std::stringstream ss;
  ss << engine_;
  std::vector<std::uint64_t> words;
  std::uint64_t w;
  while (ss >> w) words.push_back(w);
  return words;
}

void Rng::set_state(const std::vector<std::uint64_t>& words) {
  std::stringstream ss;
  for (std::size_t i = 0; i < words.size(); ++i) ss << (i ? " " : "") << words[i];
  std::mt19937_64 e;
  ss >> e;
  if (ss.fail()) throw std::invalid_argument("rng: malformed state");
  engine_ = e;
}

}  // namespace unlearn
