// SPDX-License-Identifier: Apache-2.0
#include "unlearn/metrics_io.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace unlearn {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_count(std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("metrics: bad integer field '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_real: conversion failed");
  return std::string(buf, ptr);
}

double parse_real(std::string_view text) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return HUGE_VAL;
  if (text == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("metrics: bad numeric field '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> metrics_columns(int num_classes) {
  std::vector<std::string> cols = {"step",         "images_seen",    "loss_psi",     "loss_theta",
                                   "loss_distill", "loss_forget",    "mask_density", "mask_threshold",
                                   "mask_overlap", "ua",             "cover_alignment"};
  for (int c = 0; c < num_classes; ++c) cols.push_back("frechet_" + std::to_string(c));
  cols.push_back("is");
  cols.push_back("precision");
  return cols;
}

std::string metrics_header(int num_classes) {
  std::string out;
  for (const auto& c : metrics_columns(num_classes)) out += (out.empty() ? "" : ",") + c;
  return out;
}

std::string metrics_row(const MetricsRecord& r, int num_classes) {
  if (r.frechet.size() != static_cast<std::size_t>(num_classes)) {
    throw std::invalid_argument("metrics: record has " + std::to_string(r.frechet.size()) +
                                " frechet values, expected " + std::to_string(num_classes));
  }
  std::string out = std::to_string(r.step) + "," + std::to_string(r.images_seen);
  for (double v : {r.loss_psi, r.loss_theta, r.loss_distill, r.loss_forget, r.mask_density, r.mask_threshold,
                   r.mask_overlap, r.ua, r.cover_alignment}) {
    out += "," + format_real(v);
  }
  for (double v : r.frechet) out += "," + format_real(v);
  out += "," + format_real(r.is) + "," + format_real(r.precision);
  return out;
}

MetricsRecord parse_metrics_row(std::string_view line, int num_classes) {
  const auto f = split_csv(line);
  const std::size_t expected = metrics_columns(num_classes).size();
  if (f.size() != expected) {
    throw std::invalid_argument("metrics: row has " + std::to_string(f.size()) + " fields, expected " +
                                std::to_string(expected));
  }
  MetricsRecord r;
  r.step = parse_count(f[0]);
  r.images_seen = parse_count(f[1]);
  double* scalars[] = {&r.loss_psi,     &r.loss_theta,     &r.loss_distill, &r.loss_forget,    &r.mask_density,
                       &r.mask_threshold, &r.mask_overlap, &r.ua,           &r.cover_alignment};
  std::size_t i = 2;
  for (double* p : scalars) *p = parse_real(f[i++]);
  for (int c = 0; c < num_classes; ++c) r.frechet.push_back(parse_real(f[i++]));
  r.is = parse_real(f[i++]);
  r.precision = parse_real(f[i++]);
  return r;
}

MetricsTable read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metrics: empty file " + path.string());
  const auto header = split_csv(line);
  int k = 0;
  for (auto h : header) k += h.starts_with("frechet_") ? 1 : 0;
  if (line != metrics_header(k)) throw std::runtime_error("metrics: unexpected header in " + path.string());
  MetricsTable table{k, {}};
  while (std::getline(in, line)) {
    if (!line.empty()) table.rows.push_back(parse_metrics_row(line, k));
  }
  return table;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& metrics_path, const std::filesystem::path& timing_path,
                             int num_classes)
    : num_classes_(num_classes) {
  const bool existing = std::filesystem::exists(metrics_path) && std::filesystem::file_size(metrics_path) > 0;
  if (existing) {
    const MetricsTable t = read_metrics(metrics_path);
    if (t.num_classes != num_classes) throw std::runtime_error("metrics: class count differs from " + metrics_path.string());
    if (!t.rows.empty()) last_step_ = t.rows.back().step;
  }
  metrics_.open(metrics_path, std::ios::app);
  timing_.open(timing_path, std::ios::app);
  if (!metrics_ || !timing_) throw std::runtime_error("metrics: cannot open " + metrics_path.string() + " for append");
  if (!existing) metrics_ << metrics_header(num_classes) << "\n";
  if (!existing || std::filesystem::file_size(timing_path) == 0) timing_ << "step,wall_ms_per_step\n";
  metrics_.flush();
  timing_.flush();
}

bool MetricsWriter::write(const MetricsRecord& record) {
  if (last_step_ && record.step <= *last_step_) return false;
  metrics_ << metrics_row(record, num_classes_) << "\n";
  timing_ << record.step << "," << format_real(record.wall_ms) << "\n";
  metrics_.flush();
  timing_.flush();
  last_step_ = record.step;
  return true;
}

}  // namespace unlearn
