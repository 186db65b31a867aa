// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unlearn/synthlab.hpp"

namespace unlearn {

/// Decimal text that parses back to exactly `v` (shortest round-trip form).
std::string format_real(double v);
double parse_real(std::string_view text);

/// Column names for K classes: step, images_seen, the four losses, mask
/// density/threshold/overlap, ua, cover_alignment, frechet_0..frechet_{K-1},
/// is, precision. Wall-clock time goes to the timing sidecar instead so the
/// metrics file is reproducible byte-for-byte.
std::vector<std::string> metrics_columns(int num_classes);
std::string metrics_header(int num_classes);
/// Throws std::invalid_argument when record.frechet has the wrong length.
std::string metrics_row(const MetricsRecord& record, int num_classes);
MetricsRecord parse_metrics_row(std::string_view line, int num_classes);

struct MetricsTable {
  int num_classes = 0;
  std::vector<MetricsRecord> rows;
};
/// Reads a metrics file; the class count is taken from the header.
MetricsTable read_metrics(const std::filesystem::path& path);

/// Append-only writer for metrics.csv plus timing.csv (step, wall_ms).
///
/// Opening an existing file keeps its rows; records whose step is not past
/// the last stored step are skipped, so a resumed run never rewrites a row.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& metrics_path, const std::filesystem::path& timing_path,
                int num_classes);
  /// Returns false when the record was skipped.
  bool write(const MetricsRecord& record);
  std::optional<std::uint64_t> last_step() const { return last_step_; }

 private:
  int num_classes_;
  std::optional<std::uint64_t> last_step_;
  std::ofstream metrics_;
  std::ofstream timing_;
};

}  // namespace unlearn
