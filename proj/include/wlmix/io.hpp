#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wlmix/core.hpp"

namespace wlmix {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws if absent.
  std::size_t column(const std::string& name) const;
  Mat matrix() const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Fixed significant-digit formatting used by display tables ('.' decimal, no grouping).
std::string format_sig(double value, int digits = 6);
/// Round-trippable formatting.
std::string format_full(double value);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace wlmix
