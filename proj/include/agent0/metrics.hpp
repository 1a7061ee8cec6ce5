#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "agent0/policy_optim.hpp"

namespace agent0 {

// Append-style CSV writer with a fixed header written on creation.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
    void write_row(const std::vector<std::string>& cells);

  private:
    std::ofstream out_;
    size_t n_columns_;
};

// Per-step optimizer metrics row: step, loss, kl, clip_frac_up,
// clip_frac_down, then the 20 up-clip probability bins.
std::vector<std::string> optim_metrics_columns();
std::vector<std::string> optim_metrics_row(int step, double loss, double kl,
                                           const ClipHistogram& clip);

class JsonlWriter {
  public:
    explicit JsonlWriter(const std::filesystem::path& path);
    void write_line(const std::string& line_with_newline);

  private:
    std::ofstream out_;
};

}  // namespace agent0
