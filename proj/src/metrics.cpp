#include "agent0/metrics.hpp"

#include "agent0/common.hpp"

namespace agent0 {

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : out_(path), n_columns_(columns.size()) {
    if (!out_) throw IoError("cannot open metrics file: " + path.string());
    for (size_t i = 0; i < columns.size(); ++i) {
        if (i) out_ << ",";
        out_ << columns[i];
    }
    out_ << "\n";
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
    if (cells.size() != n_columns_)
        throw ShapeMismatch("csv row width does not match the header");
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ",";
        out_ << cells[i];
    }
    out_ << "\n";
    out_.flush();
}

std::vector<std::string> optim_metrics_columns() {
    std::vector<std::string> cols = {"step", "loss", "kl", "clip_frac_up", "clip_frac_down"};
    for (size_t i = 0; i < ClipHistogram::kBins; ++i)
        cols.push_back("upclip_bin_" + std::to_string(i));
    return cols;
}

std::vector<std::string> optim_metrics_row(int step, double loss, double kl,
                                           const ClipHistogram& clip) {
    std::vector<std::string> row;
    row.push_back(std::to_string(step));
    row.push_back(fmt_double(loss));
    row.push_back(fmt_double(kl));
    double denom = clip.total_tokens ? static_cast<double>(clip.total_tokens) : 1.0;
    row.push_back(fmt_double(static_cast<double>(clip.up_clipped) / denom));
    row.push_back(fmt_double(static_cast<double>(clip.down_clipped) / denom));
    for (auto b : clip.up_clip_old_prob_bins) row.push_back(std::to_string(b));
    return row;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw IoError("cannot open record file: " + path.string());
}

void JsonlWriter::write_line(const std::string& line_with_newline) {
    out_ << line_with_newline;
    out_.flush();
}

}  // namespace agent0
