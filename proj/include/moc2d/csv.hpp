#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace moc2d {

/// Shortest round-trip decimal for a double; stable across reruns.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Minimal CSV writer. Rows are flushed line by line so output bytes are a
/// pure function of the pushed values.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    void header(const std::vector<std::string>& names) { write_row_(names); }

    void row(const std::vector<std::string>& cells) { write_row_(cells); }

    CsvWriter& cell(const std::string& s) {
        pending_.push_back(s);
        return *this;
    }
    CsvWriter& cell(double v) { return cell(format_double(v)); }
    CsvWriter& cell(long v) { return cell(std::to_string(v)); }
    CsvWriter& cell(int v) { return cell(std::to_string(v)); }
    void end_row() {
        write_row_(pending_);
        pending_.clear();
    }

private:
    void write_row_(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << cells[i];
        }
        os_ << '\n';
    }

    std::ostream& os_;
    std::vector<std::string> pending_;
};

}  // namespace moc2d
