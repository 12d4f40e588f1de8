#include "advlab/metrics.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "advlab/errors.hpp"

namespace advlab {

namespace {

constexpr const char* kFixedColumns[] = {
    "epoch",        "lr",           "train_nat_acc", "train_rob_acc",
    "test_nat_acc", "test_rob_acc", "mean_adv_loss", "perturb_steps"};
constexpr size_t kFixedCount = sizeof(kFixedColumns) / sizeof(*kFixedColumns);

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& path,
                    size_t line_no) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        throw IoError("metrics: '" + path + "' line " +
                      std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

int64_t parse_int(const std::string& s, const std::string& path,
                  size_t line_no) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        throw IoError("metrics: '" + path + "' line " +
                      std::to_string(line_no) + ": bad integer '" + s + "'");
    return v;
}

}  // namespace

std::vector<int64_t> lsc_histogram(std::span<const double> losses,
                                   std::span<const double> edges) {
    if (edges.size() < 2)
        throw ContractError("lsc_histogram: need at least 2 edges");
    for (size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i - 1] < edges[i]))
            throw ContractError(
                "lsc_histogram: edges must be strictly increasing");
    std::vector<int64_t> counts(edges.size() - 1, 0);
    for (const double l : losses) {
        if (std::isnan(l))
            throw ContractError("lsc_histogram: NaN loss");
        size_t k = 0;
        while (k + 1 < counts.size() && l >= edges[k + 1]) ++k;
        ++counts[k];
    }
    return counts;
}

void write_metrics_csv(const RunRecord& record, const std::string& path) {
    size_t bins = kDefaultLscEdges.size() - 1;
    if (!record.rows.empty()) bins = record.rows.front().lsc_hist.size();
    for (const EpochRow& r : record.rows)
        if (r.lsc_hist.size() != bins)
            throw ContractError(
                "metrics: rows disagree on histogram bin count");

    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("metrics: cannot open '" + path + "' for writing");
    for (size_t c = 0; c < kFixedCount; ++c)
        out << (c ? "," : "") << kFixedColumns[c];
    for (size_t k = 0; k < bins; ++k) out << ",lsc_" << k;
    out << '\n';
    for (const EpochRow& r : record.rows) {
        out << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.train_nat_acc)
            << ',' << fmt(r.train_rob_acc) << ',' << fmt(r.test_nat_acc)
            << ',' << fmt(r.test_rob_acc) << ',' << fmt(r.mean_adv_loss)
            << ',' << fmt(r.perturb_steps);
        for (const int64_t c : r.lsc_hist) out << ',' << c;
        out << '\n';
    }
    if (!out) throw IoError("metrics: write failure on '" + path + "'");
}

RunRecord read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("metrics: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw IoError("metrics: '" + path + "' is empty (no header)");
    const std::vector<std::string> header = split_csv(line);
    if (header.size() < kFixedCount)
        throw IoError("metrics: '" + path + "' header is missing columns");
    for (size_t c = 0; c < kFixedCount; ++c)
        if (header[c] != kFixedColumns[c])
            throw IoError("metrics: '" + path + "' header column " +
                          std::to_string(c) + " is '" + header[c] +
                          "', want '" + kFixedColumns[c] + "'");
    const size_t bins = header.size() - kFixedCount;
    for (size_t k = 0; k < bins; ++k)
        if (header[kFixedCount + k] != "lsc_" + std::to_string(k))
            throw IoError("metrics: '" + path + "' has a malformed lsc_" +
                          std::to_string(k) + " column");

    RunRecord rec;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv(line);
        if (cells.size() != header.size())
            throw IoError("metrics: '" + path + "' line " +
                          std::to_string(line_no) + " has " +
                          std::to_string(cells.size()) + " cells, want " +
                          std::to_string(header.size()));
        EpochRow r;
        r.epoch = parse_int(cells[0], path, line_no);
        r.lr = parse_double(cells[1], path, line_no);
        r.train_nat_acc = parse_double(cells[2], path, line_no);
        r.train_rob_acc = parse_double(cells[3], path, line_no);
        r.test_nat_acc = parse_double(cells[4], path, line_no);
        r.test_rob_acc = parse_double(cells[5], path, line_no);
        r.mean_adv_loss = parse_double(cells[6], path, line_no);
        r.perturb_steps = parse_double(cells[7], path, line_no);
        r.lsc_hist.reserve(bins);
        for (size_t k = 0; k < bins; ++k)
            r.lsc_hist.push_back(
                parse_int(cells[kFixedCount + k], path, line_no));
        rec.rows.push_back(std::move(r));
    }
    return rec;
}

}  // namespace advlab
