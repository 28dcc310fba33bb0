#include "fishmerge/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fishmerge {

void validate(const LabeledDataset& data) {
    if (data.features.rows() != static_cast<std::int64_t>(data.labels.size()))
        throw DataError("dataset: feature rows and label count differ");
    for (const int y : data.labels) {
        if (y < 0) throw DataError("dataset: negative class label");
    }
    if (!data.features.array().isFinite().all())
        throw NumericalError("dataset: non-finite feature value");
}

std::vector<int> bucketize_regression(std::span<const double> targets, double lo, double hi,
                                      int n_buckets) {
    if (!(lo < hi)) throw DataError("bucketize: lo must be < hi");
    if (n_buckets < 2) throw DataError("bucketize: n_buckets must be >= 2");
    std::vector<int> labels;
    labels.reserve(targets.size());
    for (const double t : targets) {
        if (!std::isfinite(t)) throw NumericalError("bucketize: non-finite target");
        const double u = static_cast<double>(n_buckets) * (t - lo) / (hi - lo);
        int b = static_cast<int>(std::floor(u));
        b = std::max(0, std::min(n_buckets - 1, b));
        labels.push_back(b);
    }
    return labels;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double parse_real(const std::string& s, std::int64_t lineno) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw DataError("csv line " + std::to_string(lineno) + ": bad real \"" + s + "\"");
    return v;
}

}  // namespace

LabeledDataset load_dataset_csv(const std::filesystem::path& path,
                                std::optional<BucketSpec> buckets) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dataset file: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.size() < 2) throw DataError("csv header needs features and a label column");

    const std::string& last = header.back();
    const bool regression = (last == "target");
    if (!regression && last != "label")
        throw DataError("csv final column must be \"label\" or \"target\", got \"" + last + "\"");
    if (regression && !buckets)
        throw DataError("csv has a \"target\" column; bucketization parameters required");

    const std::int64_t d = static_cast<std::int64_t>(header.size()) - 1;
    for (std::int64_t j = 0; j < d; ++j) {
        if (header[j] != "f" + std::to_string(j))
            throw DataError("csv feature columns must be named f0..f" + std::to_string(d - 1));
    }

    std::vector<double> values;
    std::vector<double> raw_targets;
    std::vector<int> labels;
    std::int64_t n = 0;
    std::int64_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (static_cast<std::int64_t>(cells.size()) != d + 1)
            throw DataError("csv line " + std::to_string(lineno) + ": wrong column count");
        for (std::int64_t j = 0; j < d; ++j) values.push_back(parse_real(cells[j], lineno));
        if (regression) {
            raw_targets.push_back(parse_real(cells[d], lineno));
        } else {
            const double y = parse_real(cells[d], lineno);
            if (y != std::floor(y) || y < 0)
                throw DataError("csv line " + std::to_string(lineno) + ": bad class label");
            labels.push_back(static_cast<int>(y));
        }
        ++n;
    }

    LabeledDataset data;
    data.features.resize(n, d);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) data.features(i, j) = values[i * d + j];
    data.labels = regression
                      ? bucketize_regression(raw_targets, buckets->lo, buckets->hi,
                                             buckets->n_buckets)
                      : std::move(labels);
    data.provenance = path.filename().string();
    validate(data);
    return data;
}

void save_dataset_csv(const LabeledDataset& data, const std::filesystem::path& path) {
    validate(data);
    std::ofstream out(path);
    if (!out) throw DataError("unwritable path: " + path.string());
    for (std::int64_t j = 0; j < data.dim(); ++j) out << "f" << j << ",";
    out << "label\n";
    char buf[64];
    for (std::int64_t i = 0; i < data.n(); ++i) {
        for (std::int64_t j = 0; j < data.dim(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
            out << buf << ",";
        }
        out << data.labels[static_cast<std::size_t>(i)] << "\n";
    }
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace fishmerge
