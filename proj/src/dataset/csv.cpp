#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "loadloop/dataset/dataset.hpp"

namespace loadloop::dataset {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(std::move(cell));
    for (auto& s : cells) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }
    return cells;
}

std::optional<double> parse_number(std::string_view text) {
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

std::optional<std::size_t> RawDataset::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    return std::nullopt;
}

RawDataset parse_csv(std::string_view text, std::string source) {
    std::vector<std::vector<std::string>> rows;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) rows.push_back(split_csv_line(line));
        pos = nl + 1;
    }
    if (rows.empty()) throw DatasetError("empty file: " + source);

    const std::vector<std::string> header = rows.front();
    if (rows.size() < 3) throw DatasetError("dataset needs at least 2 data rows: " + source);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size())
            throw DatasetError("row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                               " cells, header has " + std::to_string(header.size()));
    }

    std::optional<std::size_t> ts_col;
    for (std::size_t c = 0; c < header.size() && !ts_col; ++c) {
        bool all = true;
        for (std::size_t r = 1; r < rows.size() && all; ++r) all = parse_timestamp(rows[r][c]).has_value();
        if (all) ts_col = c;
    }
    if (!ts_col) throw DatasetError("no parseable timestamp column candidate in " + source);

    std::vector<std::size_t> order(rows.size() - 1);
    std::vector<Timestamp> stamps(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) stamps[r - 1] = *parse_timestamp(rows[r][*ts_col]);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return stamps[a] < stamps[b]; });

    std::vector<std::string> duplicates;
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (stamps[order[i]] == stamps[order[i - 1]]) {
            const std::string s = format_timestamp(stamps[order[i]]);
            if (duplicates.empty() || duplicates.back() != s) duplicates.push_back(s);
        }
    }
    if (!duplicates.empty()) {
        std::string msg = "duplicate timestamps in " + source + ":";
        for (const auto& d : duplicates) msg += " " + d;
        throw DatasetError(msg);
    }

    RawDataset data;
    data.source_path = std::move(source);
    data.timestamp_column = header[*ts_col];
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == *ts_col) continue;
        data.columns.push_back(header[c]);
    }
    data.values.assign(data.columns.size(), {});
    data.timestamps.reserve(order.size());
    for (std::size_t idx : order) {
        data.timestamps.push_back(stamps[idx]);
        std::size_t out = 0;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == *ts_col) continue;
            data.values[out++].push_back(parse_number(rows[idx + 1][c]));
        }
    }
    return data;
}

RawDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("dataset file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path.string());
}

}  // namespace loadloop::dataset
