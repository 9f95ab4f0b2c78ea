#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "loadloop/dataset/dataset.hpp"

namespace loadloop::dataset {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMadToSigma = 1.4826;

double median_of(std::vector<double>& v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    const double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + n / 2);
    return 0.5 * (lo + hi);
}

AnomalyPolicy policy_for(ColumnRole role, const CleaningPolicy& policy) {
    AnomalyPolicy p;
    switch (role) {
        case ColumnRole::load: return policy.load;
        case ColumnRole::temperature:
            p.lower_bound = -60.0;
            p.upper_bound = 60.0;
            return p;
        case ColumnRole::humidity:
            p.lower_bound = 0.0;
            p.upper_bound = 100.0;
            p.statistical = false;
            return p;
        case ColumnRole::precipitation:
            p.lower_bound = 0.0;
            p.statistical = false;
            return p;
        default:
            p.lower_bound.reset();
            p.statistical = false;
            return p;
    }
}

}  // namespace

std::vector<bool> detect_anomalies(std::span<const double> series, const AnomalyPolicy& policy) {
    const std::size_t n = series.size();
    std::vector<bool> mask(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = series[i];
        if (std::isnan(x)) continue;
        if ((policy.lower_bound && x < *policy.lower_bound) || (policy.upper_bound && x > *policy.upper_bound))
            mask[i] = true;
    }
    if (!policy.statistical || n < policy.min_statistical_length || policy.window < 2) return mask;

    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(policy.window), n);
    std::vector<double> win;
    std::vector<double> dev;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(series[i]) || mask[i]) continue;
        // Centred window of w points, shifted inwards at the series edges.
        std::size_t start = i >= w / 2 ? i - w / 2 : 0;
        start = std::min(start, n - w);
        win.clear();
        for (std::size_t j = start; j < start + w; ++j)
            if (!std::isnan(series[j])) win.push_back(series[j]);
        if (win.size() < w / 2) continue;
        const double med = median_of(win);
        dev.clear();
        for (std::size_t j = start; j < start + w; ++j)
            if (!std::isnan(series[j])) dev.push_back(std::abs(series[j] - med));
        const double scale = kMadToSigma * median_of(dev);
        if (std::abs(series[i] - med) > policy.k * scale) mask[i] = true;
    }
    return mask;
}

ImputeResult impute(std::span<const double> series, const ImputePolicy& policy) {
    ImputeResult out;
    std::size_t first = 0;
    while (first < series.size() && std::isnan(series[first])) ++first;
    if (first == series.size()) throw DatasetError("series has no values");
    std::size_t last = series.size();
    while (std::isnan(series[last - 1])) --last;
    out.leading_trimmed = first;
    out.trailing_trimmed = series.size() - last;
    out.values.assign(series.begin() + first, series.begin() + last);

    auto& v = out.values;
    std::size_t i = 0;
    while (i < v.size()) {
        if (!std::isnan(v[i])) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (std::isnan(v[end])) ++end;  // last value is present
        const int gap = static_cast<int>(end - i);
        ++out.gap_histogram[gap];
        if (gap > policy.max_gap)
            throw DatasetError("segment unusable: gap of " + std::to_string(gap) + " hours at offset " +
                               std::to_string(first + i) + " exceeds " + std::to_string(policy.max_gap) +
                               " hours; trim the dataset range");
        if (gap <= policy.linear_max_gap) {
            const double a = v[i - 1];
            const double b = v[end];
            for (std::size_t j = i; j < end; ++j) {
                const double t = static_cast<double>(j - i + 1) / static_cast<double>(gap + 1);
                v[j] = a + t * (b - a);
            }
            out.interpolated += static_cast<std::size_t>(gap);
        } else {
            for (std::size_t j = i; j < end; ++j) {
                double sum = 0.0;
                int used = 0;
                for (std::size_t back = 24; back <= 24 * 7 && back <= j &&
                                            used < policy.same_hour_days;
                     back += 24) {
                    const double candidate = v[j - back];
                    if (std::isnan(candidate)) continue;
                    sum += candidate;
                    ++used;
                }
                if (used == 0)
                    throw DatasetError("segment unusable: no same-hour history for gap at offset " +
                                       std::to_string(first + j) + "; trim the dataset range");
                v[j] = sum / used;
            }
            out.same_hour_filled += static_cast<std::size_t>(gap);
        }
        i = end;
    }
    return out;
}

const std::vector<double>& CleanDataset::load() const {
    const auto* s = find_role(ColumnRole::load);
    if (!s) throw DatasetError("clean dataset has no load column");
    return *s;
}

const std::vector<double>* CleanDataset::find_role(ColumnRole role) const {
    for (std::size_t i = 0; i < roles.size(); ++i)
        if (roles[i] == role) return &values[i];
    return nullptr;
}

std::vector<std::size_t> CleanDataset::columns_with(ColumnRole role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < roles.size(); ++i)
        if (roles[i] == role) out.push_back(i);
    return out;
}

CleanDataset clean(const RawDataset& raw, const ColumnSemantics& semantics, const CleaningPolicy& policy) {
    semantics.validate();
    if (raw.rows() < 2) throw DatasetError("dataset needs at least 2 rows");

    CleanDataset out;
    out.report.rows_resampled_from = raw.rows();

    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < raw.columns.size(); ++c) {
        auto it = semantics.assignments.find(raw.columns[c]);
        if (it == semantics.assignments.end()) continue;
        if (it->second == ColumnRole::ignore || it->second == ColumnRole::timestamp) continue;
        kept.push_back(c);
        out.columns.push_back(raw.columns[c]);
        out.roles.push_back(it->second);
    }

    // Hourly grid; sub-hourly readings are averaged into their hour.
    const Timestamp t0 = floor_to_hour(raw.timestamps.front());
    const Timestamp t1 = floor_to_hour(raw.timestamps.back());
    const std::size_t grid = static_cast<std::size_t>((t1 - t0) / kSecondsPerHour) + 1;
    std::vector<std::vector<double>> sums(kept.size(), std::vector<double>(grid, 0.0));
    std::vector<std::vector<int>> counts(kept.size(), std::vector<int>(grid, 0));
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        const std::size_t slot = static_cast<std::size_t>((floor_to_hour(raw.timestamps[r]) - t0) / kSecondsPerHour);
        for (std::size_t k = 0; k < kept.size(); ++k) {
            const auto& v = raw.values[kept[k]][r];
            if (!v) continue;
            sums[k][slot] += *v;
            ++counts[k][slot];
        }
    }
    std::vector<std::vector<double>> series(kept.size(), std::vector<double>(grid, kNaN));
    for (std::size_t k = 0; k < kept.size(); ++k) {
        std::size_t missing = 0;
        for (std::size_t s = 0; s < grid; ++s) {
            if (counts[k][s] > 0) series[k][s] = sums[k][s] / counts[k][s];
            else ++missing;
        }
        out.report.missing_before[out.columns[k]] = missing;
    }

    for (std::size_t k = 0; k < kept.size(); ++k) {
        if (out.roles[k] == ColumnRole::holiday_flag) continue;
        const AnomalyPolicy p = policy_for(out.roles[k], policy);
        const auto mask = detect_anomalies(series[k], p);
        std::size_t found = 0;
        for (std::size_t s = 0; s < grid; ++s) {
            if (mask[s]) {
                series[k][s] = kNaN;
                ++found;
            }
        }
        out.report.anomalies_found[out.columns[k]] = found;
        if (found > 0) out.report.methods_applied.emplace_back(out.columns[k], p.statistical ? "range+rolling_mad" : "range");
    }

    // Common covered range: every interpolated column has values at both ends.
    std::size_t begin = 0;
    std::size_t end = grid;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        if (out.roles[k] == ColumnRole::holiday_flag) continue;
        std::size_t f = 0;
        while (f < grid && std::isnan(series[k][f])) ++f;
        if (f == grid) throw DatasetError("column '" + out.columns[k] + "' has no usable values");
        std::size_t l = grid;
        while (std::isnan(series[k][l - 1])) --l;
        begin = std::max(begin, f);
        end = std::min(end, l);
    }
    if (end <= begin + 1) throw DatasetError("columns do not overlap in time");
    out.report.rows_trimmed = grid - (end - begin);

    out.timestamps.resize(end - begin);
    for (std::size_t s = begin; s < end; ++s)
        out.timestamps[s - begin] = t0 + static_cast<Timestamp>(s) * kSecondsPerHour;

    out.values.resize(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        std::span<const double> part(series[k].data() + begin, end - begin);
        const std::string& name = out.columns[k];
        if (out.roles[k] == ColumnRole::holiday_flag) {
            std::size_t filled = 0;
            out.values[k].assign(part.begin(), part.end());
            for (double& x : out.values[k]) {
                if (std::isnan(x)) {
                    x = 0.0;
                    ++filled;
                }
            }
            out.report.values_imputed[name] = filled;
            if (filled > 0) out.report.methods_applied.emplace_back(name, "zero_fill");
            continue;
        }
        ImputeResult r;
        try {
            r = impute(part, policy.impute);
        } catch (const DatasetError& e) {
            throw DatasetError("column '" + name + "': " + e.what());
        }
        out.values[k] = std::move(r.values);
        out.report.values_imputed[name] = r.interpolated + r.same_hour_filled;
        for (const auto& [len, count] : r.gap_histogram) out.report.gap_histogram[len] += count;
        if (r.interpolated > 0) out.report.methods_applied.emplace_back(name, "linear_interpolation");
        if (r.same_hour_filled > 0) out.report.methods_applied.emplace_back(name, "same_hour_mean");
    }
    return out;
}

std::string to_csv(const CleanDataset& data) {
    std::ostringstream os;
    os.precision(17);
    os << "timestamp";
    for (const auto& c : data.columns) os << ',' << c;
    os << '\n';
    for (std::size_t r = 0; r < data.rows(); ++r) {
        os << format_timestamp(data.timestamps[r]);
        for (const auto& col : data.values) os << ',' << col[r];
        os << '\n';
    }
    return os.str();
}

CleanDataset clean_dataset_from_csv(std::string_view text, const ColumnSemantics& semantics) {
    RawDataset raw = parse_csv(text, "<clean>");
    CleanDataset out;
    out.timestamps = raw.timestamps;
    for (std::size_t c = 0; c < raw.columns.size(); ++c) {
        auto it = semantics.assignments.find(raw.columns[c]);
        if (it == semantics.assignments.end()) throw DatasetError("unknown column '" + raw.columns[c] + "'");
        out.columns.push_back(raw.columns[c]);
        out.roles.push_back(it->second);
        std::vector<double> col;
        col.reserve(raw.rows());
        for (const auto& v : raw.values[c]) {
            if (!v) throw DatasetError("clean dataset has a missing cell in '" + raw.columns[c] + "'");
            col.push_back(*v);
        }
        out.values.push_back(std::move(col));
    }
    return out;
}

namespace {

Json count_map(const std::map<std::string, std::size_t>& m) {
    Json j = Json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

}  // namespace

Json to_json(const CleaningReport& report) {
    Json gaps = Json::object();
    for (const auto& [len, count] : report.gap_histogram) gaps[std::to_string(len)] = count;
    Json methods = Json::array();
    for (const auto& [col, m] : report.methods_applied) methods.push_back(Json{{"column", col}, {"method", m}});
    return Json{{"anomalies_found", count_map(report.anomalies_found)},
                {"values_imputed", count_map(report.values_imputed)},
                {"missing_before", count_map(report.missing_before)},
                {"gap_histogram", gaps},
                {"methods_applied", methods},
                {"rows_trimmed", report.rows_trimmed},
                {"rows_resampled_from", report.rows_resampled_from}};
}

CleaningReport cleaning_report_from_json(const Json& j) {
    CleaningReport r;
    for (const auto& [k, v] : j.at("anomalies_found").items()) r.anomalies_found[k] = v.get<std::size_t>();
    for (const auto& [k, v] : j.at("values_imputed").items()) r.values_imputed[k] = v.get<std::size_t>();
    for (const auto& [k, v] : j.at("missing_before").items()) r.missing_before[k] = v.get<std::size_t>();
    for (const auto& [k, v] : j.at("gap_histogram").items()) r.gap_histogram[std::stoi(k)] = v.get<std::size_t>();
    for (const auto& m : j.at("methods_applied"))
        r.methods_applied.emplace_back(m.at("column").get<std::string>(), m.at("method").get<std::string>());
    r.rows_trimmed = j.value("rows_trimmed", std::size_t{0});
    r.rows_resampled_from = j.value("rows_resampled_from", std::size_t{0});
    return r;
}

}  // namespace loadloop::dataset
