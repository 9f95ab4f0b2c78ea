#include <cmath>
#include <limits>

#include "loadloop/dataset/dataset.hpp"

namespace loadloop::dataset {

DataSummary summarize(const CleanDataset& data) {
    DataSummary s;
    s.rows = data.rows();
    if (s.rows == 0) return s;
    s.first = data.timestamps.front();
    s.last = data.timestamps.back();
    s.missing_before = data.report.missing_before;

    for (std::size_t c = 0; c < data.columns.size(); ++c) {
        const auto& v = data.values[c];
        ColumnStats st;
        st.min = std::numeric_limits<double>::infinity();
        st.max = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        for (double x : v) {
            st.min = std::min(st.min, x);
            st.max = std::max(st.max, x);
            sum += x;
        }
        st.mean = sum / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - st.mean) * (x - st.mean);
        st.std = std::sqrt(ss / static_cast<double>(v.size()));
        s.columns[data.columns[c]] = st;
    }

    if (const auto* load = data.find_role(ColumnRole::load)) {
        std::vector<double> hs(24, 0.0), ws(168, 0.0);
        std::vector<int> hc(24, 0), wc(168, 0);
        for (std::size_t r = 0; r < data.rows(); ++r) {
            const CivilTime c = to_civil(data.timestamps[r]);
            hs[c.hour] += (*load)[r];
            ++hc[c.hour];
            const int w = c.weekday * 24 + c.hour;
            ws[w] += (*load)[r];
            ++wc[w];
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        s.hourly_profile.resize(24);
        s.weekly_profile.resize(168);
        for (int h = 0; h < 24; ++h) s.hourly_profile[h] = hc[h] ? hs[h] / hc[h] : nan;
        for (int w = 0; w < 168; ++w) s.weekly_profile[w] = wc[w] ? ws[w] / wc[w] : nan;
    }
    return s;
}

Json to_json(const DataSummary& summary) {
    Json cols = Json::object();
    for (const auto& [name, st] : summary.columns)
        cols[name] = Json{{"min", st.min}, {"max", st.max}, {"mean", st.mean}, {"std", st.std}};
    Json missing = Json::object();
    for (const auto& [k, v] : summary.missing_before) missing[k] = v;
    return Json{{"rows", summary.rows},
                {"first", format_timestamp(summary.first)},
                {"last", format_timestamp(summary.last)},
                {"columns", cols},
                {"missing_before", missing},
                {"hourly_profile", summary.hourly_profile},
                {"weekly_profile", summary.weekly_profile}};
}

}  // namespace loadloop::dataset
