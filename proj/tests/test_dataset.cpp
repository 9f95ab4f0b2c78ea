#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "loadloop/dataset/dataset.hpp"
#include "support/scratch.hpp"

using namespace loadloop;
using namespace loadloop::dataset;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ColumnSemantics semantics_of(std::initializer_list<std::pair<std::string, ColumnRole>> roles) {
    ColumnSemantics s;
    for (const auto& [k, v] : roles) s.assignments[k] = v;
    return s;
}

}  // namespace

TEST(Csv, LoadsSmallFile) {
    scratch::TempDir dir;
    const auto p = dir.write("a.csv", "ts,load\n2024-01-01 00:00,1\n2024-01-01 01:00,2\n2024-01-01 02:00,3\n");
    const RawDataset d = load_csv(p);
    EXPECT_EQ(d.rows(), 3u);
    EXPECT_EQ(d.timestamp_column, "ts");
    ASSERT_EQ(d.columns, std::vector<std::string>{"load"});
    EXPECT_EQ(d.values[0][2], 3.0);
}

TEST(Csv, NanCellIsMissing) {
    const RawDataset d = parse_csv("ts,load\n2024-01-01 00:00,1\n2024-01-01 01:00,NaN\n2024-01-01 02:00,\n");
    EXPECT_FALSE(d.values[0][1].has_value());
    EXPECT_FALSE(d.values[0][2].has_value());
}

TEST(Csv, DuplicateTimestampsAreListed) {
    try {
        parse_csv("ts,load\n2024-01-01 00:00,1\n2024-01-01 01:00,2\n2024-01-01 01:00,3\n");
        FAIL() << "duplicates accepted";
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("2024-01-01 01:00"), std::string::npos) << e.what();
    }
}

TEST(Csv, MissingFileNamesThePath) {
    try {
        load_csv("/nonexistent/x.csv");
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/x.csv"), std::string::npos);
    }
}

TEST(Semantics, ExactNames) {
    const RawDataset d = parse_csv("time,load,temp\n2024-01-01 00:00,1,5\n2024-01-01 01:00,2,6\n2024-01-01 02:00,3,7\n");
    const ColumnSemantics s = infer_column_semantics(d);
    EXPECT_EQ(s.assignments.at("time"), ColumnRole::timestamp);
    EXPECT_EQ(s.assignments.at("load"), ColumnRole::load);
    EXPECT_EQ(s.assignments.at("temp"), ColumnRole::temperature);
    s.validate();
}

TEST(Semantics, HeuristicNames) {
    const RawDataset d = parse_csv("dt,mw\n2024-01-01 00:00,100\n2024-01-01 01:00,110\n2024-01-01 02:00,120\n");
    const ColumnSemantics s = infer_column_semantics(d);
    EXPECT_EQ(s.assignments.at("dt"), ColumnRole::timestamp);
    EXPECT_EQ(s.assignments.at("mw"), ColumnRole::load);
}

TEST(Semantics, NoTimestampCandidate) {
    RawDataset d;
    d.columns = {"a", "b"};
    d.values = {{1.0, 2.0}, {3.0, 4.0}};
    try {
        infer_column_semantics(d);
        FAIL();
    } catch (const SemanticsError& e) {
        EXPECT_NE(std::string(e.what()).find("no timestamp candidate"), std::string::npos);
    }
}

TEST(Semantics, JsonRoundTripAndBadRole) {
    const ColumnSemantics s = semantics_of({{"ts", ColumnRole::timestamp}, {"load", ColumnRole::load}});
    EXPECT_EQ(column_semantics_from_json(to_json(s)).assignments, s.assignments);
    EXPECT_THROW(column_semantics_from_json(Json{{"assignments", {{"x", "weather"}}}}), ValidationError);
    EXPECT_THROW(semantics_of({{"load", ColumnRole::load}}).validate(), SemanticsError);
}

TEST(Anomalies, ConstantSeriesIsClean) {
    const std::vector<double> s(200, 42.0);
    const auto mask = detect_anomalies(s, AnomalyPolicy{});
    EXPECT_EQ(std::count(mask.begin(), mask.end(), true), 0);
}

TEST(Anomalies, SingleSpikeFlagged) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> jitter(-2.0, 2.0);
    std::vector<double> s(168);
    for (double& x : s) x = 100.0 + jitter(rng);
    s[77] = 10000.0;
    AnomalyPolicy p;
    p.k = 5.0;
    p.window = 24;
    const auto mask = detect_anomalies(s, p);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(mask[i], i == 77) << i;
}

TEST(Anomalies, RangeRuleAndMissingCells) {
    std::vector<double> s(10, 5.0);
    s[3] = -1.0;
    s[4] = kNaN;
    AnomalyPolicy p;
    p.statistical = false;
    const auto mask = detect_anomalies(s, p);
    EXPECT_TRUE(mask[3]);
    EXPECT_FALSE(mask[4]);
}

TEST(Impute, MidpointAndIdentity) {
    const std::vector<double> s{1, kNaN, 3};
    const auto r = impute(s, ImputePolicy{});
    EXPECT_EQ(r.values, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(r.interpolated, 1u);

    const std::vector<double> full{4, 5, 6};
    const auto id = impute(full, ImputePolicy{});
    EXPECT_EQ(id.values, full);
    EXPECT_EQ(id.interpolated + id.same_hour_filled, 0u);
}

TEST(Impute, LongGapUsesSameHourMeans) {
    // four days of a per-day-scaled profile, hours 60..69 of day 3 removed
    std::vector<double> s(96);
    for (int h = 0; h < 96; ++h) s[static_cast<std::size_t>(h)] = (h / 24 + 1) * 10.0 + h % 24;
    std::vector<double> holed = s;
    for (int h = 60; h < 70; ++h) holed[static_cast<std::size_t>(h)] = kNaN;
    const auto r = impute(holed, ImputePolicy{});
    EXPECT_EQ(r.same_hour_filled, 10u);
    for (int h = 60; h < 70; ++h) {
        // hand oracle: mean of the same hour on the days before that have it
        double sum = 0.0;
        int n = 0;
        for (int back = 24; back <= h && n < 3; back += 24, ++n) sum += s[static_cast<std::size_t>(h - back)];
        EXPECT_DOUBLE_EQ(r.values[static_cast<std::size_t>(h)], sum / n) << h;
    }
}

TEST(Impute, OverlongGapRejected) {
    std::vector<double> s(400, 1.0);
    for (int i = 100; i < 300; ++i) s[static_cast<std::size_t>(i)] = kNaN;
    EXPECT_THROW(impute(s, ImputePolicy{}), DatasetError);
}

TEST(Impute, EdgesAreTrimmed) {
    const std::vector<double> s{kNaN, kNaN, 1, 2, kNaN};
    const auto r = impute(s, ImputePolicy{});
    EXPECT_EQ(r.leading_trimmed, 2u);
    EXPECT_EQ(r.trailing_trimmed, 1u);
    EXPECT_EQ(r.values, (std::vector<double>{1, 2}));
}

TEST(Split, Arithmetic) {
    const auto s = split_chronological(1000, SplitRatios{}, 10);
    EXPECT_EQ(s.train, (IndexRange{0, 700}));
    EXPECT_EQ(s.val, (IndexRange{700, 850}));
    EXPECT_EQ(s.test, (IndexRange{850, 1000}));
}

TEST(Split, Rejections) {
    EXPECT_THROW(split_chronological(1000, SplitRatios{1.0, 0.0, 0.0}, 10), ValidationError);
    TaskSpec task;
    task.horizon = 24;
    // 60-row validation split cannot hold 168 + 24 hours
    EXPECT_THROW(split_chronological(400, SplitRatios{}, min_split_length(task)), ValidationError);
}

TEST(Clean, ResamplesToHourlyGridAndFills) {
    // 30-minute readings with one missing hour and a spike
    std::string csv = "timestamp,load,temperature\n";
    const Timestamp t0 = from_civil(2024, 1, 1);
    for (int i = 0; i < 2 * 24 * 10; ++i) {
        const int hour = i / 2;
        if (hour == 50) continue;
        double load = 100.0 + 10.0 * std::sin(hour * 2.0 * M_PI / 24.0);
        if (hour == 120 && i % 2 == 0) load = -5.0;
        csv += format_timestamp(t0 + i * 1800) + "," + std::to_string(load) + ",10\n";
    }
    const RawDataset raw = parse_csv(csv);
    const ColumnSemantics sem = infer_column_semantics(raw);
    const CleanDataset c = clean(raw, sem);
    ASSERT_EQ(c.rows(), 240u);
    for (std::size_t r = 1; r < c.rows(); ++r) EXPECT_EQ(c.timestamps[r] - c.timestamps[r - 1], kSecondsPerHour);
    for (double v : c.load()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(c.report.values_imputed.at("load"), 0u);
    EXPECT_EQ(c.report.rows_resampled_from, raw.rows());

    // round trip through the persisted CSV
    const CleanDataset back = clean_dataset_from_csv(to_csv(c), sem);
    EXPECT_EQ(back.timestamps, c.timestamps);
    EXPECT_EQ(back.values.size(), c.values.size());
    for (std::size_t k = 0; k < c.values.size(); ++k)
        for (std::size_t r = 0; r < c.rows(); ++r) EXPECT_NEAR(back.values[k][r], c.values[k][r], 1e-9);
}

TEST(Summary, ConstantAndHourRamp) {
    CleanDataset d;
    const Timestamp t0 = from_civil(2024, 1, 1);
    for (int h = 0; h < 24 * 14; ++h) d.timestamps.push_back(t0 + h * kSecondsPerHour);
    d.columns = {"load"};
    d.roles = {ColumnRole::load};
    d.values = {std::vector<double>(d.timestamps.size(), 5.0)};
    DataSummary s = summarize(d);
    EXPECT_DOUBLE_EQ(s.columns.at("load").mean, 5.0);
    EXPECT_DOUBLE_EQ(s.columns.at("load").std, 0.0);

    for (std::size_t r = 0; r < d.rows(); ++r) d.values[0][r] = static_cast<double>(r % 24);
    s = summarize(d);
    ASSERT_EQ(s.hourly_profile.size(), 24u);
    for (int h = 0; h < 24; ++h) EXPECT_DOUBLE_EQ(s.hourly_profile[static_cast<std::size_t>(h)], h);
    ASSERT_EQ(s.weekly_profile.size(), 168u);
}

TEST(Summary, MatchesIndependentRecompute) {
    SyntheticOptions opt;
    opt.days = 730;
    const RawDataset raw = parse_csv(generate_synthetic_csv(opt));
    const CleanDataset c = clean(raw, infer_column_semantics(raw));
    const DataSummary s = summarize(c);
    EXPECT_EQ(s.rows, c.rows());
    for (std::size_t k = 0; k < c.columns.size(); ++k) {
        const auto& v = c.values[k];
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double sd = std::sqrt(var / static_cast<double>(v.size()));
        const ColumnStats& st = s.columns.at(c.columns[k]);
        EXPECT_NEAR(st.mean, mean, 1e-9 * std::abs(mean));
        EXPECT_NEAR(st.std, sd, 1e-9 * sd);
        EXPECT_EQ(st.min, *std::min_element(v.begin(), v.end()));
        EXPECT_EQ(st.max, *std::max_element(v.begin(), v.end()));
    }
    std::vector<double> hourly(24, 0.0);
    std::vector<int> n(24, 0);
    for (std::size_t r = 0; r < c.rows(); ++r) {
        const int h = to_civil(c.timestamps[r]).hour;
        hourly[static_cast<std::size_t>(h)] += c.load()[r];
        ++n[static_cast<std::size_t>(h)];
    }
    for (int h = 0; h < 24; ++h)
        EXPECT_NEAR(s.hourly_profile[static_cast<std::size_t>(h)], hourly[static_cast<std::size_t>(h)] / n[static_cast<std::size_t>(h)], 1e-9);
}

TEST(Synthetic, DeterministicAndWellFormed) {
    SyntheticOptions opt;
    opt.days = 14;
    const std::string a = generate_synthetic_csv(opt);
    EXPECT_EQ(a, generate_synthetic_csv(opt));
    opt.seed = 8;
    EXPECT_NE(a, generate_synthetic_csv(opt));
    const RawDataset raw = parse_csv(a);
    EXPECT_EQ(raw.rows(), 14u * 24u);
    const ColumnSemantics s = infer_column_semantics(raw);
    EXPECT_EQ(s.column_for(ColumnRole::load), "load");
    EXPECT_EQ(s.column_for(ColumnRole::temperature), "temperature");
}

TEST(Task, Validation) {
    TaskSpec t;
    t.horizon = 0;
    EXPECT_THROW(t.validate(), ValidationError);
    t.horizon = 24;
    t.interval = -1;
    EXPECT_THROW(t.validate(), ValidationError);
    t.interval = 2;
    const TaskSpec back = task_spec_from_json(to_json(t));
    EXPECT_EQ(back.interval, 2);
    EXPECT_EQ(back.horizon, 24);
}
