#include <cmath>
#include <numbers>

#include "loadloop/features/features.hpp"

namespace loadloop::features {

namespace {

const std::vector<int> kSequenceFrequencies = {1, 2, 3, 4, 6, 12, 24};

double ratio_param(const ParamMap& params, const std::string& key) {
    const double r = param_number(params, key);
    if (r < 0.0 || r > 1.0) throw ValidationError(key + " must lie in [0, 1]", key);
    return r;
}

}  // namespace

void NamedColumns::append(std::string name, std::vector<double> column) {
    names.push_back(std::move(name));
    columns.push_back(std::move(column));
}

void NamedColumns::append(NamedColumns other) {
    for (std::size_t i = 0; i < other.size(); ++i) append(std::move(other.names[i]), std::move(other.columns[i]));
}

std::string to_string(CalendarMode mode) {
    switch (mode) {
        case CalendarMode::none: return "none";
        case CalendarMode::numerical: return "numerical";
        case CalendarMode::categorical: return "categorical";
        case CalendarMode::trigonometric: return "trigonometric";
    }
    return "none";
}

void FeatureConfig::validate() const {
    auto ratio_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!ratio_ok(temp_ratio)) throw ValidationError("temperature top ratio outside [0, 1]", "f.temp_lags_ratio");
    if (!ratio_ok(load_ratio)) throw ValidationError("load lag top ratio outside [0, 1]", "f.load_lags_ratio");
    if (!ratio_ok(other_ratio)) throw ValidationError("other feature top ratio outside [0, 1]", "f.other_ratio");
    if (sequence_input) {
        bool known = false;
        for (int f : kSequenceFrequencies) known = known || f == sequence_frequency;
        if (!known) throw ValidationError("sequence frequency must be one of 1,2,3,4,6,12,24", "f.sequence_frequency");
        if (sequence_length < 1 || sequence_length > 24)
            throw ValidationError("sequence length must lie in [1, 24]", "f.sequence_length");
    }
}

FeatureConfig feature_config_from_params(const ParamMap& params, bool sequence_input) {
    FeatureConfig c;
    const std::string& cal = param_text(params, "f.calendar");
    if (cal == "none") c.calendar = CalendarMode::none;
    else if (cal == "numerical") c.calendar = CalendarMode::numerical;
    else if (cal == "categorical") c.calendar = CalendarMode::categorical;
    else if (cal == "trigonometric") c.calendar = CalendarMode::trigonometric;
    else throw ValidationError("unknown calendar encoding '" + cal + "'", "f.calendar");

    const std::string& temp = param_text(params, "f.temp_lags");
    if (temp == "correlation") {
        c.temp_lags = SelectMode::correlation;
        c.temp_ratio = ratio_param(params, "f.temp_lags_ratio");
    } else if (temp != "none") {
        throw ValidationError("unknown temperature lag mode '" + temp + "'", "f.temp_lags");
    }

    const std::string& inter = param_text(params, "f.interaction");
    if (inter != "none" && inter != "all") throw ValidationError("interaction must be none or all", "f.interaction");
    c.interaction = inter == "all";

    c.sequence_input = sequence_input;
    if (sequence_input) {
        c.load_lags = LoadLagMode::none;
        c.sequence_frequency = static_cast<int>(param_number(params, "f.sequence_frequency"));
        c.sequence_length = static_cast<int>(param_number(params, "f.sequence_length"));
    } else {
        const std::string& lags = param_text(params, "f.load_lags");
        if (lags == "none") c.load_lags = LoadLagMode::none;
        else if (lags == "fixed") c.load_lags = LoadLagMode::fixed;
        else if (lags == "correlation") {
            c.load_lags = LoadLagMode::correlation;
            c.load_ratio = ratio_param(params, "f.load_lags_ratio");
        } else throw ValidationError("unknown load lag mode '" + lags + "'", "f.load_lags");
    }

    const std::string& other = param_text(params, "f.other");
    if (other == "correlation") {
        c.other = SelectMode::correlation;
        c.other_ratio = ratio_param(params, "f.other_ratio");
    } else if (other != "none") {
        throw ValidationError("unknown other-feature mode '" + other + "'", "f.other");
    }
    c.validate();
    return c;
}

NamedColumns encode_calendar(std::span<const Timestamp> timestamps, CalendarMode mode) {
    NamedColumns out;
    if (mode == CalendarMode::none) return out;
    const std::size_t n = timestamps.size();
    std::vector<CivilTime> civil(n);
    for (std::size_t i = 0; i < n; ++i) civil[i] = to_civil(timestamps[i]);

    auto field = [&](auto get) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = get(civil[i]);
        return v;
    };
    auto hour = [](const CivilTime& c) { return static_cast<double>(c.hour); };
    auto dow = [](const CivilTime& c) { return static_cast<double>(c.weekday); };
    auto month = [](const CivilTime& c) { return static_cast<double>(c.month); };

    switch (mode) {
        case CalendarMode::numerical:
            out.append("cal_hour", field(hour));
            out.append("cal_dow", field(dow));
            out.append("cal_month", field(month));
            break;
        case CalendarMode::categorical:
            for (int h = 0; h < 24; ++h)
                out.append("cal_hour_" + std::to_string(h), field([h](const CivilTime& c) { return c.hour == h ? 1.0 : 0.0; }));
            for (int d = 0; d < 7; ++d)
                out.append("cal_dow_" + std::to_string(d), field([d](const CivilTime& c) { return c.weekday == d ? 1.0 : 0.0; }));
            for (int m = 1; m <= 12; ++m)
                out.append("cal_month_" + std::to_string(m), field([m](const CivilTime& c) { return c.month == m ? 1.0 : 0.0; }));
            break;
        case CalendarMode::trigonometric: {
            constexpr double two_pi = 2.0 * std::numbers::pi;
            auto trig = [&](const std::string& name, auto get, double period) {
                out.append(name + "_sin", field([&](const CivilTime& c) { return std::sin(two_pi * get(c) / period); }));
                out.append(name + "_cos", field([&](const CivilTime& c) { return std::cos(two_pi * get(c) / period); }));
            };
            trig("cal_hour", hour, 24.0);
            trig("cal_dow", dow, 7.0);
            trig("cal_month", month, 12.0);
            break;
        }
        case CalendarMode::none: break;
    }
    return out;
}

}  // namespace loadloop::features
