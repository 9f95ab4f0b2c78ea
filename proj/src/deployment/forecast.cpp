#include "loadloop/deployment/deployment.hpp"

namespace loadloop::deployment {

Forecast forecast(const DeployedModel& deployed, const dataset::CleanDataset& data, const dataset::TaskSpec& task,
                  std::optional<std::size_t> origin) {
    if (data.rows() == 0) throw ValidationError("empty data window");
    const std::size_t t = origin.value_or(data.rows() - 1);
    if (t >= data.rows()) throw ValidationError("origin beyond the data window", "origin");
    const std::size_t need = features::required_history(deployed.plan.config, task.interval);
    if (t < need)
        throw ValidationError("window supplies " + std::to_string(t) + " hours of lookback, configuration needs " +
                              std::to_string(need), "window");
    if (!deployed.plan.temperature.empty() && !data.find_role(dataset::ColumnRole::temperature))
        throw ValidationError("window is missing temperature history", "window");

    const auto h = static_cast<std::size_t>(task.horizon);
    const std::size_t first = t + static_cast<std::size_t>(task.interval) + 1;
    const bool inside = first + h <= data.rows();
    const std::size_t origins[] = {t};
    const auto rows = features::assemble_for_origins(deployed.plan, data, task, origins, inside);
    const auto pred = models::predict(deployed.model, rows);

    Forecast f;
    f.origin = data.timestamps[t];
    f.horizon = task.horizon;
    for (std::size_t i = 0; i < h; ++i)
        f.target_times.push_back(data.timestamps.front() + static_cast<Timestamp>(first + i) * kSecondsPerHour);
    f.raw = pred.front();
    f.adjusted = f.raw;
    if (inside) {
        const auto target = rows.target(0);
        f.actual = std::vector<double>(target.begin(), target.end());
        for (std::size_t c = 0; c < data.columns.size(); ++c) {
            const auto role = data.roles[c];
            if (role == dataset::ColumnRole::load || role == dataset::ColumnRole::ignore) continue;
            const std::string key(dataset::to_string(role));
            if (f.context.count(key)) continue;  // first column of a role wins
            f.context[key] = std::vector<double>(data.values[c].begin() + static_cast<long>(first),
                                                 data.values[c].begin() + static_cast<long>(first + h));
        }
    }
    return f;
}

}  // namespace loadloop::deployment
