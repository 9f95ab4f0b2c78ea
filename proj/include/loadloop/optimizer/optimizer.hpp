#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "loadloop/core/configuration.hpp"
#include "loadloop/core/error.hpp"
#include "loadloop/core/json.hpp"

namespace loadloop::optimizer {

using Rng = std::mt19937_64;
using loadloop::to_json;

// ---- search space -------------------------------------------------------

enum class DimKind { categorical, real, integer };
enum class Scale { uniform, log };

// Dimension is active only while `dim` holds one of `values`.
struct Condition {
    std::string dim;
    std::vector<std::string> values;
};

struct Dimension {
    std::string name;
    DimKind kind = DimKind::real;
    Scale scale = Scale::uniform;
    double low = 0.0;
    double high = 1.0;
    int step = 1;                      // integer grid spacing
    std::vector<ParamValue> choices;   // categorical
    std::optional<Condition> condition;

    bool contains(const ParamValue& value) const;
    // Sampling interval in the (possibly log) working space; integers get half a step of slack.
    std::pair<double, double> working_bounds() const;
    double to_working(double value) const;
    ParamValue from_working(double w) const;
};

struct TypeSpace {
    std::string model_type;
    std::vector<Dimension> dims;  // parents precede the dims they condition

    const Dimension* find(const std::string& name) const;
    Dimension* find(const std::string& name);
    bool active(const Dimension& dim, const ParamMap& params) const;
};

struct SearchSpace {
    std::vector<TypeSpace> types;

    const TypeSpace* find(const std::string& model_type) const;
    std::vector<std::string> type_names() const;
    // Full membership: every active dim present and in range, nothing else present.
    bool contains(const Configuration& config, std::string* why = nullptr) const;
    // Partial membership for injections: the given params are valid where active.
    bool admits_partial(const Configuration& config, std::string* why = nullptr) const;
    void validate() const;
};

// Restricted to linear, mlp and gbt unless `full_schema` is set.
SearchSpace default_search_space(bool full_schema = false);

Json to_json(const Dimension& dim);
Dimension dimension_from_json(const Json& j);
Json to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const Json& j);

// ---- sampling -----------------------------------------------------------

ParamValue sample_dimension(const Dimension& dim, Rng& rng);
// Samples the unspecified active dims of `type`, keeping `fixed` entries.
ParamMap sample_type(const TypeSpace& type, Rng& rng, const ParamMap& fixed = {});
std::vector<Configuration> random_sample(const SearchSpace& space, std::size_t count, Rng& rng);

// ---- ledger -------------------------------------------------------------

enum class TrialOrigin { random_init, acquisition, user_injected };
std::string to_string(TrialOrigin origin);
TrialOrigin parse_trial_origin(const std::string& text);

struct TrialTiming {
    double started_at = 0.0;   // unix seconds
    double finished_at = 0.0;
    double wall_seconds = 0.0;
};

struct TrialRecord {
    std::size_t trial_index = 0;
    Configuration config;
    std::optional<double> loss;  // empty when the trial failed
    std::string error;
    TrialOrigin origin = TrialOrigin::random_init;
    std::uint64_t seed = 0;
    std::size_t iteration = 0;
    Json report = Json::object();
    TrialTiming timing;

    bool failed() const { return !loss.has_value(); }
};

Json to_json(const TrialRecord& record, bool with_timing = true);
TrialRecord trial_record_from_json(const Json& j);

class Ledger {
public:
    Ledger() = default;
    explicit Ledger(std::vector<TrialRecord> records);

    void append(TrialRecord record);
    const std::vector<TrialRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const TrialRecord& operator[](std::size_t i) const { return records_[i]; }

    std::optional<std::size_t> best_index() const;
    std::string to_jsonl(bool with_timing = true) const;
    static Ledger from_jsonl(std::string_view text);

private:
    std::vector<TrialRecord> records_;
};

// ---- guidance -----------------------------------------------------------

struct DimRestriction {
    std::string model_type = "*";
    std::string dim;
    std::optional<double> low;
    std::optional<double> high;
    std::vector<ParamValue> choices;
};

enum class DirectiveKind { prune_space, allocate, inject };

struct GuidanceDirective {
    DirectiveKind kind = DirectiveKind::prune_space;
    std::vector<std::string> exclude_types;       // prune_space
    std::vector<DimRestriction> restrictions;     // prune_space
    std::map<std::string, int> allocation;        // allocate
    std::vector<Configuration> injections;        // inject, possibly partial
};

Json to_json(const GuidanceDirective& directive);
GuidanceDirective guidance_directive_from_json(const Json& j);

struct GuidanceContext {
    std::map<std::string, int> allocation;
    std::vector<Configuration> injections;

    bool empty() const { return allocation.empty() && injections.empty(); }
};

struct GuidanceResult {
    SearchSpace space;
    GuidanceContext context;
};

// Applies all directives or none (throws ValidationError, leaving inputs untouched).
GuidanceResult apply_guidance(const SearchSpace& current, const SearchSpace& original,
                              const std::vector<GuidanceDirective>& directives);

// ---- surrogate ----------------------------------------------------------

struct TpeSettings {
    double gamma = 0.25;
    std::size_t candidates = 24;
    double bandwidth_floor = 0.01;   // fraction of the working range
    double prior_weight = 1.0;
    double type_floor = 0.05;
};

inline std::size_t good_set_size(std::size_t n, double gamma) {
    const auto g = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-12));
    return std::max<std::size_t>(1, g);
}

// Parzen estimator over one numeric working-space dimension, truncated to [low, high].
struct Parzen {
    std::vector<double> mus;
    std::vector<double> sigmas;
    std::vector<double> weights;
    double low = 0.0;
    double high = 1.0;

    static Parzen fit(const std::vector<double>& points, double low, double high, const TpeSettings& settings);
    double log_pdf(double x) const;
    double sample(Rng& rng) const;
};

struct CategoricalDensity {
    std::vector<double> probs;
    static CategoricalDensity fit(const std::vector<std::size_t>& picks, std::size_t choices, double prior_weight);
    std::size_t sample(Rng& rng) const;
};

struct DimDensity {
    std::optional<Parzen> numeric;
    std::optional<CategoricalDensity> categorical;
};

struct TypeSurrogate {
    std::string model_type;
    std::size_t trials = 0;
    std::size_t good = 0;
    std::map<std::string, DimDensity> good_density;
    std::map<std::string, DimDensity> bad_density;
};

struct SurrogateState {
    std::map<std::string, TypeSurrogate> per_type;
    std::map<std::string, double> type_probability;  // floored choice distribution
};

SurrogateState fit_surrogate(const SearchSpace& space, const Ledger& ledger, const TpeSettings& settings = {});

// log l(x) - log g(x) summed over the active dims of `params`.
double acquisition(const TypeSpace& type, const TypeSurrogate& surrogate, const ParamMap& params);

// Best of `settings.candidates` draws from l(x); prior sampling if the type has < 2 trials.
ParamMap propose_for_type(const TypeSpace& type, const SurrogateState& state, const TpeSettings& settings, Rng& rng,
                          const ParamMap& fixed = {});

struct Proposal {
    Configuration config;
    TrialOrigin origin = TrialOrigin::acquisition;
};

// Throws ValidationError when the context injects more configurations than `batch`.
std::vector<Proposal> propose_batch(const SearchSpace& space, const Ledger& ledger, const GuidanceContext& context,
                                    std::size_t batch, Rng& rng, const TpeSettings& settings = {});

// ---- run loop -----------------------------------------------------------

struct EvalResult {
    std::optional<double> loss;  // empty for failed trials
    std::string error;
    Json report = Json::object();
};

using Evaluator = std::function<EvalResult(const Configuration&, std::uint64_t seed)>;

struct IterationInfo {
    std::size_t iteration = 0;
    std::size_t trials = 0;
    std::optional<double> best_loss;
};

// Polled at each iteration boundary; directives that arrive mid-batch wait for the next poll.
class GuidanceSource {
public:
    virtual ~GuidanceSource() = default;
    virtual std::vector<GuidanceDirective> poll(const IterationInfo& info, const Ledger& ledger,
                                                const SearchSpace& space) = 0;
    // Told when a polled set of directives was rejected.
    virtual void rejected(const std::string& /*reason*/) {}
};

struct OptimizerEvent {
    std::string type;  // trial, iteration, guidance, guidance_rejected, halt
    Json payload;
};

using EventSink = std::function<void(const OptimizerEvent&)>;

struct RunSettings {
    std::size_t max_trials = 200;
    std::optional<double> epsilon;
    std::size_t init_samples = 20;
    std::size_t batch_size = 10;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    TpeSettings tpe;

    void validate() const;
};

struct RunResult {
    Ledger ledger;
    SearchSpace final_space;
    std::optional<std::size_t> best_index;
    std::string stop_reason;  // max_trials, target_reached
};

std::uint64_t trial_seed(std::uint64_t run_seed, std::size_t trial_index);

// Resumes when `prior` already holds trials from an interrupted run with the same settings.
RunResult run_optimization(const SearchSpace& space, const RunSettings& settings, GuidanceSource* guidance,
                           const Evaluator& evaluator, const EventSink& sink = {}, Ledger prior = {});

// ---- analysis -----------------------------------------------------------

struct TypeSummary {
    std::size_t count = 0;
    std::size_t failed = 0;
    std::optional<double> best_loss;
    std::optional<Configuration> best_config;
};

struct TrialSummary {
    std::size_t total = 0;
    std::size_t failed = 0;
    std::map<std::string, TypeSummary> per_type;
    std::optional<double> best_loss;
    std::optional<std::size_t> best_index;
    std::string trend;  // improving or flat

    std::string render() const;
};

TrialSummary summarize_trials(const Ledger& ledger, std::size_t batch_size = 10);
Json to_json(const TrialSummary& summary);

// Throws ValidationError with fewer than 10 completed trials of the type.
std::vector<std::pair<std::string, double>> hyperparameter_importance(const Ledger& ledger, const TypeSpace& type);

// Throws ValidationError when no trial completed.
std::vector<double> best_so_far(const Ledger& ledger);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace loadloop::optimizer
