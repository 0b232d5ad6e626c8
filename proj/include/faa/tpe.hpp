#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "faa/rng.hpp"

namespace faa {

/// One coordinate of the search space: categorical with `cardinality`
/// choices, or continuous on [0,1] when cardinality is 0.
struct Dimension {
    std::string name;
    std::size_t cardinality = 0;
    /// Optional display names of the categories (used in trial logs).
    std::vector<std::string> labels;

    bool categorical() const noexcept { return cardinality > 0; }
};

using Params = std::vector<double>;

class SearchSpace {
public:
    SearchSpace() = default;
    explicit SearchSpace(std::vector<Dimension> dims);

    /// Policy layout: for sub-policy s and op slot o, dimensions
    /// [(s*ops + o)*3 + {0,1,2}] are (operation kind, probability, magnitude).
    static SearchSpace policy_space(std::size_t sub_policies, std::size_t ops_per_sub_policy);
    static SearchSpace unit_cube(std::size_t dims);

    std::size_t size() const noexcept { return dims_.size(); }
    const Dimension& operator[](std::size_t i) const { return dims_.at(i); }
    const std::vector<Dimension>& dims() const noexcept { return dims_; }

    /// Throws std::invalid_argument when the vector has the wrong length, a
    /// categorical value is not an in-range integer, or a continuous value is
    /// outside [0,1].
    void check(const Params& params) const;

private:
    std::vector<Dimension> dims_;
};

enum class TrialState { Pending, Completed, Failed };

struct Trial {
    std::size_t id = 0;
    Params params;
    std::optional<double> loss;
    TrialState state = TrialState::Pending;
};

struct TpeConfig {
    /// Fraction of completed trials that form the "good" set.
    double gamma = 0.25;
    std::size_t startup_trials = 20;
    std::size_t ei_candidates = 24;
    double prior_weight = 1.0;

    void validate() const;
};

/// Append-only record of trials. Not synchronized; see TpeOptimizer.
class TrialHistory {
public:
    TrialHistory() = default;
    explicit TrialHistory(TpeConfig config);

    const TpeConfig& config() const noexcept { return config_; }
    const std::vector<Trial>& trials() const noexcept { return trials_; }
    std::size_t size() const noexcept { return trials_.size(); }
    std::size_t completed_count() const noexcept { return completed_; }
    std::size_t pending_count() const noexcept;

    std::size_t add_pending(Params params);
    /// Throws std::invalid_argument for a non-finite loss or an id that is
    /// not pending.
    void complete(std::size_t id, double loss);
    void fail(std::size_t id);
    /// Appends an already-completed trial; duplicates are allowed.
    std::size_t append_completed(Params params, double loss);

    std::vector<const Trial*> completed() const;

private:
    TpeConfig config_;
    std::vector<Trial> trials_;
    std::size_t completed_ = 0;
};

struct ObservationSplit {
    std::vector<const Trial*> good;
    std::vector<const Trial*> bad;
    /// Largest loss in the good set.
    double threshold = 0.0;
};

/// good = the ceil(gamma * n) lowest-loss completed trials (ties resolved by
/// insertion order), bad = the remaining completed trials. Pending and failed
/// trials are ignored. Throws std::invalid_argument with no completed trial.
ObservationSplit split_observations(const TrialHistory& history, double gamma);

/// Adaptive Parzen estimator on [0,1]: a uniform prior of weight
/// prior_weight/(n+prior_weight) plus one truncated Gaussian per point, each
/// of weight 1/(n+prior_weight), centred on the point with bandwidth equal to
/// the distance to its nearer neighbour (other points or the 0/1 boundaries),
/// floored at 0.01.
class ParzenEstimator {
public:
    ParzenEstimator(std::span<const double> points, double prior_weight);

    double density(double x) const;
    double sample(Rng& rng) const;

    const std::vector<double>& centers() const noexcept { return centers_; }
    const std::vector<double>& bandwidths() const noexcept { return bandwidths_; }

private:
    std::vector<double> centers_;
    std::vector<double> bandwidths_;
    std::vector<double> mass_; // truncated normal mass on [0,1]
    double prior_weight_;
};

double parzen_density(std::span<const double> points, double x, double prior_weight);

/// (counts + prior_weight/K) / (n + prior_weight) for K categories.
std::vector<double> categorical_density(std::span<const std::size_t> counts, double prior_weight);

/// Diagnostics of one model-based suggestion.
struct SuggestTrace {
    bool startup = false;
    std::vector<Params> candidates;
    /// log l(x) - log g(x) per candidate.
    std::vector<double> scores;
    std::size_t chosen = 0;
};

/// Uniform random point while fewer than startup_trials trials are completed;
/// afterwards draws ei_candidates points from the good-set densities and
/// returns the one maximizing l(x)/g(x) (first on ties). Dimensions are
/// modelled independently.
Params suggest(const TrialHistory& history, const SearchSpace& space, Rng& rng, SuggestTrace* trace = nullptr);

/// log l(x) - log g(x) of `x` against the current split.
double score_candidate(const TrialHistory& history, const SearchSpace& space, const Params& x);

/// Appends a completed trial after validating it against the space.
void observe(TrialHistory& history, const SearchSpace& space, const Params& params, double loss);

/// Thread-safe suggest/observe front end. Suggestions become pending trials
/// that are invisible to the density model until observed.
class TpeOptimizer {
public:
    TpeOptimizer(SearchSpace space, TpeConfig config = {});

    std::pair<std::size_t, Params> suggest(Rng& rng);
    void observe(std::size_t trial_id, double loss);
    void fail(std::size_t trial_id);

    const SearchSpace& space() const noexcept { return space_; }
    /// Snapshot copy of the history.
    TrialHistory history() const;

private:
    SearchSpace space_;
    mutable std::mutex mutex_;
    TrialHistory history_;
};

} // namespace faa
