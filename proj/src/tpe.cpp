#include "faa/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "faa/imageops.hpp"

namespace faa {

namespace {

constexpr double kMinBandwidth = 0.01;

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
            return i;
        }
    }
    return probs.size() - 1;
}

// Per-dimension densities built from one side of the split.
struct DimensionModel {
    std::optional<ParzenEstimator> parzen;
    std::vector<double> probs;

    double density(double x) const {
        return parzen ? parzen->density(x) : probs[static_cast<std::size_t>(x)];
    }
};

std::vector<DimensionModel> build_models(const std::vector<const Trial*>& trials, const SearchSpace& space,
                                         double prior_weight) {
    std::vector<DimensionModel> models(space.size());
    std::vector<double> values;
    for (std::size_t d = 0; d < space.size(); ++d) {
        if (space[d].categorical()) {
            std::vector<std::size_t> counts(space[d].cardinality, 0);
            for (const Trial* t : trials) {
                ++counts[static_cast<std::size_t>(t->params[d])];
            }
            models[d].probs = categorical_density(counts, prior_weight);
        } else {
            values.clear();
            for (const Trial* t : trials) {
                values.push_back(t->params[d]);
            }
            models[d].parzen.emplace(values, prior_weight);
        }
    }
    return models;
}

double log_ratio(const std::vector<DimensionModel>& good, const std::vector<DimensionModel>& bad, const Params& x) {
    double score = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        score += std::log(good[d].density(x[d])) - std::log(bad[d].density(x[d]));
    }
    return score;
}

Params uniform_point(const SearchSpace& space, Rng& rng) {
    Params p(space.size());
    for (std::size_t d = 0; d < space.size(); ++d) {
        p[d] = space[d].categorical() ? static_cast<double>(rng.uniform_index(space[d].cardinality)) : rng.uniform();
    }
    return p;
}

} // namespace

SearchSpace::SearchSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) {
        throw std::invalid_argument("search space has no dimensions");
    }
}

SearchSpace SearchSpace::policy_space(std::size_t sub_policies, std::size_t ops_per_sub_policy) {
    if (sub_policies == 0 || ops_per_sub_policy == 0) {
        throw std::invalid_argument("policy space needs at least one sub-policy and one operation");
    }
    std::vector<std::string> labels;
    for (OpKind k : kAllOps) {
        labels.emplace_back(op_name(k));
    }
    std::vector<Dimension> dims;
    for (std::size_t s = 0; s < sub_policies; ++s) {
        for (std::size_t o = 0; o < ops_per_sub_policy; ++o) {
            const std::string prefix = "s" + std::to_string(s) + ".op" + std::to_string(o) + ".";
            dims.push_back({prefix + "kind", kOpCount, labels});
            dims.push_back({prefix + "p", 0, {}});
            dims.push_back({prefix + "lambda", 0, {}});
        }
    }
    return SearchSpace(std::move(dims));
}

SearchSpace SearchSpace::unit_cube(std::size_t n) {
    std::vector<Dimension> dims;
    for (std::size_t d = 0; d < n; ++d) {
        dims.push_back({"x" + std::to_string(d), 0, {}});
    }
    return SearchSpace(std::move(dims));
}

void SearchSpace::check(const Params& params) const {
    if (params.size() != dims_.size()) {
        throw std::invalid_argument("parameter vector has " + std::to_string(params.size()) +
                                    " dimensions, search space has " + std::to_string(dims_.size()));
    }
    for (std::size_t d = 0; d < dims_.size(); ++d) {
        const double v = params[d];
        if (dims_[d].categorical()) {
            if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(dims_[d].cardinality)) {
                throw std::invalid_argument("dimension " + dims_[d].name + ": categorical value out of range");
            }
        } else if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw std::invalid_argument("dimension " + dims_[d].name + ": value outside [0,1]");
        }
    }
}

void TpeConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("TPE gamma must lie in (0,1)");
    }
    if (ei_candidates == 0) {
        throw std::invalid_argument("TPE needs at least one EI candidate");
    }
    if (!(prior_weight > 0.0)) {
        throw std::invalid_argument("TPE prior weight must be positive");
    }
}

TrialHistory::TrialHistory(TpeConfig config) : config_(config) {
    config_.validate();
}

std::size_t TrialHistory::pending_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(trials_.begin(), trials_.end(), [](const Trial& t) { return t.state == TrialState::Pending; }));
}

std::size_t TrialHistory::add_pending(Params params) {
    Trial t;
    t.id = trials_.size();
    t.params = std::move(params);
    trials_.push_back(std::move(t));
    return trials_.back().id;
}

void TrialHistory::complete(std::size_t id, double loss) {
    if (!std::isfinite(loss)) {
        throw std::invalid_argument("observed loss must be finite");
    }
    if (id >= trials_.size() || trials_[id].state != TrialState::Pending) {
        throw std::invalid_argument("trial " + std::to_string(id) + " is not pending");
    }
    trials_[id].loss = loss;
    trials_[id].state = TrialState::Completed;
    ++completed_;
}

void TrialHistory::fail(std::size_t id) {
    if (id >= trials_.size() || trials_[id].state != TrialState::Pending) {
        throw std::invalid_argument("trial " + std::to_string(id) + " is not pending");
    }
    trials_[id].state = TrialState::Failed;
}

std::size_t TrialHistory::append_completed(Params params, double loss) {
    if (!std::isfinite(loss)) {
        throw std::invalid_argument("observed loss must be finite");
    }
    const std::size_t id = add_pending(std::move(params));
    complete(id, loss);
    return id;
}

std::vector<const Trial*> TrialHistory::completed() const {
    std::vector<const Trial*> out;
    out.reserve(completed_);
    for (const auto& t : trials_) {
        if (t.state == TrialState::Completed) {
            out.push_back(&t);
        }
    }
    return out;
}

ObservationSplit split_observations(const TrialHistory& history, double gamma) {
    auto done = history.completed();
    if (done.empty()) {
        throw std::invalid_argument("split_observations: no completed trials");
    }
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("split_observations: gamma must lie in (0,1)");
    }
    std::stable_sort(done.begin(), done.end(), [](const Trial* a, const Trial* b) { return *a->loss < *b->loss; });
    const auto n_good = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(done.size()) - 1e-9)), 1, done.size());
    ObservationSplit split;
    split.good.assign(done.begin(), done.begin() + static_cast<std::ptrdiff_t>(n_good));
    split.bad.assign(done.begin() + static_cast<std::ptrdiff_t>(n_good), done.end());
    split.threshold = *split.good.back()->loss;
    return split;
}

ParzenEstimator::ParzenEstimator(std::span<const double> points, double prior_weight)
    : centers_(points.begin(), points.end()), prior_weight_(prior_weight) {
    if (!(prior_weight > 0.0)) {
        throw std::invalid_argument("Parzen prior weight must be positive");
    }
    std::vector<double> sorted = centers_;
    std::sort(sorted.begin(), sorted.end());
    bandwidths_.resize(centers_.size());
    mass_.resize(centers_.size());
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        const double x = centers_[i];
        // position among sorted points; duplicates are each other's neighbours
        const auto lo = std::lower_bound(sorted.begin(), sorted.end(), x);
        const auto hi = std::upper_bound(sorted.begin(), sorted.end(), x);
        double nearest = std::min(x, 1.0 - x);
        if (hi - lo > 1) {
            nearest = 0.0;
        }
        if (lo != sorted.begin()) {
            nearest = std::min(nearest, x - *(lo - 1));
        }
        if (hi != sorted.end()) {
            nearest = std::min(nearest, *hi - x);
        }
        const double bw = std::max(nearest, kMinBandwidth);
        bandwidths_[i] = bw;
        mass_[i] = normal_cdf((1.0 - x) / bw) - normal_cdf((0.0 - x) / bw);
    }
}

double ParzenEstimator::density(double x) const {
    if (x < 0.0 || x > 1.0) {
        return 0.0;
    }
    const double total = static_cast<double>(centers_.size()) + prior_weight_;
    double acc = prior_weight_; // uniform density 1 on [0,1]
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        const double bw = bandwidths_[i];
        acc += normal_pdf((x - centers_[i]) / bw) / (bw * mass_[i]);
    }
    return acc / total;
}

double ParzenEstimator::sample(Rng& rng) const {
    const double total = static_cast<double>(centers_.size()) + prior_weight_;
    const double u = rng.uniform() * total;
    if (u < prior_weight_ || centers_.empty()) {
        return rng.uniform();
    }
    const auto i = std::min(centers_.size() - 1, static_cast<std::size_t>(u - prior_weight_));
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double v = centers_[i] + bandwidths_[i] * rng.normal();
        if (v >= 0.0 && v <= 1.0) {
            return v;
        }
    }
    return std::clamp(centers_[i], 0.0, 1.0);
}

double parzen_density(std::span<const double> points, double x, double prior_weight) {
    return ParzenEstimator(points, prior_weight).density(x);
}

std::vector<double> categorical_density(std::span<const std::size_t> counts, double prior_weight) {
    if (counts.empty()) {
        throw std::invalid_argument("categorical_density: no categories");
    }
    double n = 0.0;
    for (std::size_t c : counts) {
        n += static_cast<double>(c);
    }
    const double k = static_cast<double>(counts.size());
    std::vector<double> probs(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        probs[i] = (static_cast<double>(counts[i]) + prior_weight / k) / (n + prior_weight);
    }
    return probs;
}

Params suggest(const TrialHistory& history, const SearchSpace& space, Rng& rng, SuggestTrace* trace) {
    const TpeConfig& cfg = history.config();
    if (history.completed_count() < cfg.startup_trials) {
        if (trace != nullptr) {
            *trace = SuggestTrace{};
            trace->startup = true;
        }
        return uniform_point(space, rng);
    }
    if (history.completed_count() == 0) {
        throw std::logic_error("suggest: no completed trials to model");
    }
    const ObservationSplit split = split_observations(history, cfg.gamma);
    const auto good = build_models(split.good, space, cfg.prior_weight);
    const auto bad = build_models(split.bad, space, cfg.prior_weight);

    std::vector<Params> candidates(cfg.ei_candidates, Params(space.size()));
    std::vector<double> scores(cfg.ei_candidates);
    std::size_t best = 0;
    for (std::size_t c = 0; c < cfg.ei_candidates; ++c) {
        for (std::size_t d = 0; d < space.size(); ++d) {
            candidates[c][d] = good[d].parzen ? good[d].parzen->sample(rng)
                                              : static_cast<double>(sample_categorical(good[d].probs, rng));
        }
        scores[c] = log_ratio(good, bad, candidates[c]);
        if (scores[c] > scores[best]) {
            best = c;
        }
    }
    Params chosen = candidates[best];
    if (trace != nullptr) {
        trace->startup = false;
        trace->candidates = std::move(candidates);
        trace->scores = std::move(scores);
        trace->chosen = best;
    }
    return chosen;
}

double score_candidate(const TrialHistory& history, const SearchSpace& space, const Params& x) {
    space.check(x);
    const ObservationSplit split = split_observations(history, history.config().gamma);
    return log_ratio(build_models(split.good, space, history.config().prior_weight),
                     build_models(split.bad, space, history.config().prior_weight), x);
}

void observe(TrialHistory& history, const SearchSpace& space, const Params& params, double loss) {
    space.check(params);
    history.append_completed(params, loss);
}

TpeOptimizer::TpeOptimizer(SearchSpace space, TpeConfig config) : space_(std::move(space)), history_(config) {}

std::pair<std::size_t, Params> TpeOptimizer::suggest(Rng& rng) {
    std::lock_guard lock(mutex_);
    Params p = faa::suggest(history_, space_, rng);
    const std::size_t id = history_.add_pending(p);
    return {id, std::move(p)};
}

void TpeOptimizer::observe(std::size_t trial_id, double loss) {
    std::lock_guard lock(mutex_);
    history_.complete(trial_id, loss);
}

void TpeOptimizer::fail(std::size_t trial_id) {
    std::lock_guard lock(mutex_);
    history_.fail(trial_id);
}

TrialHistory TpeOptimizer::history() const {
    std::lock_guard lock(mutex_);
    return history_;
}

} // namespace faa
