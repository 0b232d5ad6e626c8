#include "faa/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "faa/errors.hpp"

namespace faa {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void progress(const SearchHooks& hooks, const std::string& msg) {
    if (hooks.on_progress) {
        hooks.on_progress(msg);
    }
}

bool cancelled(const SearchHooks& hooks) {
    return hooks.cancel != nullptr && hooks.cancel->load();
}

// Shared state of one exploration round.
struct RoundState {
    std::mutex mutex;
    std::condition_variable cv;
    int next_trial = 0;
    int in_flight = 0;
    int completed = 0;
    std::size_t failed = 0;
    bool aborted = false;
    std::string abort_reason;
    std::vector<TrialRecord> records;
};

ExplorationRound run_round(TpeOptimizer& optimizer, const ModelParams& params, const Dataset& explore_data,
                           const SearchConfig& cfg, int fold, int round, const SearchHooks& hooks) {
    RoundState state;
    const int budget = cfg.trials_per_round;
    const auto max_failures = static_cast<std::size_t>(std::floor(cfg.max_error_fraction * budget));
    const std::uint64_t fold_u = static_cast<std::uint64_t>(fold);
    const std::uint64_t round_u = static_cast<std::uint64_t>(round);

    auto worker = [&]() {
        for (;;) {
            int trial = 0;
            {
                std::unique_lock lock(state.mutex);
                state.cv.wait(lock, [&] {
                    return state.aborted || state.completed >= budget || state.completed + state.in_flight < budget;
                });
                if (state.aborted || state.completed >= budget) {
                    return;
                }
                if (cancelled(hooks)) {
                    state.aborted = true;
                    state.abort_reason = "search interrupted";
                    state.cv.notify_all();
                    return;
                }
                trial = state.next_trial++;
                ++state.in_flight;
            }
            const auto trial_u = static_cast<std::uint64_t>(trial);
            Rng suggest_rng(derive_seed(cfg.master_seed, StreamTag::Suggest, {fold_u, round_u, trial_u}));
            auto [id, point] = optimizer.suggest(suggest_rng);
            const auto start = Clock::now();
            TrialRecord rec;
            rec.fold = fold;
            rec.round = round;
            rec.trial = trial;
            bool ok = true;
            std::string error;
            try {
                rec.policy = params_to_policy(point, cfg.layout);
                const Evaluation ev = evaluate_policy_metrics(
                    params, rec.policy, explore_data,
                    derive_seed(cfg.master_seed, StreamTag::Evaluate, {fold_u, round_u, trial_u}));
                rec.loss = ev.loss;
                rec.accuracy = ev.accuracy;
                optimizer.observe(id, rec.loss);
            } catch (const std::exception& e) {
                ok = false;
                error = e.what();
                optimizer.fail(id);
            }
            rec.elapsed_ms = ms_since(start);
            rec.params = std::move(point);

            std::lock_guard lock(state.mutex);
            --state.in_flight;
            if (ok) {
                ++state.completed;
                if (hooks.on_trial) {
                    hooks.on_trial(rec);
                }
                state.records.push_back(std::move(rec));
            } else if (++state.failed > max_failures) {
                state.aborted = true;
                state.abort_reason = "fold " + std::to_string(fold) + " round " + std::to_string(round) + ": " +
                                     std::to_string(state.failed) + " of " + std::to_string(budget) +
                                     " trials failed (last error: " + error + ")";
            }
            state.cv.notify_all();
        }
    };

    if (cfg.concurrency <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(cfg.concurrency));
        for (int w = 0; w < cfg.concurrency; ++w) {
            pool.emplace_back(worker);
        }
    }
    if (state.aborted) {
        throw SearchAborted(state.abort_reason);
    }

    ExplorationRound out;
    out.fold = fold;
    out.round = round;
    out.failed_trials = state.failed;
    out.trials = std::move(state.records);
    std::sort(out.trials.begin(), out.trials.end(),
              [](const TrialRecord& a, const TrialRecord& b) { return a.trial < b.trial; });
    std::vector<std::size_t> order(out.trials.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.trials[a].loss < out.trials[b].loss; });
    order.resize(std::min(order.size(), static_cast<std::size_t>(cfg.keep_per_round)));
    out.selected = std::move(order);
    return out;
}

} // namespace

Policy params_to_policy(const Params& params, const PolicyLayout& layout) {
    if (params.size() != layout.dimensions()) {
        throw std::invalid_argument("policy decode: expected " + std::to_string(layout.dimensions()) +
                                    " dimensions, got " + std::to_string(params.size()));
    }
    Policy policy;
    policy.sub_policies.resize(layout.sub_policies);
    std::size_t d = 0;
    for (auto& sp : policy.sub_policies) {
        sp.ops.resize(layout.ops_per_sub_policy);
        for (auto& op : sp.ops) {
            const double kind = params[d];
            if (!(kind >= 0.0) || kind != std::floor(kind) || kind >= static_cast<double>(kOpCount)) {
                throw std::invalid_argument("policy decode: operation index " + std::to_string(kind) +
                                            " out of range at dimension " + std::to_string(d));
            }
            op.kind = static_cast<OpKind>(static_cast<int>(kind));
            op.probability = params[d + 1];
            op.magnitude = params[d + 2];
            try {
                op.validate();
            } catch (const std::domain_error& e) {
                throw std::invalid_argument(std::string("policy decode: ") + e.what());
            }
            d += 3;
        }
    }
    return policy;
}

Params policy_to_params(const Policy& policy, const PolicyLayout& layout) {
    if (policy.sub_policies.size() != layout.sub_policies) {
        throw std::invalid_argument("policy encode: wrong number of sub-policies");
    }
    Params out;
    out.reserve(layout.dimensions());
    for (const auto& sp : policy.sub_policies) {
        if (sp.ops.size() != layout.ops_per_sub_policy) {
            throw std::invalid_argument("policy encode: wrong number of operations");
        }
        for (const auto& op : sp.ops) {
            out.push_back(static_cast<double>(static_cast<int>(op.kind)));
            out.push_back(op.probability);
            out.push_back(op.magnitude);
        }
    }
    return out;
}

void SearchConfig::validate() const {
    if (folds < 1 || rounds < 1 || trials_per_round < 1 || keep_per_round < 1) {
        throw std::invalid_argument("K, T, B and N must all be at least 1");
    }
    if (keep_per_round > trials_per_round) {
        throw std::invalid_argument("N (policies kept per round) must not exceed B (trials per round)");
    }
    if (layout.sub_policies < 1 || layout.ops_per_sub_policy < 1) {
        throw std::invalid_argument("policies need at least one sub-policy of at least one operation");
    }
    if (concurrency < 1) {
        throw std::invalid_argument("concurrency must be at least 1");
    }
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
        throw std::invalid_argument("split ratio must lie in (0,1)");
    }
    if (!(max_error_fraction >= 0.0 && max_error_fraction <= 1.0)) {
        throw std::invalid_argument("max error fraction must lie in [0,1]");
    }
    tpe.validate();
}

Evaluation evaluate_policy_metrics(const ModelParams& params, const Policy& policy, const Dataset& explore_data,
                                   std::uint64_t seed) {
    const AugmentedView view(explore_data, policy, seed);
    Evaluation ev = evaluate(params, view);
    if (!std::isfinite(ev.loss)) {
        throw std::runtime_error("policy evaluation produced a non-finite loss");
    }
    return ev;
}

double evaluate_policy(const ModelParams& params, const Policy& policy, const Dataset& explore_data,
                       std::uint64_t seed) {
    return evaluate_policy_metrics(params, policy, explore_data, seed).loss;
}

FoldReport explore_fold(const ModelParams& params, const Dataset& explore_data, const SearchConfig& cfg, int fold,
                        const SearchHooks& hooks) {
    cfg.validate();
    if (explore_data.empty()) {
        throw std::invalid_argument("explore_fold: empty exploration split");
    }
    FoldReport report;
    report.fold = fold;
    report.hash_before = params.hash();
    const auto start = Clock::now();

    std::unique_ptr<TpeOptimizer> optimizer;
    for (int round = 0; round < cfg.rounds; ++round) {
        if (!optimizer || cfg.restart_rounds) {
            optimizer = std::make_unique<TpeOptimizer>(cfg.layout.space(), cfg.tpe);
        }
        progress(hooks, "fold " + std::to_string(fold) + ": exploring round " + std::to_string(round));
        ExplorationRound r = run_round(*optimizer, params, explore_data, cfg, fold, round, hooks);
        report.completed_trials += r.trials.size();
        report.failed_trials += r.failed_trials;
        report.rounds.push_back(std::move(r));
    }
    report.explore_ms = ms_since(start);
    report.hash_after = params.hash();
    return report;
}

SearchResult fast_autoaugment(const Dataset& train_data, const SearchConfig& cfg, const SearchHooks& hooks) {
    cfg.validate();
    train_data.validate();
    const auto hist = train_data.class_histogram();
    for (std::size_t c = 0; c < hist.size(); ++c) {
        if (hist[c] < static_cast<std::size_t>(std::max(cfg.folds, 2))) {
            throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(hist[c]) +
                                        " samples, fewer than required for the split");
        }
    }
    const std::uint64_t split_seed = derive_seed(cfg.master_seed, StreamTag::Split);
    const Architecture arch = architecture_for(train_data);

    SearchResult result;
    std::vector<std::string> status(static_cast<std::size_t>(cfg.folds), "not started");
    for (int fold = 0; fold < cfg.folds; ++fold) {
        try {
            const FoldSplit split = stratified_shuffle_split(train_data, fold, split_seed, cfg.split_ratio);
            TrainConfig tc = cfg.fold_train;
            tc.seed = derive_seed(cfg.master_seed, StreamTag::Init, {static_cast<std::uint64_t>(fold)});
            tc.augmentation.reset();
            progress(hooks, "fold " + std::to_string(fold) + ": training on " + std::to_string(split.d_m.size()) +
                                " images");
            const auto train_start = Clock::now();
            const ModelParams model = train(ModelParams::initialize(arch, tc.seed), split.d_m, tc);
            const double train_ms = ms_since(train_start);

            Dataset explore = subsample(split.d_a, cfg.eval_subsample,
                                        derive_seed(cfg.master_seed, StreamTag::Subsample, {static_cast<std::uint64_t>(fold)}));
            FoldReport report = explore_fold(model, explore, cfg, fold, hooks);
            report.train_ms = train_ms;
            report.baseline = evaluate(model, DatasetSource(explore));
            if (report.hash_before != report.hash_after) {
                throw std::logic_error("fold model changed during exploration");
            }
            report.model = model;
            report.explore_data = std::move(explore);
            result.folds.push_back(std::move(report));
            status[static_cast<std::size_t>(fold)] = "completed";
        } catch (const std::exception& e) {
            status[static_cast<std::size_t>(fold)] = std::string("failed: ") + e.what();
            std::ostringstream msg;
            msg << "search aborted in fold " << fold << ";";
            for (std::size_t f = 0; f < status.size(); ++f) {
                msg << " fold " << f << " " << status[f] << (f + 1 < status.size() ? ";" : "");
            }
            throw SearchAborted(msg.str());
        }
    }

    for (const auto& fold : result.folds) {
        for (const auto& round : fold.rounds) {
            for (std::size_t idx : round.selected) {
                const TrialRecord& t = round.trials[idx];
                result.policies.policies.push_back({t.policy, t.fold, t.round, t.trial, t.loss});
            }
        }
    }
    std::sort(result.policies.policies.begin(), result.policies.policies.end(),
              [](const PolicyRecord& a, const PolicyRecord& b) {
                  return std::tie(a.loss, a.fold, a.round, a.trial) < std::tie(b.loss, b.fold, b.round, b.trial);
              });
    return result;
}

ModelParams retrain_with_policies(const Dataset& train_data, const PolicySet& policies, const TrainConfig& cfg) {
    if (policies.empty()) {
        throw std::invalid_argument("retrain_with_policies: empty policy set");
    }
    TrainConfig tc = cfg;
    tc.augmentation = policies;
    return train(ModelParams::initialize(architecture_for(train_data), tc.seed), train_data, tc);
}

PolicySet random_policy_set(std::size_t count, const PolicyLayout& layout, std::uint64_t seed) {
    PolicySet set;
    Rng rng(derive_seed(seed, StreamTag::Control));
    for (std::size_t i = 0; i < count; ++i) {
        set.policies.push_back({random_policy(layout.sub_policies, layout.ops_per_sub_policy, rng), 0, 0,
                                static_cast<int>(i), 0.0});
    }
    return set;
}

std::string trial_log_line(const TrialRecord& record, const SearchSpace& space) {
    nlohmann::ordered_json j;
    j["fold"] = record.fold;
    j["round"] = record.round;
    j["trial"] = record.trial;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (std::size_t d = 0; d < space.size() && d < record.params.size(); ++d) {
        const Dimension& dim = space[d];
        if (dim.categorical()) {
            const auto idx = static_cast<std::size_t>(record.params[d]);
            if (idx < dim.labels.size()) {
                params[dim.name] = dim.labels[idx];
            } else {
                params[dim.name] = idx;
            }
        } else {
            params[dim.name] = record.params[d];
        }
    }
    j["params"] = std::move(params);
    j["loss"] = record.loss;
    j["elapsed_ms"] = std::round(record.elapsed_ms * 1000.0) / 1000.0;
    return j.dump();
}

} // namespace faa
