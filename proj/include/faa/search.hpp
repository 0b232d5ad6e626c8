#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "faa/data.hpp"
#include "faa/model.hpp"
#include "faa/policy.hpp"
#include "faa/tpe.hpp"

namespace faa {

/// Shape of a policy: N_T sub-policies of N_tau operations each.
struct PolicyLayout {
    std::size_t sub_policies = 5;
    std::size_t ops_per_sub_policy = 2;

    std::size_t dimensions() const noexcept { return sub_policies * ops_per_sub_policy * 3; }
    SearchSpace space() const { return SearchSpace::policy_space(sub_policies, ops_per_sub_policy); }
};

/// Decodes a search-space point: dims [(s*N_tau + o)*3 + {0,1,2}] become
/// sub-policy s, slot o = (kind, p, magnitude). Throws std::invalid_argument
/// on a length mismatch or an out-of-range value.
Policy params_to_policy(const Params& params, const PolicyLayout& layout);
Params policy_to_params(const Policy& policy, const PolicyLayout& layout);

struct SearchConfig {
    int folds = 5;
    int rounds = 2;
    int trials_per_round = 200;
    int keep_per_round = 10;
    PolicyLayout layout;
    /// Cap on |D_A| per evaluation (0 = no cap). The subsample is fixed per fold.
    std::size_t eval_subsample = 1024;
    int concurrency = 8;
    std::uint64_t master_seed = 0;
    /// Fraction of each fold's data used to train the fold model.
    double split_ratio = 0.5;
    /// Fresh optimizer history for every round instead of one per fold.
    bool restart_rounds = false;
    /// A fold aborts once more than this fraction of a round's trials error.
    double max_error_fraction = 0.1;
    TrainConfig fold_train;
    TrainConfig retrain;
    TpeConfig tpe;

    /// Throws std::invalid_argument when a count is < 1 or N > B.
    void validate() const;
};

struct TrialRecord {
    int fold = 0;
    int round = 0;
    int trial = 0;
    Params params;
    Policy policy;
    double loss = 0.0;
    /// Accuracy of the fold model on the same augmented data.
    double accuracy = 0.0;
    double elapsed_ms = 0.0;
};

struct ExplorationRound {
    int fold = 0;
    int round = 0;
    /// Completed trials ordered by trial index.
    std::vector<TrialRecord> trials;
    /// Indices into `trials` of the top-N by (loss, trial).
    std::vector<std::size_t> selected;
    std::size_t failed_trials = 0;
};

struct FoldReport {
    int fold = 0;
    std::uint64_t hash_before = 0;
    std::uint64_t hash_after = 0;
    std::size_t completed_trials = 0;
    std::size_t failed_trials = 0;
    double train_ms = 0.0;
    double explore_ms = 0.0;
    /// Fold model's loss/accuracy on its (subsampled) exploration split.
    Evaluation baseline;
    std::vector<ExplorationRound> rounds;
    ModelParams model;
    Dataset explore_data;
};

struct SearchResult {
    PolicySet policies;
    std::vector<FoldReport> folds;
};

struct SearchHooks {
    /// Called (serialized) after every completed trial.
    std::function<void(const TrialRecord&)> on_trial;
    /// Free-form progress messages.
    std::function<void(const std::string&)> on_progress;
    /// When it becomes true no new trials start and the search throws SearchAborted.
    const std::atomic<bool>* cancel = nullptr;
};

/// L(theta | T(D_A)): mean loss over the full union of the policy's
/// sub-policies applied to `explore_data`. Pure with respect to `params`.
/// Throws std::runtime_error for a non-finite result.
double evaluate_policy(const ModelParams& params, const Policy& policy, const Dataset& explore_data,
                       std::uint64_t seed);
/// Loss and accuracy in one pass over the same augmented images.
Evaluation evaluate_policy_metrics(const ModelParams& params, const Policy& policy, const Dataset& explore_data,
                                   std::uint64_t seed);

/// Runs cfg.rounds rounds of cfg.trials_per_round completed trials against a
/// frozen fold model and keeps the top cfg.keep_per_round of each round.
/// Throws SearchAborted when too many trials fail or on cancellation.
FoldReport explore_fold(const ModelParams& params, const Dataset& explore_data, const SearchConfig& cfg,
                        int fold, const SearchHooks& hooks = {});

/// Split, per-fold training, exploration and merge. The merged set is
/// ordered by (loss, fold, round, trial).
SearchResult fast_autoaugment(const Dataset& train_data, const SearchConfig& cfg, const SearchHooks& hooks = {});

/// Trains from scratch with one sub-policy drawn per image per epoch from
/// the flattened pool of `policies`.
ModelParams retrain_with_policies(const Dataset& train_data, const PolicySet& policies, const TrainConfig& cfg);

/// `count` uniformly random policies (the random-search control).
PolicySet random_policy_set(std::size_t count, const PolicyLayout& layout, std::uint64_t seed);

/// One JSON-lines record of the trial log.
std::string trial_log_line(const TrialRecord& record, const SearchSpace& space);

} // namespace faa
