#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "faa/cli.hpp"
#include "faa/errors.hpp"

namespace faa::cli {

namespace {

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted.store(true); }

// Installs the SIGINT handler for the lifetime of a command.
class InterruptGuard {
public:
    InterruptGuard() {
        g_interrupted.store(false);
        previous_ = std::signal(SIGINT, on_sigint);
    }
    ~InterruptGuard() { std::signal(SIGINT, previous_); }
    InterruptGuard(const InterruptGuard&) = delete;
    InterruptGuard& operator=(const InterruptGuard&) = delete;

private:
    void (*previous_)(int) = SIG_DFL;
};

class Interrupted : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Flags {
    std::string data;
    std::string test;
    std::string config;
    std::string out = "faa-out";
    std::string policies;
    std::string checkpoint;
    std::string sub_policy;
    std::string sizes = "5,25,50,100,200,all";
    std::string suite = "all";
    std::optional<int> k, t, b, n, concurrency, epochs;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> eval_subsample;
    std::optional<double> lr;
    bool baseline_aug = false;
    bool restart_rounds = false;
    std::size_t draws = 10000;
    std::size_t samples = 8;
    std::size_t dump = 16;
    std::size_t random_policies = 0;
    int repeats = 3;
    int runs = 100;
    int trials = 150;
};

SearchConfig build_config(const Flags& f) {
    SearchConfig cfg;
    if (!f.config.empty()) {
        cfg = search_config_from_json(load_config_file(f.config), cfg);
    }
    if (f.k) cfg.folds = *f.k;
    if (f.t) cfg.rounds = *f.t;
    if (f.b) cfg.trials_per_round = *f.b;
    if (f.n) cfg.keep_per_round = *f.n;
    if (f.seed) cfg.master_seed = *f.seed;
    if (f.concurrency) cfg.concurrency = *f.concurrency;
    if (f.eval_subsample) cfg.eval_subsample = *f.eval_subsample;
    if (f.epochs) cfg.fold_train.epochs = *f.epochs;
    if (f.lr) cfg.fold_train.learning_rate = *f.lr;
    if (f.baseline_aug) cfg.fold_train.baseline_augment = true;
    if (f.restart_rounds) cfg.restart_rounds = true;
    if (const char* env = std::getenv("FAA_WORKERS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long workers = std::strtol(env, &end, 10);
        if (*end != '\0' || workers < 1 || workers > 1024) {
            throw ConfigError(std::string("FAA_WORKERS must be a positive integer, got \"") + env + "\"");
        }
        cfg.concurrency = static_cast<int>(workers);
    }
    if (cfg.fold_train.epochs < 1 || !(cfg.fold_train.learning_rate > 0.0) || cfg.fold_train.batch_size < 1) {
        throw ConfigError("training needs epochs >= 1, batch size >= 1 and a positive learning rate");
    }
    cfg.retrain = cfg.fold_train;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

Json evaluation_json(const Evaluation& ev) {
    return {{"loss", ev.loss}, {"accuracy", ev.accuracy}, {"error", 1.0 - ev.accuracy}, {"count", ev.count}};
}

PolicySet load_policies(const std::string& path) {
    try {
        return load_policy_set(path);
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

// One policy holding every sub-policy of the set, so T(D) of the result is
// the union over the whole set.
Policy pooled_policy(const std::vector<SubPolicy>& pool) {
    Policy p;
    p.sub_policies = pool;
    return p;
}

PolicySet single_policy_set(std::vector<SubPolicy> pool) {
    PolicySet set;
    set.policies.push_back({pooled_policy(pool), 0, 0, 0, 0.0});
    return set;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    os << text;
}

double median(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------- search

int cmd_search(const Flags& f, std::ostream& out, std::ostream& err, RunManifest& manifest) {
    const SearchConfig cfg = build_config(f);
    manifest.config() = search_config_to_json(cfg);
    const Dataset data = resolve_dataset(f.data);
    manifest.add_dataset("train", f.data, data);

    Json seeds;
    seeds["master"] = cfg.master_seed;
    seeds["split"] = hex64(derive_seed(cfg.master_seed, StreamTag::Split));
    for (int k = 0; k < cfg.folds; ++k) {
        seeds["fold_init"].push_back(hex64(derive_seed(cfg.master_seed, StreamTag::Init, {std::uint64_t(k)})));
    }
    manifest.seeds() = std::move(seeds);

    const fs::path dir(f.out);
    const fs::path trials_path = dir / "trials.jsonl";
    const fs::path policies_path = dir / "policies.json";
    manifest.add_output("trials", trials_path);
    manifest.add_output("policies", policies_path);
    std::ofstream trials_log(trials_path, std::ios::binary);
    if (!trials_log) {
        throw std::runtime_error("cannot write " + trials_path.string());
    }

    const SearchSpace space = cfg.layout.space();
    InterruptGuard guard;
    SearchHooks hooks;
    hooks.on_trial = [&](const TrialRecord& r) { trials_log << trial_log_line(r, space) << '\n'; };
    hooks.on_progress = [&](const std::string& msg) { err << msg << '\n'; };
    hooks.cancel = &g_interrupted;

    const auto start = Clock::now();
    SearchResult result;
    try {
        result = fast_autoaugment(data, cfg, hooks);
    } catch (const SearchAborted& e) {
        trials_log.flush();
        if (g_interrupted.load()) {
            throw Interrupted(e.what());
        }
        throw;
    }
    trials_log.flush();
    manifest.timings()["total_s"] = seconds_since(start);

    // Invariants every search must satisfy.
    const std::size_t expected_per_fold = static_cast<std::size_t>(cfg.rounds) * cfg.trials_per_round;
    for (const FoldReport& fold : result.folds) {
        if (fold.hash_before != fold.hash_after) {
            throw std::logic_error("fold " + std::to_string(fold.fold) + " model changed during exploration");
        }
        if (fold.completed_trials != expected_per_fold) {
            throw std::logic_error("fold " + std::to_string(fold.fold) + " completed " +
                                   std::to_string(fold.completed_trials) + " trials, expected " +
                                   std::to_string(expected_per_fold));
        }
    }
    const std::size_t expected_policies =
        static_cast<std::size_t>(cfg.folds) * cfg.rounds * cfg.keep_per_round;
    if (result.policies.size() != expected_policies) {
        throw std::logic_error("merged " + std::to_string(result.policies.size()) + " policies, expected " +
                               std::to_string(expected_policies));
    }

    save_policy_set(policies_path, result.policies);

    Json folds = Json::array();
    for (const FoldReport& fold : result.folds) {
        Json jf;
        jf["fold"] = fold.fold;
        jf["hash_before"] = hex64(fold.hash_before);
        jf["hash_after"] = hex64(fold.hash_after);
        jf["completed_trials"] = fold.completed_trials;
        jf["failed_trials"] = fold.failed_trials;
        jf["train_s"] = fold.train_ms / 1000.0;
        jf["explore_s"] = fold.explore_ms / 1000.0;
        jf["explore_size"] = fold.explore_data.size();
        jf["unaugmented"] = evaluation_json(fold.baseline);
        for (const ExplorationRound& round : fold.rounds) {
            Json jr;
            jr["round"] = round.round;
            double all = 0.0;
            for (const auto& t : round.trials) {
                all += t.loss;
            }
            jr["mean_loss"] = all / static_cast<double>(round.trials.size());
            Json selected = Json::array();
            for (std::size_t idx : round.selected) {
                const TrialRecord& t = round.trials[idx];
                selected.push_back({{"trial", t.trial}, {"loss", t.loss}, {"accuracy", t.accuracy}});
            }
            jr["selected"] = std::move(selected);
            jf["rounds"].push_back(std::move(jr));
        }
        folds.push_back(std::move(jf));
        manifest.timings()["fold_" + std::to_string(fold.fold) + "_s"] = (fold.train_ms + fold.explore_ms) / 1000.0;
    }
    manifest.result()["policies"] = result.policies.size();
    manifest.result()["sub_policies"] = result.policies.size() * cfg.layout.sub_policies;
    manifest.result()["best_loss"] = result.policies.policies.front().loss;
    manifest.result()["folds"] = std::move(folds);

    out << "searched " << result.policies.size() << " policies (" << cfg.folds << " folds x " << cfg.rounds
        << " rounds x top " << cfg.keep_per_round << ")\n";
    for (const FoldReport& fold : result.folds) {
        out << "  fold " << fold.fold << ": " << fold.completed_trials << " trials, unaugmented loss "
            << fmt(fold.baseline.loss) << ", best policy loss ";
        double best = INFINITY;
        for (const auto& round : fold.rounds) {
            for (const auto& t : round.trials) {
                best = std::min(best, t.loss);
            }
        }
        out << fmt(best) << '\n';
    }
    out << "wrote " << policies_path.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- retrain

int cmd_retrain(const Flags& f, std::ostream& out, std::ostream&, RunManifest& manifest) {
    SearchConfig cfg = build_config(f);
    const Dataset train_data = resolve_dataset(f.data);
    manifest.add_dataset("train", f.data, train_data);
    std::optional<Dataset> test_data;
    if (!f.test.empty()) {
        test_data = resolve_dataset(f.test);
        manifest.add_dataset("test", f.test, *test_data);
    }
    if (!f.policies.empty() && f.random_policies > 0) {
        throw ConfigError("--policies and --random-policies are mutually exclusive");
    }

    TrainConfig tc = cfg.retrain;
    tc.seed = cfg.master_seed;
    std::string mode = "baseline";
    if (!f.policies.empty()) {
        PolicySet set = load_policies(f.policies);
        manifest.result()["policy_count"] = set.size();
        manifest.result()["sub_policy_count"] = set.flatten().size();
        tc.augmentation = std::move(set);
        mode = "policies";
    } else if (f.random_policies > 0) {
        tc.augmentation = random_policy_set(f.random_policies, cfg.layout, cfg.master_seed);
        mode = "random";
    }
    Json c = search_config_to_json(cfg);
    manifest.config() = {{"mode", mode}, {"seed", cfg.master_seed}, {"train", c["train"]}};
    if (!f.policies.empty()) manifest.config()["policies"] = f.policies;
    if (f.random_policies > 0) manifest.config()["random_policies"] = f.random_policies;
    manifest.seeds()["train"] = tc.seed;

    const auto start = Clock::now();
    TrainLog log;
    const ModelParams model =
        train(ModelParams::initialize(architecture_for(train_data), tc.seed), train_data, tc, &log);
    manifest.timings()["train_s"] = seconds_since(start);

    const fs::path ckpt = fs::path(f.out) / "model.faam";
    save_checkpoint(ckpt, model);
    manifest.add_output("checkpoint", ckpt);

    const Evaluation train_ev = evaluate(model, DatasetSource(train_data));
    manifest.result()["mode"] = mode;
    manifest.result()["initial_loss"] = log.initial_loss;
    manifest.result()["final_train_loss"] = log.final_loss;
    manifest.result()["train"] = evaluation_json(train_ev);
    manifest.result()["parameter_hash"] = hex64(model.hash());
    out << "retrain (" << mode << "): train accuracy " << fmt(train_ev.accuracy);
    if (test_data) {
        const Evaluation test_ev = evaluate(model, DatasetSource(*test_data));
        manifest.result()["test"] = evaluation_json(test_ev);
        out << ", test accuracy " << fmt(test_ev.accuracy) << ", test error " << fmt(1.0 - test_ev.accuracy);
    }
    out << "\nwrote " << ckpt.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Flags& f, std::ostream& out, std::ostream&, RunManifest& manifest) {
    if (f.checkpoint.empty()) {
        throw ConfigError("eval needs --checkpoint");
    }
    const std::uint64_t seed = f.seed.value_or(0);
    const Dataset data = resolve_dataset(f.data);
    manifest.add_dataset("eval", f.data, data);
    ModelParams model = [&] {
        try {
            return load_checkpoint(f.checkpoint);
        } catch (const std::exception& e) {
            throw DataError(f.checkpoint + ": " + e.what());
        }
    }();
    if (!model.architecture().accepts(data.images.front()) || model.architecture().classes < data.class_count) {
        throw DataError("checkpoint " + f.checkpoint + " does not match the shape or classes of " + f.data);
    }
    manifest.config() = {{"checkpoint", f.checkpoint}, {"seed", seed}};
    manifest.seeds()["augment"] = seed;

    const Evaluation plain = evaluate(model, DatasetSource(data));
    manifest.result()["plain"] = evaluation_json(plain);
    out << "plain: loss " << fmt(plain.loss) << ", accuracy " << fmt(plain.accuracy) << " over " << plain.count
        << " images\n";
    if (!f.policies.empty()) {
        const PolicySet set = load_policies(f.policies);
        manifest.config()["policies"] = f.policies;
        const Policy pooled = pooled_policy(set.flatten());
        const Evaluation aug = evaluate(model, AugmentedView(data, pooled, seed));
        manifest.result()["augmented"] = evaluation_json(aug);
        out << "augmented (" << pooled.sub_policies.size() << " sub-policies): loss " << fmt(aug.loss)
            << ", accuracy " << fmt(aug.accuracy) << " over " << aug.count << " images\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------- apply

int cmd_apply(const Flags& f, std::ostream& out, std::ostream&, RunManifest& manifest) {
    if (f.sub_policy.empty()) {
        throw ConfigError("apply needs --sub-policy (e.g. Invert:0.5:0,Rotate:0.5:0.8)");
    }
    SubPolicy sp;
    try {
        sp = parse_sub_policy(f.sub_policy);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("--sub-policy: ") + e.what());
    }
    if (f.draws < 1 || f.samples < 1) {
        throw ConfigError("--draws and --samples must be positive");
    }
    const std::uint64_t seed = f.seed.value_or(0);
    const Dataset data = resolve_dataset(f.data);
    manifest.add_dataset("source", f.data, data);
    manifest.config() = {{"sub_policy", format_sub_policy(sp)},
                         {"draws", f.draws},
                         {"samples", f.samples},
                         {"dump", f.dump},
                         {"seed", seed}};
    manifest.seeds()["augment"] = seed;

    const std::size_t samples = std::min(f.samples, data.size());
    const PairingPool pool{std::span<const Image>(data.images), std::nullopt};
    BranchTable table;
    Dataset dumped;
    dumped.class_count = data.class_count;
    dumped.name = "apply";
    std::vector<bool> applied;
    for (std::size_t d = 0; d < f.draws; ++d) {
        const std::size_t j = d % samples;
        Rng rng(derive_seed(seed, StreamTag::Augment, {d}));
        PairingPool local = pool;
        local.self_index = j;
        Image img = apply_sub_policy(data.images[j], sp, rng, &local, &applied);
        std::string key;
        for (bool a : applied) {
            key += a ? '1' : '0';
        }
        ++table.counts[key];
        ++table.draws;
        if (d < f.dump) {
            dumped.images.push_back(std::move(img));
        }
    }

    const fs::path dir(f.out);
    if (!dumped.images.empty()) {
        save_raw_dir(dumped, dir / "fixtures");
        manifest.add_output("fixtures", dir / "fixtures");
    }

    // Every branch, including ones never observed.
    const std::size_t n_ops = sp.ops.size();
    std::string csv = csv_row({"branch", "name", "count", "frequency", "expected"});
    Json branches = Json::array();
    out << "branch frequencies over " << table.draws << " draws of " << format_sub_policy(sp) << '\n';
    for (std::size_t mask = (std::size_t{1} << n_ops); mask-- > 0;) {
        std::string key;
        double expected = 1.0;
        for (std::size_t o = 0; o < n_ops; ++o) {
            const bool on = (mask >> (n_ops - 1 - o)) & 1U;
            key += on ? '1' : '0';
            expected *= on ? sp.ops[o].probability : 1.0 - sp.ops[o].probability;
        }
        const std::size_t count = table.counts.count(key) ? table.counts.at(key) : 0;
        const double freq = table.frequency(key);
        csv += csv_row({key, branch_name(key), std::to_string(count), fmt(freq, 8), fmt(expected, 8)});
        branches.push_back({{"branch", key}, {"name", branch_name(key)}, {"count", count}, {"frequency", freq},
                            {"expected", expected}});
        out << "  " << branch_name(key) << ": " << count << " (" << fmt(100.0 * freq, 4) << "%, expected "
            << fmt(100.0 * expected, 4) << "%)\n";
    }
    write_text(dir / "branches.csv", csv);
    manifest.add_output("branches", dir / "branches.csv");
    manifest.result()["draws"] = table.draws;
    manifest.result()["branches"] = std::move(branches);
    return kExitOk;
}

// ---------------------------------------------------------------- sweep-subpolicies

std::vector<std::size_t> parse_sizes(const std::string& text, std::size_t pool_size) {
    std::vector<std::size_t> sizes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t value = 0;
        if (item == "all") {
            value = pool_size;
        } else {
            try {
                std::size_t used = 0;
                const long long v = std::stoll(item, &used);
                if (used != item.size() || v < 1) {
                    throw std::invalid_argument(item);
                }
                value = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                throw ConfigError("--sizes: bad entry \"" + item + "\"");
            }
        }
        value = std::min(value, pool_size);
        if (std::find(sizes.begin(), sizes.end(), value) == sizes.end()) {
            sizes.push_back(value);
        }
    }
    if (sizes.empty()) {
        throw ConfigError("--sizes is empty");
    }
    return sizes;
}

int cmd_sweep(const Flags& f, std::ostream& out, std::ostream& err, RunManifest& manifest) {
    SearchConfig cfg = build_config(f);
    if (f.policies.empty() || f.test.empty()) {
        throw ConfigError("sweep-subpolicies needs --policies and --test");
    }
    if (f.repeats < 1) {
        throw ConfigError("--repeats must be positive");
    }
    const Dataset train_data = resolve_dataset(f.data);
    const Dataset test_data = resolve_dataset(f.test);
    manifest.add_dataset("train", f.data, train_data);
    manifest.add_dataset("test", f.test, test_data);
    const std::vector<SubPolicy> pool = load_policies(f.policies).flatten();
    if (pool.empty()) {
        throw DataError(f.policies + ": no sub-policies");
    }
    const std::vector<std::size_t> sizes = parse_sizes(f.sizes, pool.size());
    Json c = search_config_to_json(cfg);
    manifest.config() = {{"policies", f.policies},
                         {"sizes", sizes},
                         {"repeats", f.repeats},
                         {"seed", cfg.master_seed},
                         {"train", c["train"]}};
    manifest.seeds()["master"] = cfg.master_seed;

    InterruptGuard guard;
    const fs::path dir(f.out);
    std::string runs_csv = csv_row({"pool_size", "repeat", "test_error", "test_loss"});
    std::string summary_csv = csv_row({"pool_size", "repeats", "median_error", "mean_error", "std_error"});
    Json summary = Json::array();
    const auto start = Clock::now();
    out << "pool of " << pool.size() << " sub-policies\n";
    for (std::size_t size : sizes) {
        std::vector<double> errors;
        for (int r = 0; r < f.repeats; ++r) {
            if (g_interrupted.load()) {
                throw Interrupted("sweep interrupted");
            }
            // Seeded subset of the pool; the same training seed per repeat for all sizes.
            std::vector<std::size_t> idx(pool.size());
            std::iota(idx.begin(), idx.end(), 0);
            Rng pick(derive_seed(cfg.master_seed, StreamTag::Subsample, {size, std::uint64_t(r)}));
            for (std::size_t i = 0; i < size; ++i) {
                std::swap(idx[i], idx[i + pick.uniform_index(idx.size() - i)]);
            }
            std::vector<SubPolicy> chosen;
            for (std::size_t i = 0; i < size; ++i) {
                chosen.push_back(pool[idx[i]]);
            }
            TrainConfig tc = cfg.retrain;
            tc.seed = derive_seed(cfg.master_seed, StreamTag::Init, {std::uint64_t(r)});
            tc.augmentation = single_policy_set(std::move(chosen));
            const ModelParams model =
                train(ModelParams::initialize(architecture_for(train_data), tc.seed), train_data, tc);
            const Evaluation ev = evaluate(model, DatasetSource(test_data));
            errors.push_back(1.0 - ev.accuracy);
            runs_csv += csv_row({std::to_string(size), std::to_string(r), fmt(1.0 - ev.accuracy, 8), fmt(ev.loss, 8)});
            err << "size " << size << " repeat " << r << ": test error " << fmt(1.0 - ev.accuracy) << '\n';
        }
        const double med = median(errors);
        const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
        double var = 0.0;
        for (double e : errors) {
            var += (e - mean) * (e - mean);
        }
        const double se =
            errors.size() > 1 ? std::sqrt(var / static_cast<double>(errors.size() - 1) / static_cast<double>(errors.size()))
                              : 0.0;
        summary_csv += csv_row({std::to_string(size), std::to_string(errors.size()), fmt(med, 8), fmt(mean, 8), fmt(se, 8)});
        summary.push_back({{"pool_size", size}, {"median_error", med}, {"mean_error", mean}, {"std_error", se},
                           {"errors", errors}});
        out << "  " << size << " sub-policies: median test error " << fmt(med) << " (se " << fmt(se) << ")\n";
    }
    manifest.timings()["total_s"] = seconds_since(start);
    write_text(dir / "sweep.csv", summary_csv);
    write_text(dir / "sweep_runs.csv", runs_csv);
    manifest.add_output("summary_csv", dir / "sweep.csv");
    manifest.add_output("runs_csv", dir / "sweep_runs.csv");
    manifest.result()["pool_size"] = pool.size();
    manifest.result()["sizes"] = std::move(summary);
    return kExitOk;
}

// ---------------------------------------------------------------- bench-tpe

int cmd_bench_tpe(const Flags& f, std::ostream& out, std::ostream&, RunManifest& manifest) {
    std::vector<TpeSuite> suites;
    if (f.suite == "quadratic" || f.suite == "all") suites.push_back(TpeSuite::Quadratic);
    if (f.suite == "step" || f.suite == "all") suites.push_back(TpeSuite::Step);
    if (suites.empty()) {
        throw ConfigError("--suite must be quadratic, step or all");
    }
    if (f.runs < 1 || f.trials < 1) {
        throw ConfigError("--runs and --trials must be positive");
    }
    const std::uint64_t seed = f.seed.value_or(0);
    manifest.config() = {{"suite", f.suite}, {"runs", f.runs}, {"trials", f.trials}, {"seed", seed}};
    manifest.seeds()["master"] = seed;

    const fs::path dir(f.out);
    std::string csv = csv_row({"suite", "run", "tpe_best", "tpe_best_x", "random_best", "tpe_hit", "random_hit",
                               "tpe_success", "tpe_wins"});
    const auto start = Clock::now();
    for (TpeSuite suite : suites) {
        const TpeBenchSummary s = bench_tpe(suite, f.runs, f.trials, seed);
        for (std::size_t i = 0; i < s.runs.size(); ++i) {
            const TpeBenchRun& r = s.runs[i];
            csv += csv_row({suite_name(suite), std::to_string(i), fmt(r.tpe_best, 10), fmt(r.tpe_best_x, 10),
                            fmt(r.random_best, 10), std::to_string(r.tpe_hit), std::to_string(r.random_hit),
                            r.tpe_success ? "1" : "0", r.tpe_wins ? "1" : "0"});
        }
        manifest.result()[suite_name(suite)] = {{"oracle_x", s.oracle_x},
                                                {"oracle_value", s.oracle_value},
                                                {"runs", s.runs.size()},
                                                {"successes", s.successes()},
                                                {"wins", s.wins()}};
        out << suite_name(suite) << ": grid optimum f(" << fmt(s.oracle_x) << ") = " << fmt(s.oracle_value)
            << "; TPE reached it in " << s.successes() << "/" << s.runs.size() << " runs, beat random search in "
            << s.wins() << "/" << s.runs.size() << '\n';
    }
    manifest.timings()["total_s"] = seconds_since(start);
    write_text(dir / "bench_tpe.csv", csv);
    manifest.add_output("csv", dir / "bench_tpe.csv");
    return kExitOk;
}

void add_data_flags(CLI::App* cmd, Flags& f, bool required = true) {
    auto* opt = cmd->add_option("--data", f.data, "Dataset: synth:CxN[:HxW[xC]][@seed], idx:PATH, raw:DIR or PATH");
    if (required) {
        opt->required();
    }
    cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", f.seed, "Master seed");
}

void add_train_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file (or a previous manifest.json)");
    cmd->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", f.lr, "SGD learning rate")->check(CLI::PositiveNumber);
}

} // namespace

std::string suite_name(TpeSuite suite) {
    return suite == TpeSuite::Quadratic ? "quadratic" : "step";
}

int TpeBenchSummary::successes() const {
    return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return r.tpe_success; }));
}

int TpeBenchSummary::wins() const {
    return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return r.tpe_wins; }));
}

TpeBenchSummary bench_tpe(TpeSuite suite, int runs, int trials, std::uint64_t seed, TpeConfig config) {
    const auto objective = [suite](double x) {
        if (suite == TpeSuite::Quadratic) {
            return (x - 0.7) * (x - 0.7);
        }
        return std::floor(1000.0 * std::abs(x - 0.7) + 1e-9) / 1000.0;
    };
    TpeBenchSummary s;
    s.suite = suite;
    s.oracle_value = INFINITY;
    for (int i = 0; i <= 1000; ++i) {
        const double x = i / 1000.0;
        if (objective(x) < s.oracle_value) {
            s.oracle_value = objective(x);
            s.oracle_x = x;
        }
    }
    const SearchSpace space = SearchSpace::unit_cube(1);
    for (int run = 0; run < runs; ++run) {
        TpeBenchRun r;
        TpeOptimizer opt(space, config);
        Rng rng(derive_seed(seed, StreamTag::Suggest, {std::uint64_t(run)}));
        Rng control(derive_seed(seed, StreamTag::Control, {std::uint64_t(run)}));
        r.tpe_best = INFINITY;
        r.random_best = INFINITY;
        for (int t = 1; t <= trials; ++t) {
            auto [id, p] = opt.suggest(rng);
            const double v = objective(p[0]);
            opt.observe(id, v);
            if (v < r.tpe_best) {
                r.tpe_best = v;
                r.tpe_best_x = p[0];
            }
            if (r.tpe_hit == 0 && v <= s.oracle_value) {
                r.tpe_hit = t;
            }
            const double rv = objective(control.uniform());
            r.random_best = std::min(r.random_best, rv);
            if (r.random_hit == 0 && rv <= s.oracle_value) {
                r.random_hit = t;
            }
        }
        if (suite == TpeSuite::Quadratic) {
            r.tpe_success = std::abs(r.tpe_best_x - s.oracle_x) <= 0.05;
            r.tpe_wins = r.tpe_best < r.random_best;
        } else {
            r.tpe_success = r.tpe_hit > 0;
            r.tpe_wins = r.tpe_best < r.random_best ||
                         (r.tpe_best == r.random_best && r.tpe_hit > 0 && r.tpe_hit < r.random_hit);
        }
        s.runs.push_back(r);
    }
    return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Density-matching augmentation policy search", "faa"};
    app.require_subcommand(1);
    Flags f;

    auto* search = app.add_subcommand("search", "Search augmentation policies and write policies.json");
    add_data_flags(search, f);
    add_train_flags(search, f);
    search->add_option("--k", f.k, "Folds")->check(CLI::PositiveNumber);
    search->add_option("--t", f.t, "Exploration rounds per fold")->check(CLI::PositiveNumber);
    search->add_option("--b", f.b, "Trials per round")->check(CLI::PositiveNumber);
    search->add_option("--n", f.n, "Policies kept per round")->check(CLI::PositiveNumber);
    search->add_option("--concurrency", f.concurrency, "Concurrent evaluations per fold")->check(CLI::PositiveNumber);
    search->add_option("--eval-subsample", f.eval_subsample, "Cap on exploration images per fold (0 = all)");
    search->add_flag("--fold-baseline-aug", f.baseline_aug, "Crop/flip augmentation while training fold models");
    search->add_flag("--restart-rounds", f.restart_rounds, "Fresh optimizer history every round");

    auto* retrain = app.add_subcommand("retrain", "Train from scratch, optionally with a policy set");
    add_data_flags(retrain, f);
    add_train_flags(retrain, f);
    retrain->add_option("--test", f.test, "Held-out dataset for test accuracy");
    retrain->add_option("--policies", f.policies, "policies.json to augment with");
    retrain->add_option("--random-policies", f.random_policies, "Augment with this many uniformly random policies");
    retrain->add_flag("--baseline-aug,--fold-baseline-aug", f.baseline_aug, "Crop/flip augmentation");

    auto* eval = app.add_subcommand("eval", "Loss and accuracy of a checkpoint");
    add_data_flags(eval, f);
    eval->add_option("--checkpoint", f.checkpoint, "Model checkpoint")->required();
    eval->add_option("--policies", f.policies, "Also evaluate on the policy-augmented dataset");

    auto* apply = app.add_subcommand("apply", "Apply a sub-policy repeatedly and tabulate its branches");
    add_data_flags(apply, f);
    apply->add_option("--sub-policy", f.sub_policy, "Kind:p:magnitude,Kind:p:magnitude")->required();
    apply->add_option("--draws", f.draws, "Number of applications")->capture_default_str();
    apply->add_option("--samples", f.samples, "Source images cycled through")->capture_default_str();
    apply->add_option("--dump", f.dump, "Augmented images written as fixtures")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep-subpolicies", "Test error against the number of sub-policies used");
    add_data_flags(sweep, f);
    add_train_flags(sweep, f);
    sweep->add_option("--test", f.test, "Held-out dataset")->required();
    sweep->add_option("--policies", f.policies, "Searched policies.json (the pool)")->required();
    sweep->add_option("--sizes", f.sizes, "Comma-separated pool sizes, 'all' for the whole pool")->capture_default_str();
    sweep->add_option("--repeats", f.repeats, "Seeds per pool size")->capture_default_str();

    auto* bench = app.add_subcommand("bench-tpe", "Optimizer convergence on toy objectives");
    bench->add_option("--out", f.out, "Output directory")->capture_default_str();
    bench->add_option("--seed", f.seed, "Master seed");
    bench->add_option("--suite", f.suite, "quadratic, step or all")->capture_default_str();
    bench->add_option("--runs", f.runs, "Seeded runs per suite")->capture_default_str();
    bench->add_option("--trials", f.trials, "Evaluations per run")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    CLI::App* cmd = app.get_subcommands().front();
    RunManifest manifest(cmd->get_name());
    manifest.config()["argv"] = args;
    const fs::path manifest_path = fs::path(f.out) / "manifest.json";
    int code = kExitOk;
    try {
        fs::create_directories(f.out);
        if (cmd == search) code = cmd_search(f, out, err, manifest);
        else if (cmd == retrain) code = cmd_retrain(f, out, err, manifest);
        else if (cmd == eval) code = cmd_eval(f, out, err, manifest);
        else if (cmd == apply) code = cmd_apply(f, out, err, manifest);
        else if (cmd == sweep) code = cmd_sweep(f, out, err, manifest);
        else code = cmd_bench_tpe(f, out, err, manifest);
        manifest.set_status("completed");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        manifest.set_status("failed", e.what());
        code = kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        manifest.set_status("failed", e.what());
        code = kExitData;
    } catch (const ParseError& e) {
        err << "data error: " << e.what() << '\n';
        manifest.set_status("failed", e.what());
        code = kExitData;
    } catch (const Interrupted& e) {
        err << "interrupted: " << e.what() << '\n';
        manifest.set_status("aborted", e.what());
        code = kExitInterrupted;
    } catch (const SearchAborted& e) {
        err << "search aborted: " << e.what() << '\n';
        manifest.set_status("aborted", e.what());
        code = kExitSearchAborted;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        manifest.set_status("failed", e.what());
        code = kExitFailure;
    }
    manifest.result()["exit_code"] = code;
    try {
        manifest.write(manifest_path);
    } catch (const std::exception& e) {
        err << "cannot write manifest: " << e.what() << '\n';
        if (code == kExitOk) {
            code = kExitFailure;
        }
    }
    return code;
}

} // namespace faa::cli
