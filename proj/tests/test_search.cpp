#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <tuple>

#include "faa/errors.hpp"
#include "faa/search.hpp"

using namespace faa;

namespace {

Dataset small_synth(std::uint64_t seed = 3, int per_class = 40) {
    SynthSpec s;
    s.classes = 2;
    s.per_class = per_class;
    s.noise = 0.15;
    return synth_dataset(s, seed);
}

TrainConfig quick_train(std::uint64_t seed = 1) {
    TrainConfig t;
    t.epochs = 3;
    t.batch_size = 16;
    t.seed = seed;
    return t;
}

SearchConfig tiny_config(int folds, int rounds, int trials, int keep) {
    SearchConfig c;
    c.folds = folds;
    c.rounds = rounds;
    c.trials_per_round = trials;
    c.keep_per_round = keep;
    c.concurrency = 1;
    c.master_seed = 21;
    c.eval_subsample = 32;
    c.fold_train = quick_train();
    c.retrain = quick_train();
    return c;
}

Policy uniform_policy(const PolicyLayout& layout, OpKind kind, double p, double m) {
    Policy pol;
    for (std::size_t s = 0; s < layout.sub_policies; ++s) {
        SubPolicy sp;
        for (std::size_t o = 0; o < layout.ops_per_sub_policy; ++o) {
            sp.ops.push_back({kind, p, m});
        }
        pol.sub_policies.push_back(sp);
    }
    return pol;
}

struct Trained {
    Dataset data;
    ModelParams model;
};

const Trained& trained_fixture() {
    static const Trained t = [] {
        Trained out{small_synth(), {}};
        out.model = train(ModelParams::initialize(architecture_for(out.data), 5), out.data, quick_train(2));
        return out;
    }();
    return t;
}

} // namespace

TEST_CASE("params_to_policy") {
    const PolicyLayout layout;
    SUBCASE("all zeros decodes to ShearX with p=0 and magnitude 0") {
        const Policy p = params_to_policy(Params(30, 0.0), layout);
        REQUIRE(p.sub_policies.size() == 5);
        for (const auto& sp : p.sub_policies) {
            REQUIRE(sp.ops.size() == 2);
            for (const auto& op : sp.ops) {
                CHECK(op.kind == OpKind::ShearX);
                CHECK(op.probability == 0.0);
                CHECK(op.magnitude == 0.0);
            }
        }
    }
    SUBCASE("layout of the flat vector") {
        Params v(30, 0.0);
        v[(3 * 2 + 1) * 3 + 0] = 6;
        v[(3 * 2 + 1) * 3 + 1] = 0.25;
        v[(3 * 2 + 1) * 3 + 2] = 0.75;
        const auto op = params_to_policy(v, layout).sub_policies[3].ops[1];
        CHECK(op.kind == OpKind::Invert);
        CHECK(op.probability == 0.25);
        CHECK(op.magnitude == 0.75);
    }
    SUBCASE("encode and decode round-trip") {
        const auto space = layout.space();
        Rng rng(12);
        for (int i = 0; i < 1000; ++i) {
            Params v(space.size());
            for (std::size_t d = 0; d < space.size(); ++d) {
                v[d] = space[d].categorical() ? static_cast<double>(rng.uniform_index(space[d].cardinality))
                                              : rng.uniform();
            }
            REQUIRE(policy_to_params(params_to_policy(v, layout), layout) == v);
            const Policy p = random_policy(5, 2, rng);
            REQUIRE(params_to_policy(policy_to_params(p, layout), layout) == p);
        }
    }
    SUBCASE("rejects malformed vectors") {
        CHECK_THROWS_AS(params_to_policy(Params(29, 0.0), layout), std::invalid_argument);
        Params v(30, 0.0);
        v[0] = 16;
        CHECK_THROWS_AS(params_to_policy(v, layout), std::invalid_argument);
        v[0] = 1.5;
        CHECK_THROWS_AS(params_to_policy(v, layout), std::invalid_argument);
        v[0] = 0;
        v[1] = 1.01;
        CHECK_THROWS_AS(params_to_policy(v, layout), std::invalid_argument);
    }
}

TEST_CASE("search config validation") {
    CHECK_NOTHROW(SearchConfig{}.validate());
    auto c = tiny_config(1, 1, 5, 6);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    for (int SearchConfig::*field : {&SearchConfig::folds, &SearchConfig::rounds, &SearchConfig::trials_per_round,
                                     &SearchConfig::keep_per_round, &SearchConfig::concurrency}) {
        c = tiny_config(1, 1, 5, 2);
        c.*field = 0;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    }
}

TEST_CASE("evaluate_policy") {
    const auto& fx = trained_fixture();
    const PolicyLayout layout;
    SUBCASE("identity policy equals the plain loss") {
        const Policy identity = uniform_policy(layout, OpKind::Rotate, 0.0, 0.9);
        const double plain = loss(fx.model, fx.data);
        const double aug = evaluate_policy(fx.model, identity, fx.data, 4);
        CHECK(aug == doctest::Approx(plain).epsilon(1e-12));
    }
    SUBCASE("inverting every image costs loss") {
        const Policy identity = uniform_policy(layout, OpKind::Invert, 0.0, 0.0);
        const Policy invert = uniform_policy({5, 1}, OpKind::Invert, 1.0, 0.0);
        CHECK(evaluate_policy(fx.model, invert, fx.data, 4) > evaluate_policy(fx.model, identity, fx.data, 4));
    }
    SUBCASE("same seed is bit-identical") {
        Rng rng(6);
        const Policy p = random_policy(5, 2, rng);
        const double a = evaluate_policy(fx.model, p, fx.data, 77);
        const double b = evaluate_policy(fx.model, p, fx.data, 77);
        CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    }
    SUBCASE("metrics agree with the scalar entry point") {
        Rng rng(7);
        const Policy p = random_policy(5, 2, rng);
        const auto m = evaluate_policy_metrics(fx.model, p, fx.data, 9);
        CHECK(m.loss == evaluate_policy(fx.model, p, fx.data, 9));
        CHECK(m.count == 5 * fx.data.size());
        CHECK(m.accuracy >= 0.0);
        CHECK(m.accuracy <= 1.0);
    }
}

TEST_CASE("explore_fold selection") {
    const auto& fx = trained_fixture();
    SUBCASE("T=1 B=5 N=2 keeps the two smallest losses") {
        const auto cfg = tiny_config(1, 1, 5, 2);
        const FoldReport r = explore_fold(fx.model, fx.data, cfg, 0);
        REQUIRE(r.rounds.size() == 1);
        const auto& round = r.rounds[0];
        REQUIRE(round.trials.size() == 5);
        REQUIRE(round.selected.size() == 2);
        std::vector<double> losses;
        for (const auto& t : round.trials) {
            losses.push_back(t.loss);
        }
        std::sort(losses.begin(), losses.end());
        CHECK(round.trials[round.selected[0]].loss == losses[0]);
        CHECK(round.trials[round.selected[1]].loss == losses[1]);
        for (std::size_t i = 0; i < round.trials.size(); ++i) {
            CHECK(round.trials[i].trial == static_cast<int>(i));
        }
    }
    SUBCASE("T=2 B=5 N=2 returns four selections over both rounds") {
        const auto cfg = tiny_config(1, 2, 5, 2);
        const FoldReport r = explore_fold(fx.model, fx.data, cfg, 0);
        std::vector<int> rounds;
        for (const auto& round : r.rounds) {
            for (std::size_t s : round.selected) {
                rounds.push_back(round.trials[s].round);
            }
        }
        CHECK(rounds == std::vector<int>{0, 0, 1, 1});
        CHECK(r.completed_trials == 10);
    }
    SUBCASE("selection invariants on a longer run") {
        auto cfg = tiny_config(1, 2, 12, 3);
        cfg.tpe.startup_trials = 6;
        const auto before = fx.model.hash();
        const FoldReport r = explore_fold(fx.model, fx.data, cfg, 0);
        CHECK(fx.model.hash() == before);
        CHECK(r.hash_before == r.hash_after);
        CHECK(r.completed_trials == 24);
        for (const auto& round : r.rounds) {
            REQUIRE(round.trials.size() == 12);
            REQUIRE(round.selected.size() == 3);
            double max_sel = -INFINITY, min_rest = INFINITY, sel_sum = 0.0, all_sum = 0.0;
            std::set<std::size_t> chosen(round.selected.begin(), round.selected.end());
            for (std::size_t i = 0; i < round.trials.size(); ++i) {
                all_sum += round.trials[i].loss;
                if (chosen.count(i)) {
                    max_sel = std::max(max_sel, round.trials[i].loss);
                    sel_sum += round.trials[i].loss;
                } else {
                    min_rest = std::min(min_rest, round.trials[i].loss);
                }
            }
            CHECK(max_sel <= min_rest);
            CHECK(sel_sum / 3 < all_sum / 12);
        }
    }
}

TEST_CASE("fast_autoaugment merge") {
    const Dataset data = small_synth(4, 30);
    auto cfg = tiny_config(2, 2, 4, 2);
    std::size_t seen = 0;
    SearchHooks hooks;
    hooks.on_trial = [&](const TrialRecord&) { ++seen; };
    const SearchResult r = fast_autoaugment(data, cfg, hooks);
    CHECK(seen == 2 * 2 * 4);
    REQUIRE(r.policies.policies.size() == 2 * 2 * 2);
    std::set<std::tuple<int, int, int>> keys;
    for (const auto& p : r.policies.policies) {
        keys.insert({p.fold, p.round, p.trial});
        CHECK(p.policy.sub_policies.size() == 5);
    }
    CHECK(keys.size() == r.policies.policies.size());
    CHECK(r.policies.flatten().size() == 40);
    CHECK(std::is_sorted(r.policies.policies.begin(), r.policies.policies.end(), [](const auto& a, const auto& b) {
        return std::tie(a.loss, a.fold, a.round, a.trial) < std::tie(b.loss, b.fold, b.round, b.trial);
    }));
    REQUIRE(r.folds.size() == 2);
    for (const auto& f : r.folds) {
        CHECK(f.hash_before == f.hash_after);
        CHECK(f.completed_trials == 8);
        CHECK(f.failed_trials == 0);
    }

    SUBCASE("deterministic for a fixed seed") {
        CHECK(fast_autoaugment(data, cfg).policies == r.policies);
    }
    SUBCASE("parallel workers reproduce the serial result during startup") {
        cfg.concurrency = 3;
        CHECK(fast_autoaugment(data, cfg).policies == r.policies);
    }
    SUBCASE("restarted rounds still produce K*T*N policies") {
        cfg.restart_rounds = true;
        CHECK(fast_autoaugment(data, cfg).policies.policies.size() == 8);
    }
}

TEST_CASE("degenerate single fold, round and trial") {
    const Dataset data = small_synth(5, 10);
    const auto r = fast_autoaugment(data, tiny_config(1, 1, 1, 1));
    REQUIRE(r.policies.policies.size() == 1);
    CHECK(r.policies.policies[0].fold == 0);
}

TEST_CASE("search aborts") {
    const auto& fx = trained_fixture();
    SUBCASE("every trial failing aborts the fold") {
        Weights<float> w = fx.model.weights();
        for (auto& t : w.tensors) {
            std::fill(t.begin(), t.end(), std::numeric_limits<float>::quiet_NaN());
        }
        const ModelParams broken(w);
        CHECK_THROWS_AS(explore_fold(broken, fx.data, tiny_config(1, 1, 10, 2), 0), SearchAborted);
    }
    SUBCASE("cancellation") {
        std::atomic<bool> cancel{true};
        SearchHooks hooks;
        hooks.cancel = &cancel;
        CHECK_THROWS_AS(explore_fold(fx.model, fx.data, tiny_config(1, 1, 10, 2), 0, hooks), SearchAborted);
    }
    SUBCASE("too few samples per class") {
        CHECK_THROWS(fast_autoaugment(small_synth(1, 1), tiny_config(2, 1, 2, 1)));
    }
}

TEST_CASE("retrain_with_policies") {
    const Dataset data = small_synth(6, 20);
    const auto cfg = quick_train(8);
    const ModelParams plain = train(ModelParams::initialize(architecture_for(data), cfg.seed), data, cfg);

    PolicySet identity;
    identity.policies.push_back({uniform_policy({}, OpKind::Cutout, 0.0, 1.0), 0, 0, 0, 0.0});
    CHECK(retrain_with_policies(data, identity, cfg) == plain);

    PolicySet involution;
    involution.policies.push_back({uniform_policy({1, 2}, OpKind::Invert, 1.0, 0.0), 0, 0, 0, 0.0});
    CHECK(retrain_with_policies(data, involution, cfg) == plain);

    CHECK_THROWS(retrain_with_policies(data, PolicySet{}, cfg));
}

TEST_CASE("random_policy_set") {
    const PolicyLayout layout{3, 2};
    const auto a = random_policy_set(7, layout, 11);
    CHECK(a.policies.size() == 7);
    CHECK(a.flatten().size() == 21);
    CHECK(a == random_policy_set(7, layout, 11));
    CHECK_FALSE(a == random_policy_set(7, layout, 12));
}

TEST_CASE("trial log line") {
    TrialRecord r;
    r.fold = 1;
    r.round = 0;
    r.trial = 4;
    r.params = Params(6, 0.0);
    r.params[0] = 6;
    r.params[1] = 0.5;
    r.loss = 0.25;
    r.elapsed_ms = 12.4;
    const PolicyLayout layout{1, 2};
    const auto j = nlohmann::json::parse(trial_log_line(r, layout.space()));
    CHECK(j.at("fold") == 1);
    CHECK(j.at("round") == 0);
    CHECK(j.at("trial") == 4);
    CHECK(j.at("loss") == 0.25);
    CHECK(j.at("params").is_object());
    CHECK(j.at("params").size() == 6);
    CHECK(j.contains("elapsed_ms"));
    CHECK(trial_log_line(r, layout.space()).find('\n') == std::string::npos);
}
