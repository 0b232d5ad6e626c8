#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

#include "faa/cli.hpp"
#include "faa/errors.hpp"

namespace faa::cli {

namespace {

using Json = nlohmann::ordered_json;

template <typename T>
void read_key(const Json& obj, const char* key, T& target, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        return;
    }
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) {
                throw ConfigError("");
            }
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) {
                throw ConfigError("");
            }
            if constexpr (std::is_unsigned_v<T>) {
                if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<long long>() < 0) {
                    throw ConfigError("");
                }
            }
        } else {
            if (!it->is_number()) {
                throw ConfigError("");
            }
        }
        target = it->template get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config: \"" + where + key + "\" has the wrong type (" + it->dump() + ")");
    }
}

void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool found = false;
        for (const char* k : known) {
            found = found || key == k;
        }
        if (!found) {
            throw ConfigError("config: unknown key \"" + where + key + "\"");
        }
    }
}

int parse_int(const std::string& text, const std::string& what) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || value < 1) {
        throw ConfigError("bad " + what + " \"" + text + "\" in dataset locator");
    }
    return value;
}

Dataset load_synth(const std::string& spec_text) {
    static const std::regex re(R"(^(\d+)x(\d+)(?::(\d+)x(\d+)(?:x(\d+))?)?(?:@(\d+))?$)");
    std::smatch m;
    if (!std::regex_match(spec_text, m, re)) {
        throw ConfigError("malformed synthetic dataset \"synth:" + spec_text +
                          "\" (expected synth:CxN[:HxW[xC]][@seed])");
    }
    SynthSpec spec;
    spec.classes = parse_int(m[1], "class count");
    spec.per_class = parse_int(m[2], "per-class count");
    if (m[3].matched) {
        spec.height = parse_int(m[3], "height");
        spec.width = parse_int(m[4], "width");
    }
    if (m[5].matched) {
        spec.channels = parse_int(m[5], "channel count");
    }
    std::uint64_t seed = 0;
    if (m[6].matched) {
        seed = std::stoull(m[6]);
    }
    if (spec.classes < 2) {
        throw ConfigError("synthetic datasets need at least 2 classes");
    }
    if (spec.channels != 1 && spec.channels != 3) {
        throw ConfigError("synthetic datasets need 1 or 3 channels");
    }
    Dataset d = synth_dataset(spec, seed);
    d.name = "synth:" + spec_text;
    return d;
}

} // namespace

Dataset resolve_dataset(const std::string& uri) {
    if (uri.empty()) {
        throw ConfigError("no dataset given");
    }
    if (uri.rfind("synth:", 0) == 0) {
        return load_synth(uri.substr(6));
    }
    try {
        if (uri.rfind("idx:", 0) == 0) {
            return load_dataset(uri.substr(4), DatasetFormat::Idx);
        }
        if (uri.rfind("raw:", 0) == 0) {
            return load_dataset(uri.substr(4), DatasetFormat::RawDir);
        }
        const std::filesystem::path path(uri);
        if (std::filesystem::is_directory(path)) {
            return load_dataset(path, DatasetFormat::RawDir);
        }
        return load_dataset(path, DatasetFormat::Idx);
    } catch (const DataError&) {
        throw;
    } catch (const ParseError& e) {
        throw DataError(uri + ": " + e.what());
    } catch (const std::exception& e) {
        throw DataError(uri + ": " + e.what());
    }
}

SearchConfig search_config_from_json(const Json& input, SearchConfig cfg) {
    if (!input.is_object()) {
        throw ConfigError("config: top level must be an object");
    }
    const Json& j = input.contains("config") && input.contains("command") ? input.at("config") : input;
    if (!j.is_object()) {
        throw ConfigError("config: \"config\" must be an object");
    }
    reject_unknown(j,
                   {"folds", "rounds", "trials_per_round", "keep_per_round", "sub_policies", "ops_per_sub_policy",
                    "eval_subsample", "concurrency", "seed", "split_ratio", "restart_rounds",
                    "max_error_fraction", "train", "tpe"},
                   "");
    read_key(j, "folds", cfg.folds, "");
    read_key(j, "rounds", cfg.rounds, "");
    read_key(j, "trials_per_round", cfg.trials_per_round, "");
    read_key(j, "keep_per_round", cfg.keep_per_round, "");
    read_key(j, "sub_policies", cfg.layout.sub_policies, "");
    read_key(j, "ops_per_sub_policy", cfg.layout.ops_per_sub_policy, "");
    read_key(j, "eval_subsample", cfg.eval_subsample, "");
    read_key(j, "concurrency", cfg.concurrency, "");
    read_key(j, "seed", cfg.master_seed, "");
    read_key(j, "split_ratio", cfg.split_ratio, "");
    read_key(j, "restart_rounds", cfg.restart_rounds, "");
    read_key(j, "max_error_fraction", cfg.max_error_fraction, "");
    if (const auto it = j.find("train"); it != j.end()) {
        if (!it->is_object()) {
            throw ConfigError("config: \"train\" must be an object");
        }
        reject_unknown(*it, {"epochs", "batch_size", "lr", "momentum", "weight_decay", "baseline_aug"}, "train.");
        TrainConfig& t = cfg.fold_train;
        read_key(*it, "epochs", t.epochs, "train.");
        read_key(*it, "batch_size", t.batch_size, "train.");
        read_key(*it, "lr", t.learning_rate, "train.");
        read_key(*it, "momentum", t.momentum, "train.");
        read_key(*it, "weight_decay", t.weight_decay, "train.");
        read_key(*it, "baseline_aug", t.baseline_augment, "train.");
    }
    if (const auto it = j.find("tpe"); it != j.end()) {
        if (!it->is_object()) {
            throw ConfigError("config: \"tpe\" must be an object");
        }
        reject_unknown(*it, {"gamma", "startup_trials", "ei_candidates", "prior_weight"}, "tpe.");
        read_key(*it, "gamma", cfg.tpe.gamma, "tpe.");
        read_key(*it, "startup_trials", cfg.tpe.startup_trials, "tpe.");
        read_key(*it, "ei_candidates", cfg.tpe.ei_candidates, "tpe.");
        read_key(*it, "prior_weight", cfg.tpe.prior_weight, "tpe.");
    }
    cfg.retrain = cfg.fold_train;
    return cfg;
}

Json search_config_to_json(const SearchConfig& cfg) {
    Json j;
    j["folds"] = cfg.folds;
    j["rounds"] = cfg.rounds;
    j["trials_per_round"] = cfg.trials_per_round;
    j["keep_per_round"] = cfg.keep_per_round;
    j["sub_policies"] = cfg.layout.sub_policies;
    j["ops_per_sub_policy"] = cfg.layout.ops_per_sub_policy;
    j["eval_subsample"] = cfg.eval_subsample;
    j["concurrency"] = cfg.concurrency;
    j["seed"] = cfg.master_seed;
    j["split_ratio"] = cfg.split_ratio;
    j["restart_rounds"] = cfg.restart_rounds;
    j["max_error_fraction"] = cfg.max_error_fraction;
    const TrainConfig& t = cfg.fold_train;
    j["train"] = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"lr", t.learning_rate},
                  {"momentum", t.momentum},
                  {"weight_decay", t.weight_decay},
                  {"baseline_aug", t.baseline_augment}};
    j["tpe"] = {{"gamma", cfg.tpe.gamma},
                {"startup_trials", cfg.tpe.startup_trials},
                {"ei_candidates", cfg.tpe.ei_candidates},
                {"prior_weight", cfg.tpe.prior_weight}};
    return j;
}

Json load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::stringstream buf;
    buf << is.rdbuf();
    try {
        return Json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
}

} // namespace faa::cli
