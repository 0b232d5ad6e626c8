#include "faa/policy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "faa/errors.hpp"

namespace faa {

namespace {

using ordered_json = nlohmann::ordered_json;

bool in_unit(double v) {
    return std::isfinite(v) && v >= 0.0 && v <= 1.0;
}

double require_unit(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw DataError(std::string("policy set: operation field '") + key + "' missing or not a number");
    }
    const double v = j.at(key).get<double>();
    if (!in_unit(v)) {
        throw DataError(std::string("policy set: operation field '") + key + "' outside [0,1]");
    }
    return v;
}

} // namespace

void OperationSpec::validate() const {
    if (!in_unit(probability)) {
        throw std::domain_error("operation probability must lie in [0,1]");
    }
    if (!in_unit(magnitude)) {
        throw std::domain_error("operation magnitude must lie in [0,1]");
    }
}

void Policy::validate() const {
    if (sub_policies.empty()) {
        throw std::invalid_argument("policy has no sub-policies");
    }
    for (const auto& sp : sub_policies) {
        if (sp.ops.empty()) {
            throw std::invalid_argument("sub-policy has no operations");
        }
        for (const auto& op : sp.ops) {
            op.validate();
        }
    }
}

std::vector<SubPolicy> PolicySet::flatten() const {
    std::vector<SubPolicy> pool;
    for (const auto& rec : policies) {
        pool.insert(pool.end(), rec.policy.sub_policies.begin(), rec.policy.sub_policies.end());
    }
    return pool;
}

Image apply_stochastic_op(const Image& img, const OperationSpec& spec, Rng& rng, const PairingPool* pool,
                          bool* applied) {
    const bool fire = rng.bernoulli(spec.probability);
    if (applied != nullptr) {
        *applied = fire;
    }
    if (!fire) {
        return img;
    }
    OpArgs args;
    if (spec.kind == OpKind::Cutout) {
        const int x = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(img.width())));
        const int y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(img.height())));
        args.cutout_center = PixelPos{x, y};
    } else if (spec.kind == OpKind::SamplePairing) {
        if (pool == nullptr || pool->images.empty()) {
            throw std::invalid_argument("SamplePairing needs a pairing pool");
        }
        const std::size_t n = pool->images.size();
        std::size_t partner = 0;
        if (pool->self_index && n > 1) {
            partner = rng.uniform_index(n - 1);
            if (partner >= *pool->self_index) {
                ++partner;
            }
        } else if (pool->self_index) {
            partner = *pool->self_index; // lone image pairs with itself
        } else {
            partner = rng.uniform_index(n);
        }
        args.pair = &pool->images[partner];
    }
    return apply_op(img, spec.kind, spec.magnitude, args);
}

Image apply_sub_policy(const Image& img, const SubPolicy& sub_policy, Rng& rng, const PairingPool* pool,
                       std::vector<bool>* applied) {
    if (applied != nullptr) {
        applied->assign(sub_policy.ops.size(), false);
    }
    Image current = img;
    for (std::size_t n = 0; n < sub_policy.ops.size(); ++n) {
        bool fired = false;
        current = apply_stochastic_op(current, sub_policy.ops[n], rng, pool, &fired);
        if (applied != nullptr) {
            (*applied)[n] = fired;
        }
    }
    return current;
}

AugmentedView::AugmentedView(const Dataset& base, Policy policy, std::uint64_t seed)
    : base_(base), policy_(std::move(policy)), seed_(seed) {
    if (base_.empty()) {
        throw std::invalid_argument("cannot augment an empty dataset");
    }
    policy_.validate();
}

Image AugmentedView::image(std::size_t index) const {
    const std::size_t n = base_.size();
    const std::size_t s = index / n;
    const std::size_t j = index % n;
    if (s >= policy_.sub_policies.size()) {
        throw std::out_of_range("AugmentedView index out of range");
    }
    Rng rng(derive_seed(seed_, {s, j}));
    const PairingPool pool{base_.images, j};
    return apply_sub_policy(base_.images[j], policy_.sub_policies[s], rng, &pool);
}

Dataset AugmentedView::materialize() const {
    Dataset out;
    out.class_count = base_.class_count;
    out.name = base_.name + "/augmented";
    out.images.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
        out.images.push_back(image(i));
    }
    return out;
}

Dataset augment_dataset(const Dataset& dataset, const Policy& policy, Rng& rng) {
    if (dataset.empty()) {
        throw std::invalid_argument("augment_dataset: empty dataset");
    }
    return AugmentedView(dataset, policy, rng.next_u64()).materialize();
}

Policy random_policy(std::size_t sub_policies, std::size_t ops_per_sub_policy, Rng& rng) {
    Policy policy;
    policy.sub_policies.resize(sub_policies);
    for (auto& sp : policy.sub_policies) {
        sp.ops.resize(ops_per_sub_policy);
        for (auto& op : sp.ops) {
            op.kind = static_cast<OpKind>(rng.uniform_index(kOpCount));
            op.probability = rng.uniform();
            op.magnitude = rng.uniform();
        }
    }
    return policy;
}

std::string policy_set_to_json(const PolicySet& set) {
    ordered_json root;
    root["version"] = 1;
    root["policies"] = ordered_json::array();
    for (const auto& rec : set.policies) {
        if (!std::isfinite(rec.loss)) {
            throw std::invalid_argument("policy set contains a non-finite loss");
        }
        ordered_json entry;
        entry["sub_policies"] = ordered_json::array();
        for (const auto& sp : rec.policy.sub_policies) {
            ordered_json ops = ordered_json::array();
            for (const auto& op : sp.ops) {
                ordered_json o;
                o["kind"] = std::string(op_name(op.kind));
                o["p"] = op.probability;
                o["lambda"] = op.magnitude;
                ops.push_back(std::move(o));
            }
            entry["sub_policies"].push_back(std::move(ops));
        }
        entry["fold"] = rec.fold;
        entry["round"] = rec.round;
        entry["trial"] = rec.trial;
        entry["loss"] = rec.loss;
        root["policies"].push_back(std::move(entry));
    }
    return root.dump(2) + "\n";
}

PolicySet policy_set_from_json(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("policy set is not valid JSON: ") + e.what(), e.byte);
    }
    if (!root.is_object() || !root.contains("version") || root.at("version") != 1) {
        throw DataError("policy set: missing or unsupported version");
    }
    if (!root.contains("policies") || !root.at("policies").is_array()) {
        throw DataError("policy set: 'policies' must be an array");
    }
    PolicySet set;
    for (const auto& entry : root.at("policies")) {
        PolicyRecord rec;
        if (!entry.contains("sub_policies") || !entry.at("sub_policies").is_array()) {
            throw DataError("policy set: entry without 'sub_policies'");
        }
        for (const auto& ops : entry.at("sub_policies")) {
            if (!ops.is_array() || ops.empty()) {
                throw DataError("policy set: sub-policy must be a non-empty array");
            }
            SubPolicy sp;
            for (const auto& o : ops) {
                if (!o.contains("kind") || !o.at("kind").is_string()) {
                    throw DataError("policy set: operation without 'kind'");
                }
                OperationSpec op;
                try {
                    op.kind = parse_op_kind(o.at("kind").get<std::string>());
                } catch (const std::invalid_argument& e) {
                    throw DataError(std::string("policy set: ") + e.what());
                }
                op.probability = require_unit(o, "p");
                op.magnitude = require_unit(o, "lambda");
                sp.ops.push_back(op);
            }
            rec.policy.sub_policies.push_back(std::move(sp));
        }
        if (rec.policy.sub_policies.empty()) {
            throw DataError("policy set: policy without sub-policies");
        }
        rec.fold = entry.value("fold", 0);
        rec.round = entry.value("round", 0);
        rec.trial = entry.value("trial", 0);
        rec.loss = entry.value("loss", 0.0);
        if (!std::isfinite(rec.loss)) {
            throw DataError("policy set: non-finite loss");
        }
        set.policies.push_back(std::move(rec));
    }
    return set;
}

void save_policy_set(const std::filesystem::path& path, const PolicySet& set) {
    const std::string text = policy_set_to_json(set);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

PolicySet load_policy_set(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open policy set " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return policy_set_from_json(ss.str());
}

SubPolicy parse_sub_policy(const std::string& text) {
    SubPolicy sp;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::stringstream fs(item);
        std::string kind, p, m;
        if (!std::getline(fs, kind, ':') || !std::getline(fs, p, ':')) {
            throw std::invalid_argument("sub-policy item '" + item + "' must be Kind:p[:magnitude]");
        }
        std::getline(fs, m, ':');
        OperationSpec op;
        op.kind = parse_op_kind(kind);
        try {
            op.probability = std::stod(p);
            op.magnitude = m.empty() ? 0.0 : std::stod(m);
        } catch (const std::exception&) {
            throw std::invalid_argument("sub-policy item '" + item + "' has a non-numeric parameter");
        }
        op.validate();
        sp.ops.push_back(op);
    }
    if (sp.ops.empty()) {
        throw std::invalid_argument("empty sub-policy");
    }
    return sp;
}

std::string format_sub_policy(const SubPolicy& sub_policy) {
    std::ostringstream out;
    for (std::size_t i = 0; i < sub_policy.ops.size(); ++i) {
        const auto& op = sub_policy.ops[i];
        out << (i ? "," : "") << op_name(op.kind) << ':' << op.probability << ':' << op.magnitude;
    }
    return out.str();
}

} // namespace faa
