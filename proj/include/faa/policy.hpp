#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "faa/data.hpp"
#include "faa/imageops.hpp"
#include "faa/rng.hpp"

namespace faa {

/// One stochastic operation: applied with `probability` at `magnitude`.
struct OperationSpec {
    OpKind kind = OpKind::ShearX;
    double probability = 0.0;
    double magnitude = 0.0;

    /// Throws std::domain_error unless both parameters lie in [0,1].
    void validate() const;
    friend bool operator==(const OperationSpec&, const OperationSpec&) = default;
};

/// Operations applied in order, each to the previous one's output.
struct SubPolicy {
    std::vector<OperationSpec> ops;
    friend bool operator==(const SubPolicy&, const SubPolicy&) = default;
};

struct Policy {
    std::vector<SubPolicy> sub_policies;
    friend bool operator==(const Policy&, const Policy&) = default;

    /// Throws std::invalid_argument for an empty policy or empty sub-policy.
    void validate() const;
};

/// A selected policy and where it came from.
struct PolicyRecord {
    Policy policy;
    int fold = 0;
    int round = 0;
    int trial = 0;
    double loss = 0.0;
    friend bool operator==(const PolicyRecord&, const PolicyRecord&) = default;
};

/// The merged search result consumed at retrain time.
struct PolicySet {
    std::vector<PolicyRecord> policies;

    std::size_t size() const noexcept { return policies.size(); }
    bool empty() const noexcept { return policies.empty(); }

    /// Every sub-policy of every policy, in order.
    std::vector<SubPolicy> flatten() const;
    friend bool operator==(const PolicySet&, const PolicySet&) = default;
};

/// Candidate partners for SamplePairing: any image of `images` other than
/// `self_index`.
struct PairingPool {
    std::span<const Image> images;
    std::optional<std::size_t> self_index;
};

/// With probability p returns apply_op(img, kind, magnitude), otherwise img.
/// Draw order: one uniform for the branch; then, if applied, the Cutout centre
/// (x then y) or the SamplePairing partner index. SamplePairing without a pool
/// throws std::invalid_argument. `applied` reports the branch taken.
Image apply_stochastic_op(const Image& img, const OperationSpec& spec, Rng& rng,
                          const PairingPool* pool = nullptr, bool* applied = nullptr);

/// Sequential composition of the sub-policy's operations. `applied`, when
/// given, receives one flag per operation.
Image apply_sub_policy(const Image& img, const SubPolicy& sub_policy, Rng& rng,
                       const PairingPool* pool = nullptr, std::vector<bool>* applied = nullptr);

/// The union over sub-policies, generated on access: element s*|D| + j is
/// sub-policy s applied to image j with its own derived random stream, so
/// any access order yields the same images.
class AugmentedView final : public ImageSource {
public:
    AugmentedView(const Dataset& base, Policy policy, std::uint64_t seed);

    std::size_t size() const override { return base_.size() * policy_.sub_policies.size(); }
    Image image(std::size_t index) const override;

    /// Eagerly generates every element.
    Dataset materialize() const;

private:
    const Dataset& base_;
    Policy policy_;
    std::uint64_t seed_;
};

/// Eager T(D): |output| = N_T * |D|, sub-policy-major order. Consumes one
/// 64-bit draw from `rng`. Throws std::invalid_argument for an empty dataset.
Dataset augment_dataset(const Dataset& dataset, const Policy& policy, Rng& rng);

/// Uniformly random operation kinds, probabilities and magnitudes.
Policy random_policy(std::size_t sub_policies, std::size_t ops_per_sub_policy, Rng& rng);

/// JSON document {"version": 1, "policies": [...]}, see README for the schema.
std::string policy_set_to_json(const PolicySet& set);
/// Throws DataError for schema violations.
PolicySet policy_set_from_json(const std::string& text);

void save_policy_set(const std::filesystem::path& path, const PolicySet& set);
PolicySet load_policy_set(const std::filesystem::path& path);

/// Compact text form "Kind:p:m,Kind:p:m" used on the command line.
SubPolicy parse_sub_policy(const std::string& text);
std::string format_sub_policy(const SubPolicy& sub_policy);

} // namespace faa
