#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace faa {

/// Malformed input file. `offset` is the byte position where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          message_(what), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }
    /// The message without the offset suffix.
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::uint64_t offset_;
};

/// Missing or unreadable dataset, or a dataset that violates its invariants.
class DataError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// NaN/Inf loss during SGD.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::uint64_t step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}

    std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

/// Too many failing trials in a fold, or an interrupted search.
class SearchAborted : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace faa
