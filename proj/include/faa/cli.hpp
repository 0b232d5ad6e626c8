#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "faa/data.hpp"
#include "faa/search.hpp"

namespace faa::cli {

/// Process exit codes. Stable; documented in the README.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitSearchAborted = 4,
    kExitInterrupted = 130,
};

/// Bad flag value or config file.
class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Runs one command line (without the program name). All human-readable
/// output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Dataset locators:
///   synth:CxN[:HxW[xC]][@seed]   generated gratings, C classes of N images
///   idx:PATH                     IDX images file or prefix (labels located by name)
///   raw:DIR                      raw-dir fixtures
///   PATH                         directory → raw-dir, otherwise IDX
/// Throws ConfigError for a malformed synth spec and DataError for I/O problems.
Dataset resolve_dataset(const std::string& uri);

/// Configuration file / manifest snapshot <-> SearchConfig. Unknown keys and
/// mistyped values throw ConfigError. A manifest (an object with a "config"
/// member) is accepted in place of a bare config.
SearchConfig search_config_from_json(const nlohmann::ordered_json& j, SearchConfig base = {});
nlohmann::ordered_json search_config_to_json(const SearchConfig& cfg);
nlohmann::ordered_json load_config_file(const std::filesystem::path& path);

/// RFC-4180 field quoting: fields containing a comma, quote, CR or LF are
/// wrapped in quotes with inner quotes doubled.
std::string csv_field(std::string_view field);
/// Quoted fields joined by commas, terminated by CRLF.
std::string csv_row(const std::vector<std::string>& fields);

/// Outcome frequencies of one sub-policy. Branch keys list which operations
/// fired, e.g. "10" = first only.
struct BranchTable {
    std::size_t draws = 0;
    std::map<std::string, std::size_t> counts;

    double frequency(const std::string& key) const;
};

/// Human name of a branch key for two-operation sub-policies
/// ("both", "first-only", "second-only", "neither"); the key itself otherwise.
std::string branch_name(const std::string& key);

/// One record per invocation: config, seeds, dataset fingerprint, timings,
/// outputs and results.
class RunManifest {
public:
    explicit RunManifest(std::string command);

    nlohmann::ordered_json& config() { return doc_["config"]; }
    nlohmann::ordered_json& seeds() { return doc_["seeds"]; }
    nlohmann::ordered_json& datasets() { return doc_["datasets"]; }
    nlohmann::ordered_json& timings() { return doc_["timings"]; }
    nlohmann::ordered_json& result() { return doc_["result"]; }

    void add_dataset(const std::string& role, const std::string& uri, const Dataset& dataset);
    void add_output(const std::string& name, const std::filesystem::path& path);
    void set_status(const std::string& status, const std::string& message = {});

    /// Writes the manifest; outputs that do not exist at this point are dropped.
    void write(const std::filesystem::path& path);
    const nlohmann::ordered_json& document() const { return doc_; }

private:
    nlohmann::ordered_json doc_;
    std::map<std::string, std::filesystem::path> outputs_;
};

std::string hex64(std::uint64_t value);

/// Toy objectives on [0,1] for checking the optimizer against a grid oracle.
enum class TpeSuite { Quadratic, Step };

struct TpeBenchRun {
    double tpe_best = 0.0;
    double tpe_best_x = 0.0;
    double random_best = 0.0;
    /// 1-based evaluation at which the grid optimum value was first reached (0 = never).
    int tpe_hit = 0;
    int random_hit = 0;
    bool tpe_success = false;
    bool tpe_wins = false;
};

struct TpeBenchSummary {
    TpeSuite suite = TpeSuite::Quadratic;
    double oracle_x = 0.0;
    double oracle_value = 0.0;
    std::vector<TpeBenchRun> runs;

    int successes() const;
    int wins() const;
};

/// Quadratic: f(x) = (x-0.7)^2, success = best x within 0.05 of the grid
/// optimum, win = strictly lower best-of-`trials` than uniform random search.
/// Step: f(x) = floor(1000|x-0.7|)/1000, success = optimal plateau reached,
/// win = lower best value, or the plateau reached in fewer evaluations.
TpeBenchSummary bench_tpe(TpeSuite suite, int runs, int trials, std::uint64_t seed, TpeConfig config = {});
std::string suite_name(TpeSuite suite);

} // namespace faa::cli
