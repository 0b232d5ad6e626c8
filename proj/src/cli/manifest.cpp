#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "faa/cli.hpp"
#include "faa/errors.hpp"

namespace faa::cli {

namespace {

nlohmann::ordered_json default_parameters() {
    nlohmann::ordered_json j;
    j["folds"] = 5;
    j["rounds"] = 2;
    j["trials_per_round"] = 200;
    j["keep_per_round"] = 10;
    j["ops_per_sub_policy"] = 2;
    j["sub_policies"] = 5;
    j["operations"] = static_cast<int>(kOpCount);
    return j;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

std::string hex64(std::uint64_t value) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string csv_field(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') {
            out += '"';
        }
        out += ch;
    }
    out += '"';
    return out;
}

std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += csv_field(fields[i]);
    }
    out += "\r\n";
    return out;
}

double BranchTable::frequency(const std::string& key) const {
    if (draws == 0) {
        return 0.0;
    }
    const auto it = counts.find(key);
    return it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(draws);
}

std::string branch_name(const std::string& key) {
    if (key == "11") return "both";
    if (key == "10") return "first-only";
    if (key == "01") return "second-only";
    if (key == "00") return "neither";
    return key;
}

RunManifest::RunManifest(std::string command) {
    doc_["command"] = std::move(command);
    doc_["status"] = "running";
    doc_["started_at"] = utc_now();
    doc_["config"] = nlohmann::ordered_json::object();
    doc_["seeds"] = nlohmann::ordered_json::object();
    doc_["datasets"] = nlohmann::ordered_json::object();
    doc_["timings"] = nlohmann::ordered_json::object();
    doc_["outputs"] = nlohmann::ordered_json::object();
    doc_["result"] = nlohmann::ordered_json::object();
    doc_["default_parameters"] = default_parameters();
}

void RunManifest::add_dataset(const std::string& role, const std::string& uri, const Dataset& dataset) {
    nlohmann::ordered_json j;
    j["uri"] = uri;
    j["name"] = dataset.name;
    j["fingerprint"] = hex64(dataset_fingerprint(dataset));
    j["size"] = dataset.size();
    j["classes"] = dataset.class_count;
    if (!dataset.empty()) {
        const Image& first = dataset.images.front();
        j["shape"] = {first.height(), first.width(), first.channels()};
    }
    doc_["datasets"][role] = std::move(j);
}

void RunManifest::add_output(const std::string& name, const std::filesystem::path& path) {
    outputs_[name] = path;
}

void RunManifest::set_status(const std::string& status, const std::string& message) {
    doc_["status"] = status;
    if (!message.empty()) {
        doc_["message"] = message;
    }
}

void RunManifest::write(const std::filesystem::path& path) {
    doc_["finished_at"] = utc_now();
    nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
    for (const auto& [name, file] : outputs_) {
        std::error_code ec;
        if (std::filesystem::exists(file, ec)) {
            outputs[name] = file.string();
        }
    }
    doc_["outputs"] = std::move(outputs);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        os << doc_.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

} // namespace faa::cli
