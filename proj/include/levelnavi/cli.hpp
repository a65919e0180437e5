#pragma once

// The levelnavi command line. Exit codes:
//   0 success
//   2 configuration or usage error
//   3 task ended in a failure status (ask)
//   4 dataset or run-directory validation failure
//   5 model or embedding provider failure

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "levelnavi/web_access.hpp"

namespace levelnavi {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitTask = 3, kExitDataset = 4, kExitProvider = 5 };

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// Effective configuration: defaults < config file < environment < flags.
class CliConfig {
public:
    struct Value {
        std::string value;
        std::string source;  // "default", "file:<path>", "env:<NAME>", "flag"
    };

    CliConfig();  // defaults only

    static const std::vector<std::pair<std::string, std::string>>& defaults();
    static std::string env_name(const std::string& key);  // llm.api_key -> LEVELNAVI_LLM_API_KEY

    // Nested or dotted JSON object. Unknown keys are a ConfigError.
    void apply_file(const std::filesystem::path& path);
    void apply_env(const EnvLookup& env);
    void set(const std::string& key, const std::string& value, const std::string& source);

    const std::string& get(const std::string& key) const;
    const Value& entry(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    const std::map<std::string, Value>& values() const { return values_; }

    // key = value  [source], secrets masked
    std::string show() const;
    // Effective values without secrets, for run snapshots.
    json snapshot() const;

private:
    std::map<std::string, Value> values_;
};

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace levelnavi
