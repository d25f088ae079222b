#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace CLI {
class App;
class Option;
}  // namespace CLI

namespace semrsa::cli {

enum ExitCode : int { kOk = 0, kComputationError = 1, kUsageError = 2 };

/// Runs one command line (args exclude the program name). Diagnostics go
/// to `err` as one JSON object {code, module, detail} per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

/// Bookkeeping for one invocation; every output gets a
/// `<output>.manifest.json` written next to it once the command succeeds.
class Run {
public:
    void input(const std::filesystem::path& path);
    void output(const std::filesystem::path& path);
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    /// Free-form summary copied into every manifest of the run.
    nlohmann::ordered_json& report() { return report_; }

    const std::vector<std::filesystem::path>& inputs() const noexcept { return inputs_; }
    const std::vector<std::filesystem::path>& outputs() const noexcept { return outputs_; }

    void write_manifests(const std::string& command, const std::vector<std::string>& argv,
                         const nlohmann::ordered_json& parameters) const;

private:
    std::vector<std::filesystem::path> inputs_;
    std::vector<std::filesystem::path> outputs_;
    std::optional<std::uint64_t> seed_;
    nlohmann::ordered_json report_ = nlohmann::ordered_json::object();
};

/// A subcommand: options are bound when it is registered, `body` runs
/// after parsing and config merging.
struct Command {
    CLI::App* app = nullptr;
    std::vector<CLI::Option*> required;
    std::function<void(Run&)> body;

    CLI::Option* need(CLI::Option* opt) {
        required.push_back(opt);
        return opt;
    }
};

void register_commands(CLI::App& app, std::vector<Command>& commands);

}  // namespace semrsa::cli
