#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <semrsa/binary_format.hpp>
#include <semrsa/error.hpp>
#include <semrsa/parallel.hpp>

#ifndef SEMRSA_VERSION
#define SEMRSA_VERSION "unknown"
#endif

namespace semrsa::cli {
namespace {

constexpr const char* kModule = "harness_cli";

struct UsageError : std::runtime_error {
    UsageError(std::string code, const std::string& detail) : std::runtime_error(detail), code(std::move(code)) {}
    std::string code;
};

void report_error(std::ostream& err, const std::string& code, const std::string& module, const std::string& detail) {
    err << nlohmann::ordered_json{{"code", code}, {"module", module}, {"detail", detail}}.dump() << '\n';
}

std::string option_key(const CLI::Option* opt) { return opt->get_single_name(); }

bool is_skipped(const CLI::Option* opt) {
    const std::string key = option_key(opt);
    return key == "help" || key == "config" || key == "threads" || key.empty();
}

// "--config F" or "--config=F" anywhere on the line.
std::optional<std::string> find_config(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("usage", "--config needs a file");
            return args[i + 1];
        }
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return std::nullopt;
}

nlohmann::json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config", "cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config", "config file " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("config", "config file must hold a JSON object");
    return j;
}

std::string scalar_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number() || v.is_null()) return v.dump();
    throw UsageError("config", "config values must be scalars or arrays of scalars");
}

const nlohmann::json* config_value(const nlohmann::json& config, const std::string& key) {
    for (std::string k : {key, [&] {
             std::string u = key;
             std::replace(u.begin(), u.end(), '-', '_');
             return u;
         }()}) {
        const auto it = config.find(k);
        if (it != config.end()) return &*it;
    }
    return nullptr;
}

// Config fields fill the options the command line left unset.
void merge_config(const nlohmann::json& config, CLI::App& app, const std::vector<Command>& commands, CLI::App* active) {
    std::set<std::string> known;
    for (const CLI::Option* opt : app.get_options()) known.insert(option_key(opt));
    for (const auto& cmd : commands)
        for (const CLI::Option* opt : cmd.app->get_options()) known.insert(option_key(opt));
    for (const auto& [key, value] : config.items()) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        if (!known.count(key) && !known.count(dashed)) throw UsageError("config", "unknown config field '" + key + "'");
    }
    for (CLI::App* target : {&app, active}) {
        for (CLI::Option* opt : target->get_options()) {
            if (is_skipped(opt) || opt->count() > 0) continue;
            const nlohmann::json* v = config_value(config, option_key(opt));
            if (v == nullptr) continue;
            std::vector<std::string> values;
            if (v->is_array()) {
                for (const auto& e : *v) values.push_back(scalar_text(e));
            } else {
                values.push_back(scalar_text(*v));
            }
            if (opt->get_type_size() == 0) {
                if (values.size() != 1 || (values[0] != "true" && values[0] != "false"))
                    throw UsageError("config", "config field '" + option_key(opt) + "' must be a boolean");
                if (values[0] == "false") continue;
            }
            try {
                opt->add_result(values);
                opt->run_callback();
            } catch (const CLI::Error& e) {
                throw UsageError("config", "config field '" + option_key(opt) + "': " + e.what());
            }
        }
    }
}

std::vector<std::string> option_values(const CLI::Option* opt) {
    if (opt->count() > 0) return opt->results();
    const std::string d = opt->get_default_str();
    if (d.empty()) return {};
    return {d};
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
    auto in = format::open_input(path, "hash");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw IoError(kModule, "sha256 initialization failed");
    std::vector<char> buf(1 << 20);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

void Run::input(const std::filesystem::path& path) {
    if (std::find(inputs_.begin(), inputs_.end(), path) == inputs_.end()) inputs_.push_back(path);
}

void Run::output(const std::filesystem::path& path) {
    if (std::find(outputs_.begin(), outputs_.end(), path) == outputs_.end()) outputs_.push_back(path);
}

void Run::write_manifests(const std::string& command, const std::vector<std::string>& argv,
                          const nlohmann::ordered_json& parameters) const {
    nlohmann::ordered_json inputs = nlohmann::ordered_json::array(), outputs = nlohmann::ordered_json::array();
    for (const auto& p : inputs_) inputs.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
    for (const auto& p : outputs_) outputs.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
    for (std::size_t i = 0; i < outputs_.size(); ++i) {
        nlohmann::ordered_json m;
        m["tool"] = "semrsa";
        m["version"] = SEMRSA_VERSION;
        m["command"] = command;
        m["argv"] = argv;
        m["parameters"] = parameters;
        m["seed"] = seed_ ? nlohmann::ordered_json(*seed_) : nlohmann::ordered_json(nullptr);
        m["inputs"] = inputs;
        m["output"] = outputs[i];
        m["outputs"] = outputs;
        m["report"] = report_;
        std::filesystem::path mp = outputs_[i];
        mp += ".manifest.json";
        auto out = format::open_output(mp, "manifest");
        out << m.dump(2) << '\n';
        if (!out) throw IoError(kModule, "failed to write " + mp.string());
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Representational similarity and decoding analyses on voxel responses", "semrsa"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", SEMRSA_VERSION);
    int threads = default_thread_count();
    app.add_option("--threads", threads, "Worker thread cap (default from SEMRSA_THREADS)")->check(CLI::PositiveNumber);
    std::string config_path;
    app.add_option("--config", config_path, "JSON document of option values; command-line flags win");

    std::vector<Command> commands;
    register_commands(app, commands);
    for (auto& cmd : commands) cmd.app->fallthrough();

    CLI::App* active = nullptr;
    try {
        const auto config_file = find_config(args);
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        auto chosen = app.get_subcommands();
        active = chosen.empty() ? nullptr : chosen.front();
        const Command* cmd = nullptr;
        for (const auto& c : commands)
            if (c.app == active) cmd = &c;
        if (cmd == nullptr) throw UsageError("usage", "no command given");
        if (config_file) merge_config(load_config(*config_file), app, commands, active);
        for (const CLI::Option* opt : cmd->required)
            if (opt->count() == 0) throw UsageError("usage", opt->get_name() + " is required");
        set_thread_count(threads);

        nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
        std::vector<std::string> argv{"semrsa", active->get_name()};
        for (const CLI::Option* opt : active->get_options()) {
            if (is_skipped(opt)) continue;
            const std::string key = option_key(opt);
            if (opt->get_type_size() == 0) {
                const bool on = opt->count() > 0 && opt->as<bool>();
                parameters[key] = on;
                if (on) argv.push_back("--" + key);
                continue;
            }
            const auto values = option_values(opt);
            if (values.empty()) continue;
            if (opt->get_items_expected_max() > 1) parameters[key] = values;
            else parameters[key] = values.front();
            argv.push_back("--" + key);
            argv.insert(argv.end(), values.begin(), values.end());
        }

        Run run;
        cmd->body(run);
        run.write_manifests(active->get_name(), argv, parameters);
        return kOk;
    } catch (const CLI::CallForHelp&) {
        out << (active ? active->help() : app.help());
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << SEMRSA_VERSION << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", kModule, e.what());
        CLI::App* shown = &app;
        for (CLI::App* sub : app.get_subcommands()) shown = sub;
        err << shown->help();
        return kUsageError;
    } catch (const UsageError& e) {
        report_error(err, e.code, kModule, e.what());
        if (e.code == "usage") err << (active ? active->help() : app.help());
        return kUsageError;
    } catch (const Error& e) {
        report_error(err, to_string(e.kind()), e.module(), e.detail());
        return kComputationError;
    } catch (const std::exception& e) {
        report_error(err, "internal", kModule, e.what());
        return kComputationError;
    }
}

}  // namespace semrsa::cli
