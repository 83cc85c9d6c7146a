#pragma once

// Run plumbing shared by the command-line subcommands: typed settings
// assembled from defaults, an optional JSON config file and flags; output
// files with content hashes; the manifest that makes a run replayable.
//
// Every setting has one name, used both as the config-file key and as the
// flag (--name). Paths are stored absolute. Wall-clock timings go to
// timings.json, which is neither hashed nor listed among the outputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "pdv/error.hpp"
#include "pdv/io/files.hpp"

namespace pdv::cli {

inline constexpr const char* version = "0.1.0";

enum class Kind { integer, real, text, boolean, reals, integers, path, paths };

struct Option {
    std::string name;
    Kind kind;
    nlohmann::json def;
    std::string help;
};

using Schema = std::vector<Option>;

// "0.25", "1e-3" or a ratio such as "1/2520".
inline double parse_real(const std::string& text, const std::string& what) {
    auto one = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) throw InputError(what + ": '" + text + "' is not a number");
        return v;
    };
    const auto slash = text.find('/');
    if (slash == std::string::npos) return one(text);
    const double den = one(text.substr(slash + 1));
    if (den == 0.0) throw InputError(what + ": division by zero in '" + text + "'");
    return one(text.substr(0, slash)) / den;
}

inline long long parse_integer(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        // Accept "1e5" style counts when they are whole numbers.
        const double d = parse_real(text, what);
        if (d != std::floor(d)) throw InputError(what + ": '" + text + "' is not an integer");
        return static_cast<long long>(d);
    }
    return v;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
}

namespace detail {

inline nlohmann::json absolute_path(const std::string& p) {
    if (p.empty()) return "";
    return std::filesystem::absolute(p).lexically_normal().string();
}

inline nlohmann::json scalar_from_text(Kind k, const std::string& text, const std::string& what) {
    switch (k) {
        case Kind::integer:
        case Kind::integers: return parse_integer(text, what);
        case Kind::real:
        case Kind::reals: return parse_real(text, what);
        case Kind::boolean:
            if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
            if (text == "false" || text == "0" || text == "no" || text == "off") return false;
            throw InputError(what + ": expected true or false, got '" + text + "'");
        case Kind::path:
        case Kind::paths: return absolute_path(text);
        case Kind::text: return text;
    }
    return text;
}

inline bool is_list(Kind k) { return k == Kind::reals || k == Kind::integers || k == Kind::paths; }

}  // namespace detail

// Normalizes a flag string or a config-file value to the option's JSON type.
inline nlohmann::json coerce(const Option& o, const nlohmann::json& v, const std::string& source) {
    const std::string what = source + " '" + o.name + "'";
    if (detail::is_list(o.kind)) {
        nlohmann::json out = nlohmann::json::array();
        if (v.is_string()) {
            for (const auto& item : split_list(v.get<std::string>())) {
                if (item.empty()) throw InputError(what + ": empty list item");
                out.push_back(detail::scalar_from_text(o.kind, item, what));
            }
            return out;
        }
        if (!v.is_array()) throw InputError(what + ": expected a list");
        for (const auto& item : v) {
            if (item.is_string()) out.push_back(detail::scalar_from_text(o.kind, item.get<std::string>(), what));
            else if (o.kind != Kind::paths && item.is_number()) {
                if (o.kind == Kind::integers && !item.is_number_integer()) throw InputError(what + ": expected integers");
                out.push_back(item);
            } else {
                throw InputError(what + ": bad list item " + item.dump());
            }
        }
        return out;
    }
    if (v.is_string()) return detail::scalar_from_text(o.kind, v.get<std::string>(), what);
    switch (o.kind) {
        case Kind::integer:
            if (!v.is_number_integer()) throw InputError(what + ": expected an integer");
            return v;
        case Kind::real:
            if (!v.is_number()) throw InputError(what + ": expected a number");
            return v.get<double>();
        case Kind::boolean:
            if (!v.is_boolean()) throw InputError(what + ": expected true or false");
            return v;
        default: throw InputError(what + ": expected a string");
    }
}

// Defaults, then the config file, then flags. Unknown config keys are errors.
inline nlohmann::json resolve_settings(const Schema& schema, const nlohmann::json& config,
                                       const std::map<std::string, std::string>& flags,
                                       const std::string& config_source = "config") {
    nlohmann::json s = nlohmann::json::object();
    std::set<std::string> known;
    for (const auto& o : schema) {
        known.insert(o.name);
        s[o.name] = o.def.is_null() ? nlohmann::json() : coerce(o, o.def, "default");
    }
    if (!config.is_null()) {
        if (!config.is_object()) throw InputError(config_source + ": expected a JSON object");
        for (const auto& [key, v] : config.items()) {
            if (!known.count(key)) throw InputError(config_source + ": unknown setting '" + key + "'");
        }
        for (const auto& o : schema) {
            if (config.contains(o.name)) s[o.name] = coerce(o, config.at(o.name), config_source);
        }
    }
    for (const auto& [key, text] : flags) {
        const auto it = std::find_if(schema.begin(), schema.end(), [&](const Option& o) { return o.name == key; });
        if (it == schema.end()) throw InputError("unknown flag --" + key);
        s[key] = coerce(*it, text, "flag");
    }
    return s;
}

inline std::string hash_file(const std::filesystem::path& p) { return io::hex64(io::fnv1a(io::read_text(p))); }

inline nlohmann::json build_info() {
    return {{"pdv", version},
            {"compiler", __VERSION__},
            {"cxx", static_cast<long>(__cplusplus)},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)}};
}

// One subcommand invocation writing into `out`.
class Run {
public:
    Run(std::string command, nlohmann::json settings, std::filesystem::path out)
        : command_(std::move(command)), settings_(std::move(settings)), out_(std::move(out)) {
        std::error_code ec;
        std::filesystem::create_directories(out_, ec);
        if (ec) throw InputError("cannot create output directory " + out_.string() + ": " + ec.message());
    }

    const nlohmann::json& settings() const { return settings_; }
    const std::filesystem::path& out() const { return out_; }

    void write(const std::string& name, const std::string& bytes) {
        io::write_text(out_ / name, bytes);
        outputs_[name] = io::hex64(io::fnv1a(bytes));
    }
    void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

    // Records the content hash of an input file (throws if unreadable).
    void input(const std::string& path) {
        if (!path.empty()) inputs_[path] = hash_file(path);
    }

    void timing(const std::string& key, nlohmann::json seconds) { timings_[key] = std::move(seconds); }
    void note(const std::string& key, nlohmann::json v) { notes_[key] = std::move(v); }

    const std::map<std::string, std::string>& outputs() const { return outputs_; }

    nlohmann::json manifest(int status) const {
        return {{"command", command_},
                {"settings", settings_},
                {"inputs", inputs_},
                {"outputs", outputs_},
                {"status", status},
                {"notes", notes_},
                {"build", build_info()}};
    }

    // Writes manifest.json and timings.json.
    void finish(int status) {
        io::write_text(out_ / "manifest.json", manifest(status).dump(2) + "\n");
        nlohmann::json t = timings_;
        t["command"] = command_;
        io::write_text(out_ / "timings.json", t.dump(2) + "\n");
    }

private:
    std::string command_;
    nlohmann::json settings_;
    std::filesystem::path out_;
    std::map<std::string, std::string> inputs_, outputs_;
    nlohmann::json timings_ = nlohmann::json::object();
    nlohmann::json notes_ = nlohmann::json::object();
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace pdv::cli
