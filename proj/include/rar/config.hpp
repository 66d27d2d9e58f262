#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rar {

// Flat-sectioned key-value config. `[codec]` followed by `lr = 0.002` is the
// key `codec.lr`; dotted keys are accepted directly. `#` starts a comment.
// Every command echoes the keys it consumed, with their effective values, as a
// manifest that can be fed back through --config to replay the run. The only
// environment override is RAR_SEED.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_string(const std::string& text) {
        RunConfig cfg;
        std::istringstream is(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                                    ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (!section.empty()) key = section + "." + key;
            cfg.values_[key] = value;
        }
        cfg.apply_env_override();
        return cfg;
    }

    static RunConfig from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
        std::ostringstream buf;
        buf << is.rdbuf();
        return from_string(buf.str());
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& def) const {
        auto it = values_.find(key);
        const std::string v = it == values_.end() ? def : it->second;
        resolved_[key] = v;
        return v;
    }

    std::int64_t get_int(const std::string& key, std::int64_t def) const {
        const std::string v = get_string(key, std::to_string(def));
        try {
            return std::stoll(v);
        } catch (...) {
            throw std::invalid_argument("config: '" + key + "' is not an integer: '" + v + "'");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const {
        const std::string v = get_string(key, std::to_string(def));
        try {
            return std::stoull(v);
        } catch (...) {
            throw std::invalid_argument("config: '" + key + "' is not an unsigned integer: '" + v + "'");
        }
    }

    double get_double(const std::string& key, double def) const {
        std::ostringstream os;
        os.precision(17);
        os << def;
        const std::string v = get_string(key, os.str());
        try {
            return std::stod(v);
        } catch (...) {
            throw std::invalid_argument("config: '" + key + "' is not a number: '" + v + "'");
        }
    }

    bool get_bool(const std::string& key, bool def) const {
        const std::string v = get_string(key, def ? "true" : "false");
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::invalid_argument("config: '" + key + "' is not a boolean: '" + v + "'");
    }

    std::uint64_t seed() const {
        if (!has("seed") && std::getenv("RAR_SEED") == nullptr)
            throw std::invalid_argument("config: 'seed' is mandatory");
        return get_u64("seed", 0);
    }

    // Resolved keys (everything this run consumed) in replayable form.
    std::string manifest_text() const {
        std::map<std::string, std::map<std::string, std::string>> sections;
        std::map<std::string, std::string> top;
        for (const auto& [k, v] : resolved_) {
            const auto dot = k.find('.');
            if (dot == std::string::npos) top[k] = v;
            else sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
        }
        std::ostringstream os;
        for (const auto& [k, v] : top) os << k << " = " << v << "\n";
        for (const auto& [s, kv] : sections) {
            os << "\n[" << s << "]\n";
            for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
        }
        return os.str();
    }

    void write_manifest(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("config: cannot write manifest '" + path + "'");
        os << manifest_text();
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    void apply_env_override() {
        if (const char* env = std::getenv("RAR_SEED")) values_["seed"] = env;
    }

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> resolved_;
};

}  // namespace rar
