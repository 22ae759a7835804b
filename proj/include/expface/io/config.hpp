#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "expface/angle.hpp"
#include "expface/error.hpp"
#include "expface/gradient.hpp"
#include "expface/io/csv.hpp"
#include "expface/loss_spec.hpp"
#include "expface/noise_sim.hpp"

namespace expface::io {

// ---------------------------------------------------------------------------
// Flat TOML subset: `key = value` lines, `#` comments, values are strings,
// numbers, booleans or single-line arrays of those.

using ConfigScalar = std::variant<bool, double, std::string>;
using ConfigValue = std::variant<bool, double, std::string, std::vector<ConfigScalar>>;
using ConfigMap = std::map<std::string, ConfigValue, std::less<>>;

namespace detail {

class ValueReader {
public:
    ValueReader(std::string_view text, int line) : text_(text), line_(line) {}

    ConfigValue read_value() {
        skip_space();
        if (peek() == '[') return read_array();
        return to_value(read_scalar());
    }

    void expect_end() {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] != '#') fail("unexpected trailing characters");
    }

private:
    static ConfigValue to_value(ConfigScalar s) {
        return std::visit([](auto&& v) -> ConfigValue { return v; }, std::move(s));
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_space() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("config line " + std::to_string(line_) + ": " + what);
    }

    std::vector<ConfigScalar> read_array() {
        ++pos_;  // '['
        std::vector<ConfigScalar> out;
        skip_space();
        if (peek() == ']') {
            ++pos_;
            return out;
        }
        for (;;) {
            skip_space();
            out.push_back(read_scalar());
            skip_space();
            if (peek() == ',') {
                ++pos_;
                skip_space();
                if (peek() == ']') {
                    ++pos_;
                    return out;
                }
                continue;
            }
            if (peek() == ']') {
                ++pos_;
                return out;
            }
            fail("expected ',' or ']' in array");
        }
    }

    ConfigScalar read_scalar() {
        const char c = peek();
        if (c == '"') return read_string();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
               text_[pos_] != ' ' && text_[pos_] != '\t' && text_[pos_] != '#') {
            ++pos_;
        }
        const std::string_view word = text_.substr(start, pos_ - start);
        if (word.empty()) fail("missing value");
        if (word == "true") return true;
        if (word == "false") return false;
        std::string digits;
        for (char ch : word) {
            if (ch != '_') digits += ch;
        }
        if (auto v = parse_real(digits); v && std::isfinite(*v)) return *v;
        fail("cannot parse value '" + std::string(word) + "'");
    }

    std::string read_string() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_++];
            if (c == '"') return out;
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                const char e = text_[pos_++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            } else {
                out += c;
            }
        }
        fail("unterminated string");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_;
};

inline bool is_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

}  // namespace detail

/// Parses config text into raw key/value pairs. Duplicate keys, tables
/// (`[section]`) and malformed lines are rejected with ConfigError.
inline ConfigMap parse_config_text(std::string_view text) {
    ConfigMap out;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        std::size_t i = 0;
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i == line.size() || line[i] == '#') continue;
        if (line[i] == '[') {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": tables are not supported; use dotted keys");
        }
        const std::size_t key_start = i;
        while (i < line.size() && detail::is_key_char(line[i])) ++i;
        const std::string key(line.substr(key_start, i - key_start));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected a key");
        }
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i == line.size() || line[i] != '=') {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected '=' after " +
                              key);
        }
        detail::ValueReader reader(line.substr(i + 1), line_no);
        ConfigValue value = reader.read_value();
        reader.expect_end();
        if (!out.emplace(key, std::move(value)).second) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " + key);
        }
        if (end == text.size()) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Schema

enum class ValueType { Bool, Integer, Real, String, StringList, RealList };

struct KeySpec {
    std::string_view name;
    ValueType type;
    std::string_view help;
};

/// Every accepted key. Command-line flags mirror these names (`--key value`).
inline constexpr KeySpec kConfigKeys[] = {
    {"command", ValueType::String,
     "curves | gradients | transition | margin-field | gradcheck | simulate"},
    {"losses", ValueType::StringList,
     "loss families (plain, sphereface, cosface, arcface, expface_naive, expface)"},
    {"margins", ValueType::RealList, "margin per loss (defaults per family)"},
    {"scales", ValueType::RealList, "scale s per loss (defaults per family)"},
    {"b", ValueType::Real, "mean angle to negative centers, radians (default pi/2)"},
    {"class_count", ValueType::Integer, "class count C of the scalar loss (default 10573)"},
    {"context_scale", ValueType::Real, "s of the scalar loss (default: each loss's own scale)"},
    {"grid_size", ValueType::Integer, "grid points per sweep (default 1001)"},
    {"output_dir", ValueType::String, "artifact directory (default $EXPFACE_OUTPUT_DIR or .)"},
    {"svg", ValueType::Bool, "also write one SVG chart per CSV"},
    {"toy.input_dim", ValueType::Integer, "raw sample dimension"},
    {"toy.embed_dim", ValueType::Integer, "embedding dimension d"},
    {"toy.class_count", ValueType::Integer, "number of classes"},
    {"toy.samples_per_class", ValueType::Integer, "samples per class"},
    {"toy.type1_fraction", ValueType::Real, "Type-I fraction per unpaired class"},
    {"toy.type2_pair_count", ValueType::Integer, "class pairs sharing one identity"},
    {"toy.dispersion", ValueType::Real, "within-identity perturbation norm"},
    {"toy.loss", ValueType::String, "loss family used for training"},
    {"toy.margin", ValueType::Real, "training margin (default per family)"},
    {"toy.scale", ValueType::Real, "training scale (default per family)"},
    {"toy.learning_rate", ValueType::Real, "gradient-descent step size"},
    {"toy.epochs", ValueType::Integer, "training epochs"},
    {"toy.batch_size", ValueType::Integer, "mini-batch size"},
    {"toy.seed", ValueType::Integer, "random seed"},
};

inline const KeySpec* find_key(std::string_view name) {
    for (const auto& k : kConfigKeys) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

/// Converts a command-line flag value to a ConfigValue of the key's type.
/// Lists are comma separated; strings need no quotes.
inline ConfigValue parse_flag_value(std::string_view key, std::string_view text) {
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError("unknown key " + std::string(key));
    auto as_real = [&](std::string_view t) {
        auto v = parse_real(t);
        if (!v || !std::isfinite(*v)) {
            throw ConfigError(std::string(key) + ": cannot parse '" + std::string(t) + "'");
        }
        return *v;
    };
    auto split = [](std::string_view t) {
        std::vector<std::string_view> parts;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = t.find(',', start);
            parts.push_back(t.substr(start, comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return parts;
    };
    switch (spec->type) {
        case ValueType::Bool:
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw ConfigError(std::string(key) + ": expected true or false");
        case ValueType::Integer:
        case ValueType::Real:
            return as_real(text);
        case ValueType::String:
            return std::string(text);
        case ValueType::StringList: {
            std::vector<ConfigScalar> out;
            for (auto p : split(text)) out.emplace_back(std::string(p));
            return out;
        }
        case ValueType::RealList: {
            std::vector<ConfigScalar> out;
            for (auto p : split(text)) out.emplace_back(as_real(p));
            return out;
        }
    }
    return std::string(text);
}

// ---------------------------------------------------------------------------
// RunConfig

enum class Command { Curves, Gradients, Transition, MarginField, Gradcheck, Simulate };

inline constexpr std::string_view command_name(Command c) noexcept {
    switch (c) {
        case Command::Curves: return "curves";
        case Command::Gradients: return "gradients";
        case Command::Transition: return "transition";
        case Command::MarginField: return "margin-field";
        case Command::Gradcheck: return "gradcheck";
        case Command::Simulate: return "simulate";
    }
    return "unknown";
}

inline std::optional<Command> parse_command(std::string_view name) noexcept {
    for (Command c : {Command::Curves, Command::Gradients, Command::Transition,
                      Command::MarginField, Command::Gradcheck, Command::Simulate}) {
        if (command_name(c) == name) return c;
    }
    return std::nullopt;
}

struct RunConfig {
    Command command = Command::Curves;
    std::vector<LossSpec> losses;
    Angle b = Angle(kPi / 2.0);
    int class_count = 10573;
    /// When unset, each loss's own scale is the context scale.
    std::optional<double> context_scale;
    int grid_size = 1001;
    std::optional<ToySpec> toy;
    std::filesystem::path output_dir = ".";
    bool emit_svg = false;

    TransitionContext context_for(const LossSpec& loss) const {
        TransitionContext ctx;
        ctx.b = b;
        ctx.class_count = class_count;
        ctx.scale = context_scale.value_or(loss.scale);
        return ctx;
    }
};

inline constexpr std::string_view kOutputDirEnv = "EXPFACE_OUTPUT_DIR";

namespace detail {

class TypedLookup {
public:
    explicit TypedLookup(const ConfigMap& values) : values_(values) {}

    const ConfigValue* raw(std::string_view key) const {
        auto it = values_.find(key);
        return it == values_.end() ? nullptr : &it->second;
    }

    std::optional<std::string> string(std::string_view key) const {
        const ConfigValue* v = raw(key);
        if (!v) return std::nullopt;
        if (auto s = std::get_if<std::string>(v)) return *s;
        fail(key, "expected a string");
    }

    std::optional<bool> boolean(std::string_view key) const {
        const ConfigValue* v = raw(key);
        if (!v) return std::nullopt;
        if (auto b = std::get_if<bool>(v)) return *b;
        fail(key, "expected true or false");
    }

    std::optional<double> real(std::string_view key) const {
        const ConfigValue* v = raw(key);
        if (!v) return std::nullopt;
        if (auto d = std::get_if<double>(v)) return *d;
        fail(key, "expected a number");
    }

    std::optional<std::int64_t> integer(std::string_view key, std::int64_t lo, std::int64_t hi) const {
        auto d = real(key);
        if (!d) return std::nullopt;
        if (*d != std::floor(*d)) fail(key, "expected an integer");
        if (*d < static_cast<double>(lo) || *d > static_cast<double>(hi)) {
            fail(key, "value out of range");
        }
        return static_cast<std::int64_t>(*d);
    }

    std::optional<std::vector<std::string>> strings(std::string_view key) const {
        const ConfigValue* v = raw(key);
        if (!v) return std::nullopt;
        if (auto s = std::get_if<std::string>(v)) return std::vector<std::string>{*s};
        auto list = std::get_if<std::vector<ConfigScalar>>(v);
        if (!list) fail(key, "expected an array of strings");
        std::vector<std::string> out;
        for (const auto& item : *list) {
            auto s = std::get_if<std::string>(&item);
            if (!s) fail(key, "expected an array of strings");
            out.push_back(*s);
        }
        return out;
    }

    std::optional<std::vector<double>> reals(std::string_view key) const {
        const ConfigValue* v = raw(key);
        if (!v) return std::nullopt;
        if (auto d = std::get_if<double>(v)) return std::vector<double>{*d};
        auto list = std::get_if<std::vector<ConfigScalar>>(v);
        if (!list) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& item : *list) {
            auto d = std::get_if<double>(&item);
            if (!d) fail(key, "expected an array of numbers");
            out.push_back(*d);
        }
        return out;
    }

    [[noreturn]] static void fail(std::string_view key, const std::string& what) {
        throw ConfigError(std::string(key) + ": " + what);
    }

private:
    const ConfigMap& values_;
};

inline Family family_or_throw(std::string_view key, const std::string& name) {
    if (auto f = parse_family(name)) return *f;
    throw ConfigError(std::string(key) + ": unknown loss family '" + name + "'");
}

inline LossSpec checked_loss(std::string_view key, LossSpec spec) {
    if (auto why = check_loss_spec(spec)) throw ConfigError(std::string(key) + ": " + *why);
    return spec;
}

}  // namespace detail

/// Merges file values with flag values (flags win), applies defaults and
/// validates everything. Throws ConfigError naming the offending key.
///
/// Defaults: losses = expface 0.7, cosface 0.4, arcface 0.5 (all s=64) and
/// sphereface 1.7 with s=32; b = pi/2; C = 10573; grid_size = 1001.
inline RunConfig parse_config(const ConfigMap& file_values, const ConfigMap& flag_values = {}) {
    ConfigMap merged = file_values;
    for (const auto& [k, v] : flag_values) merged.insert_or_assign(k, v);
    for (const auto& [k, v] : merged) {
        if (!find_key(k)) throw ConfigError("unknown key " + k);
    }
    const detail::TypedLookup get(merged);
    RunConfig cfg;

    const auto command = get.string("command");
    if (!command) throw ConfigError("command: missing required key");
    if (auto c = parse_command(*command)) {
        cfg.command = *c;
    } else {
        throw ConfigError("command: unknown command '" + *command + "'");
    }

    std::vector<Family> families = {Family::ExpFace, Family::CosFace, Family::ArcFace,
                                    Family::SphereFace};
    if (auto names = get.strings("losses")) {
        if (names->empty()) throw ConfigError("losses: must not be empty");
        families.clear();
        for (const auto& n : *names) families.push_back(detail::family_or_throw("losses", n));
    }
    const auto margins = get.reals("margins");
    const auto scales = get.reals("scales");
    if (margins && margins->size() != families.size()) {
        throw ConfigError("margins: expected " + std::to_string(families.size()) + " values");
    }
    if (scales && scales->size() != families.size()) {
        throw ConfigError("scales: expected " + std::to_string(families.size()) + " values");
    }
    for (std::size_t i = 0; i < families.size(); ++i) {
        LossSpec spec = default_spec(families[i]);
        if (margins) spec.margin = (*margins)[i];
        if (scales) spec.scale = (*scales)[i];
        cfg.losses.push_back(detail::checked_loss(margins ? "margins" : "scales", spec));
    }

    if (auto b = get.real("b")) {
        if (!(*b > 0.0 && *b < kPi)) throw ConfigError("b: must lie in (0, pi)");
        cfg.b = Angle(*b);
    }
    if (auto c = get.integer("class_count", 2, 1'000'000'000)) cfg.class_count = static_cast<int>(*c);
    if (auto s = get.real("context_scale")) {
        if (!(*s > 0.0)) throw ConfigError("context_scale: must be positive");
        cfg.context_scale = *s;
    }
    const int min_grid = cfg.command == Command::Gradcheck ? 3 : 2;
    if (auto g = get.integer("grid_size", min_grid, 100'000'000)) cfg.grid_size = static_cast<int>(*g);

    if (auto dir = get.string("output_dir")) {
        if (dir->empty()) throw ConfigError("output_dir: must not be empty");
        cfg.output_dir = *dir;
    } else if (const char* env = std::getenv(std::string(kOutputDirEnv).c_str()); env && *env) {
        cfg.output_dir = env;
    }
    if (auto svg = get.boolean("svg")) cfg.emit_svg = *svg;

    bool any_toy_key = false;
    for (const auto& [k, v] : merged) any_toy_key = any_toy_key || k.starts_with("toy.");
    if (cfg.command == Command::Simulate || any_toy_key) {
        ToySpec toy;
        auto int_key = [&](std::string_view key, int& slot, std::int64_t lo) {
            if (auto v = get.integer(key, lo, 100'000'000)) slot = static_cast<int>(*v);
        };
        int_key("toy.input_dim", toy.input_dim, 2);
        int_key("toy.embed_dim", toy.embed_dim, 2);
        int_key("toy.class_count", toy.class_count, 2);
        int_key("toy.samples_per_class", toy.samples_per_class, 1);
        int_key("toy.type2_pair_count", toy.type2_pair_count, 0);
        int_key("toy.epochs", toy.epochs, 1);
        int_key("toy.batch_size", toy.batch_size, 1);
        if (auto v = get.real("toy.type1_fraction")) toy.type1_fraction = *v;
        if (auto v = get.real("toy.dispersion")) toy.dispersion = *v;
        if (auto v = get.real("toy.learning_rate")) toy.learning_rate = *v;
        if (auto v = get.integer("toy.seed", 0, std::int64_t{1} << 53)) {
            toy.seed = static_cast<std::uint64_t>(*v);
        }
        if (auto name = get.string("toy.loss")) {
            toy.loss = default_spec(detail::family_or_throw("toy.loss", *name));
        }
        if (auto v = get.real("toy.margin")) toy.loss.margin = *v;
        if (auto v = get.real("toy.scale")) toy.loss.scale = *v;
        detail::checked_loss("toy.margin", toy.loss);
        try {
            validate(toy);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(e.what()));
        }
        cfg.toy = toy;
    }
    return cfg;
}

}  // namespace expface::io
