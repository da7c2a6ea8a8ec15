#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "losses.hpp"
#include "train.hpp"

namespace warpfield {

// Flat key=value run configuration. Precedence: CLI flags > config file >
// defaults; the defaults reproduce the full method.
struct RunConfig {
    std::string dataset;
    std::string output;
    std::uint64_t seed = 1;

    int canonical_width = 256;
    int canonical_depth = 8;
    int canonical_skip = 4;
    int position_bands = 10;
    int direction_bands = 4;
    int latent_dim = 32;
    int bending_width = 64;
    int bending_layers = 5;
    int rigidity_width = 32;
    int rigidity_layers = 3;
    int view_head_width = 128;
    std::string view_dependence = "off"; // off | approximate | exact

    double base_lr = 5e-4;
    double lr_decay_fraction = 0.1;
    int lr_decay_horizon = 250000;
    bool warmup = true;
    int warmup_span = 1000;
    double warmup_start = 0.05;
    double weight_ramp_start = 0.01;
    int total_iterations = 100000;
    int batch_rays = 1024;

    double w_rigidity = 0.003;
    double w_offsets = 600.0;
    double w_divergence = 3.0;

    bool disable_bending = false;
    bool disable_rigidity = false;
    bool naive_conditioning = false;
    bool naive_offsets = false;
    bool disable_divergence = false;
    bool disable_regularizers = false;
    bool offsets_exponent_at_straight = false;
    bool independent_latents = false; // one latent per image instead of per time step

    int coarse_samples = 64;
    int fine_samples = 64;
    double bounds_expand = 0.05;
    int checkpoint_every = 0; // 0 = final checkpoint only
    int log_every = 100;
    int test_latent_iterations = 1000;

    ModelConfig model_config() const {
        ModelConfig m;
        m.canonical_width = canonical_width;
        m.canonical_depth = canonical_depth;
        m.canonical_skip = canonical_skip;
        m.encoding.bands = position_bands;
        m.dir_encoding.bands = direction_bands;
        m.latent_dim = latent_dim;
        m.bending_width = bending_width;
        m.bending_layers = bending_layers;
        m.rigidity_width = rigidity_width;
        m.rigidity_layers = rigidity_layers;
        m.view_head_width = view_head_width;
        m.bending_enabled = !disable_bending;
        m.rigidity_enabled = !disable_rigidity;
        m.naive_conditioning = naive_conditioning;
        if (view_dependence == "off") m.view_dependence = ViewDependence::off;
        else if (view_dependence == "approximate") m.view_dependence = ViewDependence::approximate;
        else if (view_dependence == "exact") m.view_dependence = ViewDependence::exact;
        else throw UsageError("view_dependence must be off, approximate, or exact");
        return m;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.model = model_config();
        t.schedule.base_lr = base_lr;
        t.schedule.lr_decay_fraction = lr_decay_fraction;
        t.schedule.lr_decay_horizon = lr_decay_horizon;
        t.schedule.warmup = warmup;
        t.schedule.warmup_span = warmup_span;
        t.schedule.warmup_start = warmup_start;
        t.schedule.weight_ramp_start = weight_ramp_start;
        t.schedule.total_iterations = total_iterations;
        t.schedule.batch_rays = batch_rays;
        t.weights.rigidity = w_rigidity;
        t.weights.offsets = w_offsets;
        t.weights.divergence = w_divergence;
        t.coarse_samples = coarse_samples;
        t.fine_samples = fine_samples;
        t.seed = seed;
        t.naive_offsets = naive_offsets;
        t.disable_offsets_loss = disable_regularizers;
        t.disable_divergence_loss = disable_divergence || disable_regularizers;
        t.offsets_exponent_at_straight = offsets_exponent_at_straight;
        return t;
    }

    void validate() const { train_config().validate(); }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("config: expected true/false/1/0, got '" + v + "'");
}

inline int parse_int(const std::string& v) {
    std::size_t used = 0;
    int out = 0;
    try {
        out = std::stoi(v, &used);
    } catch (const std::exception&) {
        throw UsageError("config: expected an integer, got '" + v + "'");
    }
    if (used != v.size()) throw UsageError("config: expected an integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw UsageError("config: expected a number, got '" + v + "'");
    }
    if (used != v.size()) throw UsageError("config: expected a number, got '" + v + "'");
    return out;
}

inline std::uint64_t parse_u64(const std::string& v) {
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        throw UsageError("config: expected a nonnegative integer, got '" + v + "'");
    }
    if (used != v.size()) throw UsageError("config: expected a nonnegative integer, got '" + v + "'");
    return out;
}

struct ConfigField {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
    auto str = [](std::string RunConfig::* f) {
        return ConfigField{[f](RunConfig& c, const std::string& v) { c.*f = v; },
                           [f](const RunConfig& c) { return c.*f; }};
    };
    auto num = [](int RunConfig::* f) {
        return ConfigField{[f](RunConfig& c, const std::string& v) { c.*f = parse_int(v); },
                           [f](const RunConfig& c) { return std::to_string(c.*f); }};
    };
    auto real = [](double RunConfig::* f) {
        return ConfigField{[f](RunConfig& c, const std::string& v) { c.*f = parse_double(v); },
                           [f](const RunConfig& c) {
                               char buf[48];
                               std::snprintf(buf, sizeof buf, "%.17g", c.*f);
                               return std::string(buf);
                           }};
    };
    auto flag = [](bool RunConfig::* f) {
        return ConfigField{[f](RunConfig& c, const std::string& v) { c.*f = parse_bool(v); },
                           [f](const RunConfig& c) { return c.*f ? std::string("true") : std::string("false"); }};
    };
    static const std::vector<std::pair<std::string, ConfigField>> fields = {
        {"dataset", str(&RunConfig::dataset)},
        {"output", str(&RunConfig::output)},
        {"seed", ConfigField{[](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); },
                             [](const RunConfig& c) { return std::to_string(c.seed); }}},
        {"canonical_width", num(&RunConfig::canonical_width)},
        {"canonical_depth", num(&RunConfig::canonical_depth)},
        {"canonical_skip", num(&RunConfig::canonical_skip)},
        {"position_bands", num(&RunConfig::position_bands)},
        {"direction_bands", num(&RunConfig::direction_bands)},
        {"latent_dim", num(&RunConfig::latent_dim)},
        {"bending_width", num(&RunConfig::bending_width)},
        {"bending_layers", num(&RunConfig::bending_layers)},
        {"rigidity_width", num(&RunConfig::rigidity_width)},
        {"rigidity_layers", num(&RunConfig::rigidity_layers)},
        {"view_head_width", num(&RunConfig::view_head_width)},
        {"view_dependence", str(&RunConfig::view_dependence)},
        {"base_lr", real(&RunConfig::base_lr)},
        {"lr_decay_fraction", real(&RunConfig::lr_decay_fraction)},
        {"lr_decay_horizon", num(&RunConfig::lr_decay_horizon)},
        {"warmup", flag(&RunConfig::warmup)},
        {"warmup_span", num(&RunConfig::warmup_span)},
        {"warmup_start", real(&RunConfig::warmup_start)},
        {"weight_ramp_start", real(&RunConfig::weight_ramp_start)},
        {"total_iterations", num(&RunConfig::total_iterations)},
        {"batch_rays", num(&RunConfig::batch_rays)},
        {"w_rigidity", real(&RunConfig::w_rigidity)},
        {"w_offsets", real(&RunConfig::w_offsets)},
        {"w_divergence", real(&RunConfig::w_divergence)},
        {"disable_bending", flag(&RunConfig::disable_bending)},
        {"disable_rigidity", flag(&RunConfig::disable_rigidity)},
        {"naive_conditioning", flag(&RunConfig::naive_conditioning)},
        {"naive_offsets", flag(&RunConfig::naive_offsets)},
        {"disable_divergence", flag(&RunConfig::disable_divergence)},
        {"disable_regularizers", flag(&RunConfig::disable_regularizers)},
        {"offsets_exponent_at_straight", flag(&RunConfig::offsets_exponent_at_straight)},
        {"independent_latents", flag(&RunConfig::independent_latents)},
        {"coarse_samples", num(&RunConfig::coarse_samples)},
        {"fine_samples", num(&RunConfig::fine_samples)},
        {"bounds_expand", real(&RunConfig::bounds_expand)},
        {"checkpoint_every", num(&RunConfig::checkpoint_every)},
        {"log_every", num(&RunConfig::log_every)},
        {"test_latent_iterations", num(&RunConfig::test_latent_iterations)},
    };
    return fields;
}

} // namespace detail

inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& [name, field] : detail::config_fields())
        if (name == key) {
            field.set(cfg, value);
            return;
        }
    throw UsageError("config: unknown key '" + key + "'");
}

// whitespace-trimmed key=value lines; '#' starts a comment
inline void parse_config_text(RunConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
        set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    parse_config_text(cfg, buf.str());
}

inline std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : detail::config_fields())
        out += name + " = " + field.get(cfg) + "\n";
    return out;
}

} // namespace warpfield
