#include "topowarp/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace topowarp {

double geometry_scale(std::size_t h) { return static_cast<double>(h) / 144.0; }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: key '" + key + "' wants a boolean, got '" + v + "'");
}

double parse_real(const std::string& v, const std::string& key) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' wants a number, got '" + v + "'");
    }
    if (used != v.size())
        throw ConfigError("config: key '" + key + "' wants a number, got '" + v + "'");
    return x;
}

long long parse_int(const std::string& v, const std::string& key) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' wants an integer, got '" + v + "'");
    }
    if (used != v.size())
        throw ConfigError("config: key '" + key + "' wants an integer, got '" + v + "'");
    return x;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& v, const std::string& key, Parse one) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(one(item, key));
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' wants a comma list");
    return out;
}

std::string fmt_real(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// Single table describing every key: how to set it from text and how to echo
// its current value. Order here is the order of resolved_config.txt.
struct KeyDef {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> keys = {
        {"h",
         [](RunConfig& c, const std::string& v) {
             const long long x = parse_int(v, "h");
             if (x <= 0) throw ConfigError("config: h must be positive");
             c.model.h = c.data.h = static_cast<std::size_t>(x);
         },
         [](const RunConfig& c) { return std::to_string(c.model.h); }},
        {"w",
         [](RunConfig& c, const std::string& v) {
             const long long x = parse_int(v, "w");
             if (x <= 0) throw ConfigError("config: w must be positive");
             c.model.w = c.data.w = static_cast<std::size_t>(x);
         },
         [](const RunConfig& c) { return std::to_string(c.model.w); }},
        {"n_train",
         [](RunConfig& c, const std::string& v) {
             c.data.n_train = static_cast<std::size_t>(parse_int(v, "n_train"));
         },
         [](const RunConfig& c) { return std::to_string(c.data.n_train); }},
        {"n_val",
         [](RunConfig& c, const std::string& v) {
             c.data.n_val = static_cast<std::size_t>(parse_int(v, "n_val"));
         },
         [](const RunConfig& c) { return std::to_string(c.data.n_val); }},
        {"n_test",
         [](RunConfig& c, const std::string& v) {
             c.data.n_test = static_cast<std::size_t>(parse_int(v, "n_test"));
         },
         [](const RunConfig& c) { return std::to_string(c.data.n_test); }},
        {"radius_lo",
         [](RunConfig& c, const std::string& v) { c.data.radius_lo = parse_real(v, "radius_lo"); },
         [](const RunConfig& c) { return fmt_real(c.data.radius_lo); }},
        {"radius_hi",
         [](RunConfig& c, const std::string& v) { c.data.radius_hi = parse_real(v, "radius_hi"); },
         [](const RunConfig& c) { return fmt_real(c.data.radius_hi); }},
        {"thickness_lo",
         [](RunConfig& c, const std::string& v) {
             c.data.thickness_lo = parse_real(v, "thickness_lo");
         },
         [](const RunConfig& c) { return fmt_real(c.data.thickness_lo); }},
        {"thickness_hi",
         [](RunConfig& c, const std::string& v) {
             c.data.thickness_hi = parse_real(v, "thickness_hi");
         },
         [](const RunConfig& c) { return fmt_real(c.data.thickness_hi); }},
        {"noise_sigma",
         [](RunConfig& c, const std::string& v) {
             c.data.noise_sigma = parse_real(v, "noise_sigma");
         },
         [](const RunConfig& c) { return fmt_real(c.data.noise_sigma); }},
        {"distractor_max",
         [](RunConfig& c, const std::string& v) {
             c.data.distractor_max = static_cast<int>(parse_int(v, "distractor_max"));
         },
         [](const RunConfig& c) { return std::to_string(c.data.distractor_max); }},
        {"center_jitter",
         [](RunConfig& c, const std::string& v) {
             c.data.center_jitter = parse_real(v, "center_jitter");
         },
         [](const RunConfig& c) { return fmt_real(c.data.center_jitter); }},
        {"augment",
         [](RunConfig& c, const std::string& v) { c.data.augment = parse_bool(v, "augment"); },
         [](const RunConfig& c) { return c.data.augment ? "true" : "false"; }},
        {"augment_fraction",
         [](RunConfig& c, const std::string& v) {
             c.data.augment_fraction = parse_real(v, "augment_fraction");
         },
         [](const RunConfig& c) { return fmt_real(c.data.augment_fraction); }},
        {"data_seed",
         [](RunConfig& c, const std::string& v) {
             c.data.data_seed = static_cast<std::uint64_t>(parse_int(v, "data_seed"));
         },
         [](const RunConfig& c) { return std::to_string(c.data.data_seed); }},
        {"levels",
         [](RunConfig& c, const std::string& v) {
             c.model.levels = static_cast<int>(parse_int(v, "levels"));
         },
         [](const RunConfig& c) { return std::to_string(c.model.levels); }},
        {"base_channels",
         [](RunConfig& c, const std::string& v) {
             c.model.base_channels = static_cast<int>(parse_int(v, "base_channels"));
         },
         [](const RunConfig& c) { return std::to_string(c.model.base_channels); }},
        {"dropout",
         [](RunConfig& c, const std::string& v) { c.model.dropout = parse_real(v, "dropout"); },
         [](const RunConfig& c) { return fmt_real(c.model.dropout); }},
        {"integration_layers",
         [](RunConfig& c, const std::string& v) {
             c.model.integration_layers = static_cast<int>(parse_int(v, "integration_layers"));
         },
         [](const RunConfig& c) { return std::to_string(c.model.integration_layers); }},
        {"smoothing_enabled",
         [](RunConfig& c, const std::string& v) {
             c.model.smoothing.enabled = parse_bool(v, "smoothing_enabled");
         },
         [](const RunConfig& c) { return c.model.smoothing.enabled ? "true" : "false"; }},
        {"smoothing_kernel",
         [](RunConfig& c, const std::string& v) {
             c.model.smoothing.kernel_size = static_cast<int>(parse_int(v, "smoothing_kernel"));
         },
         [](const RunConfig& c) { return std::to_string(c.model.smoothing.kernel_size); }},
        {"smoothing_sigma",
         [](RunConfig& c, const std::string& v) {
             c.model.smoothing.sigma = parse_real(v, "smoothing_sigma");
         },
         [](const RunConfig& c) { return fmt_real(c.model.smoothing.sigma); }},
        {"super_upsample",
         [](RunConfig& c, const std::string& v) {
             c.model.super_upsample = parse_bool(v, "super_upsample");
         },
         [](const RunConfig& c) { return c.model.super_upsample ? "true" : "false"; }},
        {"use_bulk",
         [](RunConfig& c, const std::string& v) { c.model.use_bulk = parse_bool(v, "use_bulk"); },
         [](const RunConfig& c) { return c.model.use_bulk ? "true" : "false"; }},
        {"use_ft",
         [](RunConfig& c, const std::string& v) { c.model.use_ft = parse_bool(v, "use_ft"); },
         [](const RunConfig& c) { return c.model.use_ft ? "true" : "false"; }},
        {"use_grad_loss",
         [](RunConfig& c, const std::string& v) {
             c.model.use_grad_loss = parse_bool(v, "use_grad_loss");
         },
         [](const RunConfig& c) { return c.model.use_grad_loss ? "true" : "false"; }},
        {"beta",
         [](RunConfig& c, const std::string& v) { c.model.beta = parse_real(v, "beta"); },
         [](const RunConfig& c) { return fmt_real(c.model.beta); }},
        {"prior_radius",
         [](RunConfig& c, const std::string& v) {
             c.model.prior_radius = parse_real(v, "prior_radius");
         },
         [](const RunConfig& c) { return fmt_real(c.model.prior_radius); }},
        {"prior_thickness",
         [](RunConfig& c, const std::string& v) {
             c.model.prior_thickness = parse_real(v, "prior_thickness");
         },
         [](const RunConfig& c) { return fmt_real(c.model.prior_thickness); }},
        {"lr",
         [](RunConfig& c, const std::string& v) { c.model.lr = parse_real(v, "lr"); },
         [](const RunConfig& c) { return fmt_real(c.model.lr); }},
        {"batch",
         [](RunConfig& c, const std::string& v) {
             c.model.batch = static_cast<int>(parse_int(v, "batch"));
         },
         [](const RunConfig& c) { return std::to_string(c.model.batch); }},
        {"epochs",
         [](RunConfig& c, const std::string& v) {
             c.model.epochs = static_cast<int>(parse_int(v, "epochs"));
         },
         [](const RunConfig& c) { return std::to_string(c.model.epochs); }},
        {"seed",
         [](RunConfig& c, const std::string& v) {
             c.model.seed = static_cast<std::uint64_t>(parse_int(v, "seed"));
         },
         [](const RunConfig& c) { return std::to_string(c.model.seed); }},
        {"sweep_t_values",
         [](RunConfig& c, const std::string& v) {
             c.sweep_t_values = parse_list<int>(v, "sweep_t_values", [](const std::string& s,
                                                                        const std::string& k) {
                 return static_cast<int>(parse_int(s, k));
             });
         },
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.sweep_t_values.size(); ++i)
                 s += (i ? "," : "") + std::to_string(c.sweep_t_values[i]);
             return s;
         }},
        {"sweep_radii",
         [](RunConfig& c, const std::string& v) {
             c.sweep_radii = parse_list<double>(v, "sweep_radii",
                                                [](const std::string& s, const std::string& k) {
                                                    return parse_real(s, k);
                                                });
         },
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.sweep_radii.size(); ++i)
                 s += (i ? "," : "") + fmt_real(c.sweep_radii[i]);
             return s;
         }},
    };
    return keys;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value,
             const std::string& origin) {
    const std::string k = (key == "T") ? "integration_layers" : key;
    for (const KeyDef& def : key_table()) {
        if (k == def.name) {
            def.set(cfg, value);
            return;
        }
    }
    throw ConfigError(origin + ": unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
    if (model.levels < 4 || model.levels > 8)
        throw ConfigError("config: levels must be in [4, 8] (decoder branches need 3 "
                          "upsampling steps)");
    const std::size_t div = std::size_t{1} << (model.levels - 1);
    if (model.h % div != 0 || model.w % div != 0)
        throw ConfigError("config: frame extents must be divisible by " + std::to_string(div) +
                          " at " + std::to_string(model.levels) + " levels, got " +
                          std::to_string(model.h) + "x" + std::to_string(model.w));
    if (model.base_channels < 1) throw ConfigError("config: base_channels must be positive");
    if (model.dropout < 0.0 || model.dropout >= 1.0)
        throw ConfigError("config: dropout must be in [0, 1)");
    if (model.integration_layers < 0)
        throw ConfigError("config: integration_layers must be >= 0");
    if (model.beta < 0.0) throw ConfigError("config: beta must be non-negative");
    if (model.lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (model.batch < 1) throw ConfigError("config: batch must be at least 1");
    if (model.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (model.smoothing.kernel_size < 1 || model.smoothing.kernel_size % 2 == 0)
        throw ConfigError("config: smoothing_kernel must be odd and positive");
    if (model.smoothing.sigma <= 0.0) throw ConfigError("config: smoothing_sigma must be positive");
    if (data.radius_lo <= 0.0 || data.radius_hi < data.radius_lo)
        throw ConfigError("config: dataset radius range is invalid");
    if (data.thickness_lo <= 0.0 || data.thickness_hi < data.thickness_lo)
        throw ConfigError("config: dataset thickness range is invalid");
    if (data.noise_sigma < 0.0) throw ConfigError("config: noise_sigma must be non-negative");
    if (data.distractor_max < 0) throw ConfigError("config: distractor_max must be >= 0");
    if (data.center_jitter < 0.0 || data.center_jitter > 0.5)
        throw ConfigError("config: center_jitter must be in [0, 0.5]");
    if (data.augment_fraction < 0.0 || data.augment_fraction > 1.0)
        throw ConfigError("config: augment_fraction must be in [0, 1]");

    // the largest annulus (radius + half thickness, frame units) must fit
    // inside the frame with a margin of at least 2 voxels
    const double s = geometry_scale(data.h);
    const double reach = (data.radius_hi + data.thickness_hi / 2.0) * s;
    const double half_min =
        static_cast<double>(std::min(data.h, data.w)) / 2.0;
    if (reach + 2.0 > half_min)
        throw ConfigError("config: largest annulus (reach " + std::to_string(reach) +
                          " voxels) does not fit a " + std::to_string(data.h) + "x" +
                          std::to_string(data.w) + " frame with margin 2");
    // jittered centers must keep the largest annulus inside the frame
    const double mid_r = (static_cast<double>(data.h) - 1.0) / 2.0;
    const double mid_c = (static_cast<double>(data.w) - 1.0) / 2.0;
    if (reach + 2.0 + data.center_jitter * static_cast<double>(data.h) > mid_r ||
        reach + 2.0 + data.center_jitter * static_cast<double>(data.w) > mid_c)
        throw ConfigError("config: center_jitter pushes the largest annulus out of frame");
    const double prior_reach = (model.prior_radius + model.prior_thickness / 2.0) * s;
    if (prior_reach + 2.0 > half_min)
        throw ConfigError("config: prior annulus does not fit the frame");

    if (sweep_t_values.empty()) throw ConfigError("config: sweep_t_values must not be empty");
    for (int t : sweep_t_values)
        if (t < 0) throw ConfigError("config: sweep_t_values entries must be >= 0");
    if (sweep_radii.empty()) throw ConfigError("config: sweep_radii must not be empty");
    for (double r : sweep_radii)
        if (r <= 0.0) throw ConfigError("config: sweep_radii entries must be positive");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        set_key(cfg, key, value, origin + ":" + std::to_string(lineno));
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    set_key(cfg, key, value, "override");
}

void write_resolved_config(std::ostream& os, const RunConfig& cfg) {
    for (const KeyDef& def : key_table()) os << def.name << " = " << def.get(cfg) << "\n";
}

void write_resolved_config_file(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write resolved config: " + path);
    write_resolved_config(os, cfg);
}

}  // namespace topowarp
