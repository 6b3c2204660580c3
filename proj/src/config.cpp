#include "qkd/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace qkd {

void RunConfig::validate() const {
    source.validate();
    cascade.validate();
    if (window <= 0) throw std::invalid_argument("window must be positive");
    if (sample_fraction < 0 || sample_fraction >= 1)
        throw std::invalid_argument("sample_fraction must be in [0, 1)");
    if (auth_bits != 32 && auth_bits != 64 && auth_bits != 96 && auth_bits != 128 &&
        auth_bits != 256)
        throw std::invalid_argument("auth_bits must be one of 32, 64, 96, 128, 256");
    if (stats_bin_s <= 0) throw std::invalid_argument("stats_bin_s must be positive");
    if (sync.search_range_s <= 0)
        throw std::invalid_argument("sync.search_range_s must be positive");
    if (sync.coarse_bin <= 0 || sync.final_bin <= 0 || sync.fine_bin <= 0)
        throw std::invalid_argument("sync bins must be positive");
    if (timeout_ms <= 0) throw std::invalid_argument("timeout_ms must be positive");
}

void apply_preset(RunConfig& cfg, const std::string& name) {
    if (name == "jena-night") {
        // tuned so the detected singles, coincidence and error rates land on
        // the nighttime benchmark values at a 1 ns window
        cfg.source.pair_rate = 11.695e6;
        cfg.source.eff_a = 0.088002;
        cfg.source.eff_b = 0.016177;
        cfg.source.dark_per_det_a = 200;
        cfg.source.dark_per_det_b = 200;
        cfg.source.bg_b = 0;
        cfg.source.v_hv = 0.9733;
        cfg.source.v_da = 0.9733;
        cfg.source.duration = 60;
        cfg.source.clock_offset = 0.35;
        cfg.source.clock_drift = 2e-9;
        cfg.window = 1000;
        cfg.sync.search_range_s = 5;
    } else if (name == "test-small") {
        cfg.source.pair_rate = 5e6;
        cfg.source.eff_a = 0.08;
        cfg.source.eff_b = 0.02;
        cfg.source.dark_per_det_a = 200;
        cfg.source.dark_per_det_b = 200;
        cfg.source.v_hv = 0.96;
        cfg.source.v_da = 0.96;
        cfg.source.duration = 2;
        cfg.source.clock_offset = 0.012;
        cfg.source.clock_drift = 1e-6;
        cfg.window = 1000;
        cfg.sync.search_range_s = 0.5;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
}

namespace {

template <typename T>
T parse_num(const std::string& v) {
    std::istringstream ss(v);
    T out;
    ss >> out;
    if (ss.fail()) throw std::invalid_argument("bad numeric value: " + v);
    return out;
}

} // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    using Setter = std::function<void(RunConfig&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"source.pair_rate", [](RunConfig& c, const std::string& v) { c.source.pair_rate = parse_num<double>(v); }},
        {"source.v_hv", [](RunConfig& c, const std::string& v) { c.source.v_hv = parse_num<double>(v); }},
        {"source.v_da", [](RunConfig& c, const std::string& v) { c.source.v_da = parse_num<double>(v); }},
        {"source.eff_a", [](RunConfig& c, const std::string& v) { c.source.eff_a = parse_num<double>(v); }},
        {"source.eff_b", [](RunConfig& c, const std::string& v) { c.source.eff_b = parse_num<double>(v); }},
        {"source.dark_per_det_a", [](RunConfig& c, const std::string& v) { c.source.dark_per_det_a = parse_num<double>(v); }},
        {"source.dark_per_det_b", [](RunConfig& c, const std::string& v) { c.source.dark_per_det_b = parse_num<double>(v); }},
        {"source.bg_b", [](RunConfig& c, const std::string& v) { c.source.bg_b = parse_num<double>(v); }},
        {"source.jitter_sigma", [](RunConfig& c, const std::string& v) { c.source.jitter_sigma = parse_num<double>(v); }},
        {"source.clock_offset", [](RunConfig& c, const std::string& v) { c.source.clock_offset = parse_num<double>(v); }},
        {"source.clock_drift", [](RunConfig& c, const std::string& v) { c.source.clock_drift = parse_num<double>(v); }},
        {"source.duration", [](RunConfig& c, const std::string& v) { c.source.duration = parse_num<double>(v); }},
        {"source.seed", [](RunConfig& c, const std::string& v) { c.source.seed = parse_num<std::uint64_t>(v); }},
        {"sync.search_range_s", [](RunConfig& c, const std::string& v) { c.sync.search_range_s = parse_num<double>(v); }},
        {"sync.coarse_bin", [](RunConfig& c, const std::string& v) { c.sync.coarse_bin = parse_num<Ps>(v); }},
        {"sync.final_bin", [](RunConfig& c, const std::string& v) { c.sync.final_bin = parse_num<Ps>(v); }},
        {"sync.max_drift", [](RunConfig& c, const std::string& v) { c.sync.max_drift = parse_num<double>(v); }},
        {"sync.threshold_sigma", [](RunConfig& c, const std::string& v) { c.sync.threshold_sigma = parse_num<double>(v); }},
        {"sync.min_block", [](RunConfig& c, const std::string& v) { c.sync.min_block = parse_num<std::size_t>(v); }},
        {"sync.fine_window", [](RunConfig& c, const std::string& v) { c.sync.fine_window = parse_num<Ps>(v); }},
        {"sync.fine_bin", [](RunConfig& c, const std::string& v) { c.sync.fine_bin = parse_num<Ps>(v); }},
        {"cascade.passes", [](RunConfig& c, const std::string& v) { c.cascade.passes = parse_num<std::size_t>(v); }},
        {"cascade.verify_probes", [](RunConfig& c, const std::string& v) { c.cascade.verify_probes = parse_num<std::size_t>(v); }},
        {"window", [](RunConfig& c, const std::string& v) { c.window = parse_num<Ps>(v); }},
        {"sample_fraction", [](RunConfig& c, const std::string& v) { c.sample_fraction = parse_num<double>(v); }},
        {"n_mar", [](RunConfig& c, const std::string& v) { c.n_mar = parse_num<std::size_t>(v); }},
        {"auth_bits", [](RunConfig& c, const std::string& v) { c.auth_bits = parse_num<int>(v); }},
        {"stats_bin_s", [](RunConfig& c, const std::string& v) { c.stats_bin_s = parse_num<double>(v); }},
        {"host", [](RunConfig& c, const std::string& v) { c.host = v; }},
        {"port", [](RunConfig& c, const std::string& v) { c.port = parse_num<int>(v); }},
        {"kms_port", [](RunConfig& c, const std::string& v) { c.kms_port = parse_num<int>(v); }},
        {"psk_file", [](RunConfig& c, const std::string& v) { c.psk_file = v; }},
        {"tags_file", [](RunConfig& c, const std::string& v) { c.tags_file = v; }},
        {"stats_file", [](RunConfig& c, const std::string& v) { c.stats_file = v; }},
        {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
        {"session_seed", [](RunConfig& c, const std::string& v) { c.session_seed = parse_num<std::uint64_t>(v); }},
        {"timeout_ms", [](RunConfig& c, const std::string& v) { c.timeout_ms = parse_num<int>(v); }},
        {"abort_after", [](RunConfig& c, const std::string& v) { c.abort_after = v; }},
        {"preset", [](RunConfig& c, const std::string& v) { apply_preset(c, v); }},
    };
    auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("unknown config key: " + key);
    it->second(cfg, value);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto strip = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string trimmed = strip(line);
        if (trimmed.empty()) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        set_config_value(cfg, strip(trimmed.substr(0, eq)), strip(trimmed.substr(eq + 1)));
    }
}

} // namespace qkd
