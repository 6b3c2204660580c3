// Post-processing command-line front end: simulation, endpoint sessions,
// link-budget tables and KMS scripting access.

#include <cstdio>
#include <filesystem>
#include <chrono>
#include <fstream>
#include <thread>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkd/config.hpp"
#include "qkd/kms.hpp"
#include "qkd/linkmodel.hpp"
#include "qkd/session.hpp"
#include "qkd/simulator.hpp"
#include "qkd/ttag_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct CommonOpts {
    std::string preset;
    std::string config_file;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--preset", c.preset, "named parameter bundle (jena-night, test-small)");
    cmd->add_option("--config", c.config_file, "key = value configuration file");
    cmd->add_option("--set", c.overrides, "override a single key=value (repeatable)")
        ->take_all();
}

// precedence: flags > config file > preset > defaults
qkd::RunConfig build_config(const CommonOpts& c) {
    qkd::RunConfig cfg;
    if (!c.preset.empty()) qkd::apply_preset(cfg, c.preset);
    if (!c.config_file.empty()) qkd::load_config_file(cfg, c.config_file);
    for (const auto& kv : c.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        qkd::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void write_psk(const std::string& path, std::uint64_t seed, std::size_t bytes) {
    qkd::Rng rng(seed ^ 0x9512f5bd8a3c11ull);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t i = 0; i < bytes; ++i) {
        char b = static_cast<char>(rng.u64());
        f.write(&b, 1);
    }
}

int cmd_simulate(const CommonOpts& common) {
    qkd::RunConfig cfg = build_config(common);
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    auto path = [&](const std::string& name) {
        return (std::filesystem::path(cfg.out_dir) / name).string();
    };
    qkd::Session s = qkd::generate_session(cfg.source);
    qkd::write_stream(s.alice, path("alice.ttag"));
    qkd::write_stream(s.bob, path("bob.ttag"));
    qkd::write_ground_truth(s, cfg.source, path("truth.json"));
    write_psk(path("psk.bin"), cfg.session_seed, 4096);
    std::cout << "wrote " << s.alice.size() << " Alice tags, " << s.bob.size()
              << " Bob tags to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_endpoint(qkd::Party role, const CommonOpts& common, bool live_sim) {
    qkd::RunConfig cfg = build_config(common);
    cfg.validate();
    if (cfg.psk_file.empty())
        throw std::invalid_argument("psk_file is required for an endpoint");
    if (cfg.tags_file.empty() && !live_sim)
        throw std::invalid_argument("tags_file is required (or use --sim)");

    qkd::TagStream tags;
    if (live_sim) {
        qkd::Session s = qkd::generate_session(cfg.source);
        tags = role == qkd::Party::Alice ? std::move(s.alice) : std::move(s.bob);
    } else {
        tags = qkd::read_stream(cfg.tags_file, role);
    }

    qkd::KeyStore keys = qkd::KeyStore::from_file(cfg.psk_file);
    std::vector<std::uint8_t> nonce;
    for (int i = 0; i < 8; ++i)
        nonce.push_back(static_cast<std::uint8_t>(cfg.session_seed >> (8 * i)));
    qkd::KmsStore kms{nonce};

    std::shared_ptr<qkd::Channel> channel;
    if (role == qkd::Party::Alice) {
        channel = qkd::listen_channel(cfg.port, cfg.timeout_ms);
    } else {
        // the peer may still be loading its detections; retry until it listens
        auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(cfg.timeout_ms);
        while (true) {
            try {
                channel = qkd::connect_channel(cfg.host, cfg.port, cfg.timeout_ms);
                break;
            } catch (const std::exception&) {
                if (std::chrono::steady_clock::now() >= deadline) throw;
                std::this_thread::sleep_for(std::chrono::milliseconds(250));
            }
        }
    }

    qkd::SessionResult r = qkd::run_session(role, tags, cfg, *channel, keys, &kms);
    channel->close();

    auto bins = qkd::stats_report(r, role, cfg.stats_bin_s);
    if (!cfg.stats_file.empty()) {
        std::ofstream f(cfg.stats_file, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + cfg.stats_file);
        f << (cfg.stats_file.ends_with(".json") ? qkd::stats_json(bins)
                                                : qkd::stats_csv(bins));
    }

    std::cout << qkd::party_name(role) << ": stage=" << qkd::stage_name(r.stage)
              << " n_coinc=" << r.n_coinc << " n_sifted=" << r.n_sifted
              << " qber=" << r.qber << " n_in=" << r.n_in << " n_dis=" << r.n_dis
              << " n_fin=" << r.n_fin << "\n";
    if (r.stage != qkd::Stage::Authenticated) {
        std::cerr << "session failed at stage " << qkd::stage_name(r.stage) << ": "
                  << r.abort_reason << "\n";
        return kExitRuntime;
    }
    if (cfg.kms_port > 0) qkd::run_kms_server(kms, cfg.kms_port);
    return kExitOk;
}

int cmd_linkbudget(const qkd::LinkParams& base, std::vector<double> distances,
                   std::vector<double> cn2s, double skr_base, double extra_loss,
                   bool as_json) {
    if (distances.empty()) distances.push_back(base.distance);
    if (cn2s.empty()) cn2s.push_back(base.cn2);
    auto points = qkd::sweep_loss(base, distances, cn2s);
    if (as_json) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : points)
            arr.push_back({{"L_m", p.distance}, {"cn2", p.cn2}, {"loss_db", p.loss_db}});
        nlohmann::json out{{"points", arr}};
        if (skr_base > 0)
            out["skr_bps"] = qkd::extrapolate_skr(skr_base, extra_loss >= 0
                                                                ? extra_loss
                                                                : points.front().loss_db);
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << "L_m,cn2,loss_db\n";
        for (const auto& p : points)
            std::cout << p.distance << ',' << p.cn2 << ',' << p.loss_db << '\n';
        if (skr_base > 0)
            std::cout << "skr_bps,"
                      << qkd::extrapolate_skr(skr_base, extra_loss >= 0
                                                            ? extra_loss
                                                            : points.front().loss_db)
                      << "\n";
    }
    return kExitOk;
}

int cmd_kms_get(const std::string& host, int port, std::uint64_t length,
                const std::string& source, const std::string& dest, const std::string& op) {
    using nlohmann::json;
    if (!op.empty()) {
        std::cout << qkd::kms_request(host, port, json{{"op", op}}.dump()) << "\n";
        return kExitOk;
    }
    json open_resp = json::parse(qkd::kms_request(
        host, port,
        json{{"op", "open_connect"}, {"source", source}, {"destination", dest}, {"reserve_bits", 0}}
            .dump()));
    if (open_resp.value("status", "") != "ok") {
        std::cerr << open_resp.dump() << "\n";
        return kExitRuntime;
    }
    auto ksid = open_resp.at("ksid").get<std::uint64_t>();
    json key_resp = json::parse(qkd::kms_request(
        host, port, json{{"op", "get_key"}, {"ksid", ksid}, {"length", length}}.dump()));
    qkd::kms_request(host, port, json{{"op", "close"}, {"ksid", ksid}}.dump());
    std::cout << key_resp.dump() << "\n";
    return key_resp.value("status", "") == "ok" ? kExitOk : kExitRuntime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entanglement-QKD post-processing toolkit"};
    app.require_subcommand(1);

    CommonOpts sim_opts, alice_opts, bob_opts;
    bool alice_sim = false, bob_sim = false;

    auto* simulate = app.add_subcommand("simulate", "generate a detection-tag pair + ground truth");
    add_common(simulate, sim_opts);

    auto* alice = app.add_subcommand("alice", "run the reference endpoint (listens)");
    add_common(alice, alice_opts);
    alice->add_flag("--sim", alice_sim, "generate tags in-process instead of reading tags_file");

    auto* bob = app.add_subcommand("bob", "run the correcting endpoint (connects)");
    add_common(bob, bob_opts);
    bob->add_flag("--sim", bob_sim, "generate tags in-process instead of reading tags_file");

    qkd::LinkParams link;
    std::vector<double> distances, cn2s;
    double skr_base = 0, extra_loss = -1;
    bool lb_json = false;
    auto* linkbudget = app.add_subcommand("linkbudget", "turbulent free-space loss table");
    linkbudget->add_option("--distance", distances, "link distance(s), m")->take_all();
    linkbudget->add_option("--cn2", cn2s, "turbulence strength(s), m^(-2/3)")->take_all();
    linkbudget->add_option("--wavelength", link.wavelength, "m");
    linkbudget->add_option("--waist", link.waist, "transmitter beam waist, m");
    linkbudget->add_option("--aperture", link.rx_aperture_diam, "receiver aperture diameter, m");
    linkbudget->add_option("--skr-base", skr_base, "reference secure key rate, bps");
    linkbudget->add_option("--loss", extra_loss, "extra loss for the rate extrapolation, dB");
    linkbudget->add_flag("--json", lb_json, "JSON output instead of CSV");

    std::string kg_host = "127.0.0.1", kg_source = "alice", kg_dest = "bob", kg_op;
    int kg_port = 7141;
    std::uint64_t kg_length = 256;
    auto* kmsget = app.add_subcommand("kms-get", "fetch a key from a running KMS endpoint");
    kmsget->add_option("--host", kg_host);
    kmsget->add_option("--port", kg_port);
    kmsget->add_option("--length", kg_length, "requested key length, bits");
    kmsget->add_option("--source", kg_source);
    kmsget->add_option("--dest", kg_dest);
    kmsget->add_option("--op", kg_op, "send a single raw op (status, quit) instead");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(sim_opts);
        if (alice->parsed()) return cmd_endpoint(qkd::Party::Alice, alice_opts, alice_sim);
        if (bob->parsed()) return cmd_endpoint(qkd::Party::Bob, bob_opts, bob_sim);
        if (linkbudget->parsed())
            return cmd_linkbudget(link, distances, cn2s, skr_base, extra_loss, lb_json);
        if (kmsget->parsed())
            return cmd_kms_get(kg_host, kg_port, kg_length, kg_source, kg_dest, kg_op);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
