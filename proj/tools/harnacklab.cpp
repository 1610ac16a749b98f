// harnacklab command-line driver. Settings are layered: config file < HARNACKLAB_* environment < flags.

#include "harnacklab/cli.hpp"
#include "harnacklab/errors.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

struct FlagSet {
    std::map<std::string, std::string> values;  // config key -> flag value

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hlab::IoError("cannot read config file " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Curvature-flow Harnack laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", hlab::tool_version());

    std::string config_file;
    FlagSet flags;
    app.add_option("--config", config_file, "key=value configuration file");
    flags.add(&app, "--out", "out", "output directory");
    flags.add(&app, "--seed", "seed", "random seed");
    flags.add(&app, "--threads", "threads", "worker threads");

    auto* certify = app.add_subcommand("certify-speed", "sample the cone and certify a speed function");
    auto* flow = app.add_subcommand("flow", "evolve a convex hypersurface of revolution");
    auto* translator = app.add_subcommand("translator", "solve for the translating soliton");
    auto* report = app.add_subcommand("harnack-report", "evaluate the Harnack quantity on a trajectory");
    auto* identity = app.add_subcommand("identity-check", "evolution identity residuals at M/2 and M");

    for (auto* sub : {certify, flow, translator, report, identity}) flags.add(sub, "--speed", "speed", "speed key");
    flags.add(certify, "--n", "n", "dimension");
    flags.add(certify, "--k", "k", "cone order");
    flags.add(certify, "--rho", "rho", "cone margin");
    flags.add(certify, "--samples", "samples", "sample count");

    for (auto* sub : {flow, report, identity}) {
        flags.add(sub, "--shape", "shape", "sphere:r | ellipsoid:a,c | translator");
        flags.add(sub, "--grid", "M", "grid cells on [0, pi]");
        flags.add(sub, "--safety", "safety", "time-step safety factor");
        flags.add(sub, "--until", "until", "t=T | rmin=r");
        flags.add(sub, "--markers", "markers", "marker count (0: every other node)");
        flags.add(sub, "--snapshot-interval", "snapshot_interval", "time between snapshots");
    }
    flags.add(translator, "--rmax", "rmax", "radial extent of the profile");

    flags.add(report, "--traj", "traj", "output directory of a flow run");
    flags.add(report, "--input", "input", "translator snapshot file");
    flags.add(report, "--t0", "T0", "time origin offset");
    flags.add(report, "--theta-min", "theta_min", "open-profile start as a fraction of pi");
    flags.add(report, "--tol-c1", "tol_c1", "spatial tolerance constant");
    flags.add(report, "--tol-c2", "tol_c2", "temporal tolerance constant");
    for (auto* sub : {report, identity}) flags.add(sub, "--identity-tol", "identity_tol", "identity residual bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : hlab::kExitConfigError;
    }

    hlab::ExperimentConfig cfg;
    try {
        hlab::ConfigMap map = config_file.empty() ? hlab::ConfigMap{} : hlab::parse_config_entries(read_file(config_file));
        hlab::apply_env_overrides(map, hlab::process_environment());
        map["kind"] = {app.get_subcommands().front()->get_name(), "subcommand"};
        for (const auto& [key, value] : flags.values) map[key] = {value, "command line"};
        cfg = hlab::validate_config(map);
    } catch (const hlab::Error& e) {
        std::cerr << "harnacklab: " << e.what() << "\n";
        return hlab::kExitConfigError;
    }

    try {
        const hlab::RunManifest m = hlab::run_experiment(cfg);
        std::cout << nlohmann::json{{"status", m.status}, {"exit_code", m.exit_code}, {"summary", m.summary}}.dump(2)
                  << "\n";
        if (!m.error_kind.empty()) std::cerr << "harnacklab: " << m.error_message << "\n";
        return m.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "harnacklab: " << e.what() << "\n";
        return hlab::kExitNumericalAbort;
    }
}
