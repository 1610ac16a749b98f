#include "harnacklab/cli.hpp"

#include "harnacklab/cone_analysis.hpp"
#include "harnacklab/errors.hpp"
#include "harnacklab/flow.hpp"
#include "harnacklab/geometry.hpp"
#include "harnacklab/harnack.hpp"
#include "harnacklab/speed.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numbers>
#include <sstream>

#ifndef HARNACKLAB_VERSION
#define HARNACKLAB_VERSION "0.0.0"
#endif

extern char** environ;

namespace hlab {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

const std::map<std::string, ExperimentKind>& kind_names() {
    static const std::map<std::string, ExperimentKind> names = {
        {"certify-speed", ExperimentKind::CertifySpeed}, {"flow", ExperimentKind::Flow},
        {"translator", ExperimentKind::Translator},      {"harnack-report", ExperimentKind::HarnackReport},
        {"identity-check", ExperimentKind::IdentityCheck},
    };
    return names;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

template <class Int>
Int parse_integer(const std::string& key, const ConfigEntry& e) {
    Int x{};
    const auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), x);
    if (res.ec != std::errc() || res.ptr != e.value.data() + e.value.size())
        throw ParseError(e.origin + ": '" + key + "' expects an integer, got '" + e.value + "'");
    return x;
}

double parse_number(const std::string& key, const ConfigEntry& e) {
    try {
        return parse_double(e.value);
    } catch (const ParseError&) {
        throw ParseError(e.origin + ": '" + key + "' expects a number, got '" + e.value + "'");
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw RangeError(what);
}

int cone_order(const SpeedFunction& g) {
    int k = 1;
    for (const auto& part : g.cone().parts) k = std::max(k, part.k);
    return k;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Output files are collected in write order and hashed when the manifest is assembled.
class OutputDir {
public:
    explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

    void write(const std::string& rel, const std::string& content) {
        const fs::path path = root_ / rel;
        fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << content;
        if (!out) throw IoError("write failed for " + path.string());
        files_.push_back(rel);
    }
    void write_json(const std::string& rel, const nlohmann::json& j) { write(rel, j.dump(2) + "\n"); }

    const fs::path& root() const { return root_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

struct Outcome {
    int exit_code = kExitPass;
    nlohmann::json summary = nlohmann::json::object();
};

void gate(Outcome& o, bool ok, const std::string& name) {
    o.summary["gates"][name] = ok;
    if (!ok) o.exit_code = kExitGateViolation;
}

SupportProfile initial_shape(const ExperimentConfig& cfg, const SpeedFunction& g) {
    switch (cfg.shape.kind) {
        case ShapeSpec::Kind::Sphere: return SupportProfile::sphere(g.n(), cfg.M, cfg.shape.radius);
        case ShapeSpec::Kind::Ellipsoid: return SupportProfile::ellipsoid(g.n(), cfg.M, cfg.shape.a, cfg.shape.c);
        case ShapeSpec::Kind::Translator: return translator_support(g, cfg.M, cfg.theta_min * kPi, 1.0);
    }
    throw RangeError("unknown shape");
}

FlowOptions flow_options(const ExperimentConfig& cfg, const SupportProfile& p) {
    FlowOptions opt;
    opt.safety = cfg.safety;
    opt.until_time = cfg.until.time;
    opt.until_rmin = cfg.until.rmin;
    if (!p.closed()) opt.boundary = translator_boundary(p);
    if (cfg.markers > 0) {
        opt.markers = cfg.markers;
    } else {
        // every other node, so that marker sets are nested across resolutions
        for (int i = std::max(2, p.first() + 2 + (p.first() % 2)); i < p.M(); i += 2)
            opt.marker_thetas.push_back(i * kPi / p.M());
    }
    opt.snapshot_interval = cfg.snapshot_interval > 0.0 ? cfg.snapshot_interval : 0.16 / cfg.M;
    return opt;
}

FlowTrajectory checked_run(const SupportProfile& p, const SpeedFunction& g, const FlowOptions& opt) {
    FlowTrajectory traj = run(p, g, opt);
    if (traj.aborted) throw StepRejected("flow aborted: " + traj.diagnostic, 0.0);
    return traj;
}

std::string snapshot_text(const SupportProfile& p, const std::string& key) {
    std::ostringstream s;
    write_snapshot(s, p, key);
    return s.str();
}

std::string markers_csv(const FlowTrajectory& traj) {
    std::ostringstream s;
    s << "snapshot,t,marker,theta,rho,z\n";
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k)
        for (std::size_t j = 0; j < traj.markers.size(); ++j)
            s << k << ',' << format_double(traj.snapshots[k].t()) << ',' << j << ','
              << format_double(traj.markers[j].theta[k]) << ',' << format_double(traj.markers[j].rho[k]) << ','
              << format_double(traj.markers[j].z[k]) << '\n';
    return s.str();
}

nlohmann::json residuals_json(const IdentityResiduals& r) {
    return {{"scalar", r.scalar},
            {"first_variation", r.first_variation},
            {"simons", r.simons},
            {"gauss_marker", r.gauss_marker}};
}

// ---------------------------------------------------------------------------

Outcome certify(const ExperimentConfig& cfg, OutputDir& out) {
    const auto g = SpeedFunction::parse(cfg.speed);
    AnalysisOptions aopt;
    aopt.threads = cfg.threads;
    const ConeSampler sampler(cfg.n, cfg.k, cfg.rho, cfg.seed, cfg.samples);
    const Certificate cert = certify_speed(g, sampler, aopt);
    const PertValidation held_out = validate_epsilon(g, sampler.with_seed(cfg.seed + 1), cert.epsilon, aopt);

    nlohmann::json j = to_json(cert);
    j["held_out_validation"] = {{"seed", cfg.seed + 1},
                                {"samples", cfg.samples},
                                {"min_form", held_out.min_form},
                                {"rank_deficient", held_out.rank_deficient}};
    out.write_json("certificate.json", j);

    Outcome o;
    o.summary = {{"kappa", cert.kappa}, {"epsilon", cert.epsilon}, {"held_out_min_form", held_out.min_form}};
    gate(o, cert.kappa > 0.0, "kappa_positive");
    gate(o, cert.epsilon > 0.0, "epsilon_positive");
    gate(o, held_out.min_form >= -1e-9, "held_out_validation");
    return o;
}

Outcome flow(const ExperimentConfig& cfg, OutputDir& out) {
    const auto g = SpeedFunction::parse(cfg.speed);
    const SupportProfile p0 = initial_shape(cfg, g);
    const FlowTrajectory traj = run(p0, g, flow_options(cfg, p0));

    nlohmann::json index = nlohmann::json::array();
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        char name[48];
        std::snprintf(name, sizeof name, "snapshots/snapshot_%05zu.txt", k);
        out.write(name, snapshot_text(traj.snapshots[k], traj.speed_key));
        index.push_back({{"file", name}, {"t", traj.snapshots[k].t()}});
    }
    out.write("timeseries.csv", traj.csv());
    if (!traj.markers.empty()) out.write("markers.csv", markers_csv(traj));
    out.write_json("snapshots.json", index);

    Outcome o;
    o.summary = {{"snapshots", traj.snapshots.size()},
                 {"steps", traj.steps.size()},
                 {"halvings", traj.halvings},
                 {"t_final", traj.snapshots.back().t()},
                 {"aborted", traj.aborted}};
    if (traj.aborted) {
        o.summary["diagnostic"] = traj.diagnostic;
        o.exit_code = kExitNumericalAbort;
    }
    return o;
}

TranslatorEquality translator_gates(Outcome& o, const TranslatorSolution& sol, const SpeedFunction& g) {
    const TranslatorEquality e = translator_equality(sol, g);
    gate(o, e.soliton <= 1e-6, "soliton_residual");
    gate(o, e.equality <= 5e-3, "equality_residual");
    gate(o, e.xi <= 1e-4, "xi_constancy");
    return e;
}

Outcome translator(const ExperimentConfig& cfg, OutputDir& out) {
    const auto g = SpeedFunction::parse(cfg.speed);
    const TranslatorSolution sol = solve_translator(g, g.n(), cfg.rmax);
    std::ostringstream snap;
    write_snapshot(snap, sol.profile, g.key());
    out.write("translator.txt", snap.str());

    Outcome o;
    const TranslatorEquality e = translator_gates(o, sol, g);
    nlohmann::json j = {{"speed", g.key()},
                        {"n", g.n()},
                        {"r_max", sol.max_radius},
                        {"vertex_curvature", sol.vertex_curvature},
                        {"xi", sol.xi},
                        {"nodes", sol.profile.r.size()},
                        {"residuals", to_json(e)}};
    out.write_json("translator.json", j);
    o.summary = j;
    return o;
}

// A translator graph (from `translator`) is reloaded, checked for equality, and its bowl is evolved for the
// ancient-limit sweep.
Outcome translator_report(const ExperimentConfig& cfg, OutputDir& out) {
    std::ifstream in(cfg.input);
    if (!in) throw IoError("cannot read " + cfg.input);
    const Snapshot snap = read_snapshot(in);
    if (!snap.graph) throw ParseError(cfg.input + " is not a graph snapshot");
    const auto g = SpeedFunction::parse(snap.speed_key);
    if (!cfg.speed.empty() && SpeedFunction::parse(cfg.speed).key() != g.key())
        throw RangeError("speed " + cfg.speed + " does not match the snapshot's " + g.key());

    TranslatorSolution sol;
    sol.profile = *snap.graph;
    sol.max_radius = sol.profile.r.back();
    sol.vertex_curvature = sol.profile.fpp.empty() ? 0.0 : sol.profile.fpp.front();

    Outcome o;
    const TranslatorEquality e = translator_gates(o, sol, g);

    const SupportProfile bowl = translator_support(g, cfg.M, cfg.theta_min * kPi, 1.0);
    ExperimentConfig run_cfg = cfg;
    if (!run_cfg.until.time && !run_cfg.until.rmin) run_cfg.until.time = 0.05;
    const FlowTrajectory traj = checked_run(bowl, g, flow_options(run_cfg, bowl));
    const TrajectoryFields F(traj, g, cfg.threads);
    const AncientSweep sweep = ancient_sweep(F, {1.0, 10.0, 100.0}, 1e-6);
    gate(o, sweep.monotone, "ancient_monotone");
    gate(o, sweep.approaching, "ancient_approaching");

    nlohmann::json j = {{"speed", g.key()},
                        {"input", fs::path(cfg.input).filename().string()},
                        {"equality", to_json(e)},
                        {"ancient_sweep",
                         {{"T0", sweep.T0},
                          {"min_P", sweep.min_P},
                          {"min_P_free", sweep.min_P_free},
                          {"monotone", sweep.monotone},
                          {"approaching", sweep.approaching}}}};
    out.write_json("harnack_report.json", j);
    o.summary["equality"] = to_json(e);
    o.summary["ancient_min_P"] = sweep.min_P;
    return o;
}

// Rebuilds snapshots and marker tracks from a `flow` output directory.
FlowTrajectory load_trajectory(const fs::path& dir) {
    std::ifstream index_in(dir / "snapshots.json");
    if (!index_in) throw IoError("cannot read " + (dir / "snapshots.json").string());
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(index_in);
    } catch (const std::exception& e) {
        throw ParseError((dir / "snapshots.json").string() + ": " + e.what());
    }
    FlowTrajectory traj;
    for (const auto& entry : index) {
        const fs::path path = dir / entry.at("file").get<std::string>();
        std::ifstream in(path);
        if (!in) throw IoError("cannot read " + path.string());
        Snapshot snap = read_snapshot(in);
        if (!snap.support) throw ParseError(path.string() + " is not a support snapshot");
        if (traj.speed_key.empty()) traj.speed_key = snap.speed_key;
        if (snap.speed_key != traj.speed_key) throw ParseError(path.string() + ": speed differs from earlier snapshots");
        traj.snapshots.push_back(std::move(*snap.support));
    }
    if (traj.snapshots.empty()) throw ParseError(dir.string() + " holds no snapshots");

    std::ifstream csv(dir / "markers.csv");
    if (!csv) return traj;
    std::string line;
    std::getline(csv, line);
    const std::size_t K = traj.snapshots.size();
    while (std::getline(csv, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cols;
        std::stringstream row(line);
        for (std::string c; std::getline(row, c, ',');) cols.push_back(c);
        if (cols.size() != 6) throw ParseError("markers.csv: malformed row '" + line + "'");
        const auto k = static_cast<std::size_t>(std::stoul(cols[0]));
        const auto j = static_cast<std::size_t>(std::stoul(cols[2]));
        if (k >= K) throw ParseError("markers.csv: snapshot index out of range");
        if (j >= traj.markers.size()) traj.markers.resize(j + 1, MarkerTrack{std::vector<double>(K), std::vector<double>(K), std::vector<double>(K)});
        traj.markers[j].theta[k] = parse_double(cols[3]);
        traj.markers[j].rho[k] = parse_double(cols[4]);
        traj.markers[j].z[k] = parse_double(cols[5]);
    }
    return traj;
}

std::string harnack_csv(const std::vector<HarnackSample>& samples) {
    std::ostringstream s;
    s << "t,theta,marker,P\n";
    for (const auto& x : samples)
        s << format_double(x.t) << ',' << format_double(x.theta) << ',' << x.marker << ',' << format_double(x.P) << '\n';
    return s.str();
}

Outcome harnack(const ExperimentConfig& cfg, OutputDir& out) {
    if (!cfg.input.empty()) return translator_report(cfg, out);
    FlowTrajectory traj;
    std::string label;
    if (!cfg.traj.empty()) {
        traj = load_trajectory(cfg.traj);
        label = cfg.traj.filename().string();
    } else {
        const auto g = SpeedFunction::parse(cfg.speed);
        const SupportProfile p0 = initial_shape(cfg, g);
        ExperimentConfig run_cfg = cfg;
        if (!run_cfg.until.time && !run_cfg.until.rmin) run_cfg.until.time = 0.05;
        traj = checked_run(p0, g, flow_options(run_cfg, p0));
        label = to_string(cfg.shape);
    }
    const auto g = SpeedFunction::parse(traj.speed_key);
    const TrajectoryFields F(traj, g, cfg.threads);

    ReportOptions ropt;
    ropt.T0 = cfg.T0;
    ropt.tolerance = ToleranceModel{cfg.tol_c1, cfg.tol_c2};
    ropt.identity_tolerance = cfg.identity_tol;
    ropt.seed = cfg.seed;
    const HarnackReport r = harnack_report(F, label, ropt);
    out.write_json("harnack_report.json", to_json(r));
    if (F.size() >= 3 && !traj.markers.empty()) out.write("harnack_P.csv", harnack_csv(scalar_harnack(F, r.T0)));

    Outcome o;
    o.summary = {{"min_P", r.min_P}, {"min_Q", r.min_Q}, {"tolerance", r.tolerance}, {"failures", r.failures}};
    gate(o, r.pass, "harnack_report");
    return o;
}

Outcome identity_check(const ExperimentConfig& cfg, OutputDir& out) {
    const auto g = SpeedFunction::parse(cfg.speed);
    ExperimentConfig run_cfg = cfg;
    if (!run_cfg.until.time && !run_cfg.until.rmin) run_cfg.until.time = 0.02;
    nlohmann::json levels = nlohmann::json::array();
    std::vector<IdentityResiduals> res;
    for (int M : {cfg.M / 2, cfg.M}) {
        run_cfg.M = M;
        run_cfg.snapshot_interval = cfg.snapshot_interval > 0.0 ? cfg.snapshot_interval * cfg.M / M : 0.16 / M;
        const SupportProfile p0 = initial_shape(run_cfg, g);
        const FlowTrajectory traj = checked_run(p0, g, flow_options(run_cfg, p0));
        res.push_back(identity_residuals(TrajectoryFields(traj, g, cfg.threads)));
        levels.push_back({{"M", M}, {"snapshot_interval", run_cfg.snapshot_interval}, {"residuals", residuals_json(res.back())}});
    }
    const auto ratio = [&](double IdentityResiduals::*f) { return res[0].*f / (res[1].*f); };
    nlohmann::json j = {{"speed", g.key()},
                        {"shape", to_string(cfg.shape)},
                        {"levels", levels},
                        {"ratios",
                         {{"scalar", ratio(&IdentityResiduals::scalar)},
                          {"first_variation", ratio(&IdentityResiduals::first_variation)},
                          {"simons", ratio(&IdentityResiduals::simons)},
                          {"gauss_marker", ratio(&IdentityResiduals::gauss_marker)}}}};
    out.write_json("identities.json", j);

    Outcome o;
    o.summary = j["ratios"];
    const IdentityResiduals& fine = res[1];
    const double bound = cfg.identity_tol > 0.0
                             ? cfg.identity_tol
                             : 4.0 * ToleranceModel{cfg.tol_c1, cfg.tol_c2}(cfg.M, levels.back()["snapshot_interval"].get<double>());
    o.summary["bound"] = bound;
    gate(o,
         std::max({fine.scalar, fine.first_variation, fine.simons, fine.gauss_marker}) <= bound,
         "identity_tolerance");
    return o;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ParseError:
        case ErrorKind::RangeError:
        case ErrorKind::IoError: return kExitConfigError;
        case ErrorKind::NonPositiveKappa:
        case ErrorKind::NoEpsilonFound:
        case ErrorKind::NoStrictLevel: return kExitGateViolation;
        default: return kExitNumericalAbort;
    }
}

const char* status_for(int code) {
    switch (code) {
        case kExitPass: return "pass";
        case kExitGateViolation: return "gate_violation";
        case kExitNumericalAbort: return "numerical_abort";
        default: return "config_error";
    }
}

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(ExperimentKind kind) {
    for (const auto& [name, k] : kind_names())
        if (k == kind) return name.c_str();
    return "unknown";
}

ShapeSpec parse_shape(const std::string& text) {
    ShapeSpec s;
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (head == "sphere") {
        s.kind = ShapeSpec::Kind::Sphere;
        if (!args.empty()) s.radius = parse_double(args);
        require(s.radius > 0.0, "sphere radius must be positive");
    } else if (head == "ellipsoid") {
        s.kind = ShapeSpec::Kind::Ellipsoid;
        if (!args.empty()) {
            const auto comma = args.find(',');
            if (comma == std::string::npos) throw ParseError("ellipsoid shape needs 'a,c'");
            s.a = parse_double(args.substr(0, comma));
            s.c = parse_double(args.substr(comma + 1));
        }
        require(s.a > 0.0 && s.c > 0.0, "ellipsoid semi-axes must be positive");
    } else if (head == "translator") {
        s.kind = ShapeSpec::Kind::Translator;
        if (!args.empty()) throw ParseError("translator shape takes no arguments");
    } else {
        throw ParseError("unknown shape '" + text + "' (sphere:r, ellipsoid:a,c or translator)");
    }
    return s;
}

std::string to_string(const ShapeSpec& s) {
    switch (s.kind) {
        case ShapeSpec::Kind::Sphere: return "sphere:" + format_double(s.radius);
        case ShapeSpec::Kind::Ellipsoid: return "ellipsoid:" + format_double(s.a) + "," + format_double(s.c);
        case ShapeSpec::Kind::Translator: return "translator";
    }
    return "";
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "kind", "speed", "n", "k", "M", "safety", "rho", "samples", "seed", "shape", "until", "markers",
        "snapshot_interval", "rmax", "theta_min", "input", "traj", "T0", "tol_c1", "tol_c2", "identity_tol",
        "threads", "out",
    };
    return keys;
}

ConfigMap parse_config_entries(const std::string& text) {
    const auto& keys = config_keys();
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string where = "line " + std::to_string(number);
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected key=value, got '" + body + "'");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ParseError(where + ": unknown key '" + key + "'");
        if (map.count(key)) throw ParseError(where + ": duplicate key '" + key + "' (first set on " + map[key].origin + ")");
        map[key] = {value, where};
    }
    return map;
}

void apply_env_overrides(ConfigMap& map, const std::map<std::string, std::string>& env) {
    for (const auto& key : config_keys()) {
        const std::string name = "HARNACKLAB_" + upper(key);
        const auto it = env.find(name);
        if (it != env.end()) map[key] = {it->second, "environment " + name};
    }
}

std::map<std::string, std::string> process_environment() {
    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry(*e);
        const auto eq = entry.find('=');
        if (eq != std::string::npos && entry.rfind("HARNACKLAB_", 0) == 0) env[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    return env;
}

ExperimentConfig validate_config(const ConfigMap& map) {
    ExperimentConfig cfg;
    auto has = [&](const std::string& key) { return map.count(key) > 0; };
    auto entry = [&](const std::string& key) -> const ConfigEntry& { return map.at(key); };
    auto number = [&](const std::string& key, double& slot) {
        if (has(key)) slot = parse_number(key, entry(key));
    };
    auto integer = [&](const std::string& key, int& slot) {
        if (has(key)) slot = parse_integer<int>(key, entry(key));
    };

    // grid and step bounds first, so they are reported even for otherwise incomplete configs
    integer("M", cfg.M);
    number("safety", cfg.safety);
    require(cfg.M >= 32 && cfg.M <= 4096, "M = " + std::to_string(cfg.M) + " outside [32, 4096]");
    require(cfg.safety > 0.0 && cfg.safety <= 1.0, "safety must lie in (0, 1]");

    if (!has("kind")) throw ParseError("missing required key 'kind'");
    const auto kind = kind_names().find(entry("kind").value);
    if (kind == kind_names().end())
        throw ParseError(entry("kind").origin + ": unknown experiment kind '" + entry("kind").value + "'");
    cfg.kind = kind->second;

    std::optional<SpeedFunction> speed;
    if (has("speed")) {
        try {
            speed = SpeedFunction::parse(entry("speed").value);
        } catch (const Error& e) {
            const std::string what = e.what();
            throw ParseError(entry("speed").origin + ": " + what.substr(what.find(": ") + 2));
        }
        cfg.speed = speed->key();
    } else if (!(cfg.kind == ExperimentKind::HarnackReport && (has("input") || has("traj")))) {
        throw ParseError("missing required key 'speed'");
    }

    integer("n", cfg.n);
    integer("k", cfg.k);
    number("rho", cfg.rho);
    integer("samples", cfg.samples);
    if (has("seed")) cfg.seed = parse_integer<std::uint64_t>("seed", entry("seed"));
    if (has("shape")) cfg.shape = parse_shape(entry("shape").value);
    integer("markers", cfg.markers);
    number("snapshot_interval", cfg.snapshot_interval);
    number("rmax", cfg.rmax);
    number("theta_min", cfg.theta_min);
    if (has("input")) cfg.input = entry("input").value;
    if (has("traj")) cfg.traj = entry("traj").value;
    number("T0", cfg.T0);
    number("tol_c1", cfg.tol_c1);
    number("tol_c2", cfg.tol_c2);
    number("identity_tol", cfg.identity_tol);
    integer("threads", cfg.threads);
    if (has("out")) cfg.out = entry("out").value;
    if (has("until")) {
        const std::string& u = entry("until").value;
        if (u.rfind("t=", 0) == 0)
            cfg.until.time = parse_double(u.substr(2));
        else if (u.rfind("rmin=", 0) == 0)
            cfg.until.rmin = parse_double(u.substr(5));
        else
            throw ParseError(entry("until").origin + ": 'until' expects t=T or rmin=r");
    }

    if (speed) {
        if (cfg.n == 0) cfg.n = speed->n();
        if (cfg.k == 0) cfg.k = cone_order(*speed);
        require(cfg.n == speed->n(), "n = " + std::to_string(cfg.n) + " does not match speed dimension " +
                                         std::to_string(speed->n()));
    }
    if (cfg.kind == ExperimentKind::CertifySpeed) {
        require(cfg.k >= 1 && cfg.k <= cfg.n, "k must lie in [1, n]");
        require(cfg.rho > 0.0 && cfg.rho <= 1.0 / cfg.k, "rho must lie in (0, 1/k]");
        require(cfg.rho < static_cast<double>(cfg.k) / cfg.n, "rho must be below k/n");
        require(cfg.samples >= 1, "samples must be positive");
    }
    require(cfg.markers >= 0, "markers must be non-negative");
    require(cfg.snapshot_interval >= 0.0, "snapshot_interval must be non-negative");
    require(cfg.rmax > 0.0, "rmax must be positive");
    require(cfg.theta_min > 0.5 && cfg.theta_min < 1.0, "theta_min must lie in (0.5, 1)");
    require(cfg.T0 >= 0.0, "T0 must be non-negative");
    require(cfg.tol_c1 >= 0.0 && cfg.tol_c2 >= 0.0, "tolerance constants must be non-negative");
    require(cfg.identity_tol >= 0.0, "identity_tol must be non-negative");
    require(cfg.threads >= 1, "threads must be at least 1");
    if (cfg.until.time) require(*cfg.until.time >= 0.0, "until time must be non-negative");
    if (cfg.until.rmin) require(*cfg.until.rmin > 0.0, "until rmin must be positive");
    if (cfg.kind == ExperimentKind::Flow)
        require(cfg.until.time || cfg.until.rmin, "flow needs 'until' (t=T or rmin=r)");
    if (cfg.shape.kind == ShapeSpec::Kind::Translator)
        require(cfg.kind == ExperimentKind::HarnackReport || cfg.kind == ExperimentKind::Flow,
                "the translator shape applies to flow and harnack-report");
    return cfg;
}

ExperimentConfig parse_config(const std::string& text) { return validate_config(parse_config_entries(text)); }

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j = {{"kind", to_string(kind)},
                        {"speed", speed},
                        {"n", n},
                        {"k", k},
                        {"M", M},
                        {"safety", safety},
                        {"rho", rho},
                        {"samples", samples},
                        {"seed", seed},
                        {"shape", to_string(shape)},
                        {"markers", markers},
                        {"snapshot_interval", snapshot_interval},
                        {"rmax", rmax},
                        {"theta_min", theta_min},
                        {"input", input},
                        {"traj", traj.string()},
                        {"T0", T0},
                        {"tol_c1", tol_c1},
                        {"tol_c2", tol_c2},
                        {"identity_tol", identity_tol},
                        {"threads", threads},
                        {"out", out.string()}};
    if (until.time) j["until"] = "t=" + format_double(*until.time);
    if (until.rmin) j["until"] = "rmin=" + format_double(*until.rmin);
    return j;
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json files_json = nlohmann::json::array();
    for (const auto& f : files) files_json.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    nlohmann::json j = {{"tool", "harnacklab"},
                        {"version", tool_version},
                        {"config", config},
                        {"started", started},
                        {"finished", finished},
                        {"exit_code", exit_code},
                        {"status", status},
                        {"files", files_json},
                        {"summary", summary}};
    if (!error_kind.empty()) j["error"] = {{"kind", error_kind}, {"message", error_message}};
    return j;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("SHA-256 unavailable");
    }
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[digest[i] >> 4];
        s += hex[digest[i] & 15];
    }
    return s;
}

const char* tool_version() { return HARNACKLAB_VERSION; }

RunManifest run_experiment(const ExperimentConfig& cfg) {
    RunManifest m;
    m.config = cfg.to_json();
    m.tool_version = tool_version();
    m.started = utc_now();
    OutputDir out(cfg.out);

    Outcome o;
    try {
        switch (cfg.kind) {
            case ExperimentKind::CertifySpeed: o = certify(cfg, out); break;
            case ExperimentKind::Flow: o = flow(cfg, out); break;
            case ExperimentKind::Translator: o = translator(cfg, out); break;
            case ExperimentKind::HarnackReport: o = harnack(cfg, out); break;
            case ExperimentKind::IdentityCheck: o = identity_check(cfg, out); break;
        }
    } catch (const Error& e) {
        o.exit_code = exit_code_for(e.kind());
        m.error_kind = to_string(e.kind());
        m.error_message = e.what();
    } catch (const std::exception& e) {
        o.exit_code = kExitNumericalAbort;
        m.error_kind = "exception";
        m.error_message = e.what();
    }
    m.exit_code = o.exit_code;
    m.status = status_for(o.exit_code);
    m.summary = o.summary;
    for (const auto& rel : out.files())
        m.files.push_back({rel, sha256_file(out.root() / rel), fs::file_size(out.root() / rel)});
    m.finished = utc_now();

    const fs::path tmp = out.root() / "manifest.json.tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << m.to_json().dump(2) << "\n";
        if (!f) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, out.root() / "manifest.json");
    return m;
}

bool verify_manifest(const fs::path& dir, std::string* problem) {
    auto fail = [&](const std::string& why) {
        if (problem) *problem = why;
        return false;
    };
    std::ifstream in(dir / "manifest.json");
    if (!in) return fail("manifest.json missing");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        return fail(std::string("manifest.json unreadable: ") + e.what());
    }
    for (const auto& f : j.at("files")) {
        const fs::path path = dir / f.at("path").get<std::string>();
        if (!fs::exists(path)) return fail(path.string() + " missing");
        if (sha256_file(path) != f.at("sha256").get<std::string>()) return fail(path.string() + " hash mismatch");
    }
    return true;
}

}  // namespace hlab
