#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hlab {

enum class ExperimentKind { CertifySpeed, Flow, Translator, HarnackReport, IdentityCheck };

const char* to_string(ExperimentKind kind);

// Process exit codes.
inline constexpr int kExitPass = 0;
inline constexpr int kExitGateViolation = 2;
inline constexpr int kExitNumericalAbort = 3;
inline constexpr int kExitConfigError = 4;

struct ShapeSpec {
    enum class Kind { Sphere, Ellipsoid, Translator } kind = Kind::Sphere;
    double radius = 1.0;  // sphere
    double a = 1.5;       // ellipsoid equatorial semi-axis
    double c = 1.0;       // ellipsoid polar semi-axis
};

ShapeSpec parse_shape(const std::string& text);
std::string to_string(const ShapeSpec& s);

struct UntilSpec {
    std::optional<double> time;
    std::optional<double> rmin;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Flow;
    std::string speed;      // canonical key
    int n = 0;              // dimension, defaults to the speed's
    int k = 0;              // cone order, defaults to the speed's
    int M = 128;
    double safety = 0.2;
    double rho = 0.2;
    int samples = 10000;
    std::uint64_t seed = 1;
    ShapeSpec shape;
    UntilSpec until;
    int markers = 0;                 // 0: every other node
    double snapshot_interval = 0.0;  // 0: 0.16/M
    double rmax = 3.0;
    double theta_min = 0.6;          // open bowl profiles start at θ_min·π
    std::string input;               // harnack-report: graph snapshot written by `translator`
    std::filesystem::path traj;      // harnack-report: output directory of a `flow` run
    double T0 = 0.0;
    double tol_c1 = 40.0;
    double tol_c2 = 10.0;
    double identity_tol = 0.0;       // 0: four times the Harnack tolerance tol(M, dt)
    int threads = 1;
    std::filesystem::path out = "out";

    nlohmann::json to_json() const;
};

/// key=value entries with their source (line number or override origin).
struct ConfigEntry {
    std::string value;
    std::string origin;
};
using ConfigMap = std::map<std::string, ConfigEntry>;

/// Known configuration keys.
const std::vector<std::string>& config_keys();

/// Reads key=value lines ('#' comments, blank lines ignored). Unknown and duplicate keys raise ParseError.
ConfigMap parse_config_entries(const std::string& text);

/// Overlays HARNACKLAB_<KEY> variables (KEY is the upper-cased config key).
void apply_env_overrides(ConfigMap& map, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> process_environment();

/// Validates and converts. ParseError for malformed values, RangeError for out-of-range ones.
ExperimentConfig validate_config(const ConfigMap& map);

ExperimentConfig parse_config(const std::string& text);

struct ManifestFile {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    nlohmann::json config;
    std::string tool_version;
    std::string started;   // UTC, ISO 8601
    std::string finished;
    int exit_code = 0;
    std::string status;
    std::string error_kind;
    std::string error_message;
    std::vector<ManifestFile> files;
    nlohmann::json summary;

    nlohmann::json to_json() const;
};

std::string sha256_file(const std::filesystem::path& path);
const char* tool_version();

/// Runs one experiment, writing outputs and finally manifest.json (temp file + rename) into cfg.out.
RunManifest run_experiment(const ExperimentConfig& cfg);

/// True when every file listed in dir/manifest.json exists with the recorded hash.
bool verify_manifest(const std::filesystem::path& dir, std::string* problem = nullptr);

}  // namespace hlab
