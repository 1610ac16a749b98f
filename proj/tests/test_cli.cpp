#include "doctest.h"

#include "harnacklab/cli.hpp"
#include "harnacklab/errors.hpp"

#include <cmath>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace hlab;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory, removed on destruction.
struct Scratch {
    fs::path root;
    explicit Scratch(const std::string& name)
        : root(fs::temp_directory_path() / ("harnacklab_" + name + "_" + std::to_string(::getpid()))) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Scratch() { fs::remove_all(root); }
    fs::path operator/(const std::string& rel) const { return root / rel; }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

ExperimentConfig config(const std::string& text, const fs::path& out) {
    ExperimentConfig cfg = parse_config(text);
    cfg.out = out;
    return cfg;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(HARNACKLAB_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing happy path") {
    const auto cfg = parse_config("kind=flow\nspeed=kharmonic:n=3,k=2\nshape=sphere:2.0\nM=256\nuntil=t=0.1\n");
    CHECK(cfg.kind == ExperimentKind::Flow);
    CHECK(cfg.speed == "kharmonic:n=3,k=2");
    CHECK(cfg.M == 256);
    CHECK(cfg.n == 3);
    CHECK(cfg.k == 2);
    CHECK(cfg.shape.kind == ShapeSpec::Kind::Sphere);
    CHECK(cfg.shape.radius == 2.0);
    REQUIRE(cfg.until.time);
    CHECK(*cfg.until.time == 0.1);
}

TEST_CASE("comments and blank lines are ignored") {
    const auto cfg = parse_config("# header\n\nkind = certify-speed  # trailing\nspeed = trace:n=3\n");
    CHECK(cfg.kind == ExperimentKind::CertifySpeed);
    CHECK(cfg.speed == "trace:n=3");
}

TEST_CASE("grid below 32 is a range error") {
    CHECK_THROWS_AS(parse_config("M=10"), RangeError);
    CHECK_THROWS_AS(parse_config("kind=flow\nspeed=trace:n=2\nM=5000\nuntil=t=1"), RangeError);
}

TEST_CASE("duplicate and unknown keys name the key") {
    try {
        parse_config("kind=flow\nM=64\nM=128\n");
        FAIL("duplicate key accepted");
    } catch (const ParseError& e) {
        const std::string what = e.what();
        CHECK(what.find("'M'") != std::string::npos);
        CHECK(what.find("line 3") != std::string::npos);
    }
    try {
        parse_config("kind=flow\ngrid=64\n");
        FAIL("unknown key accepted");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("'grid'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("kind=flow\nspeed\n"), ParseError);
}

TEST_CASE("value validation") {
    const std::string base = "kind=certify-speed\nspeed=kharmonic:n=3,k=2\n";
    CHECK_THROWS_AS(parse_config(base + "rho=0.6"), RangeError);  // above 1/k
    CHECK_THROWS_AS(parse_config(base + "rho=0"), RangeError);
    CHECK_THROWS_AS(parse_config(base + "safety=1.5"), RangeError);
    CHECK_THROWS_AS(parse_config(base + "n=4"), RangeError);  // disagrees with the speed
    CHECK_THROWS_AS(parse_config(base + "M=abc"), ParseError);
    CHECK_THROWS_AS(parse_config(base + "seed=-1"), ParseError);
    CHECK_THROWS_AS(parse_config(base + "shape=cube"), ParseError);
    CHECK_THROWS_AS(parse_config("kind=flow\nspeed=trace:n=2\n"), RangeError);  // no stopping rule
    CHECK_THROWS_AS(parse_config("kind=bake\nspeed=trace:n=2\n"), ParseError);
    CHECK_THROWS_AS(parse_config("kind=flow\nspeed=nonsense\nuntil=t=1\n"), ParseError);
    CHECK_NOTHROW(parse_config(base + "rho=0.5"));
}

TEST_CASE("environment overrides file values") {
    auto map = parse_config_entries("kind=flow\nspeed=trace:n=2\nM=64\nuntil=t=0.1\n");
    apply_env_overrides(map, {{"HARNACKLAB_M", "96"}, {"HARNACKLAB_SAFETY", "0.1"}, {"OTHER_M", "1"}});
    const auto cfg = validate_config(map);
    CHECK(cfg.M == 96);
    CHECK(cfg.safety == 0.1);
    CHECK(map.at("M").origin == "environment HARNACKLAB_M");

    apply_env_overrides(map, {{"HARNACKLAB_M", "8"}});
    CHECK_THROWS_AS(validate_config(map), RangeError);
}

TEST_CASE("certify-speed writes a certificate with positive kappa and epsilon") {
    Scratch dir("certify");
    auto cfg = config("kind=certify-speed\nspeed=kharmonic:n=3,k=2\nrho=0.2\nsamples=10000\nseed=7\n", dir / "out");
    const RunManifest m = run_experiment(cfg);
    CHECK(m.exit_code == kExitPass);
    CHECK(m.status == "pass");
    const auto cert = read_json(dir / "out/certificate.json");
    CHECK(cert.at("kappa").get<double>() > 0.0);
    CHECK(cert.at("epsilon").get<double>() > 0.0);
    CHECK(std::isfinite(cert.at("C").get<double>()));
    CHECK(cert.at("N").get<int>() == 10000);
    CHECK(cert.at("seed").get<int>() == 7);
    CHECK(cert.at("held_out_validation").at("min_form").get<double>() >= -1e-9);
    CHECK(verify_manifest(dir / "out"));
}

TEST_CASE("flow reruns are byte-identical and the manifest verifies") {
    Scratch dir("determinism");
    const std::string text = "kind=flow\nspeed=kharmonic:n=3,k=2\nshape=ellipsoid:1.5,1\nM=64\nuntil=t=0.02\nseed=3\n";
    const RunManifest a = run_experiment(config(text, dir / "a"));
    const RunManifest b = run_experiment(config(text, dir / "b"));
    REQUIRE(a.exit_code == kExitPass);
    REQUIRE(a.files.size() == b.files.size());
    CHECK(a.files.size() > 4);
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        CHECK(a.files[i].path == b.files[i].path);
        CHECK(a.files[i].sha256 == b.files[i].sha256);
    }
    CHECK(fs::exists(dir / "a/timeseries.csv"));
    CHECK(fs::exists(dir / "a/markers.csv"));
    CHECK_FALSE(fs::exists(dir / "a/manifest.json.tmp"));

    const auto manifest = read_json(dir / "a/manifest.json");
    CHECK(manifest.at("exit_code") == 0);
    CHECK(manifest.at("config").at("M") == 64);
    CHECK(manifest.at("files").size() == a.files.size());

    std::string problem;
    CHECK(verify_manifest(dir / "a", &problem));
    { std::ofstream(dir / "a/timeseries.csv", std::ios::app) << "tampered\n"; }
    CHECK_FALSE(verify_manifest(dir / "a", &problem));
    CHECK(problem.find("timeseries.csv") != std::string::npos);
    CHECK_FALSE(verify_manifest(dir / "missing"));
}

TEST_CASE("sha256 matches a known digest") {
    Scratch dir("sha");
    { std::ofstream(dir / "abc.txt", std::ios::binary) << "abc"; }
    CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("translator output chains into harnack-report") {
    Scratch dir("chain");
    const RunManifest t = run_experiment(config("kind=translator\nspeed=kharmonic:n=3,k=2\nrmax=3\n", dir / "tr"));
    REQUIRE(t.exit_code == kExitPass);
    const auto tj = read_json(dir / "tr/translator.json");
    CHECK(tj.at("residuals").at("equality_residual").get<double>() <= 5e-3);

    auto cfg = config("kind=harnack-report\ninput=" + (dir / "tr/translator.txt").string() + "\n", dir / "rep");
    const RunManifest r = run_experiment(cfg);
    CHECK(r.exit_code == kExitPass);
    const auto rep = read_json(dir / "rep/harnack_report.json");
    CHECK(rep.at("equality").at("equality_residual").get<double>() <= 5e-3);
    CHECK(rep.at("equality").at("soliton_residual").get<double>() <= 1e-6);
    CHECK(rep.at("ancient_sweep").at("monotone").get<bool>());
}

TEST_CASE("flow output chains into harnack-report") {
    Scratch dir("traj");
    const auto f = run_experiment(
        config("kind=flow\nspeed=kharmonic:n=3,k=2\nshape=ellipsoid:1.5,1\nM=64\nuntil=t=0.05\n", dir / "flow"));
    REQUIRE(f.exit_code == kExitPass);
    const auto r = run_experiment(config("kind=harnack-report\ntraj=" + (dir / "flow").string() + "\n", dir / "rep"));
    CHECK(r.exit_code == kExitPass);
    const auto rep = read_json(dir / "rep/harnack_report.json");
    CHECK(rep.at("pass").get<bool>());
    CHECK(rep.at("speed") == "kharmonic:n=3,k=2");
    CHECK(fs::exists(dir / "rep/harnack_P.csv"));

    // the same run gated on an unattainable identity bound is a gate violation
    auto strict = config("kind=harnack-report\ntraj=" + (dir / "flow").string() + "\nidentity_tol=1e-9\n", dir / "strict");
    CHECK(run_experiment(strict).exit_code == kExitGateViolation);
}

TEST_CASE("exit codes for aborts and bad inputs") {
    Scratch dir("exits");
    const auto extinct =
        run_experiment(config("kind=flow\nspeed=trace:n=2\nshape=sphere:1\nM=32\nuntil=t=10\n", dir / "extinct"));
    CHECK(extinct.exit_code == kExitNumericalAbort);
    CHECK(extinct.status == "numerical_abort");
    CHECK(read_json(dir / "extinct/manifest.json").at("exit_code") == kExitNumericalAbort);

    const auto missing = run_experiment(config("kind=harnack-report\ninput=/nonexistent/translator.txt\n", dir / "m"));
    CHECK(missing.exit_code == kExitConfigError);
    CHECK(missing.error_kind == "IoError");
}

TEST_CASE("identity-check reports second-order ratios") {
    Scratch dir("identity");
    const auto m = run_experiment(
        config("kind=identity-check\nspeed=kharmonic:n=3,k=2\nshape=ellipsoid:1.5,1\nM=128\n", dir / "id"));
    CHECK(m.exit_code == kExitPass);
    const auto j = read_json(dir / "id/identities.json");
    for (const char* key : {"scalar", "first_variation", "simons"}) {
        const double ratio = j.at("ratios").at(key).get<double>();
        CHECK(ratio >= 3.0);
        CHECK(ratio <= 5.0);
    }
}

TEST_CASE("command-line layering and exit codes") {
    Scratch dir("binary");
    const fs::path cfg = dir / "run.cfg";
    { std::ofstream(cfg) << "speed=trace:n=2\nshape=sphere:1\nM=32\nuntil=t=0.01\n"; }
    CHECK(run_cli("flow --config " + cfg.string() + " --out " + (dir / "a").string()) == kExitPass);
    const auto manifest = read_json(dir / "a/manifest.json");
    CHECK(manifest.at("config").at("M") == 32);

    // flags beat the environment, which beats the file
    CHECK(run_cli("flow --config " + cfg.string() + " --grid 48 --out " + (dir / "b").string()) == kExitPass);
    CHECK(read_json(dir / "b/manifest.json").at("config").at("M") == 48);
    CHECK(::setenv("HARNACKLAB_M", "64", 1) == 0);
    CHECK(run_cli("flow --config " + cfg.string() + " --out " + (dir / "c").string()) == kExitPass);
    CHECK(read_json(dir / "c/manifest.json").at("config").at("M") == 64);
    CHECK(run_cli("flow --config " + cfg.string() + " --grid 40 --out " + (dir / "d").string()) == kExitPass);
    CHECK(read_json(dir / "d/manifest.json").at("config").at("M") == 40);
    ::unsetenv("HARNACKLAB_M");

    CHECK(run_cli("flow --config " + cfg.string() + " --grid 10") == kExitConfigError);
    CHECK(run_cli("flow --bogus-flag") == kExitConfigError);
    CHECK(run_cli("flow --config " + (dir / "absent.cfg").string()) == kExitConfigError);
}
