#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "volterra/estimate.hpp"
#include "volterra/kernel.hpp"
#include "volterra/pulse.hpp"

#include <json.hpp>
#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace volterra;

namespace {

std::string g_cli;

struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("volterra_cli_" + tag + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string str() const { return path.string(); }
    fs::path operator/(const std::string& name) const { return path / name; }
};

int run_cli(const std::string& args, const fs::path& log_dir, std::string* output = nullptr) {
    static std::atomic<int> counter{0};
    fs::path log = log_dir / ("cli_log_" + std::to_string(counter++) + ".txt");
    std::string cmd = "'" + g_cli + "' " + args + " >'" + log.string() + "' 2>&1";
    int status = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(log);
        std::ostringstream buf;
        buf << in.rdbuf();
        *output = buf.str();
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

VolterraKernel small_kernel() { return make_gaussian_kernel(5, 0.1, 0.42, 5e-6, 0.1); }

} // namespace

TEST_CASE("help exits cleanly and bad usage exits 2") {
    TempDir dir("usage");
    CHECK(run_cli("--help", dir.path) == 0);
    CHECK(run_cli("", dir.path) == 2);
    CHECK(run_cli("no-such-command", dir.path) == 2);
    CHECK(run_cli("make-kernel --bogus-flag 1", dir.path) == 2);
    CHECK(run_cli("reproduce fig99 --out " + dir.str(), dir.path) == 2);
}

TEST_CASE("make-kernel writes a preset that reads back exactly") {
    TempDir dir("makekernel");
    std::string out;
    CHECK(run_cli("--out " + dir.str() + " make-kernel --preset C --output C.json", dir.path,
                  &out) == 0);
    CHECK(out.find("wrote") != std::string::npos);

    fs::path kpath = dir / "C.json";
    REQUIRE(fs::exists(kpath));
    json doc = json::parse(slurp(kpath));
    CHECK(doc["R"].get<int>() == 50);
    CHECK(doc["convention"].get<std::string>() == "symmetric-h2");
    CHECK(doc["h1"].size() == 50);
    CHECK(doc["h2_packed"].size() == 50 * 51 / 2);

    VolterraKernel k = read_kernel(kpath.string());
    VolterraKernel truth = distortion_preset('C');
    CHECK(k.h0 == truth.h0);
    CHECK((k.h1 - truth.h1).cwiseAbs().maxCoeff() == 0.0);
    CHECK((k.h2 - truth.h2).cwiseAbs().maxCoeff() == 0.0);

    CHECK(run_cli("--out " + dir.str() + " make-kernel --preset Q", dir.path) == 2);
    CHECK_FALSE(fs::exists(dir / "kernel.json"));
}

TEST_CASE("distort obeys the output-duration law and seeds deterministically") {
    TempDir dir("distort");
    VolterraKernel k = small_kernel();
    write_kernel((dir / "k.json").string(), k);
    Pulse x = generate_random_noise(100, 1.0, 42);
    write_pulse((dir / "p.csv").string(), x);

    std::string base = "--out " + dir.str() + " distort --kernel " + (dir / "k.json").string() +
                       " " + (dir / "p.csv").string();
    CHECK(run_cli(base, dir.path) == 0);
    Pulse y = read_pulse((dir / "p.out.csv").string());
    REQUIRE(y.size() == 104);  // L + R - 1
    Pulse want = apply(k, x);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y.samples[i] == want.samples[i]);

    CHECK(run_cli(base + " --noise-sigma 1e-3 --seed 7", dir.path) == 0);
    std::string first = slurp(dir / "p.out.csv");
    CHECK(run_cli(base + " --noise-sigma 1e-3 --seed 7", dir.path) == 0);
    CHECK(slurp(dir / "p.out.csv") == first);
    CHECK(run_cli(base + " --noise-sigma 1e-3 --seed 8", dir.path) == 0);
    CHECK(slurp(dir / "p.out.csv") != first);
}

TEST_CASE("estimate recovers a kernel from a training directory") {
    TempDir dir("estimate");
    VolterraKernel truth = small_kernel();
    write_kernel((dir / "truth.json").string(), truth);
    fs::create_directories(dir / "train");
    for (int i = 0; i < 2; ++i) {
        Pulse x = generate_spline(300, 12 + i, 5 + i);
        write_pulse(((dir / "train") / ("t" + std::to_string(i) + ".in.csv")).string(), x);
        write_pulse(((dir / "train") / ("t" + std::to_string(i) + ".out.csv")).string(),
                    apply(truth, x));
    }

    CHECK(run_cli("--out " + dir.str() + " estimate --training " + (dir / "train").string() +
                      " --R 5 --method qr --truth " + (dir / "truth.json").string(),
                  dir.path) == 0);
    VolterraKernel est = read_kernel((dir / "estimated_kernel.json").string());
    CHECK(std::abs(est.h0 - truth.h0) < 1e-8);
    CHECK((est.h1 - truth.h1).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((est.h2 - truth.h2).cwiseAbs().maxCoeff() < 1e-8);

    json report = json::parse(slurp(dir / "estimate_report.json"));
    CHECK(report["method"].get<std::string>() == "qr");
    CHECK(report["R"].get<int>() == 5);
    CHECK(report["training_pairs"].get<int>() == 2);
    CHECK(report["mase_h1"].get<double>() < 1e-9);
    CHECK(report["mase_h2"].get<double>() < 1e-5);
    CHECK(report["residual_norm"].get<double>() < 1e-8);

    CHECK(run_cli("--out " + dir.str() + " estimate --training " + (dir / "train").string() +
                      " --R 5 --method sketchy",
                  dir.path) == 2);
    CHECK(run_cli("--out " + dir.str() + " estimate --training " + (dir / "nowhere").string() +
                      " --R 5",
                  dir.path) == 2);
}

TEST_CASE("config files are validated and resolve paths relative to themselves") {
    TempDir dir("config");
    fs::create_directories(dir / "cfg");
    VolterraKernel k = small_kernel();
    write_kernel(((dir / "cfg") / "k.json").string(), k);
    write_pulse(((dir / "cfg") / "p.csv").string(), generate_random_noise(50, 1.0, 3));

    write_file((dir / "cfg") / "distort.json",
               R"({"kernel": "k.json", "inputs": ["p.csv"]})");
    CHECK(run_cli("--out " + dir.str() + " --config " + ((dir / "cfg") / "distort.json").string() +
                      " distort",
                  dir.path) == 0);
    CHECK(fs::exists(dir / "p.out.csv"));

    write_file((dir / "cfg") / "unknown.json",
               R"({"kernel": "k.json", "inputs": ["p.csv"], "bogus_key": 1})");
    std::string out;
    CHECK(run_cli("--out " + dir.str() + " --config " +
                      ((dir / "cfg") / "unknown.json").string() + " distort",
                  dir.path, &out) == 2);
    CHECK(out.find("bogus_key") != std::string::npos);

    write_file((dir / "cfg") / "broken.json", "{not json");
    CHECK(run_cli("--out " + dir.str() + " --config " + ((dir / "cfg") / "broken.json").string() +
                      " distort",
                  dir.path) == 2);
    CHECK(run_cli("--out " + dir.str() + " --config " + (dir / "missing.json").string() +
                      " distort",
                  dir.path) == 2);
}

TEST_CASE("command-line flags override the config document") {
    TempDir dir("override");
    write_file(dir / "mk.json", R"({"preset": "D", "output": "k.json"})");
    CHECK(run_cli("--out " + dir.str() + " --config " + (dir / "mk.json").string() +
                      " make-kernel --preset F",
                  dir.path) == 0);
    CHECK(read_kernel((dir / "k.json").string()).R == 60);
}

TEST_CASE("optimize writes controls, a result report, and the distorted horizon") {
    TempDir dir("optimize");
    VolterraKernel k = small_kernel();
    write_kernel((dir / "k.json").string(), k);
    write_file(dir / "opt.json", R"({
        "duration": 0.1, "steps": 10,
        "kernel": "k.json",
        "optimizer": {"max_iterations": 5}
    })");
    CHECK(run_cli("--out " + dir.str() + " --config " + (dir / "opt.json").string() + " optimize",
                  dir.path) == 0);

    Pulse ub = read_pulse((dir / "optimize_omega_b.csv").string());
    Pulse ur = read_pulse((dir / "optimize_omega_r.csv").string());
    CHECK(ub.size() == 10);
    CHECK(ur.size() == 10);
    CHECK(ub.dt == doctest::Approx(0.01).epsilon(1e-12));
    Pulse db = read_pulse((dir / "optimize_omega_b_distorted.csv").string());
    CHECK(db.size() == 14);  // L_c + R - 1

    json report = json::parse(slurp(dir / "optimize_result.json"));
    double cost = report["final_cost"].get<double>();
    CHECK(cost >= 0.0);
    CHECK(cost <= 1.0);
    CHECK(report["steps"].get<int>() == 10);
    auto trace = report["cost_trace"].get<std::vector<double>>();
    REQUIRE(!trace.empty());
    for (std::size_t i = 1; i < trace.size(); ++i)
        CHECK(trace[i] <= trace[i - 1] + 1e-15);
    CHECK(trace.back() == doctest::Approx(cost).epsilon(1e-12));
}

TEST_CASE("predistort through the identity returns the target") {
    TempDir dir("predistort");
    write_kernel((dir / "id.json").string(), identity_kernel());
    Pulse target = generate_gaussian_pulse(50, 25.0, 8.0, 1.0);
    write_pulse((dir / "target.csv").string(), target);

    CHECK(run_cli("--out " + dir.str() + " predistort --kernel " + (dir / "id.json").string() +
                      " --target " + (dir / "target.csv").string(),
                  dir.path) == 0);
    Pulse pre = read_pulse((dir / "predistorted.csv").string());
    REQUIRE(pre.size() == 50);
    for (std::size_t i = 0; i < 50; ++i)
        CHECK(pre.samples[i] == doctest::Approx(target.samples[i]).epsilon(1e-12));
    json report = json::parse(slurp(dir / "predistort_report.json"));
    CHECK(report["round_trip_mase"].get<double>() < 1e-12);
    CHECK(report["converged"].get<bool>());
}

TEST_CASE("degenerate estimation data reports a numerical failure") {
    TempDir dir("numfail");
    VolterraKernel truth = small_kernel();
    write_kernel((dir / "truth.json").string(), truth);
    fs::create_directories(dir / "train");
    Pulse x = generate_random_noise(50, 1.0, 1);
    Pulse zero = x;
    zero.samples.assign(54, 0.0);
    write_pulse(((dir / "train") / "z.in.csv").string(), x);
    write_pulse(((dir / "train") / "z.out.csv").string(), zero);

    std::string out;
    CHECK(run_cli("--out " + dir.str() + " estimate --training " + (dir / "train").string() +
                      " --R 5 --truth " + (dir / "truth.json").string(),
                  dir.path, &out) == 3);
    CHECK(out.find("numerical failure") != std::string::npos);
}

TEST_CASE("no partial output files are left behind") {
    TempDir dir("atomic");
    CHECK(run_cli("--out " + dir.str() + " make-kernel --preset A --output A.json", dir.path) == 0);
    bool tmp_left = false;
    for (const auto& entry : fs::directory_iterator(dir.path))
        if (entry.path().string().ends_with(".tmp"))
            tmp_left = true;
    CHECK_FALSE(tmp_left);
}

int main(int argc, char** argv) {
    std::vector<char*> args;
    args.push_back(argv[0]);
    for (int i = 1; i < argc; ++i) {
        if (g_cli.empty() && argv[i][0] != '-')
            g_cli = argv[i];
        else
            args.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: test_cli <path-to-volterra-binary> [doctest args]\n");
        return 1;
    }
    doctest::Context ctx(static_cast<int>(args.size()), args.data());
    return ctx.run();
}
