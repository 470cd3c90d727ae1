#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

#include "ri/manifest.hpp"
#include "ri/table.hpp"

namespace fs = std::filesystem;
using namespace ri;

namespace {

#ifndef RI_CLI_PATH
#error "RI_CLI_PATH must be defined by the build"
#endif
#ifndef RI_SCENARIO_DIR
#error "RI_SCENARIO_DIR must be defined by the build"
#endif

const std::string cli = RI_CLI_PATH;
const std::string scen = RI_SCENARIO_DIR;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("ri_cli_test_" + std::to_string(SplitMix64(std::random_device{}()).next()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

int run(const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("solve emits the policy, data, assumptions, plot, and manifest") {
    TempDir tmp;
    const int rc =
        run("solve " + scen + "/example1.json --plot --out-dir " + tmp.str());
    REQUIRE(rc == 0);
    const std::string policy = read_file((tmp.path / "policy.csv").string());
    CHECK(policy.find("gamma_w1") != std::string::npos);
    CHECK(policy.find(",b,") != std::string::npos);
    CHECK(policy.find("9.5") != std::string::npos);
    CHECK(fs::exists(tmp.path / "assumptions.txt"));
    CHECK(fs::exists(tmp.path / "sdsc.csv"));
    CHECK(fs::exists(tmp.path / "envelope.svg"));

    // manifest digests match the files on disk
    nlohmann::json man =
        nlohmann::json::parse(read_file((tmp.path / "solve_manifest.json").string()));
    CHECK(man["status"] == "ok");
    for (const auto& [name, digest] : man["outputs"].items())
        CHECK(digest.get<std::string>() ==
              sha256_hex(read_file((tmp.path / name).string())));
}

TEST_CASE("solve rejects malformed configuration with exit 2") {
    TempDir tmp;
    const std::string bad = (tmp.path / "bad.json").string();
    std::string body = read_file(scen + "/example1.json");
    body.replace(body.find("[0.5, 0.5]"), 10, "[0.5, 0.4]");
    write_file(bad, body);
    CHECK(run("solve " + bad + " --out-dir " + tmp.str()) == 2);
}

TEST_CASE("solve is constant across draw indices for fixed heterogeneity") {
    TempDir tmp;
    REQUIRE(run("solve " + scen + "/example1.json --draw-index 0 --out-dir " + tmp.str() +
                "/d0") == 0);
    REQUIRE(run("solve " + scen + "/example1.json --draw-index 7 --out-dir " + tmp.str() +
                "/d7") == 0);
    CHECK(read_file((tmp.path / "d0/policy.csv").string()) ==
          read_file((tmp.path / "d7/policy.csv").string()));
}

TEST_CASE("equivalence exit codes track the tolerance") {
    TempDir tmp;
    CHECK(run("equivalence " + scen + "/example1.json --instances 1 --tol 1e-6 --out-dir " +
              tmp.str()) == 0);
    {
        // single-instance report on the worked example: all four routes at 9.5
        std::istringstream is(read_file((tmp.path / "equivalence.csv").string()));
        std::string header, row;
        std::getline(is, header);
        REQUIRE(std::getline(is, row));
        const auto f = ri::detail::split_csv_line(row);
        for (int c = 1; c <= 4; ++c)
            CHECK(std::stod(f[c]) == doctest::Approx(9.5).epsilon(1e-9));
    }
    // absurdly tight tolerance must fail on float round-off
    CHECK(run("equivalence " + scen + "/example1.json --instances 3 --tol 1e-18 --out-dir " +
              tmp.str()) == 4);
    const std::string csv = read_file((tmp.path / "equivalence.csv").string());
    CHECK(csv.find("policy_route") != std::string::npos);
}

TEST_CASE("simulate is byte-identical across reruns and worker counts") {
    TempDir tmp;
    const std::string base = "simulate " + scen + "/deterministic_state.json --draws 64 ";
    REQUIRE(run(base + "--threads 1 --out-dir " + tmp.str() + "/t1") == 0);
    REQUIRE(run(base + "--threads 1 --out-dir " + tmp.str() + "/t1b") == 0);
    REQUIRE(run(base + "--threads 6 --out-dir " + tmp.str() + "/t6") == 0);
    const std::string m1 = read_file((tmp.path / "t1/means.csv").string());
    CHECK(sha256_hex(m1) == sha256_hex(read_file((tmp.path / "t1b/means.csv").string())));
    CHECK(sha256_hex(m1) == sha256_hex(read_file((tmp.path / "t6/means.csv").string())));
}

TEST_CASE("simulate honors the RI_SEED override") {
    TempDir tmp;
    const std::string cmd1 = "RI_SEED=99 " + cli + " simulate " + scen +
                             "/canonical_state.json --draws 50 --out-dir " + tmp.str() +
                             "/a > /dev/null 2>&1";
    const std::string cmd2 = "RI_SEED=100 " + cli + " simulate " + scen +
                             "/canonical_state.json --draws 50 --out-dir " + tmp.str() +
                             "/b > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd1.c_str())) == 0);
    REQUIRE(WEXITSTATUS(std::system(cmd2.c_str())) == 0);
    CHECK(read_file((tmp.path / "a/means.csv").string()) !=
          read_file((tmp.path / "b/means.csv").string()));
}

TEST_CASE("latent scenarios emit marginal-only tables") {
    TempDir tmp;
    REQUIRE(run("simulate " + scen + "/market_latent.json --draws 40 --out-dir " +
                tmp.str()) == 0);
    std::istringstream is(read_file((tmp.path / "means.csv").string()));
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    CHECK(row.find(",-,") != std::string::npos);  // state column collapsed
}

TEST_CASE("identify validates digests and variants, then writes reports") {
    TempDir tmp;
    REQUIRE(run("simulate " + scen + "/deterministic_state.json --draws 16 --out-dir " +
                tmp.str()) == 0);
    SUBCASE("happy path writes ratio and recovery tables") {
        const int rc = run("identify " + scen + "/deterministic_state.json --means " +
                           tmp.str() + "/means.csv --mode state --draws 16 --welfare " +
                           "x0000:x0024 --out-dir " + tmp.str());
        REQUIRE(rc == 0);
        CHECK(fs::exists(tmp.path / "ratios.csv"));
        const std::string rec = read_file((tmp.path / "recovered.csv").string());
        CHECK(rec.find("dollars") != std::string::npos);
        CHECK(fs::exists(tmp.path / "welfare.csv"));
    }
    SUBCASE("scenario digest mismatch exits 2 and still writes a manifest") {
        CHECK(run("identify " + scen + "/canonical_state.json --means " + tmp.str() +
                  "/means.csv --mode state --out-dir " + tmp.str()) == 2);
        nlohmann::json man = nlohmann::json::parse(
            read_file((tmp.path / "identify_manifest.json").string()));
        CHECK(man["status"].get<std::string>().rfind("error", 0) == 0);
    }
    SUBCASE("market mode against a state table exits 2") {
        CHECK(run("identify " + scen + "/deterministic_state.json --means " + tmp.str() +
                  "/means.csv --mode market --out-dir " + tmp.str()) == 2);
    }
}

TEST_CASE("market pipeline runs end to end through the CLI") {
    TempDir tmp;
    REQUIRE(run("simulate " + scen + "/market_latent.json --draws 3000 --out-dir " +
                tmp.str()) == 0);
    // market derivatives carry extra realized-state noise: thin draws fail
    // the pairing screen by design
    CHECK(run("identify " + scen + "/market_latent.json --means " + tmp.str() +
              "/means.csv --mode market --draws 400 --out-dir " + tmp.str()) == 5);
    REQUIRE(run("identify " + scen + "/market_latent.json --means " + tmp.str() +
                "/means.csv --mode market --draws 3000 --welfare x0000:x0024 --out-dir " +
                tmp.str()) == 0);
    CHECK(fs::exists(tmp.path / "ratios.csv"));
    CHECK(fs::exists(tmp.path / "recovered.csv"));
    CHECK(fs::exists(tmp.path / "welfare.csv"));
}

TEST_CASE("unsolvable scenarios exhaust the rejection budget with exit 3") {
    TempDir tmp;
    const std::string bad = (tmp.path / "degenerate.json").string();
    std::string body = read_file(scen + "/deterministic_state.json");
    const std::string needle = "\"base\": [[3.0, -1.0], [-0.4, 3.6]]";
    REQUIRE(body.find(needle) != std::string::npos);
    body.replace(body.find(needle), needle.size(),
                 "\"base\": [[3.0, -1.0], [3.0, -1.0]]");  // parallel surfaces
    write_file(bad, body);
    CHECK(run("simulate " + bad + " --draws 8 --out-dir " + tmp.str()) == 3);
}

TEST_CASE("identify flips recovered signs with the normalization") {
    TempDir tmp;
    REQUIRE(run("simulate " + scen + "/deterministic_state.json --draws 16 --out-dir " +
                tmp.str()) == 0);
    REQUIRE(run("identify " + scen + "/deterministic_state.json --means " + tmp.str() +
                "/means.csv --mode state --draws 16 --sign -1 --out-dir " + tmp.str() +
                "/neg") == 0);
    REQUIRE(run("identify " + scen + "/deterministic_state.json --means " + tmp.str() +
                "/means.csv --mode state --draws 16 --sign 1 --out-dir " + tmp.str() +
                "/pos") == 0);
    auto parse_u = [](const std::string& csv) {
        std::istringstream is(csv);
        std::string line;
        std::getline(is, line);
        std::vector<double> u;
        while (std::getline(is, line)) {
            const auto f = ri::detail::split_csv_line(line);
            u.push_back(std::stod(f[3]));
        }
        return u;
    };
    auto uneg = parse_u(read_file((tmp.path / "neg/recovered.csv").string()));
    auto upos = parse_u(read_file((tmp.path / "pos/recovered.csv").string()));
    REQUIRE(uneg.size() == upos.size());
    for (std::size_t i = 0; i < uneg.size(); ++i)
        CHECK(upos[i] == doctest::Approx(-uneg[i]).epsilon(1e-9));
}

TEST_CASE("verify passes on shipped scenarios and flags broken ones") {
    TempDir tmp;
    CHECK(run("verify " + scen + "/example1.json --out-dir " + tmp.str()) == 0);
    CHECK(run("verify " + scen + "/deterministic_state.json --draws 8 --out-dir " +
              tmp.str()) == 0);
    SUBCASE("empty covariate grid is a config error") {
        const std::string bad = (tmp.path / "empty_grid.json").string();
        std::string body = read_file(scen + "/deterministic_state.json");
        const std::string needle = "\"values\": [0, 0.25, 0.5, 0.75, 1.0]";
        body.replace(body.find(needle), needle.size(), "\"values\": []");
        write_file(bad, body);
        CHECK(run("verify " + bad + " --out-dir " + tmp.str()) == 2);
    }
    SUBCASE("duplicate utilities are reported, remaining checks skipped") {
        const std::string bad = (tmp.path / "dup.json").string();
        std::string body = read_file(scen + "/example1.json");
        const std::string needle = "[[10, 5], [12, 3]]";
        body.replace(body.find(needle), needle.size(), "[[10, 5], [10, 5]]");
        write_file(bad, body);
        const int rc = run("verify " + bad + " --out-dir " + tmp.str());
        CHECK(rc == 0);  // reported, not asserted
        const std::string rep = read_file((tmp.path / "verify.txt").string());
        CHECK(rep.find("assumption check failed") != std::string::npos);
    }
}
