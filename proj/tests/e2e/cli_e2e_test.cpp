#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "proc.hpp"
#include "recon/knowledge_base.hpp"

using namespace recon;

namespace {

const std::string kCli = RECON_CLI_PATH;

std::string fixture_path(const std::string& name) {
    return std::string(RECON_FIXTURES_DIR) + "/" + name;
}

std::string fixture_bytes(const std::string& name) {
    return testproc::read_file(fixture_path(name));
}

testproc::RunResult cli(const std::string& args) {
    return testproc::run_command(testproc::quoted(kCli) + " " + args);
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

} // namespace

TEST_CASE("build-kb estimates tables from a labeled corpus") {
    testproc::TempDir dir("recon_e2e_build");
    dir.write("schema.json", fixture_bytes("corpus_schema.json"));
    dir.write("corpus.csv", fixture_bytes("corpus20.csv"));

    auto result = cli("build-kb --records " + testproc::quoted(dir.file("corpus.csv")) +
                      " --schema " + testproc::quoted(dir.file("schema.json")) + " --out " +
                      testproc::quoted(dir.file("kb.json")));
    CAPTURE(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(contains(result.output, "os ubuntu: 8 records"));
    CHECK(contains(result.output, "os win: 6 records"));
    CHECK(contains(result.output, "software nginx: 3 records"));
    CHECK(contains(result.output, "total: 20 records"));
    CHECK(contains(result.output, "kb written to"));

    auto kb = kb_from_json(testproc::read_file(dir.file("kb.json")));
    CHECK(kb.alpha() == 1.0);
    CHECK(kb.os_probability("ubuntu", "ttl_class", "64") == 8.0 / 11.0);
    CHECK(kb.software_probability("nginx", "banner", "nginx") == 4.0 / 6.0);

    SUBCASE("explicit alpha is honored") {
        auto smoothed = cli("build-kb --records " + testproc::quoted(dir.file("corpus.csv")) +
                            " --schema " + testproc::quoted(dir.file("schema.json")) +
                            " --alpha 2 --out " + testproc::quoted(dir.file("kb2.json")));
        REQUIRE(smoothed.exit_code == 0);
        auto kb2 = kb_from_json(testproc::read_file(dir.file("kb2.json")));
        CHECK(kb2.os_probability("ubuntu", "ttl_class", "64") == 9.0 / 14.0);
    }

    SUBCASE("alpha 0 warns about exact-zero cells") {
        auto unsmoothed = cli("build-kb --records " + testproc::quoted(dir.file("corpus.csv")) +
                              " --schema " + testproc::quoted(dir.file("schema.json")) +
                              " --alpha 0 --out " + testproc::quoted(dir.file("kb0.json")));
        REQUIRE(unsmoothed.exit_code == 0);
        CHECK(contains(unsmoothed.output, "exact-zero cells"));
    }
}

TEST_CASE("build-kb rejects an empty corpus without writing output") {
    testproc::TempDir dir("recon_e2e_empty");
    dir.write("schema.json", fixture_bytes("corpus_schema.json"));
    dir.write("corpus.csv", "kind,label,src_addr,ttl_class,window_bin,banner\n");

    auto result = cli("build-kb --records " + testproc::quoted(dir.file("corpus.csv")) +
                      " --schema " + testproc::quoted(dir.file("schema.json")) + " --out " +
                      testproc::quoted(dir.file("kb.json")));
    CHECK(result.exit_code == 2);
    CHECK(contains(result.output, "EmptyCorpus"));
    CHECK_FALSE(std::filesystem::exists(dir.file("kb.json")));
}

TEST_CASE("build-kb reports a missing input file as an I/O failure") {
    testproc::TempDir dir("recon_e2e_missing");
    dir.write("schema.json", fixture_bytes("corpus_schema.json"));
    auto result = cli("build-kb --records " + testproc::quoted(dir.file("absent.csv")) +
                      " --schema " + testproc::quoted(dir.file("schema.json")) + " --out " +
                      testproc::quoted(dir.file("kb.json")));
    CHECK(result.exit_code == 1);
    CHECK(contains(result.output, "error:"));
}

TEST_CASE("update replays one node's stream and writes a trajectory") {
    testproc::TempDir dir("recon_e2e_update");
    std::string base = "update --kb " + testproc::quoted(fixture_path("testbed_kb.json")) +
                       " --space " + testproc::quoted(fixture_path("testbed_space.json")) +
                       " --obs " + testproc::quoted(fixture_path("testbed_obs.csv")) +
                       " --ingest " + testproc::quoted(fixture_path("testbed_ingest.json"));

    SUBCASE("trajectory file plus MAP summary") {
        auto result = cli(base + " --node 192.168.10.19 --out " +
                          testproc::quoted(dir.file("traj.csv")));
        CAPTURE(result.output);
        REQUIRE(result.exit_code == 0);
        CHECK(contains(result.output, "192.168.10.19 map=ubuntu p=0.9119"));
        CHECK_FALSE(contains(result.output, "tied"));

        auto traj = testproc::read_file(dir.file("traj.csv"));
        CHECK(traj.rfind("obs_index,configuration_label,probability\n", 0) == 0);
        CHECK(contains(traj, "\n0,ubuntu,0.3333\n"));
        CHECK(contains(traj, "\n15,ubuntu,0.9119\n"));
    }

    SUBCASE("wide format to stdout") {
        auto result = cli(base + " --node 192.168.10.19 --wide");
        REQUIRE(result.exit_code == 0);
        CHECK(result.output.rfind("step,win,ubuntu,mac\n", 0) == 0);
        CHECK(contains(result.output, "init. belief,0.3333,0.3333,0.3333"));
        CHECK(contains(result.output, "obs. 15,"));
    }

    SUBCASE("node without observations is rejected") {
        auto result = cli(base + " --node 10.9.9.9");
        CHECK(result.exit_code == 2);
        CHECK(contains(result.output, "no observations for node '10.9.9.9'"));
    }
}

TEST_CASE("inspect-kb prints schema and tables in readable form") {
    auto result = cli("inspect-kb --kb " + testproc::quoted(fixture_path("testbed_kb.json")));
    CAPTURE(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(contains(result.output, "alpha: 1"));
    CHECK(contains(result.output, "os features"));
    CHECK(contains(result.output, "ttl_class: 64 128 255"));
    CHECK(contains(result.output, "os win:"));
    CHECK(contains(result.output, "128=0.96"));
    CHECK(contains(result.output, "software features: (none)"));
}

TEST_CASE("run-scenario replays the testbed end to end") {
    testproc::TempDir out("recon_e2e_scn");
    auto result = cli("run-scenario " + testproc::quoted(fixture_path("testbed_scenario.json")) +
                      " --out-dir " + testproc::quoted(out.path()));
    CAPTURE(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(contains(result.output, "192.168.10.19 0.9119 15 true"));
    CHECK(contains(result.output, "192.168.10.14 1.0000 1 true"));

    for (const char* name : {"truth_probability.csv", "observations_needed.csv",
                             "trajectory_192.168.10.19.csv"})
        CHECK(std::filesystem::exists(out.file(name)));
    auto probs = testproc::read_file(out.file("truth_probability.csv"));
    CHECK(probs.rfind("node,gt,prob\n", 0) == 0);
    CHECK(contains(probs, "192.168.10.19,1,0.9119"));

    SUBCASE("reruns are byte-identical") {
        testproc::TempDir again("recon_e2e_scn2");
        auto rerun = cli("run-scenario " + testproc::quoted(fixture_path("testbed_scenario.json")) +
                         " --out-dir " + testproc::quoted(again.path()));
        REQUIRE(rerun.exit_code == 0);
        CHECK(rerun.output == result.output);
        CHECK(testproc::read_file(again.file("truth_probability.csv")) == probs);
        CHECK(testproc::read_file(again.file("trajectory_192.168.10.12.csv")) ==
              testproc::read_file(out.file("trajectory_192.168.10.12.csv")));
    }

    SUBCASE("json report carries the same outcomes") {
        testproc::TempDir json_out("recon_e2e_json");
        auto json_run =
            cli("run-scenario " + testproc::quoted(fixture_path("testbed_scenario.json")) +
                " --format json --out-dir " + testproc::quoted(json_out.path()));
        REQUIRE(json_run.exit_code == 0);
        auto doc = nlohmann::json::parse(testproc::read_file(json_out.file("report.json")));
        CHECK(doc.at("version").get<int>() == 1);
        CHECK(doc.at("threshold").get<double>() == 0.9);
        CHECK(doc.at("nodes").at("192.168.10.19").at("obs_to_threshold").get<int>() == 15);
        CHECK(doc.at("nodes").at("192.168.10.8").at("map_configuration").get<std::string>() ==
              "mac");
    }

    SUBCASE("wide trajectories have one column per configuration") {
        testproc::TempDir wide_out("recon_e2e_wide");
        auto wide_run =
            cli("run-scenario " + testproc::quoted(fixture_path("testbed_scenario.json")) +
                " --wide --out-dir " + testproc::quoted(wide_out.path()));
        REQUIRE(wide_run.exit_code == 0);
        auto traj = testproc::read_file(wide_out.file("trajectory_192.168.10.19.csv"));
        CHECK(traj.rfind("step,win,ubuntu,mac\n", 0) == 0);
        CHECK(contains(traj, "init. belief,0.3333,0.3333,0.3333"));
    }
}

TEST_CASE("run-scenario failures exit distinctly and leave no artifacts") {
    testproc::TempDir dir("recon_e2e_fail");

    SUBCASE("malformed scenario document") {
        dir.write("broken.json", R"({"version":1,"ground_truth":{}})");
        testproc::TempDir out("recon_e2e_failout");
        auto result = cli("run-scenario " + testproc::quoted(dir.file("broken.json")) +
                          " --out-dir " + testproc::quoted(out.path()));
        CHECK(result.exit_code == 2);
        CHECK(contains(result.output, "kb"));
        CHECK(std::filesystem::is_empty(out.path()));
    }

    SUBCASE("missing scenario file") {
        auto result = cli("run-scenario " + testproc::quoted(dir.file("absent.json")));
        CHECK(result.exit_code == 1);
        CHECK(contains(result.output, "error:"));
    }

    SUBCASE("scenario referencing a missing knowledge base") {
        dir.write("io.json",
                  R"({"version":1,"kb":"gone.json","space":"gone.json",)"
                  R"("observations":"gone.csv","ground_truth":{}})");
        testproc::TempDir out("recon_e2e_ioout");
        auto result = cli("run-scenario " + testproc::quoted(dir.file("io.json")) + " --out-dir " +
                          testproc::quoted(out.path()));
        CHECK(result.exit_code == 1);
        CHECK(std::filesystem::is_empty(out.path()));
    }
}

TEST_CASE("argument errors exit 2") {
    CHECK(cli("run-scenario --bogus-flag x").exit_code == 2);
    CHECK(cli("").exit_code == 2);
    CHECK(cli("build-kb").exit_code == 2);
    auto bad_format = cli("run-scenario " + testproc::quoted(fixture_path("testbed_scenario.json")) +
                          " --format xml");
    CHECK(bad_format.exit_code == 2);
}
