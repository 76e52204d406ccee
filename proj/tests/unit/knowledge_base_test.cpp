#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errcheck.hpp"
#include "generators.hpp"
#include "recon/errors.hpp"
#include "recon/knowledge_base.hpp"

using namespace recon;

namespace {

FeatureSchema ttl_schema() {
    FeatureSchema schema;
    schema.os_features = {"ttl_class"};
    schema.domains["ttl_class"] = {"64", "128", "255"};
    return schema;
}

Observation obs_of(std::map<std::string, std::string> values) {
    return Observation{testgen::test_node(1), std::move(values)};
}

TrainingRecord os_record(std::string label, std::map<std::string, std::string> values) {
    return TrainingRecord{LabelKind::os, std::move(label), obs_of(std::move(values))};
}

std::string fixture(const std::string& name) {
    std::ifstream in(std::string(RECON_FIXTURES_DIR) + "/" + name, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

} // namespace

TEST_CASE("schema validation catches structural defects") {
    FeatureSchema good = ttl_schema();
    CHECK_NOTHROW(good.validate());

    SUBCASE("duplicate feature") {
        FeatureSchema s = good;
        s.software_features = {"ttl_class"};
        CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
    }
    SUBCASE("missing domain") {
        FeatureSchema s = good;
        s.os_features.push_back("window_bin");
        CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
    }
    SUBCASE("empty domain") {
        FeatureSchema s = good;
        s.os_features.push_back("window_bin");
        s.domains["window_bin"] = {};
        CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
    }
    SUBCASE("duplicate domain value") {
        FeatureSchema s = good;
        s.domains["ttl_class"] = {"64", "64"};
        CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
    }
    SUBCASE("orphan domain") {
        FeatureSchema s = good;
        s.domains["stray"] = {"v"};
        CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
    }
    SUBCASE("reserved column names") {
        for (const char* reserved : {"src_addr", "kind", "label"}) {
            FeatureSchema s = good;
            s.os_features.push_back(reserved);
            s.domains[reserved] = {"v"};
            CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
        }
    }
    SUBCASE("CSV separator in names or values") {
        FeatureSchema s = good;
        s.domains["ttl_class"] = {"64", "12,8"};
        CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
    }
    SUBCASE("no features at all") {
        FeatureSchema s;
        CHECK(testerr::capture([&] { s.validate(); }).code == Errc::schema_violation);
    }
}

TEST_CASE("observation validation checks features and values, not presence") {
    FeatureSchema schema = ttl_schema();
    CHECK_NOTHROW(validate_observation(obs_of({{"ttl_class", "64"}}), schema));
    CHECK_NOTHROW(validate_observation(obs_of({}), schema));
    CHECK(testerr::capture([&] { validate_observation(obs_of({{"nope", "64"}}), schema); }).code ==
          Errc::schema_violation);
    CHECK(testerr::capture([&] {
              validate_observation(obs_of({{"ttl_class", "65"}}), schema);
          }).code == Errc::schema_violation);
}

TEST_CASE("unsmoothed estimation reproduces empirical frequencies") {
    std::vector<TrainingRecord> records = {
        os_record("ubuntu", {{"ttl_class", "64"}}),
        os_record("ubuntu", {{"ttl_class", "64"}}),
        os_record("ubuntu", {{"ttl_class", "64"}}),
    };
    auto kb = estimate_kb(records, ttl_schema(), 0.0);
    CHECK(kb.os_probability("ubuntu", "ttl_class", "64") == 1.0);
    CHECK(kb.os_probability("ubuntu", "ttl_class", "128") == 0.0);
    CHECK(kb.has_exact_zero_cells());
}

TEST_CASE("smoothed estimation adds one pseudocount per domain value") {
    std::vector<TrainingRecord> records = {
        os_record("win", {{"ttl_class", "128"}}),
        os_record("win", {{"ttl_class", "128"}}),
        os_record("win", {{"ttl_class", "64"}}),
    };
    auto kb = estimate_kb(records, ttl_schema(), 1.0);
    // (2+1)/(3+3) and (1+1)/(3+3) and (0+1)/(3+3), exactly.
    CHECK(kb.os_probability("win", "ttl_class", "128") == 0.5);
    CHECK(kb.os_probability("win", "ttl_class", "64") == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
    CHECK(kb.os_probability("win", "ttl_class", "255") == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK_FALSE(kb.has_exact_zero_cells());
}

TEST_CASE("labels absent from the corpus fall back to the uniform row under smoothing") {
    std::vector<TrainingRecord> records = {os_record("win", {{"ttl_class", "128"}})};
    auto kb = estimate_kb(records, ttl_schema(), 1.0);
    for (const char* value : {"64", "128", "255"})
        CHECK(kb.os_probability("mac", "ttl_class", value) ==
              doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    auto unsmoothed = estimate_kb(records, ttl_schema(), 0.0);
    auto miss = testerr::capture([&] { unsmoothed.os_probability("mac", "ttl_class", "64"); });
    CHECK(miss.code == Errc::unknown_label);
}

TEST_CASE("a label seen without one of its features gets that feature's uniform row") {
    FeatureSchema schema = ttl_schema();
    schema.os_features.push_back("window_bin");
    schema.domains["window_bin"] = {"lo", "hi"};
    std::vector<TrainingRecord> records = {os_record("win", {{"ttl_class", "128"}})};
    auto kb = estimate_kb(records, schema, 1.0);
    // (0+1)/(0+2) on both window cells.
    CHECK(kb.os_probability("win", "window_bin", "lo") == 0.5);
    CHECK(kb.os_probability("win", "window_bin", "hi") == 0.5);
}

TEST_CASE("estimation rejects bad corpora") {
    CHECK(testerr::capture([] { estimate_kb({}, ttl_schema(), 1.0); }).code == Errc::empty_corpus);

    std::vector<TrainingRecord> wrong_kind = {
        TrainingRecord{LabelKind::software, "nginx", obs_of({{"ttl_class", "64"}})}};
    auto err = testerr::capture([&] { estimate_kb(wrong_kind, ttl_schema(), 1.0); });
    CHECK(err.code == Errc::schema_violation);
    CHECK(err.mentions("wrong kind"));

    std::vector<TrainingRecord> bad_alpha = {os_record("win", {{"ttl_class", "64"}})};
    CHECK(testerr::capture([&] { estimate_kb(bad_alpha, ttl_schema(), -1.0); }).code ==
          Errc::invalid_argument);
}

TEST_CASE("estimated rows are stochastic for random corpora") {
    testgen::Rng rng(411);
    for (int trial = 0; trial < 50; ++trial) {
        FeatureSchema schema = testgen::random_schema(rng, 1);
        std::vector<TrainingRecord> records;
        const int count = rng.int_in(1, 40);
        for (int i = 0; i < count; ++i) {
            const bool os_kind = rng.chance(0.6);
            FeatureSchema side;
            side.os_features = os_kind ? schema.os_features : schema.software_features;
            for (const auto& f : side.os_features) side.domains[f] = schema.domain_of(f);
            if (side.os_features.empty()) continue;
            auto obs = testgen::random_observation(rng, side, testgen::test_node(1));
            records.push_back(TrainingRecord{os_kind ? LabelKind::os : LabelKind::software,
                                             std::string("label") + std::to_string(rng.int_in(0, 2)),
                                             std::move(obs)});
        }
        if (records.empty()) continue;
        const double alpha = rng.chance(0.8) ? rng.real_in(0.1, 3.0) : 0.0;
        auto kb = estimate_kb(records, schema, alpha);
        for (const auto* tables : {&kb.os_tables(), &kb.software_tables()}) {
            for (const auto& [label, table] : *tables) {
                for (const auto& [feature, row] : table) {
                    double total = 0.0;
                    for (double p : row) {
                        CHECK(p >= 0.0);
                        CHECK(p <= 1.0);
                        if (alpha > 0.0) CHECK(p > 0.0);
                        total += p;
                    }
                    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
                }
            }
        }
    }
}

TEST_CASE("stronger smoothing pulls rows toward uniform") {
    std::vector<TrainingRecord> records = {
        os_record("win", {{"ttl_class", "128"}}), os_record("win", {{"ttl_class", "128"}}),
        os_record("win", {{"ttl_class", "128"}}), os_record("win", {{"ttl_class", "64"}}),
    };
    const double uniform = 1.0 / 3.0;
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        auto kb = estimate_kb(records, ttl_schema(), alpha);
        double worst = 0.0;
        for (const char* value : {"64", "128", "255"})
            worst = std::max(worst,
                             std::abs(kb.os_probability("win", "ttl_class", value) - uniform));
        CHECK(worst <= previous);
        previous = worst;
    }
}

TEST_CASE("likelihood multiplies one factor per present feature") {
    FeatureSchema schema;
    schema.os_features = {"f"};
    schema.software_features = {"g"};
    schema.domains["f"] = {"v", "w"};
    schema.domains["g"] = {"v", "w"};
    std::map<std::string, KnowledgeBase::LabelTable> os_tables = {
        {"o", {{"f", {0.5, 0.5}}}}};
    std::map<std::string, KnowledgeBase::LabelTable> software_tables = {
        {"s1", {{"g", {0.4, 0.6}}}}, {"s2", {{"g", {0.3, 0.7}}}}};
    KnowledgeBase kb(schema, os_tables, software_tables, 1.0);

    SUBCASE("single OS feature, empty software set") {
        std::map<std::string, KnowledgeBase::LabelTable> only_os = {{"o", {{"f", {0.8, 0.2}}}}};
        KnowledgeBase kb2(schema, only_os, software_tables, 1.0);
        CHECK(observation_likelihood(kb2, obs_of({{"f", "v"}}), Configuration{"o", {}}) == 0.8);
    }

    SUBCASE("software features multiply across the installed set") {
        auto config = make_configuration("o", {"s1", "s2"});
        const double L =
            observation_likelihood(kb, obs_of({{"f", "v"}, {"g", "v"}}), config);
        CHECK(L == doctest::Approx(0.5 * 0.4 * 0.3).epsilon(1e-12));
        CHECK(log_likelihood(kb, obs_of({{"f", "v"}, {"g", "v"}}), config) ==
              doctest::Approx(std::log(0.06)).epsilon(1e-9));
    }

    SUBCASE("absent features contribute factor one") {
        CHECK(observation_likelihood(kb, obs_of({{"f", "v"}}), Configuration{"o", {"s1", "s2"}}) ==
              0.5);
    }

    SUBCASE("an observation with no features has likelihood exactly one") {
        CHECK(observation_likelihood(kb, obs_of({}), Configuration{"o", {"s1"}}) == 1.0);
        CHECK(log_likelihood(kb, obs_of({}), Configuration{"o", {"s1"}}) == 0.0);
    }

    SUBCASE("software features are skipped for the empty software set") {
        CHECK(observation_likelihood(kb, obs_of({{"g", "v"}}), Configuration{"o", {}}) == 1.0);
    }

    SUBCASE("a zero cell drives the log to negative infinity") {
        std::vector<TrainingRecord> records = {os_record("o", {{"f", "v"}})};
        FeatureSchema os_only;
        os_only.os_features = {"f"};
        os_only.domains["f"] = {"v", "w"};
        auto unsmoothed = estimate_kb(records, os_only, 0.0);
        CHECK(log_likelihood(unsmoothed, obs_of({{"f", "w"}}), Configuration{"o", {}}) ==
              -std::numeric_limits<double>::infinity());
        CHECK(observation_likelihood(unsmoothed, obs_of({{"f", "w"}}), Configuration{"o", {}}) ==
              0.0);
    }
}

TEST_CASE("exp of the log likelihood matches the direct product") {
    testgen::Rng rng(606);
    for (int trial = 0; trial < 100; ++trial) {
        FeatureSchema schema = testgen::random_schema(rng, 2);
        auto kb = testgen::random_kb(rng, schema, {"o0", "o1"}, {"s0", "s1"});
        auto obs = testgen::random_observation(rng, schema, testgen::test_node(1));
        std::vector<std::string> installed;
        if (rng.chance(0.5)) installed.push_back("s0");
        if (rng.chance(0.5)) installed.push_back("s1");
        Configuration config{rng.chance(0.5) ? "o0" : "o1", installed};
        const double direct = observation_likelihood(kb, obs, config);
        CHECK(std::exp(log_likelihood(kb, obs, config)) ==
              doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("knowledge base construction re-validates stored tables") {
    FeatureSchema schema = ttl_schema();

    SUBCASE("row sum off by more than the tolerance") {
        std::map<std::string, KnowledgeBase::LabelTable> tables = {
            {"win", {{"ttl_class", {0.5, 0.4, 0.2}}}}};
        CHECK(testerr::capture([&] { KnowledgeBase(schema, tables, {}, 1.0); }).code ==
              Errc::schema_violation);
    }
    SUBCASE("missing feature row") {
        std::map<std::string, KnowledgeBase::LabelTable> tables = {{"win", {}}};
        CHECK(testerr::capture([&] { KnowledgeBase(schema, tables, {}, 1.0); }).code ==
              Errc::schema_violation);
    }
    SUBCASE("wrong row length") {
        std::map<std::string, KnowledgeBase::LabelTable> tables = {
            {"win", {{"ttl_class", {0.5, 0.5}}}}};
        CHECK(testerr::capture([&] { KnowledgeBase(schema, tables, {}, 1.0); }).code ==
              Errc::schema_violation);
    }
    SUBCASE("exact zero under smoothing") {
        std::map<std::string, KnowledgeBase::LabelTable> tables = {
            {"win", {{"ttl_class", {0.5, 0.5, 0.0}}}}};
        CHECK(testerr::capture([&] { KnowledgeBase(schema, tables, {}, 1.0); }).code ==
              Errc::schema_violation);
        CHECK_NOTHROW(KnowledgeBase(schema, tables, {}, 0.0));
    }
    SUBCASE("foreign feature row") {
        std::map<std::string, KnowledgeBase::LabelTable> tables = {
            {"win",
             {{"ttl_class", {0.4, 0.3, 0.3}}, {"stray", {1.0}}}}};
        CHECK(testerr::capture([&] { KnowledgeBase(schema, tables, {}, 1.0); }).code ==
              Errc::schema_violation);
    }
    SUBCASE("negative smoothing") {
        CHECK(testerr::capture([&] { KnowledgeBase(schema, {}, {}, -0.5); }).code ==
              Errc::invalid_argument);
    }
    SUBCASE("feature kind is enforced on lookup") {
        std::map<std::string, KnowledgeBase::LabelTable> tables = {
            {"win", {{"ttl_class", {0.4, 0.3, 0.3}}}}};
        KnowledgeBase kb(schema, tables, {}, 1.0);
        CHECK(testerr::capture([&] { kb.software_probability("x", "ttl_class", "64"); }).code ==
              Errc::schema_violation);
    }
}

TEST_CASE("knowledge base JSON round-trips bit-for-bit") {
    testgen::Rng rng(77);
    FeatureSchema schema = testgen::random_schema(rng, 1);
    auto kb = testgen::random_kb(rng, schema, {"o0", "o1", "o2"}, {"s0"});
    auto back = kb_from_json(kb_to_json(kb));
    CHECK(back.alpha() == kb.alpha());
    CHECK(back.schema() == kb.schema());
    CHECK(back.os_tables() == kb.os_tables());
    CHECK(back.software_tables() == kb.software_tables());
}

TEST_CASE("knowledge base JSON loading re-validates the document") {
    const std::string good = kb_to_json(estimate_kb(
        {os_record("win", {{"ttl_class", "128"}})}, ttl_schema(), 1.0));
    CHECK_NOTHROW(kb_from_json(good));

    SUBCASE("unknown top-level key") {
        std::string doc = good;
        doc.insert(doc.find('{') + 1, "\"extra\": 1,");
        CHECK(testerr::capture([&] { kb_from_json(doc); }).code == Errc::format_error);
    }
    SUBCASE("row not covering the domain") {
        auto err = testerr::capture([] {
            kb_from_json(R"({"version":1,"alpha":1.0,
                "schema":{"os_features":["f"],"software_features":[],"domains":{"f":["a","b"]}},
                "os_tables":{"win":{"f":{"a":1.0}}},"software_tables":{}})");
        });
        CHECK(err.code == Errc::schema_violation);
        CHECK(err.mentions("cover"));
    }
    SUBCASE("bad row sum") {
        auto err = testerr::capture([] {
            kb_from_json(R"({"version":1,"alpha":1.0,
                "schema":{"os_features":["f"],"software_features":[],"domains":{"f":["a","b"]}},
                "os_tables":{"win":{"f":{"a":0.9,"b":0.2}}},"software_tables":{}})");
        });
        CHECK(err.code == Errc::schema_violation);
    }
    SUBCASE("zero cell despite smoothing") {
        auto err = testerr::capture([] {
            kb_from_json(R"({"version":1,"alpha":1.0,
                "schema":{"os_features":["f"],"software_features":[],"domains":{"f":["a","b"]}},
                "os_tables":{"win":{"f":{"a":1.0,"b":0.0}}},"software_tables":{}})");
        });
        CHECK(err.code == Errc::schema_violation);
    }
    SUBCASE("missing version") {
        CHECK(testerr::capture([] { kb_from_json("{}"); }).code == Errc::format_error);
    }
}

TEST_CASE("schema JSON round-trips") {
    testgen::Rng rng(88);
    FeatureSchema schema = testgen::random_schema(rng, 2);
    CHECK(schema_from_json(schema_to_json(schema)) == schema);
}

TEST_CASE("corpus CSV parses into typed records") {
    FeatureSchema schema = ttl_schema();
    schema.software_features = {"banner"};
    schema.domains["banner"] = {"apache", "nginx", "none"};

    SUBCASE("well-formed rows, empty cells mean absent") {
        const auto records = records_from_csv(
            "kind,label,src_addr,ttl_class,banner\n"
            "os,win,192.168.10.14,128,\n"
            "software,nginx,192.168.10.14,,nginx\n",
            schema);
        REQUIRE(records.size() == 2);
        CHECK(records[0].kind == LabelKind::os);
        CHECK(records[0].label == "win");
        CHECK(records[0].observation.values ==
              std::map<std::string, std::string>{{"ttl_class", "128"}});
        CHECK(records[1].kind == LabelKind::software);
        CHECK(records[1].observation.values ==
              std::map<std::string, std::string>{{"banner", "nginx"}});
    }

    SUBCASE("the shipped twenty-record corpus parses cleanly") {
        auto corpus_schema = schema_from_json(fixture("corpus_schema.json"));
        auto records = records_from_csv(fixture("corpus20.csv"), corpus_schema);
        CHECK(records.size() == 20);
        auto kb = estimate_kb(records, corpus_schema, 1.0);
        CHECK(kb.os_tables().size() == 3);
        CHECK(kb.software_tables().size() == 2);
    }

    SUBCASE("bad kind names the row") {
        auto err = testerr::capture([&] {
            records_from_csv("kind,label,src_addr,ttl_class\nhost,win,10.0.0.1,64\n", schema);
        });
        CHECK(err.threw());
        CHECK(err.mentions("row 1"));
    }
    SUBCASE("unknown column is fatal") {
        auto err = testerr::capture([&] {
            records_from_csv("kind,label,src_addr,ttl_class,bogus\n", schema);
        });
        CHECK(err.code == Errc::unknown_field);
    }
    SUBCASE("wrong cell count names the row") {
        auto err = testerr::capture([&] {
            records_from_csv("kind,label,src_addr,ttl_class\nos,win,10.0.0.1\n", schema);
        });
        CHECK(err.code == Errc::malformed_row);
        CHECK(err.mentions("row 1"));
    }
    SUBCASE("value outside the domain names the row") {
        auto err = testerr::capture([&] {
            records_from_csv(
                "kind,label,src_addr,ttl_class\nos,win,10.0.0.1,64\nos,win,10.0.0.1,65\n", schema);
        });
        CHECK(err.code == Errc::schema_violation);
        CHECK(err.mentions("row 2"));
    }
    SUBCASE("a row with no feature values is rejected") {
        auto err = testerr::capture([&] {
            records_from_csv("kind,label,src_addr,ttl_class\nos,win,10.0.0.1,\n", schema);
        });
        CHECK(err.code == Errc::malformed_row);
    }
    SUBCASE("wrong header order is rejected") {
        auto err = testerr::capture([&] {
            records_from_csv("label,kind,src_addr,ttl_class\nwin,os,10.0.0.1,64\n", schema);
        });
        CHECK(err.code == Errc::format_error);
    }
}
