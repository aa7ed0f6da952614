#include <catch2/catch_amalgamated.hpp>

#include <factground/record.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

using namespace factground;
using nlohmann::json;

namespace {

Sample make_sample() {
    Sample s;
    s.image_id = "img-0001";
    s.image_ref = "images/img-0001.png";
    s.findings.push_back(
        {parse_ffl("disease|yes|edema|left lung base"), BBox{0.14, 0.13, 0.72, 0.56}, 1,
         Provenance::original});
    s.findings.push_back({parse_ffl("disease|no|edema|left lung base"), kZeroBox, 0,
                          Provenance::reversal});
    s.findings.push_back(
        {parse_ffl("disease|yes|edema|right lung apex"), BBox{0.85, 0.74, 0.10, 0.21}, 0,
         Provenance::relocate});
    return s;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("factground-rec-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace

TEST_CASE("box JSON round-trip") {
    const BBox b{0.14, 0.13, 0.72, 0.56};
    const json j = box_to_json(b);
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 4);
    const BBox back = box_from_json(j);
    CHECK(back == b);

    CHECK_THROWS_AS(box_from_json(json::array({0.1, 0.2, 0.3})), SchemaError);
    CHECK_THROWS_AS(box_from_json(json{{"x", 0.1}}), SchemaError);
    CHECK_THROWS_AS(box_from_json(json::array({0.5, 0.5, 0.6, 0.1})), SchemaError);
    CHECK_THROWS_AS(box_from_json(json::array({-0.1, 0.0, 0.2, 0.2})), SchemaError);
}

TEST_CASE("finding JSON round-trip and defaults") {
    GroundedFinding g{parse_ffl("disease|yes|edema"), BBox{0.1, 0.2, 0.3, 0.4}, 1,
                      Provenance::original};
    const json j = finding_to_json(g);
    CHECK(j.at("ffl") == "disease|yes|edema");
    CHECK(j.at("e") == 1);
    CHECK(j.at("provenance") == "original");
    CHECK(finding_from_json(j) == g);

    // provenance is optional on input and defaults to original
    json no_prov = j;
    no_prov.erase("provenance");
    CHECK(finding_from_json(no_prov) == g);

    json bad_e = j;
    bad_e["e"] = 2;
    CHECK_THROWS_AS(finding_from_json(bad_e), SchemaError);
    json missing = j;
    missing.erase("box");
    CHECK_THROWS_AS(finding_from_json(missing), SchemaError);
    CHECK_THROWS_AS(provenance_from_string("remix"), SchemaError);
}

TEST_CASE("sample JSON round-trip") {
    const Sample s = make_sample();
    const json j = sample_to_json(s);
    const Sample back = sample_from_json(j);
    CHECK(back.image_id == s.image_id);
    CHECK(back.image_ref == s.image_ref);
    REQUIRE(back.findings.size() == s.findings.size());
    for (std::size_t i = 0; i < s.findings.size(); ++i) CHECK(back.findings[i] == s.findings[i]);

    CHECK(s.reals().size() == 1);
    CHECK(s.fakes().size() == 2);

    json missing = j;
    missing.erase("image_ref");
    CHECK_THROWS_AS(sample_from_json(missing), SchemaError);
    json bad = j;
    bad["findings"] = "nope";
    CHECK_THROWS_AS(sample_from_json(bad), SchemaError);
}

TEST_CASE("sample invariants") {
    SECTION("well-formed mixed sample passes") {
        CHECK_NOTHROW(check_sample_invariants(make_sample()));
    }
    SECTION("reversal must be a zero-box fake") {
        Sample s = make_sample();
        s.findings[1].box = BBox{0.1, 0.1, 0.2, 0.2};
        CHECK_THROWS_AS(check_sample_invariants(s), SchemaError);
    }
    SECTION("real records need a positive-area box") {
        Sample s = make_sample();
        s.findings[0].box = kZeroBox;
        CHECK_THROWS_AS(check_sample_invariants(s), SchemaError);
    }
    SECTION("real records keep original provenance") {
        Sample s = make_sample();
        s.findings[2].veracity = 1;
        CHECK_THROWS_AS(check_sample_invariants(s), SchemaError);
    }
    SECTION("fake records must declare how they were made") {
        Sample s = make_sample();
        s.findings[2].provenance = Provenance::original;
        CHECK_THROWS_AS(check_sample_invariants(s), SchemaError);
    }
    SECTION("duplicate (ffl, box) pairs rejected") {
        Sample s = make_sample();
        s.findings.push_back(s.findings[2]);
        CHECK_THROWS_AS(check_sample_invariants(s), SchemaError);
    }
    SECTION("gold mode rejects any fake") {
        Sample s = make_sample();
        CHECK_THROWS_AS(check_sample_invariants(s, /*gold_only=*/true), SchemaError);
        s.findings.resize(1);
        CHECK_NOTHROW(check_sample_invariants(s, /*gold_only=*/true));
    }
}

TEST_CASE("corpus file round-trip") {
    TempDir tmp;
    const auto path = (tmp.path / "corpus.jsonl").string();
    std::vector<Sample> corpus{make_sample(), make_sample()};
    corpus[1].image_id = "img-0002";
    write_corpus(path, corpus);

    const auto back = read_corpus(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].image_id == "img-0001");
    CHECK(back[1].image_id == "img-0002");
    CHECK(back[0].findings == corpus[0].findings);

    SECTION("blank lines are skipped") {
        std::ofstream app(path, std::ios::app);
        app << "\n\n";
        app.close();
        CHECK(read_corpus(path).size() == 2);
    }
    SECTION("invalid JSON reports file and line") {
        std::ofstream app(path, std::ios::app);
        app << "{not json\n";
        app.close();
        try {
            read_corpus(path);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            const std::string msg = e.what();
            CHECK(msg.find(":3:") != std::string::npos);
            CHECK(msg.find("invalid JSON") != std::string::npos);
        }
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(read_corpus((tmp.path / "nope.jsonl").string()), SchemaError);
    }
    SECTION("gold mode enforced at read time") {
        CHECK_THROWS_AS(read_corpus(path, /*gold_only=*/true), SchemaError);
    }
}

TEST_CASE("image references resolve relative to their corpus file") {
    CHECK(resolve_image_ref("/data/run1/gold.jsonl", "images/i1.png") ==
          "/data/run1/images/i1.png");
    CHECK(resolve_image_ref("/data/run1/gold.jsonl", "/abs/i1.png") == "/abs/i1.png");
    CHECK(resolve_image_ref("gold.jsonl", "images/i1.png") == "images/i1.png");
}
