#include <doctest.h>

#include <algorithm>

#include <json.hpp>

#include "attnsink/attention_store.hpp"
#include "attnsink/token_taxonomy.hpp"
#include "test_support.hpp"

using nlohmann::json;
using testsupport::CliResult;
using testsupport::TempDir;
using testsupport::run_cli;

TEST_CASE("cli: synth -> filter -> stats round trip") {
    TempDir dir;
    const std::string corpus = dir.file("c.atsf");
    CliResult r = run_cli("synth --out " + corpus +
                              " --sentences 12 --layers 2 --heads 2 --src-len 6:10 "
                              "--tgt-len 4:7 --seed 5",
                          dir);
    REQUIRE(r.exit_code == 0);
    CHECK(json::parse(r.stdout_text)["written"] == 12);

    const std::string filtered = dir.file("f.atsf");
    r = run_cli("filter " + corpus + " " + filtered, dir);
    REQUIRE(r.exit_code == 0);
    const json summary = json::parse(r.stdout_text);
    CHECK(summary["processed"] == 12);
    CHECK(summary["skipped"] == 0);
    CHECK(summary.contains("wall_time_s"));

    const std::string stats_json = dir.file("stats.json");
    const std::string stats_csv = dir.file("stats.csv");
    r = run_cli("stats " + filtered + " --json " + stats_json + " --csv " + stats_csv, dir);
    REQUIRE(r.exit_code == 0);
    const json doc = json::parse(testsupport::read_file(stats_json));
    CHECK(doc["header"]["filtered"] == true);
    CHECK(doc["corpus"]["mass_content"]["mean"] == 1.0);
    CHECK(doc["corpus"]["mass_content"]["count"] == 12);
    CHECK(doc["skipped"] == 0);

    // CSV: header line + one row per sentence.
    const std::string csv = testsupport::read_file(stats_csv);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("cli: identical runs give byte-identical reports") {
    TempDir dir;
    const std::string corpus = dir.file("c.atsf");
    REQUIRE(run_cli("synth --out " + corpus +
                        " --sentences 8 --layers 2 --heads 2 --src-len 6:9 --tgt-len 4:6 "
                        "--seed 3",
                    dir)
                .exit_code == 0);

    const std::string json_a = dir.file("a.json");
    const std::string json_b = dir.file("b.json");
    REQUIRE(run_cli("stats " + corpus + " --json " + json_a + " --per-sentence", dir).exit_code ==
            0);
    REQUIRE(run_cli("stats " + corpus + " --json " + json_b + " --per-sentence", dir).exit_code ==
            0);
    CHECK(testsupport::read_file(json_a) == testsupport::read_file(json_b));

    // Thread count must not change the bytes either.
    const std::string json_c = dir.file("c.json");
    REQUIRE(run_cli("stats " + corpus + " --json " + json_c + " --per-sentence --threads 1", dir)
                .exit_code == 0);
    CHECK(testsupport::read_file(json_a) == testsupport::read_file(json_c));
}

TEST_CASE("cli: compare --values reproduces the published table") {
    TempDir dir;
    const std::string out = dir.file("cmp.json");
    const CliResult r =
        run_cli("compare --values 36.7,70.7,28.7,53.8 --json " + out, dir);
    REQUIRE(r.exit_code == 0);
    CHECK(r.stdout_text.find("TF similarity") != std::string::npos);
    CHECK(r.stdout_text.find("+93%") != std::string::npos);
    CHECK(r.stdout_text.find("+87%") != std::string::npos);
    CHECK(r.stdout_text.find("8.0 pp") != std::string::npos);
    CHECK(r.stdout_text.find("16.9 pp") != std::string::npos);
    CHECK(r.stdout_text.find("23.9%") != std::string::npos);

    const json doc = json::parse(testsupport::read_file(out));
    CHECK(doc["gap_after_pp"].get<double>() == doctest::Approx(16.9));
    CHECK(doc["generation_divergence_pct"].get<double>() == doctest::Approx(23.9).epsilon(3e-3));
}

TEST_CASE("cli: compare file mode detects id mismatches with exit 3") {
    TempDir dir;
    const std::string a = dir.file("a.atsf");
    const std::string b = dir.file("b.atsf");
    REQUIRE(run_cli("synth --out " + a +
                        " --sentences 5 --layers 1 --heads 1 --src-len 6:8 --tgt-len 3:5 "
                        "--seed 1",
                    dir)
                .exit_code == 0);
    REQUIRE(run_cli("synth --out " + b +
                        " --sentences 6 --layers 1 --heads 1 --src-len 6:8 --tgt-len 3:5 "
                        "--seed 2",
                    dir)
                .exit_code == 0);
    CHECK(run_cli("compare " + a + " " + b, dir).exit_code == 3);

    // Equal id sets pass.
    const std::string c = dir.file("c.atsf");
    REQUIRE(run_cli("synth --out " + c +
                        " --sentences 5 --layers 1 --heads 1 --src-len 6:8 --tgt-len 3:5 "
                        "--seed 9",
                    dir)
                .exit_code == 0);
    CHECK(run_cli("compare " + a + " " + c, dir).exit_code == 0);
}

TEST_CASE("cli: corrupt magic exits 1 and leaves no output file") {
    TempDir dir;
    const std::string bogus = dir.file("bogus.atsf");
    testsupport::write_file(bogus, "JUNKJUNKJUNKJUNK");
    const std::string out = dir.file("out.atsf");
    CHECK(run_cli("filter " + bogus + " " + out, dir).exit_code == 1);
    CHECK(!std::filesystem::exists(out));
    CHECK(run_cli("stats " + bogus, dir).exit_code == 1);
    CHECK(run_cli("heatmap " + bogus + " --csv " + dir.file("h.csv"), dir).exit_code == 1);
}

TEST_CASE("cli: config errors exit 2") {
    TempDir dir;
    const std::string cfg = dir.file("bad.json");
    testsupport::write_file(cfg, R"({"punctuation_set": ["."]})");
    const std::string corpus = dir.file("c.atsf");
    REQUIRE(run_cli("synth --out " + corpus +
                        " --sentences 3 --layers 1 --heads 1 --src-len 6:8 --tgt-len 3:4 "
                        "--seed 1",
                    dir)
                .exit_code == 0);
    CHECK(run_cli("stats " + corpus + " --config " + cfg, dir).exit_code == 2);
    CHECK(run_cli("compare --values 1,2,3", dir).exit_code == 2);
    CHECK(run_cli("synth --out x.atsf --mode bogus", dir).exit_code == 2);
}

TEST_CASE("cli: synth honors a profile file") {
    TempDir dir;
    const std::string profile = dir.file("profile.json");
    testsupport::write_file(profile, R"({
        "special_mass": 0.781, "langtag_mass": 0.020,
        "punct_mass": 0.034, "content_mass": 0.165,
        "kernel_spread_sigma": 1.5, "noise_alpha": 0.0, "seed": 12
    })");
    const std::string corpus = dir.file("c.atsf");
    REQUIRE(run_cli("synth --out " + corpus + " --profile " + profile +
                        " --sentences 40 --layers 2 --heads 2 --src-len 10:16 --tgt-len 6:10",
                    dir)
                .exit_code == 0);
    const std::string out = dir.file("stats.json");
    REQUIRE(run_cli("stats " + corpus + " --json " + out, dir).exit_code == 0);
    const json doc = json::parse(testsupport::read_file(out));
    CHECK(doc["corpus"]["mass_special"]["mean"].get<double>() == doctest::Approx(0.781).epsilon(0.02));
    CHECK(doc["corpus"]["mass_content"]["mean"].get<double>() == doctest::Approx(0.165).epsilon(0.02));

    // Broken profile -> config error.
    const std::string bad = dir.file("bad-profile.json");
    testsupport::write_file(bad, R"({"special_mass": 2.0})");
    CHECK(run_cli("synth --out " + dir.file("x.atsf") + " --profile " + bad, dir).exit_code == 2);
}

TEST_CASE("cli: filter failing mid-stream leaves no output behind") {
    TempDir dir;
    const std::string corpus = dir.file("c.atsf");
    REQUIRE(run_cli("synth --out " + corpus +
                        " --sentences 10 --layers 2 --heads 2 --src-len 6:9 --tgt-len 4:6 "
                        "--seed 6",
                    dir)
                .exit_code == 0);
    std::string bytes = testsupport::read_file(corpus);
    bytes.resize(bytes.size() / 2);  // truncate mid-corpus
    const std::string truncated = dir.file("truncated.atsf");
    testsupport::write_file(truncated, bytes);

    const std::string out = dir.file("out.atsf");
    CHECK(run_cli("filter " + truncated + " " + out, dir).exit_code == 1);
    CHECK(!std::filesystem::exists(out));
    CHECK(!std::filesystem::exists(out + ".tmp"));
}

TEST_CASE("cli: classify emits classes and masks") {
    TempDir dir;
    const CliResult r = run_cli("classify eng_Latn ▁water . '</s>'", dir);
    REQUIRE(r.exit_code == 0);
    const json doc = json::parse(r.stdout_text);
    CHECK(doc["classes"] == json({"LanguageTag", "Content", "Punctuation", "Special"}));
    CHECK(doc["mask"] == json({0, 1, 0, 0}));
}

TEST_CASE("cli: ATTNSINK_CONFIG env var is the config fallback") {
    TempDir dir;
    const std::string cfg = dir.file("env.json");
    // A config whose special set also swallows "x" (plus the required four).
    testsupport::write_file(
        cfg, R"({"special_tokens": ["<s>", "</s>", "<pad>", "<unk>", "x"]})");
    const std::string out_file = dir.file("env-out.txt");
    const std::string cmd = std::string("ATTNSINK_CONFIG=") + cfg + " " + ATTNSINK_CLI_PATH +
                            " classify x > " + out_file + " 2>/dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const json doc = json::parse(testsupport::read_file(out_file));
    CHECK(doc["classes"] == json({"Special"}));
}

TEST_CASE("cli: heatmap writes both artifact kinds") {
    TempDir dir;
    const std::string corpus = dir.file("c.atsf");
    REQUIRE(run_cli("synth --out " + corpus +
                        " --sentences 6 --layers 2 --heads 2 --src-len 8:12 --tgt-len 5:8 "
                        "--seed 4",
                    dir)
                .exit_code == 0);
    const std::string ppm = dir.file("h.ppm");
    const std::string csv = dir.file("h.csv");
    const CliResult r =
        run_cli("heatmap " + corpus + " --grid 16 --ppm " + ppm + " --csv " + csv, dir);
    REQUIRE(r.exit_code == 0);
    CHECK(testsupport::read_file(ppm).substr(0, 9) == "P5\n16 16\n");
    const std::string csv_text = testsupport::read_file(csv);
    CHECK(std::count(csv_text.begin(), csv_text.end(), '\n') == 16);

    // Rejects a heatmap request with no outputs.
    CHECK(run_cli("heatmap " + corpus, dir).exit_code == 2);
}

TEST_CASE("cli: synth ground-truth sidecar is flagged and broadcastable") {
    TempDir dir;
    const std::string corpus = dir.file("c.atsf");
    const std::string truth = dir.file("t.atsf");
    REQUIRE(run_cli("synth --out " + corpus + " --ground-truth " + truth +
                        " --sentences 4 --layers 2 --heads 2 --src-len 6:8 --tgt-len 3:5 "
                        "--seed 8",
                    dir)
                .exit_code == 0);
    attnsink::CorpusHeader header;
    const auto truths = attnsink::read_corpus(truth, &header);
    CHECK(header.ground_truth);
    CHECK(header.n_layers == 1);
    CHECK(header.n_heads == 1);
    CHECK(truths.size() == 4);
}
