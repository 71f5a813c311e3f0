#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "prefex/config.hpp"
#include "prefex/errors.hpp"
#include "prefex/harness.hpp"
#include "test_support.hpp"

using namespace prefex;
using namespace prefex::testing;
namespace fs = std::filesystem;

namespace {

ExperimentConfig smoke() { return load_config(std::string(PREFEX_CONFIG_DIR) + "/smoke.ini"); }

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

void write(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("smoke run") {
    TempDir dir("smoke");
    const auto cfg = smoke();
    const auto summary = run_experiment(cfg, dir.path(), false, 1);
    CHECK(summary.ok());
    REQUIRE(summary.jobs.size() == 2);
    CHECK(load_config((dir.path() / "config.ini").string()) == cfg);
    CHECK(fs::exists(dir.path() / "teacher.json"));
    CHECK_FALSE(fs::exists(dir.path() / "summary.csv"));
    const auto hash = config_hash(cfg);
    for (const char* agent : {"passive", "double_ts"}) {
        const fs::path seed_dir = dir.path() / agent / "base" / "seed_0";
        const auto recs = read_records(seed_dir / "records.ndjson");
        REQUIRE(recs.size() == 2);
        CHECK(recs[1].epoch == 2);
        CHECK(recs[1].queries == 4);
        std::istringstream lines(slurp(seed_dir / "records.ndjson"));
        std::string line;
        while (std::getline(lines, line)) CHECK(nlohmann::json::parse(line).at("config_hash") == hash);
        const auto meta = nlohmann::json::parse(slurp(seed_dir / "meta.json"));
        CHECK(meta.at("status") == "ok");
        CHECK(meta.at("config_hash") == hash);
        CHECK(meta.at("last_recorded_epoch") == 2);
        CHECK(meta.at("queries") == 4);
        CHECK(fs::exists(seed_dir / "checkpoint.json"));
    }
}

TEST_CASE("runs are byte-reproducible, also across job counts") {
    TempDir a("repro_a"), b("repro_b");
    auto cfg = smoke();
    cfg.seeds = 2;
    run_experiment(cfg, a.path(), false, 1);
    run_experiment(cfg, b.path(), false, 3);
    for (const char* agent : {"passive", "double_ts"})
        for (const char* seed : {"seed_0", "seed_1"}) {
            const auto rel = fs::path(agent) / "base" / seed;
            CHECK(slurp(a.path() / rel / "records.ndjson") == slurp(b.path() / rel / "records.ndjson"));
            CHECK(slurp(a.path() / rel / "checkpoint.json") == slurp(b.path() / rel / "checkpoint.json"));
        }
    // seeds differ from each other
    CHECK(slurp(a.path() / "passive/base/seed_0/checkpoint.json") !=
          slurp(a.path() / "passive/base/seed_1/checkpoint.json"));
}

TEST_CASE("seed derivation") {
    CHECK(cell_seed(1, "a", "base", 0) == cell_seed(1, "a", "base", 0));
    CHECK(cell_seed(1, "a", "base", 0) != cell_seed(1, "a", "base", 1));
    CHECK(cell_seed(1, "a", "base", 0) != cell_seed(1, "b", "base", 0));
    CHECK(cell_seed(1, "a", "base", 0) != cell_seed(2, "a", "base", 0));
    CHECK(cell_seed(1, "a", "lr=0.1", 0) != cell_seed(1, "a", "lr=0.2", 0));
    WorldConfig w;
    const auto w0 = seed_world_config(w, 0);
    const auto w1 = seed_world_config(w, 1);
    CHECK(w0.train_seed != w1.train_seed);
    CHECK(w0.teacher_seed == w.teacher_seed);
    CHECK(w0.eval_seed == w.eval_seed);
    // no collisions across a realistic number of cells
    std::map<std::uint64_t, int> seen;
    for (const char* agent : {"passive", "boltzmann", "double_ts"})
        for (const char* cell : {"base", "lr=0.001", "lr=0.01", "S=1", "S=3"})
            for (std::size_t k = 0; k < 20; ++k) ++seen[cell_seed(7, agent, cell, k)];
    CHECK(seen.size() == 3 * 5 * 20);
}

TEST_CASE("cell expansion") {
    auto cfg = smoke();
    CHECK(expand_cells(cfg, false).size() == 2);
    CHECK(expand_cells(cfg, true).size() == 2);
    CHECK(expand_cells(cfg, true)[0].label == "base");

    cfg.sweep.learning_rate = {1e-3, 1e-2};
    cfg.sweep.ensemble_size = {2, 4};
    cfg.sweep.tau = {0.5};
    const auto cells = expand_cells(cfg, true);
    // passive: 2 learning rates; double TS: 2 x 2
    REQUIRE(cells.size() == 6);
    CHECK(cells[0].label == "lr=0.001");
    CHECK(cells[0].agent.training.learning_rate == 1e-3);
    CHECK(cells[2].label == "lr=0.001_S=2");
    CHECK(cells[3].label == "lr=0.001_S=4");
    CHECK(cells[3].agent.ensemble_size == 4);
    CHECK(cells[5].label == "lr=0.01_S=4");
    CHECK(cells[5].agent.training.learning_rate == 1e-2);
    // tau does not apply to either agent
    for (const auto& c : cells) CHECK(c.agent.tau == cfg.agents[0].tau);
}

TEST_CASE("sweeps") {
    auto cfg = smoke();
    SUBCASE("2x2 grid") {
        TempDir dir("sweep");
        cfg.agents.erase(cfg.agents.begin());  // double TS only
        cfg.sweep.learning_rate = {1e-3, 1e-2};
        cfg.sweep.ensemble_size = {2, 3};
        const auto summary = run_experiment(cfg, dir.path(), true, 2);
        CHECK(summary.ok());
        CHECK(summary.jobs.size() == 4);
        std::size_t artifacts = 0;
        for (const auto& e : fs::recursive_directory_iterator(dir.path()))
            if (e.path().filename() == "records.ndjson") ++artifacts;
        CHECK(artifacts == 4);
        const auto rows = csv_rows(slurp(dir.path() / "summary.csv"));
        REQUIRE(rows.size() == 5);
        CHECK(rows[0][0] == "agent");
        std::vector<double> wins;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            CHECK(rows[r][2] == "1");
            CHECK(rows[r][6] == std::to_string(r));
            wins.push_back(std::stod(rows[r][4]));
        }
        for (std::size_t i = 1; i < wins.size(); ++i) CHECK(wins[i] <= wins[i - 1]);
    }
    SUBCASE("a one-cell grid is a run") {
        TempDir a("one_cell_run"), b("one_cell_sweep");
        cfg.sweep.learning_rate = {cfg.agents[0].training.learning_rate};
        run_experiment(cfg, a.path(), false, 1);
        run_experiment(cfg, b.path(), true, 1);
        const auto rel = fs::path("passive") / "base" / "seed_0" / "records.ndjson";
        CHECK(slurp(a.path() / rel) == slurp(b.path() / rel));
        CHECK(fs::exists(b.path() / "summary.csv"));
    }
}

TEST_CASE("failing jobs do not stop the others") {
    TempDir dir("isolation");
    write(dir.path() / "passive", "blocks the agent directory\n");
    const auto summary = run_experiment(smoke(), dir.path(), false, 1);
    CHECK_FALSE(summary.ok());
    REQUIRE(summary.jobs.size() == 2);
    CHECK_FALSE(summary.jobs[0].ok);
    CHECK_FALSE(summary.jobs[0].error.empty());
    CHECK(summary.jobs[1].ok);
    CHECK(read_records(dir.path() / "double_ts/base/seed_0/records.ndjson").size() == 2);
}

TEST_CASE("record files") {
    TempDir dir("records");
    EpochRecord r;
    r.epoch = 3;
    r.queries = 48;
    r.win_rate = 0.6123456789012345;
    r.dyadic_joint_nll = 0.7;
    r.fallback_count = 2;
    const auto line = record_line(r, "abc");
    CHECK(line.rfind("{\"config_hash\":\"abc\",\"epoch\":3,", 0) == 0);
    CHECK(line.find("marginal_nll\"") == std::string::npos);
    EpochRecord r2 = r;
    r2.epoch = 4;
    write(dir.path() / "r.ndjson", line + record_line(r2, "abc") + "{\"config_hash\":\"abc\",\"ep");
    const auto back = read_records(dir.path() / "r.ndjson");
    REQUIRE(back.size() == 2);
    CHECK(back[0].win_rate == r.win_rate);
    CHECK(back[0].dyadic_joint_nll == 0.7);
    CHECK_FALSE(back[0].marginal_nll.has_value());
    CHECK(back[0].fallback_count == 2);
    CHECK(back[1].epoch == 4);
}

TEST_CASE("reports") {
    TempDir dir("report");
    auto cfg = smoke();
    cfg.seeds = 3;
    const auto run_dir = dir.path() / "run";
    run_experiment(cfg, run_dir, false, 1);

    SUBCASE("curves: one row per agent and epoch with the sample standard error") {
        const auto rows = csv_rows(report({run_dir}, ReportMode::curves));
        REQUIRE(rows.size() == 5);
        CHECK(rows[0] == std::vector<std::string>{"agent", "cell", "epoch", "queries", "n", "mean_win_rate",
                                                  "se_win_rate"});
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& row = rows[i];
            std::vector<double> w;
            for (int k = 0; k < 3; ++k) {
                const auto recs =
                    read_records(run_dir / row[0] / row[1] / ("seed_" + std::to_string(k)) / "records.ndjson");
                w.push_back(recs.at(std::stoul(row[2]) - 1).win_rate);
            }
            const double m = (w[0] + w[1] + w[2]) / 3;
            const double var = ((w[0] - m) * (w[0] - m) + (w[1] - m) * (w[1] - m) + (w[2] - m) * (w[2] - m)) / 2;
            CHECK(row[4] == "3");
            CHECK(std::stod(row[5]) == doctest::Approx(m).epsilon(1e-12));
            CHECK(std::stod(row[6]) == doctest::Approx(std::sqrt(var / 3)).epsilon(1e-9));
        }
    }
    SUBCASE("hand-made records") {
        const auto fake = dir.path() / "fake";
        cfg.seeds = 2;
        fs::create_directories(fake);
        write(fake / "config.ini", serialize_config(cfg));
        const double w[2][2] = {{0.5, 0.6}, {0.7, 0.9}};
        for (int k = 0; k < 2; ++k) {
            std::string text;
            for (int e = 0; e < 2; ++e) {
                EpochRecord r;
                r.epoch = e + 1;
                r.queries = 2 * (e + 1);
                r.win_rate = w[k][e];
                text += record_line(r, "x");
            }
            write(fake / "passive/base" / ("seed_" + std::to_string(k)) / "records.ndjson", text);
        }
        const auto rows = csv_rows(report({fake}, ReportMode::curves));
        REQUIRE(rows.size() == 3);
        CHECK(std::stod(rows[1][5]) == doctest::Approx(0.6));
        CHECK(std::stod(rows[1][6]) == doctest::Approx(0.1));   // std 0.1414 / sqrt 2
        CHECK(std::stod(rows[2][5]) == doctest::Approx(0.75));
        CHECK(std::stod(rows[2][6]) == doctest::Approx(0.15));  // std 0.2121 / sqrt 2
    }
    SUBCASE("match table of a run against itself has unit ratios") {
        const auto rows = csv_rows(report({run_dir, run_dir}, ReportMode::match_table));
        REQUIRE(rows.size() > 1);
        CHECK(rows[0] == std::vector<std::string>{"reference", "agent", "cell", "ref_queries", "ref_win_rate",
                                                  "alt_queries", "ratio"});
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i][1] == "double_ts") CHECK(std::stod(rows[i][6]) == doctest::Approx(1.0));
    }
    SUBCASE("runs from different experiments are refused") {
        const auto other_dir = dir.path() / "other";
        auto other = cfg;
        other.run.epochs = 3;
        run_experiment(other, other_dir, false, 1);
        CHECK_THROWS_AS(report({run_dir, other_dir}, ReportMode::curves), ConfigError);
        // a different master seed is pooling, not a mismatch
        auto reseeded = cfg;
        reseeded.master_seed = 99;
        const auto reseeded_dir = dir.path() / "reseeded";
        run_experiment(reseeded, reseeded_dir, false, 1);
        const auto rows = csv_rows(report({run_dir, reseeded_dir}, ReportMode::curves));
        CHECK(rows[1][4] == "6");
    }
    CHECK(parse_report_mode("curves") == ReportMode::curves);
    CHECK_THROWS_AS(parse_report_mode("plots"), ConfigError);
}
