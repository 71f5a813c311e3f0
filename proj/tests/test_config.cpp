#include <doctest.h>

#include <charconv>
#include <fstream>

#include "prefex/config.hpp"
#include "test_support.hpp"

using namespace prefex;
using namespace prefex::testing;

namespace {


ExperimentConfig basic() {
    return parse_config(std::string(R"([experiment]
name = basic
master_seed = 11
seeds = 3
batch_size = 4
epochs = 5
buffer_capacity = 40
eval_prompts = 20
metrics_every = 5

[world]
dim = 6
candidates = 5
spread = 0.25
teacher_hidden = 12, 12
teacher_gain = 3

[dyadic]
tau_len = 4
label_mode = exact

[sweep]
learning_rate = 1e-3, 1e-2
tau = 0, 0.5

; agents inherit these
[defaults]
hidden = 8
ensemble_size = 4

[agent.p]
kind = point
explorer = boltzmann
tau = 0.3

[agent.ts]
kind = enn
explorer = double_ts
learning_rate = 0.1
)"));
}

std::size_t error_line(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigParseError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto cfg = basic();
    CHECK(cfg.name == "basic");
    CHECK(cfg.master_seed == 11);
    CHECK(cfg.seeds == 3);
    CHECK(cfg.run.batch_size == 4);
    CHECK(cfg.run.metrics_every == 5);
    CHECK(cfg.world.dim == 6);
    CHECK(cfg.world.spread == 0.25);
    CHECK(cfg.world.teacher_hidden == std::vector<std::size_t>{12, 12});
    CHECK(cfg.world.teacher_gain == 3.0);
    CHECK(cfg.run.dyadic.tau_len == 4);
    CHECK(cfg.run.dyadic.label_mode == DyadicLabelMode::exact);
    CHECK(cfg.sweep.learning_rate == std::vector<double>{1e-3, 1e-2});
    CHECK(cfg.sweep.tau == std::vector<double>{1e-8, 0.5});
    REQUIRE(cfg.agents.size() == 2);
    CHECK(cfg.agents[0].name == "p");
    CHECK(cfg.agents[0].tau == 0.3);
    CHECK(cfg.agents[0].hidden == std::vector<std::size_t>{8});
    CHECK(cfg.agents[1].explorer == Explorer::double_ts);
    CHECK(cfg.agents[1].ensemble_size == 4);
    CHECK(cfg.agents[1].training.learning_rate == 0.1);
    // untouched keys keep their defaults
    CHECK(cfg.agents[1].dts_attempts == AgentSpec{}.dts_attempts);
    CHECK(cfg.world.teacher_seed == WorldConfig{}.teacher_seed);
}

TEST_CASE("config round trip") {
    const auto cfg = basic();
    const auto text = serialize_config(cfg);
    const auto back = parse_config(text);
    CHECK(back == cfg);
    CHECK(serialize_config(back) == text);
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);

    auto other = cfg;
    other.agents[0].tau = 0.30000000000000004;
    CHECK(parse_config(serialize_config(other)) == other);
    CHECK(config_hash(other) != config_hash(cfg));

    for (double x : {0.1, 1e-300, 123456.789, 2.0 / 3.0, 5e-324}) {
        const auto s = format_double(x);
        double y = 0;
        std::from_chars(s.data(), s.data() + s.size(), y);
        CHECK(y == x);
    }
}

TEST_CASE("config errors carry line numbers") {
    CHECK(error_line("[experiment]\nname = x\nbogus = 1\n") == 3);
    CHECK(error_line("[experiment]\nseeds = 1\nseeds = 2\n") == 3);
    CHECK(error_line("[experiment]\n[experiment]\n") == 2);
    CHECK(error_line("[nonsense]\n") == 1);
    CHECK(error_line("name = x\n") == 1);
    CHECK(error_line("[world]\n\ndim = abc\n") == 3);
    CHECK(error_line("[world]\nspread = nan\n") == 2);
    CHECK(error_line("[experiment]\nseeds = -1\n") == 2);
    CHECK(error_line("[experiment\n") == 1);
    CHECK(error_line("[experiment]\nno equals sign\n") == 2);
    CHECK(error_line("[agent.a]\nkind = point\nexplorer = infomax\n") == 1);
    CHECK(error_line("[agent.a]\nkind = tree\n") == 2);

    CHECK_THROWS_AS(parse_config("[experiment]\nname = x\n"), ConfigError);  // no agents
    CHECK_THROWS_AS(parse_config("[experiment]\nseeds = 0\n[agent.a]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[sweep]\nlearning_rate = 0\n[agent.a]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[world]\ntrain_seed = 4\neval_seed = 4\n[agent.a]\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/prefex.ini"), ConfigError);
}

TEST_CASE("load_config prefixes errors with the file") {
    TempDir dir("config");
    const auto path = (dir.path() / "bad.ini").string();
    std::ofstream(path) << "[experiment]\nname = x\n\nfoo = 1\n";
    try {
        load_config(path);
        FAIL("expected an error");
    } catch (const ConfigParseError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()) == path + ":4: unknown key 'foo' in [experiment]");
    }
    std::ofstream(path) << serialize_config(basic());
    CHECK(load_config(path) == basic());
}

TEST_CASE("shipped configs parse") {
    for (const char* name : {"smoke.ini", "fig2.ini", "ensemble_sweep.ini", "tau_sweep.ini"}) {
        CAPTURE(name);
        const auto cfg = load_config(std::string(PREFEX_CONFIG_DIR) + "/" + name);
        CHECK(parse_config(serialize_config(cfg)) == cfg);
    }
}
