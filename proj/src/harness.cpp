#include "prefex/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "prefex/checkpoint.hpp"
#include "prefex/errors.hpp"
#include "prefex/rng.hpp"

namespace fs = std::filesystem;

namespace prefex {

using ojson = nlohmann::ordered_json;

bool RunSummary::ok() const {
    return std::all_of(jobs.begin(), jobs.end(), [](const JobOutcome& j) { return j.ok; });
}

namespace {

struct Dim {
    std::string key;
    std::vector<std::string> labels;
    std::vector<std::function<void(AgentSpec&)>> setters;
};

template <class T, class F>
Dim make_dim(std::string key, const std::vector<T>& values, F set) {
    Dim d{std::move(key), {}, {}};
    for (const T& v : values) {
        if constexpr (std::is_floating_point_v<T>)
            d.labels.push_back(format_double(v));
        else
            d.labels.push_back(std::to_string(v));
        d.setters.push_back([set, v](AgentSpec& a) { set(a, v); });
    }
    return d;
}

}  // namespace

std::vector<Cell> expand_cells(const ExperimentConfig& cfg, bool sweep) {
    std::vector<Cell> cells;
    const auto& s = cfg.sweep;
    for (const auto& agent : cfg.agents) {
        std::vector<Dim> dims;
        if (sweep) {
            if (!s.learning_rate.empty())
                dims.push_back(make_dim("lr", s.learning_rate, [](AgentSpec& a, double v) { a.training.learning_rate = v; }));
            if (!s.lambda_prime.empty())
                dims.push_back(make_dim("lam", s.lambda_prime, [](AgentSpec& a, double v) { a.training.lambda_prime = v; }));
            if (!s.sgd_steps.empty())
                dims.push_back(make_dim("steps", s.sgd_steps,
                                        [](AgentSpec& a, std::size_t v) { a.training.sgd_steps_per_epoch = v; }));
            if (!s.output_scale.empty())
                dims.push_back(make_dim("scale", s.output_scale, [](AgentSpec& a, double v) { a.output_scale = v; }));
            const bool boltz = agent.explorer == Explorer::boltzmann || agent.explorer == Explorer::greedy_boltzmann;
            if (boltz && !s.tau.empty())
                dims.push_back(make_dim("tau", s.tau, [](AgentSpec& a, double v) { a.tau = v; }));
            if (agent.kind == ModelKind::enn && !s.ensemble_size.empty())
                dims.push_back(make_dim("S", s.ensemble_size, [](AgentSpec& a, std::size_t v) { a.ensemble_size = v; }));
        }
        if (dims.empty()) {
            cells.push_back({agent, "base"});
            continue;
        }
        // Odometer over the grid; the last dimension varies fastest.
        std::vector<std::size_t> idx(dims.size(), 0);
        bool done = false;
        while (!done) {
            Cell c{agent, {}};
            for (std::size_t d = 0; d < dims.size(); ++d) {
                dims[d].setters[idx[d]](c.agent);
                if (dims[d].labels.size() < 2) continue;  // a fixed override, not a grid axis
                if (!c.label.empty()) c.label += '_';
                c.label += dims[d].key + "=" + dims[d].labels[idx[d]];
            }
            if (c.label.empty()) c.label = "base";
            cells.push_back(std::move(c));
            std::size_t d = dims.size();
            while (true) {
                if (d == 0) {
                    done = true;
                    break;
                }
                --d;
                if (++idx[d] < dims[d].labels.size()) break;
                idx[d] = 0;
            }
        }
    }
    return cells;
}

std::uint64_t cell_seed(std::uint64_t master_seed, std::string_view agent, std::string_view cell,
                        std::size_t seed_index) {
    return derive_seed({master_seed, stream_tag(agent), stream_tag(cell), seed_index});
}

WorldConfig seed_world_config(const WorldConfig& base, std::size_t seed_index) {
    WorldConfig w = base;
    w.train_seed = derive_seed({base.train_seed, stream_tag("seed"), seed_index});
    if (w.train_seed == w.eval_seed) ++w.train_seed;
    return w;
}

std::string record_line(const EpochRecord& r, std::string_view config_hash) {
    ojson j;
    j["config_hash"] = config_hash;
    j["epoch"] = r.epoch;
    j["queries"] = r.queries;
    j["win_rate"] = r.win_rate;
    if (r.marginal_nll) j["marginal_nll"] = *r.marginal_nll;
    if (r.dyadic_joint_nll) j["dyadic_joint_nll"] = *r.dyadic_joint_nll;
    j["zero_variance_count"] = r.zero_variance_count;
    j["fallback_count"] = r.fallback_count;
    j["nll_clamp_events"] = r.nll_clamp_events;
    return j.dump() + "\n";
}

std::vector<EpochRecord> read_records(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open records file '" + path.string() + "'");
    std::vector<EpochRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (in.eof()) break;  // no trailing newline: a truncated write
        if (line.empty()) continue;
        const auto j = ojson::parse(line);
        EpochRecord r;
        r.epoch = j.at("epoch").get<std::size_t>();
        r.queries = j.at("queries").get<std::uint64_t>();
        r.win_rate = j.at("win_rate").get<double>();
        if (j.contains("marginal_nll")) r.marginal_nll = j["marginal_nll"].get<double>();
        if (j.contains("dyadic_joint_nll")) r.dyadic_joint_nll = j["dyadic_joint_nll"].get<double>();
        r.zero_variance_count = j.value("zero_variance_count", std::size_t{0});
        r.fallback_count = j.value("fallback_count", std::size_t{0});
        r.nll_clamp_events = j.value("nll_clamp_events", std::size_t{0});
        out.push_back(r);
    }
    return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

struct Job {
    const Cell* cell;
    std::size_t seed_index;
};

JobOutcome run_job(const ExperimentConfig& cfg, const Job& job, const MlpParams& teacher, const fs::path& dir,
                   const std::string& hash) {
    JobOutcome outcome{job.cell->agent.name, job.cell->label, job.seed_index, false, {}, {}};
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = cell_seed(cfg.master_seed, job.cell->agent.name, job.cell->label, job.seed_index);
    std::size_t epochs_done = 0;
    std::uint64_t queries = 0;
    try {
        fs::create_directories(dir);
        std::ofstream records(dir / "records.ndjson", std::ios::binary | std::ios::trunc);
        if (!records) throw std::runtime_error("cannot write records in '" + dir.string() + "'");
        const World world(seed_world_config(cfg.world, job.seed_index), teacher);
        AgentState final_state = make_agent_state(job.cell->agent, cfg.world.dim, cfg.run.buffer_capacity, seed);
        outcome.records = run_learning(
            job.cell->agent, world, cfg.run, seed,
            [&](const EpochRecord& r) {
                records << record_line(r, hash);
                records.flush();
                epochs_done = r.epoch;
                queries = r.queries;
            },
            &final_state);
        save_checkpoint(final_state, (dir / "checkpoint.json").string());
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.error = e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ojson meta;
    meta["config_hash"] = hash;
    meta["agent"] = outcome.agent;
    meta["cell"] = outcome.cell;
    meta["seed_index"] = outcome.seed_index;
    meta["seed"] = seed;
    meta["status"] = outcome.ok ? "ok" : "failed";
    if (!outcome.ok) meta["error"] = outcome.error;
    meta["last_recorded_epoch"] = epochs_done;
    meta["queries"] = queries;
    meta["sgd_steps"] = static_cast<std::uint64_t>(epochs_done) * job.cell->agent.training.sgd_steps_per_epoch;
    meta["wall_seconds"] = wall;
    try {
        write_text(dir / "meta.json", meta.dump(1) + "\n");
    } catch (const std::exception& e) {
        if (outcome.ok) {
            outcome.ok = false;
            outcome.error = e.what();
        }
    }
    return outcome;
}

struct CellStats {
    std::string agent;
    std::string cell;
    std::size_t seeds_ok = 0;
    std::uint64_t queries = 0;
    double win_rate = 0.0;
    std::optional<double> dyadic;
};

std::string summary_csv(const std::vector<Cell>& cells, const std::vector<JobOutcome>& outcomes) {
    std::vector<CellStats> stats;
    for (const auto& c : cells) {
        CellStats s{c.agent.name, c.label, 0, 0, 0.0, std::nullopt};
        double nll_sum = 0.0;
        std::size_t nll_n = 0;
        for (const auto& o : outcomes) {
            if (!o.ok || o.agent != s.agent || o.cell != s.cell || o.records.empty()) continue;
            const auto& last = o.records.back();
            ++s.seeds_ok;
            s.queries = last.queries;
            s.win_rate += last.win_rate;
            if (last.dyadic_joint_nll) {
                nll_sum += *last.dyadic_joint_nll;
                ++nll_n;
            }
        }
        if (s.seeds_ok) s.win_rate /= static_cast<double>(s.seeds_ok);
        if (nll_n) s.dyadic = nll_sum / static_cast<double>(nll_n);
        stats.push_back(s);
    }
    std::vector<std::size_t> by_win(stats.size());
    for (std::size_t i = 0; i < by_win.size(); ++i) by_win[i] = i;
    std::stable_sort(by_win.begin(), by_win.end(), [&](std::size_t a, std::size_t b) {
        if ((stats[a].seeds_ok > 0) != (stats[b].seeds_ok > 0)) return stats[a].seeds_ok > 0;
        return stats[a].win_rate > stats[b].win_rate;
    });
    std::vector<std::size_t> by_nll;
    for (std::size_t i = 0; i < stats.size(); ++i)
        if (stats[i].dyadic) by_nll.push_back(i);
    std::stable_sort(by_nll.begin(), by_nll.end(),
                     [&](std::size_t a, std::size_t b) { return *stats[a].dyadic < *stats[b].dyadic; });
    std::vector<std::size_t> nll_rank(stats.size(), 0);
    for (std::size_t r = 0; r < by_nll.size(); ++r) nll_rank[by_nll[r]] = r + 1;

    std::string out = "agent,cell,seeds_ok,final_queries,final_win_rate,final_dyadic_nll,rank_win_rate,rank_dyadic_nll\n";
    for (std::size_t r = 0; r < by_win.size(); ++r) {
        const auto& s = stats[by_win[r]];
        out += s.agent + "," + s.cell + "," + std::to_string(s.seeds_ok) + "," + std::to_string(s.queries) + ",";
        out += s.seeds_ok ? format_double(s.win_rate) : "";
        out += ",";
        out += s.dyadic ? format_double(*s.dyadic) : "";
        out += "," + std::to_string(r + 1) + ",";
        out += nll_rank[by_win[r]] ? std::to_string(nll_rank[by_win[r]]) : "";
        out += "\n";
    }
    return out;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out, bool sweep, std::size_t jobs) {
    cfg.validate();
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    const std::string hash = config_hash(cfg);
    fs::create_directories(out);
    write_text(out / "config.ini", serialize_config(cfg));
    const World base_world(cfg.world);
    save_teacher(base_world, (out / "teacher.json").string());

    const auto cells = expand_cells(cfg, sweep);
    std::vector<Job> job_list;
    for (const auto& c : cells)
        for (std::size_t k = 0; k < cfg.seeds; ++k) job_list.push_back({&c, k});

    RunSummary summary;
    summary.jobs.resize(job_list.size());
    const auto n = static_cast<std::ptrdiff_t>(job_list.size());
    const int threads = static_cast<int>(std::min<std::size_t>(jobs, job_list.size()));
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const Job& job = job_list[static_cast<std::size_t>(i)];
        const fs::path dir = out / job.cell->agent.name / job.cell->label / ("seed_" + std::to_string(job.seed_index));
        summary.jobs[static_cast<std::size_t>(i)] = run_job(cfg, job, base_world.teacher(), dir, hash);
    }
    if (sweep) write_text(out / "summary.csv", summary_csv(cells, summary.jobs));
    return summary;
}

ReportMode parse_report_mode(std::string_view name) {
    if (name == "curves") return ReportMode::curves;
    if (name == "match_table") return ReportMode::match_table;
    throw ConfigError("unknown report mode '" + std::string(name) + "' (expected curves or match_table)");
}

namespace {

// Text that must agree between run dirs for their seeds to be pooled.
std::string comparable_text(ExperimentConfig cfg) {
    cfg.master_seed = 0;
    cfg.seeds = 1;
    cfg.jobs = 1;
    return serialize_config(cfg);
}

std::string first_difference(const std::string& a, const std::string& b) {
    std::istringstream sa(a), sb(b);
    std::string la, lb;
    while (true) {
        const bool ga = static_cast<bool>(std::getline(sa, la));
        const bool gb = static_cast<bool>(std::getline(sb, lb));
        if (!ga && !gb) return {};
        if (!ga) la = "<missing>";
        if (!gb) lb = "<missing>";
        if (la != lb) return "'" + la + "' vs '" + lb + "'";
    }
}

struct SeriesPoint {
    std::uint64_t queries = 0;
    std::vector<double> win_rates;
};

// agent -> cell -> epoch -> samples
using Pooled = std::map<std::string, std::map<std::string, std::map<std::size_t, SeriesPoint>>>;

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

std::string report(const std::vector<fs::path>& run_dirs, ReportMode mode) {
    if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    std::optional<ExperimentConfig> ref_cfg;
    std::string ref_text;
    Pooled pooled;
    for (const auto& dir : run_dirs) {
        const auto cfg = load_config((dir / "config.ini").string());
        const auto text = comparable_text(cfg);
        if (!ref_cfg) {
            ref_cfg = cfg;
            ref_text = text;
        } else if (text != ref_text) {
            throw ConfigError("run directories come from different experiments (" + run_dirs.front().string() +
                              " vs " + dir.string() + "): first difference " + first_difference(ref_text, text));
        }
        for (const auto& agent : cfg.agents) {
            const fs::path agent_dir = dir / agent.name;
            if (!fs::is_directory(agent_dir)) continue;
            std::vector<fs::path> cell_dirs;
            for (const auto& e : fs::directory_iterator(agent_dir))
                if (e.is_directory()) cell_dirs.push_back(e.path());
            std::sort(cell_dirs.begin(), cell_dirs.end());
            for (const auto& cell_dir : cell_dirs) {
                std::vector<fs::path> seed_dirs;
                for (const auto& e : fs::directory_iterator(cell_dir))
                    if (e.is_directory() && fs::exists(e.path() / "records.ndjson")) seed_dirs.push_back(e.path());
                std::sort(seed_dirs.begin(), seed_dirs.end());
                for (const auto& sd : seed_dirs) {
                    for (const auto& r : read_records(sd / "records.ndjson")) {
                        auto& pt = pooled[agent.name][cell_dir.filename().string()][r.epoch];
                        pt.queries = r.queries;
                        pt.win_rates.push_back(r.win_rate);
                    }
                }
            }
        }
    }
    if (pooled.empty()) throw PreconditionError("no records found in the given run directories");

    if (mode == ReportMode::curves) {
        std::string out = "agent,cell,epoch,queries,n,mean_win_rate,se_win_rate\n";
        for (const auto& agent : ref_cfg->agents) {
            auto it = pooled.find(agent.name);
            if (it == pooled.end()) continue;
            for (const auto& [cell, series] : it->second)
                for (const auto& [epoch, pt] : series)
                    out += agent.name + "," + cell + "," + std::to_string(epoch) + "," + std::to_string(pt.queries) +
                           "," + std::to_string(pt.win_rates.size()) + "," + format_double(mean_of(pt.win_rates)) +
                           "," + format_double(standard_error(pt.win_rates)) + "\n";
        }
        return out;
    }

    // Best cell per agent by final mean win rate, as a mean curve.
    struct Best {
        std::string cell;
        std::vector<CurvePoint> curve;
    };
    std::map<std::string, Best> best;
    for (const auto& [agent, cells] : pooled) {
        double best_final = -1.0;
        for (const auto& [cell, series] : cells) {
            if (series.empty()) continue;
            const double final_wr = mean_of(series.rbegin()->second.win_rates);
            if (final_wr > best_final) {
                best_final = final_wr;
                Best b{cell, {}};
                for (const auto& [epoch, pt] : series)
                    b.curve.push_back({static_cast<double>(pt.queries), mean_of(pt.win_rates)});
                best[agent] = std::move(b);
            }
        }
    }
    const AgentSpec* ref_agent = nullptr;
    for (const auto& a : ref_cfg->agents)
        if (a.explorer == Explorer::double_ts && best.count(a.name)) {
            ref_agent = &a;
            break;
        }
    if (!ref_agent) throw ConfigError("match_table needs a double_ts agent with records");
    const auto& ref_curve = best[ref_agent->name].curve;

    std::string out = "reference,agent,cell,ref_queries,ref_win_rate,alt_queries,ratio\n";
    for (const auto& a : ref_cfg->agents) {
        auto it = best.find(a.name);
        if (it == best.end()) continue;
        for (const auto& m : queries_to_match(ref_curve, it->second.curve)) {
            out += ref_agent->name + "," + a.name + "," + it->second.cell + "," + format_double(m.ref_queries) + "," +
                   format_double(m.ref_win_rate) + ",";
            if (m.alt_queries)
                out += format_double(*m.alt_queries) + "," + format_double(*m.alt_queries / m.ref_queries);
            else
                out += "unreached,unreached";
            out += "\n";
        }
    }
    return out;
}

}  // namespace prefex
