#include "prefex/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "prefex/rng.hpp"

namespace prefex {

namespace {

std::string located(std::size_t line, const std::string& what, const std::string& source) {
    if (!source.empty()) return source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what;
    return line > 0 ? "line " + std::to_string(line) + ": " + what : what;
}

}  // namespace

ConfigParseError::ConfigParseError(std::size_t line, const std::string& what, const std::string& source)
    : ConfigError(located(line, what, source)), line_(line), detail_(what) {}

bool SweepGrid::empty() const {
    return learning_rate.empty() && lambda_prime.empty() && sgd_steps.empty() && output_scale.empty() &&
           tau.empty() && ensemble_size.empty();
}

std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) throw NumericalError("cannot format double");
    return std::string(buf, end);
}

namespace {

struct Entry {
    std::string key;
    std::string value;
    std::size_t line;
};

struct Section {
    std::string name;
    std::size_t line;
    std::vector<Entry> entries;
};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<Section> split_sections(std::string_view text) {
    std::vector<Section> sections;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++lineno;
        // Comments run from '#' or ';' to end of line.
        const auto hash = line.find_first_of("#;");
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) {
            if (nl == text.size()) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigParseError(lineno, "unterminated section header");
            std::string name(trim(line.substr(1, line.size() - 2)));
            if (name.empty()) throw ConfigParseError(lineno, "empty section name");
            if (!seen.insert(name).second) throw ConfigParseError(lineno, "duplicate section [" + name + "]");
            sections.push_back({name, lineno, {}});
        } else {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ConfigParseError(lineno, "expected 'key = value'");
            if (sections.empty()) throw ConfigParseError(lineno, "entry outside any section");
            std::string key(trim(line.substr(0, eq)));
            if (key.empty()) throw ConfigParseError(lineno, "missing key");
            for (const auto& e : sections.back().entries)
                if (e.key == key) throw ConfigParseError(lineno, "duplicate key '" + key + "'");
            sections.back().entries.push_back({key, std::string(trim(line.substr(eq + 1))), lineno});
        }
        if (nl == text.size()) break;
    }
    return sections;
}

std::uint64_t to_u64(const Entry& e) {
    std::uint64_t v = 0;
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end || e.value.empty())
        throw ConfigParseError(e.line, "'" + e.key + "' expects a nonnegative integer, got '" + e.value + "'");
    return v;
}

double parse_double_token(std::string_view tok, const Entry& e) {
    double v = 0;
    const char* b = tok.data();
    const char* end = b + tok.size();
    if (!tok.empty() && *b == '+') ++b;
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end || tok.empty() || !std::isfinite(v))
        throw ConfigParseError(e.line, "'" + e.key + "' expects a finite number, got '" + std::string(tok) + "'");
    return v;
}

double to_double(const Entry& e) { return parse_double_token(e.value, e); }

bool to_bool(const Entry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw ConfigParseError(e.line, "'" + e.key + "' expects true or false");
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = s.find(',', pos);
        out.push_back(trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::vector<double> to_double_list(const Entry& e) {
    std::vector<double> out;
    for (auto tok : split_list(e.value)) out.push_back(parse_double_token(tok, e));
    return out;
}

std::vector<std::size_t> to_size_list(const Entry& e) {
    std::vector<std::size_t> out;
    for (auto tok : split_list(e.value)) {
        Entry sub{e.key, std::string(tok), e.line};
        out.push_back(static_cast<std::size_t>(to_u64(sub)));
    }
    return out;
}

template <class F>
auto wrap(const Entry& e, F&& f) {
    try {
        return f(e.value);
    } catch (const ConfigParseError&) {
        throw;
    } catch (const std::exception& ex) {
        throw ConfigParseError(e.line, "'" + e.key + "': " + ex.what());
    }
}

using Handler = std::function<void(const Entry&)>;

void apply_entries(const Section& sec, const std::map<std::string, Handler>& handlers) {
    for (const auto& e : sec.entries) {
        auto it = handlers.find(e.key);
        if (it == handlers.end()) throw ConfigParseError(e.line, "unknown key '" + e.key + "' in [" + sec.name + "]");
        it->second(e);
    }
}

EnnRegularizer parse_regularizer(std::string_view s) {
    if (s == "unsquared_l2") return EnnRegularizer::unsquared_l2;
    if (s == "squared_l2") return EnnRegularizer::squared_l2;
    throw ConfigError("unknown regularizer '" + std::string(s) + "'");
}

std::string_view to_string(EnnRegularizer r) {
    return r == EnnRegularizer::unsquared_l2 ? "unsquared_l2" : "squared_l2";
}

Exec parse_exec(std::string_view s) {
    if (s == "serial") return Exec::serial;
    if (s == "parallel") return Exec::parallel;
    throw ConfigError("unknown exec mode '" + std::string(s) + "'");
}

std::map<std::string, Handler> agent_handlers(AgentSpec& a) {
    return {
        {"kind", [&](const Entry& e) { a.kind = wrap(e, parse_model_kind); }},
        {"explorer", [&](const Entry& e) { a.explorer = wrap(e, parse_explorer); }},
        {"tau", [&](const Entry& e) { a.tau = to_double(e); }},
        {"infomax_indices", [&](const Entry& e) { a.infomax_indices = to_u64(e); }},
        {"dts_attempts", [&](const Entry& e) { a.dts_attempts = to_u64(e); }},
        {"pref_mode", [&](const Entry& e) { a.pref_mode = wrap(e, parse_pref_mode); }},
        {"hidden", [&](const Entry& e) { a.hidden = to_size_list(e); }},
        {"ensemble_size", [&](const Entry& e) { a.ensemble_size = to_u64(e); }},
        {"output_scale", [&](const Entry& e) { a.output_scale = to_double(e); }},
        {"learning_rate", [&](const Entry& e) { a.training.learning_rate = to_double(e); }},
        {"lambda_prime", [&](const Entry& e) { a.training.lambda_prime = to_double(e); }},
        {"sgd_steps", [&](const Entry& e) { a.training.sgd_steps_per_epoch = to_u64(e); }},
        {"minibatch_size", [&](const Entry& e) { a.training.minibatch_size = to_u64(e); }},
        {"train_seed", [&](const Entry& e) { a.training.rng_seed = to_u64(e); }},
        {"regularizer", [&](const Entry& e) { a.training.enn_regularizer = wrap(e, parse_regularizer); }},
    };
}

bool valid_agent_name(std::string_view n) {
    if (n.empty() || n == "." || n == "..") return false;
    for (char c : n)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    return true;
}

// Re-throws a validation failure against the given line.
template <class F>
void check_at(std::size_t line, F&& f) {
    try {
        f();
    } catch (const ConfigParseError&) {
        throw;
    } catch (const ConfigError& ex) {
        throw ConfigParseError(line, ex.what());
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    if (name.empty() || name.find_first_of("#;\n") != std::string::npos)
        throw ConfigError("experiment name must be nonempty and free of '#', ';' and newlines");
    if (seeds < 1) throw ConfigError("seeds must be at least 1");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    run.validate();
    world.validate();
    if (agents.empty()) throw ConfigError("at least one [agent.NAME] section is required");
    std::set<std::string> names;
    for (const auto& a : agents) {
        if (!valid_agent_name(a.name)) throw ConfigError("invalid agent name '" + a.name + "'");
        if (!names.insert(a.name).second) throw ConfigError("duplicate agent '" + a.name + "'");
        a.validate();
    }
    for (double v : sweep.learning_rate)
        if (!(v > 0)) throw ConfigError("sweep learning_rate values must be positive");
    for (double v : sweep.lambda_prime)
        if (!(v >= 0)) throw ConfigError("sweep lambda_prime values must be nonnegative");
    for (auto v : sweep.sgd_steps)
        if (v < 1) throw ConfigError("sweep sgd_steps values must be at least 1");
    for (double v : sweep.output_scale)
        if (!(v >= 0)) throw ConfigError("sweep output_scale values must be nonnegative");
    for (double v : sweep.tau)
        if (!(v > 0)) throw ConfigError("sweep tau values must be positive");
    for (auto v : sweep.ensemble_size)
        if (v < 1) throw ConfigError("sweep ensemble_size values must be at least 1");
}

ExperimentConfig parse_config(std::string_view text) {
    const auto sections = split_sections(text);
    ExperimentConfig cfg;

    const Section* defaults = nullptr;
    std::vector<const Section*> agent_sections;
    std::size_t experiment_line = 0;
    std::size_t world_line = 0;

    for (const auto& sec : sections) {
        if (sec.name == "experiment") {
            experiment_line = sec.line;
            auto& r = cfg.run;
            apply_entries(sec, {
                {"name", [&](const Entry& e) { cfg.name = e.value; }},
                {"master_seed", [&](const Entry& e) { cfg.master_seed = to_u64(e); }},
                {"seeds", [&](const Entry& e) { cfg.seeds = to_u64(e); }},
                {"jobs", [&](const Entry& e) { cfg.jobs = to_u64(e); }},
                {"batch_size", [&](const Entry& e) { r.batch_size = to_u64(e); }},
                {"epochs", [&](const Entry& e) { r.epochs = to_u64(e); }},
                {"buffer_capacity", [&](const Entry& e) { r.buffer_capacity = to_u64(e); }},
                {"assess_every", [&](const Entry& e) { r.assess_every = to_u64(e); }},
                {"eval_prompts", [&](const Entry& e) { r.eval_prompts = to_u64(e); }},
                {"metrics_every", [&](const Entry& e) { r.metrics_every = to_u64(e); }},
                {"metric_queries", [&](const Entry& e) { r.metric_queries = to_u64(e); }},
                {"train", [&](const Entry& e) { r.train = to_bool(e); }},
                {"exec", [&](const Entry& e) { r.exec = wrap(e, parse_exec); }},
            });
        } else if (sec.name == "world") {
            world_line = sec.line;
            auto& w = cfg.world;
            apply_entries(sec, {
                {"dim", [&](const Entry& e) { w.dim = to_u64(e); }},
                {"candidates", [&](const Entry& e) { w.candidates = to_u64(e); }},
                {"spread", [&](const Entry& e) { w.spread = to_double(e); }},
                {"teacher_hidden", [&](const Entry& e) { w.teacher_hidden = to_size_list(e); }},
                {"teacher_gain", [&](const Entry& e) { w.teacher_gain = to_double(e); }},
                {"teacher_output_scale", [&](const Entry& e) { w.teacher_output_scale = to_double(e); }},
                {"teacher_seed", [&](const Entry& e) { w.teacher_seed = to_u64(e); }},
                {"train_seed", [&](const Entry& e) { w.train_seed = to_u64(e); }},
                {"eval_seed", [&](const Entry& e) { w.eval_seed = to_u64(e); }},
            });
        } else if (sec.name == "dyadic") {
            auto& d = cfg.run.dyadic;
            apply_entries(sec, {
                {"tau_len", [&](const Entry& e) { d.tau_len = to_u64(e); }},
                {"anchor_pairs", [&](const Entry& e) { d.n_anchor_pairs = to_u64(e); }},
                {"label_draws", [&](const Entry& e) { d.n_label_draws = to_u64(e); }},
                {"eval_index_count", [&](const Entry& e) { d.eval_index_count = to_u64(e); }},
                {"rng_seed", [&](const Entry& e) { d.rng_seed = to_u64(e); }},
                {"label_mode", [&](const Entry& e) { d.label_mode = wrap(e, parse_label_mode); }},
            });
        } else if (sec.name == "sweep") {
            auto& s = cfg.sweep;
            // tau = 0 is read as the greedy limit.
            apply_entries(sec, {
                {"learning_rate", [&](const Entry& e) { s.learning_rate = to_double_list(e); }},
                {"lambda_prime", [&](const Entry& e) { s.lambda_prime = to_double_list(e); }},
                {"sgd_steps", [&](const Entry& e) { s.sgd_steps = to_size_list(e); }},
                {"output_scale", [&](const Entry& e) { s.output_scale = to_double_list(e); }},
                {"tau", [&](const Entry& e) {
                     s.tau = to_double_list(e);
                     for (double& t : s.tau)
                         if (t == 0.0) t = 1e-8;
                 }},
                {"ensemble_size", [&](const Entry& e) { s.ensemble_size = to_size_list(e); }},
            });
        } else if (sec.name == "defaults") {
            defaults = &sec;
        } else if (sec.name.rfind("agent.", 0) == 0) {
            agent_sections.push_back(&sec);
        } else {
            throw ConfigParseError(sec.line, "unknown section [" + sec.name + "]");
        }
    }

    AgentSpec base;
    if (defaults) apply_entries(*defaults, agent_handlers(base));
    for (const Section* sec : agent_sections) {
        AgentSpec a = base;
        a.name = sec->name.substr(6);
        if (!valid_agent_name(a.name))
            throw ConfigParseError(sec->line, "agent names may only use letters, digits, '_', '-' and '.'");
        apply_entries(*sec, agent_handlers(a));
        check_at(sec->line, [&] { a.validate(); });
        cfg.agents.push_back(std::move(a));
    }

    check_at(world_line, [&] { cfg.world.validate(); });
    check_at(experiment_line, [&] { cfg.validate(); });
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigParseError& e) {
        throw ConfigParseError(e.line(), e.detail(), path);
    }
}

namespace {

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt(v[i]);
    }
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    return join(v, [](std::size_t x) { return std::to_string(x); });
}

std::string join_doubles(const std::vector<double>& v) { return join(v, format_double); }

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream o;
    const auto& r = cfg.run;
    o << "[experiment]\n"
      << "name = " << cfg.name << "\n"
      << "master_seed = " << cfg.master_seed << "\n"
      << "seeds = " << cfg.seeds << "\n"
      << "jobs = " << cfg.jobs << "\n"
      << "batch_size = " << r.batch_size << "\n"
      << "epochs = " << r.epochs << "\n"
      << "buffer_capacity = " << r.buffer_capacity << "\n"
      << "assess_every = " << r.assess_every << "\n"
      << "eval_prompts = " << r.eval_prompts << "\n"
      << "metrics_every = " << r.metrics_every << "\n"
      << "metric_queries = " << r.metric_queries << "\n"
      << "train = " << (r.train ? "true" : "false") << "\n"
      << "exec = " << (r.exec == Exec::serial ? "serial" : "parallel") << "\n";

    const auto& w = cfg.world;
    o << "\n[world]\n"
      << "dim = " << w.dim << "\n"
      << "candidates = " << w.candidates << "\n"
      << "spread = " << format_double(w.spread) << "\n"
      << "teacher_hidden = " << join_sizes(w.teacher_hidden) << "\n"
      << "teacher_gain = " << format_double(w.teacher_gain) << "\n"
      << "teacher_output_scale = " << format_double(w.teacher_output_scale) << "\n"
      << "teacher_seed = " << w.teacher_seed << "\n"
      << "train_seed = " << w.train_seed << "\n"
      << "eval_seed = " << w.eval_seed << "\n";

    const auto& d = r.dyadic;
    o << "\n[dyadic]\n"
      << "tau_len = " << d.tau_len << "\n"
      << "anchor_pairs = " << d.n_anchor_pairs << "\n"
      << "label_draws = " << d.n_label_draws << "\n"
      << "eval_index_count = " << d.eval_index_count << "\n"
      << "rng_seed = " << d.rng_seed << "\n"
      << "label_mode = " << to_string(d.label_mode) << "\n";

    const auto& s = cfg.sweep;
    if (!s.empty()) {
        o << "\n[sweep]\n";
        if (!s.learning_rate.empty()) o << "learning_rate = " << join_doubles(s.learning_rate) << "\n";
        if (!s.lambda_prime.empty()) o << "lambda_prime = " << join_doubles(s.lambda_prime) << "\n";
        if (!s.sgd_steps.empty()) o << "sgd_steps = " << join_sizes(s.sgd_steps) << "\n";
        if (!s.output_scale.empty()) o << "output_scale = " << join_doubles(s.output_scale) << "\n";
        if (!s.tau.empty()) o << "tau = " << join_doubles(s.tau) << "\n";
        if (!s.ensemble_size.empty()) o << "ensemble_size = " << join_sizes(s.ensemble_size) << "\n";
    }

    for (const auto& a : cfg.agents) {
        const auto& t = a.training;
        o << "\n[agent." << a.name << "]\n"
          << "kind = " << to_string(a.kind) << "\n"
          << "explorer = " << to_string(a.explorer) << "\n"
          << "tau = " << format_double(a.tau) << "\n"
          << "infomax_indices = " << a.infomax_indices << "\n"
          << "dts_attempts = " << a.dts_attempts << "\n"
          << "pref_mode = " << to_string(a.pref_mode) << "\n"
          << "hidden = " << join_sizes(a.hidden) << "\n"
          << "ensemble_size = " << a.ensemble_size << "\n"
          << "output_scale = " << format_double(a.output_scale) << "\n"
          << "learning_rate = " << format_double(t.learning_rate) << "\n"
          << "lambda_prime = " << format_double(t.lambda_prime) << "\n"
          << "sgd_steps = " << t.sgd_steps_per_epoch << "\n"
          << "minibatch_size = " << t.minibatch_size << "\n"
          << "train_seed = " << t.rng_seed << "\n"
          << "regularizer = " << to_string(t.enn_regularizer) << "\n";
    }
    return o.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::uint64_t h = stream_tag(serialize_config(cfg));
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 0; i < 16; ++i) buf[i] = digits[(h >> (60 - 4 * i)) & 0xF];
    buf[16] = '\0';
    return buf;
}

}  // namespace prefex
