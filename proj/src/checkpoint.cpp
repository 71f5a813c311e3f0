#include "prefex/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "prefex/errors.hpp"

namespace prefex {

using nlohmann::json;

namespace {

json params_json(const MlpParams& p) {
    return json(std::vector<double>(p.values().begin(), p.values().end()));
}

MlpParams params_from(const std::vector<std::size_t>& sizes, const json& j) {
    MlpParams p(sizes);
    const auto values = j.get<std::vector<double>>();
    if (values.size() != p.size()) throw ShapeError("checkpoint parameter count does not match layer sizes");
    std::copy(values.begin(), values.end(), p.values().begin());
    return p;
}

json adam_json(const AdamState& a) {
    return {{"step", a.step},
            {"learning_rate", a.config.learning_rate},
            {"beta1", a.config.beta1},
            {"beta2", a.config.beta2},
            {"epsilon", a.config.epsilon},
            {"m", a.first_moment},
            {"v", a.second_moment}};
}

AdamState adam_from(const json& j, std::size_t n) {
    AdamState a;
    a.step = j.at("step").get<std::uint64_t>();
    a.config.learning_rate = j.at("learning_rate").get<double>();
    a.config.beta1 = j.at("beta1").get<double>();
    a.config.beta2 = j.at("beta2").get<double>();
    a.config.epsilon = j.at("epsilon").get<double>();
    a.first_moment = j.at("m").get<std::vector<double>>();
    a.second_moment = j.at("v").get<std::vector<double>>();
    if (a.first_moment.size() != n || a.second_moment.size() != n)
        throw ShapeError("checkpoint Adam moments do not match parameter count");
    return a;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

template <class F>
auto parse_guard(F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace

std::string checkpoint_to_json(const AgentState& state) {
    json j;
    json particles = json::array();
    json anchors = json::array();
    std::vector<std::size_t> sizes;
    if (const auto* p = std::get_if<PointRewardModel>(&state.model)) {
        j["kind"] = "point";
        sizes = p->params.layer_sizes();
        particles.push_back(params_json(p->params));
    } else {
        const auto& m = std::get<EnnRewardModel>(state.model);
        j["kind"] = "enn";
        sizes = m.particle(0).layer_sizes();
        for (const auto& q : m.particles()) particles.push_back(params_json(q));
        for (const auto& q : m.initial_particles()) anchors.push_back(params_json(q));
    }
    j["ensemble_size"] = particles.size();
    j["layer_sizes"] = sizes;
    j["particles"] = std::move(particles);
    j["initial_particles"] = std::move(anchors);
    json adam = json::array();
    for (const auto& a : state.adam) adam.push_back(adam_json(a));
    j["adam"] = std::move(adam);
    j["buffer_capacity"] = state.buffer.capacity();
    j["total_feedback"] = state.buffer.total_inserted();
    return j.dump(1) + "\n";
}

AgentState checkpoint_from_json(std::string_view text) {
    return parse_guard([&] {
        const json j = json::parse(text);
        const auto kind = j.at("kind").get<std::string>();
        const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        validate_layer_sizes(sizes);
        const auto& parts = j.at("particles");
        if (!parts.is_array() || parts.empty()) throw ConfigError("checkpoint has no particles");
        if (parts.size() != j.at("ensemble_size").get<std::size_t>())
            throw ShapeError("checkpoint ensemble_size does not match particle count");

        RewardModel model;
        if (kind == "point") {
            if (parts.size() != 1) throw ShapeError("point checkpoint must hold exactly one parameter set");
            model = PointRewardModel{params_from(sizes, parts[0])};
        } else if (kind == "enn") {
            std::vector<MlpParams> ps;
            std::vector<MlpParams> init;
            for (const auto& q : parts) ps.push_back(params_from(sizes, q));
            for (const auto& q : j.at("initial_particles")) init.push_back(params_from(sizes, q));
            model = EnnRewardModel(std::move(ps), std::move(init));
        } else {
            throw ConfigError("unknown checkpoint kind '" + kind + "'");
        }

        const std::size_t n = MlpParams(sizes).size();
        std::vector<AdamState> adam;
        for (const auto& a : j.at("adam")) adam.push_back(adam_from(a, n));
        if (adam.size() != parts.size()) throw ShapeError("checkpoint needs one Adam state per particle");

        ReplayBuffer buffer(j.at("buffer_capacity").get<std::size_t>());
        buffer.set_total_inserted(j.at("total_feedback").get<std::uint64_t>());
        return AgentState{std::move(model), std::move(adam), std::move(buffer)};
    });
}

void save_checkpoint(const AgentState& state, const std::string& path) { write_file(path, checkpoint_to_json(state)); }

AgentState load_checkpoint(const std::string& path) { return checkpoint_from_json(read_file(path)); }

std::string teacher_to_json(const World& world) {
    json j;
    j["layer_sizes"] = world.teacher().layer_sizes();
    j["values"] = params_json(world.teacher());
    return j.dump(1) + "\n";
}

World world_from_teacher_json(const WorldConfig& cfg, std::string_view text) {
    return parse_guard([&] {
        const json j = json::parse(text);
        const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        if (sizes != cfg.teacher_layer_sizes()) throw ConfigError("teacher shape does not match world config");
        return World(cfg, params_from(sizes, j.at("values")));
    });
}

void save_teacher(const World& world, const std::string& path) { write_file(path, teacher_to_json(world)); }

World load_world(const WorldConfig& cfg, const std::string& teacher_path) {
    return world_from_teacher_json(cfg, read_file(teacher_path));
}

}  // namespace prefex
